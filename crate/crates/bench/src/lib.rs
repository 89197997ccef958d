//! Seeded fixtures shared by the benchmarks.

use gazerank_core::{Image, ModelConfig, SaliencyGrid, SiameseModel, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Image {
    let n = cfg.image_height * cfg.image_width * cfg.channels;
    Image::new(cfg.image_height, cfg.image_width, cfg.channels, (0..n).map(|_| rng.gen()).collect()).unwrap()
}

/// Strictly positive probability grid.
pub fn random_grid(rng: &mut ChaCha8Rng, width: usize, height: usize) -> SaliencyGrid {
    let v: Vec<f64> = (0..width * height).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = v.iter().sum();
    SaliencyGrid::probability(width, height, v.into_iter().map(|x| x / total).collect()).unwrap()
}

/// 224 px at P16 (196 patch tokens) with a narrow two-layer encoder.
pub fn bench_config() -> ModelConfig {
    ModelConfig {
        image_height: 224,
        image_width: 224,
        patch_size: 16,
        depth: 2,
        heads: 4,
        embed_dim: 64,
        mlp_ratio: 2,
        ..ModelConfig::default()
    }
}

pub fn model(cfg: &ModelConfig) -> SiameseModel {
    SiameseModel::new(cfg, 0).unwrap()
}
