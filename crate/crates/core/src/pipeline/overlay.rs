//! Heatmap overlays of gaze and model attention on the source images.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::gaze::{GazeArtifact, SaliencyGrid};
use crate::imaging::{resize_bilinear, Image};
use crate::model::SiameseModel;
use crate::vit::attention::extract;
use crate::vit::MapSource;

use super::dataset::{ComparisonRecord, Dataset};

/// Heat layer opacity.
pub const ALPHA: f64 = 0.5;

const STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
];

/// Blue → cyan → green → yellow → red over `[0, 1]`.
pub fn colormap(v: f64) -> [f64; 3] {
    let t = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    std::array::from_fn(|c| STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c]))
}

/// Blends `heat` (row-major, `image.width×image.height`) scaled by its
/// maximum over the image.
pub fn blend(image: &Image, heat: &[f64]) -> image::RgbImage {
    let max = heat.iter().cloned().fold(0.0, f64::max);
    let mut out = image::RgbImage::new(image.width as u32, image.height as u32);
    for y in 0..image.height {
        for x in 0..image.width {
            let h = heat[y * image.width + x];
            let color = colormap(if max > 0.0 { h / max } else { 0.0 });
            let px = std::array::from_fn(|c| {
                let base = image.get(y, x, c.min(image.channels - 1)).clamp(0.0, 1.0) * 255.0;
                ((1.0 - ALPHA) * base + ALPHA * color[c]).round() as u8
            });
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out
}

/// A patch map upsampled to `width×height`.
pub fn upsample(map: &SaliencyGrid, width: usize, height: usize) -> Vec<f64> {
    resize_bilinear(&map.values, map.width, map.height, width, height)
}

#[derive(Clone, Debug, Default)]
pub struct OverlayExport {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<(String, String)>,
}

#[allow(clippy::too_many_arguments)]
fn export_side(
    model: &SiameseModel,
    dataset: &Dataset,
    image_path: &str,
    gaze_file: Option<&str>,
    stem: &str,
    source: MapSource,
    out_dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let cfg = model.config();
    let original = Image::load(&dataset.resolve(image_path))?;
    let (w, h) = (original.width, original.height);
    let input = original.resize(cfg.image_height, cfg.image_width);
    let attn = extract(&model.attention(&input)?, source)?;
    let grid = SaliencyGrid::probability(cfg.grid_cols(), cfg.grid_rows(), attn.weights)?;

    let mut files = vec![(format!("{stem}_image.png"), original.to_rgb8())];
    if let Some(g) = gaze_file {
        let saliency = GazeArtifact::load(&dataset.resolve(g))?.saliency()?;
        files.push((format!("{stem}_gaze.png"), blend(&original, &upsample(&saliency, w, h))));
    }
    files.push((format!("{stem}_attn_{}.png", source.as_str()), blend(&original, &upsample(&grid, w, h))));
    for (name, img) in files {
        let path = out_dir.join(name);
        img.save(&path)?;
        written.push(path);
    }
    Ok(())
}

/// Writes, per image of each pair, the original, a gaze overlay when gaze
/// exists, and an attention overlay at the source image resolution.
/// Unknown or unreadable pairs are skipped and logged.
pub fn export_overlays(
    model: &SiameseModel,
    dataset: &Dataset,
    pair_ids: &[String],
    source: MapSource,
    out_dir: &Path,
) -> Result<OverlayExport> {
    std::fs::create_dir_all(out_dir)?;
    let mut out = OverlayExport::default();
    for id in pair_ids {
        let Some(record) = dataset.records.iter().find(|r| &r.pair_id == id) else {
            log::warn!("overlay export: unknown pair {id}");
            out.skipped.push((id.clone(), "unknown pair".into()));
            continue;
        };
        let ComparisonRecord { left_image, right_image, has_gaze, .. } = record;
        let gaze = |f: &Option<String>| if *has_gaze { f.clone() } else { None };
        let sides = [
            ("left", left_image, gaze(&record.left_gaze_file)),
            ("right", right_image, gaze(&record.right_gaze_file)),
        ];
        let mut written = Vec::new();
        let result = sides.iter().try_for_each(|(side, image, g)| {
            export_side(model, dataset, image, g.as_deref(), &format!("{id}_{side}"), source, out_dir, &mut written)
        });
        match result {
            Ok(()) => out.written.extend(written),
            Err(e) => {
                log::warn!("overlay export: skipping {id}: {e}");
                out.skipped.push((id.clone(), e.to_string()));
            }
        }
    }
    Ok(out)
}
