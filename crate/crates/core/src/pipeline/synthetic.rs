//! Planted-target pairwise task with planted gaze.
//!
//! Every image has noisy mid-grey background and one planted patch. In one
//! image of each pair the patch is bright (the target); in the other it is
//! dark. The label points at the image holding the target, and each image's
//! fixations sit on its planted patch.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaze::{FixationEvent, GazeArtifact, Weighting};
use crate::imaging::Image;
use crate::objectives::Label;
use crate::vit::ModelConfig;

use super::dataset::{write_manifest, ComparisonRecord};
use super::prepare::{PairGaze, PreparedData, PreparedPair, SideGaze};

const TARGET: u8 = 242;
const DISTRACTOR: u8 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTask {
    pub pairs: usize,
    pub image_size: usize,
    pub patch_size: usize,
    /// Fraction of pairs carrying gaze.
    pub gaze_fraction: f64,
    pub fixations_per_image: usize,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            pairs: 32,
            image_size: 32,
            patch_size: 8,
            gaze_fraction: 1.0,
            fixations_per_image: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub id: String,
    pub image: Image,
    /// Row-major patch index of the planted patch.
    pub planted: usize,
    pub has_target: bool,
    pub gaze: GazeArtifact,
}

#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub record: ComparisonRecord,
    pub left: SyntheticImage,
    pub right: SyntheticImage,
}

impl SyntheticTask {
    /// 2-layer, 32-wide, 2-head encoder sized for the task.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_height: self.image_size,
            image_width: self.image_size,
            channels: 3,
            patch_size: self.patch_size,
            depth: 2,
            heads: 2,
            embed_dim: 32,
            mlp_ratio: 2,
            ..ModelConfig::default()
        }
    }

    fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    fn image(&self, rng: &mut ChaCha8Rng, id: String, has_target: bool) -> SyntheticImage {
        let (s, p, g) = (self.image_size, self.patch_size, self.grid());
        let planted = rng.gen_range(0..g * g);
        let (pr, pc) = (planted / g, planted % g);
        let fill = if has_target { TARGET } else { DISTRACTOR };
        let mut image = Image::zeros(s, s, 3);
        for y in 0..s {
            for x in 0..s {
                let inside = y / p == pr && x / p == pc;
                for c in 0..3 {
                    let v = if inside { fill } else { rng.gen_range(51u8..=128) };
                    image.set(y, x, c, f64::from(v) / 255.0);
                }
            }
        }
        let centre = |i: usize| (i * p) as f64 + p as f64 / 2.0;
        let jitter = p as f64 / 4.0;
        let mut onset = 0.0;
        let fixations = (0..self.fixations_per_image)
            .map(|_| {
                let duration_ms = f64::from(rng.gen_range(150u32..400));
                let f = FixationEvent {
                    x: centre(pc) + rng.gen_range(-jitter..jitter),
                    y: centre(pr) + rng.gen_range(-jitter..jitter),
                    duration_ms,
                    onset_ms: onset,
                };
                onset += duration_ms + 40.0;
                f
            })
            .collect();
        SyntheticImage {
            id,
            image,
            planted,
            has_target,
            gaze: GazeArtifact {
                width: s,
                height: s,
                sigma_px: p as f64 / 2.0,
                weighting: Weighting::Duration,
                proxy: false,
                fixations,
            },
        }
    }

    pub fn generate(&self) -> Vec<SyntheticPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.pairs)
            .map(|i| {
                let target_left = rng.gen_bool(0.5);
                let has_gaze = rng.gen_bool(self.gaze_fraction.clamp(0.0, 1.0));
                let left = self.image(&mut rng, format!("img{:04}a", i), target_left);
                let right = self.image(&mut rng, format!("img{:04}b", i), !target_left);
                let pair_id = format!("pair{i:04}");
                let gaze_file = |side: &str| has_gaze.then(|| format!("gaze/{pair_id}_{side}.json"));
                SyntheticPair {
                    record: ComparisonRecord {
                        pair_id: pair_id.clone(),
                        left_image: format!("images/{}.png", left.id),
                        right_image: format!("images/{}.png", right.id),
                        label: if target_left { Label::LeftSafer } else { Label::RightSafer },
                        respondent_id: "synthetic".into(),
                        has_gaze,
                        left_gaze_file: gaze_file("left"),
                        right_gaze_file: gaze_file("right"),
                    },
                    left,
                    right,
                }
            })
            .collect()
    }

    /// The generated pairs in memory, without a disk round trip.
    pub fn prepared(&self, pairs: &[SyntheticPair]) -> Result<PreparedData> {
        let config = self.model_config();
        let mut data = PreparedData::default();
        for p in pairs {
            let left = data.add_image(&p.left.id, p.left.image.clone());
            let right = data.add_image(&p.right.id, p.right.image.clone());
            let gaze = if p.record.has_gaze {
                Some(PairGaze {
                    left: SideGaze::from_artifact(&p.left.gaze, &config)?,
                    right: SideGaze::from_artifact(&p.right.gaze, &config)?,
                })
            } else {
                None
            };
            data.pairs.push(PreparedPair {
                pair_id: p.record.pair_id.clone(),
                left,
                right,
                label: p.record.label,
                gaze,
            });
        }
        Ok(data)
    }

    /// Writes PNG images, gaze artifacts and `manifest.csv` under `dir`;
    /// returns the manifest path.
    pub fn write(&self, pairs: &[SyntheticPair], dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir.join("images"))?;
        fs::create_dir_all(dir.join("gaze"))?;
        for p in pairs {
            for (img, path, gaze) in [
                (&p.left, &p.record.left_image, &p.record.left_gaze_file),
                (&p.right, &p.record.right_image, &p.record.right_gaze_file),
            ] {
                img.image.to_rgb8().save(dir.join(path))?;
                if let Some(g) = gaze {
                    img.gaze.save(&dir.join(g))?;
                }
            }
        }
        let manifest = dir.join("manifest.csv");
        let records: Vec<_> = pairs.iter().map(|p| p.record.clone()).collect();
        write_manifest(fs::File::create(&manifest)?, &records)?;
        Ok(manifest)
    }
}
