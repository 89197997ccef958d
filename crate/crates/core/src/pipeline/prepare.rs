//! In-memory training data: decoded images and per-side gaze targets.

use std::collections::HashMap;

use crate::error::{invalid, Result};
use crate::gaze::{GazeArtifact, SaliencyGrid};
use crate::imaging::Image;
use crate::metrics::FixationPointSet;
use crate::objectives::Label;
use crate::vit::ModelConfig;

use super::dataset::{ComparisonRecord, Dataset};

/// Floor added to gaze patch distributions before normalizing.
pub const GAZE_EPS: f64 = 1e-8;

/// Gaze targets for one image, at model resolution.
#[derive(Clone, Debug)]
pub struct SideGaze {
    /// Patch distribution `Ĝ`, `cols×rows`.
    pub patch: SaliencyGrid,
    /// Smoothed saliency resized to the model input, `W×H`.
    pub pixel: SaliencyGrid,
    /// Fixated patches.
    pub patch_points: FixationPointSet,
    /// Fixated pixels of the model input.
    pub pixel_points: FixationPointSet,
    pub proxy: bool,
}

impl SideGaze {
    pub fn from_artifact(artifact: &GazeArtifact, config: &ModelConfig) -> Result<Self> {
        let (w, h, p) = (config.image_width, config.image_height, config.patch_size);
        let patch = artifact.patch_distribution(w, h, p, GAZE_EPS)?;
        let mut pixel = artifact.saliency()?.resized(w, h);
        pixel.normalize();
        Ok(Self {
            patch,
            pixel,
            patch_points: artifact.fixation_points(config.grid_cols(), config.grid_rows()),
            pixel_points: artifact.fixation_points(w, h),
            proxy: artifact.proxy,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PairGaze {
    pub left: SideGaze,
    pub right: SideGaze,
}

#[derive(Clone, Debug)]
pub struct PreparedPair {
    pub pair_id: String,
    /// Indices into [`PreparedData::images`].
    pub left: usize,
    pub right: usize,
    pub label: Label,
    pub gaze: Option<PairGaze>,
}

/// Decoded pairs ready for training and evaluation. Images shared between
/// pairs are decoded once.
#[derive(Clone, Debug, Default)]
pub struct PreparedData {
    pub images: Vec<Image>,
    pub image_ids: Vec<String>,
    pub pairs: Vec<PreparedPair>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrepareOptions {
    /// Keep cursor-trace gaze as supervision.
    pub allow_proxy_gaze: bool,
}

impl PreparedData {
    pub fn pair(&self, i: usize) -> (&PreparedPair, &Image, &Image) {
        let p = &self.pairs[i];
        (p, &self.images[p.left], &self.images[p.right])
    }

    pub fn index_of(&self, pair_id: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p.pair_id == pair_id)
    }

    /// Pair indices for the given ids, in the given order.
    pub fn indices(&self, ids: &[String]) -> Result<Vec<usize>> {
        let lookup: HashMap<&str, usize> = self.pairs.iter().enumerate().map(|(i, p)| (p.pair_id.as_str(), i)).collect();
        ids.iter()
            .map(|id| lookup.get(id.as_str()).copied().ok_or_else(|| invalid(format!("unknown pair {id}"))))
            .collect()
    }

    pub fn add_image(&mut self, id: impl Into<String>, image: Image) -> usize {
        self.image_ids.push(id.into());
        self.images.push(image);
        self.images.len() - 1
    }

    /// Decodes the images and gaze artifacts referenced by `records`,
    /// resized to the model input.
    pub fn load(dataset: &Dataset, records: &[ComparisonRecord], config: &ModelConfig, options: PrepareOptions) -> Result<Self> {
        let mut out = Self::default();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut image = |out: &mut Self, id: &str| -> Result<usize> {
            if let Some(&i) = index.get(id) {
                return Ok(i);
            }
            let img = Image::load_resized(&dataset.resolve(id), config.image_height, config.image_width)?;
            if img.channels != config.channels {
                return Err(invalid(format!("{id}: {} channels, model expects {}", img.channels, config.channels)));
            }
            let i = out.add_image(id, img);
            index.insert(id.to_string(), i);
            Ok(i)
        };
        for r in records {
            let left = image(&mut out, &r.left_image)?;
            let right = image(&mut out, &r.right_image)?;
            let gaze = match (r.has_gaze, &r.left_gaze_file, &r.right_gaze_file) {
                (true, Some(lg), Some(rg)) => {
                    let la = GazeArtifact::load(&dataset.resolve(lg))?;
                    let ra = GazeArtifact::load(&dataset.resolve(rg))?;
                    if (la.proxy || ra.proxy) && !options.allow_proxy_gaze {
                        log::info!("{}: ignoring proxy gaze", r.pair_id);
                        None
                    } else {
                        Some(PairGaze {
                            left: SideGaze::from_artifact(&la, config)?,
                            right: SideGaze::from_artifact(&ra, config)?,
                        })
                    }
                }
                (true, _, _) => return Err(invalid(format!("{}: has_gaze without both gaze files", r.pair_id))),
                _ => None,
            };
            out.pairs.push(PreparedPair {
                pair_id: r.pair_id.clone(),
                left,
                right,
                label: r.label,
                gaze,
            });
        }
        Ok(out)
    }
}
