use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::FixationPointSet;

use super::grid::impulse_map;
use super::{
    detect_fixations, fixation_points, sigma_from_geometry, smooth, to_patch_distribution, FixationEvent, GazeSample,
    SaliencyGrid, Side, TrialLayout, Weighting,
};

/// Fixation detection and saliency parameters. Unset values default to one
/// degree of visual angle from the layout geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeConfig {
    pub dispersion_px: Option<f64>,
    pub min_duration_ms: f64,
    pub sigma_px: Option<f64>,
    pub weighting: Weighting,
}

impl Default for GazeConfig {
    fn default() -> Self {
        Self {
            dispersion_px: None,
            min_duration_ms: 100.0,
            sigma_px: None,
            weighting: Weighting::Duration,
        }
    }
}

/// Per-image gaze record referenced from the manifest. Fixations are in
/// region-relative pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeArtifact {
    pub width: usize,
    pub height: usize,
    pub sigma_px: f64,
    #[serde(default)]
    pub weighting: Weighting,
    /// Cursor-trace stand-in rather than eye-tracker data.
    #[serde(default)]
    pub proxy: bool,
    pub fixations: Vec<FixationEvent>,
}

impl GazeArtifact {
    pub fn fixation_map(&self) -> SaliencyGrid {
        impulse_map(&self.fixations, self.width, self.height, self.weighting)
    }

    pub fn saliency(&self) -> Result<SaliencyGrid> {
        smooth(&self.fixation_map(), self.sigma_px)
    }

    /// Patch distribution at model input resolution `width×height`.
    pub fn patch_distribution(&self, width: usize, height: usize, patch: usize, eps: f64) -> Result<SaliencyGrid> {
        to_patch_distribution(&self.saliency()?, width, height, patch, eps)
    }

    pub fn fixation_points(&self, cols: usize, rows: usize) -> FixationPointSet {
        fixation_points(&self.fixations, self.width, self.height, cols, rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: Self = serde_json::from_slice(&fs::read(path)?)?;
        if a.width == 0 || a.height == 0 || !(a.sigma_px > 0.0) {
            return Err(invalid(format!("{}: empty region or non-positive sigma", path.display())));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrialGaze {
    /// Screen-space fixations of the whole trial.
    pub fixations: Vec<FixationEvent>,
    pub left: GazeArtifact,
    pub right: GazeArtifact,
}

/// Detects fixations over a trial and splits them into per-side artifacts.
pub fn process_trial(samples: &[GazeSample], layout: &TrialLayout, config: &GazeConfig, proxy: bool) -> Result<TrialGaze> {
    layout.validate()?;
    let degree = sigma_from_geometry(layout)?;
    let sigma = config.sigma_px.unwrap_or(degree);
    let dispersion = config.dispersion_px.unwrap_or(degree);
    let fixations = detect_fixations(samples, dispersion, config.min_duration_ms)?;
    let side = |s: Side| {
        let region = layout.region(s);
        GazeArtifact {
            width: region.width as usize,
            height: region.height as usize,
            sigma_px: sigma,
            weighting: config.weighting,
            proxy,
            fixations: fixations
                .iter()
                .filter_map(|f| region.relative(f.x, f.y).map(|(x, y)| FixationEvent { x, y, ..*f }))
                .collect(),
        }
    };
    Ok(TrialGaze {
        left: side(Side::Left),
        right: side(Side::Right),
        fixations,
    })
}
