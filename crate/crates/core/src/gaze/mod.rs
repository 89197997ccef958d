//! Gaze processing: fixation detection, fixation maps, Gaussian saliency
//! and patch-grid distributions.

mod artifact;
mod fixation;
mod grid;
mod io;

use serde::{Deserialize, Serialize};

pub use artifact::{process_trial, GazeArtifact, GazeConfig, TrialGaze};
pub use fixation::detect_fixations;
pub use grid::{
    build_fixation_map, fixation_points, gaussian_kernel, sigma_from_geometry, smooth, to_patch_distribution,
    NormState, SaliencyGrid,
};
pub use io::{read_samples_csv, read_sgrd, write_png, write_samples_csv, write_sgrd};

/// One eye-tracker sample. Invalid samples carry no usable coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GazeSample {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t_ms: f64, x: f64, y: f64) -> Self {
        Self { t_ms, x, y, valid: true }
    }

    pub fn invalid(t_ms: f64) -> Self {
        Self {
            t_ms,
            x: f64::NAN,
            y: f64::NAN,
            valid: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
    pub onset_ms: f64,
}

/// Per-fixation weight in the fixation map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Duration,
    Unit,
}

impl Weighting {
    pub fn weight(self, f: &FixationEvent) -> f64 {
        match self {
            Weighting::Duration => f.duration_ms,
            Weighting::Unit => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    /// Region-relative coordinates of a screen point, if inside.
    pub fn relative(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (rx, ry) = (x - self.x as f64, y - self.y as f64);
        (rx >= 0.0 && ry >= 0.0 && rx < self.width as f64 && ry < self.height as f64).then_some((rx, ry))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

/// Screen layout and viewing geometry of a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLayout {
    pub screen: ScreenSize,
    pub left_region: Rect,
    pub right_region: Rect,
    #[serde(default = "default_distance")]
    pub viewing_distance_cm: f64,
    #[serde(default = "default_diagonal")]
    pub monitor_diagonal_in: f64,
    /// Physical resolution for the pixel pitch; defaults to `screen`.
    #[serde(default)]
    pub resolution: Option<ScreenSize>,
}

fn default_distance() -> f64 {
    50.0
}

fn default_diagonal() -> f64 {
    24.0
}

impl TrialLayout {
    /// Default geometry (50 cm, 24″, 1920×1200) with two equal side-by-side
    /// regions of `region_w×region_h` centred vertically.
    pub fn side_by_side(region_w: u32, region_h: u32, gap: u32) -> Self {
        let screen = ScreenSize { width: 1920, height: 1200 };
        let total = 2 * region_w + gap;
        let x0 = screen.width.saturating_sub(total) / 2;
        let y0 = screen.height.saturating_sub(region_h) / 2;
        Self {
            screen,
            left_region: Rect { x: x0, y: y0, width: region_w, height: region_h },
            right_region: Rect { x: x0 + region_w + gap, y: y0, width: region_w, height: region_h },
            viewing_distance_cm: default_distance(),
            monitor_diagonal_in: default_diagonal(),
            resolution: None,
        }
    }

    pub fn region(&self, side: Side) -> Rect {
        match side {
            Side::Left => self.left_region,
            Side::Right => self.right_region,
        }
    }

    pub fn resolution(&self) -> ScreenSize {
        self.resolution.unwrap_or(self.screen)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let inside = |r: &Rect| r.width > 0 && r.height > 0 && r.right() <= self.screen.width && r.bottom() <= self.screen.height;
        if !inside(&self.left_region) || !inside(&self.right_region) {
            return Err(crate::error::invalid("regions must be non-empty and inside the screen"));
        }
        if self.left_region.intersects(&self.right_region) {
            return Err(crate::error::invalid("left and right regions overlap"));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let layout: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        layout.validate()?;
        Ok(layout)
    }
}
