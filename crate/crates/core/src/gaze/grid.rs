use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::resize_bilinear;
use crate::metrics::FixationPointSet;

use super::{FixationEvent, Rect, Side, TrialLayout, Weighting};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormState {
    RawMass,
    Probability,
}

/// Nonnegative row-major map over a pixel or patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub norm: NormState,
}

impl SaliencyGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            norm: NormState::RawMass,
        }
    }

    pub fn new(width: usize, height: usize, values: Vec<f64>, norm: NormState) -> Result<Self> {
        if values.len() != width * height {
            return Err(invalid(format!(
                "grid {width}×{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("saliency values must be finite and nonnegative"));
        }
        if norm == NormState::Probability && (values.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(invalid("probability grid does not sum to 1"));
        }
        Ok(Self { width, height, values, norm })
    }

    /// Probability grid from any nonnegative values; all-zero input becomes
    /// uniform.
    pub fn probability(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::new(width, height, values, NormState::RawMass)?;
        g.normalize();
        Ok(g)
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            values: vec![1.0 / n as f64; n],
            norm: NormState::Probability,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rescales to unit mass in place.
    pub fn normalize(&mut self) {
        let total = self.mass();
        if total > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= total);
        } else if !self.values.is_empty() {
            let u = 1.0 / self.values.len() as f64;
            self.values.iter_mut().for_each(|v| *v = u);
        }
        self.norm = NormState::Probability;
    }

    pub fn transposed(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                values[x * self.height + y] = self.get(x, y);
            }
        }
        Self {
            width: self.height,
            height: self.width,
            values,
            norm: self.norm,
        }
    }

    /// Bilinear resample; the result is raw mass.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: resize_bilinear(&self.values, self.width, self.height, width, height),
            norm: if (width, height) == (self.width, self.height) { self.norm } else { NormState::RawMass },
        }
    }
}

/// Duration- or unit-weighted impulses at region-relative fixation cells.
/// Fixations outside the region are dropped.
pub fn build_fixation_map(fixations: &[FixationEvent], layout: &TrialLayout, side: Side, weighting: Weighting) -> SaliencyGrid {
    let region = layout.region(side);
    let relative: Vec<_> = fixations
        .iter()
        .filter_map(|f| region.relative(f.x, f.y).map(|(x, y)| FixationEvent { x, y, ..*f }))
        .collect();
    impulse_map(&relative, region.width as usize, region.height as usize, weighting)
}

/// Fixation map for fixations already in region-relative coordinates.
pub(crate) fn impulse_map(fixations: &[FixationEvent], width: usize, height: usize, weighting: Weighting) -> SaliencyGrid {
    let mut grid = SaliencyGrid::zeros(width, height);
    let full = Rect { x: 0, y: 0, width: width as u32, height: height as u32 };
    for f in fixations {
        if let Some((x, y)) = full.relative(f.x, f.y) {
            grid.values[y as usize * width + x as usize] += weighting.weight(f);
        }
    }
    grid
}

/// Pixels per degree of visual angle: `2·d·tan(0.5°)` over the pixel pitch.
pub fn sigma_from_geometry(layout: &TrialLayout) -> Result<f64> {
    let res = layout.resolution();
    if !(layout.viewing_distance_cm > 0.0) || !(layout.monitor_diagonal_in > 0.0) || res.width == 0 || res.height == 0 {
        return Err(invalid("viewing distance, diagonal and resolution must be positive"));
    }
    let diag_px = (res.width as f64).hypot(res.height as f64);
    let pitch_mm = 25.4 * layout.monitor_diagonal_in / diag_px;
    let span_mm = 2.0 * layout.viewing_distance_cm * 10.0 * 0.5f64.to_radians().tan();
    Ok(span_mm / pitch_mm)
}

/// Normalized 1-D Gaussian truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable isotropic Gaussian blur with zero padding. Mass is preserved
/// away from the borders.
pub fn smooth(map: &SaliencyGrid, sigma_px: f64) -> Result<SaliencyGrid> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(invalid("sigma must be positive"));
    }
    let k = gaussian_kernel(sigma_px);
    let r = (k.len() / 2) as i64;
    let (w, h) = (map.width as i64, map.height as i64);
    let mut tmp = vec![0.0; map.values.len()];
    for y in 0..h {
        for x in 0..w {
            let v = map.values[(y * w + x) as usize];
            if v == 0.0 {
                continue;
            }
            for (i, kv) in k.iter().enumerate() {
                let xx = x + i as i64 - r;
                if (0..w).contains(&xx) {
                    tmp[(y * w + xx) as usize] += v * kv;
                }
            }
        }
    }
    let mut out = vec![0.0; map.values.len()];
    for y in 0..h {
        for x in 0..w {
            let v = tmp[(y * w + x) as usize];
            if v == 0.0 {
                continue;
            }
            for (i, kv) in k.iter().enumerate() {
                let yy = y + i as i64 - r;
                if (0..h).contains(&yy) {
                    out[(yy * w + x) as usize] += v * kv;
                }
            }
        }
    }
    Ok(SaliencyGrid {
        width: map.width,
        height: map.height,
        values: out,
        norm: NormState::RawMass,
    })
}

/// Bilinear resize to `width×height`, average-pool `patch×patch` blocks, add
/// `eps` to every cell and renormalize.
pub fn to_patch_distribution(map: &SaliencyGrid, width: usize, height: usize, patch: usize, eps: f64) -> Result<SaliencyGrid> {
    if patch == 0 || width % patch != 0 || height % patch != 0 || width == 0 || height == 0 {
        return Err(invalid(format!("{width}×{height} is not divisible into {patch}px patches")));
    }
    if eps < 0.0 {
        return Err(invalid("eps must be nonnegative"));
    }
    let resized = map.resized(width, height);
    let (cols, rows) = (width / patch, height / patch);
    let area = (patch * patch) as f64;
    let mut pooled = vec![0.0; rows * cols];
    for y in 0..height {
        for x in 0..width {
            pooled[(y / patch) * cols + x / patch] += resized.values[y * width + x];
        }
    }
    pooled.iter_mut().for_each(|v| *v = *v / area + eps);
    SaliencyGrid::probability(cols, rows, pooled)
}

/// Patch cells containing at least one region-relative fixation centroid.
pub fn fixation_points(fixations: &[FixationEvent], region_w: usize, region_h: usize, cols: usize, rows: usize) -> FixationPointSet {
    let mut set = FixationPointSet::empty(cols, rows);
    for f in fixations {
        if f.x < 0.0 || f.y < 0.0 || f.x >= region_w as f64 || f.y >= region_h as f64 {
            continue;
        }
        let c = ((f.x / region_w as f64) * cols as f64).floor() as usize;
        let r = ((f.y / region_h as f64) * rows as f64).floor() as usize;
        set.mark(c.min(cols - 1), r.min(rows - 1));
    }
    set
}
