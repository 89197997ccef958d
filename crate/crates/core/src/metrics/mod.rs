//! Attention–gaze agreement metrics: AUC-Judd, NSS, CC, EMD, SIM, KL and
//! information gain.

mod emd;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaze::SaliencyGrid;

pub use emd::{cell_distance, transport_cost};
pub use report::{
    evaluate_maps, select_stronger, MetricAggregate, MetricReport, MetricRow, MetricValues, SourceChoice,
};

/// Cells holding at least one fixation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixationPointSet {
    pub width: usize,
    pub height: usize,
    pub marked: Vec<bool>,
}

impl FixationPointSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            marked: vec![false; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: &[usize]) -> Result<Self> {
        let mut s = Self::empty(width, height);
        for &c in cells {
            *s.marked
                .get_mut(c)
                .ok_or_else(|| invalid(format!("cell {c} outside {width}×{height} grid")))? = true;
        }
        Ok(s)
    }

    pub fn mark(&mut self, x: usize, y: usize) {
        self.marked[y * self.width + x] = true;
    }

    pub fn is_marked(&self, x: usize, y: usize) -> bool {
        self.marked[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.marked.iter().filter(|m| **m).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.marked.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }

    pub fn transposed(&self) -> Self {
        let mut t = Self::empty(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_marked(x, y) {
                    t.mark(y, x);
                }
            }
        }
        t
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

fn same_shape(op: &'static str, a: &SaliencyGrid, b: &SaliencyGrid) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![a.height, a.width],
            right: vec![b.height, b.width],
        });
    }
    Ok(())
}

fn fixation_shape(op: &'static str, s: &SaliencyGrid, fix: &FixationPointSet) -> Result<()> {
    if (s.width, s.height) != (fix.width, fix.height) {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![s.height, s.width],
            right: vec![fix.height, fix.width],
        });
    }
    Ok(())
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// AUC-Judd: thresholds at the saliency values of fixation cells, true
/// positives over fixation cells, false positives over all other cells,
/// trapezoidal area with the curve anchored at (0,0) and (1,1).
pub fn auc_judd(saliency: &SaliencyGrid, fix: &FixationPointSet) -> Result<f64> {
    fixation_shape("auc_judd", saliency, fix)?;
    let mut pos: Vec<f64> = fix.cells().map(|c| saliency.values[c]).collect();
    let mut neg: Vec<f64> = (0..saliency.len()).filter(|&c| !fix.marked[c]).map(|c| saliency.values[c]).collect();
    if pos.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "auc",
            reason: "no fixation cells",
        });
    }
    if neg.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "auc",
            reason: "no non-fixation cells",
        });
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    neg.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut tp_prev, mut fp_prev, mut area) = (0.0, 0.0, 0.0);
    let (mut i, mut j) = (0, 0);
    while i < pos.len() {
        let theta = pos[i];
        while i < pos.len() && pos[i] >= theta {
            i += 1;
        }
        while j < neg.len() && neg[j] >= theta {
            j += 1;
        }
        let (tp, fp) = (i as f64 / np, j as f64 / nn);
        area += (fp - fp_prev) * (tp + tp_prev) / 2.0;
        (tp_prev, fp_prev) = (tp, fp);
    }
    area += (1.0 - fp_prev) * (1.0 + tp_prev) / 2.0;
    Ok(area)
}

/// Mean z-scored saliency at fixation cells (population standard
/// deviation). Constant maps score 0.
pub fn nss(saliency: &SaliencyGrid, fix: &FixationPointSet) -> Result<f64> {
    fixation_shape("nss", saliency, fix)?;
    let n = fix.count();
    if n == 0 {
        return Err(Error::UndefinedMetric {
            metric: "nss",
            reason: "no fixation cells",
        });
    }
    let (mean, std) = mean_std(&saliency.values);
    if is_constant(&saliency.values) || std == 0.0 {
        return Ok(0.0);
    }
    Ok(fix.cells().map(|c| (saliency.values[c] - mean) / std).sum::<f64>() / n as f64)
}

/// Pearson correlation; 0 when either map is constant.
pub fn cc(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<f64> {
    same_shape("cc", a, b)?;
    let (ma, sa) = mean_std(&a.values);
    let (mb, sb) = mean_std(&b.values);
    if is_constant(&a.values) || is_constant(&b.values) || sa == 0.0 || sb == 0.0 {
        return Ok(0.0);
    }
    let cov = a.values.iter().zip(&b.values).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Optimal transport cost between two probability grids, ground distance in
/// cell widths.
pub fn emd(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<f64> {
    same_shape("emd", a, b)?;
    let cols = a.width;
    transport_cost(&a.values, &b.values, |i, j| cell_distance(i, j, cols))
}

/// Histogram intersection `Σ min(a_i, b_i)`.
pub fn sim(a: &SaliencyGrid, b: &SaliencyGrid) -> Result<f64> {
    same_shape("sim", a, b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x.min(*y)).sum())
}

/// `Σ g_i·log(g_i / (m_i + eps))` with gaze as the reference distribution.
pub fn kl_metric(g: &SaliencyGrid, m: &SaliencyGrid, eps: f64, base: LogBase) -> Result<f64> {
    same_shape("kl", g, m)?;
    Ok(g.values
        .iter()
        .zip(&m.values)
        .filter(|(gi, _)| **gi > 0.0)
        .map(|(gi, mi)| gi * base.log(gi / (mi + eps)))
        .sum())
}

/// Mean over fixation cells of `log₂(s_i + eps) − log₂(b_i + eps)`.
pub fn info_gain(saliency: &SaliencyGrid, fix: &FixationPointSet, baseline: &SaliencyGrid, eps: f64) -> Result<f64> {
    same_shape("info_gain", saliency, baseline)?;
    fixation_shape("info_gain", saliency, fix)?;
    let n = fix.count();
    if n == 0 {
        return Err(Error::UndefinedMetric {
            metric: "ig",
            reason: "no fixation cells",
        });
    }
    Ok(fix
        .cells()
        .map(|c| (saliency.values[c] + eps).log2() - (baseline.values[c] + eps).log2())
        .sum::<f64>()
        / n as f64)
}

/// Information-gain baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    Uniform,
    /// Isotropic Gaussian at the grid centre, `sigma` as a fraction of the
    /// larger side.
    CenterPrior { sigma: f64 },
}

impl Baseline {
    pub fn grid(self, width: usize, height: usize) -> SaliencyGrid {
        match self {
            Baseline::Uniform => SaliencyGrid::uniform(width, height),
            Baseline::CenterPrior { sigma } => {
                let s = sigma * width.max(height) as f64;
                let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
                let values = (0..width * height)
                    .map(|i| {
                        let (x, y) = ((i % width) as f64, (i / width) as f64);
                        (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
                    })
                    .collect();
                SaliencyGrid::probability(width, height, values).expect("finite gaussian")
            }
        }
    }
}
