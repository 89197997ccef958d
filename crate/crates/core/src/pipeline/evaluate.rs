//! Pairwise accuracies and attention–gaze benchmarking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaze::SaliencyGrid;
use crate::metrics::{auc_judd, cc, emd, evaluate_maps, info_gain, kl_metric, nss, sim, Baseline, LogBase, MetricReport, MetricRow, MetricValues};
use crate::model::{AlignmentSource, Prediction, SiameseModel};
use crate::objectives::{loss_attn, loss_cls, loss_rank, total_loss, Label, LossWeights, PairLogits, ScorePair};
use crate::vit::attention::extract;
use crate::vit::MapSource;

use super::prepare::{PreparedData, SideGaze};

/// One pair's predictions. `p_*` are classifier probabilities, `s_*` scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub pair_id: String,
    pub label: Label,
    pub p_left: f64,
    pub p_right: f64,
    pub s_left: f64,
    pub s_right: f64,
    pub class_correct: bool,
    pub rank_correct: bool,
}

impl PairPrediction {
    fn new(pair_id: &str, label: Label, pred: &Prediction) -> Self {
        Self::from_outputs(pair_id, label, pred.logits, pred.scores)
    }

    pub fn from_outputs(pair_id: &str, label: Label, p: PairLogits, s: ScorePair) -> Self {
        let (p_y, p_other) = match label {
            Label::LeftSafer => (p.p_left, p.p_right),
            Label::RightSafer => (p.p_right, p.p_left),
        };
        Self {
            pair_id: pair_id.to_string(),
            label,
            p_left: p.p_left,
            p_right: p.p_right,
            s_left: s.s_left,
            s_right: s.s_right,
            // exact ties are errors on both criteria
            class_correct: p_y > p_other,
            rank_correct: label.sign() * (s.s_right - s.s_left) > 0.0,
        }
    }

    /// The same prediction for the pair shown the other way round.
    pub fn mirrored(&self) -> Self {
        Self::from_outputs(
            &self.pair_id,
            self.label.flipped(),
            PairLogits { p_left: self.p_right, p_right: self.p_left },
            ScorePair { s_left: self.s_right, s_right: self.s_left },
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub pairs: usize,
    pub class_accuracy: f64,
    pub rank_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub result: EvalResult,
    pub predictions: Vec<PairPrediction>,
}

impl Evaluation {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.predictions {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-pair loss terms computed on plain values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairTerms {
    pub cls: f64,
    pub rank: f64,
    pub attn: Option<f64>,
    pub total: f64,
}

pub(crate) fn pair_terms(
    model: &SiameseModel,
    data: &PreparedData,
    index: usize,
    weights: &LossWeights,
    source: AlignmentSource,
) -> Result<(PairPrediction, PairTerms)> {
    let (pair, left, right) = data.pair(index);
    let pred = model.predict(left, right)?;
    let cls = loss_cls(&pred.logits, pair.label)?;
    let rank = loss_rank(&pred.scores, pair.label, weights.gamma)?;
    let attn = match (&pair.gaze, source.map_source()) {
        (Some(g), Some(src)) if weights.lambda_gaze != 0.0 => {
            let ml = extract(&pred.left_attention, src)?;
            let mr = extract(&pred.right_attention, src)?;
            Some(loss_attn(&ml.weights, &mr.weights, &g.left.patch.values, &g.right.patch.values)?)
        }
        _ => None,
    };
    let total = total_loss(cls, rank, attn.unwrap_or(0.0), weights, attn.is_some())?;
    Ok((PairPrediction::new(&pair.pair_id, pair.label, &pred), PairTerms { cls, rank, attn, total }))
}

/// Classification and ranking accuracy over `indices`.
pub fn evaluate(model: &SiameseModel, data: &PreparedData, indices: &[usize]) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let mut predictions = Vec::with_capacity(indices.len());
    for &i in indices {
        let (pair, left, right) = data.pair(i);
        let pred = model.predict(left, right)?;
        predictions.push(PairPrediction::new(&pair.pair_id, pair.label, &pred));
    }
    let n = predictions.len() as f64;
    let count = |f: fn(&PairPrediction) -> bool| predictions.iter().filter(|p| f(p)).count() as f64 / n;
    Ok(Evaluation {
        result: EvalResult {
            pairs: predictions.len(),
            class_accuracy: count(|p| p.class_correct),
            rank_accuracy: count(|p| p.rank_correct),
        },
        predictions,
    })
}

/// Which attention extraction(s) to benchmark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSelection {
    Raw,
    Rollout,
    #[default]
    Both,
}

impl SourceSelection {
    pub fn sources(self) -> &'static [MapSource] {
        match self {
            SourceSelection::Raw => &[MapSource::Raw],
            SourceSelection::Rollout => &[MapSource::Rollout],
            SourceSelection::Both => &[MapSource::Raw, MapSource::Rollout],
        }
    }
}

/// Grid the metrics are computed on. EMD always uses the patch grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalResolution {
    #[default]
    Patch,
    /// Model map bilinearly upsampled to the input resolution, compared with
    /// the pixel saliency map and pixel fixations.
    Pixel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkOptions {
    pub sources: SourceSelection,
    pub resolution: EvalResolution,
    pub baseline: Baseline,
    pub kl_eps: f64,
    pub log_base: LogBase,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            sources: SourceSelection::Both,
            resolution: EvalResolution::Patch,
            baseline: Baseline::Uniform,
            kl_eps: 1e-8,
            log_base: LogBase::Natural,
        }
    }
}

fn side_metrics(
    map: &[f64],
    gaze: &SideGaze,
    cols: usize,
    rows: usize,
    options: &BenchmarkOptions,
) -> Result<MetricValues> {
    let patch_map = SaliencyGrid::probability(cols, rows, map.to_vec())?;
    match options.resolution {
        EvalResolution::Patch => {
            let baseline = options.baseline.grid(cols, rows);
            evaluate_maps(&patch_map, &gaze.patch, &gaze.patch_points, &baseline, options.kl_eps, options.log_base)
        }
        EvalResolution::Pixel => {
            let (w, h) = (gaze.pixel.width, gaze.pixel.height);
            let mut pixel_map = patch_map.resized(w, h);
            pixel_map.normalize();
            let baseline = options.baseline.grid(w, h);
            let (fix, eps) = (&gaze.pixel_points, options.kl_eps);
            Ok(MetricValues {
                auc: auc_judd(&pixel_map, fix)?,
                nss: nss(&pixel_map, fix)?,
                cc: cc(&pixel_map, &gaze.pixel)?,
                emd: emd(&gaze.patch, &patch_map)?,
                sim: sim(&pixel_map, &gaze.pixel)?,
                kl: kl_metric(&gaze.pixel, &pixel_map, eps, options.log_base)?,
                ig: info_gain(&pixel_map, fix, &baseline, eps)?,
            })
        }
    }
}

/// Per-image metrics for every gaze-bearing pair in `indices`. Sides whose
/// metrics are undefined are skipped with the reason.
pub fn benchmark_attention(
    model: &SiameseModel,
    data: &PreparedData,
    indices: &[usize],
    options: &BenchmarkOptions,
) -> Result<MetricReport> {
    let cfg = model.config();
    let (cols, rows) = (cfg.grid_cols(), cfg.grid_rows());
    let mut report = MetricReport::default();
    let mut gaze_pairs = 0;
    for &i in indices {
        let (pair, left, right) = data.pair(i);
        let Some(gaze) = &pair.gaze else {
            report.skipped.push((pair.pair_id.clone(), "no gaze".into()));
            continue;
        };
        gaze_pairs += 1;
        let pred = model.predict(left, right)?;
        for (side, stack, g) in [("left", &pred.left_attention, &gaze.left), ("right", &pred.right_attention, &gaze.right)] {
            for &source in options.sources.sources() {
                let map = extract(stack, source)?;
                match side_metrics(&map.weights, g, cols, rows, options) {
                    Ok(v) => report.rows.push(MetricRow::new(&pair.pair_id, side, source, v)),
                    Err(e @ Error::UndefinedMetric { .. }) => {
                        report.skipped.push((format!("{}/{side}/{}", pair.pair_id, source.as_str()), e.to_string()))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if gaze_pairs == 0 {
        return Err(invalid("no gaze-bearing pairs to benchmark"));
    }
    Ok(report)
}
