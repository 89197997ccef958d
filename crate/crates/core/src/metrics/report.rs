use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaze::SaliencyGrid;
use crate::vit::MapSource;

use super::{auc_judd, cc, emd, info_gain, kl_metric, nss, sim, FixationPointSet, LogBase};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub auc: f64,
    pub nss: f64,
    pub cc: f64,
    pub emd: f64,
    pub sim: f64,
    pub kl: f64,
    pub ig: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 7] = ["auc", "nss", "cc", "emd", "sim", "kl", "ig"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "auc" => self.auc,
            "nss" => self.nss,
            "cc" => self.cc,
            "emd" => self.emd,
            "sim" => self.sim,
            "kl" => self.kl,
            "ig" => self.ig,
            _ => return None,
        })
    }

    /// EMD and KL are distances; every other metric is a similarity.
    pub fn lower_is_better(name: &str) -> bool {
        matches!(name, "emd" | "kl")
    }

    fn to_array(self) -> [f64; 7] {
        [self.auc, self.nss, self.cc, self.emd, self.sim, self.kl, self.ig]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Self {
            auc: a[0],
            nss: a[1],
            cc: a[2],
            emd: a[3],
            sim: a[4],
            kl: a[5],
            ig: a[6],
        }
    }
}

/// All seven metrics for one model map against one gaze distribution.
/// `kl_eps` floors the model map in KL and IG.
pub fn evaluate_maps(
    model: &SaliencyGrid,
    gaze: &SaliencyGrid,
    fix: &FixationPointSet,
    baseline: &SaliencyGrid,
    kl_eps: f64,
    base: LogBase,
) -> Result<MetricValues> {
    Ok(MetricValues {
        auc: auc_judd(model, fix)?,
        nss: nss(model, fix)?,
        cc: cc(model, gaze)?,
        emd: emd(gaze, model)?,
        sim: sim(model, gaze)?,
        kl: kl_metric(gaze, model, kl_eps, base)?,
        ig: info_gain(model, fix, baseline, kl_eps)?,
    })
}

/// One image's metrics under one attention source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub pair_id: String,
    pub side: String,
    pub source: MapSource,
    pub auc: f64,
    pub nss: f64,
    pub cc: f64,
    pub emd: f64,
    pub sim: f64,
    pub kl: f64,
    pub ig: f64,
}

impl MetricRow {
    pub fn new(pair_id: impl Into<String>, side: impl Into<String>, source: MapSource, v: MetricValues) -> Self {
        Self {
            pair_id: pair_id.into(),
            side: side.into(),
            source,
            auc: v.auc,
            nss: v.nss,
            cc: v.cc,
            emd: v.emd,
            sim: v.sim,
            kl: v.kl,
            ig: v.ig,
        }
    }

    pub fn values(&self) -> MetricValues {
        MetricValues {
            auc: self.auc,
            nss: self.nss,
            cc: self.cc,
            emd: self.emd,
            sim: self.sim,
            kl: self.kl,
            ig: self.ig,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub source: MapSource,
    pub images: usize,
    pub mean: MetricValues,
}

/// Winner of a raw-vs-rollout comparison for one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceChoice {
    pub metric: String,
    pub source: MapSource,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Pairs left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl MetricReport {
    pub fn sources(&self) -> Vec<MapSource> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.source) {
                out.push(r.source);
            }
        }
        out
    }

    /// Arithmetic means over the rows of `source`.
    pub fn aggregate(&self, source: MapSource) -> Result<MetricAggregate> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.source == source).collect();
        if rows.is_empty() {
            return Err(invalid(format!("no {} rows to aggregate", source.as_str())));
        }
        let mut sum = [0.0; 7];
        for r in &rows {
            for (s, v) in sum.iter_mut().zip(r.values().to_array()) {
                *s += v;
            }
        }
        let n = rows.len() as f64;
        Ok(MetricAggregate {
            source,
            images: rows.len(),
            mean: MetricValues::from_array(sum.map(|s| s / n)),
        })
    }

    pub fn aggregates(&self) -> Result<Vec<MetricAggregate>> {
        self.sources().into_iter().map(|s| self.aggregate(s)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            rows,
            skipped: Vec::new(),
        })
    }

    /// JSON summary: per-source means and, with both sources present, the
    /// stronger mean per metric.
    pub fn summary_json(&self) -> Result<serde_json::Value> {
        let aggregates = self.aggregates()?;
        let raw = aggregates.iter().find(|a| a.source == MapSource::Raw);
        let rollout = aggregates.iter().find(|a| a.source == MapSource::Rollout);
        let selected = match (raw, rollout) {
            (Some(r), Some(o)) => Some(select_stronger(r, o)),
            _ => None,
        };
        Ok(serde_json::json!({
            "aggregates": aggregates,
            "selected": selected,
            "skipped": self.skipped,
        }))
    }
}

/// Per metric, the better of two source means (lower for EMD and KL).
pub fn select_stronger(a: &MetricAggregate, b: &MetricAggregate) -> Vec<SourceChoice> {
    MetricValues::NAMES
        .iter()
        .map(|&name| {
            let (va, vb) = (a.mean.get(name).unwrap(), b.mean.get(name).unwrap());
            let a_wins = if MetricValues::lower_is_better(name) { va <= vb } else { va >= vb };
            let (source, value) = if a_wins { (a.source, va) } else { (b.source, vb) };
            SourceChoice {
                metric: name.to_string(),
                source,
                value,
            }
        })
        .collect()
}
