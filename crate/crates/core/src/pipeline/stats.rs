use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Mean with a two-sided Student-t confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub half_width: f64,
    pub level: f64,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// `mean ± t_{(1+level)/2, n−1} · s/√n` with the sample standard deviation.
pub fn t_interval(values: &[f64], level: f64) -> Result<MeanCi> {
    if values.len() < 2 {
        return Err(invalid("a t interval needs at least two values"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level {level} not in (0, 1)")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| invalid(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    Ok(MeanCi {
        n: values.len(),
        mean,
        half_width: t * (var / n).sqrt(),
        level,
    })
}
