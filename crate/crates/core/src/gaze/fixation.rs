use crate::error::{invalid, Result};

use super::{FixationEvent, GazeSample};

#[derive(Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn of(s: &GazeSample) -> Self {
        Self { min_x: s.x, max_x: s.x, min_y: s.y, max_y: s.y }
    }

    fn with(mut self, s: &GazeSample) -> Self {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
        self
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Dispersion-threshold (I-DT) fixation detection with dispersion
/// `(max x − min x) + (max y − min y)`. Invalid samples break windows.
pub fn detect_fixations(samples: &[GazeSample], dispersion_px: f64, min_duration_ms: f64) -> Result<Vec<FixationEvent>> {
    if !(dispersion_px > 0.0) || !(min_duration_ms > 0.0) {
        return Err(invalid("dispersion and minimum duration must be positive"));
    }
    if samples.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
        return Err(invalid("gaze samples must be sorted by time"));
    }
    let n = samples.len();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < n {
        if !samples[i].valid {
            i += 1;
            continue;
        }
        let mut j = i;
        let mut bounds = Bounds::of(&samples[i]);
        while samples[j].t_ms - samples[i].t_ms < min_duration_ms {
            j += 1;
            if j >= n {
                break 'outer;
            }
            if !samples[j].valid {
                i = j + 1;
                continue 'outer;
            }
            bounds = bounds.with(&samples[j]);
        }
        if bounds.dispersion() > dispersion_px {
            i += 1;
            continue;
        }
        while j + 1 < n && samples[j + 1].valid {
            let grown = bounds.with(&samples[j + 1]);
            if grown.dispersion() > dispersion_px {
                break;
            }
            bounds = grown;
            j += 1;
        }
        let members = &samples[i..=j];
        let k = members.len() as f64;
        out.push(FixationEvent {
            x: members.iter().map(|s| s.x).sum::<f64>() / k,
            y: members.iter().map(|s| s.y).sum::<f64>() / k,
            duration_ms: samples[j].t_ms - samples[i].t_ms,
            onset_ms: samples[i].t_ms,
        });
        i = j + 1;
    }
    Ok(out)
}
