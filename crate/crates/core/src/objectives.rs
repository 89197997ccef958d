//! Pairwise classification, margin ranking and attention–gaze alignment
//! losses, and their weighted combination.
//!
//! Every loss is implemented once, as tape operations. The plain-value
//! functions evaluate the same graph on a scratch tape.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Pairwise preference. Ties are not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Label {
    /// `y = −1`
    LeftSafer,
    /// `y = +1`
    RightSafer,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::LeftSafer => -1.0,
            Label::RightSafer => 1.0,
        }
    }

    /// Index into the `(p_left_safer, p_right_safer)` probability pair.
    pub fn class_index(self) -> usize {
        match self {
            Label::LeftSafer => 0,
            Label::RightSafer => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::LeftSafer => Label::RightSafer,
            Label::RightSafer => Label::LeftSafer,
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Label::LeftSafer),
            1 => Ok(Label::RightSafer),
            other => Err(invalid(format!("label must be -1 or +1, got {other}"))),
        }
    }
}

impl From<Label> for i64 {
    fn from(l: Label) -> i64 {
        l.sign() as i64
    }
}

/// `(p_left_safer, p_right_safer)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLogits {
    pub p_left: f64,
    pub p_right: f64,
}

impl PairLogits {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.data() {
            [l, r] => Ok(Self { p_left: *l, p_right: *r }),
            _ => Err(invalid(format!("expected two probabilities, got shape {:?}", t.shape()))),
        }
    }

    pub fn predicted(&self) -> Label {
        if self.p_right > self.p_left {
            Label::RightSafer
        } else {
            Label::LeftSafer
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScorePair {
    pub s_left: f64,
    pub s_right: f64,
}

/// Relative weights of the three objectives and the ranking margin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_rank: f64,
    pub lambda_gaze: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rank: 1.0,
            lambda_gaze: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rank >= 0.0 && self.lambda_gaze >= 0.0 && self.gamma > 0.0) {
            return Err(invalid(format!(
                "loss weights need lambda_rank ≥ 0, lambda_gaze ≥ 0, gamma > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `−ln p_y` for a `1×2` probability row.
pub fn cls_loss_var(tape: &mut Tape, probs: Var, y: Label) -> Result<Var> {
    let p = tape.select(probs, y.class_index())?;
    let lp = tape.ln(p);
    Ok(tape.scale(lp, -1.0))
}

/// `max(0, γ − y·(s_R − s_L))`.
pub fn rank_loss_var(tape: &mut Tape, s_left: Var, s_right: Var, y: Label, gamma: f64) -> Result<Var> {
    if gamma <= 0.0 {
        return Err(invalid("ranking margin must be positive"));
    }
    let diff = tape.sub(s_right, s_left)?;
    let diff = tape.reshape(diff, &[])?;
    let signed = tape.scale(diff, -y.sign());
    let margin = tape.constant(Tensor::scalar(gamma));
    let slack = tape.add(signed, margin)?;
    Ok(tape.relu(slack))
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{name} must be strictly positive and finite")));
    }
    Ok(())
}

/// `KL(g ‖ m)` with `g` fixed data and `m` a `1×N` row on the tape.
fn kl_var(tape: &mut Tape, gaze: &[f64], model: Var) -> Result<Var> {
    let n = tape.value(model).numel();
    if gaze.len() != n {
        return Err(Error::ShapeMismatch {
            op: "loss_attn",
            left: vec![gaze.len()],
            right: tape.shape(model).to_vec(),
        });
    }
    check_distribution("gaze distribution", gaze)?;
    let entropy_term: f64 = gaze.iter().map(|g| g * g.ln()).sum();
    let g = tape.constant(Tensor::new(tape.shape(model).to_vec(), gaze.to_vec())?);
    let log_m = tape.ln(model);
    let cross = tape.mul(g, log_m)?;
    let cross = tape.sum(cross);
    let neg_cross = tape.scale(cross, -1.0);
    let h = tape.constant(Tensor::scalar(entropy_term));
    tape.add(h, neg_cross)
}

/// `½·[KL(Ĝ_L‖M_L) + KL(Ĝ_R‖M_R)]`; gradients flow into the model maps
/// only.
pub fn attn_loss_var(tape: &mut Tape, m_left: Var, m_right: Var, g_left: &[f64], g_right: &[f64]) -> Result<Var> {
    let kl_l = kl_var(tape, g_left, m_left)?;
    let kl_r = kl_var(tape, g_right, m_right)?;
    let both = tape.add(kl_l, kl_r)?;
    Ok(tape.scale(both, 0.5))
}

/// `L_cls + λ_rank·L_rank + λ_gaze·1[has_gaze]·L_attn`. The attention term is
/// not recorded at all unless it contributes.
pub fn total_loss_var(
    tape: &mut Tape,
    cls: Var,
    rank: Var,
    attn: Option<Var>,
    weights: &LossWeights,
    has_gaze: bool,
) -> Result<Var> {
    let r = tape.scale(rank, weights.lambda_rank);
    let mut total = tape.add(cls, r)?;
    if has_gaze && weights.lambda_gaze != 0.0 {
        let a = attn.ok_or_else(|| invalid("has_gaze is set but no alignment loss was built"))?;
        let a = tape.scale(a, weights.lambda_gaze);
        total = tape.add(total, a)?;
    }
    Ok(total)
}

pub fn loss_cls(p: &PairLogits, y: Label) -> Result<f64> {
    let mut tape = Tape::new();
    let probs = tape.constant(Tensor::new(vec![1, 2], vec![p.p_left, p.p_right])?);
    let l = cls_loss_var(&mut tape, probs, y)?;
    tape.value(l).item()
}

pub fn loss_rank(s: &ScorePair, y: Label, gamma: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let sl = tape.constant(Tensor::new(vec![1, 1], vec![s.s_left])?);
    let sr = tape.constant(Tensor::new(vec![1, 1], vec![s.s_right])?);
    let l = rank_loss_var(&mut tape, sl, sr, y, gamma)?;
    tape.value(l).item()
}

pub fn loss_attn(m_left: &[f64], m_right: &[f64], g_left: &[f64], g_right: &[f64]) -> Result<f64> {
    check_distribution("model attention", m_left)?;
    check_distribution("model attention", m_right)?;
    let mut tape = Tape::new();
    let ml = tape.constant(Tensor::new(vec![1, m_left.len()], m_left.to_vec())?);
    let mr = tape.constant(Tensor::new(vec![1, m_right.len()], m_right.to_vec())?);
    let l = attn_loss_var(&mut tape, ml, mr, g_left, g_right)?;
    tape.value(l).item()
}

pub fn total_loss(cls: f64, rank: f64, attn: f64, weights: &LossWeights, has_gaze: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let c = tape.constant(Tensor::scalar(cls));
    let r = tape.constant(Tensor::scalar(rank));
    let a = tape.constant(Tensor::scalar(attn));
    let l = total_loss_var(&mut tape, c, r, Some(a), weights, has_gaze)?;
    tape.value(l).item()
}
