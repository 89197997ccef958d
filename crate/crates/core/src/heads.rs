//! Classification and scoring heads on top of the CLS descriptors.

use crate::error::{invalid, Result};
use crate::tape::{Tape, Var};
use crate::vit::builder::{Linear, ParamBuilder};
use crate::vit::params::Binding;

/// Fully connected stack with GELU between layers (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub(crate) fn build(b: &mut ParamBuilder<'_>, name: &str, dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(invalid("an MLP needs at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::build(b, &format!("{name}.{i}"), w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, params: &Binding, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = tape.matmul(h, params.var(layer.weight))?;
            h = tape.add_bias(h, params.var(layer.bias))?;
            if i + 1 < self.layers.len() {
                h = tape.gelu(h);
            }
        }
        Ok(h)
    }
}

/// `[h_L; h_R]` → MLP → softmax over (left safer, right safer).
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub mlp: Mlp,
}

impl ClassifierHead {
    pub(crate) fn build(b: &mut ParamBuilder<'_>, embed_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut dims = vec![2 * embed_dim];
        dims.extend_from_slice(hidden);
        dims.push(2);
        Ok(Self {
            mlp: Mlp::build(b, "head.cls", &dims)?,
        })
    }

    /// Returns a `1×2` probability row.
    pub fn classify(&self, tape: &mut Tape, params: &Binding, h_left: Var, h_right: Var) -> Result<Var> {
        let joint = tape.concat_cols(&[h_left, h_right])?;
        let logits = self.mlp.forward(tape, params, joint)?;
        tape.softmax(logits, 1)
    }
}

/// Shared scalar safety score `s = f(h)`.
#[derive(Clone, Debug)]
pub struct ScoreHead {
    pub mlp: Mlp,
}

impl ScoreHead {
    pub(crate) fn build(b: &mut ParamBuilder<'_>, embed_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut dims = vec![embed_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(Self {
            mlp: Mlp::build(b, "head.score", &dims)?,
        })
    }

    /// Returns a `1×1` score.
    pub fn score(&self, tape: &mut Tape, params: &Binding, h: Var) -> Result<Var> {
        self.mlp.forward(tape, params, h)
    }
}
