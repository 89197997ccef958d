use crate::error::{invalid, Result};
use crate::tensor::Tensor;

use super::params::{Initializer, ParamId, ParamStore};

pub(crate) enum Fill {
    Normal,
    Zeros,
    Ones,
}

/// Creates parameters on a fresh store, or resolves them by name on a
/// loaded one. Both paths share the same naming and shape logic.
pub(crate) enum ParamBuilder<'a> {
    Init {
        store: &'a mut ParamStore,
        init: &'a mut Initializer,
    },
    Load {
        store: &'a ParamStore,
    },
}

impl ParamBuilder<'_> {
    pub(crate) fn param(&mut self, name: &str, shape: &[usize], fill: Fill) -> Result<ParamId> {
        match self {
            ParamBuilder::Init { store, init } => {
                let t = match fill {
                    Fill::Normal => init.trunc_normal(shape),
                    Fill::Zeros => Tensor::zeros(shape),
                    Fill::Ones => Tensor::full(shape, 1.0),
                };
                Ok(store.add(name, t))
            }
            ParamBuilder::Load { store } => {
                let id = store
                    .find(name)
                    .ok_or_else(|| invalid(format!("missing parameter {name}")))?;
                if store.get(id).shape() != shape {
                    return Err(invalid(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        store.get(id).shape()
                    )));
                }
                Ok(id)
            }
        }
    }
}

/// Weight and bias of a fully connected layer.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn build(b: &mut ParamBuilder<'_>, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Self {
            weight: b.param(&format!("{name}.weight"), &[fan_in, fan_out], Fill::Normal)?,
            bias: b.param(&format!("{name}.bias"), &[fan_out], Fill::Zeros)?,
        })
    }
}
