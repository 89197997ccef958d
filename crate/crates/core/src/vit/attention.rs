//! Attention capture and CLS-to-patch attention maps.
//!
//! Both extraction methods exist twice: on plain [`Tensor`] values for
//! analysis, and as tape operations so the alignment loss can back-propagate
//! through them. The two routes are checked against each other in tests.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which extraction produced a [`PatchAttentionMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Raw,
    Rollout,
}

impl MapSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MapSource::Raw => "raw",
            MapSource::Rollout => "rollout",
        }
    }
}

/// Head-averaged attention matrices, one `(N+1)×(N+1)` per layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionStack {
    pub layers: Vec<Tensor>,
}

/// A probability vector over the `N` patch locations.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchAttentionMap {
    pub weights: Vec<f64>,
    pub source: MapSource,
}

fn cls_patch_distribution(cls_row: &[f64], source: MapSource) -> PatchAttentionMap {
    let patches = &cls_row[1..];
    let total: f64 = patches.iter().sum();
    PatchAttentionMap {
        weights: patches.iter().map(|v| v / total).collect(),
        source,
    }
}

/// CLS row of the final layer with the CLS→CLS entry removed and the patch
/// entries renormalized.
pub fn raw_attention(stack: &AttentionStack) -> Result<PatchAttentionMap> {
    let last = stack
        .layers
        .last()
        .ok_or_else(|| invalid("raw attention needs at least one layer"))?;
    let (_, t) = last.dims2()?;
    if t < 2 {
        return Err(invalid("attention matrix has no patch tokens"));
    }
    Ok(cls_patch_distribution(last.row(0), MapSource::Raw))
}

/// Residual-adjusted, row-normalized attention `Ã = rownorm(Ā + I)`.
pub fn residual_adjusted(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(invalid("attention matrix must be square"));
    }
    let mut out = a.clone();
    out.set_requires_grad(false);
    let d = out.data_mut();
    for i in 0..r {
        d[i * c + i] += 1.0;
        let s: f64 = d[i * c..(i + 1) * c].iter().sum();
        d[i * c..(i + 1) * c].iter_mut().for_each(|v| *v /= s);
    }
    Ok(out)
}

/// Full rollout matrix `R = Ã⁽¹⁾·Ã⁽²⁾·…·Ã⁽ᴸ⁾`.
pub fn rollout_matrix(stack: &AttentionStack) -> Result<Tensor> {
    let first = stack
        .layers
        .first()
        .ok_or_else(|| invalid("rollout needs at least one layer"))?;
    let (t, _) = first.dims2()?;
    let mut r = Tensor::identity(t);
    for layer in &stack.layers {
        let a = residual_adjusted(layer)?;
        let mut next = vec![0.0; t * t];
        for i in 0..t {
            for k in 0..t {
                let rik = r.data()[i * t + k];
                if rik == 0.0 {
                    continue;
                }
                for j in 0..t {
                    next[i * t + j] += rik * a.data()[k * t + j];
                }
            }
        }
        r = Tensor::new(vec![t, t], next)?;
    }
    Ok(r)
}

/// CLS row of the rollout matrix, restricted to patches and renormalized.
pub fn rollout(stack: &AttentionStack) -> Result<PatchAttentionMap> {
    let r = rollout_matrix(stack)?;
    if r.dims2()?.1 < 2 {
        return Err(invalid("attention matrix has no patch tokens"));
    }
    Ok(cls_patch_distribution(r.row(0), MapSource::Rollout))
}

/// Extracts a patch map from a stack using `source`.
pub fn extract(stack: &AttentionStack, source: MapSource) -> Result<PatchAttentionMap> {
    match source {
        MapSource::Raw => raw_attention(stack),
        MapSource::Rollout => rollout(stack),
    }
}

fn cls_patches_var(tape: &mut Tape, cls_row: Var) -> Result<Var> {
    let t = tape.shape(cls_row)[1];
    if t < 2 {
        return Err(invalid("attention matrix has no patch tokens"));
    }
    let patches = tape.slice_cols(cls_row, 1, t)?;
    tape.row_normalize(patches)
}

/// Tape version of [`raw_attention`]; returns a `1×N` row.
pub fn raw_attention_var(tape: &mut Tape, layers: &[Var]) -> Result<Var> {
    let last = *layers
        .last()
        .ok_or_else(|| invalid("raw attention needs at least one layer"))?;
    let row = tape.slice_rows(last, 0, 1)?;
    cls_patches_var(tape, row)
}

/// Tape version of [`rollout`]; propagates `e₁ᵀ·Ã⁽¹⁾·…·Ã⁽ᴸ⁾` as a row
/// vector, which avoids forming the full product.
pub fn rollout_var(tape: &mut Tape, layers: &[Var]) -> Result<Var> {
    let first = *layers
        .first()
        .ok_or_else(|| invalid("rollout needs at least one layer"))?;
    let t = tape.shape(first)[0];
    let eye = tape.constant(Tensor::identity(t));
    let mut e1 = Tensor::zeros(&[1, t]);
    e1.data_mut()[0] = 1.0;
    let mut row = tape.constant(e1);
    for &layer in layers {
        let shifted = tape.add(layer, eye)?;
        let adjusted = tape.row_normalize(shifted)?;
        row = tape.matmul(row, adjusted)?;
    }
    cls_patches_var(tape, row)
}

pub fn extract_var(tape: &mut Tape, layers: &[Var], source: MapSource) -> Result<Var> {
    match source {
        MapSource::Raw => raw_attention_var(tape, layers),
        MapSource::Rollout => rollout_var(tape, layers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(rng: &mut ChaCha8Rng, t: usize) -> Tensor {
        let mut data: Vec<f64> = (0..t * t).map(|_| rng.gen_range(0.01..1.0)).collect();
        for row in data.chunks_mut(t) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Tensor::new(vec![t, t], data).unwrap()
    }

    #[test]
    fn raw_renormalizes_patch_entries() {
        let a = Tensor::from_rows(&[vec![0.2, 0.4, 0.4], vec![0.1, 0.8, 0.1], vec![0.3, 0.3, 0.4]]).unwrap();
        let m = raw_attention(&AttentionStack { layers: vec![a] }).unwrap();
        assert_eq!(m.weights, vec![0.5, 0.5]);
        assert_eq!(m.source, MapSource::Raw);
    }

    #[test]
    fn uniform_attention_gives_uniform_maps() {
        let t = 5;
        let u = Tensor::full(&[t, t], 1.0 / t as f64);
        let stack = AttentionStack { layers: vec![u.clone(), u.clone(), u] };
        for m in [raw_attention(&stack).unwrap(), rollout(&stack).unwrap()] {
            assert!(m.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn hand_multiplied_two_by_two_rollout() {
        let a = Tensor::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let adj = residual_adjusted(&a).unwrap();
        let expected = [0.8, 0.2, 0.15, 0.85];
        for (x, y) in adj.data().iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        let stack = AttentionStack { layers: vec![a] };
        let r = rollout_matrix(&stack).unwrap();
        assert!((r.data()[1] - 0.2).abs() < 1e-15);
        assert_eq!(rollout(&stack).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn empty_stack_is_rejected() {
        let empty = AttentionStack::default();
        assert!(raw_attention(&empty).is_err());
        assert!(rollout(&empty).is_err());
        let mut tape = Tape::new();
        assert!(raw_attention_var(&mut tape, &[]).is_err());
        assert!(rollout_var(&mut tape, &[]).is_err());
    }

    #[test]
    fn raw_sums_to_one_over_random_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = rng.gen_range(2..12);
            let stack = AttentionStack { layers: vec![random_stochastic(&mut rng, t)] };
            let m = raw_attention(&stack).unwrap();
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_matrix_stays_row_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = rng.gen_range(2..10);
            let layers = (0..rng.gen_range(1..5)).map(|_| random_stochastic(&mut rng, t)).collect();
            let r = rollout_matrix(&AttentionStack { layers }).unwrap();
            for i in 0..t {
                assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tape_and_value_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = rng.gen_range(2..9);
            let layers: Vec<Tensor> = (0..rng.gen_range(1..4)).map(|_| random_stochastic(&mut rng, t)).collect();
            let stack = AttentionStack { layers: layers.clone() };
            let mut tape = Tape::new();
            let vars: Vec<Var> = layers.into_iter().map(|l| tape.constant(l)).collect();
            for source in [MapSource::Raw, MapSource::Rollout] {
                let v = extract_var(&mut tape, &vars, source).unwrap();
                let m = extract(&stack, source).unwrap();
                for (a, b) in tape.value(v).data().iter().zip(&m.weights) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
