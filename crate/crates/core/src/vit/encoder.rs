//! Patch tokenization and the pre-norm transformer encoder.

use crate::error::{invalid, Result};
use crate::imaging::Image;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::attention::AttentionStack;
use super::builder::{Fill, Linear, ParamBuilder};
use super::config::{ModelConfig, PositionalEncoding};
use super::params::{Binding, ParamId};

/// `(N+1)×D` token matrix on a tape. Row 0 is the CLS token; rows `1..=N`
/// are patch tokens in row-major patch order.
#[derive(Clone, Copy, Debug)]
pub struct TokenSequence {
    pub tokens: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    fn build(b: &mut ParamBuilder<'_>, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: b.param(&format!("{name}.gain"), &[dim], Fill::Ones)?,
            bias: b.param(&format!("{name}.bias"), &[dim], Fill::Zeros)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm1: LayerNormParams,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: LayerNormParams,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Output of [`Encoder::encode`].
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub tokens: TokenSequence,
    /// Head-averaged attention `Ā⁽ˡ⁾`, one per layer.
    pub attention: Vec<Var>,
    /// Per-head attention, kept for diagnostics.
    pub head_attention: Vec<Vec<Var>>,
}

impl EncoderOutput {
    /// Copies the captured head-averaged matrices off the tape.
    pub fn attention_stack(&self, tape: &Tape) -> AttentionStack {
        AttentionStack {
            layers: self.attention.iter().map(|v| tape.value(*v).clone()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: ModelConfig,
    pub patch: Linear,
    pub cls_token: ParamId,
    pub pos_embed: Option<ParamId>,
    fixed_pos: Option<Tensor>,
    pub layers: Vec<EncoderLayer>,
}

/// Fixed sinusoidal table for `n` positions of width `d`.
pub fn sinusoidal_table(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, d]);
    for p in 0..n {
        for i in 0..d {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = p as f64 / freq;
            t.data_mut()[p * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

impl Encoder {
    pub(crate) fn build(config: &ModelConfig, b: &mut ParamBuilder<'_>) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let n = config.num_patches();
        let patch = Linear::build(b, "encoder.patch", config.patch_dim(), d)?;
        let cls_token = b.param("encoder.cls_token", &[1, d], Fill::Normal)?;
        let (pos_embed, fixed_pos) = match config.positional {
            PositionalEncoding::Learned => (Some(b.param("encoder.pos_embed", &[n, d], Fill::Normal)?), None),
            PositionalEncoding::Sinusoidal => (None, Some(sinusoidal_table(n, d))),
        };
        let hidden = d * config.mlp_ratio;
        let layers = (0..config.depth)
            .map(|l| {
                let p = format!("encoder.layers.{l}");
                Ok(EncoderLayer {
                    norm1: LayerNormParams::build(b, &format!("{p}.norm1"), d)?,
                    qkv: Linear::build(b, &format!("{p}.attn.qkv"), d, 3 * d)?,
                    proj: Linear::build(b, &format!("{p}.attn.proj"), d, d)?,
                    norm2: LayerNormParams::build(b, &format!("{p}.norm2"), d)?,
                    fc1: Linear::build(b, &format!("{p}.mlp.fc1"), d, hidden)?,
                    fc2: Linear::build(b, &format!("{p}.mlp.fc2"), hidden, d)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            patch,
            cls_token,
            pos_embed,
            fixed_pos,
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Flattens the image into an `N×(P·P·C)` matrix. Patches are in
    /// row-major order; each patch is flattened as `(dy, dx, c)`.
    pub fn patchify(&self, image: &Image) -> Result<Tensor> {
        let c = &self.config;
        if image.height != c.image_height || image.width != c.image_width || image.channels != c.channels {
            return Err(invalid(format!(
                "image is {}×{}×{}, model expects {}×{}×{}",
                image.height, image.width, image.channels, c.image_height, c.image_width, c.channels
            )));
        }
        let p = c.patch_size;
        let (rows, cols) = (c.grid_rows(), c.grid_cols());
        let mut out = Vec::with_capacity(c.num_patches() * c.patch_dim());
        for pr in 0..rows {
            for pc in 0..cols {
                for dy in 0..p {
                    let y = pr * p + dy;
                    let start = (y * image.width + pc * p) * image.channels;
                    out.extend_from_slice(&image.data[start..start + p * image.channels]);
                }
            }
        }
        Tensor::new(vec![rows * cols, c.patch_dim()], out)
    }

    /// Patch projection plus positional embedding, with the CLS token
    /// prepended.
    pub fn embed(&self, tape: &mut Tape, params: &Binding, image: &Image) -> Result<TokenSequence> {
        let patches = tape.constant(self.patchify(image)?);
        let proj = tape.matmul(patches, params.var(self.patch.weight))?;
        let proj = tape.add_bias(proj, params.var(self.patch.bias))?;
        let pos = match (self.pos_embed, &self.fixed_pos) {
            (Some(id), _) => params.var(id),
            (None, Some(table)) => tape.constant(table.clone()),
            (None, None) => unreachable!("encoder always has a positional encoding"),
        };
        let tokens = tape.add(proj, pos)?;
        let seq = tape.concat_rows(&[params.var(self.cls_token), tokens])?;
        Ok(TokenSequence { tokens: seq })
    }

    /// Runs all encoder layers, capturing head-averaged attention.
    pub fn encode(&self, tape: &mut Tape, params: &Binding, seq: TokenSequence) -> Result<EncoderOutput> {
        let mut x = seq.tokens;
        let mut attention = Vec::with_capacity(self.layers.len());
        let mut head_attention = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let out = self.layer_forward(tape, params, l, x)?;
            x = out.tokens;
            attention.push(out.attention);
            head_attention.push(out.head_attention);
        }
        Ok(EncoderOutput {
            tokens: TokenSequence { tokens: x },
            attention,
            head_attention,
        })
    }

    /// One pre-norm block: `x + Attn(LN(x))`, then `x + MLP(LN(x))`.
    pub fn layer_forward(&self, tape: &mut Tape, params: &Binding, index: usize, x: Var) -> Result<LayerOutput> {
        let cfg = &self.config;
        let layer = self
            .layers
            .get(index)
            .ok_or_else(|| invalid(format!("encoder has no layer {index}")))?;
        let d = cfg.embed_dim;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let eps = cfg.layer_norm_eps;

        let h = tape.layer_norm(x, params.var(layer.norm1.gain), params.var(layer.norm1.bias), eps)?;
        let qkv = tape.matmul(h, params.var(layer.qkv.weight))?;
        let qkv = tape.add_bias(qkv, params.var(layer.qkv.bias))?;
        let mut heads_out = Vec::with_capacity(cfg.heads);
        let mut heads_attn = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let q = tape.slice_cols(qkv, head * dh, (head + 1) * dh)?;
            let k = tape.slice_cols(qkv, d + head * dh, d + (head + 1) * dh)?;
            let v = tape.slice_cols(qkv, 2 * d + head * dh, 2 * d + (head + 1) * dh)?;
            let scores = tape.matmul_t(q, k)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax(scores, 1)?;
            heads_out.push(tape.matmul(a, v)?);
            heads_attn.push(a);
        }
        let mut sum = heads_attn[0];
        for &a in &heads_attn[1..] {
            sum = tape.add(sum, a)?;
        }
        let attention = tape.scale(sum, 1.0 / cfg.heads as f64);

        let merged = if heads_out.len() == 1 { heads_out[0] } else { tape.concat_cols(&heads_out)? };
        let o = tape.matmul(merged, params.var(layer.proj.weight))?;
        let o = tape.add_bias(o, params.var(layer.proj.bias))?;
        let x = tape.add(x, o)?;

        let h = tape.layer_norm(x, params.var(layer.norm2.gain), params.var(layer.norm2.bias), eps)?;
        let m = tape.matmul(h, params.var(layer.fc1.weight))?;
        let m = tape.add_bias(m, params.var(layer.fc1.bias))?;
        let m = tape.gelu(m);
        let m = tape.matmul(m, params.var(layer.fc2.weight))?;
        let m = tape.add_bias(m, params.var(layer.fc2.bias))?;
        Ok(LayerOutput {
            tokens: tape.add(x, m)?,
            attention,
            head_attention: heads_attn,
        })
    }
}

/// Output of a single encoder block.
#[derive(Clone, Debug)]
pub struct LayerOutput {
    pub tokens: Var,
    pub attention: Var,
    pub head_attention: Vec<Var>,
}

/// First row of the final token matrix, `1×D`.
pub fn cls_descriptor(tape: &mut Tape, z: &TokenSequence) -> Result<Var> {
    tape.slice_rows(z.tokens, 0, 1)
}
