//! Siamese ViT with classification and scoring heads.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::heads::{ClassifierHead, ScoreHead};
use crate::imaging::Image;
use crate::objectives::{
    attn_loss_var, cls_loss_var, rank_loss_var, total_loss_var, Label, LossWeights, PairLogits, ScorePair,
};
use crate::tape::{Tape, Var};
use crate::vit::attention::{extract_var, AttentionStack, MapSource};
use crate::vit::builder::ParamBuilder;
use crate::vit::config::ModelConfig;
use crate::vit::encoder::{cls_descriptor, Encoder, EncoderOutput};
use crate::vit::params::{Binding, Initializer, ParamStore};

/// Which attention map the alignment loss supervises, if any.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentSource {
    None,
    #[default]
    Raw,
    Rollout,
}

impl AlignmentSource {
    pub fn map_source(self) -> Option<MapSource> {
        match self {
            AlignmentSource::None => None,
            AlignmentSource::Raw => Some(MapSource::Raw),
            AlignmentSource::Rollout => Some(MapSource::Rollout),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SiameseModel {
    config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub classifier: ClassifierHead,
    pub scorer: ScoreHead,
}

/// One image through the shared encoder.
#[derive(Clone, Debug)]
pub struct EncodedImage {
    pub output: EncoderOutput,
    /// CLS descriptor `h`, `1×D`.
    pub descriptor: Var,
}

/// Forward pass over a pair, all values on one tape.
#[derive(Clone, Debug)]
pub struct PairForward {
    pub left: EncodedImage,
    pub right: EncodedImage,
    /// `1×2` probabilities (left safer, right safer).
    pub probs: Var,
    pub score_left: Var,
    pub score_right: Var,
}

impl PairForward {
    pub fn logits(&self, tape: &Tape) -> Result<PairLogits> {
        PairLogits::from_tensor(tape.value(self.probs))
    }

    pub fn scores(&self, tape: &Tape) -> Result<ScorePair> {
        Ok(ScorePair {
            s_left: tape.value(self.score_left).item()?,
            s_right: tape.value(self.score_right).item()?,
        })
    }
}

/// Gaze supervision for one pair: patch distributions for both sides.
#[derive(Clone, Copy, Debug)]
pub struct GazeTargets<'a> {
    pub left: &'a [f64],
    pub right: &'a [f64],
}

/// Scalar loss nodes recorded by [`SiameseModel::pair_loss`].
#[derive(Clone, Copy, Debug)]
pub struct PairLoss {
    pub total: Var,
    pub cls: Var,
    pub rank: Var,
    pub attn: Option<Var>,
}

impl SiameseModel {
    /// Fresh model with seeded truncated-normal weights and zero biases.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(seed, config.init_std);
        let mut b = ParamBuilder::Init {
            store: &mut params,
            init: &mut init,
        };
        let (encoder, classifier, scorer) = Self::build_parts(config, &mut b)?;
        Ok(Self {
            config: config.clone(),
            params,
            encoder,
            classifier,
            scorer,
        })
    }

    /// Rebuilds a model around existing parameters, resolved by name.
    pub fn from_params(config: &ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let (encoder, classifier, scorer) = {
            let mut b = ParamBuilder::Load { store: &params };
            Self::build_parts(config, &mut b)?
        };
        Ok(Self {
            config: config.clone(),
            params,
            encoder,
            classifier,
            scorer,
        })
    }

    fn build_parts(config: &ModelConfig, b: &mut ParamBuilder<'_>) -> Result<(Encoder, ClassifierHead, ScoreHead)> {
        let encoder = Encoder::build(config, b)?;
        let classifier = ClassifierHead::build(b, config.embed_dim, &config.cls_hidden_dims())?;
        let scorer = ScoreHead::build(b, config.embed_dim, &config.score_hidden_dims())?;
        Ok((encoder, classifier, scorer))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn bind(&self, tape: &mut Tape) -> Binding {
        self.params.bind(tape)
    }

    pub fn encode_image(&self, tape: &mut Tape, params: &Binding, image: &Image) -> Result<EncodedImage> {
        let seq = self.encoder.embed(tape, params, image)?;
        let output = self.encoder.encode(tape, params, seq)?;
        let descriptor = cls_descriptor(tape, &output.tokens)?;
        Ok(EncodedImage { output, descriptor })
    }

    /// Encodes both images with the same bound parameters and evaluates both
    /// heads.
    pub fn forward_pair(&self, tape: &mut Tape, params: &Binding, left: &Image, right: &Image) -> Result<PairForward> {
        let left = self.encode_image(tape, params, left)?;
        let right = self.encode_image(tape, params, right)?;
        let probs = self.classifier.classify(tape, params, left.descriptor, right.descriptor)?;
        let score_left = self.scorer.score(tape, params, left.descriptor)?;
        let score_right = self.scorer.score(tape, params, right.descriptor)?;
        Ok(PairForward {
            left,
            right,
            probs,
            score_left,
            score_right,
        })
    }

    /// Records the combined objective for one forward pass. The alignment
    /// branch is built only when gaze is present, a source is selected and
    /// `λ_gaze ≠ 0`.
    pub fn pair_loss(
        &self,
        tape: &mut Tape,
        fwd: &PairForward,
        y: Label,
        weights: &LossWeights,
        source: AlignmentSource,
        gaze: Option<GazeTargets<'_>>,
    ) -> Result<PairLoss> {
        let cls = cls_loss_var(tape, fwd.probs, y)?;
        let rank = rank_loss_var(tape, fwd.score_left, fwd.score_right, y, weights.gamma)?;
        let attn = match (gaze, source.map_source()) {
            (Some(g), Some(src)) if weights.lambda_gaze != 0.0 => {
                let ml = extract_var(tape, &fwd.left.output.attention, src)?;
                let mr = extract_var(tape, &fwd.right.output.attention, src)?;
                Some(attn_loss_var(tape, ml, mr, g.left, g.right)?)
            }
            _ => None,
        };
        let total = total_loss_var(tape, cls, rank, attn, weights, attn.is_some())?;
        Ok(PairLoss { total, cls, rank, attn })
    }

    /// Inference-only forward; returns logits, scores and both attention
    /// stacks.
    pub fn predict(&self, left: &Image, right: &Image) -> Result<Prediction> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let fwd = self.forward_pair(&mut tape, &params, left, right)?;
        Ok(Prediction {
            logits: fwd.logits(&tape)?,
            scores: fwd.scores(&tape)?,
            left_attention: fwd.left.output.attention_stack(&tape),
            right_attention: fwd.right.output.attention_stack(&tape),
        })
    }

    /// Attention stack of a single image.
    pub fn attention(&self, image: &Image) -> Result<AttentionStack> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let enc = self.encode_image(&mut tape, &params, image)?;
        Ok(enc.output.attention_stack(&tape))
    }

    pub fn check_image(&self, image: &Image) -> Result<()> {
        let c = &self.config;
        if (image.height, image.width, image.channels) != (c.image_height, c.image_width, c.channels) {
            return Err(invalid("image does not match model input shape"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: PairLogits,
    pub scores: ScorePair,
    pub left_attention: AttentionStack,
    pub right_attention: AttentionStack,
}
