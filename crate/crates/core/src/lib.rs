//! Gaze-guided pairwise perception learning.
//!
//! The crate covers the whole offline pipeline: a small reverse-mode
//! autodiff engine ([`tape`]), gaze processing ([`gaze`]), a Siamese Vision
//! Transformer with attention capture ([`vit`], [`model`]), pairwise and
//! alignment objectives ([`objectives`]), saliency metrics ([`metrics`]),
//! training and evaluation ([`pipeline`]) and the annotation service core
//! ([`annotation`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod annotation;
pub mod error;
pub mod gaze;
pub mod heads;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod pipeline;
pub mod tape;
pub mod tensor;
pub mod vit;

pub use error::{Error, Result};
pub use gaze::{FixationEvent, GazeSample, SaliencyGrid, TrialLayout};
pub use imaging::Image;
pub use metrics::{FixationPointSet, MetricReport, MetricValues};
pub use model::{AlignmentSource, SiameseModel};
pub use objectives::{Label, LossWeights, PairLogits, ScorePair};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use vit::{AttentionStack, MapSource, ModelConfig, PatchAttentionMap};
