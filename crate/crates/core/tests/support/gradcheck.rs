//! Central finite-difference check of every parameter of a Siamese model.
//!
//! Each perturbed evaluation reuses activations that the perturbed
//! parameter cannot affect: heads reuse the encoder outputs, layer `l`
//! reuses the input to layer `l`.

#![allow(clippy::needless_range_loop)]

use gazerank_core::model::{AlignmentSource, EncodedImage, GazeTargets, PairForward};
use gazerank_core::vit::{EncoderOutput, TokenSequence};
use gazerank_core::{Image, Label, LossWeights, SiameseModel, Tape, Tensor};

/// Loss variants: no gaze, gaze on raw attention, gaze on rollout.
pub const VARIANTS: [(&str, AlignmentSource, bool); 3] = [
    ("has_gaze=false", AlignmentSource::Raw, false),
    ("has_gaze=true/raw", AlignmentSource::Raw, true),
    ("has_gaze=true/rollout", AlignmentSource::Rollout, true),
];

pub struct Problem<'a> {
    pub left: &'a Image,
    pub right: &'a Image,
    pub gaze_left: &'a [f64],
    pub gaze_right: &'a [f64],
    pub label: Label,
    pub weights: LossWeights,
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub variant: &'static str,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub scalars_checked: usize,
    pub max_rel_err: [f64; 3],
    pub failures: Vec<Mismatch>,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn gaze<'a>(p: &Problem<'a>, on: bool) -> Option<GazeTargets<'a>> {
    on.then_some(GazeTargets {
        left: p.gaze_left,
        right: p.gaze_right,
    })
}

fn totals(model: &SiameseModel, tape: &mut Tape, fwd: &PairForward, p: &Problem<'_>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, (_, source, has_gaze)) in VARIANTS.iter().enumerate() {
        let loss = model
            .pair_loss(tape, fwd, p.label, &p.weights, *source, gaze(p, *has_gaze))
            .unwrap();
        out[i] = tape.value(loss.total).item().unwrap();
    }
    out
}

pub fn analytic_grads(model: &SiameseModel, p: &Problem<'_>) -> [Vec<Vec<f64>>; 3] {
    let mut out: [Vec<Vec<f64>>; 3] = Default::default();
    for (i, (_, source, has_gaze)) in VARIANTS.iter().enumerate() {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape);
        let fwd = model.forward_pair(&mut tape, &params, p.left, p.right).unwrap();
        let loss = model
            .pair_loss(&mut tape, &fwd, p.label, &p.weights, *source, gaze(p, *has_gaze))
            .unwrap();
        tape.backward(loss.total).unwrap();
        out[i] = params
            .vars()
            .iter()
            .zip(model.params.iter())
            .map(|(v, (_, t))| tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
    }
    out
}

/// Cached per-image activations: inputs to each layer, the final tokens and
/// the captured attention.
struct ImageCache {
    layer_inputs: Vec<Tensor>,
    final_tokens: Tensor,
    attention: Vec<Tensor>,
}

fn cache_image(model: &SiameseModel, image: &Image) -> ImageCache {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let seq = model.encoder.embed(&mut tape, &params, image).unwrap();
    let mut x = seq.tokens;
    let mut layer_inputs = Vec::new();
    let mut attention = Vec::new();
    for l in 0..model.encoder.layers.len() {
        layer_inputs.push(tape.value(x).clone());
        let out = model.encoder.layer_forward(&mut tape, &params, l, x).unwrap();
        attention.push(tape.value(out.attention).clone());
        x = out.tokens;
    }
    ImageCache {
        layer_inputs,
        final_tokens: tape.value(x).clone(),
        attention,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stage {
    Embed,
    Layer(usize),
    Heads,
}

fn stage_of(name: &str) -> Stage {
    if name.starts_with("head.") {
        return Stage::Heads;
    }
    if let Some(rest) = name.strip_prefix("encoder.layers.") {
        let l = rest.split('.').next().unwrap().parse().unwrap();
        return Stage::Layer(l);
    }
    Stage::Embed
}

fn encode_from(
    model: &SiameseModel,
    tape: &mut Tape,
    params: &gazerank_core::vit::Binding,
    image: &Image,
    cache: &ImageCache,
    stage: Stage,
) -> EncodedImage {
    let depth = model.encoder.layers.len();
    let (mut x, start) = match stage {
        Stage::Embed => (model.encoder.embed(tape, params, image).unwrap().tokens, 0),
        Stage::Layer(l) => (tape.constant(cache.layer_inputs[l].clone()), l),
        Stage::Heads => (tape.constant(cache.final_tokens.clone()), depth),
    };
    let mut attention: Vec<_> = cache.attention[..start].iter().map(|a| tape.constant(a.clone())).collect();
    for l in start..depth {
        let out = model.encoder.layer_forward(tape, params, l, x).unwrap();
        attention.push(out.attention);
        x = out.tokens;
    }
    let output = EncoderOutput {
        tokens: TokenSequence { tokens: x },
        attention,
        head_attention: Vec::new(),
    };
    let descriptor = gazerank_core::vit::cls_descriptor(tape, &output.tokens).unwrap();
    EncodedImage { output, descriptor }
}

fn perturbed_totals(model: &SiameseModel, p: &Problem<'_>, caches: &[ImageCache; 2], stage: Stage) -> [f64; 3] {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let left = encode_from(model, &mut tape, &params, p.left, &caches[0], stage);
    let right = encode_from(model, &mut tape, &params, p.right, &caches[1], stage);
    let probs = model
        .classifier
        .classify(&mut tape, &params, left.descriptor, right.descriptor)
        .unwrap();
    let score_left = model.scorer.score(&mut tape, &params, left.descriptor).unwrap();
    let score_right = model.scorer.score(&mut tape, &params, right.descriptor).unwrap();
    let fwd = PairForward {
        left,
        right,
        probs,
        score_left,
        score_right,
    };
    totals(model, &mut tape, &fwd, p)
}

/// Checks every scalar parameter with step `h`; mismatches above `tol`
/// (relative, with denominator floor `floor`) are collected.
pub fn check_all(model: &mut SiameseModel, p: &Problem<'_>, h: f64, tol: f64, floor: f64) -> Report {
    let analytic = analytic_grads(model, p);
    let caches = [cache_image(model, p.left), cache_image(model, p.right)];
    let mut report = Report::default();
    let ids: Vec<_> = model.params.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let name = model.params.name(id).to_string();
        let stage = stage_of(&name);
        for k in 0..model.params.get(id).numel() {
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + h;
            let plus = perturbed_totals(model, p, &caches, stage);
            model.params.get_mut(id).data_mut()[k] = orig - h;
            let minus = perturbed_totals(model, p, &caches, stage);
            model.params.get_mut(id).data_mut()[k] = orig;
            for v in 0..3 {
                let numeric = (plus[v] - minus[v]) / (2.0 * h);
                let a = analytic[v][pi][k];
                let e = rel_err(a, numeric, floor);
                report.max_rel_err[v] = report.max_rel_err[v].max(e);
                if e >= tol {
                    report.failures.push(Mismatch {
                        variant: VARIANTS[v].0,
                        param: name.clone(),
                        index: k,
                        analytic: a,
                        numeric,
                        rel_err: e,
                    });
                }
            }
            report.scalars_checked += 1;
        }
    }
    report
}
