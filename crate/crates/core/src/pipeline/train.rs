//! Mini-batch training of the Siamese model on the combined objective.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{AlignmentSource, GazeTargets, SiameseModel};
use crate::objectives::LossWeights;
use crate::tape::Tape;
use crate::vit::checkpoint::save_checkpoint;
use crate::vit::{ModelConfig, ParamStore};

use super::evaluate::pair_terms;
use super::optim::{AdamW, AdamWConfig, ScheduleConfig, WarmupCosine};
use super::prepare::PreparedData;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const DIVERGENCE_FILE: &str = "divergence.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub early_stop_patience: usize,
    /// Seeds both weight initialization and batch order.
    pub seed: u64,
    pub loss: LossWeights,
    pub source: AlignmentSource,
    /// Measure train-split accuracy after every epoch.
    pub track_train_accuracy: bool,
    /// Stop as soon as both train accuracies reach 1.
    pub stop_when_train_perfect: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_epochs: 100,
            optimizer: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            early_stop_patience: 3,
            seed: 0,
            loss: LossWeights::default(),
            source: AlignmentSource::Raw,
            track_train_accuracy: true,
            stop_when_train_perfect: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(invalid("batch_size, max_epochs and early_stop_patience must be positive"));
        }
        self.optimizer.validate()?;
        self.loss.validate()
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean batch objective.
    pub train_loss: f64,
    pub train_cls: f64,
    pub train_rank: f64,
    /// Mean alignment loss over gaze-supervised pairs.
    pub train_attn: Option<f64>,
    pub train_class_acc: Option<f64>,
    pub train_rank_acc: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_class_acc: Option<f64>,
    pub val_rank_acc: Option<f64>,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation model, or the final one without a validation split.
    pub model: SiameseModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Output locations of a training run.
#[derive(Clone, Debug)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn log(&self) -> PathBuf {
        self.0.join(LOG_FILE)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.0.join(CHECKPOINT_DIR)
    }

    pub fn divergence(&self) -> PathBuf {
        self.0.join(DIVERGENCE_FILE)
    }
}

#[derive(Serialize)]
struct ParamSummary {
    name: String,
    l2: f64,
    finite: bool,
}

#[derive(Serialize)]
struct DivergenceDump<'a> {
    epoch: usize,
    step: usize,
    pair_id: &'a str,
    lr: f64,
    cls: f64,
    rank: f64,
    attn: Option<f64>,
    params: Vec<ParamSummary>,
}

fn summarize(params: &ParamStore) -> Vec<ParamSummary> {
    params
        .iter()
        .map(|(name, t)| ParamSummary {
            name: name.to_string(),
            l2: t.data().iter().map(|v| v * v).sum::<f64>().sqrt(),
            finite: t.is_finite(),
        })
        .collect()
}

#[derive(Default)]
struct Split {
    loss: f64,
    class_acc: f64,
    rank_acc: f64,
}

fn measure(model: &SiameseModel, data: &PreparedData, indices: &[usize], config: &TrainConfig) -> Result<Split> {
    let mut s = Split::default();
    for &i in indices {
        let (pred, terms) = pair_terms(model, data, i, &config.loss, config.source)?;
        s.loss += terms.total;
        s.class_acc += f64::from(u8::from(pred.class_correct));
        s.rank_acc += f64::from(u8::from(pred.rank_correct));
    }
    let n = indices.len() as f64;
    Ok(Split {
        loss: s.loss / n,
        class_acc: s.class_acc / n,
        rank_acc: s.rank_acc / n,
    })
}

/// Trains a fresh model on `train` pairs with early stopping on `val`.
/// Everything is single-threaded with a fixed reduction order, so a seed
/// fixes the result bit for bit. With `out`, the log, best checkpoint and
/// any divergence dump are written there.
pub fn train(
    data: &PreparedData,
    train_idx: &[usize],
    val_idx: &[usize],
    model_config: &ModelConfig,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_idx.is_empty() {
        return Err(invalid("training split is empty"));
    }
    let mut model = SiameseModel::new(model_config, config.seed)?;
    for &i in train_idx.iter().chain(val_idx) {
        let (_, l, r) = data.pair(i);
        model.check_image(l)?;
        model.check_image(r)?;
    }
    let run = out.map(|p| RunDir(p.to_path_buf()));
    let mut log_file = match &run {
        Some(r) => {
            fs::create_dir_all(&r.0)?;
            Some(BufWriter::new(File::create(r.log())?))
        }
        None => None,
    };

    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let schedule = WarmupCosine::new(config.optimizer.lr, &config.schedule, steps_per_epoch * config.max_epochs)?;
    let mut opt = AdamW::new(config.optimizer, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = train_idx.to_vec();
    let w = config.loss;

    let mut best: Option<(f64, ParamStore)> = None;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut stopped_early = false;
    let mut step = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum_obj, mut sum_cls, mut sum_rank, mut sum_attn, mut n_attn) = (0.0, 0.0, 0.0, 0.0, 0usize);
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            lr = schedule.lr(step);
            let b = batch.len() as f64;
            let supervised = |i: usize| {
                data.pairs[i].gaze.is_some() && config.source != AlignmentSource::None && w.lambda_gaze != 0.0
            };
            let g = batch.iter().filter(|&&i| supervised(i)).count() as f64;
            model.params.zero_grad();
            let mut batch_obj = 0.0;
            for &i in batch {
                let (pair, left, right) = data.pair(i);
                let mut tape = Tape::new();
                let params = model.bind(&mut tape);
                let fwd = model.forward_pair(&mut tape, &params, left, right)?;
                let targets = pair.gaze.as_ref().map(|g| GazeTargets {
                    left: &g.left.patch.values,
                    right: &g.right.patch.values,
                });
                let loss = model.pair_loss(&mut tape, &fwd, pair.label, &w, config.source, targets)?;
                let cls = tape.value(loss.cls).item()?;
                let rank = tape.value(loss.rank).item()?;
                let attn = loss.attn.map(|a| tape.value(a).item()).transpose()?;
                if !(cls.is_finite() && rank.is_finite() && attn.is_none_or(f64::is_finite)) {
                    let total = cls + w.lambda_rank * rank + w.lambda_gaze * attn.unwrap_or(0.0);
                    if let Some(r) = &run {
                        let dump = DivergenceDump {
                            epoch,
                            step,
                            pair_id: &pair.pair_id,
                            lr,
                            cls,
                            rank,
                            attn,
                            params: summarize(&model.params),
                        };
                        fs::write(r.divergence(), serde_json::to_string_pretty(&dump)?)?;
                    }
                    log::error!("non-finite loss on pair {} at epoch {epoch}, step {step}", pair.pair_id);
                    return Err(Error::Diverged { epoch, step, loss: total });
                }
                let mut obj = tape.scale(loss.cls, 1.0 / b);
                let r = tape.scale(loss.rank, w.lambda_rank / b);
                obj = tape.add(obj, r)?;
                let mut obj_value = (cls + w.lambda_rank * rank) / b;
                if let Some(a) = loss.attn {
                    let term = tape.scale(a, w.lambda_gaze / g);
                    obj = tape.add(obj, term)?;
                    obj_value += w.lambda_gaze * attn.unwrap_or(0.0) / g;
                    sum_attn += attn.unwrap_or(0.0);
                    n_attn += 1;
                }
                tape.backward(obj)?;
                model.params.accumulate_grads(&tape, &params)?;
                batch_obj += obj_value;
                sum_cls += cls;
                sum_rank += rank;
            }
            opt.step(&mut model.params, lr);
            if model.params.iter().any(|(_, t)| !t.is_finite()) {
                if let Some(r) = &run {
                    let dump = serde_json::json!({ "epoch": epoch, "step": step, "lr": lr, "params": summarize(&model.params) });
                    fs::write(r.divergence(), serde_json::to_string_pretty(&dump)?)?;
                }
                return Err(Error::Diverged { epoch, step, loss: batch_obj });
            }
            sum_obj += batch_obj;
            step += 1;
        }

        let n = train_idx.len() as f64;
        let mut record = EpochRecord {
            epoch,
            steps: step,
            lr,
            train_loss: sum_obj / steps_per_epoch as f64,
            train_cls: sum_cls / n,
            train_rank: sum_rank / n,
            train_attn: (n_attn > 0).then(|| sum_attn / n_attn as f64),
            train_class_acc: None,
            train_rank_acc: None,
            val_loss: None,
            val_class_acc: None,
            val_rank_acc: None,
            best: false,
        };
        let mut perfect = false;
        if config.track_train_accuracy || config.stop_when_train_perfect {
            let t = measure(&model, data, train_idx, config)?;
            record.train_class_acc = Some(t.class_acc);
            record.train_rank_acc = Some(t.rank_acc);
            perfect = t.class_acc == 1.0 && t.rank_acc == 1.0;
        }
        let mut stop = false;
        if val_idx.is_empty() {
            record.best = true;
            best_epoch = epoch;
        } else {
            let v = measure(&model, data, val_idx, config)?;
            record.val_loss = Some(v.loss);
            record.val_class_acc = Some(v.class_acc);
            record.val_rank_acc = Some(v.rank_acc);
            if best.as_ref().is_none_or(|(b, _)| v.loss < *b) {
                best = Some((v.loss, model.params.clone()));
                best_epoch = epoch;
                since_best = 0;
                record.best = true;
            } else {
                since_best += 1;
                stop = since_best >= config.early_stop_patience;
            }
        }
        log::info!(
            "epoch {epoch}: loss {:.5} lr {lr:.2e} val {:?}",
            record.train_loss,
            record.val_loss
        );
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &record)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        log.push(record);
        if stop || (config.stop_when_train_perfect && perfect) {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    if let Some((_, params)) = best {
        model.params.copy_values_from(&params)?;
    }
    model.params.zero_grad();
    if let Some(r) = &run {
        save_checkpoint(&model, &r.checkpoint())?;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        stopped_early,
    })
}
