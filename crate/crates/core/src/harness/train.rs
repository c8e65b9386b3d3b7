use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::checkpoint::save_checkpoint;
use crate::harness::config::{EvalMaskMode, TrainConfig};
use crate::harness::data::{load_split, prepare_clips, PreparedClip};
use crate::harness::eval::evaluate_prepared;
use crate::harness::metrics::AucValue;
use crate::harness::optim::Sgd;
use crate::harness::schedule::cosine_lr;
use crate::model::{FusionModel, SampleTokens};
use crate::synth::Split;
use crate::video::{mix_seed, sample_tube_mask};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const MASK_STREAM: u64 = 0x4d41_534b;
const DROP_STREAM: u64 = 0x4452_4f50;

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    /// Held-out metrics of the freshly initialised model.
    Init {
        val_auc: Option<AucValue>,
        val_l_rec: Option<f64>,
    },
    Step {
        step: usize,
        epoch: usize,
        lr: f64,
        l_cls: f64,
        l_rec: f64,
        l_total: f64,
    },
    /// Means over the epoch's steps plus held-out metrics after the epoch.
    Epoch {
        epoch: usize,
        l_cls: f64,
        l_rec: f64,
        l_total: f64,
        val_auc: Option<AucValue>,
        val_l_rec: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub log: Vec<LogRecord>,
}

impl TrainOutcome {
    pub fn steps(&self) -> usize {
        self.log.iter().filter(|r| matches!(r, LogRecord::Step { .. })).count()
    }

    pub fn log_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.log {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Held-out reconstruction loss before the first step.
    pub fn initial_val_l_rec(&self) -> Option<f64> {
        self.log.iter().find_map(|r| match r {
            LogRecord::Init { val_l_rec, .. } => *val_l_rec,
            _ => None,
        })
    }

    /// Held-out reconstruction loss after the last epoch.
    pub fn final_val_l_rec(&self) -> Option<f64> {
        self.log.iter().rev().find_map(|r| match r {
            LogRecord::Epoch { val_l_rec, .. } => Some(*val_l_rec),
            _ => None,
        })?
    }
}

pub fn steps_per_epoch(clips: usize, batch_size: usize) -> usize {
    clips.div_ceil(batch_size)
}

fn validation(model: &FusionModel, config: &TrainConfig, val: &[PreparedClip]) -> Result<(Option<AucValue>, Option<f64>)> {
    if val.is_empty() {
        return Ok((None, None));
    }
    let masked = evaluate_prepared(
        model,
        val,
        config.mask_ratio,
        EvalMaskMode::TrainingRatioDeterministic,
        config.rec_normalization,
    )?;
    let auc = match config.eval_mask_mode {
        EvalMaskMode::TrainingRatioDeterministic => masked.auc,
        mode => evaluate_prepared(model, val, config.mask_ratio, mode, config.rec_normalization)?.auc,
    };
    Ok((Some(auc), masked.l_rec))
}

/// Trains a fresh model on prepared clips.
///
/// Everything random derives from `config.seed`: initialisation, the
/// per-epoch shuffle, the per-step tube masks and drop-path draws.
pub fn train(config: &TrainConfig, train_set: &[PreparedClip], val: &[PreparedClip]) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("the training set is empty".into()));
    }
    let model_config = config.model_config()?;
    let geometry = model_config.geometry;
    for clip in train_set.iter().chain(val) {
        if clip.tokens.primary.shape() != (geometry.num_tokens(), geometry.token_dim()) {
            return Err(Error::Config(format!(
                "clip `{}` does not match the configured geometry",
                clip.record.id
            )));
        }
    }
    let mut model = FusionModel::new(model_config, config.seed)?;
    let mut optimizer = Sgd::new(model.params(), config.momentum, config.weight_decay);
    let per_epoch = steps_per_epoch(train_set.len(), config.batch_size);
    let total_steps = config.epochs * per_epoch;

    let mut log = Vec::new();
    let (val_auc, val_l_rec) = validation(&model, config, val)?;
    log.push(LogRecord::Init { val_auc, val_l_rec });

    let mut step = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ SHUFFLE_STREAM, epoch as u64));
        order.shuffle(&mut rng);
        let (mut sum_cls, mut sum_rec, mut sum_total) = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<SampleTokens> = batch.iter().map(|&i| train_set[i].tokens.clone()).collect();
            let ids: Vec<u64> = (0..samples.len() as u64).collect();
            let mask = sample_tube_mask(&geometry, config.mask_ratio, mix_seed(config.seed ^ MASK_STREAM, step as u64), &ids)?;
            let drop_seed = mix_seed(config.seed ^ DROP_STREAM, step as u64);
            let (report, grads) =
                model.loss_and_grads(&samples, &mask, config.lambda, config.rec_normalization, Some(drop_seed))?;
            let lr = cosine_lr(step, total_steps, config.lr_start, config.lr_min)?;
            optimizer.step(model.params_mut(), &grads, lr);
            if !report.l_total.is_finite() {
                return Err(Error::Parameter(format!("loss diverged at step {step}")));
            }
            log.push(LogRecord::Step {
                step,
                epoch,
                lr,
                l_cls: report.l_cls,
                l_rec: report.l_rec,
                l_total: report.l_total,
            });
            sum_cls += report.l_cls;
            sum_rec += report.l_rec;
            sum_total += report.l_total;
            step += 1;
        }
        let n = per_epoch as f64;
        let (val_auc, val_l_rec) = validation(&model, config, val)?;
        log.push(LogRecord::Epoch {
            epoch,
            l_cls: sum_cls / n,
            l_rec: sum_rec / n,
            l_total: sum_total / n,
            val_auc,
            val_l_rec,
        });
    }
    Ok(TrainOutcome { model, log })
}

/// Paths written by [`train_from_manifest`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.fsck";
pub const LOG_FILE: &str = "train_log.jsonl";

/// Trains on the manifest's train split and validates on its val split,
/// both restricted to `config.train_domain` when set, then writes the
/// checkpoint and log into `out_dir`.
pub fn train_from_manifest(config: &TrainConfig, manifest: &Path, out_dir: &Path) -> Result<(TrainOutcome, TrainArtifacts)> {
    config.validate()?;
    let geometry = config.geometry()?;
    let domain = config.train_domain.as_deref();
    let train_clips = load_split(manifest, Split::Train, domain, &geometry)?;
    let val_clips = load_split(manifest, Split::Val, domain, &geometry)?;
    let train_set = prepare_clips(&train_clips, config.modality_pair, &geometry)?;
    let val_set = prepare_clips(&val_clips, config.modality_pair, &geometry)?;
    let outcome = train(config, &train_set, &val_set)?;
    let artifacts = write_artifacts(config, &outcome, out_dir)?;
    Ok((outcome, artifacts))
}

pub fn write_artifacts(config: &TrainConfig, outcome: &TrainOutcome, out_dir: &Path) -> Result<TrainArtifacts> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let artifacts = TrainArtifacts {
        checkpoint: out_dir.join(CHECKPOINT_FILE),
        log: out_dir.join(LOG_FILE),
    };
    save_checkpoint(&artifacts.checkpoint, config, &outcome.model)?;
    let mut f = fs::File::create(&artifacts.log).map_err(|e| Error::io(&artifacts.log, e))?;
    f.write_all(outcome.log_jsonl()?.as_bytes())
        .map_err(|e| Error::io(&artifacts.log, e))?;
    Ok(artifacts)
}
