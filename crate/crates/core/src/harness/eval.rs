use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::checkpoint::load_checkpoint;
use crate::harness::config::EvalMaskMode;
use crate::harness::data::{load_split, prepare_clips, PreparedClip};
use crate::harness::metrics::{auc, roc_points, AucValue};
use crate::harness::plot::{roc_svg, RocCurve};
use crate::model::FusionModel;
use crate::objectives::{fake_probabilities, RecNormalization};
use crate::synth::Split;
use crate::video::{sample_tube_mask, MaskSpec, PatchGeometry};

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// The evaluation mask of a clip: seeded from its id, so it is the same on
/// every run and independent of manifest order.
pub fn eval_mask(geometry: &PatchGeometry, ratio: f64, mode: EvalMaskMode, clip_id: &str) -> Result<MaskSpec> {
    match mode {
        EvalMaskMode::Unmasked => Ok(MaskSpec::empty(1, geometry.num_tokens())),
        EvalMaskMode::TrainingRatioDeterministic => {
            sample_tube_mask(geometry, ratio, fnv1a(clip_id.as_bytes()), &[0])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub domain: String,
    pub count: usize,
    pub auc: AucValue,
    pub roc: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Clip id to fake probability.
    pub scores: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, u8>,
    pub auc: AucValue,
    pub roc: Option<Vec<(f64, f64)>>,
    /// Per-domain results, sorted by domain name.
    pub partitions: Vec<PartitionResult>,
    /// Mean masked reconstruction loss; absent for unmasked evaluation.
    pub l_rec: Option<f64>,
}

fn score_set(scores: &[f64], labels: &[u8]) -> Result<(AucValue, Option<Vec<(f64, f64)>>)> {
    let value = AucValue::from_result(auc(scores, labels))?;
    let roc = match value {
        AucValue::Defined(_) => Some(roc_points(scores, labels)?),
        AucValue::Degenerate(_) => None,
    };
    Ok((value, roc))
}

/// Scores prepared clips in evaluation mode (no drop path).
pub fn evaluate_prepared(
    model: &FusionModel,
    clips: &[PreparedClip],
    mask_ratio: f64,
    mode: EvalMaskMode,
    normalization: RecNormalization,
) -> Result<EvalResult> {
    if clips.is_empty() {
        return Err(Error::DegenerateInput("nothing to evaluate".into()));
    }
    let geometry = *model.geometry();
    let mut scores = Vec::with_capacity(clips.len());
    let mut rec_total = 0.0;
    let mut rec_count = 0usize;
    for clip in clips {
        let mask = eval_mask(&geometry, mask_ratio, mode, &clip.record.id)?;
        let (logits, l_rec) = model.eval_sample(&clip.tokens, &mask, normalization)?;
        scores.push(fake_probabilities(&logits)[0]);
        if let Some(l) = l_rec {
            rec_total += l;
            rec_count += 1;
        }
    }
    let labels: Vec<u8> = clips.iter().map(|c| c.record.label).collect();
    let (overall, roc) = score_set(&scores, &labels)?;

    let mut by_domain: BTreeMap<&str, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for (clip, &s) in clips.iter().zip(&scores) {
        let entry = by_domain.entry(clip.record.domain.as_str()).or_default();
        entry.0.push(s);
        entry.1.push(clip.record.label);
    }
    let mut partitions = Vec::new();
    for (domain, (s, l)) in by_domain {
        let (value, roc) = score_set(&s, &l)?;
        partitions.push(PartitionResult {
            domain: domain.to_string(),
            count: s.len(),
            auc: value,
            roc,
        });
    }
    Ok(EvalResult {
        scores: clips.iter().zip(&scores).map(|(c, &s)| (c.record.id.clone(), s)).collect(),
        labels: clips.iter().map(|c| (c.record.id.clone(), c.record.label)).collect(),
        auc: overall,
        roc,
        partitions,
        l_rec: (rec_count > 0).then(|| rec_total / rec_count as f64),
    })
}

impl EvalResult {
    pub fn partition(&self, domain: &str) -> Option<&PartitionResult> {
        self.partitions.iter().find(|p| p.domain == domain)
    }

    /// Writes `eval.json` and `roc.svg` into `dir`.
    pub fn write_report(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("eval.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let svg = dir.join("roc.svg");
        fs::write(&svg, roc_svg("ROC", &self.curves())).map_err(|e| Error::io(&svg, e))
    }

    pub fn read_report(dir: &Path) -> Result<Self> {
        let json = dir.join("eval.json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The overall curve followed by one per domain; degenerate sets are
    /// skipped.
    pub fn curves(&self) -> Vec<RocCurve> {
        let mut curves = Vec::new();
        if let (Some(roc), AucValue::Defined(a)) = (&self.roc, self.auc) {
            curves.push(RocCurve::new(format!("all (AUC {a:.3})"), roc.clone()));
        }
        if self.partitions.len() > 1 {
            for p in &self.partitions {
                if let (Some(roc), AucValue::Defined(a)) = (&p.roc, p.auc) {
                    curves.push(RocCurve::new(format!("{} (AUC {a:.3})", p.domain), roc.clone()));
                }
            }
        }
        curves
    }
}

/// Loads a checkpoint and scores the clips of `split` in a manifest.
///
/// `mode` overrides the checkpoint's evaluation mask mode.
pub fn evaluate(
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    mode: Option<EvalMaskMode>,
) -> Result<EvalResult> {
    let (config, model) = load_checkpoint(checkpoint)?;
    let geometry = *model.geometry();
    let clips = load_split(manifest, split, None, &geometry)?;
    let prepared = prepare_clips(&clips, config.modality_pair, &geometry)?;
    evaluate_prepared(
        &model,
        &prepared,
        config.mask_ratio,
        mode.unwrap_or(config.eval_mask_mode),
        config.rec_normalization,
    )
}
