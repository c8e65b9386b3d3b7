use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::harness::data::{load_split, prepare_clips};
use crate::harness::eval::{evaluate_prepared, EvalResult};
use crate::harness::metrics::AucValue;
use crate::harness::plot::{roc_svg, RocCurve};
use crate::harness::train::{train, write_artifacts};
use crate::model::ModalityPair;
use crate::synth::Split;

pub const TABLE_FILE: &str = "ablation.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub pair: ModalityPair,
    /// Test AUC per domain, aligned with [`AblationTable::domains`].
    pub aucs: Vec<AucValue>,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub domains: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        let mut header = vec!["pair".to_string()];
        header.extend(self.domains.iter().cloned());
        writer.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut fields = vec![row.pair.to_string()];
            fields.extend(row.aucs.iter().map(|a| match a.value() {
                Some(v) => format!("{v:.6}"),
                None => "degenerate".to_string(),
            }));
            writer.write_record(&fields).map_err(csv_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Trains one model per pair from the same seed on the manifest's train
/// split, evaluates each on every test domain and writes
/// `<out>/<PAIR>/{checkpoint.fsck,train_log.jsonl,eval.json,roc.svg}`,
/// `<out>/ablation.csv` and `<out>/roc_<domain>.svg`.
pub fn run_ablation(
    base: &TrainConfig,
    pairs: &[ModalityPair],
    manifest: &Path,
    out_dir: &Path,
) -> Result<AblationTable> {
    if pairs.is_empty() {
        return Err(Error::Config("the ablation needs at least one modality pair".into()));
    }
    base.validate()?;
    let geometry = base.geometry()?;
    let domain = base.train_domain.as_deref();
    let train_clips = load_split(manifest, Split::Train, domain, &geometry)?;
    let val_clips = load_split(manifest, Split::Val, domain, &geometry)?;
    let test_clips = load_split(manifest, Split::Test, None, &geometry)?;
    if test_clips.is_empty() {
        return Err(Error::Manifest("the manifest has no test records".into()));
    }
    let domains: Vec<String> = test_clips
        .iter()
        .map(|c| c.record.domain.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut rows = Vec::new();
    for &pair in pairs {
        let config = TrainConfig {
            modality_pair: pair,
            ..base.clone()
        };
        let train_set = prepare_clips(&train_clips, pair, &geometry)?;
        let val_set = prepare_clips(&val_clips, pair, &geometry)?;
        let test_set = prepare_clips(&test_clips, pair, &geometry)?;
        let outcome = train(&config, &train_set, &val_set)?;
        let pair_dir = out_dir.join(pair.to_string());
        write_artifacts(&config, &outcome, &pair_dir)?;
        let eval = evaluate_prepared(
            &outcome.model,
            &test_set,
            config.mask_ratio,
            config.eval_mask_mode,
            config.rec_normalization,
        )?;
        eval.write_report(&pair_dir)?;
        let aucs = domains
            .iter()
            .map(|d| eval.partition(d).map(|p| p.auc).expect("every test domain has a partition"))
            .collect();
        rows.push(AblationRow { pair, aucs, eval });
    }

    let table = AblationTable { domains, rows };
    let csv_path = out_dir.join(TABLE_FILE);
    fs::write(&csv_path, table.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    for domain in &table.domains {
        let curves: Vec<RocCurve> = table
            .rows
            .iter()
            .filter_map(|row| {
                let p = row.eval.partition(domain)?;
                let a = p.auc.value()?;
                Some(RocCurve::new(format!("{} (AUC {a:.3})", row.pair), p.roc.clone()?))
            })
            .collect();
        let path = out_dir.join(format!("roc_{domain}.svg"));
        fs::write(&path, roc_svg(&format!("ROC, test domain {domain}"), &curves))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(table)
}
