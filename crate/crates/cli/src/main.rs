use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fusion_ssat::harness::eval::EvalResult;
use fusion_ssat::harness::plot::roc_svg;
use fusion_ssat::harness::train::train_from_manifest;
use fusion_ssat::harness::{evaluate, run_ablation, EvalMaskMode, TrainConfig};
use fusion_ssat::model::ModalityPair;
use fusion_ssat::synth::{build_dataset, desk_shape, read_clip, write_clip, DomainParams, Split, SplitCounts};
use fusion_ssat::texture::{descriptor_video, DescriptorKind};

#[derive(Parser)]
#[command(name = "fssat", version, about = "Texture-reconstruction fusion for deepfake video detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Computes an LDP or LBP code video from an RGB clip file.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: DescriptorKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generates a synthetic dataset and its manifest.
    SynthGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "alpha,beta")]
        domains: Vec<String>,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 0)]
        val: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Trains one model and writes its checkpoint and JSON-lines log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores a manifest split and writes eval.json and roc.svg.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Overrides the checkpoint's mask mode.
        #[arg(long)]
        mask_mode: Option<EvalMaskMode>,
    },
    /// Trains and evaluates one model per modality pair.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rgb-ldp,ldp-rgb,ldp-ldp,lbp-rgb,lbp-lbp")]
        pairs: Vec<ModalityPair>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Redraws the ROC curves of an evaluation report.
    RocPlot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract { input, kind, out } => {
            let clip = read_clip(&input)?;
            let codes = descriptor_video(&clip, kind)?;
            write_clip(&codes, &out)?;
        }
        Command::SynthGen {
            out,
            domains,
            train,
            val,
            test,
            seed,
        } => {
            let domains = domains
                .iter()
                .map(|d| DomainParams::builtin(d.trim()))
                .collect::<fusion_ssat::Result<Vec<_>>>()?;
            let records = build_dataset(&domains, SplitCounts { train, val, test }, seed, desk_shape(), &out)?;
            println!("wrote {} clips and {}", records.len(), out.join("manifest.jsonl").display());
        }
        Command::Train { config, manifest, out } => {
            let config = TrainConfig::load(&config)?;
            let (outcome, artifacts) = train_from_manifest(&config, &manifest, &out)?;
            println!(
                "trained {} steps; checkpoint {}, log {}",
                outcome.steps(),
                artifacts.checkpoint.display(),
                artifacts.log.display()
            );
        }
        Command::Eval {
            checkpoint,
            manifest,
            report,
            split,
            mask_mode,
        } => {
            let result = evaluate(&checkpoint, &manifest, split, mask_mode)?;
            result.write_report(&report)?;
            println!("auc {}", result.auc);
            for p in &result.partitions {
                println!("auc[{}] {} ({} clips)", p.domain, p.auc, p.count);
            }
        }
        Command::Ablate {
            config,
            pairs,
            manifest,
            out,
        } => {
            let config = TrainConfig::load(&config)?;
            let table = run_ablation(&config, &pairs, &manifest, &out)?;
            print!("{}", table.to_csv()?);
        }
        Command::RocPlot { report, out } => {
            let result = EvalResult::read_report(&report)?;
            let curves = result.curves();
            if curves.is_empty() {
                bail!("the report has no defined ROC curve");
            }
            fs::write(&out, roc_svg("ROC", &curves)).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}
