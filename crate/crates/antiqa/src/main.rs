use std::path::{Path, PathBuf};
use std::process::ExitCode;

use antiqa::commands::{self, SynthCounts};
use antiqa::config::{RunConfig, CONFIG_ENV};
use antiqa::jsonl;
use antiqa::{Error, Result, Split};
use clap::{Parser, Subcommand};
use serde::Serialize;

/// Text-in-image quality: synthesize, calibrate, train, score, aggregate, evaluate, select.
#[derive(Parser, Debug)]
#[command(name = "antiqa", version)]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when neither this nor the env var is set.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset: PNG crops plus manifest.jsonl.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthCounts::default().train_groups)]
        train_groups: usize,
        #[arg(long, default_value_t = SynthCounts::default().val_groups)]
        val_groups: usize,
        #[arg(long, default_value_t = SynthCounts::default().test_groups)]
        test_groups: usize,
        /// Images per group (the K of best-of-K).
        #[arg(long, default_value_t = SynthCounts::default().k)]
        k: usize,
    },
    /// Fit the 5PL confidence-to-MOS curve.
    Calibrate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Proxy pretraining on calibrated OCR confidence.
    Pretrain {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log; defaults to the checkpoint path with extension `.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Finetuning on crop MOS.
    Finetune {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score crops with a checkpoint.
    Score {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Only crops of this split; all crops when omitted.
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool crop scores into image scores.
    Aggregate {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PLCC/SROCC of a scores file against manifest labels.
    Evaluate {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to eval.split from the config.
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[arg(long, default_value = "antiqa")]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Best-of-K selection report with Random and Oracle rows.
    Select {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[arg(long, default_value = "antiqa")]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference gradient audit; exits nonzero when any check fails.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-pass throughput: minimum over timed runs.
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// PNG or JPEG crop; a clean synthetic crop when omitted.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn need(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Usage(format!("--{name} not given and paths.{name} not set in the config")))
}

fn emit<T: Serialize>(value: &T, elapsed: f64) {
    let mut v = serde_json::to_value(value).expect("summary serializes");
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("elapsed_s".into(), elapsed.into());
    }
    println!("{v}");
}

fn write_report<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => jsonl::write_json(p, value),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let p = cfg.paths.clone();
    let split_or_default = |s: Option<Split>| Some(s.unwrap_or(cfg.eval.split));
    match cli.command {
        Command::Synth { out, train_groups, val_groups, test_groups, k } => {
            let (s, t) = commands::timed(|| commands::synth(&cfg, &out, SynthCounts { train_groups, val_groups, test_groups, k }));
            emit(&s?, t);
        }
        Command::Calibrate { manifest, out } => {
            let m = need(manifest, &p.manifest, "manifest")?;
            let (c, t) = commands::timed(|| commands::calibrate(&cfg, &m, &out));
            emit(&c?, t);
        }
        Command::Pretrain { manifest, calibration, init, out, log } => {
            let m = need(manifest, &p.manifest, "manifest")?;
            let c = need(calibration, &p.calibration, "calibration")?;
            let (s, t) = commands::timed(|| commands::pretrain(&cfg, &m, &c, init.as_deref(), &out, log.as_deref()));
            emit(&s?, t);
        }
        Command::Finetune { manifest, init, out, log } => {
            let m = need(manifest, &p.manifest, "manifest")?;
            let (s, t) = commands::timed(|| commands::finetune(&cfg, &m, init.as_deref(), &out, log.as_deref()));
            emit(&s?, t);
        }
        Command::Score { checkpoint, manifest, split, out } => {
            let c = need(checkpoint, &p.checkpoint, "checkpoint")?;
            let m = need(manifest, &p.manifest, "manifest")?;
            let (s, t) = commands::timed(|| commands::score(&cfg, &c, &m, split, &out));
            emit(&s?, t);
        }
        Command::Aggregate { scores, manifest, out } => {
            let s = need(scores, &p.scores, "scores")?;
            let m = need(manifest, &p.manifest, "manifest")?;
            let (a, t) = commands::timed(|| commands::aggregate(&cfg, &s, &m, &out));
            emit(&a?, t);
        }
        Command::Evaluate { scores, manifest, split, method, out, csv } => {
            let s = need(scores, &p.scores, "scores")?;
            let m = need(manifest, &p.manifest, "manifest")?;
            let (r, t) = commands::timed(|| commands::evaluate(&cfg, &s, &m, split_or_default(split), &method));
            let r = r?;
            jsonl::write_json(&out, &r)?;
            if let Some(c) = csv {
                jsonl::write_bytes(&c, r.to_csv().as_bytes())?;
            }
            emit(&r, t);
        }
        Command::Select { scores, manifest, split, method, out, csv } => {
            let s = need(scores, &p.scores, "scores")?;
            let m = need(manifest, &p.manifest, "manifest")?;
            let (r, t) = commands::timed(|| commands::select(&cfg, &s, &m, split_or_default(split), &method));
            let r = r?;
            jsonl::write_json(&out, &r)?;
            if let Some(c) = csv {
                jsonl::write_bytes(&c, r.to_csv().as_bytes())?;
            }
            emit(&serde_json::json!({ "selection": r.selection, "groups": r.groups }), t);
        }
        Command::Gradcheck { seeds, out } => {
            let (a, t) = commands::timed(|| commands::gradcheck(&cfg, seeds));
            let a = a?;
            write_report(out.as_deref(), &a)?;
            emit(
                &serde_json::json!({
                    "passed": a.passed,
                    "seeds": a.seeds.len(),
                    "max_primitive_error": a.max_primitive_error,
                    "max_network_error": a.max_network_error,
                }),
                t,
            );
            if !a.passed {
                return Err(Error::AuditFailed(
                    a.report.failures().map(|c| format!("{} (seed {}): {:.3e}", c.name, c.seed, c.max_rel_error)).collect(),
                ));
            }
        }
        Command::Bench { checkpoint, image, out } => {
            let c = need(checkpoint, &p.checkpoint, "checkpoint")?;
            let (b, t) = commands::timed(|| commands::bench(&cfg, &c, image.as_deref()));
            let b = b?;
            write_report(out.as_deref(), &b)?;
            emit(&b, t);
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = Error::Usage(e.to_string().trim_end().to_string()).report();
            eprintln!("{}", serde_json::to_string(&report).expect("report serializes"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("report serializes"));
            ExitCode::FAILURE
        }
    }
}
