use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gfra_core::baselines::Baseline;
use gfra_core::config::{Combiner, Config, ObjectiveMode};
use gfra_core::sim::campaign::{epochs_for, run_campaign, EpochOutcome, RunMode};

/// Grant-free random access simulator with learned pilot selection.
#[derive(Debug, Parser)]
#[command(name = "gfra", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the shared policy and write a checkpoint.
    Train(Common),
    /// Evaluate a trained checkpoint without learning.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (defaults to <out>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run one of the reference access schemes.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// baseline1 (access barring), baseline2 (scheduled) or baseline3 (non-orthogonal pilots).
        #[arg(long)]
        mode: Baseline,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Fairness objective: s1 or s2.
    #[arg(long)]
    objective: Option<ObjectiveMode>,
    /// Receive combiner: mr or zf.
    #[arg(long)]
    combiner: Option<Combiner>,
    /// Feed per-pilot feedback of the previous slot to the policy.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    feedback: Option<bool>,
    /// Pilot pre-allocation pattern: paired or split:K.
    #[arg(long)]
    prealloc: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    lyapunov_v: Option<f64>,
    #[arg(long)]
    z_max: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Also write the per-slot event log.
    #[arg(long)]
    event_log: bool,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

impl Common {
    fn config(&self, eval: bool) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.epochs {
            if eval {
                cfg.training.eval_epochs = v;
            } else {
                cfg.training.epochs = v;
            }
        }
        if let Some(v) = self.objective {
            cfg.fairness.objective = v;
        }
        if let Some(v) = self.combiner {
            cfg.system.combiner = v;
        }
        if let Some(v) = self.feedback {
            cfg.policy.feedback = v;
        }
        if let Some(v) = &self.prealloc {
            cfg.policy.prealloc = Some(v.clone());
        }
        if let Some(v) = self.alpha {
            cfg.fairness.alpha = v;
        }
        if let Some(v) = self.frame_len {
            cfg.fairness.frame_len = v;
        }
        if let Some(v) = self.lyapunov_v {
            cfg.fairness.lyapunov_v = v;
        }
        if let Some(v) = self.z_max {
            cfg.fairness.z_max = v;
        }
        if let Some(v) = self.trials {
            cfg.run.trials = v;
        }
        if self.event_log {
            cfg.run.event_log = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, mode, eval) = match cli.command {
        Command::Train(c) => (c, RunMode::Train, false),
        Command::Eval { common, checkpoint } => {
            let checkpoint = checkpoint.unwrap_or_else(|| common.out.join("checkpoint.json"));
            (common, RunMode::Eval { checkpoint }, true)
        }
        Command::Baseline { common, mode } => (common, RunMode::Baseline(mode), false),
    };
    let cfg = common.config(eval)?;
    let epochs = epochs_for(&cfg, &mode);
    let every = (epochs / 20).max(1);
    let mut progress = |trial: usize, out: &EpochOutcome| {
        let m = &out.metrics;
        if m.epoch.is_multiple_of(every) || m.epoch + 1 == epochs {
            let j = out.objective.map(|j| format!(" objective {j:.4}")).unwrap_or_default();
            eprintln!(
                "trial {trial} epoch {:>5}/{epochs}: max NCPDR {:.4}, sum throughput {:.4}{j}",
                m.epoch + 1,
                m.max_ncpdr,
                m.sum_throughput
            );
        }
    };
    let result = run_campaign(&cfg, &mode, &common.out, &mut progress)?;
    for p in &result.outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their cause in the message.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
