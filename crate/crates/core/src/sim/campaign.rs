//! Epoch and campaign orchestration with result files.
//!
//! Every episode `g` of a trial (counted across epochs) owns the random
//! streams `Placement(g)`, `Fading(g)`, `Arrivals(g)` and `Actions(g)`, so
//! runs are reproducible from `(seed, config, checkpoint)` alone.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::{baseline1_step, baseline2_step, Baseline, NonOrthPilotBook};
use crate::config::{Combiner, Config};
use crate::error::Error;
use crate::phy::gen_lsfc;
use crate::policy::checkpoint::{load_net, Checkpoint};
use crate::policy::{Agent, EpisodeRecord, LsfcStats, ObservationSpec, PolicyNet, ReplayBuffer, RmsProp};
use crate::rng::{derive_seed, RngStreams, SimRng, Stream};
use crate::sim::env::{EnvSpec, Episode, PhyMode, SlotRecord};
use crate::sim::eventlog::EventWriter;
use crate::sim::metrics::{moving_average, write_metrics_csv, EpochCounters, EpochMetrics};

/// Drops used to estimate the LSFC normalization fed to the policy.
pub const LSFC_STATS_DROPS: usize = 2000;
/// Seed of the LSFC normalization estimate; fixed so that training and
/// evaluation runs with different seeds see identical inputs.
const LSFC_STATS_SEED: u64 = 0x6c73_6663;

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    Train,
    Eval { checkpoint: PathBuf },
    Baseline(Baseline),
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunMode::Train => f.write_str("train"),
            RunMode::Eval { .. } => f.write_str("eval"),
            RunMode::Baseline(b) => b.fmt(f),
        }
    }
}

pub fn lsfc_stats(cfg: &Config) -> Result<LsfcStats, Error> {
    let mut rng = RngStreams::new(LSFC_STATS_SEED).get(Stream::Placement, 0);
    Ok(LsfcStats::estimate(&cfg.system, LSFC_STATS_DROPS, &mut rng)?)
}

/// Allowed-action masks from the pre-allocation pattern (all pilots if none).
pub fn action_masks(cfg: &Config) -> Result<Vec<Vec<bool>>, Error> {
    let (n, l) = (cfg.system.n_users, cfg.system.n_pilots);
    Ok(match cfg.pilot_groups()? {
        Some(g) => (0..n).map(|i| g.mask(i, l)).collect(),
        None => vec![vec![true; l + 1]; n],
    })
}

/// Observation and action conventions for `cfg`, with the given network.
pub fn make_agent(cfg: &Config, spec: &EnvSpec, net: PolicyNet) -> Result<Agent, Error> {
    Ok(Agent {
        net,
        obs: ObservationSpec::new(spec, cfg.policy.feedback, lsfc_stats(cfg)?),
        masks: action_masks(cfg)?,
        rho_max: spec.rho_max,
    })
}

// One driver per trial, so the variant size gap costs nothing.
#[allow(clippy::large_enum_variant)]
enum Driver {
    Learn {
        agent: Agent,
        opt: RmsProp,
        buffer: ReplayBuffer<EpisodeRecord>,
        rng: SimRng,
        steps: usize,
    },
    Frozen(Agent),
    Baseline(Baseline),
}

/// Result of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub metrics: EpochMetrics,
    pub counters: EpochCounters,
    /// Mean per-episode objective over the epoch's training steps.
    pub objective: Option<f64>,
}

/// One independent run: a fixed seed, policy and environment.
pub struct Trial {
    cfg: Config,
    spec: EnvSpec,
    streams: RngStreams,
    driver: Driver,
    next_episode: u64,
}

impl Trial {
    pub fn new(cfg: &Config, mode: &RunMode, seed: u64) -> Result<Self, Error> {
        let mut spec = EnvSpec::new(cfg)?;
        let streams = RngStreams::new(seed);
        let driver = match mode {
            RunMode::Train => {
                let probe = make_agent(cfg, &spec, PolicyNet::zeros(1, 1, 1))?;
                let net = PolicyNet::random(
                    probe.obs.dim(),
                    cfg.policy.hidden,
                    cfg.system.n_pilots,
                    &mut streams.get(Stream::Init, 0),
                );
                let agent = Agent { net, ..probe };
                let t = &cfg.training;
                Driver::Learn {
                    opt: RmsProp::new(&agent.net, t.learning_rate, t.rms_smoothing),
                    agent,
                    buffer: ReplayBuffer::new(t.buffer_capacity),
                    rng: streams.get(Stream::Training, 0),
                    steps: 0,
                }
            }
            RunMode::Eval { checkpoint } => {
                let probe = make_agent(cfg, &spec, PolicyNet::zeros(1, 1, 1))?;
                let net = load_net(checkpoint, probe.obs.dim(), cfg.system.n_pilots)?;
                Driver::Frozen(Agent { net, ..probe })
            }
            RunMode::Baseline(b) => {
                spec.phy = match b {
                    Baseline::AccessBarring | Baseline::Scheduled => PhyMode::Orthogonal(Combiner::Zf),
                    Baseline::NonOrthogonal => PhyMode::NonOrthogonal(NonOrthPilotBook::generate(
                        cfg.system.n_pilots,
                        cfg.system.n_users,
                        &mut streams.get(Stream::PilotBook, 0),
                    )),
                };
                if *b == Baseline::Scheduled && cfg.system.n_users != 2 * cfg.system.n_pilots {
                    return Err(crate::error::PhyError::Invalid(format!(
                        "the scheduled baseline needs N = 2L, got N = {} and L = {}",
                        cfg.system.n_users, cfg.system.n_pilots
                    ))
                    .into());
                }
                Driver::Baseline(*b)
            }
        };
        Ok(Trial {
            cfg: cfg.clone(),
            spec,
            streams,
            driver,
            next_episode: 0,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn agent(&self) -> Option<&Agent> {
        match &self.driver {
            Driver::Learn { agent, .. } | Driver::Frozen(agent) => Some(agent),
            Driver::Baseline(_) => None,
        }
    }

    fn new_episode(&self, g: u64) -> Result<Episode, Error> {
        let lsfc = gen_lsfc(&self.spec.system, &mut self.streams.get(Stream::Placement, g))?;
        Episode::new(
            &self.spec,
            lsfc,
            self.streams.get(Stream::Fading, g),
            self.streams.get(Stream::Arrivals, g),
        )
    }

    fn baseline_episode(&self, b: Baseline, ep: &mut Episode, rng: &mut SimRng) -> Result<Vec<SlotRecord>, Error> {
        let l = self.spec.n_pilots();
        let rho_max = self.spec.rho_max;
        (0..self.spec.episode_len)
            .map(|_| {
                let busy = ep.backlogged();
                let d = match b {
                    Baseline::AccessBarring | Baseline::NonOrthogonal => baseline1_step(&busy, l, rho_max, rng),
                    Baseline::Scheduled => baseline2_step(ep.slot(), &busy, l, rho_max)?,
                };
                ep.step(&self.spec, &d)
            })
            .collect()
    }

    /// Runs one epoch of episodes (and, when learning, the training steps
    /// that follow it).
    pub fn run_epoch<W: Write>(
        &mut self,
        epoch: usize,
        mut events: Option<&mut EventWriter<W>>,
    ) -> Result<EpochOutcome, Error> {
        let e_count = self.cfg.training.episodes_per_epoch;
        let first = self.next_episode;
        self.next_episode += e_count as u64;
        let mut episodes = (0..e_count as u64)
            .map(|e| self.new_episode(first + e))
            .collect::<Result<Vec<_>, _>>()?;
        let mut action_rngs: Vec<SimRng> = (0..e_count as u64)
            .map(|e| self.streams.get(Stream::Actions, first + e))
            .collect();

        let (records, traces) = match &self.driver {
            Driver::Learn { agent, .. } => agent.rollout(&self.spec, &mut episodes, &mut action_rngs, true)?,
            Driver::Frozen(agent) => agent.rollout(&self.spec, &mut episodes, &mut action_rngs, false)?,
            Driver::Baseline(b) => {
                let traces = episodes
                    .iter_mut()
                    .zip(action_rngs.iter_mut())
                    .map(|(ep, rng)| self.baseline_episode(*b, ep, rng))
                    .collect::<Result<Vec<_>, _>>()?;
                (Vec::new(), traces)
            }
        };

        let mut counters = EpochCounters::new(self.spec.n_users());
        for (e, trace) in traces.iter().enumerate() {
            for rec in trace {
                counters.record(rec);
                if let Some(w) = events.as_deref_mut() {
                    w.write_slot(epoch, e, rec)?;
                }
            }
        }
        let metrics = EpochMetrics::from_counters(epoch, &counters, &self.spec.users);

        let mut objective = None;
        if let Driver::Learn {
            agent,
            opt,
            buffer,
            rng,
            steps,
        } = &mut self.driver
        {
            for rec in records {
                buffer.push(rec);
            }
            let t = &self.cfg.training;
            let mut sum = 0.0;
            for _ in 0..t.steps_per_epoch {
                let batch = buffer.sample(t.batch_size, rng);
                sum += agent.train_step(opt, &batch, t.grad_clip, *steps)?;
                *steps += 1;
            }
            if t.steps_per_epoch > 0 {
                objective = Some(sum / t.steps_per_epoch as f64);
            }
        }
        Ok(EpochOutcome {
            metrics,
            counters,
            objective,
        })
    }
}

/// Per-trial results kept in memory.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
    pub objective: Vec<f64>,
    pub net: Option<PolicyNet>,
}

/// Runs `epochs` epochs of a single trial without writing files.
pub fn run_trial(
    cfg: &Config,
    mode: &RunMode,
    seed: u64,
    epochs: usize,
    on_epoch: &mut dyn FnMut(&EpochOutcome),
) -> Result<TrialResult, Error> {
    let mut trial = Trial::new(cfg, mode, seed)?;
    let mut metrics = Vec::with_capacity(epochs);
    let mut objective = Vec::new();
    for epoch in 0..epochs {
        let out = trial.run_epoch::<std::io::Sink>(epoch, None)?;
        on_epoch(&out);
        objective.extend(out.objective);
        metrics.push(out.metrics);
    }
    Ok(TrialResult {
        seed,
        metrics,
        objective,
        net: trial.agent().map(|a| a.net.clone()),
    })
}

/// Seed of trial `k`; a single-trial run uses the master seed directly.
pub fn trial_seed(seed: u64, trials: usize, k: usize) -> u64 {
    if trials == 1 {
        seed
    } else {
        derive_seed(seed, k as u64)
    }
}

/// Epoch count of a run: evaluation uses the evaluation budget.
pub fn epochs_for(cfg: &Config, mode: &RunMode) -> usize {
    match mode {
        RunMode::Eval { .. } => cfg.training.eval_epochs,
        _ => cfg.training.epochs,
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    code_version: &'static str,
    mode: String,
    seed: u64,
    trials: usize,
    epochs: usize,
    trial_seeds: Vec<u64>,
    checkpoint_in: Option<String>,
    outputs: Vec<String>,
    config: &'a Config,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_plot(path: &Path, ys: &[f64]) -> Result<(), Error> {
    let mut w = create(path)?;
    writeln!(w, "# epoch value").map_err(io_err(path))?;
    for (x, y) in ys.iter().enumerate() {
        writeln!(w, "{x} {y}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Summary of a finished campaign.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub trials: Vec<TrialResult>,
    pub outputs: Vec<PathBuf>,
}

/// Runs every trial and writes `metrics.csv` (per trial), `objective.csv`
/// and `checkpoint.json` (training), optional `events.csv`, the smoothed
/// plot series and `manifest.json`.
pub fn run_campaign(
    cfg: &Config,
    mode: &RunMode,
    out_dir: &Path,
    on_epoch: &mut dyn FnMut(usize, &EpochOutcome),
) -> Result<CampaignResult, Error> {
    cfg.validate()?;
    if let RunMode::Eval { checkpoint } = mode {
        // Fail before creating any output.
        Checkpoint::load(checkpoint)?;
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trials = cfg.run.trials.max(1);
    let epochs = epochs_for(cfg, mode);
    let n = cfg.system.n_users;
    let mut outputs = Vec::new();
    let mut results = Vec::new();

    for k in 0..trials {
        let seed = trial_seed(cfg.run.seed, trials, k);
        let dir = if trials == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(format!("trial_{k}"))
        };
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut trial = Trial::new(cfg, mode, seed)?;
        let mut events = if cfg.run.event_log {
            let p = dir.join("events.csv");
            outputs.push(p.clone());
            Some(EventWriter::new(create(&p)?))
        } else {
            None
        };
        let mut metrics = Vec::with_capacity(epochs);
        let mut objective = Vec::new();
        for epoch in 0..epochs {
            let out = trial.run_epoch(epoch, events.as_mut())?;
            on_epoch(k, &out);
            objective.extend(out.objective);
            metrics.push(out.metrics);
        }
        if let Some(w) = events.as_mut() {
            w.flush()?;
        }

        let p = dir.join("metrics.csv");
        let mut w = create(&p)?;
        write_metrics_csv(&mut w, &metrics, n)?;
        w.flush().map_err(io_err(&p))?;
        outputs.push(p);

        if !objective.is_empty() {
            let p = dir.join("objective.csv");
            let mut w = create(&p)?;
            writeln!(w, "epoch,objective").map_err(io_err(&p))?;
            for (e, j) in objective.iter().enumerate() {
                writeln!(w, "{e},{j}").map_err(io_err(&p))?;
            }
            w.flush().map_err(io_err(&p))?;
            outputs.push(p);
        }

        let net = trial.agent().map(|a| a.net.clone());
        if let (RunMode::Train, Some(net)) = (mode, &net) {
            let p = dir.join("checkpoint.json");
            Checkpoint::from_net(net).save(&p)?;
            outputs.push(p);
        }
        results.push(TrialResult {
            seed,
            metrics,
            objective,
            net,
        });
    }

    let window = cfg.run.smoothing_window;
    let mean_over_trials = |f: &dyn Fn(&EpochMetrics) -> f64| -> Vec<f64> {
        (0..epochs)
            .map(|e| results.iter().map(|r| f(&r.metrics[e])).sum::<f64>() / results.len() as f64)
            .collect()
    };
    for (name, series) in [
        ("plot_max_ncpdr.dat", mean_over_trials(&|m| m.max_ncpdr)),
        ("plot_sum_throughput.dat", mean_over_trials(&|m| m.sum_throughput)),
    ] {
        let p = out_dir.join(name);
        write_plot(&p, &moving_average(&series, window))?;
        outputs.push(p);
    }

    let manifest_path = out_dir.join("manifest.json");
    let rel = |p: &PathBuf| p.strip_prefix(out_dir).unwrap_or(p).display().to_string();
    let manifest = Manifest {
        tool: "gfra",
        code_version: env!("CARGO_PKG_VERSION"),
        mode: mode.to_string(),
        seed: cfg.run.seed,
        trials,
        epochs,
        trial_seeds: results.iter().map(|r| r.seed).collect(),
        checkpoint_in: match mode {
            RunMode::Eval { checkpoint } => Some(checkpoint.display().to_string()),
            _ => None,
        },
        outputs: outputs.iter().map(rel).collect(),
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    outputs.push(manifest_path);

    Ok(CampaignResult {
        trials: results,
        outputs,
    })
}
