//! Scenario, fairness, policy and training configuration.
//!
//! Everything is (de)serializable from TOML. The defaults reproduce the
//! heterogeneous two-class scenario: 12 devices, 6 orthogonal pilots, a
//! 100-antenna base station, 23 dBm maximum transmit power, -169 dBm/Hz
//! noise over 180 kHz, and the 3GPP urban-microcell large-scale model.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Receive combining applied at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Mr,
    Zf,
}

impl FromStr for Combiner {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mr" => Ok(Combiner::Mr),
            "zf" => Ok(Combiner::Zf),
            other => Err(ConfigError::Parse(format!("unknown combiner `{other}`"))),
        }
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combiner::Mr => "mr",
            Combiner::Zf => "zf",
        })
    }
}

/// How a slot's transmission success is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessModel {
    /// Non-collided pilot and instantaneous rate above the user's threshold.
    Full,
    /// Non-collided pilot only; the data phase always succeeds.
    CollisionOnly,
}

/// Per-slot fairness objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// Log-sum-exp approximation driven by the normalized cumulative drop rate.
    S1,
    /// Virtual-queue (drift-plus-penalty) approximation.
    S2,
}

impl FromStr for ObjectiveMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ObjectiveMode::S1),
            "s2" => Ok(ObjectiveMode::S2),
            other => Err(ConfigError::Parse(format!("unknown objective `{other}`"))),
        }
    }
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::S1 => "s1",
            ObjectiveMode::S2 => "s2",
        })
    }
}

/// A group of users sharing identical traffic and QoS parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficClass {
    pub count: usize,
    /// Bernoulli arrival probability per slot.
    pub arrival_rate: f64,
    /// Tolerated packet drop rate (packets/slot).
    pub drop_threshold: f64,
    /// Required instantaneous rate, bits/s/Hz.
    pub rate_threshold: f64,
    /// Packet lifetime in slots.
    pub max_deadline: u32,
}

/// Traffic parameters of a single user, expanded from its class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserTraffic {
    pub arrival_rate: f64,
    pub drop_threshold: f64,
    pub rate_threshold: f64,
    pub max_deadline: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_users: usize,
    pub n_pilots: usize,
    pub n_antennas: usize,
    pub rho_max_dbm: f64,
    pub penalty_ell: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub cell_radius_km: f64,
    pub exclusion_radius_km: f64,
    /// Variance of the log-normal shadowing, in dB^2.
    pub shadow_variance_db: f64,
    pub combiner: Combiner,
    pub success_model: SuccessModel,
    pub traffic: Vec<TrafficClass>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_users: 12,
            n_pilots: 6,
            n_antennas: 100,
            rho_max_dbm: 23.0,
            penalty_ell: 0.25,
            bandwidth_hz: 180e3,
            noise_dbm_per_hz: -169.0,
            cell_radius_km: 1.0,
            exclusion_radius_km: 0.05,
            shadow_variance_db: 8.0,
            combiner: Combiner::Zf,
            success_model: SuccessModel::Full,
            traffic: vec![
                TrafficClass {
                    count: 4,
                    arrival_rate: 0.2,
                    drop_threshold: 0.05,
                    rate_threshold: 1.0,
                    max_deadline: 2,
                },
                TrafficClass {
                    count: 8,
                    arrival_rate: 0.65,
                    drop_threshold: 0.2,
                    rate_threshold: 2.0,
                    max_deadline: 5,
                },
            ],
        }
    }
}

impl SystemConfig {
    /// Total receiver noise power over the system bandwidth, in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_dbm_per_hz + 10.0 * self.bandwidth_hz.log10()
    }

    /// Maximum transmit power in milliwatts. Large-scale coefficients carry
    /// the 1/noise normalization, so `beta * rho` is a received SNR.
    pub fn rho_max(&self) -> f64 {
        10f64.powf(self.rho_max_dbm / 10.0)
    }

    pub fn users(&self) -> Vec<UserTraffic> {
        self.traffic
            .iter()
            .flat_map(|c| {
                std::iter::repeat_n(
                    UserTraffic {
                        arrival_rate: c.arrival_rate,
                        drop_threshold: c.drop_threshold,
                        rate_threshold: c.rate_threshold,
                        max_deadline: c.max_deadline,
                    },
                    c.count,
                )
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_pilots == 0 || self.n_users == 0 {
            return invalid(format!(
                "need at least one user and one pilot, got N = {} and L = {}",
                self.n_users, self.n_pilots
            ));
        }
        if self.n_antennas <= self.n_pilots {
            return invalid(format!(
                "need M > L, got M = {} and L = {}",
                self.n_antennas, self.n_pilots
            ));
        }
        if !(self.penalty_ell > 0.0 && self.penalty_ell <= 1.0) {
            return invalid(format!("penalty_ell must lie in (0, 1], got {}", self.penalty_ell));
        }
        if !self.rho_max().is_finite() || self.rho_max() <= 0.0 {
            return invalid("rho_max must be positive".into());
        }
        if self.exclusion_radius_km < 0.0 || self.exclusion_radius_km >= self.cell_radius_km {
            return invalid(format!(
                "exclusion radius {} km must be below the cell radius {} km",
                self.exclusion_radius_km, self.cell_radius_km
            ));
        }
        let total: usize = self.traffic.iter().map(|c| c.count).sum();
        if total != self.n_users {
            return invalid(format!(
                "traffic classes cover {total} users but n_users = {}",
                self.n_users
            ));
        }
        for c in &self.traffic {
            if !(0.0..=1.0).contains(&c.arrival_rate) {
                return invalid(format!("arrival rate {} outside [0, 1]", c.arrival_rate));
            }
            if c.drop_threshold <= 0.0 {
                return invalid("drop threshold must be positive".into());
            }
            if c.rate_threshold <= 0.0 {
                return invalid("rate threshold must be positive".into());
            }
            if c.max_deadline == 0 {
                return invalid("max deadline must be at least one slot".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessConfig {
    pub objective: ObjectiveMode,
    pub alpha: f64,
    pub frame_len: usize,
    pub lyapunov_v: f64,
    pub z_max: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            objective: ObjectiveMode::S1,
            alpha: 3.0,
            frame_len: 20,
            lyapunov_v: 1000.0,
            z_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: usize,
    /// Include the per-pilot ternary feedback of the previous slot.
    pub feedback: bool,
    /// Pilot pre-allocation pattern: `paired` or `split:K`.
    pub prealloc: Option<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 64,
            feedback: false,
            prealloc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub episode_len: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub rms_smoothing: f64,
    pub grad_clip: f64,
    pub eval_epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 1000,
            episodes_per_epoch: 100,
            episode_len: 20,
            steps_per_epoch: 100,
            batch_size: 32,
            buffer_capacity: 5000,
            learning_rate: 5e-4,
            rms_smoothing: 0.99,
            grad_clip: 10.0,
            eval_epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub seed: u64,
    /// Independent repetitions of the whole run, each with a derived seed.
    pub trials: usize,
    /// Moving-average window applied to the emitted plot series.
    pub smoothing_window: usize,
    /// Emit the per-slot event log next to the metrics.
    pub event_log: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 1,
            trials: 1,
            smoothing_window: 10,
            event_log: false,
        }
    }
}

/// Complete configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub system: SystemConfig,
    pub fairness: FairnessConfig,
    pub policy: PolicyConfig,
    pub training: TrainingConfig,
    pub run: RunSettings,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate()?;
        let f = &self.fairness;
        if f.alpha <= 0.0 {
            return Err(ConfigError::Invalid("alpha must be positive".into()));
        }
        if f.frame_len == 0 {
            return Err(ConfigError::Invalid("frame length must be positive".into()));
        }
        if f.lyapunov_v <= 0.0 || f.z_max < 0.0 {
            return Err(ConfigError::Invalid("need V > 0 and z_max >= 0".into()));
        }
        let t = &self.training;
        if t.episode_len == 0 || t.batch_size == 0 || t.buffer_capacity == 0 {
            return Err(ConfigError::Invalid(
                "episode length, batch size and buffer capacity must be positive".into(),
            ));
        }
        if self.policy.hidden == 0 {
            return Err(ConfigError::Invalid("hidden size must be positive".into()));
        }
        if let Some(p) = &self.policy.prealloc {
            PilotGroups::parse(p, self.system.n_users, self.system.n_pilots)?;
        }
        Ok(())
    }

    pub fn pilot_groups(&self) -> Result<Option<PilotGroups>, ConfigError> {
        self.policy
            .prealloc
            .as_deref()
            .map(|p| PilotGroups::parse(p, self.system.n_users, self.system.n_pilots))
            .transpose()
    }
}

/// Disjoint user groups, each restricted to its own disjoint pilot subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotGroups {
    /// Allowed pilots (1-based) for every user.
    allowed: Vec<Vec<usize>>,
}

impl PilotGroups {
    /// `paired`: users `i` and `i + L` share pilot `i + 1` (requires N = 2L).
    /// `split:K`: users and pilots are cut into K contiguous, equally sized blocks.
    pub fn parse(pattern: &str, n_users: usize, n_pilots: usize) -> Result<Self, ConfigError> {
        let pattern = pattern.trim();
        if pattern == "paired" {
            if n_users != 2 * n_pilots {
                return Err(ConfigError::Invalid(format!(
                    "paired pre-allocation needs N = 2L, got N = {n_users}, L = {n_pilots}"
                )));
            }
            let allowed = (0..n_users).map(|i| vec![i % n_pilots + 1]).collect();
            return Ok(PilotGroups { allowed });
        }
        if let Some(k) = pattern.strip_prefix("split:") {
            let k: usize = k
                .parse()
                .map_err(|_| ConfigError::Parse(format!("bad group count in `{pattern}`")))?;
            if k == 0 || !n_users.is_multiple_of(k) || !n_pilots.is_multiple_of(k) {
                return Err(ConfigError::Invalid(format!(
                    "cannot split {n_users} users and {n_pilots} pilots into {k} groups"
                )));
            }
            let (us, ps) = (n_users / k, n_pilots / k);
            let allowed = (0..n_users)
                .map(|i| {
                    let g = i / us;
                    (g * ps + 1..=(g + 1) * ps).collect()
                })
                .collect();
            return Ok(PilotGroups { allowed });
        }
        Err(ConfigError::Parse(format!(
            "unknown pre-allocation pattern `{pattern}`"
        )))
    }

    pub fn allowed(&self, user: usize) -> &[usize] {
        &self.allowed[user]
    }

    /// Action mask of length L + 1 for `user`; back-off is always allowed.
    pub fn mask(&self, user: usize, n_pilots: usize) -> Vec<bool> {
        let mut m = vec![false; n_pilots + 1];
        m[0] = true;
        for &p in &self.allowed[user] {
            m[p] = true;
        }
        m
    }
}
