//! Local observation of each user.
//!
//! Layout per user (one column):
//!
//! | field | size |
//! |---|---|
//! | head-of-line deadline `d / d_max` | 1 |
//! | arrival in the previous slot | 1 |
//! | LSFC in dB, standardized | 1 |
//! | history `nu` (`xi` under S1, `X` under S2) | 1 |
//! | agent one-hot | N |
//! | last pilot one-hot (back-off first) | L + 1 |
//! | last power / rho_max | 1 |
//! | per-pilot ternary feedback (optional) | 3L |

use nalgebra::DMatrix;
use rand::Rng;

use crate::config::SystemConfig;
use crate::error::PhyError;
use crate::phy::gen_lsfc;
use crate::sim::env::{EnvSpec, Episode, PilotFeedback};

/// Mean and spread of the per-user LSFC in dB over random drops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsfcStats {
    pub mean_db: f64,
    pub std_db: f64,
}

impl LsfcStats {
    pub fn estimate<R: Rng + ?Sized>(system: &SystemConfig, drops: usize, rng: &mut R) -> Result<Self, PhyError> {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..drops {
            let lsfc = gen_lsfc(system, rng)?;
            for i in 0..lsfc.beta.len() {
                let db = lsfc.beta_db(i);
                sum += db;
                sum_sq += db * db;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = (sum_sq / count as f64 - mean * mean).max(0.0);
        Ok(LsfcStats {
            mean_db: mean,
            std_db: var.sqrt().max(1e-9),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub n_users: usize,
    pub n_pilots: usize,
    pub feedback: bool,
    pub lsfc: LsfcStats,
}

impl ObservationSpec {
    pub fn new(spec: &EnvSpec, feedback: bool, lsfc: LsfcStats) -> Self {
        ObservationSpec {
            n_users: spec.n_users(),
            n_pilots: spec.n_pilots(),
            feedback,
            lsfc,
        }
    }

    pub fn dim(&self) -> usize {
        4 + self.n_users + self.n_pilots + 2 + if self.feedback { 3 * self.n_pilots } else { 0 }
    }

    /// `dim x N` observation matrix of the current slot.
    pub fn build(&self, spec: &EnvSpec, ep: &Episode) -> DMatrix<f64> {
        let n = self.n_users;
        let l = self.n_pilots;
        let mut obs = DMatrix::zeros(self.dim(), n);
        let heads = ep.head_deadlines();
        let fb_offset = 4 + n + l + 2;
        for i in 0..n {
            let mut col = obs.column_mut(i);
            col[0] = heads[i] as f64 / spec.users[i].max_deadline as f64;
            col[1] = ep.last_arrival()[i] as u8 as f64;
            col[2] = (ep.lsfc.beta_db(i) - self.lsfc.mean_db) / self.lsfc.std_db;
            col[3] = ep.fairness().history(i);
            col[4 + i] = 1.0;
            col[4 + n + ep.last_assignment()[i]] = 1.0;
            col[4 + n + l + 1] = ep.last_rho()[i] / spec.rho_max;
            if self.feedback {
                for (p, fb) in ep.feedback().iter().enumerate() {
                    let k = match fb {
                        PilotFeedback::Idle => 0,
                        PilotFeedback::CollisionOrFailure => 1,
                        PilotFeedback::Success => 2,
                    };
                    col[fb_offset + 3 * p + k] = 1.0;
                }
            }
        }
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::phy::LsfcVector;
    use crate::rng::SimRng;
    use crate::sim::env::Decision;
    use rand::SeedableRng;

    #[test]
    fn layout_and_feedback_encoding() {
        let mut cfg = Config::default();
        cfg.system.success_model = crate::config::SuccessModel::CollisionOnly;
        let spec = EnvSpec::new(&cfg).unwrap();
        let stats = LsfcStats {
            mean_db: 0.0,
            std_db: 1.0,
        };
        let os = ObservationSpec::new(&spec, true, stats);
        assert_eq!(os.dim(), 4 + 12 + 6 + 2 + 18);
        let lsfc = LsfcVector::new(vec![10.0; 12], 6, spec.rho_max);
        let mut ep = Episode::new(&spec, lsfc, SimRng::seed_from_u64(1), SimRng::seed_from_u64(2)).unwrap();
        let obs = os.build(&spec, &ep);
        assert!(obs.iter().all(|v| v.is_finite()));
        assert_eq!(obs[(2, 0)], 10.0);
        assert_eq!(obs[(4, 0)], 1.0);
        assert_eq!(obs[(4 + 12, 0)], 1.0);
        // Every pilot idle initially.
        for p in 0..6 {
            assert_eq!(obs[(24 + 3 * p, 3)], 1.0);
        }
        for _ in 0..30 {
            let mut d = Decision::silent(12);
            d.assignment = (0..12).map(|i| i % 7).collect();
            d.rho = vec![spec.rho_max; 12];
            ep.step(&spec, &d).unwrap();
            let obs = os.build(&spec, &ep);
            for i in 0..12 {
                let col = obs.column(i);
                assert_eq!(col.rows(4, 12).sum(), 1.0);
                assert_eq!(col.rows(16, 7).sum(), 1.0);
                for p in 0..6 {
                    assert_eq!(col.rows(24 + 3 * p, 3).sum(), 1.0);
                }
                assert!((0.0..=1.0).contains(&col[0]));
            }
        }
    }

    #[test]
    fn lsfc_stats_are_finite() {
        let cfg = Config::default();
        let s = LsfcStats::estimate(&cfg.system, 50, &mut SimRng::seed_from_u64(3)).unwrap();
        assert!(s.mean_db.is_finite() && s.std_db > 1.0);
    }
}
