//! Slot-level environment for one episode (one user drop).
//!
//! A slot runs: decide, pilot phase, data phase, success or expiry of the
//! head-of-line packet, ageing, arrivals, and finally the fairness
//! bookkeeping that feeds the next slot's priorities.

use rand::Rng;

use crate::baselines::{nonorth_sinrs, NonOrthPilotBook};
use crate::config::{Combiner, Config, FairnessConfig, SuccessModel, SystemConfig, UserTraffic};
use crate::error::{Error, PhyError};
use crate::fairness::{FairnessState, PriorityVector};
use crate::objective::{coeff_table, sinr_gap_omega, CoeffTable, SlotState};
use crate::phy::{combining_matrix, decode_sinrs, instantaneous_rate, mmse_estimate, pilot_phase, LsfcVector};
use crate::rng::SimRng;
use crate::traffic::{success_indicator, UserQueueState};

/// Receiver used in the data phase.
#[derive(Debug, Clone, PartialEq)]
pub enum PhyMode {
    /// Orthogonal pilots, per-pilot MMSE, MR or ZF.
    Orthogonal(Combiner),
    /// Unique non-orthogonal pilots with joint MMSE; any nonzero assignment
    /// marks the user as active.
    NonOrthogonal(NonOrthPilotBook),
}

/// Immutable per-run description of the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub system: SystemConfig,
    pub fairness: FairnessConfig,
    pub users: Vec<UserTraffic>,
    pub omega: Vec<f64>,
    pub rho_max: f64,
    pub episode_len: usize,
    pub phy: PhyMode,
}

impl EnvSpec {
    pub fn new(cfg: &Config) -> Result<Self, Error> {
        cfg.validate()?;
        let users = cfg.system.users();
        let omega = users
            .iter()
            .map(|u| sinr_gap_omega(u.rate_threshold, cfg.system.penalty_ell))
            .collect();
        Ok(EnvSpec {
            system: cfg.system.clone(),
            fairness: cfg.fairness.clone(),
            users,
            omega,
            rho_max: cfg.system.rho_max(),
            episode_len: cfg.training.episode_len,
            phy: PhyMode::Orthogonal(cfg.system.combiner),
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_pilots(&self) -> usize {
        self.system.n_pilots
    }

    pub fn d_max(&self) -> Vec<u32> {
        self.users.iter().map(|u| u.max_deadline).collect()
    }

    /// Combiner assumed by the objective's coefficient table.
    pub fn design_combiner(&self) -> Combiner {
        match &self.phy {
            PhyMode::Orthogonal(c) => *c,
            PhyMode::NonOrthogonal(_) => Combiner::Zf,
        }
    }

    pub fn coeffs(&self, rho0: f64) -> Result<CoeffTable, PhyError> {
        coeff_table(
            self.design_combiner(),
            self.system.n_antennas,
            self.system.n_pilots,
            rho0,
            &self.omega,
        )
    }
}

/// Pilot choices (0 = back off) and transmit powers for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub assignment: Vec<usize>,
    pub rho: Vec<f64>,
}

impl Decision {
    pub fn silent(n: usize) -> Self {
        Decision {
            assignment: vec![0; n],
            rho: vec![0.0; n],
        }
    }
}

/// What the receiver broadcasts about one pilot after a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PilotFeedback {
    #[default]
    Idle,
    /// Two or more users, or a single user that missed its rate.
    CollisionOrFailure,
    Success,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    /// Queue lengths and head deadlines at the start of the slot.
    pub backlog: Vec<usize>,
    pub head_deadline: Vec<u32>,
    pub assignment: Vec<usize>,
    pub rho: Vec<f64>,
    pub sinr: Vec<Option<f64>>,
    pub success: Vec<bool>,
    pub drop: Vec<bool>,
    pub arrival: Vec<bool>,
    /// Pilots chosen by two or more users.
    pub collided_pilots: usize,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub lsfc: LsfcVector,
    coeffs: CoeffTable,
    queues: Vec<UserQueueState>,
    fairness: FairnessState,
    last_assignment: Vec<usize>,
    last_rho: Vec<f64>,
    last_arrival: Vec<bool>,
    feedback: Vec<PilotFeedback>,
    slot: u64,
    fading_rng: SimRng,
    arrival_rng: SimRng,
}

impl Episode {
    pub fn new(spec: &EnvSpec, lsfc: LsfcVector, fading_rng: SimRng, arrival_rng: SimRng) -> Result<Self, Error> {
        let n = spec.n_users();
        let coeffs = spec.coeffs(lsfc.rho0)?;
        let d_th = spec.users.iter().map(|u| u.drop_threshold).collect();
        Ok(Episode {
            lsfc,
            coeffs,
            queues: vec![UserQueueState::new(); n],
            fairness: FairnessState::new(&spec.fairness, d_th),
            last_assignment: vec![0; n],
            last_rho: vec![0.0; n],
            last_arrival: vec![false; n],
            feedback: vec![PilotFeedback::Idle; spec.n_pilots()],
            slot: 0,
            fading_rng,
            arrival_rng,
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn queues(&self) -> &[UserQueueState] {
        &self.queues
    }

    pub fn fairness(&self) -> &FairnessState {
        &self.fairness
    }

    pub fn coeffs(&self) -> &CoeffTable {
        &self.coeffs
    }

    pub fn backlogged(&self) -> Vec<bool> {
        self.queues.iter().map(UserQueueState::is_backlogged).collect()
    }

    pub fn head_deadlines(&self) -> Vec<u32> {
        self.queues.iter().map(UserQueueState::head_deadline).collect()
    }

    pub fn last_assignment(&self) -> &[usize] {
        &self.last_assignment
    }

    pub fn last_rho(&self) -> &[f64] {
        &self.last_rho
    }

    pub fn last_arrival(&self) -> &[bool] {
        &self.last_arrival
    }

    pub fn feedback(&self) -> &[PilotFeedback] {
        &self.feedback
    }

    pub fn priorities(&self, spec: &EnvSpec) -> PriorityVector {
        self.fairness.priorities(&self.head_deadlines(), &spec.d_max())
    }

    /// Inputs of the expected sum-priority for the current slot.
    pub fn slot_state(&self, spec: &EnvSpec) -> SlotState {
        SlotState {
            eta: self.priorities(spec).eta,
            beta: self.lsfc.beta.clone(),
            backlogged: self.backlogged(),
            coeffs: self.coeffs.clone(),
            success_model: spec.system.success_model,
        }
    }

    /// Instantaneous SINR of every user for the given decision.
    fn data_phase(&mut self, spec: &EnvSpec, d: &Decision) -> Vec<Option<f64>> {
        let m = spec.system.n_antennas;
        match &spec.phy {
            PhyMode::Orthogonal(combiner) => {
                let real = pilot_phase(&self.lsfc, &d.assignment, m, spec.n_pilots(), &mut self.fading_rng);
                let est = mmse_estimate(&real);
                match combining_matrix(&est.g_hat, *combiner) {
                    Ok(v) => decode_sinrs(&real, &est, &v, &self.lsfc.beta, &d.rho),
                    Err(_) => vec![None; d.assignment.len()],
                }
            }
            PhyMode::NonOrthogonal(book) => nonorth_sinrs(
                book,
                &self.lsfc.beta,
                self.lsfc.rho0,
                &d.assignment,
                &d.rho,
                m,
                &mut self.fading_rng,
            ),
        }
    }

    /// Advances one slot. Idle users are forced to back off.
    pub fn step(&mut self, spec: &EnvSpec, decision: &Decision) -> Result<SlotRecord, Error> {
        let n = spec.n_users();
        let l = spec.n_pilots();
        let backlog: Vec<usize> = self.queues.iter().map(UserQueueState::q_len).collect();
        let head_deadline = self.head_deadlines();
        let assignment: Vec<usize> = (0..n)
            .map(|i| if backlog[i] > 0 { decision.assignment[i] } else { 0 })
            .collect();
        let rho: Vec<f64> = (0..n)
            .map(|i| if assignment[i] > 0 { decision.rho[i] } else { 0.0 })
            .collect();
        let d = Decision { assignment, rho };

        let nonorth = matches!(spec.phy, PhyMode::NonOrthogonal(_));
        let multiplicity = if nonorth {
            // Unique pilots: every active user is alone on its sequence.
            vec![1; l.max(1)]
        } else {
            crate::phy::multiplicities(&d.assignment, l)
        };
        let sinr = match spec.system.success_model {
            SuccessModel::Full => self.data_phase(spec, &d),
            SuccessModel::CollisionOnly => vec![None; n],
        };
        let success: Vec<bool> = (0..n)
            .map(|i| {
                if d.assignment[i] == 0 {
                    return false;
                }
                match spec.system.success_model {
                    SuccessModel::CollisionOnly => nonorth || multiplicity[d.assignment[i] - 1] == 1,
                    SuccessModel::Full if nonorth => sinr[i].is_some_and(|s| {
                        instantaneous_rate(s, spec.system.penalty_ell) >= spec.users[i].rate_threshold
                    }),
                    SuccessModel::Full => success_indicator(
                        &d.assignment,
                        &multiplicity,
                        sinr[i].map(|s| instantaneous_rate(s, spec.system.penalty_ell)),
                        spec.users[i].rate_threshold,
                        i,
                    ),
                }
            })
            .collect();

        let arrival: Vec<bool> = spec
            .users
            .iter()
            .map(|u| self.arrival_rng.random::<f64>() < u.arrival_rate)
            .collect();
        let mut drop = vec![false; n];
        for i in 0..n {
            let out = self.queues[i].step(i, success[i], arrival[i], spec.users[i].max_deadline, self.slot)?;
            drop[i] = out.drop;
        }
        self.fairness.end_slot(&drop);

        if !nonorth {
            self.feedback = (1..=l)
                .map(|p| match multiplicity[p - 1] {
                    0 => PilotFeedback::Idle,
                    1 => {
                        let i = d.assignment.iter().position(|&a| a == p).expect("pilot has a user");
                        if success[i] {
                            PilotFeedback::Success
                        } else {
                            PilotFeedback::CollisionOrFailure
                        }
                    }
                    _ => PilotFeedback::CollisionOrFailure,
                })
                .collect();
        }
        let collided_pilots = if nonorth {
            0
        } else {
            multiplicity.iter().filter(|&&u| u >= 2).count()
        };

        let record = SlotRecord {
            slot: self.slot,
            backlog,
            head_deadline,
            assignment: d.assignment.clone(),
            rho: d.rho.clone(),
            sinr,
            success,
            drop,
            arrival: arrival.clone(),
            collided_pilots,
        };
        self.last_assignment = d.assignment;
        self.last_rho = d.rho;
        self.last_arrival = arrival;
        self.slot += 1;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrafficClass;
    use rand::SeedableRng;

    fn spec(model: SuccessModel, lambda: f64) -> EnvSpec {
        let mut cfg = Config::default();
        cfg.system.n_users = 2;
        cfg.system.n_pilots = 1;
        cfg.system.success_model = model;
        cfg.system.traffic = vec![TrafficClass {
            count: 2,
            arrival_rate: lambda,
            drop_threshold: 0.5,
            rate_threshold: 1.0,
            max_deadline: 1,
        }];
        EnvSpec::new(&cfg).unwrap()
    }

    fn episode(spec: &EnvSpec) -> Episode {
        let lsfc = LsfcVector::new(vec![1.0, 2.0], 1, spec.rho_max);
        Episode::new(spec, lsfc, SimRng::seed_from_u64(1), SimRng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn first_slot_is_idle_and_arrivals_queue_up() {
        let s = spec(SuccessModel::CollisionOnly, 1.0);
        let mut ep = episode(&s);
        let r = ep
            .step(
                &s,
                &Decision {
                    assignment: vec![1, 1],
                    rho: vec![1.0; 2],
                },
            )
            .unwrap();
        assert_eq!(r.assignment, vec![0, 0]);
        assert_eq!(ep.head_deadlines(), vec![1, 1]);
    }

    #[test]
    fn collision_drops_both_and_alternation_serves_one() {
        let s = spec(SuccessModel::CollisionOnly, 1.0);
        let mut ep = episode(&s);
        ep.step(&s, &Decision::silent(2)).unwrap();
        let r = ep
            .step(
                &s,
                &Decision {
                    assignment: vec![1, 1],
                    rho: vec![1.0; 2],
                },
            )
            .unwrap();
        assert_eq!(r.success, vec![false, false]);
        assert_eq!(r.drop, vec![true, true]);
        assert_eq!(r.collided_pilots, 1);
        assert_eq!(ep.feedback(), &[PilotFeedback::CollisionOrFailure]);
        let r = ep
            .step(
                &s,
                &Decision {
                    assignment: vec![1, 0],
                    rho: vec![1.0; 2],
                },
            )
            .unwrap();
        assert_eq!(r.success, vec![true, false]);
        assert_eq!(r.drop, vec![false, true]);
        assert_eq!(ep.feedback(), &[PilotFeedback::Success]);
    }

    #[test]
    fn no_traffic_means_no_priority() {
        let s = spec(SuccessModel::Full, 0.0);
        let mut ep = episode(&s);
        for _ in 0..5 {
            let st = ep.slot_state(&s);
            assert!(st.eta.iter().all(|&e| e == 0.0));
            ep.step(
                &s,
                &Decision {
                    assignment: vec![1, 1],
                    rho: vec![1.0; 2],
                },
            )
            .unwrap();
        }
    }
}
