//! Per-slot priority levels.
//!
//! Both approximations reduce the min-max drop-rate problem to maximizing
//! `sum_i eta_i * mu_i` in every slot. They differ only in how the raw
//! priority of a backlogged user is formed from its history and the urgency
//! of its head-of-line packet:
//!
//! - S1 (log-sum-exp): `f(xi + delta) - f(xi)` with the normalized cumulative
//!   drop rate `xi` of the current frame.
//! - S2 (virtual queue): `X * delta` with the drift-plus-penalty virtual
//!   queue `X`.

use crate::config::{FairnessConfig, ObjectiveMode};
use crate::traffic::urgency;

/// Fairness-promoting map `(e^{alpha x} - 1) / (e^alpha - 1)`.
pub fn fairness_fn(x: f64, alpha: f64) -> f64 {
    (alpha * x).exp_m1() / alpha.exp_m1()
}

pub fn priority_s1(xi_prev: f64, delta: f64, alpha: f64) -> f64 {
    fairness_fn(xi_prev + delta, alpha) - fairness_fn(xi_prev, alpha)
}

pub fn priority_s2(vq: f64, delta: f64) -> f64 {
    vq * delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector {
    pub raw: Vec<f64>,
    /// `raw / sum(raw)`, or all zeros when nobody has positive priority.
    pub eta: Vec<f64>,
}

impl PriorityVector {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        let eta = if total > 0.0 {
            raw.iter().map(|r| r / total).collect()
        } else {
            vec![0.0; raw.len()]
        };
        PriorityVector { raw, eta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessState {
    pub mode: ObjectiveMode,
    pub alpha: f64,
    pub frame_len: usize,
    pub lyapunov_v: f64,
    pub z_max: f64,
    drop_threshold: Vec<f64>,
    /// Normalized cumulative packet drop rate of the current frame.
    pub ncpdr: Vec<f64>,
    /// Virtual queue backlogs.
    pub vq: Vec<f64>,
    slot_in_frame: usize,
}

impl FairnessState {
    pub fn new(cfg: &FairnessConfig, drop_threshold: Vec<f64>) -> Self {
        let n = drop_threshold.len();
        FairnessState {
            mode: cfg.objective,
            alpha: cfg.alpha,
            frame_len: cfg.frame_len,
            lyapunov_v: cfg.lyapunov_v,
            z_max: cfg.z_max,
            drop_threshold,
            ncpdr: vec![0.0; n],
            vq: vec![0.0; n],
            slot_in_frame: 0,
        }
    }

    pub fn reset(&mut self) {
        self.ncpdr.iter_mut().for_each(|x| *x = 0.0);
        self.vq.iter_mut().for_each(|x| *x = 0.0);
        self.slot_in_frame = 0;
    }

    /// Urgency scaled by the frame's drop budget `T * D_th`.
    pub fn normalized_urgency(&self, user: usize, d: u32, d_max: u32) -> f64 {
        urgency(d, d_max) / (self.frame_len as f64 * self.drop_threshold[user])
    }

    pub fn priorities(&self, head_deadline: &[u32], d_max: &[u32]) -> PriorityVector {
        let raw = (0..head_deadline.len())
            .map(|i| {
                let delta = self.normalized_urgency(i, head_deadline[i], d_max[i]);
                if delta == 0.0 {
                    return 0.0;
                }
                match self.mode {
                    ObjectiveMode::S1 => priority_s1(self.ncpdr[i], delta, self.alpha),
                    ObjectiveMode::S2 => priority_s2(self.vq[i], delta),
                }
            })
            .collect();
        PriorityVector::from_raw(raw)
    }

    /// History feature seen by the policy: `xi` under S1, `X` under S2.
    pub fn history(&self, user: usize) -> f64 {
        match self.mode {
            ObjectiveMode::S1 => self.ncpdr[user],
            ObjectiveMode::S2 => self.vq[user],
        }
    }

    /// Virtual-queue update; returns the auxiliary `z` used this slot.
    pub fn vq_step(&mut self, drops: &[bool]) -> f64 {
        let total: f64 = self.vq.iter().sum();
        let z = if total > self.lyapunov_v { self.z_max } else { 0.0 };
        for ((x, &d), &th) in self.vq.iter_mut().zip(drops).zip(&self.drop_threshold) {
            *x = (*x - z).max(0.0) + d as u8 as f64 / th;
        }
        z
    }

    /// NCPDR update; the frame budget is restored every `frame_len` slots.
    pub fn ncpdr_step(&mut self, drops: &[bool]) {
        let t = self.frame_len as f64;
        for ((xi, &d), &th) in self.ncpdr.iter_mut().zip(drops).zip(&self.drop_threshold) {
            if d {
                *xi += 1.0 / (t * th);
            }
        }
        self.slot_in_frame += 1;
        if self.slot_in_frame == self.frame_len {
            self.ncpdr.iter_mut().for_each(|x| *x = 0.0);
            self.slot_in_frame = 0;
        }
    }

    /// End-of-slot bookkeeping for both histories.
    pub fn end_slot(&mut self, drops: &[bool]) {
        self.vq_step(drops);
        self.ncpdr_step(drops);
    }
}
