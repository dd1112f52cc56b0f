//! Rollouts and centralized training of the shared policy.
//!
//! Rollouts run every episode of a batch in lockstep so that one network
//! evaluation serves all agents of all episodes. Training re-runs the
//! network on stored observation sequences and ascends the closed-form
//! expected sum-priority of every stored slot state.

use nalgebra::DMatrix;
use rand::Rng;

use super::network::{PolicyNet, StepOutput};
use super::observation::ObservationSpec;
use super::optim::{clip_recurrent_grad, RmsProp};
use crate::error::{Error, TrainError};
use crate::objective::{grad_j, masked_softmax, sigmoid, SlotState};
use crate::rng::SimRng;
use crate::sim::env::{Decision, EnvSpec, Episode, SlotRecord};

/// Network plus the fixed input/output conventions around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub net: PolicyNet,
    pub obs: ObservationSpec,
    /// Allowed actions (back-off first) for every user.
    pub masks: Vec<Vec<bool>>,
    pub rho_max: f64,
}

/// Training view of an episode: per-slot observations and objective inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// `dim x N` per slot.
    pub obs: Vec<DMatrix<f64>>,
    pub states: Vec<SlotState>,
}

/// Categorical draw from a probability vector. One uniform per call.
pub fn sample_action<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in pi.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn hstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.columns_mut(at, m.ncols()).copy_from(m);
        at += m.ncols();
    }
    out
}

impl Agent {
    /// Pilot probabilities and powers for the users of one episode given
    /// the raw outputs in columns `offset..offset + N`.
    pub fn decide<R: Rng + ?Sized>(&self, out: &StepOutput, offset: usize, n_users: usize, rng: &mut R) -> Decision {
        let mut assignment = Vec::with_capacity(n_users);
        let mut rho = Vec::with_capacity(n_users);
        for i in 0..n_users {
            let logits: Vec<f64> = out.logits.column(offset + i).iter().copied().collect();
            let pi = masked_softmax(&logits, &self.masks[i]);
            assignment.push(sample_action(&pi, rng));
            rho.push(self.rho_max * sigmoid(out.power_preact[(0, offset + i)]));
        }
        Decision { assignment, rho }
    }

    /// Runs all `episodes` for `spec.episode_len` slots with the current
    /// policy. `action_rngs[e]` drives the sampling of episode `e`.
    pub fn rollout(
        &self,
        spec: &EnvSpec,
        episodes: &mut [Episode],
        action_rngs: &mut [SimRng],
        keep_records: bool,
    ) -> Result<(Vec<EpisodeRecord>, Vec<Vec<SlotRecord>>), Error> {
        let n = spec.n_users();
        let e_count = episodes.len();
        let mut records: Vec<EpisodeRecord> = (0..e_count)
            .map(|_| EpisodeRecord {
                obs: Vec::new(),
                states: Vec::new(),
            })
            .collect();
        let mut traces: Vec<Vec<SlotRecord>> = vec![Vec::with_capacity(spec.episode_len); e_count];
        let mut h = self.net.initial_hidden(n * e_count);
        for _ in 0..spec.episode_len {
            let obs: Vec<DMatrix<f64>> = episodes.iter().map(|ep| self.obs.build(spec, ep)).collect();
            let x = hstack(&obs);
            let (out, h_next, _) = self.net.step(&x, &h);
            h = h_next;
            for (e, ep) in episodes.iter_mut().enumerate() {
                let decision = self.decide(&out, e * n, n, &mut action_rngs[e]);
                if keep_records {
                    records[e].states.push(ep.slot_state(spec));
                }
                traces[e].push(ep.step(spec, &decision)?);
            }
            if keep_records {
                for (rec, o) in records.iter_mut().zip(obs) {
                    rec.obs.push(o);
                }
            }
        }
        Ok((if keep_records { records } else { Vec::new() }, traces))
    }

    /// Mean over the batch of the summed per-slot objective, and its
    /// gradient with respect to every parameter (of the objective, not the
    /// loss).
    pub fn objective_and_grad(&self, batch: &[&EpisodeRecord]) -> Result<(f64, PolicyNet), TrainError> {
        if batch.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        let n = self.obs.n_users;
        let t_len = batch[0].obs.len();
        let xs: Vec<DMatrix<f64>> = (0..t_len)
            .map(|t| hstack(&batch.iter().map(|r| r.obs[t].clone()).collect::<Vec<_>>()))
            .collect();
        let (outs, caches) = self.net.forward_sequence(&xs);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut d_out = Vec::with_capacity(t_len);
        for (t, out) in outs.iter().enumerate() {
            let cols = out.logits.ncols();
            let mut d_logits = DMatrix::zeros(out.logits.nrows(), cols);
            let mut d_pre = DMatrix::zeros(1, cols);
            for (b, rec) in batch.iter().enumerate() {
                let logits: Vec<Vec<f64>> = (0..n)
                    .map(|i| out.logits.column(b * n + i).iter().copied().collect())
                    .collect();
                let pre: Vec<f64> = (0..n).map(|i| out.power_preact[(0, b * n + i)]).collect();
                let g = grad_j(&rec.states[t], &logits, &pre, &self.masks, self.rho_max);
                total += g.j;
                for i in 0..n {
                    for (k, v) in g.d_logits[i].iter().enumerate() {
                        d_logits[(k, b * n + i)] = scale * v;
                    }
                    d_pre[(0, b * n + i)] = scale * g.d_preacts[i];
                }
            }
            d_out.push(StepOutput {
                logits: d_logits,
                power_preact: d_pre,
            });
        }
        let mut grad = self.net.zeros_like();
        self.net.backward(&caches, &d_out, &mut grad);
        Ok((total * scale, grad))
    }

    /// One ascent step on the batch objective. Returns the objective before
    /// the update.
    pub fn train_step(
        &mut self,
        opt: &mut RmsProp,
        batch: &[&EpisodeRecord],
        grad_clip: f64,
        step: usize,
    ) -> Result<f64, TrainError> {
        let (objective, mut grad) = self.objective_and_grad(batch)?;
        if !objective.is_finite() {
            return Err(TrainError::NonFinite {
                what: "objective",
                step,
                detail: format!("value {objective}"),
            });
        }
        if let Some((name, _, _)) = grad
            .tensors()
            .into_iter()
            .find(|(_, _, t)| t.iter().any(|v| !v.is_finite()))
        {
            return Err(TrainError::NonFinite {
                what: "gradient",
                step,
                detail: format!("tensor {name}"),
            });
        }
        // The optimizer descends, so hand it the loss gradient.
        grad.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|g| *g = -*g));
        clip_recurrent_grad(&mut grad, grad_clip);
        opt.step(&mut self.net, &grad);
        Ok(objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sample_action_edge_cases() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_action(&[1.0, 0.0, 0.0], &mut rng), 0);
            assert_eq!(sample_action(&[0.0, 0.0, 1.0], &mut rng), 2);
        }
    }

    #[test]
    fn sample_action_frequencies() {
        let mut rng = SimRng::seed_from_u64(2);
        let pi = [1.0 / 3.0; 3];
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[sample_action(&pi, &mut rng)] += 1;
        }
        let se = (pi[0] * (1.0 - pi[0]) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 3.0 * se);
        }
    }
}
