//! Closed-form expected sum-priority and its exact gradient.
//!
//! For pilot-selection probabilities `pi` (N x (L+1), column 0 is back-off)
//! and powers `rho`, user `i` succeeds with probability
//! `P^p_i * F_i`, where `P^p_i` is the non-collision probability and `F_i`
//! is a normal approximation of the data-phase SINR condition
//! `varsigma_self * b_i >= 1 + sum_{j != i} varsigma_cross * b_j * X_j`
//! with `b = beta * rho` and independent activity indicators
//! `X_j ~ Bernoulli(1 - pi_j0)`.

use statrs::function::erf::erfc;

use crate::config::{Combiner, SuccessModel};
use crate::error::PhyError;

/// Variance below which the Gaussian factor is blended into the exact
/// degenerate indicator.
pub const VAR_FLOOR: f64 = 1e-12;
/// Floor on `varsigma_self` when the closed-form numerator is nonpositive.
pub const SELF_COEFF_FLOOR: f64 = 1e-9;

/// SINR threshold reciprocal `ell / (2^r_th - 1)`.
pub fn sinr_gap_omega(r_th: f64, ell: f64) -> f64 {
    ell / (r_th.exp2() - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub varsigma_cross: f64,
    pub varsigma_self: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Coefficients with the collision-free approximation `c = rho0 / (1 + rho0)`
/// and `|L_act| = L` for ZF.
pub fn coeff_table(
    combiner: Combiner,
    n_antennas: usize,
    n_pilots: usize,
    rho0: f64,
    omega: &[f64],
) -> Result<CoeffTable, PhyError> {
    let dof = match combiner {
        Combiner::Mr if n_antennas > 1 => (n_antennas - 1) as f64,
        Combiner::Zf if n_antennas > n_pilots => (n_antennas - n_pilots) as f64,
        Combiner::Mr => {
            return Err(PhyError::TooFewAntennas {
                antennas: n_antennas,
                active: 1,
            })
        }
        Combiner::Zf => {
            return Err(PhyError::TooFewAntennas {
                antennas: n_antennas,
                active: n_pilots,
            })
        }
    };
    let varsigma_cross = match combiner {
        Combiner::Mr => 1.0,
        Combiner::Zf => 1.0 / (rho0 + 1.0),
    };
    let varsigma_self = omega
        .iter()
        .map(|w| ((dof * w * rho0 - 1.0) / (rho0 + 1.0)).max(SELF_COEFF_FLOOR))
        .collect();
    Ok(CoeffTable {
        varsigma_cross,
        varsigma_self,
        omega: omega.to_vec(),
    })
}

/// Everything J needs about one slot besides the policy outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    /// Normalized priorities.
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
    pub backlogged: Vec<bool>,
    pub coeffs: CoeffTable,
    pub success_model: SuccessModel,
}

impl SlotState {
    pub fn n_users(&self) -> usize {
        self.eta.len()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `sum_{l>=1} pi_il * prod_{j != i} (1 - pi_jl)`.
pub fn noncollision_prob(pi: &[Vec<f64>], user: usize) -> f64 {
    let n_cols = pi[user].len();
    (1..n_cols)
        .map(|l| {
            let others: f64 = pi
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != user)
                .map(|(_, row)| 1.0 - row[l])
                .product();
            pi[user][l] * others
        })
        .sum()
}

/// Mean and variance of the interference-plus-noise term seen by `user`.
pub fn interference_moments(
    pi: &[Vec<f64>],
    rho: &[f64],
    beta: &[f64],
    varsigma_cross: f64,
    user: usize,
) -> (f64, f64) {
    let mut mean = 1.0;
    let mut var = 0.0;
    for j in (0..pi.len()).filter(|&j| j != user) {
        let b = varsigma_cross * beta[j] * rho[j];
        let p0 = pi[j][0];
        mean += b * (1.0 - p0);
        var += b * b * p0 * (1.0 - p0);
    }
    (mean, var)
}

/// Gaussian data-success factor and its partials with respect to the
/// signal term `A`, the mean `E` and the variance `Var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorEval {
    pub value: f64,
    pub d_signal: f64,
    pub d_mean: f64,
    pub d_var: f64,
}

pub fn gaussian_factor(signal: f64, mean: f64, var: f64) -> FactorEval {
    let gaussian = |v: f64| {
        let sd = v.sqrt();
        let z = (signal - mean) / sd;
        let pdf = std_normal_pdf(z);
        FactorEval {
            value: std_normal_cdf(z),
            d_signal: pdf / sd,
            d_mean: -pdf / sd,
            d_var: -pdf * z / (2.0 * v),
        }
    };
    if var >= VAR_FLOOR {
        return gaussian(var);
    }
    let indicator = if signal >= mean { 1.0 } else { 0.0 };
    let w = var / VAR_FLOOR;
    let g = gaussian(VAR_FLOOR);
    FactorEval {
        value: w * g.value + (1.0 - w) * indicator,
        d_signal: w * g.d_signal,
        d_mean: w * g.d_mean,
        d_var: (g.value - indicator) / VAR_FLOOR,
    }
}

/// Data-phase success factor `F_i` (1 under the collision-only model).
pub fn data_factor(state: &SlotState, pi: &[Vec<f64>], rho: &[f64], user: usize) -> f64 {
    match state.success_model {
        SuccessModel::CollisionOnly => 1.0,
        SuccessModel::Full => {
            let c = &state.coeffs;
            let (mean, var) = interference_moments(pi, rho, &state.beta, c.varsigma_cross, user);
            let signal = c.varsigma_self[user] * state.beta[user] * rho[user];
            gaussian_factor(signal, mean, var).value
        }
    }
}

/// `P^p_i * F_i`.
pub fn success_prob(state: &SlotState, pi: &[Vec<f64>], rho: &[f64], user: usize) -> f64 {
    noncollision_prob(pi, user) * data_factor(state, pi, rho, user)
}

/// `J = sum_i eta_i * P^p_i * F_i`.
pub fn expected_sum_priority(state: &SlotState, pi: &[Vec<f64>], rho: &[f64]) -> f64 {
    (0..state.n_users())
        .filter(|&i| state.eta[i] != 0.0)
        .map(|i| state.eta[i] * success_prob(state, pi, rho, i))
        .sum()
}

/// Product over `j` of `1 - pi_jl` supporting exclusion of up to two
/// indices, exact even when some factors are zero.
struct ExclusionProduct {
    nonzero: f64,
    zeros: Vec<usize>,
    factors: Vec<f64>,
}

impl ExclusionProduct {
    fn new(factors: Vec<f64>) -> Self {
        let mut nonzero = 1.0;
        let mut zeros = Vec::new();
        for (j, &f) in factors.iter().enumerate() {
            if f == 0.0 {
                zeros.push(j);
            } else {
                nonzero *= f;
            }
        }
        ExclusionProduct {
            nonzero,
            zeros,
            factors,
        }
    }

    fn excluding(&self, excl: &[usize]) -> f64 {
        if self.zeros.iter().any(|z| !excl.contains(z)) {
            return 0.0;
        }
        let mut p = self.nonzero;
        for &k in excl {
            if self.factors[k] != 0.0 {
                p /= self.factors[k];
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub j: f64,
    pub d_pi: Vec<Vec<f64>>,
    pub d_rho: Vec<f64>,
}

/// Value and exact partials of J with respect to `pi` and `rho`.
pub fn gradient(state: &SlotState, pi: &[Vec<f64>], rho: &[f64]) -> Gradient {
    let n = state.n_users();
    let n_cols = pi.first().map_or(1, Vec::len);
    let mut d_pi = vec![vec![0.0; n_cols]; n];
    let mut d_rho = vec![0.0; n];

    let products: Vec<ExclusionProduct> = (0..n_cols)
        .map(|l| ExclusionProduct::new(pi.iter().map(|row| 1.0 - row[l]).collect()))
        .collect();

    let c = &state.coeffs;
    let full = state.success_model == SuccessModel::Full;
    let mut j_total = 0.0;
    for i in 0..n {
        let eta = state.eta[i];
        if eta == 0.0 {
            continue;
        }
        let p_nc: f64 = (1..n_cols).map(|l| pi[i][l] * products[l].excluding(&[i])).sum();
        let factor = if full {
            let (mean, var) = interference_moments(pi, rho, &state.beta, c.varsigma_cross, i);
            let signal = c.varsigma_self[i] * state.beta[i] * rho[i];
            Some(gaussian_factor(signal, mean, var))
        } else {
            None
        };
        let f = factor.map_or(1.0, |g| g.value);
        j_total += eta * p_nc * f;

        // Through the non-collision probability.
        let w = eta * f;
        if w != 0.0 {
            for l in 1..n_cols {
                d_pi[i][l] += w * products[l].excluding(&[i]);
                if pi[i][l] == 0.0 {
                    continue;
                }
                for k in (0..n).filter(|&k| k != i) {
                    d_pi[k][l] -= w * pi[i][l] * products[l].excluding(&[i, k]);
                }
            }
        }

        // Through the data factor.
        let Some(g) = factor else { continue };
        let w = eta * p_nc;
        if w == 0.0 {
            continue;
        }
        d_rho[i] += w * g.d_signal * c.varsigma_self[i] * state.beta[i];
        let sc = c.varsigma_cross;
        for k in (0..n).filter(|&k| k != i) {
            let b = sc * state.beta[k] * rho[k];
            let p0 = pi[k][0];
            let d_mean_d_p0 = -b;
            let d_var_d_p0 = b * b * (1.0 - 2.0 * p0);
            d_pi[k][0] += w * (g.d_mean * d_mean_d_p0 + g.d_var * d_var_d_p0);
            let d_mean_d_rho = sc * state.beta[k] * (1.0 - p0);
            let d_var_d_rho = 2.0 * sc * state.beta[k] * b * p0 * (1.0 - p0);
            d_rho[k] += w * (g.d_mean * d_mean_d_rho + g.d_var * d_var_d_rho);
        }
    }
    Gradient {
        j: j_total,
        d_pi,
        d_rho,
    }
}

/// Softmax over the allowed entries; disallowed entries get probability 0.
/// Entry 0 (back-off) must be allowed.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Pulls a gradient with respect to softmax outputs back to the logits.
/// Masked entries have zero probability and receive zero gradient.
pub fn softmax_backward(probs: &[f64], d_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(d_probs).map(|(p, g)| p * g).sum();
    probs.iter().zip(d_probs).map(|(p, g)| p * (g - dot)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Policy outputs mapped through the idle-user override: users without a
/// backlog always back off.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub pi: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

impl PolicyOutput {
    pub fn from_raw(
        state: &SlotState,
        logits: &[Vec<f64>],
        preacts: &[f64],
        masks: &[Vec<bool>],
        rho_max: f64,
    ) -> Self {
        let pi = logits
            .iter()
            .zip(masks)
            .zip(&state.backlogged)
            .map(|((z, m), &busy)| {
                if busy {
                    masked_softmax(z, m)
                } else {
                    let mut e0 = vec![0.0; z.len()];
                    e0[0] = 1.0;
                    e0
                }
            })
            .collect();
        let rho = preacts.iter().map(|&p| rho_max * sigmoid(p)).collect();
        PolicyOutput { pi, rho }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawGradient {
    pub j: f64,
    pub d_logits: Vec<Vec<f64>>,
    pub d_preacts: Vec<f64>,
}

/// J and its gradient with respect to the unconstrained network outputs.
pub fn grad_j(
    state: &SlotState,
    logits: &[Vec<f64>],
    preacts: &[f64],
    masks: &[Vec<bool>],
    rho_max: f64,
) -> RawGradient {
    let out = PolicyOutput::from_raw(state, logits, preacts, masks, rho_max);
    let g = gradient(state, &out.pi, &out.rho);
    let d_logits = (0..state.n_users())
        .map(|i| {
            if state.backlogged[i] {
                softmax_backward(&out.pi[i], &g.d_pi[i])
            } else {
                vec![0.0; logits[i].len()]
            }
        })
        .collect();
    let d_preacts = preacts
        .iter()
        .zip(&g.d_rho)
        .map(|(&p, &d)| {
            let s = sigmoid(p);
            d * rho_max * s * (1.0 - s)
        })
        .collect();
    RawGradient {
        j: g.j,
        d_logits,
        d_preacts,
    }
}
