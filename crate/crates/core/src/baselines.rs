//! Benchmark access schemes.
//!
//! - Baseline 1: genie-aided access barring with `p = min(L / |K|, 1)`, a
//!   uniformly random pilot and full power.
//! - Baseline 2: collision-free schedule for the paired layout `N = 2L`;
//!   the first `L` users own even slots, the rest odd slots.
//! - Baseline 3: unique non-orthogonal pilots with joint MMSE estimation and
//!   ZF (MR when overloaded); access follows Baseline 1's barring.
//!
//! All baselines transmit at full power with zero-forcing combining.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::config::Combiner;
use crate::error::{ConfigError, PhyError};
use crate::phy::{combining_matrix, complex_gaussian, C64};
use crate::sim::env::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    AccessBarring,
    Scheduled,
    NonOrthogonal,
}

impl FromStr for Baseline {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "baseline1" => Ok(Baseline::AccessBarring),
            "2" | "baseline2" => Ok(Baseline::Scheduled),
            "3" | "baseline3" => Ok(Baseline::NonOrthogonal),
            other => Err(ConfigError::Parse(format!("unknown baseline `{other}`"))),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::AccessBarring => "baseline1",
            Baseline::Scheduled => "baseline2",
            Baseline::NonOrthogonal => "baseline3",
        })
    }
}

/// Optimal barring probability given the number of backlogged users.
pub fn barring_probability(n_backlogged: usize, n_pilots: usize) -> f64 {
    if n_backlogged == 0 {
        return 0.0;
    }
    (n_pilots as f64 / n_backlogged as f64).min(1.0)
}

/// Baseline 1: each backlogged user transmits with the barring probability on
/// a uniformly chosen pilot.
pub fn baseline1_step<R: Rng + ?Sized>(backlogged: &[bool], n_pilots: usize, rho_max: f64, rng: &mut R) -> Decision {
    let p = barring_probability(backlogged.iter().filter(|&&b| b).count(), n_pilots);
    let assignment = backlogged
        .iter()
        .map(|&busy| {
            // Two draws per user keep the stream aligned across slots.
            let u: f64 = rng.random();
            let pilot = rng.random_range(1..=n_pilots);
            if busy && u < p {
                pilot
            } else {
                0
            }
        })
        .collect();
    Decision {
        assignment,
        rho: vec![rho_max; backlogged.len()],
    }
}

/// Baseline 2: user `i < L` uses pilot `i + 1` in even slots, user `i >= L`
/// uses pilot `i - L + 1` in odd slots.
pub fn baseline2_step(slot: u64, backlogged: &[bool], n_pilots: usize, rho_max: f64) -> Result<Decision, PhyError> {
    let n = backlogged.len();
    if n != 2 * n_pilots {
        return Err(PhyError::Invalid(format!(
            "the scheduled baseline needs N = 2L, got N = {n} and L = {n_pilots}"
        )));
    }
    let even = slot.is_multiple_of(2);
    let assignment = (0..n)
        .map(|i| {
            let first_half = i < n_pilots;
            if backlogged[i] && first_half == even {
                i % n_pilots + 1
            } else {
                0
            }
        })
        .collect();
    Ok(Decision {
        assignment,
        rho: vec![rho_max; n],
    })
}

/// Unique unit-norm pilot sequences of length `L`, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct NonOrthPilotBook {
    pub psi: DMatrix<C64>,
}

impl NonOrthPilotBook {
    /// I.i.d. complex Gaussian columns normalized to unit energy.
    pub fn generate<R: Rng + ?Sized>(n_pilots: usize, n_users: usize, rng: &mut R) -> Self {
        let mut psi = DMatrix::from_fn(n_pilots, n_users, |_, _| complex_gaussian(rng));
        for mut col in psi.column_iter_mut() {
            let norm = col.norm();
            col /= C64::new(norm, 0.0);
        }
        NonOrthPilotBook { psi }
    }

    pub fn n_pilots(&self) -> usize {
        self.psi.nrows()
    }

    /// `sqrt(rho0) * conj(Psi_act)`, `L x |active|`.
    pub fn effective(&self, active: &[usize], rho0: f64) -> DMatrix<C64> {
        let amp = C64::new(rho0.sqrt(), 0.0);
        DMatrix::from_fn(self.n_pilots(), active.len(), |l, k| {
            self.psi[(l, active[k])].conj() * amp
        })
    }
}

/// Fading of all users and the received pilot block `Y = H_act Psi~^H + W`.
/// Draw order matches the orthogonal pilot phase: fading first, then noise.
pub fn nonorth_pilot_phase<R: Rng + ?Sized>(
    book: &NonOrthPilotBook,
    n_users: usize,
    active: &[usize],
    rho0: f64,
    n_antennas: usize,
    rng: &mut R,
) -> (DMatrix<C64>, DMatrix<C64>) {
    let h = DMatrix::from_fn(n_antennas, n_users, |_, _| complex_gaussian(rng));
    let mut y = DMatrix::from_fn(n_antennas, book.n_pilots(), |_, _| complex_gaussian(rng));
    if !active.is_empty() {
        let psi_t = book.effective(active, rho0);
        let h_act = DMatrix::from_fn(n_antennas, active.len(), |m, k| h[(m, active[k])]);
        y += h_act * psi_t.adjoint();
    }
    (h, y)
}

fn regularized_gram_inverse(psi_t: &DMatrix<C64>) -> DMatrix<C64> {
    let k = psi_t.ncols();
    let gram = psi_t.ad_mul(psi_t) + DMatrix::<C64>::identity(k, k);
    gram.cholesky()
        .expect("identity-regularized Gram matrix is positive definite")
        .inverse()
}

/// Joint MMSE estimate `Y Psi~ (Psi~^H Psi~ + I)^{-1}` of the active channels.
pub fn nonorth_mmse(book: &NonOrthPilotBook, y: &DMatrix<C64>, active: &[usize], rho0: f64) -> DMatrix<C64> {
    if active.is_empty() {
        return DMatrix::zeros(y.nrows(), 0);
    }
    let psi_t = book.effective(active, rho0);
    y * &psi_t * regularized_gram_inverse(&psi_t)
}

/// Analytic per-antenna estimation error summed over the active users,
/// `tr((I + Psi~^H Psi~)^{-1})`.
pub fn nonorth_error_trace(book: &NonOrthPilotBook, active: &[usize], rho0: f64) -> f64 {
    if active.is_empty() {
        return 0.0;
    }
    regularized_gram_inverse(&book.effective(active, rho0)).trace().re
}

/// ZF when the active set fits the pilot dimension, MR otherwise.
pub fn baseline3_combiner(n_active: usize, n_pilots: usize) -> Combiner {
    if n_active <= n_pilots {
        Combiner::Zf
    } else {
        Combiner::Mr
    }
}

/// Full Baseline 3 receiver for one slot; SINR of every user, `None` for
/// inactive users or when combining fails.
pub fn nonorth_sinrs<R: Rng + ?Sized>(
    book: &NonOrthPilotBook,
    beta: &[f64],
    rho0: f64,
    assignment: &[usize],
    rho: &[f64],
    n_antennas: usize,
    rng: &mut R,
) -> Vec<Option<f64>> {
    let n = assignment.len();
    let active: Vec<usize> = (0..n).filter(|&i| assignment[i] != 0).collect();
    let (h, y) = nonorth_pilot_phase(book, n, &active, rho0, n_antennas, rng);
    let mut out = vec![None; n];
    if active.is_empty() {
        return out;
    }
    let h_hat = nonorth_mmse(book, &y, &active, rho0);
    let Ok(v) = combining_matrix(&h_hat, baseline3_combiner(active.len(), book.n_pilots())) else {
        return out;
    };
    for (k, &i) in active.iter().enumerate() {
        let vk = v.column(k);
        let own = beta[i] * rho[i];
        let signal = own * vk.dotc(&h_hat.column(k)).norm_sqr();
        let err = h.column(i) - h_hat.column(k);
        let mut denom = own * vk.dotc(&err).norm_sqr() + vk.norm_squared();
        for &j in active.iter().filter(|&&j| j != i) {
            denom += beta[j] * rho[j] * vk.dotc(&h.column(j)).norm_sqr();
        }
        out[i] = Some(signal / denom);
    }
    out
}
