use nalgebra::DMatrix;
use rand::Rng;

use super::{complex_gaussian, multiplicities, LsfcVector, C64};

/// One slot's small-scale fading and de-spread pilot observations.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// M x N small-scale fading, i.i.d. CN(0, 1).
    pub h: DMatrix<C64>,
    /// Pilot choice per user; 0 means back-off.
    pub assignment: Vec<usize>,
    /// True multiplicities |U_l|, index l - 1.
    pub multiplicity: Vec<usize>,
    /// M x L de-spread pilot statistics `phi_l^H y_m`.
    pub despread: DMatrix<C64>,
    pub rho0: f64,
}

impl ChannelRealization {
    pub fn n_antennas(&self) -> usize {
        self.h.nrows()
    }

    /// Active pilots (1-based) in increasing order.
    pub fn active_pilots(&self) -> Vec<usize> {
        (1..=self.multiplicity.len())
            .filter(|&l| self.multiplicity[l - 1] > 0)
            .collect()
    }

    pub fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, _)| i)
    }

    /// True when the user transmitted a pilot no one else picked.
    pub fn is_non_collided(&self, user: usize) -> bool {
        let a = self.assignment[user];
        a > 0 && self.multiplicity[a - 1] == 1
    }
}

/// Draws the fading and the received pilot signal for assignment `a`.
///
/// Pilots are the canonical orthonormal basis of C^L; under channel inversion
/// every active user arrives with pilot SNR `rho0`, so the de-spread statistic
/// of pilot `l` at antenna `m` is `sqrt(rho0) * sum_{i in U_l} h_im + w_ml`.
pub fn pilot_phase<R: Rng + ?Sized>(
    lsfc: &LsfcVector,
    assignment: &[usize],
    n_antennas: usize,
    n_pilots: usize,
    rng: &mut R,
) -> ChannelRealization {
    let n = assignment.len();
    let h = DMatrix::from_fn(n_antennas, n, |_, _| complex_gaussian(rng));
    let mut despread = DMatrix::from_fn(n_antennas, n_pilots, |_, _| complex_gaussian(rng));
    let amp = lsfc.rho0.sqrt();
    for (i, &a) in assignment.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let mut col = despread.column_mut(a - 1);
        col.axpy(C64::new(amp, 0.0), &h.column(i), C64::new(1.0, 0.0));
    }
    ChannelRealization {
        h,
        multiplicity: multiplicities(assignment, n_pilots),
        assignment: assignment.to_vec(),
        despread,
        rho0: lsfc.rho0,
    }
}

/// Energy-detection estimate of the pilot multiplicities.
///
/// Only a diagnostic: the receiver chain is fed the true multiplicities.
pub fn energy_detect_multiplicity(real: &ChannelRealization) -> Vec<usize> {
    let m = real.n_antennas() as f64;
    real.despread
        .column_iter()
        .map(|col| {
            let stat = col.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
            ((stat - 1.0) / real.rho0).round().max(0.0) as usize
        })
        .collect()
}

/// Mean-square of the MMSE estimate for a pilot shared by `u` users.
#[inline]
pub fn estimate_gain(rho0: f64, u: usize) -> f64 {
    let s = rho0 * u as f64;
    s / (s + 1.0)
}

/// MMSE estimates of the effective channels of the active pilots.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Active pilots (1-based), one per column of `g_hat`.
    pub pilots: Vec<usize>,
    /// M x |active| estimates.
    pub g_hat: DMatrix<C64>,
    /// Mean-square `c_l` of each estimate.
    pub c: Vec<f64>,
}

impl ChannelEstimate {
    /// Column of `g_hat` holding pilot `l`.
    pub fn column_of(&self, pilot: usize) -> Option<usize> {
        self.pilots.iter().position(|&p| p == pilot)
    }
}

pub fn mmse_estimate(real: &ChannelRealization) -> ChannelEstimate {
    let pilots = real.active_pilots();
    let m = real.n_antennas();
    let mut g_hat = DMatrix::zeros(m, pilots.len());
    let mut c = Vec::with_capacity(pilots.len());
    for (k, &l) in pilots.iter().enumerate() {
        let s = real.rho0 * real.multiplicity[l - 1] as f64;
        let scale = s.sqrt() / (s + 1.0);
        g_hat
            .column_mut(k)
            .zip_apply(&real.despread.column(l - 1), |g, y| *g = y * scale);
        c.push(estimate_gain(real.rho0, real.multiplicity[l - 1]));
    }
    ChannelEstimate { pilots, g_hat, c }
}
