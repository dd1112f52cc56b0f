use nalgebra::{DMatrix, DVectorView};

use super::{ChannelEstimate, ChannelRealization, C64};
use crate::error::PhyError;

#[inline]
fn inner_sqr(v: &DVectorView<'_, C64>, x: &DVectorView<'_, C64>) -> f64 {
    v.dotc(x).norm_sqr()
}

/// Instantaneous SINR of a non-collided user after combining with `v`
/// (whose columns follow `est.pilots`). The user's effective channel equals
/// its own fading vector, so the estimation error is `h_i - g_hat`.
pub fn instantaneous_sinr(
    real: &ChannelRealization,
    est: &ChannelEstimate,
    v: &DMatrix<C64>,
    beta: &[f64],
    rho: &[f64],
    user: usize,
) -> Result<f64, PhyError> {
    if !real.is_non_collided(user) {
        return Err(PhyError::NotDecodable { user });
    }
    let k = est
        .column_of(real.assignment[user])
        .ok_or(PhyError::NotDecodable { user })?;
    let vi = v.column(k);
    let g_hat = est.g_hat.column(k);
    let h_i = real.h.column(user);
    let g_err = h_i - g_hat;

    let own = beta[user] * rho[user];
    let signal = own * inner_sqr(&vi, &g_hat);
    let mut denom = own * vi.dotc(&g_err).norm_sqr() + vi.norm_squared();
    for j in real.active_users().filter(|&j| j != user) {
        denom += beta[j] * rho[j] * inner_sqr(&vi, &real.h.column(j));
    }
    Ok(signal / denom)
}

/// SINR of every user: `Some` for non-collided active users, `None` otherwise.
pub fn decode_sinrs(
    real: &ChannelRealization,
    est: &ChannelEstimate,
    v: &DMatrix<C64>,
    beta: &[f64],
    rho: &[f64],
) -> Vec<Option<f64>> {
    (0..real.assignment.len())
        .map(|i| instantaneous_sinr(real, est, v, beta, rho, i).ok())
        .collect()
}

/// Achievable rate with SINR gap `1 / ell`, bits/s/Hz.
pub fn instantaneous_rate(sinr: f64, ell: f64) -> f64 {
    (ell * sinr).ln_1p() / std::f64::consts::LN_2
}
