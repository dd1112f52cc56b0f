//! Closed-form SINR and rate proxies.
//!
//! The proxy is the inverse of the expected inverse SINR over the small-scale
//! fading; it depends only on the pilot assignment, the transmit powers and
//! the large-scale coefficients.

use super::{estimate_gain, multiplicities, sinr::instantaneous_rate};
use crate::config::Combiner;
use crate::error::PhyError;

#[derive(Debug, Clone, Copy)]
pub struct RateProxyInput<'a> {
    pub assignment: &'a [usize],
    pub rho: &'a [f64],
    pub beta: &'a [f64],
    pub rho0: f64,
    pub combiner: Combiner,
    pub n_antennas: usize,
    pub n_pilots: usize,
}

pub fn sinr_proxy(input: &RateProxyInput<'_>, user: usize) -> Result<f64, PhyError> {
    let u = multiplicities(input.assignment, input.n_pilots);
    let a = input.assignment[user];
    if a == 0 || u[a - 1] != 1 {
        return Err(PhyError::NotDecodable { user });
    }
    let c_own = estimate_gain(input.rho0, 1);
    let own = input.beta[user] * input.rho[user];
    let m = input.n_antennas as f64;
    let active = input.assignment.iter().enumerate().filter(|(_, &a)| a > 0);
    match input.combiner {
        Combiner::Mr => {
            let total: f64 = active.map(|(j, _)| input.beta[j] * input.rho[j]).sum();
            Ok((m - 1.0) * c_own * own / (total - c_own * own + 1.0))
        }
        Combiner::Zf => {
            let n_active = u.iter().filter(|&&x| x > 0).count();
            if input.n_antennas <= n_active {
                return Err(PhyError::TooFewAntennas {
                    antennas: input.n_antennas,
                    active: n_active,
                });
            }
            // Each interferer leaks through the part of its channel that its
            // own pilot's estimate cannot explain.
            let leak: f64 = active
                .map(|(j, &aj)| {
                    let uj = u[aj - 1];
                    let cj = estimate_gain(input.rho0, uj);
                    (1.0 - cj / uj as f64) * input.beta[j] * input.rho[j]
                })
                .sum();
            Ok((m - n_active as f64) * c_own * own / (leak + 1.0))
        }
    }
}

/// Jensen lower bound on the expected instantaneous rate.
pub fn rate_proxy(input: &RateProxyInput<'_>, user: usize, ell: f64) -> Result<f64, PhyError> {
    sinr_proxy(input, user).map(|s| instantaneous_rate(s, ell))
}
