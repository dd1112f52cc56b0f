//! Physical layer: large-scale fading, the pilot phase with channel-inversion
//! power control, MMSE estimation of the per-pilot effective channels, MR/ZF
//! combining, the instantaneous SINR, and the closed-form rate proxies.

mod channel;
mod combining;
mod lsfc;
mod proxy;
mod sinr;

pub use channel::{
    energy_detect_multiplicity, estimate_gain, mmse_estimate, pilot_phase, ChannelEstimate, ChannelRealization,
};
pub use combining::{combining_matrix, ZF_CONDITION_LIMIT};
pub use lsfc::{gen_lsfc, path_gain_db, wraparound_sites, LsfcVector};
pub use proxy::{rate_proxy, sinr_proxy, RateProxyInput};
pub use sinr::{decode_sinrs, instantaneous_rate, instantaneous_sinr};

use nalgebra::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;

/// One draw of a circularly-symmetric CN(0, 1) variable.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Pilot multiplicities |U_l| for l = 1..=L, stored at index l - 1.
pub fn multiplicities(assignment: &[usize], n_pilots: usize) -> Vec<usize> {
    let mut u = vec![0; n_pilots];
    for &a in assignment {
        if a > 0 {
            u[a - 1] += 1;
        }
    }
    u
}
