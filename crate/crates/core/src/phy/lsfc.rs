use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::SystemConfig;
use crate::error::PhyError;

/// Normalized large-scale fading coefficients of one user drop.
///
/// `beta` carries the 1/noise normalization, so `beta[i] * rho` is the
/// received SNR per antenna for transmit power `rho` (mW).
#[derive(Debug, Clone, PartialEq)]
pub struct LsfcVector {
    pub beta: Vec<f64>,
    pub beta_min: f64,
    /// Effective pilot SNR under channel inversion, `L * beta_min * rho_max`.
    pub rho0: f64,
}

impl LsfcVector {
    pub fn new(beta: Vec<f64>, n_pilots: usize, rho_max: f64) -> Self {
        let beta_min = beta.iter().copied().fold(f64::INFINITY, f64::min);
        LsfcVector {
            rho0: n_pilots as f64 * beta_min * rho_max,
            beta,
            beta_min,
        }
    }

    pub fn beta_db(&self, user: usize) -> f64 {
        10.0 * self.beta[user].log10()
    }
}

/// Urban-microcell path gain in dB at `dist_km` (2 GHz carrier).
pub fn path_gain_db(dist_km: f64) -> f64 {
    -140.6 - 36.7 * dist_km.log10()
}

/// Centre site followed by its six wrap-around neighbours.
///
/// The hexagon has a vertex on the positive x axis, so neighbouring sites sit
/// `sqrt(3) * R` away along the edge normals.
pub fn wraparound_sites(cell_radius_km: f64) -> [(f64, f64); 7] {
    let isd = 3f64.sqrt() * cell_radius_km;
    let mut sites = [(0.0, 0.0); 7];
    for (k, site) in sites.iter_mut().skip(1).enumerate() {
        let ang = (30.0 + 60.0 * k as f64).to_radians();
        *site = (isd * ang.cos(), isd * ang.sin());
    }
    sites
}

fn inside_hexagon(x: f64, y: f64, r: f64) -> bool {
    let s3 = 3f64.sqrt();
    y.abs() <= s3 / 2.0 * r && s3 * x.abs() + y.abs() <= s3 * r
}

fn drop_position<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> (f64, f64) {
    let r = cfg.cell_radius_km;
    loop {
        let x = rng.random_range(-r..r);
        let y = rng.random_range(-r..r);
        if inside_hexagon(x, y, r) && x.hypot(y) >= cfg.exclusion_radius_km {
            return (x, y);
        }
    }
}

/// Drops every user uniformly in the hexagonal cell (outside the exclusion
/// disk) and returns its strongest large-scale coefficient over the seven
/// wrap-around sites, normalized by the receiver noise power.
pub fn gen_lsfc<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<LsfcVector, PhyError> {
    if cfg.exclusion_radius_km >= cfg.cell_radius_km {
        return Err(PhyError::Invalid(format!(
            "exclusion radius {} km is not inside the {} km cell",
            cfg.exclusion_radius_km, cfg.cell_radius_km
        )));
    }
    let shadow = Normal::new(0.0, cfg.shadow_variance_db.sqrt()).map_err(|e| PhyError::Invalid(e.to_string()))?;
    let sites = wraparound_sites(cfg.cell_radius_km);
    let noise_dbm = cfg.noise_power_dbm();
    let beta = (0..cfg.n_users)
        .map(|_| {
            let (x, y) = drop_position(cfg, rng);
            let best_db = sites
                .iter()
                .map(|&(sx, sy)| path_gain_db((x - sx).hypot(y - sy)) + shadow.sample(rng))
                .fold(f64::NEG_INFINITY, f64::max);
            // dB -> linear mW gain, then divide by the noise power in mW.
            10f64.powf((best_db - noise_dbm) / 10.0)
        })
        .collect();
    Ok(LsfcVector::new(beta, cfg.n_pilots, cfg.rho_max()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_gain_at_one_km() {
        assert_eq!(path_gain_db(1.0), -140.6);
    }

    #[test]
    fn rho0_uses_weakest_user() {
        let l = LsfcVector::new(vec![2.0, 0.5, 4.0], 2, 10.0);
        assert_eq!(l.beta_min, 0.5);
        assert_eq!(l.rho0, 10.0);
    }

    #[test]
    fn neighbours_are_one_inter_site_distance_away() {
        let sites = wraparound_sites(1.0);
        for &(x, y) in &sites[1..] {
            assert!((x.hypot(y) - 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn drops_stay_in_cell() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let (x, y) = drop_position(&cfg, &mut rng);
            assert!(x.hypot(y) <= cfg.cell_radius_km + 1e-12);
            assert!(x.hypot(y) >= cfg.exclusion_radius_km);
        }
    }

    #[test]
    fn rejects_bad_exclusion_zone() {
        let cfg = SystemConfig {
            exclusion_radius_km: 2.0,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_lsfc(&cfg, &mut rng).is_err());
    }

    #[test]
    fn lsfc_positive_and_consistent() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = gen_lsfc(&cfg, &mut rng).unwrap();
        assert_eq!(l.beta.len(), cfg.n_users);
        assert!(l.beta.iter().all(|&b| b > 0.0));
        let expect = cfg.n_pilots as f64 * l.beta_min * cfg.rho_max();
        assert_eq!(l.rho0, expect);
    }
}
