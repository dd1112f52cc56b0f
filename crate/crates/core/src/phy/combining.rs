use nalgebra::DMatrix;

use super::C64;
use crate::config::Combiner;
use crate::error::PhyError;

/// Largest Gram-matrix condition number accepted by zero-forcing.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

/// MR returns the estimates themselves; ZF returns `G (G^H G)^{-1}`, so that
/// `V^H G = I`.
pub fn combining_matrix(g_hat: &DMatrix<C64>, combiner: Combiner) -> Result<DMatrix<C64>, PhyError> {
    match combiner {
        Combiner::Mr => Ok(g_hat.clone()),
        Combiner::Zf => {
            let k = g_hat.ncols();
            if k == 0 {
                return Ok(g_hat.clone());
            }
            if g_hat.nrows() < k {
                return Err(PhyError::TooFewAntennas {
                    antennas: g_hat.nrows(),
                    active: k,
                });
            }
            let gram = g_hat.ad_mul(g_hat);
            let eig = gram.clone().symmetric_eigenvalues();
            let (lo, hi) = eig
                .iter()
                .fold((f64::INFINITY, 0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
            let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if cond > ZF_CONDITION_LIMIT {
                return Err(PhyError::SingularGram { cond });
            }
            let inv = gram.cholesky().ok_or(PhyError::SingularGram { cond })?.inverse();
            Ok(g_hat * inv)
        }
    }
}
