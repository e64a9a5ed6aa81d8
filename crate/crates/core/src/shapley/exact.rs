use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::oracle::UtilityOracle;

/// Largest layer count [`exact_shapley`] will enumerate (`2^16` evaluations).
pub const DEFAULT_EXACT_CAP: usize = 16;

pub fn exact_shapley(oracle: &dyn UtilityOracle) -> Result<Vec<f64>> {
    exact_shapley_with_cap(oracle, DEFAULT_EXACT_CAP)
}

/// Classical Shapley values by full enumeration:
///
/// `phi_i = sum_{S not containing i} |S|! (L-|S|-1)! / L! * (u(S + i) - u(S))`
///
/// Every coalition is evaluated once. Marginals are summed per coalition size
/// first and then weighted, in a fixed order.
pub fn exact_shapley_with_cap(oracle: &dyn UtilityOracle, cap: usize) -> Result<Vec<f64>> {
    let l = oracle.layer_count();
    if l > cap || l > 30 {
        return Err(Error::TooManyLayers { layer_count: l, cap });
    }
    let utilities = (0u64..1 << l)
        .into_par_iter()
        .map(|code| oracle.evaluate(&Mask::from_u64(l, code)))
        .collect::<Result<Vec<f64>>>()?;

    // |S|! (L-|S|-1)! / L! = 1 / (L * C(L-1, |S|))
    let mut weights = Vec::with_capacity(l);
    let mut binom = 1.0f64;
    for s in 0..l {
        weights.push(1.0 / (l as f64 * binom));
        binom = binom * (l - 1 - s) as f64 / (s + 1) as f64;
    }

    let phi = (0..l)
        .into_par_iter()
        .map(|i| {
            let bit = 1u64 << i;
            let mut by_size = vec![0.0; l];
            for code in (0u64..1 << l).filter(|c| c & bit == 0) {
                by_size[code.count_ones() as usize] += utilities[(code | bit) as usize] - utilities[code as usize];
            }
            by_size.iter().zip(&weights).map(|(sum, w)| sum * w).sum()
        })
        .collect();
    Ok(phi)
}

/// `|sum phi - (u(N) - u(empty))|`; zero for exact Shapley values.
pub fn efficiency_check(phi: &[f64], oracle: &dyn UtilityOracle) -> Result<f64> {
    let l = oracle.layer_count();
    let full = oracle.evaluate(&Mask::full(l))?;
    let empty = oracle.evaluate(&Mask::empty(l))?;
    Ok((phi.iter().sum::<f64>() - (full - empty)).abs())
}
