//! Grid-discretized empirical convolution of cohort sums.
//!
//! For a pool of size `K`, the remainder before the j-th individual test is
//! distributed as the sum of `m = K - j + 1` i.i.d. draws from the cohort
//! distribution. Its CDF is estimated by the recursion
//!
//! ```text
//! F_hat^(1)(c)   = (1/N) sum_i 1(Y_i <= c)
//! F_hat^(m+1)(c) = (1/N) sum_i F_hat^(m)(c - Y_i) 1(Y_i <= c)
//! ```
//!
//! evaluated on a uniform grid over `[0, C]` with linear interpolation
//! between nodes. Only arguments in `[0, C]` are ever needed because of the
//! truncation indicator, so the grid never has to extend past the cutoff.

use crate::error::{Error, Result};
use crate::estimators::{Cohort, EfficiencyEstimate, Method};

/// Default number of grid nodes on `[0, C]`.
pub const DEFAULT_GRID_SIZE: usize = 1024;

const MIN_GRID_SIZE: usize = 64;

/// A CDF estimate tabulated on a uniform grid over `[0, cutoff]`.
#[derive(Debug, Clone)]
pub struct CdfCurve {
    step: f64,
    values: Vec<f64>,
}

impl CdfCurve {
    pub(crate) fn new_unchecked(step: f64, values: Vec<f64>) -> Self {
        CdfCurve { step, values }
    }

    /// Evaluates the curve at `x` with linear interpolation; 0 below the
    /// grid, the final value at and beyond the cutoff.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let t = x / self.step;
        let i = t.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = t - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// The estimate at the cutoff itself (the last grid node).
    pub fn at_cutoff(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Empirical CDF of `values` on the grid nodes.
pub(crate) fn ecdf_on_grid(values: &[f64], cutoff: f64, grid_size: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let step = cutoff / (grid_size - 1) as f64;
    let mut out = Vec::with_capacity(grid_size);
    let mut idx = 0;
    for g in 0..grid_size {
        let x = g as f64 * step;
        while idx < sorted.len() && sorted[idx] <= x {
            idx += 1;
        }
        out.push(idx as f64 / n);
    }
    out
}

/// One step of the truncated-convolution recursion: given the grid of
/// `F_hat^(m)`, produces `F_hat^(m+1)`.
///
/// Each data point contributes a shifted copy of the previous level with
/// fixed interpolation weights, so the inner loop is a fused two-tap stencil.
pub(crate) fn convolve_level(level: &[f64], values: &[f64], cutoff: f64) -> Vec<f64> {
    let g = level.len();
    let step = cutoff / (g - 1) as f64;
    let mut acc = vec![0.0; g];
    for &y in values {
        if y > cutoff {
            continue;
        }
        let t = y / step;
        let q = (t.floor() as usize).min(g - 1);
        let f = t - q as f64;
        if f == 0.0 {
            for gg in q..g {
                acc[gg] += level[gg - q];
            }
        } else {
            let (w0, w1) = (1.0 - f, f);
            for gg in (q + 1)..g {
                acc[gg] += w0 * level[gg - q] + w1 * level[gg - q - 1];
            }
        }
    }
    let n = values.len() as f64;
    for v in &mut acc {
        *v /= n;
    }
    acc
}

/// CDF curves of the m-fold sums for `m = 1..=max_summands`, all truncated
/// to `[0, cutoff]`. Element `m - 1` is the m-summand curve.
pub fn sum_cdf_levels(
    values: &[f64],
    max_summands: usize,
    cutoff: f64,
    grid_size: usize,
) -> Result<Vec<CdfCurve>> {
    if values.is_empty() {
        return Err(Error::Data("empty cohort".into()));
    }
    if max_summands < 1 {
        return Err(Error::Parameter("need at least one summand".into()));
    }
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::Parameter(format!(
            "grid size must be >= {MIN_GRID_SIZE}, got {grid_size}"
        )));
    }
    if !cutoff.is_finite() || cutoff <= 0.0 {
        return Err(Error::Parameter(format!("cutoff must be > 0, got {cutoff}")));
    }
    let step = cutoff / (grid_size - 1) as f64;
    let mut levels = Vec::with_capacity(max_summands);
    levels.push(CdfCurve {
        step,
        values: ecdf_on_grid(values, cutoff, grid_size),
    });
    for _ in 1..max_summands {
        let next = convolve_level(&levels.last().unwrap().values, values, cutoff);
        levels.push(CdfCurve { step, values: next });
    }
    Ok(levels)
}

/// Estimate of `F_T_j` for a pool of size `k`: the CDF of the sum of
/// `k - j + 1` draws, as a full curve on `[0, cutoff]`.
pub fn empirical_tail_cdf(
    cohort: &Cohort,
    j: usize,
    k: usize,
    cutoff: f64,
    grid_size: usize,
) -> Result<CdfCurve> {
    if j < 1 || j > k {
        return Err(Error::Parameter(format!(
            "rank index must satisfy 1 <= j <= K, got j={j}, K={k}"
        )));
    }
    let summands = k - j + 1;
    let mut levels = sum_cdf_levels(cohort.values(), summands, cutoff, grid_size)?;
    Ok(levels.pop().unwrap())
}

/// MP efficiency from the empirical convolution:
/// `phi = (1 + K)/K - F_hat_T1(C)`.
pub fn phi_mp_empirical(
    cohort: &Cohort,
    k: usize,
    cutoff: f64,
    grid_size: usize,
) -> Result<EfficiencyEstimate> {
    let levels = sum_cdf_levels(cohort.values(), k, cutoff, grid_size)?;
    let phi = (1.0 + k as f64) / k as f64 - levels[k - 1].at_cutoff();
    Ok(EfficiencyEstimate {
        phi,
        method: Method::Convolution,
        k,
        ci: None,
    })
}

/// MPA efficiency from the empirical convolution:
/// `phi = 1 - (1/K) sum_{j=1}^{K-1} F_hat_Tj(C)`.
pub fn phi_mpa_empirical(
    cohort: &Cohort,
    k: usize,
    cutoff: f64,
    grid_size: usize,
) -> Result<EfficiencyEstimate> {
    let levels = sum_cdf_levels(cohort.values(), k, cutoff, grid_size)?;
    // T_j has K - j + 1 summands; j = 1..K-1 maps to m = 2..K.
    let sum: f64 = (2..=k).map(|m| levels[m - 1].at_cutoff()).sum();
    Ok(EfficiencyEstimate {
        phi: 1.0 - sum / k as f64,
        method: Method::Convolution,
        k,
        ci: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{gamma_cdf, sample_exponential, RngStream};

    #[test]
    fn level_one_is_the_plain_ecdf() {
        let cohort = Cohort::from_values(vec![200.0, 1200.0, 800.0]).unwrap();
        let curve = empirical_tail_cdf(&cohort, 1, 1, 1000.0, 64).unwrap();
        assert!((curve.at_cutoff() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(curve.eval(100.0), 0.0);
        // Between the jumps at 200 and 800 the interpolated curve is flat.
        assert!((curve.eval(500.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_cohort_pair_sums_never_reach_cutoff() {
        // Every pair sums to 1200 > 1000.
        let cohort = Cohort::from_values(vec![600.0, 600.0]).unwrap();
        let curve = empirical_tail_cdf(&cohort, 1, 2, 1000.0, 128).unwrap();
        assert_eq!(curve.at_cutoff(), 0.0);
        let phi_mp = phi_mp_empirical(&cohort, 2, 1000.0, 128).unwrap();
        assert!((phi_mp.phi - 1.5).abs() < 1e-12);
        let phi_mpa = phi_mpa_empirical(&cohort, 2, 1000.0, 128).unwrap();
        assert!((phi_mpa.phi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converges_to_erlang_for_exponential_cohorts() {
        let mut rng = RngStream::new(31, 0);
        let values = sample_exponential(400.0, 200_000, &mut rng).unwrap();
        let cohort = Cohort::from_values(values).unwrap();
        let curve = empirical_tail_cdf(&cohort, 1, 3, 1000.0, 1024).unwrap();
        let expected = gamma_cdf(1000.0, 3, 400.0).unwrap();
        assert!(
            (curve.at_cutoff() - expected).abs() < 5e-3,
            "{} vs {expected}",
            curve.at_cutoff()
        );
    }

    #[test]
    fn all_zero_cohort_gives_trivial_efficiencies() {
        let cohort = Cohort::from_values(vec![0.0; 50]).unwrap();
        let mp = phi_mp_empirical(&cohort, 4, 1000.0, 64).unwrap();
        assert!((mp.phi - 0.25).abs() < 1e-12);
        let mpa = phi_mpa_empirical(&cohort, 3, 1000.0, 64).unwrap();
        assert!((mpa.phi - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tail_cdfs_decrease_with_more_summands() {
        let mut rng = RngStream::new(32, 0);
        let values = sample_exponential(350.0, 3000, &mut rng).unwrap();
        let levels = sum_cdf_levels(&values, 6, 1000.0, 512).unwrap();
        for m in 1..levels.len() {
            assert!(levels[m].at_cutoff() <= levels[m - 1].at_cutoff() + 1e-12);
        }
    }

    #[test]
    fn curves_are_monotone_in_x() {
        let mut rng = RngStream::new(33, 0);
        let values = sample_exponential(500.0, 1000, &mut rng).unwrap();
        let levels = sum_cdf_levels(&values, 4, 1000.0, 256).unwrap();
        for curve in &levels {
            for w in curve.values().windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
        }
    }

    #[test]
    fn mpa_never_beats_neither_mp_nor_individual_testing() {
        let mut rng = RngStream::new(34, 0);
        for theta in [200.0, 400.0, 800.0] {
            let values = sample_exponential(theta, 1500, &mut rng).unwrap();
            let cohort = Cohort::from_values(values).unwrap();
            for k in 2..=6 {
                let mp = phi_mp_empirical(&cohort, k, 1000.0, 256).unwrap().phi;
                let mpa = phi_mpa_empirical(&cohort, k, 1000.0, 256).unwrap().phi;
                assert!(mpa <= mp.min(1.0) + 1e-12, "theta={theta} k={k}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let cohort = Cohort::from_values(vec![1.0, 2.0]).unwrap();
        assert!(empirical_tail_cdf(&cohort, 0, 3, 1000.0, 64).is_err());
        assert!(empirical_tail_cdf(&cohort, 4, 3, 1000.0, 64).is_err());
        assert!(empirical_tail_cdf(&cohort, 1, 3, 1000.0, 32).is_err());
        assert!(sum_cdf_levels(&[], 2, 1000.0, 64).is_err());
    }
}
