//! Plug-in estimator for mMPA efficiency from concomitant order statistics.
//!
//! For the j-th tested sample of a pool of size `K`, the remainder
//! `T_[j] = V_[j] + T_[j+1]` splits, conditionally on the j-th highest score
//! sitting at uniform-scale position `u`, into an independent sum: one draw
//! from the score-conditional value distribution plus `K - j` draws from the
//! value distribution truncated to scores below `u`. Integrating the
//! convolution against the order-statistic density of `u` gives
//! `Pr(T_[j] <= C)`, and
//!
//! ```text
//! phi = 1 - (1/K) sum_{j=1}^{K-1} Pr(T_[j] <= C).
//! ```
//!
//! Estimation choices:
//!
//! * Scores enter only through their ranks; they are mapped to `(0, 1]` by
//!   the empirical rank transform. The j-th highest of `K` uniform positions
//!   has the Beta(K+1-j, j) density, which is integrated by midpoint
//!   quadrature with the node mass renormalized to one.
//! * The score-conditional value distribution at position `u` is estimated
//!   by a rank window: the `2w + 1` nearest score-neighbors with
//!   `w = ceil(sqrt(N))`. A point-mass plug-in would be degenerate for
//!   continuous scores.
//! * The `j = 1` term needs no conditioning at all (`T_[1]` is the full pool
//!   sum), so it is taken directly from the unconditional convolution ladder.
//!   This also makes `K = 2` coincide with the MPA estimator exactly.

use crate::distributions::beta_order_weight;
use crate::error::{Error, Result};
use crate::estimators::convolution::{convolve_level, ecdf_on_grid, sum_cdf_levels, CdfCurve};
use crate::estimators::score::average_ranks;
use crate::estimators::{Cohort, EfficiencyEstimate, Method};

/// Midpoint quadrature nodes over the uniform-scale score axis.
const QUAD_NODES: usize = 48;

/// mMPA efficiency estimate for a single pool size.
pub fn phi_mmpa_formula(
    cohort: &Cohort,
    k: usize,
    cutoff: f64,
    grid_size: usize,
) -> Result<EfficiencyEstimate> {
    Ok(phi_mmpa_formula_sweep(cohort, &[k], cutoff, grid_size)?.remove(0))
}

/// mMPA efficiency for several pool sizes at once. The conditioning
/// structure (rank transform, prefix ladders, windows) does not depend on
/// `K`, so a sweep shares all of the expensive work.
pub fn phi_mmpa_formula_sweep(
    cohort: &Cohort,
    ks: &[usize],
    cutoff: f64,
    grid_size: usize,
) -> Result<Vec<EfficiencyEstimate>> {
    let scores = cohort.scores().ok_or_else(|| {
        Error::Configuration("mMPA estimation requires a cohort with risk scores".into())
    })?;
    if ks.is_empty() {
        return Ok(Vec::new());
    }
    if ks.iter().any(|&k| k < 1) {
        return Err(Error::Parameter("pool size must be >= 1".into()));
    }
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return Err(Error::Data(
            "risk scores are degenerate: fewer than 2 distinct values".into(),
        ));
    }

    let n = cohort.len();
    let k_max = *ks.iter().max().unwrap();

    // Uniform-scale score positions and the cohort sorted by score.
    let ranks = average_ranks(scores);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ranks[a].partial_cmp(&ranks[b]).unwrap());
    let sorted_values: Vec<f64> = order.iter().map(|&i| cohort.values()[i]).collect();
    let sorted_positions: Vec<f64> = order.iter().map(|&i| ranks[i] / n as f64).collect();

    // Unconditional ladder; level m-1 is the m-summand sum CDF. Supplies the
    // exact j = 1 terms.
    let levels = sum_cdf_levels(cohort.values(), k_max, cutoff, grid_size)?;

    // Per-node conditional structure, shared across pool sizes.
    let window_half = (n as f64).sqrt().ceil() as usize;
    let max_prefix_summands = k_max.saturating_sub(2);
    let mut nodes = Vec::with_capacity(QUAD_NODES);
    for m in 0..QUAD_NODES {
        let u = (m as f64 + 0.5) / QUAD_NODES as f64;
        let prefix_len = sorted_positions.partition_point(|&p| p < u);
        if prefix_len == 0 {
            // The order-statistic densities used below vanish as u -> 0.
            continue;
        }
        let prefix = &sorted_values[..prefix_len];
        let ladders = prefix_ladders(prefix, max_prefix_summands, cutoff, grid_size);

        let center = ((u * n as f64).round() as usize).clamp(1, n) - 1;
        let lo = center.saturating_sub(window_half);
        let hi = (center + window_half + 1).min(n);
        let window = &sorted_values[lo..hi];

        nodes.push(QuadNode { u, ladders, window });
    }

    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut sum_tail = 0.0;
        if k >= 2 {
            // j = 1: the full-pool sum, no conditioning.
            sum_tail += levels[k - 1].at_cutoff();
        }
        for j in 2..k {
            let summands = k - j;
            let (mut num, mut mass) = (0.0, 0.0);
            for node in &nodes {
                let weight = beta_order_weight((k + 1 - j) as u32, k as u32, node.u)?;
                if weight == 0.0 {
                    continue;
                }
                let a = &node.ladders[summands - 1];
                let g: f64 = node
                    .window
                    .iter()
                    .map(|&y| a.eval(cutoff - y))
                    .sum::<f64>()
                    / node.window.len() as f64;
                num += weight * g;
                mass += weight;
            }
            if mass > 0.0 {
                sum_tail += (num / mass).clamp(0.0, 1.0);
            }
        }
        out.push(EfficiencyEstimate {
            phi: 1.0 - sum_tail / k as f64,
            method: Method::BetaFormula,
            k,
            ci: None,
        });
    }
    Ok(out)
}

struct QuadNode<'a> {
    u: f64,
    ladders: Vec<CdfCurve>,
    window: &'a [f64],
}

/// Convolution ladder over a score-prefix: level m-1 is the CDF of the sum
/// of m draws from the prefix distribution, truncated to `[0, cutoff]`.
fn prefix_ladders(prefix: &[f64], max_summands: usize, cutoff: f64, grid_size: usize) -> Vec<CdfCurve> {
    let mut ladders = Vec::with_capacity(max_summands.max(1));
    let base = ecdf_on_grid(prefix, cutoff, grid_size);
    let step = cutoff / (grid_size - 1) as f64;
    ladders.push(CdfCurve::new_unchecked(step, base));
    for _ in 1..max_summands {
        let next = convolve_level(ladders.last().unwrap().values(), prefix, cutoff);
        ladders.push(CdfCurve::new_unchecked(step, next));
    }
    ladders
}
