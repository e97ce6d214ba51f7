//! Risk-score synthesis and rank correlation.

use crate::distributions::{derive_seed, RngStream};
use crate::error::{Error, Result};
use crate::estimators::Cohort;

/// Domain tag for the noise stream behind synthetic risk scores.
const SCORE_DOMAIN: u64 = 0x5C0E;

/// Average ranks (1-based); ties receive the mean of their rank range.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &id in &idx[i..=j] {
            ranks[id] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Synthesizes risk scores of controllable strength for a cohort:
/// `S_i = lambda * rank(Y_i)/N + (1 - lambda) * U_i` with `U_i` uniform.
///
/// `lambda = 1` reproduces the value ranks exactly (an oracle score);
/// `lambda = 0` is pure noise.
pub fn make_risk_score(cohort: &Cohort, lambda: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = RngStream::new(derive_seed(seed, SCORE_DOMAIN), 0);
    risk_scores_with_rng(cohort.values(), lambda, &mut rng)
}

/// Same construction, drawing the noise from a caller-supplied stream.
pub fn risk_scores_with_rng(values: &[f64], lambda: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let n = values.len() as f64;
    let ranks = average_ranks(values);
    Ok(ranks
        .iter()
        .map(|r| lambda * r / n + (1.0 - lambda) * rng.uniform())
        .collect())
}

/// Spearman rank correlation: the Pearson correlation of the average-rank
/// vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Parameter("need at least two observations".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Parameter(
            "correlation undefined: an input has zero rank variance".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall's tau-b, used for monotone-trend checks on small grids.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Parameter("need two equal-length samples".into()));
    }
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + ties_x) as f64) * ((n0 + ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Parameter("tau undefined: all pairs tied".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}
