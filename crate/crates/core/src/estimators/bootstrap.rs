//! Percentile bootstrap over cohort rows.
//!
//! Resampling is by individual: each resample draws `N` (value, score) rows
//! with replacement. Statistics receive their own derived seed per resample,
//! and in paired mode both statistics see the same resample and the same
//! seed, so procedure differences are evaluated on common draws.

use rayon::prelude::*;

use crate::distributions::{derive_seed, RngStream};
use crate::error::{Error, Result};
use crate::estimators::Cohort;
use rand::Rng;

const RESAMPLE_DOMAIN: u64 = 0xB007_5EED;
const STATISTIC_DOMAIN: u64 = 0xB007_57A7;

/// Minimum number of resamples.
pub const MIN_RESAMPLES: usize = 100;

/// A statistic evaluated on a resampled cohort with a derived seed.
pub trait Statistic: Sync {
    fn evaluate(&self, cohort: &Cohort, seed: u64) -> Result<f64>;
}

impl<F> Statistic for F
where
    F: Fn(&Cohort, u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, cohort: &Cohort, seed: u64) -> Result<f64> {
        self(cohort, seed)
    }
}

/// 95% percentile confidence interval of `stat` over `b` resamples.
pub fn bootstrap_percentile_ci<S: Statistic>(
    cohort: &Cohort,
    b: usize,
    seed: u64,
    stat: &S,
) -> Result<(f64, f64)> {
    let samples = bootstrap_samples(cohort, b, seed, &|resample, stat_seed| {
        stat.evaluate(resample, stat_seed)
    })?;
    Ok(percentile_interval(samples))
}

/// 95% percentile interval of the paired difference `stat_a - stat_b`, both
/// evaluated on the same resample before differencing.
pub fn bootstrap_paired_diff_ci<A: Statistic, B: Statistic>(
    cohort: &Cohort,
    b: usize,
    seed: u64,
    stat_a: &A,
    stat_b: &B,
) -> Result<(f64, f64)> {
    let samples = bootstrap_samples(cohort, b, seed, &|resample, stat_seed| {
        Ok(stat_a.evaluate(resample, stat_seed)? - stat_b.evaluate(resample, stat_seed)?)
    })?;
    Ok(percentile_interval(samples))
}

fn bootstrap_samples(
    cohort: &Cohort,
    b: usize,
    seed: u64,
    eval: &(impl Fn(&Cohort, u64) -> Result<f64> + Sync),
) -> Result<Vec<f64>> {
    if b < MIN_RESAMPLES {
        return Err(Error::Parameter(format!(
            "need at least {MIN_RESAMPLES} bootstrap resamples, got {b}"
        )));
    }
    let n = cohort.len();
    let resample_seed = derive_seed(seed, RESAMPLE_DOMAIN);
    let stat_seed_base = derive_seed(seed, STATISTIC_DOMAIN);
    let raw: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(resample_seed, r);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = cohort.select(&indices);
            match eval(&resample, derive_seed(stat_seed_base, r)) {
                Ok(v) if v.is_finite() => Some(v),
                _ => None,
            }
        })
        .collect();
    let mut samples: Vec<f64> = raw.iter().filter_map(|v| *v).collect();
    let skipped = b - samples.len();
    if skipped as f64 > 0.01 * b as f64 {
        return Err(Error::Estimation(format!(
            "{skipped} of {b} bootstrap resamples failed (more than 1%)"
        )));
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(samples)
}

/// Linear-interpolation percentile interval at 2.5% / 97.5%.
fn percentile_interval(sorted: Vec<f64>) -> (f64, f64) {
    (quantile(&sorted, 0.025), quantile(&sorted, 0.975))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_cohort_yields_zero_width_interval() {
        // Every resample of an all-identical cohort is the same cohort, so
        // any cohort-determined statistic collapses to a point.
        let cohort = Cohort::new(vec![700.0; 40], Some(vec![0.3; 40])).unwrap();
        let stat = |c: &Cohort, _seed: u64| Ok(c.values().iter().sum::<f64>() / c.len() as f64);
        let (lo, hi) = bootstrap_percentile_ci(&cohort, 200, 9, &stat).unwrap();
        assert_eq!(lo, 700.0);
        assert_eq!(hi, 700.0);
    }

    #[test]
    fn interval_brackets_the_sample_mean() {
        let values: Vec<f64> = (0..200).map(|i| (i % 17) as f64 * 10.0).collect();
        let cohort = Cohort::from_values(values.clone()).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let stat = |c: &Cohort, _seed: u64| Ok(c.values().iter().sum::<f64>() / c.len() as f64);
        let (lo, hi) = bootstrap_percentile_ci(&cohort, 400, 3, &stat).unwrap();
        assert!(lo < mean && mean < hi, "({lo}, {hi}) vs {mean}");
        assert!(lo < hi);
    }

    #[test]
    fn paired_difference_of_identical_statistics_is_zero() {
        let cohort = Cohort::from_values((1..=50).map(f64::from).collect()).unwrap();
        let stat = |c: &Cohort, _seed: u64| Ok(c.values().iter().sum::<f64>());
        let (lo, hi) = bootstrap_paired_diff_ci(&cohort, 150, 4, &stat, &stat).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn too_few_resamples_is_a_parameter_error() {
        let cohort = Cohort::from_values(vec![1.0; 10]).unwrap();
        let stat = |_: &Cohort, _: u64| Ok(1.0);
        assert!(matches!(
            bootstrap_percentile_ci(&cohort, 50, 1, &stat),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn excessive_skips_become_an_estimation_error() {
        let cohort = Cohort::from_values((1..=30).map(f64::from).collect()).unwrap();
        // Fails whenever the resample mean is below the population mean,
        // which happens for roughly half of the resamples.
        let stat = |c: &Cohort, _seed: u64| {
            let mean = c.values().iter().sum::<f64>() / c.len() as f64;
            if mean < 15.5 {
                Err(Error::Estimation("unstable".into()))
            } else {
                Ok(mean)
            }
        };
        assert!(matches!(
            bootstrap_percentile_ci(&cohort, 200, 2, &stat),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn resamples_are_deterministic() {
        let cohort = Cohort::from_values((1..=40).map(f64::from).collect()).unwrap();
        let stat = |c: &Cohort, _seed: u64| Ok(c.values()[0]);
        let a = bootstrap_percentile_ci(&cohort, 120, 8, &stat).unwrap();
        let b = bootstrap_percentile_ci(&cohort, 120, 8, &stat).unwrap();
        assert_eq!(a, b);
    }
}
