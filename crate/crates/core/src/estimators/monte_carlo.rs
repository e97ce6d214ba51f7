//! Efficiency estimation by direct pooling simulation.
//!
//! Each replicate shuffles the cohort with its own random stream, partitions
//! it into complete pools of `K`, runs the requested procedure on every pool,
//! and reports assays per covered individual. Replicates are embarrassingly
//! parallel; results are collected in replicate order and reduced
//! sequentially, so the estimate is bit-stable for a fixed seed regardless
//! of worker count.
//!
//! For tiny cohorts an exhaustive mode averages over every partition (and,
//! for the sequential procedures, every admissible within-pool testing
//! order) in exact integer arithmetic.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::distributions::{sample_error, ErrorModel, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{Cohort, EfficiencyEstimate, Method};
use crate::procedures::{run_mmpa, run_mp, run_mpa, Pool, Procedure, Threshold};

/// What happens to the `N mod K` leftover individuals of a replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemainderPolicy {
    /// Leftovers are excluded from the replicate entirely (complete pools
    /// only); the estimand is assays per pooled individual.
    Exclude,
    /// Leftovers are tested individually and counted in the denominator.
    TestIndividually,
}

/// Configuration for [`phi_monte_carlo`].
#[derive(Debug, Clone)]
pub struct MonteCarloOptions {
    pub replicates: usize,
    pub error_model: ErrorModel,
    pub seed: u64,
    pub remainder: RemainderPolicy,
}

impl MonteCarloOptions {
    pub fn new(replicates: usize, error_model: ErrorModel, seed: u64) -> Self {
        MonteCarloOptions {
            replicates,
            error_model,
            seed,
            remainder: RemainderPolicy::Exclude,
        }
    }
}

/// Target standard error used when deriving a replicate count.
pub const DEFAULT_TARGET_SE: f64 = 0.005;

fn validate(cohort: &Cohort, k: usize, procedure: Procedure) -> Result<()> {
    if k < 1 {
        return Err(Error::Parameter("pool size must be >= 1".into()));
    }
    if cohort.len() < k {
        return Err(Error::Data(format!(
            "cohort of {} cannot form a pool of {k}",
            cohort.len()
        )));
    }
    if procedure == Procedure::Mmpa && cohort.scores().is_none() {
        return Err(Error::Configuration(
            "mMPA simulation requires a cohort with risk scores".into(),
        ));
    }
    Ok(())
}

fn replicate_phi(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
    opts: &MonteCarloOptions,
    replicate: u64,
) -> f64 {
    let mut rng = RngStream::new(opts.seed, replicate);
    let n = cohort.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let pools = n / k;
    let mut assays = 0usize;
    let mut covered = pools * k;
    for members in idx.chunks_exact(k) {
        if procedure == Procedure::Ind {
            assays += k;
            continue;
        }
        let values: Vec<f64> = members.iter().map(|&i| cohort.values()[i]).collect();
        let scores = cohort
            .scores()
            .map(|s| members.iter().map(|&i| s[i]).collect::<Vec<f64>>());
        let (pool_eps, ind_eps) = if opts.error_model.is_none() {
            (1.0, vec![1.0; k])
        } else {
            let p = sample_error(&opts.error_model, &mut rng);
            let e = (0..k)
                .map(|_| sample_error(&opts.error_model, &mut rng))
                .collect();
            (p, e)
        };
        let pool = Pool::new(values, scores, pool_eps, ind_eps).expect("valid pool");
        let result = match procedure {
            Procedure::Mp => run_mp(&pool, threshold),
            Procedure::Mpa => {
                let mut order: Vec<usize> = (0..k).collect();
                order.shuffle(&mut rng);
                run_mpa(&pool, &order, threshold).expect("valid order")
            }
            Procedure::Mmpa => run_mmpa(&pool, threshold, &mut rng).expect("scores checked"),
            Procedure::Ind => unreachable!(),
        };
        assays += result.assays_used;
    }
    if opts.remainder == RemainderPolicy::TestIndividually {
        let leftover = n - pools * k;
        assays += leftover;
        covered += leftover;
    }
    assays as f64 / covered as f64
}

/// Per-replicate efficiencies, in replicate order.
pub fn monte_carlo_phis(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
    opts: &MonteCarloOptions,
) -> Result<Vec<f64>> {
    validate(cohort, k, procedure)?;
    if opts.replicates < 1 {
        return Err(Error::Parameter("need at least one replicate".into()));
    }
    Ok((0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| replicate_phi(cohort, k, threshold, procedure, opts, r))
        .collect())
}

/// Monte Carlo efficiency estimate: the mean over replicates.
pub fn phi_monte_carlo(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
    opts: &MonteCarloOptions,
) -> Result<EfficiencyEstimate> {
    let phis = monte_carlo_phis(cohort, k, threshold, procedure, opts)?;
    let phi = phis.iter().sum::<f64>() / phis.len() as f64;
    Ok(EfficiencyEstimate {
        phi,
        method: Method::MonteCarlo,
        k,
        ci: None,
    })
}

/// Replicate count needed to bring the standard error of the mean down to
/// `target_se`, from a 16-replicate pilot.
pub fn suggest_replicates(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
    error_model: ErrorModel,
    seed: u64,
    target_se: f64,
) -> Result<usize> {
    if target_se <= 0.0 {
        return Err(Error::Parameter("target standard error must be > 0".into()));
    }
    let pilot = MonteCarloOptions::new(16, error_model, seed);
    let phis = monte_carlo_phis(cohort, k, threshold, procedure, &pilot)?;
    let mean = phis.iter().sum::<f64>() / phis.len() as f64;
    let var = phis.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (phis.len() - 1) as f64;
    let needed = (var / (target_se * target_se)).ceil() as usize;
    Ok(needed.clamp(16, 2048))
}

/// Exact enumeration: total assays summed over every partition of the cohort
/// into pools of `K` and, per pool, every admissible testing order, with no
/// measurement error. Returned as an integer ratio
/// `(assay_total, partitions * K! * N)` so callers can compare exactly.
pub fn enumerated_assay_ratio(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
) -> Result<(u128, u128)> {
    validate(cohort, k, procedure)?;
    let n = cohort.len();
    if n % k != 0 {
        return Err(Error::Data(format!(
            "enumeration requires the pool size to divide the cohort size, got N={n}, K={k}"
        )));
    }
    if n > 16 {
        return Err(Error::Data(
            "enumeration is intended for small cohorts (N <= 16)".into(),
        ));
    }
    let k_factorial: u128 = (1..=k as u128).product();
    let mut pool_cache: std::collections::HashMap<Vec<usize>, u128> =
        std::collections::HashMap::new();
    let mut total: u128 = 0;
    let mut partitions: u128 = 0;
    let mut remaining: Vec<usize> = (0..n).collect();
    enumerate_partitions(&mut remaining, k, &mut |partition| {
        partitions += 1;
        for pool_members in partition {
            let key = pool_members.to_vec();
            let assays = if let Some(&a) = pool_cache.get(&key) {
                a
            } else {
                let a = pool_assays_over_orders(cohort, pool_members, threshold, procedure, k_factorial);
                pool_cache.insert(key, a);
                a
            };
            total += assays;
        }
    });
    Ok((total, partitions * k_factorial * n as u128))
}

/// Exact enumeration-mode efficiency (see [`enumerated_assay_ratio`]).
pub fn phi_enumerated(
    cohort: &Cohort,
    k: usize,
    threshold: &Threshold,
    procedure: Procedure,
) -> Result<EfficiencyEstimate> {
    let (num, den) = enumerated_assay_ratio(cohort, k, threshold, procedure)?;
    Ok(EfficiencyEstimate {
        phi: num as f64 / den as f64,
        method: Method::MonteCarlo,
        k,
        ci: None,
    })
}

/// Sum of assay counts over the order universe of one pool, scaled to the
/// common denominator `K!`.
fn pool_assays_over_orders(
    cohort: &Cohort,
    members: &[usize],
    threshold: &Threshold,
    procedure: Procedure,
    k_factorial: u128,
) -> u128 {
    let k = members.len();
    let values: Vec<f64> = members.iter().map(|&i| cohort.values()[i]).collect();
    match procedure {
        Procedure::Ind => k as u128 * k_factorial,
        Procedure::Mp => {
            let pool = Pool::exact(values).expect("valid pool");
            run_mp(&pool, threshold).assays_used as u128 * k_factorial
        }
        Procedure::Mpa => {
            let pool = Pool::exact(values).expect("valid pool");
            (0..k)
                .permutations(k)
                .map(|order| run_mpa(&pool, &order, threshold).expect("perm").assays_used as u128)
                .sum()
        }
        Procedure::Mmpa => {
            let scores: Vec<f64> = members
                .iter()
                .map(|&i| cohort.scores().expect("checked")[i])
                .collect();
            let pool = Pool::exact(values).expect("valid pool");
            let mut sum: u128 = 0;
            let mut count: u128 = 0;
            for order in (0..k).permutations(k) {
                let consistent = order
                    .windows(2)
                    .all(|w| scores[w[0]] >= scores[w[1]]);
                if consistent {
                    sum += run_mpa(&pool, &order, threshold).expect("perm").assays_used as u128;
                    count += 1;
                }
            }
            // Scale to the K! denominator; the consistent-order count always
            // divides K! (it is a product of tie-group factorials).
            sum * (k_factorial / count)
        }
    }
}

/// Visits every partition of `remaining` (sorted, distinct) into pools of
/// `k`, fixing the smallest remaining element as each pool's anchor to avoid
/// duplicates.
fn enumerate_partitions(
    remaining: &mut Vec<usize>,
    k: usize,
    visit: &mut impl FnMut(&[Vec<usize>]),
) {
    fn recurse(
        remaining: &mut Vec<usize>,
        k: usize,
        acc: &mut Vec<Vec<usize>>,
        visit: &mut impl FnMut(&[Vec<usize>]),
    ) {
        if remaining.is_empty() {
            visit(acc);
            return;
        }
        let anchor = remaining[0];
        let rest: Vec<usize> = remaining[1..].to_vec();
        for combo in rest.iter().copied().combinations(k - 1) {
            let mut pool = Vec::with_capacity(k);
            pool.push(anchor);
            pool.extend(&combo);
            let mut next: Vec<usize> = rest
                .iter()
                .copied()
                .filter(|i| !combo.contains(i))
                .collect();
            acc.push(pool);
            recurse(&mut next, k, acc, visit);
            acc.pop();
        }
    }
    let mut acc = Vec::new();
    recurse(remaining, k, &mut acc, visit);
}
