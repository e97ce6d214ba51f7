//! Pool-level execution of the testing procedures.
//!
//! All three pooled strategies start with one assay on the pool. MP retests
//! every sample when the pool is positive. MPA and mMPA test samples one at
//! a time, maintaining the running remainder
//! `T_j = K * V_pool_observed - sum(observed tested values)` and stopping as
//! soon as it drops to the cutoff or below. The remainder is computed by
//! subtraction, never by re-measuring sub-pools, so only the pool test and
//! each individual test receive error draws.
//!
//! The last sample in the testing order never consumes an assay: once the
//! other `K - 1` samples have been tested, the remainder equals its observed
//! total exactly, so its status is resolved by deconvolution. With a positive
//! final remainder it is classified as a failure without a test.

use rand::Rng;

use crate::distributions::RngStream;
use crate::error::{Error, Result};

/// Failure cutoff in assay units. A pool of size `K` is compared against
/// `cutoff / K` to account for the dilution effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    cutoff: f64,
}

impl Threshold {
    pub fn new(cutoff: f64) -> Result<Self> {
        if !cutoff.is_finite() || cutoff <= 0.0 {
            return Err(Error::Parameter(format!(
                "cutoff must be finite and > 0, got {cutoff}"
            )));
        }
        Ok(Threshold { cutoff })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Pool-level cutoff `C / K`.
    pub fn pool_cutoff(&self, k: usize) -> f64 {
        self.cutoff / k as f64
    }
}

/// One pool: the true assay values of its `K` members, optional risk scores,
/// and the multiplicative error realizations for the pool test and each
/// potential individual test.
#[derive(Debug, Clone)]
pub struct Pool {
    true_values: Vec<f64>,
    risk_scores: Option<Vec<f64>>,
    pool_error: f64,
    individual_errors: Vec<f64>,
}

impl Pool {
    pub fn new(
        true_values: Vec<f64>,
        risk_scores: Option<Vec<f64>>,
        pool_error: f64,
        individual_errors: Vec<f64>,
    ) -> Result<Self> {
        let k = true_values.len();
        if k == 0 {
            return Err(Error::Parameter("pool must contain at least one sample".into()));
        }
        if true_values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter(
                "true assay values must be finite and >= 0".into(),
            ));
        }
        if let Some(scores) = &risk_scores {
            if scores.len() != k {
                return Err(Error::Parameter(format!(
                    "risk scores length {} does not match pool size {k}",
                    scores.len()
                )));
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::Parameter("risk scores must be finite".into()));
            }
        }
        if individual_errors.len() != k {
            return Err(Error::Parameter(format!(
                "individual errors length {} does not match pool size {k}",
                individual_errors.len()
            )));
        }
        if !pool_error.is_finite()
            || pool_error <= 0.0
            || individual_errors.iter().any(|e| !e.is_finite() || *e <= 0.0)
        {
            return Err(Error::Parameter("error realizations must be > 0".into()));
        }
        Ok(Pool {
            true_values,
            risk_scores,
            pool_error,
            individual_errors,
        })
    }

    /// A pool with no measurement error (all epsilons exactly 1).
    pub fn exact(true_values: Vec<f64>) -> Result<Self> {
        let k = true_values.len();
        Pool::new(true_values, None, 1.0, vec![1.0; k])
    }

    /// Same, with risk scores attached.
    pub fn exact_with_scores(true_values: Vec<f64>, risk_scores: Vec<f64>) -> Result<Self> {
        let k = true_values.len();
        Pool::new(true_values, Some(risk_scores), 1.0, vec![1.0; k])
    }

    pub fn size(&self) -> usize {
        self.true_values.len()
    }

    pub fn true_values(&self) -> &[f64] {
        &self.true_values
    }

    pub fn risk_scores(&self) -> Option<&[f64]> {
        self.risk_scores.as_deref()
    }
}

/// Outcome of running one procedure on one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureResult {
    /// Assays consumed, pool test included.
    pub assays_used: usize,
    /// Per-sample classification, `true` = classified failure.
    pub classifications: Vec<bool>,
    /// Number of individual samples actually tested (`assays_used - 1`).
    pub stop_index: usize,
    /// Observed pool value (mean scale).
    pub observed_pool_value: f64,
}

/// Identifies a testing strategy in estimator and study configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Procedure {
    /// Individual testing without pooling.
    Ind,
    /// Two-stage mini-pooling: retest everyone after a positive pool.
    Mp,
    /// Mini-pooling with the sequential deconvolution algorithm.
    Mpa,
    /// Marker-assisted MPA: samples tested in decreasing risk order.
    Mmpa,
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Ind => "ind",
            Procedure::Mp => "mp",
            Procedure::Mpa => "mpa",
            Procedure::Mmpa => "mmpa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ind" => Ok(Procedure::Ind),
            "mp" => Ok(Procedure::Mp),
            "mpa" => Ok(Procedure::Mpa),
            "mmpa" => Ok(Procedure::Mmpa),
            other => Err(Error::Parameter(format!(
                "unknown procedure '{other}' (expected ind, mp, mpa, or mmpa)"
            ))),
        }
    }
}

/// Observes one individual test: returns `(v * eps, v * eps > C)`.
pub fn classify_individual(v: f64, eps: f64, threshold: &Threshold) -> (f64, bool) {
    let observed = v * eps;
    (observed, observed > threshold.cutoff())
}

/// Observed pool value: the mean of the true values times the pool error.
pub fn measure_pool(pool: &Pool) -> f64 {
    let k = pool.size() as f64;
    let mean: f64 = pool.true_values.iter().sum::<f64>() / k;
    mean * pool.pool_error
}

/// Runs MP: one pool assay, then all `K` individual assays iff the pool
/// exceeds `C / K`.
pub fn run_mp(pool: &Pool, threshold: &Threshold) -> ProcedureResult {
    let k = pool.size();
    let observed_pool_value = measure_pool(pool);
    if observed_pool_value * k as f64 <= threshold.cutoff() {
        return ProcedureResult {
            assays_used: 1,
            classifications: vec![false; k],
            stop_index: 0,
            observed_pool_value,
        };
    }
    let classifications = pool
        .true_values
        .iter()
        .zip(&pool.individual_errors)
        .map(|(&v, &e)| classify_individual(v, e, threshold).1)
        .collect();
    ProcedureResult {
        assays_used: k + 1,
        classifications,
        stop_index: k,
        observed_pool_value,
    }
}

/// Shared sequential engine for MPA and mMPA. `order[j]` is the index of the
/// j-th sample to test.
fn run_sequential(pool: &Pool, order: &[usize], threshold: &Threshold) -> ProcedureResult {
    let k = pool.size();
    let observed_pool_value = measure_pool(pool);
    let mut classifications = vec![false; k];
    let mut remainder = observed_pool_value * k as f64;
    if remainder <= threshold.cutoff() {
        return ProcedureResult {
            assays_used: 1,
            classifications,
            stop_index: 0,
            observed_pool_value,
        };
    }
    let mut tested = 0;
    for &idx in order.iter().take(k - 1) {
        let (observed, failed) =
            classify_individual(pool.true_values[idx], pool.individual_errors[idx], threshold);
        classifications[idx] = failed;
        tested += 1;
        remainder -= observed;
        if remainder <= threshold.cutoff() {
            break;
        }
    }
    if tested == k - 1 && remainder > threshold.cutoff() {
        // The remainder is exactly the last sample's observed total.
        classifications[order[k - 1]] = true;
    }
    ProcedureResult {
        assays_used: 1 + tested,
        classifications,
        stop_index: tested,
        observed_pool_value,
    }
}

/// Runs MPA with an explicit testing order (a permutation of `0..K`).
pub fn run_mpa(pool: &Pool, order: &[usize], threshold: &Threshold) -> Result<ProcedureResult> {
    let k = pool.size();
    if order.len() != k {
        return Err(Error::Parameter(format!(
            "order length {} does not match pool size {k}",
            order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &idx in order {
        if idx >= k || seen[idx] {
            return Err(Error::Parameter("order must be a permutation of 0..K".into()));
        }
        seen[idx] = true;
    }
    Ok(run_sequential(pool, order, threshold))
}

/// Descending-score testing order. Ties are broken by a random shuffle drawn
/// from `rng`, so a constant score degenerates to MPA's uniformly random
/// order. One tie-break key is drawn per sample regardless of ties, keeping
/// stream consumption independent of the score values.
pub fn mmpa_order<R: Rng>(scores: &[f64], rng: &mut R) -> Vec<usize> {
    let keys: Vec<u64> = (0..scores.len()).map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(keys[a].cmp(&keys[b]))
    });
    order
}

/// Runs mMPA: the sequential engine with samples ordered by decreasing risk
/// score.
pub fn run_mmpa(pool: &Pool, threshold: &Threshold, rng: &mut RngStream) -> Result<ProcedureResult> {
    let scores = pool.risk_scores().ok_or_else(|| {
        Error::Configuration("mMPA requires risk scores on the pool".into())
    })?;
    let order = mmpa_order(scores, rng);
    Ok(run_sequential(pool, &order, threshold))
}

/// Sharp bounds on the number of failures in a pool given its observed value:
/// `[1(v_pool > C), floor(K * v_pool / C)]`.
///
/// The small epsilon protects exact multiples of `C / K` from floating-point
/// representation error.
pub fn failure_count_bounds(v_pool: f64, k: usize, threshold: &Threshold) -> (usize, usize) {
    let lo = usize::from(v_pool > threshold.cutoff());
    let hi = (k as f64 * v_pool / threshold.cutoff() + 1e-9).floor() as usize;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1000() -> Threshold {
        Threshold::new(1000.0).unwrap()
    }

    #[test]
    fn classify_individual_cases() {
        let c = c1000();
        assert_eq!(classify_individual(1200.0, 1.0, &c), (1200.0, true));
        assert_eq!(classify_individual(400.0, 1.0, &c), (400.0, false));
        let (obs, cls) = classify_individual(900.0, 1.2, &c);
        assert!((obs - 1080.0).abs() < 1e-9 && cls);
        let (obs, cls) = classify_individual(1100.0, 0.9, &c);
        assert!((obs - 990.0).abs() < 1e-9 && !cls);
    }

    #[test]
    fn measure_pool_is_mean_of_true_values_without_error() {
        let pool = Pool::exact(vec![400.0; 5]).unwrap();
        assert_eq!(measure_pool(&pool), 400.0);
        let pool = Pool::exact(vec![0.0; 4]).unwrap();
        assert_eq!(measure_pool(&pool), 0.0);
        let pool = Pool::exact(vec![1200.0, 200.0, 200.0, 200.0, 200.0]).unwrap();
        assert_eq!(measure_pool(&pool), 400.0);
    }

    #[test]
    fn mp_positive_pool_without_failures_uses_k_plus_one_assays() {
        // All five at 400: pool value 400 > 200, yet nobody exceeds 1000.
        let pool = Pool::exact(vec![400.0; 5]).unwrap();
        let r = run_mp(&pool, &c1000());
        assert_eq!(r.assays_used, 6);
        assert!(r.classifications.iter().all(|&c| !c));
        assert_eq!(r.stop_index, 5);
    }

    #[test]
    fn mp_negative_pool_uses_one_assay() {
        let pool = Pool::exact(vec![0.0; 5]).unwrap();
        let r = run_mp(&pool, &c1000());
        assert_eq!(r.assays_used, 1);
        assert!(r.classifications.iter().all(|&c| !c));
    }

    #[test]
    fn mp_classifies_each_sample_after_positive_pool() {
        let pool = Pool::exact(vec![1300.0, 100.0, 100.0]).unwrap();
        let r = run_mp(&pool, &c1000());
        assert_eq!(r.assays_used, 4);
        assert_eq!(r.classifications, vec![true, false, false]);
    }

    #[test]
    fn mpa_stops_when_remainder_drops_to_cutoff() {
        // Pool value 500 with K=3; first tested sample observed 1300 leaves
        // 500 * 3 - 1300 = 200 <= 1000, so the other two are never tested.
        let pool = Pool::exact(vec![1300.0, 100.0, 100.0]).unwrap();
        let r = run_mpa(&pool, &[0, 1, 2], &c1000()).unwrap();
        assert_eq!(r.assays_used, 2);
        assert_eq!(r.stop_index, 1);
        assert_eq!(r.classifications, vec![true, false, false]);
    }

    #[test]
    fn mpa_all_zero_pool_uses_one_assay() {
        let pool = Pool::exact(vec![0.0, 0.0, 0.0]).unwrap();
        let r = run_mpa(&pool, &[0, 1, 2], &c1000()).unwrap();
        assert_eq!(r.assays_used, 1);
    }

    #[test]
    fn mpa_hand_trace_k4() {
        // T1 = 2900 > C, test 0 (rem 1400 > C), test 1 (rem 200 <= C): stop.
        let pool = Pool::exact(vec![1500.0, 1200.0, 100.0, 100.0]).unwrap();
        let r = run_mpa(&pool, &[0, 1, 2, 3], &c1000()).unwrap();
        assert_eq!(r.assays_used, 3);
        assert_eq!(r.classifications, vec![true, true, false, false]);
    }

    #[test]
    fn mpa_last_sample_is_resolved_by_deconvolution() {
        // Worst order: the failure sits last. Remainders stay above C, all
        // K-1 others get tested, and the failure is identified from the
        // final remainder without an extra assay.
        let pool = Pool::exact(vec![50.0, 50.0, 50.0, 50.0, 1500.0]).unwrap();
        let r = run_mpa(&pool, &[0, 1, 2, 3, 4], &c1000()).unwrap();
        assert_eq!(r.assays_used, 5);
        assert_eq!(r.stop_index, 4);
        assert_eq!(r.classifications, vec![false, false, false, false, true]);
    }

    #[test]
    fn mpa_rejects_non_permutations() {
        let pool = Pool::exact(vec![1.0, 2.0]).unwrap();
        assert!(run_mpa(&pool, &[0, 0], &c1000()).is_err());
        assert!(run_mpa(&pool, &[0], &c1000()).is_err());
    }

    #[test]
    fn mmpa_tests_highest_risk_first() {
        let pool =
            Pool::exact_with_scores(vec![100.0, 100.0, 1300.0], vec![0.1, 0.2, 0.9]).unwrap();
        let mut rng = RngStream::new(1, 0);
        let r = run_mmpa(&pool, &c1000(), &mut rng).unwrap();
        assert_eq!(r.assays_used, 2);
        assert_eq!(r.classifications, vec![false, false, true]);
    }

    #[test]
    fn mmpa_beats_worst_case_mpa_order() {
        let values = vec![1500.0, 50.0, 50.0, 50.0, 50.0];
        let scores = vec![0.99, 0.1, 0.2, 0.3, 0.4];
        let pool = Pool::exact_with_scores(values.clone(), scores).unwrap();
        let mut rng = RngStream::new(2, 0);
        let r = run_mmpa(&pool, &c1000(), &mut rng).unwrap();
        assert_eq!(r.assays_used, 2);

        let worst = Pool::exact(vec![50.0, 50.0, 50.0, 50.0, 1500.0]).unwrap();
        let w = run_mpa(&worst, &[0, 1, 2, 3, 4], &c1000()).unwrap();
        assert_eq!(w.assays_used, 5);
    }

    #[test]
    fn mmpa_requires_scores() {
        let pool = Pool::exact(vec![1.0, 2.0]).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            run_mmpa(&pool, &c1000(), &mut rng),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn mmpa_matches_mpa_identity_order_for_decreasing_scores() {
        let values = vec![700.0, 900.0, 450.0, 120.0];
        let scores = vec![0.9, 0.7, 0.5, 0.3];
        let pool = Pool::exact_with_scores(values.clone(), scores).unwrap();
        let mut rng = RngStream::new(3, 0);
        let a = run_mmpa(&pool, &c1000(), &mut rng).unwrap();
        let plain = Pool::exact(values).unwrap();
        let b = run_mpa(&plain, &[0, 1, 2, 3], &c1000()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mmpa_constant_scores_shuffle_uniformly() {
        // With constant scores the order is the tie-break shuffle; across
        // many draws each index should lead roughly equally often.
        let mut rng = RngStream::new(4, 0);
        let scores = [0.5; 4];
        let mut first_counts = [0usize; 4];
        let trials = 4000;
        for _ in 0..trials {
            let order = mmpa_order(&scores, &mut rng);
            first_counts[order[0]] += 1;
        }
        for &c in &first_counts {
            let frac = c as f64 / trials as f64;
            assert!((frac - 0.25).abs() < 0.03, "first-slot frac {frac}");
        }
    }

    #[test]
    fn k1_pool_behaves_as_single_test() {
        let c = c1000();
        let pool = Pool::exact(vec![1500.0]).unwrap();
        let mp = run_mp(&pool, &c);
        assert_eq!(mp.assays_used, 2);
        assert_eq!(mp.classifications, vec![true]);
        let mpa = run_mpa(&pool, &[0], &c).unwrap();
        assert_eq!(mpa.assays_used, 1);
        assert_eq!(mpa.classifications, vec![true]);
        let neg = Pool::exact(vec![10.0]).unwrap();
        assert_eq!(run_mpa(&neg, &[0], &c).unwrap().assays_used, 1);
    }

    #[test]
    fn failure_count_bounds_examples() {
        let c = c1000();
        assert_eq!(failure_count_bounds(400.0, 5, &c), (0, 2));
        assert_eq!(failure_count_bounds(0.0, 5, &c), (0, 0));
        assert_eq!(failure_count_bounds(1100.0, 3, &c), (1, 3));
        // Exact multiple: floor must not lose a unit to representation error.
        assert_eq!(failure_count_bounds(500.0, 4, &c), (0, 2));
    }

    #[test]
    fn remainder_identity_holds_at_every_step() {
        // remainder_j = K * observed_pool - sum of observed tested values,
        // checked by replaying the subtraction externally.
        let values = vec![800.0, 700.0, 1200.0, 50.0, 300.0];
        let errors = vec![1.1, 0.9, 1.05, 1.0, 0.95];
        let pool = Pool::new(values.clone(), None, 1.02, errors.clone()).unwrap();
        let c = c1000();
        let r = run_mpa(&pool, &[0, 1, 2, 3, 4], &c).unwrap();
        let mut remainder = 5.0 * measure_pool(&pool);
        let mut steps = 0;
        for j in 0..5 {
            if remainder <= c.cutoff() {
                break;
            }
            if j == 4 {
                break;
            }
            remainder -= values[j] * errors[j];
            steps += 1;
        }
        assert_eq!(r.stop_index, steps);
        assert_eq!(r.assays_used, 1 + steps);
    }
}
