//! Diagnostic accuracy of the testing procedures under measurement error.
//!
//! Accuracy is always tabulated from confusion counts aggregated across all
//! replicates before any ratio is formed; per-replicate ratios would be
//! biased by small or empty denominators. Undefined ratios are reported as
//! absent, never coerced to 0 or 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{derive_seed, sample_error, sample_exponential, ErrorModel, RngStream};
use crate::error::{Error, Result};
use crate::estimators::score::risk_scores_with_rng;
use crate::procedures::{run_mmpa, run_mp, run_mpa, Pool, Procedure, Threshold};

const ACCURACY_DOMAIN: u64 = 0xACC0;
const ORDER_DOMAIN: u64 = 0x0DE8;

/// Confusion counts and the accuracy ratios derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl AccuracyReport {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        AccuracyReport { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    /// TP / (TP + FN); absent when there are no true failures.
    pub fn sens(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// TN / (TN + FP); absent when there are no true non-failures.
    pub fn spec(&self) -> Option<f64> {
        Self::ratio(self.tn, self.tn + self.fp)
    }

    /// TP / (TP + FP); absent when nothing was classified positive.
    pub fn ppv(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    /// TN / (TN + FN); absent when nothing was classified negative.
    pub fn npv(&self) -> Option<f64> {
        Self::ratio(self.tn, self.tn + self.fn_)
    }

    /// (FP + FN) / total.
    pub fn misclassification(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.fp + self.fn_) as f64 / self.total() as f64
    }

    pub fn merge(&mut self, other: &AccuracyReport) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Tabulates classifications against the truth `1(V > C)`.
pub fn accuracy_report(
    true_values: &[f64],
    classifications: &[bool],
    threshold: &Threshold,
) -> Result<AccuracyReport> {
    if true_values.len() != classifications.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} values vs {} classifications",
            true_values.len(),
            classifications.len()
        )));
    }
    let mut report = AccuracyReport::default();
    for (&v, &classified) in true_values.iter().zip(classifications) {
        let truth = v > threshold.cutoff();
        match (truth, classified) {
            (true, true) => report.tp += 1,
            (true, false) => report.fn_ += 1,
            (false, true) => report.fp += 1,
            (false, false) => report.tn += 1,
        }
    }
    Ok(report)
}

/// Configuration of the measurement-error accuracy experiment.
#[derive(Debug, Clone)]
pub struct AccuracyExperimentConfig {
    pub theta: f64,
    pub cutoff: f64,
    pub k: usize,
    pub sigma_grid: Vec<f64>,
    pub procedures: Vec<Procedure>,
    /// Strength of the synthetic risk score used by mMPA.
    pub lambda: f64,
    /// Individuals per replicate cohort.
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// One cell of the experiment table.
#[derive(Debug, Clone)]
pub struct AccuracyCell {
    pub procedure: Procedure,
    pub sigma: f64,
    pub report: AccuracyReport,
}

/// Simulates classification accuracy per (procedure, sigma).
///
/// Every procedure in a replicate sees the same cohort and the same error
/// realizations (one epsilon per individual, one per pool), so the cells are
/// directly comparable. The pool error is drawn from the same model as the
/// individual errors, independently per test.
pub fn accuracy_experiment(config: &AccuracyExperimentConfig) -> Result<Vec<AccuracyCell>> {
    if config.k < 1 || config.n < config.k {
        return Err(Error::Data(format!(
            "cohort of {} cannot form pools of {}",
            config.n, config.k
        )));
    }
    if config.replicates < 1 {
        return Err(Error::Parameter("need at least one replicate".into()));
    }
    let threshold = Threshold::new(config.cutoff)?;
    let master = derive_seed(config.seed, ACCURACY_DOMAIN);
    let mut cells = Vec::new();
    for (si, &sigma) in config.sigma_grid.iter().enumerate() {
        let model = if sigma == 0.0 {
            ErrorModel::None
        } else {
            ErrorModel::log_normal(sigma)?
        };
        let sigma_master = derive_seed(master, si as u64);
        let per_replicate: Vec<Vec<AccuracyReport>> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| replicate_reports(config, &threshold, &model, sigma_master, r))
            .collect::<Result<_>>()?;
        for (pi, &procedure) in config.procedures.iter().enumerate() {
            let mut report = AccuracyReport::default();
            for rep in &per_replicate {
                report.merge(&rep[pi]);
            }
            cells.push(AccuracyCell {
                procedure,
                sigma,
                report,
            });
        }
    }
    Ok(cells)
}

fn replicate_reports(
    config: &AccuracyExperimentConfig,
    threshold: &Threshold,
    model: &ErrorModel,
    sigma_master: u64,
    replicate: u64,
) -> Result<Vec<AccuracyReport>> {
    let mut rng = RngStream::new(sigma_master, replicate);
    let n = config.n;
    let k = config.k;
    let values = sample_exponential(config.theta, n, &mut rng)?;
    let scores = risk_scores_with_rng(&values, config.lambda, &mut rng)?;
    let individual_errors: Vec<f64> = (0..n).map(|_| sample_error(model, &mut rng)).collect();
    let pools = n / k;
    let pool_errors: Vec<f64> = (0..pools).map(|_| sample_error(model, &mut rng)).collect();

    let mut reports = Vec::with_capacity(config.procedures.len());
    for &procedure in &config.procedures {
        // A procedure-specific stream for testing-order randomness, keyed by
        // a fixed per-procedure tag, so each procedure's results do not
        // depend on which others were requested.
        let tag = match procedure {
            Procedure::Ind => 0,
            Procedure::Mp => 1,
            Procedure::Mpa => 2,
            Procedure::Mmpa => 3,
        };
        let mut order_rng = RngStream::new(derive_seed(sigma_master, ORDER_DOMAIN + tag), replicate);
        let mut report = AccuracyReport::default();
        if procedure == Procedure::Ind {
            let classified: Vec<bool> = values
                .iter()
                .zip(&individual_errors)
                .map(|(&v, &e)| v * e > threshold.cutoff())
                .collect();
            report.merge(&accuracy_report(
                &values[..pools * k],
                &classified[..pools * k],
                threshold,
            )?);
            reports.push(report);
            continue;
        }
        for p in 0..pools {
            let span = p * k..(p + 1) * k;
            let pool = Pool::new(
                values[span.clone()].to_vec(),
                Some(scores[span.clone()].to_vec()),
                pool_errors[p],
                individual_errors[span.clone()].to_vec(),
            )?;
            let result = match procedure {
                Procedure::Mp => run_mp(&pool, threshold),
                Procedure::Mpa => {
                    let mut order: Vec<usize> = (0..k).collect();
                    use rand::seq::SliceRandom;
                    order.shuffle(&mut order_rng);
                    run_mpa(&pool, &order, threshold)?
                }
                Procedure::Mmpa => run_mmpa(&pool, threshold, &mut order_rng)?,
                Procedure::Ind => unreachable!(),
            };
            report.merge(&accuracy_report(
                &values[span],
                &result.classifications,
                threshold,
            )?);
        }
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1000() -> Threshold {
        Threshold::new(1000.0).unwrap()
    }

    #[test]
    fn perfect_classifier_report() {
        let truth = vec![1500.0, 200.0, 80.0, 2000.0];
        let classified = vec![true, false, false, true];
        let r = accuracy_report(&truth, &classified, &c1000()).unwrap();
        assert_eq!(r.sens(), Some(1.0));
        assert_eq!(r.spec(), Some(1.0));
        assert_eq!(r.ppv(), Some(1.0));
        assert_eq!(r.npv(), Some(1.0));
        assert_eq!(r.misclassification(), 0.0);
    }

    #[test]
    fn all_negative_classification_leaves_ppv_absent() {
        let truth = vec![1500.0, 200.0, 80.0, 300.0];
        let classified = vec![false; 4];
        let r = accuracy_report(&truth, &classified, &c1000()).unwrap();
        assert_eq!(r.sens(), Some(0.0));
        assert_eq!(r.spec(), Some(1.0));
        assert_eq!(r.ppv(), None);
        assert_eq!(r.npv(), Some(0.75));
    }

    #[test]
    fn half_right_report() {
        let truth = vec![1500.0, 1200.0, 200.0, 300.0];
        let classified = vec![true, false, true, false];
        let r = accuracy_report(&truth, &classified, &c1000()).unwrap();
        assert_eq!(r.sens(), Some(0.5));
        assert_eq!(r.spec(), Some(0.5));
        assert_eq!(r.ppv(), Some(0.5));
        assert_eq!(r.npv(), Some(0.5));
        assert_eq!(r.misclassification(), 0.5);
    }

    #[test]
    fn length_mismatch_is_a_data_error() {
        assert!(accuracy_report(&[1.0], &[true, false], &c1000()).is_err());
    }

    #[test]
    fn bayes_identity_on_counts() {
        // ppv and npv recomputed from (sens, spec, prevalence) must agree
        // with the tabulated ratios exactly.
        let r = AccuracyReport::from_counts(811, 207, 9173, 154);
        let total = r.total() as f64;
        let prev = (r.tp + r.fn_) as f64 / total;
        let sens = r.sens().unwrap();
        let spec = r.spec().unwrap();
        let ppv = sens * prev / (sens * prev + (1.0 - spec) * (1.0 - prev));
        let npv = spec * (1.0 - prev) / (spec * (1.0 - prev) + (1.0 - sens) * prev);
        assert!((ppv - r.ppv().unwrap()).abs() < 1e-12);
        assert!((npv - r.npv().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_error_is_perfect_for_every_procedure() {
        let config = AccuracyExperimentConfig {
            theta: 400.0,
            cutoff: 1000.0,
            k: 5,
            sigma_grid: vec![0.0],
            procedures: vec![Procedure::Ind, Procedure::Mp, Procedure::Mpa, Procedure::Mmpa],
            lambda: 0.25,
            n: 500,
            replicates: 4,
            seed: 77,
        };
        let cells = accuracy_experiment(&config).unwrap();
        assert_eq!(cells.len(), 4);
        for cell in cells {
            assert_eq!(cell.report.sens(), Some(1.0), "{:?}", cell.procedure);
            assert_eq!(cell.report.spec(), Some(1.0), "{:?}", cell.procedure);
            assert_eq!(cell.report.misclassification(), 0.0);
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let config = AccuracyExperimentConfig {
            theta: 400.0,
            cutoff: 1000.0,
            k: 5,
            sigma_grid: vec![0.1],
            procedures: vec![Procedure::Mp, Procedure::Mpa],
            lambda: 0.25,
            n: 300,
            replicates: 3,
            seed: 5,
        };
        let a = accuracy_experiment(&config).unwrap();
        let b = accuracy_experiment(&config).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.report, y.report);
        }
    }

    #[test]
    fn procedure_cells_do_not_depend_on_the_requested_set() {
        let base = AccuracyExperimentConfig {
            theta: 400.0,
            cutoff: 1000.0,
            k: 4,
            sigma_grid: vec![0.15],
            procedures: vec![Procedure::Mp, Procedure::Mpa, Procedure::Mmpa],
            lambda: 0.5,
            n: 200,
            replicates: 2,
            seed: 11,
        };
        let full = accuracy_experiment(&base).unwrap();
        let mut only_mmpa = base.clone();
        only_mmpa.procedures = vec![Procedure::Mmpa];
        let solo = accuracy_experiment(&only_mmpa).unwrap();
        assert_eq!(full[2].report, solo[0].report);
    }
}
