//! End-to-end simulation studies and the cohort-analysis workflow.
//!
//! Each function builds a [`ResultDocument`] deterministically from its
//! configuration; the CLI is a thin argument parser over these.

use rayon::prelude::*;

use crate::distributions::{derive_seed, sample_exponential, ErrorModel, RngStream};
use crate::error::{Error, Result};
use crate::estimators::bootstrap::{bootstrap_paired_diff_ci, bootstrap_percentile_ci};
use crate::estimators::convolution::{sum_cdf_levels, DEFAULT_GRID_SIZE};
use crate::estimators::formula::phi_mmpa_formula_sweep;
use crate::estimators::monte_carlo::{
    phi_monte_carlo, suggest_replicates, MonteCarloOptions, RemainderPolicy, DEFAULT_TARGET_SE,
};
use crate::estimators::score::{risk_scores_with_rng, spearman};
use crate::estimators::{phi_mp_analytic, phi_mpa_analytic, Cohort};
use crate::io::{AccuracyRecord, EfficiencyRecord, ResultDocument};
use crate::procedures::{Procedure, Threshold};
use crate::accuracy::{accuracy_experiment, AccuracyExperimentConfig};

const STUDY_EFFICIENCY_DOMAIN: u64 = 0x51D1;
const STUDY_PREVALENCE_DOMAIN: u64 = 0x51D2;
const STUDY_RISKSCORE_DOMAIN: u64 = 0x51D3;
const ANALYZE_POINT_DOMAIN: u64 = 0xA7A1;
const ANALYZE_CI_DOMAIN: u64 = 0xA7A2;
const ORACLE_SCORE_DOMAIN: u64 = 0xA7A3;

fn procedure_tag(p: Procedure) -> u64 {
    match p {
        Procedure::Ind => 0,
        Procedure::Mp => 1,
        Procedure::Mpa => 2,
        Procedure::Mmpa => 3,
    }
}

/// Draws one synthetic cohort: exponential values plus a rank-based risk
/// score of strength `lambda`.
fn simulate_cohort(theta: f64, lambda: f64, n: usize, master: u64, stream: u64) -> Result<Cohort> {
    let mut rng = RngStream::new(master, stream);
    let values = sample_exponential(theta, n, &mut rng)?;
    let scores = risk_scores_with_rng(&values, lambda, &mut rng)?;
    Cohort::new(values, Some(scores))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Pool-size sweep of MP/MPA/mMPA efficiency on replicated synthetic
/// cohorts, with analytic anchors for MP and MPA.
#[derive(Debug, Clone)]
pub struct EfficiencyStudyConfig {
    pub seed: u64,
    pub theta: f64,
    pub cutoff: f64,
    pub lambda: f64,
    pub n: usize,
    pub replicates: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub grid_size: usize,
}

impl Default for EfficiencyStudyConfig {
    fn default() -> Self {
        EfficiencyStudyConfig {
            seed: 42,
            theta: 400.0,
            cutoff: 1000.0,
            lambda: 0.25,
            n: 300,
            replicates: 2000,
            k_min: 2,
            k_max: 6,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

pub fn run_efficiency_study(config: &EfficiencyStudyConfig) -> Result<ResultDocument> {
    if config.k_min < 2 || config.k_min > config.k_max {
        return Err(Error::Parameter("need 2 <= k_min <= k_max".into()));
    }
    if config.n < config.k_max {
        return Err(Error::Data("cohort smaller than the largest pool size".into()));
    }
    let ks: Vec<usize> = (config.k_min..=config.k_max).collect();
    let master = derive_seed(config.seed, STUDY_EFFICIENCY_DOMAIN);

    // phis[replicate][method][k_index]
    let per_replicate: Vec<[Vec<f64>; 3]> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<[Vec<f64>; 3]> {
            let cohort = simulate_cohort(config.theta, config.lambda, config.n, master, r)?;
            let levels =
                sum_cdf_levels(cohort.values(), config.k_max, config.cutoff, config.grid_size)?;
            let mut mp = Vec::with_capacity(ks.len());
            let mut mpa = Vec::with_capacity(ks.len());
            for &k in &ks {
                mp.push((1.0 + k as f64) / k as f64 - levels[k - 1].at_cutoff());
                let sum: f64 = (2..=k).map(|m| levels[m - 1].at_cutoff()).sum();
                mpa.push(1.0 - sum / k as f64);
            }
            let mmpa = phi_mmpa_formula_sweep(&cohort, &ks, config.cutoff, config.grid_size)?
                .into_iter()
                .map(|e| e.phi)
                .collect();
            Ok([mp, mpa, mmpa])
        })
        .collect::<Result<_>>()?;

    let mut doc = ResultDocument::new("sim-efficiency", config.seed);
    doc.set_parameter("theta", config.theta);
    doc.set_parameter("cutoff", config.cutoff);
    doc.set_parameter("lambda", config.lambda);
    doc.set_parameter("n", config.n);
    doc.set_parameter("replicates", config.replicates);
    doc.set_parameter("k_range", format!("{}..={}", config.k_min, config.k_max));

    let method_names = ["mp", "mpa", "mmpa"];
    let estimators = ["convolution", "convolution", "beta-formula"];
    for (mi, (&name, &estimator)) in method_names.iter().zip(&estimators).enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let phis: Vec<f64> = per_replicate.iter().map(|rep| rep[mi][ki]).collect();
            let (mean, sd) = mean_sd(&phis);
            let mut rec = EfficiencyRecord::new(name, k, estimator, mean);
            rec.sd = Some(sd);
            rec.theta = Some(config.theta);
            rec.lambda = Some(config.lambda);
            doc.efficiency.push(rec);
        }
    }
    for &k in &ks {
        let mut rec = EfficiencyRecord::new(
            "mp",
            k,
            "analytic",
            phi_mp_analytic(k, config.theta, config.cutoff)?.phi,
        );
        rec.theta = Some(config.theta);
        doc.efficiency.push(rec);
        let mut rec = EfficiencyRecord::new(
            "mpa",
            k,
            "analytic",
            phi_mpa_analytic(k, config.theta, config.cutoff)?.phi,
        );
        rec.theta = Some(config.theta);
        doc.efficiency.push(rec);
    }
    Ok(doc)
}

/// Efficiency of IND/MP/MPA/mMPA across a failure-prevalence sweep driven by
/// the exponential scale parameter.
#[derive(Debug, Clone)]
pub struct PrevalenceStudyConfig {
    pub seed: u64,
    pub cutoff: f64,
    pub lambda: f64,
    pub k: usize,
    pub n: usize,
    pub theta_grid: Vec<f64>,
    pub grid_size: usize,
    pub methods: Vec<Procedure>,
}

impl Default for PrevalenceStudyConfig {
    fn default() -> Self {
        PrevalenceStudyConfig {
            seed: 42,
            cutoff: 1000.0,
            lambda: 0.25,
            k: 4,
            n: 2000,
            theta_grid: vec![300.0, 350.0, 400.0, 450.0, 500.0, 600.0, 700.0],
            grid_size: DEFAULT_GRID_SIZE,
            methods: vec![Procedure::Ind, Procedure::Mp, Procedure::Mpa, Procedure::Mmpa],
        }
    }
}

pub fn run_prevalence_study(config: &PrevalenceStudyConfig) -> Result<ResultDocument> {
    if config.n < config.k {
        return Err(Error::Data("cohort smaller than the pool size".into()));
    }
    let master = derive_seed(config.seed, STUDY_PREVALENCE_DOMAIN);
    let k = config.k;

    let rows: Vec<Vec<EfficiencyRecord>> = config
        .theta_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &theta)| -> Result<Vec<EfficiencyRecord>> {
            let cohort = simulate_cohort(theta, config.lambda, config.n, master, ti as u64)?;
            let prevalence = cohort.prevalence(config.cutoff);
            let levels = sum_cdf_levels(cohort.values(), k, config.cutoff, config.grid_size)?;
            let mut out = Vec::new();
            for &method in &config.methods {
                let (phi, estimator) = match method {
                    Procedure::Ind => (1.0, "analytic"),
                    Procedure::Mp => (
                        (1.0 + k as f64) / k as f64 - levels[k - 1].at_cutoff(),
                        "convolution",
                    ),
                    Procedure::Mpa => {
                        let sum: f64 = (2..=k).map(|m| levels[m - 1].at_cutoff()).sum();
                        (1.0 - sum / k as f64, "convolution")
                    }
                    Procedure::Mmpa => (
                        phi_mmpa_formula_sweep(&cohort, &[k], config.cutoff, config.grid_size)?[0]
                            .phi,
                        "beta-formula",
                    ),
                };
                let mut rec = EfficiencyRecord::new(method.name(), k, estimator, phi);
                rec.theta = Some(theta);
                rec.lambda = Some(config.lambda);
                rec.prevalence = Some(prevalence);
                out.push(rec);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut doc = ResultDocument::new("sim-prevalence", config.seed);
    doc.set_parameter("cutoff", config.cutoff);
    doc.set_parameter("lambda", config.lambda);
    doc.set_parameter("k", k);
    doc.set_parameter("n", config.n);
    doc.set_parameter(
        "theta_grid",
        config
            .theta_grid
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    doc.efficiency = rows.into_iter().flatten().collect();
    Ok(doc)
}

/// mMPA efficiency as a function of risk-score strength.
#[derive(Debug, Clone)]
pub struct RiskScoreStudyConfig {
    pub seed: u64,
    pub theta: f64,
    pub cutoff: f64,
    pub n: usize,
    pub lambda_grid: Vec<f64>,
    pub k_set: Vec<usize>,
    pub grid_size: usize,
}

impl Default for RiskScoreStudyConfig {
    fn default() -> Self {
        RiskScoreStudyConfig {
            seed: 42,
            theta: 400.0,
            cutoff: 1000.0,
            n: 2000,
            lambda_grid: vec![0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 1.0],
            k_set: vec![3, 4, 5],
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

pub fn run_riskscore_study(config: &RiskScoreStudyConfig) -> Result<ResultDocument> {
    let master = derive_seed(config.seed, STUDY_RISKSCORE_DOMAIN);
    let rows: Vec<Vec<EfficiencyRecord>> = config
        .lambda_grid
        .par_iter()
        .enumerate()
        .map(|(li, &lambda)| -> Result<Vec<EfficiencyRecord>> {
            let cohort = simulate_cohort(config.theta, lambda, config.n, master, li as u64)?;
            let rho = spearman(cohort.values(), cohort.scores().unwrap())?;
            let levels =
                sum_cdf_levels(cohort.values(), *config.k_set.iter().max().unwrap(), config.cutoff, config.grid_size)?;
            let mmpa =
                phi_mmpa_formula_sweep(&cohort, &config.k_set, config.cutoff, config.grid_size)?;
            let mut out = Vec::new();
            for (est, &k) in mmpa.iter().zip(&config.k_set) {
                let mut rec = EfficiencyRecord::new("mmpa", k, "beta-formula", est.phi);
                rec.lambda = Some(lambda);
                rec.spearman = Some(rho);
                rec.theta = Some(config.theta);
                out.push(rec);

                let mut mp = EfficiencyRecord::new(
                    "mp",
                    k,
                    "convolution",
                    (1.0 + k as f64) / k as f64 - levels[k - 1].at_cutoff(),
                );
                mp.lambda = Some(lambda);
                mp.theta = Some(config.theta);
                out.push(mp);
                let sum: f64 = (2..=k).map(|m| levels[m - 1].at_cutoff()).sum();
                let mut mpa = EfficiencyRecord::new("mpa", k, "convolution", 1.0 - sum / k as f64);
                mpa.lambda = Some(lambda);
                mpa.theta = Some(config.theta);
                out.push(mpa);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut doc = ResultDocument::new("sim-riskscore", config.seed);
    doc.set_parameter("theta", config.theta);
    doc.set_parameter("cutoff", config.cutoff);
    doc.set_parameter("n", config.n);
    doc.set_parameter(
        "lambda_grid",
        config
            .lambda_grid
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    doc.efficiency = rows.into_iter().flatten().collect();
    Ok(doc)
}

/// Classification accuracy under measurement error.
#[derive(Debug, Clone)]
pub struct ErrorStudyConfig {
    pub seed: u64,
    pub theta: f64,
    pub cutoff: f64,
    pub k: usize,
    pub lambda: f64,
    pub n: usize,
    pub replicates: usize,
    pub sigma_grid: Vec<f64>,
    pub procedures: Vec<Procedure>,
}

impl Default for ErrorStudyConfig {
    fn default() -> Self {
        ErrorStudyConfig {
            seed: 42,
            theta: 400.0,
            cutoff: 1000.0,
            k: 5,
            lambda: 0.25,
            n: 2000,
            replicates: 50,
            sigma_grid: vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
            procedures: vec![Procedure::Ind, Procedure::Mp, Procedure::Mpa, Procedure::Mmpa],
        }
    }
}

pub fn run_error_study(config: &ErrorStudyConfig) -> Result<ResultDocument> {
    let cells = accuracy_experiment(&AccuracyExperimentConfig {
        theta: config.theta,
        cutoff: config.cutoff,
        k: config.k,
        sigma_grid: config.sigma_grid.clone(),
        procedures: config.procedures.clone(),
        lambda: config.lambda,
        n: config.n,
        replicates: config.replicates,
        seed: config.seed,
    })?;
    let mut doc = ResultDocument::new("sim-error", config.seed);
    doc.set_parameter("theta", config.theta);
    doc.set_parameter("cutoff", config.cutoff);
    doc.set_parameter("k", config.k);
    doc.set_parameter("lambda", config.lambda);
    doc.set_parameter("n", config.n);
    doc.set_parameter("replicates", config.replicates);
    doc.set_parameter(
        "sigma_grid",
        config
            .sigma_grid
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    for cell in cells {
        doc.accuracy.push(AccuracyRecord::from_report(
            cell.procedure.name(),
            config.k,
            cell.sigma,
            &cell.report,
        ));
    }
    Ok(doc)
}

/// Cohort-analysis workflow: Monte Carlo efficiency per (method, K) with
/// bootstrap confidence intervals and paired difference intervals against
/// mMPA.
#[derive(Debug, Clone)]
pub struct AnalyzeConfig {
    pub seed: u64,
    pub cutoff: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub methods: Vec<Procedure>,
    /// Bootstrap resamples; 0 disables interval estimation.
    pub bootstrap: usize,
    /// Monte Carlo replicates per estimate; `None` derives a count from a
    /// pilot run targeting a standard error of 0.005.
    pub replicates: Option<usize>,
    /// Replace the cohort's scores with the ranks of its values.
    pub oracle_score: bool,
    pub remainder: RemainderPolicy,
    /// Also produce mp-minus-mmpa / mpa-minus-mmpa paired differences.
    pub paired: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            seed: 42,
            cutoff: 1000.0,
            k_min: 2,
            k_max: 10,
            methods: vec![Procedure::Mp, Procedure::Mpa, Procedure::Mmpa],
            bootstrap: 1000,
            replicates: None,
            oracle_score: false,
            remainder: RemainderPolicy::Exclude,
            paired: true,
        }
    }
}

fn point_options(config: &AnalyzeConfig, k: usize, method: Procedure, replicates: usize) -> MonteCarloOptions {
    let seed = derive_seed(
        derive_seed(config.seed, ANALYZE_POINT_DOMAIN),
        (k as u64) << 3 | procedure_tag(method),
    );
    let mut opts = MonteCarloOptions::new(replicates, ErrorModel::None, seed);
    opts.remainder = config.remainder;
    opts
}

/// Point estimate shared by `analyze` and `atr`.
fn point_phi(
    cohort: &Cohort,
    config: &AnalyzeConfig,
    threshold: &Threshold,
    k: usize,
    method: Procedure,
) -> Result<(f64, usize)> {
    let replicates = match config.replicates {
        Some(r) => r,
        None => suggest_replicates(
            cohort,
            k,
            threshold,
            method,
            ErrorModel::None,
            derive_seed(config.seed, ANALYZE_POINT_DOMAIN),
            DEFAULT_TARGET_SE,
        )?,
    };
    let opts = point_options(config, k, method, replicates);
    Ok((phi_monte_carlo(cohort, k, threshold, method, &opts)?.phi, replicates))
}

pub fn run_analyze(cohort: &Cohort, config: &AnalyzeConfig) -> Result<ResultDocument> {
    if config.k_min < 2 || config.k_min > config.k_max {
        return Err(Error::Parameter("need 2 <= k_min <= k_max".into()));
    }
    if cohort.len() < config.k_max {
        return Err(Error::Data(format!(
            "cohort of {} is too small for pools of {}",
            cohort.len(),
            config.k_max
        )));
    }
    let threshold = Threshold::new(config.cutoff)?;
    let cohort = if config.oracle_score {
        let oracle = crate::estimators::score::make_risk_score(
            cohort,
            1.0,
            derive_seed(config.seed, ORACLE_SCORE_DOMAIN),
        )?;
        cohort.with_scores(oracle)?
    } else {
        cohort.clone()
    };
    let rho = cohort
        .scores()
        .and_then(|s| spearman(cohort.values(), s).ok());
    let prevalence = cohort.prevalence(config.cutoff);

    let mut doc = ResultDocument::new("analyze", config.seed);
    doc.set_parameter("cutoff", config.cutoff);
    doc.set_parameter("k_range", format!("{}..={}", config.k_min, config.k_max));
    doc.set_parameter("bootstrap", config.bootstrap);
    doc.set_parameter("n", cohort.len());
    doc.set_parameter("oracle_score", config.oracle_score);

    for k in config.k_min..=config.k_max {
        let mut phis: Vec<Option<(f64, usize)>> = Vec::new();
        for &method in &config.methods {
            if method == Procedure::Mmpa && cohort.scores().is_none() {
                let mut rec = EfficiencyRecord {
                    phi: None,
                    ..EfficiencyRecord::new("mmpa", k, "monte-carlo", 0.0)
                };
                rec.note = Some("risk scores absent; mMPA skipped".into());
                rec.prevalence = Some(prevalence);
                doc.efficiency.push(rec);
                phis.push(None);
                continue;
            }
            if method == Procedure::Ind {
                let mut rec = EfficiencyRecord::new("ind", k, "analytic", 1.0);
                rec.prevalence = Some(prevalence);
                doc.efficiency.push(rec);
                phis.push(Some((1.0, 0)));
                continue;
            }
            let (phi, replicates) = point_phi(&cohort, config, &threshold, k, method)?;
            let mut rec = EfficiencyRecord::new(method.name(), k, "monte-carlo", phi);
            rec.prevalence = Some(prevalence);
            if method == Procedure::Mmpa {
                rec.spearman = rho;
            }
            if config.bootstrap > 0 {
                let ci_seed = derive_seed(
                    derive_seed(config.seed, ANALYZE_CI_DOMAIN),
                    (k as u64) << 3 | procedure_tag(method),
                );
                let remainder = config.remainder;
                let stat = move |c: &Cohort, s: u64| {
                    let mut opts = MonteCarloOptions::new(replicates, ErrorModel::None, s);
                    opts.remainder = remainder;
                    phi_monte_carlo(c, k, &threshold, method, &opts).map(|e| e.phi)
                };
                let (lo, hi) = bootstrap_percentile_ci(&cohort, config.bootstrap, ci_seed, &stat)?;
                rec.ci_lower = Some(lo);
                rec.ci_upper = Some(hi);
            }
            doc.efficiency.push(rec);
            phis.push(Some((phi, replicates)));
        }

        if config.paired && config.bootstrap > 0 {
            let mmpa_slot = config.methods.iter().position(|&m| m == Procedure::Mmpa);
            if let Some(slot) = mmpa_slot {
                if let Some((mmpa_phi, mmpa_reps)) = phis[slot] {
                    for (&method, phi_entry) in config.methods.iter().zip(&phis) {
                        if method != Procedure::Mp && method != Procedure::Mpa {
                            continue;
                        }
                        let Some((method_phi, method_reps)) = *phi_entry else {
                            continue;
                        };
                        let diff_seed = derive_seed(
                            derive_seed(config.seed, ANALYZE_CI_DOMAIN),
                            0xD1FF ^ ((k as u64) << 3 | procedure_tag(method)),
                        );
                        let remainder = config.remainder;
                        let stat_a = move |c: &Cohort, s: u64| {
                            let mut opts = MonteCarloOptions::new(method_reps, ErrorModel::None, s);
                            opts.remainder = remainder;
                            phi_monte_carlo(c, k, &threshold, method, &opts).map(|e| e.phi)
                        };
                        let stat_b = move |c: &Cohort, s: u64| {
                            let mut opts = MonteCarloOptions::new(mmpa_reps, ErrorModel::None, s);
                            opts.remainder = remainder;
                            phi_monte_carlo(c, k, &threshold, Procedure::Mmpa, &opts).map(|e| e.phi)
                        };
                        let (lo, hi) = bootstrap_paired_diff_ci(
                            &cohort,
                            config.bootstrap,
                            diff_seed,
                            &stat_a,
                            &stat_b,
                        )?;
                        let name = format!("{}-minus-mmpa", method.name());
                        let mut rec =
                            EfficiencyRecord::new(&name, k, "monte-carlo", method_phi - mmpa_phi);
                        rec.ci_lower = Some(lo);
                        rec.ci_upper = Some(hi);
                        doc.efficiency.push(rec);
                    }
                }
            }
        }
    }
    Ok(doc)
}

/// One line of the average-tests-required table.
#[derive(Debug, Clone, PartialEq)]
pub struct AtrRow {
    pub k: usize,
    /// Assays needed per 100 individuals.
    pub atr_per_100: f64,
}

/// Average tests required per 100 subjects for one method across a pool-size
/// range. Shares its estimation engine and seed derivation with
/// [`run_analyze`], so the point estimates match on identical seeds.
pub fn run_atr(
    cohort: &Cohort,
    method: Procedure,
    config: &AnalyzeConfig,
) -> Result<Vec<AtrRow>> {
    if cohort.len() < config.k_max {
        return Err(Error::Data(format!(
            "cohort of {} is too small for pools of {}",
            cohort.len(),
            config.k_max
        )));
    }
    let threshold = Threshold::new(config.cutoff)?;
    let cohort = if config.oracle_score {
        let oracle = crate::estimators::score::make_risk_score(
            cohort,
            1.0,
            derive_seed(config.seed, ORACLE_SCORE_DOMAIN),
        )?;
        cohort.with_scores(oracle)?
    } else {
        cohort.clone()
    };
    let mut rows = Vec::new();
    for k in config.k_min..=config.k_max {
        let phi = if method == Procedure::Ind {
            1.0
        } else {
            point_phi(&cohort, config, &threshold, k, method)?.0
        };
        rows.push(AtrRow {
            k,
            atr_per_100: phi * 100.0,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_study_is_deterministic() {
        let config = EfficiencyStudyConfig {
            replicates: 5,
            n: 120,
            grid_size: 128,
            ..EfficiencyStudyConfig::default()
        };
        let a = run_efficiency_study(&config).unwrap();
        let b = run_efficiency_study(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn efficiency_study_has_all_cells() {
        let config = EfficiencyStudyConfig {
            replicates: 3,
            n: 100,
            grid_size: 128,
            ..EfficiencyStudyConfig::default()
        };
        let doc = run_efficiency_study(&config).unwrap();
        // 3 methods x 5 pool sizes simulated + 2 analytic anchors x 5.
        assert_eq!(doc.efficiency.len(), 3 * 5 + 2 * 5);
        assert!(doc
            .efficiency
            .iter()
            .all(|r| r.phi.is_some() && r.phi.unwrap() > 0.0));
    }

    #[test]
    fn prevalence_study_reports_prevalence_per_theta() {
        let config = PrevalenceStudyConfig {
            n: 400,
            grid_size: 128,
            ..PrevalenceStudyConfig::default()
        };
        let doc = run_prevalence_study(&config).unwrap();
        assert_eq!(doc.efficiency.len(), 7 * 4);
        for rec in &doc.efficiency {
            let p = rec.prevalence.unwrap();
            assert!((0.0..1.0).contains(&p));
        }
        // phi_MP may exceed 1 at high prevalence; it must still be reported.
        let mp_high: Vec<&EfficiencyRecord> = doc
            .efficiency
            .iter()
            .filter(|r| r.method == "mp" && r.theta == Some(700.0))
            .collect();
        assert_eq!(mp_high.len(), 1);
    }

    #[test]
    fn analyze_flags_mmpa_without_scores() {
        let values: Vec<f64> = (0..80).map(|i| (i % 13) as f64 * 120.0).collect();
        let cohort = Cohort::from_values(values).unwrap();
        let config = AnalyzeConfig {
            k_min: 2,
            k_max: 3,
            bootstrap: 0,
            replicates: Some(8),
            ..AnalyzeConfig::default()
        };
        let doc = run_analyze(&cohort, &config).unwrap();
        let mmpa_rows: Vec<_> = doc.efficiency.iter().filter(|r| r.method == "mmpa").collect();
        assert_eq!(mmpa_rows.len(), 2);
        assert!(mmpa_rows.iter().all(|r| r.phi.is_none() && r.note.is_some()));
        let mp_rows: Vec<_> = doc.efficiency.iter().filter(|r| r.method == "mp").collect();
        assert!(mp_rows.iter().all(|r| r.phi.is_some()));
    }

    #[test]
    fn analyze_rejects_too_small_cohorts() {
        let cohort = Cohort::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let config = AnalyzeConfig {
            k_min: 2,
            k_max: 8,
            ..AnalyzeConfig::default()
        };
        assert!(matches!(
            run_analyze(&cohort, &config),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn atr_matches_analyze_point_estimates() {
        let mut rng = RngStream::new(77, 0);
        let values = sample_exponential(400.0, 200, &mut rng).unwrap();
        let cohort = Cohort::from_values(values).unwrap();
        let config = AnalyzeConfig {
            k_min: 2,
            k_max: 4,
            methods: vec![Procedure::Mp],
            bootstrap: 0,
            replicates: Some(20),
            ..AnalyzeConfig::default()
        };
        let doc = run_analyze(&cohort, &config).unwrap();
        let rows = run_atr(&cohort, Procedure::Mp, &config).unwrap();
        for (rec, row) in doc.efficiency.iter().zip(&rows) {
            assert_eq!(rec.k, row.k);
            assert_eq!(rec.phi.unwrap() * 100.0, row.atr_per_100);
        }
    }

    #[test]
    fn all_zero_cohort_atr_is_twenty_per_hundred_at_k5() {
        let cohort = Cohort::from_values(vec![0.0; 100]).unwrap();
        let config = AnalyzeConfig {
            k_min: 5,
            k_max: 5,
            bootstrap: 0,
            replicates: Some(4),
            ..AnalyzeConfig::default()
        };
        let rows = run_atr(&cohort, Procedure::Mpa, &config).unwrap();
        assert!((rows[0].atr_per_100 - 20.0).abs() < 1e-12);
    }
}
