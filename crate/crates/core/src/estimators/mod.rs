//! Testing-efficiency estimators.
//!
//! Efficiency is `phi(K)`: the expected number of assays per individual for
//! a pool size of `K`. Individual testing has `phi = 1`; `1 - phi` is the
//! assay cost saving. Four routes are provided:
//!
//! * closed forms for exponential cohorts ([`phi_mp_analytic`],
//!   [`phi_mpa_analytic`]),
//! * empirical convolution of the cohort distribution
//!   ([`convolution::phi_mp_empirical`], [`convolution::phi_mpa_empirical`]),
//! * the Beta-weighted concomitant-order formula for mMPA
//!   ([`formula::phi_mmpa_formula`]),
//! * direct pooling simulation ([`monte_carlo::phi_monte_carlo`]).

pub mod bootstrap;
pub mod convolution;
pub mod formula;
pub mod monte_carlo;
pub mod score;

use serde::{Deserialize, Serialize};

use crate::distributions::gamma_cdf;
use crate::error::{Error, Result};

/// A cohort of test results, the empirical substrate for every estimator:
/// `N` assay values with optional risk scores.
#[derive(Debug, Clone)]
pub struct Cohort {
    values: Vec<f64>,
    scores: Option<Vec<f64>>,
}

impl Cohort {
    pub fn new(values: Vec<f64>, scores: Option<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cohort must contain at least one individual".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("assay values must be finite and >= 0".into()));
        }
        if let Some(s) = &scores {
            if s.len() != values.len() {
                return Err(Error::Data(format!(
                    "scores length {} does not match cohort size {}",
                    s.len(),
                    values.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("risk scores must be finite".into()));
            }
        }
        Ok(Cohort { values, scores })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Cohort::new(values, None)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    /// Replaces the score column.
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Cohort::new(self.values.clone(), Some(scores))
    }

    /// Fraction of values strictly above the cutoff.
    pub fn prevalence(&self, cutoff: f64) -> f64 {
        self.values.iter().filter(|&&v| v > cutoff).count() as f64 / self.len() as f64
    }

    /// Sub-cohort by row indices (rows may repeat, as in bootstrap resamples).
    pub fn select(&self, indices: &[usize]) -> Cohort {
        let values = indices.iter().map(|&i| self.values[i]).collect();
        let scores = self
            .scores
            .as_ref()
            .map(|s| indices.iter().map(|&i| s[i]).collect());
        Cohort { values, scores }
    }
}

/// How a `phi` value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    Convolution,
    BetaFormula,
    MonteCarlo,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Convolution => "convolution",
            Method::BetaFormula => "beta-formula",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// An estimated testing efficiency: assays per individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub phi: f64,
    pub method: Method,
    pub k: usize,
    /// 95% interval when a bootstrap was run.
    pub ci: Option<(f64, f64)>,
}

/// Closed-form bounds on mMPA efficiency for a pool size `K`:
/// `(1 + K p - p^K) / K <= phi <= 1 - (1/K) sum_j F_Tj(C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Analytic MP efficiency for an exponential cohort:
/// `phi = 1/K + Pr(T_1 > C)` with `T_1 ~ Erlang(K, theta)`.
pub fn phi_mp_analytic(k: usize, theta: f64, cutoff: f64) -> Result<EfficiencyEstimate> {
    check_k(k)?;
    let phi = 1.0 / k as f64 + (1.0 - gamma_cdf(cutoff, k as u32, theta)?);
    Ok(EfficiencyEstimate {
        phi,
        method: Method::Analytic,
        k,
        ci: None,
    })
}

/// Analytic MPA efficiency for an exponential cohort:
/// `phi = 1 - (1/K) sum_{j=1}^{K-1} F_Tj(C)` with `T_j ~ Erlang(K-j+1, theta)`.
pub fn phi_mpa_analytic(k: usize, theta: f64, cutoff: f64) -> Result<EfficiencyEstimate> {
    check_k(k)?;
    let mut sum = 0.0;
    for j in 1..k {
        sum += gamma_cdf(cutoff, (k - j + 1) as u32, theta)?;
    }
    Ok(EfficiencyEstimate {
        phi: 1.0 - sum / k as f64,
        method: Method::Analytic,
        k,
        ci: None,
    })
}

/// Closed-form mMPA efficiency bounds from the failure prevalence `p` and
/// the tail CDFs `F_Tj(C)` for `j = 1..K-1`.
pub fn phi_mmpa_bounds(k: usize, p: f64, tail_cdfs: &[f64]) -> Result<EfficiencyBounds> {
    check_k(k)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("prevalence must lie in [0,1], got {p}")));
    }
    if tail_cdfs.len() != k - 1 {
        return Err(Error::Parameter(format!(
            "expected {} tail CDF values for K={k}, got {}",
            k - 1,
            tail_cdfs.len()
        )));
    }
    if tail_cdfs.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Parameter("tail CDF values must lie in [0,1]".into()));
    }
    let kf = k as f64;
    let lower = (1.0 + kf * p - p.powi(k as i32)) / kf;
    let upper = 1.0 - tail_cdfs.iter().sum::<f64>() / kf;
    Ok(EfficiencyBounds { lower, upper })
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::Parameter("pool size must be >= 1".into()));
    }
    Ok(())
}
