//! Seedable random streams and the small set of special functions the
//! estimators need.
//!
//! Every Monte Carlo replicate draws from its own [`RngStream`], identified
//! by `(master_seed, stream_id)`. Streams are independent ChaCha8 streams,
//! so results do not depend on thread scheduling or worker count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};

/// Mixes a master seed with a domain tag into a fresh master seed.
///
/// Used to keep seed spaces of unrelated consumers (replicates, bootstrap
/// resamples, synthetic scores) disjoint. SplitMix64 finalizer.
pub fn derive_seed(master_seed: u64, domain: u64) -> u64 {
    let mut z = master_seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream: one independent substream per
/// `(master_seed, stream_id)` pair.
///
/// Identical parameters yield bit-identical draw sequences on every run and
/// platform; distinct `stream_id`s are statistically independent, so
/// replicates can run on any number of workers without coordinating.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Multiplicative measurement-error model for observed assay values.
///
/// Errors are symmetric around one on the log scale (`eps` and `1/eps` have
/// the same distribution), so `None` and `LogNormal { sigma: 0.0 }` both
/// produce the constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// No measurement error; every draw is exactly 1.
    None,
    /// `log eps ~ N(0, sigma^2)`.
    LogNormal { sigma: f64 },
}

impl ErrorModel {
    pub fn none() -> Self {
        ErrorModel::None
    }

    pub fn log_normal(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Parameter(format!(
                "error-model sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(ErrorModel::LogNormal { sigma })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ErrorModel::None | ErrorModel::LogNormal { sigma: 0.0 })
    }
}

/// Draws one multiplicative error `eps > 0` with `E[log eps] = 0`.
pub fn sample_error(model: &ErrorModel, rng: &mut RngStream) -> f64 {
    match model {
        ErrorModel::None => 1.0,
        ErrorModel::LogNormal { sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            (sigma * z).exp()
        }
    }
}

/// Draws `n` i.i.d. exponential values with mean `theta`.
pub fn sample_exponential(theta: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::Parameter(format!(
            "exponential scale must be finite and > 0, got {theta}"
        )));
    }
    let exp = Exp::new(1.0 / theta).expect("valid rate");
    Ok((0..n).map(|_| exp.sample(rng)).collect())
}

/// CDF of the sum of `shape` i.i.d. exponentials with the given scale
/// (the Erlang distribution), via the closed-form series
/// `1 - exp(-x/scale) * sum_{m=0}^{shape-1} (x/scale)^m / m!`.
///
/// Integer shapes only; that is all the pooled-sum calculations need.
pub fn gamma_cdf(x: f64, shape: u32, scale: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Parameter(format!(
            "gamma_cdf x must be finite and >= 0, got {x}"
        )));
    }
    if shape < 1 {
        return Err(Error::Parameter(format!(
            "gamma_cdf shape must be >= 1, got {shape}"
        )));
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::Parameter(format!(
            "gamma_cdf scale must be finite and > 0, got {scale}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let z = x / scale;
    if z > 700.0 {
        // The plain series would overflow/underflow; evaluate the tail in
        // log space: log tail = -z + logsumexp_m (m ln z - ln m!).
        let ln_z = z.ln();
        let mut max_term = f64::NEG_INFINITY;
        let mut log_terms = Vec::with_capacity(shape as usize);
        let mut ln_fact = 0.0;
        for m in 0..shape {
            if m > 0 {
                ln_fact += (m as f64).ln();
            }
            let t = m as f64 * ln_z - ln_fact;
            log_terms.push(t);
            if t > max_term {
                max_term = t;
            }
        }
        let sum: f64 = log_terms.iter().map(|t| (t - max_term).exp()).sum();
        let log_tail = -z + max_term + sum.ln();
        return Ok((-log_tail.exp_m1()).clamp(0.0, 1.0));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..shape {
        term *= z / m as f64;
        sum += term;
    }
    Ok((1.0 - (-z).exp() * sum).clamp(0.0, 1.0))
}

/// Density at `u` of the j-th smallest of `k` i.i.d. uniforms, i.e. the
/// Beta(j, k+1-j) density `u^(j-1) (1-u)^(k-j) / b(j, k+1-j)`.
pub fn beta_order_weight(j: u32, k: u32, u: f64) -> Result<f64> {
    if k < 1 || j < 1 || j > k {
        return Err(Error::Parameter(format!(
            "rank index must satisfy 1 <= j <= k, got j={j}, k={k}"
        )));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Parameter(format!(
            "uniform-scale score must lie in [0, 1], got {u}"
        )));
    }
    // 1 / b(j, k+1-j) = k! / ((j-1)! (k-j)!) = k * C(k-1, j-1)
    let mut coeff = k as f64;
    let (a, b) = ((j - 1) as f64, (k - j) as f64);
    let m = a.min(b) as u32;
    for i in 0..m {
        coeff *= (k - 1 - i) as f64 / (i + 1) as f64;
    }
    Ok(coeff * u.powi(j as i32 - 1) * (1.0 - u).powi((k - j) as i32))
}
