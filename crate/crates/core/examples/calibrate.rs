// Dev scratch: numeric calibration of the mMPA formula estimator.
use pooled_testing::distributions::{sample_exponential, ErrorModel, RngStream};
use pooled_testing::estimators::convolution::{phi_mpa_empirical, phi_mp_empirical};
use pooled_testing::estimators::formula::phi_mmpa_formula_sweep;
use pooled_testing::estimators::monte_carlo::{phi_monte_carlo, MonteCarloOptions};
use pooled_testing::estimators::score::{make_risk_score, spearman};
use pooled_testing::estimators::Cohort;
use pooled_testing::procedures::{Procedure, Threshold};
use std::time::Instant;

fn exp_cohort(seed: u64, n: usize, lambda: f64) -> Cohort {
    let mut rng = RngStream::new(seed, 0);
    let values = sample_exponential(400.0, n, &mut rng).unwrap();
    let cohort = Cohort::from_values(values).unwrap();
    let scores = make_risk_score(&cohort, lambda, seed ^ 0x1234).unwrap();
    cohort.with_scores(scores).unwrap()
}

fn main() {
    let threshold = Threshold::new(1000.0).unwrap();

    // Ground truth by large-scale Monte Carlo per lambda, K=3.
    println!("== K=3, theta=400: MC ground truth vs formula ==");
    for lambda in [0.0, 0.25, 1.0] {
        let cohort = exp_cohort(101, 100_000, lambda);
        let rho = spearman(cohort.values(), cohort.scores().unwrap()).unwrap();
        let opts = MonteCarloOptions::new(40, ErrorModel::None, 7);
        let mc = phi_monte_carlo(&cohort, 3, &threshold, Procedure::Mmpa, &opts).unwrap();
        let f = phi_mmpa_formula_sweep(&cohort, &[3], 1000.0, 1024).unwrap()[0].phi;
        let mpa = phi_mpa_empirical(&cohort, 3, 1000.0, 1024).unwrap().phi;
        println!(
            "lambda={lambda:4.2} rho={rho:5.3}  mc={:.5}  formula={:.5}  diff={:+.5}  mpa={:.5}",
            mc.phi,
            f,
            f - mc.phi,
            mpa
        );
    }

    // Paper anchor: K=2..6 savings at lambda=0.25 (expect optimum 3, ~42%).
    println!("\n== sweep K=2..6, lambda=0.25, N=100k ==");
    let cohort = exp_cohort(202, 100_000, 0.25);
    let ks = [2usize, 3, 4, 5, 6];
    let t0 = Instant::now();
    let sweep = phi_mmpa_formula_sweep(&cohort, &ks, 1000.0, 1024).unwrap();
    println!("formula sweep at N=100k took {:?}", t0.elapsed());
    for est in &sweep {
        let opts = MonteCarloOptions::new(30, ErrorModel::None, 9);
        let mc = phi_monte_carlo(&cohort, est.k, &threshold, Procedure::Mmpa, &opts).unwrap();
        println!(
            "K={}  formula={:.5} (saving {:4.1}%)  mc={:.5}  diff={:+.5}",
            est.k,
            est.phi,
            (1.0 - est.phi) * 100.0,
            mc.phi,
            est.phi - mc.phi
        );
    }

    // Oracle anchor at K=3: closed form 0.539224.
    println!("\n== oracle K=3 anchor (expect ~0.53922) ==");
    let cohort = exp_cohort(303, 100_000, 1.0);
    let f = phi_mmpa_formula_sweep(&cohort, &[3], 1000.0, 1024).unwrap()[0].phi;
    let opts = MonteCarloOptions::new(40, ErrorModel::None, 11);
    let mc = phi_monte_carlo(&cohort, 3, &threshold, Procedure::Mmpa, &opts).unwrap();
    println!("formula={f:.5}  mc={:.5}", mc.phi);

    // Chain violations scan: mmpa <= mpa <= min(mp, 1).
    println!("\n== chain margin scan ==");
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for trial in 0..120u64 {
        let mut rng = RngStream::new(1000 + trial, 0);
        let theta = 250.0 + 450.0 * rng.uniform();
        let n = 400 + (rng.uniform() * 1600.0) as usize;
        let lambda = 0.10 + 0.90 * rng.uniform();
        let k = 2 + (rng.uniform() * 5.0) as usize; // 2..=6
        let values = sample_exponential(theta, n, &mut rng).unwrap();
        let cohort = Cohort::from_values(values).unwrap();
        let scores = make_risk_score(&cohort, lambda, 5000 + trial).unwrap();
        let cohort = cohort.with_scores(scores).unwrap();
        let mmpa = phi_mmpa_formula_sweep(&cohort, &[k], 1000.0, 512).unwrap()[0].phi;
        let mpa = phi_mpa_empirical(&cohort, k, 1000.0, 512).unwrap().phi;
        let mp = phi_mp_empirical(&cohort, k, 1000.0, 512).unwrap().phi;
        let margin = mpa - mmpa;
        if margin < min_margin {
            min_margin = margin;
            println!(
                "  new min margin {margin:+.5} at trial={trial} theta={theta:.0} n={n} lambda={lambda:.2} k={k}"
            );
        }
        if mmpa > mpa + 1e-12 || mpa > mp.min(1.0) + 1e-12 {
            violations += 1;
            println!("  VIOLATION trial={trial} mmpa={mmpa:.5} mpa={mpa:.5} mp={mp:.5}");
        }
    }
    println!("violations: {violations}, min mpa-mmpa margin: {min_margin:+.6}");

    // Timing for the study-I acceptance shape: N=2000, grid 1024.
    println!("\n== timing: one replicate at N=2000 ==");
    let cohort = exp_cohort(404, 2000, 0.25);
    let t0 = Instant::now();
    let _ = phi_mmpa_formula_sweep(&cohort, &[2, 3, 4, 5, 6], 1000.0, 1024).unwrap();
    println!("formula sweep: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let _ = phi_mpa_empirical(&cohort, 6, 1000.0, 1024).unwrap();
    println!("convolution ladder: {:?}", t0.elapsed());
}
