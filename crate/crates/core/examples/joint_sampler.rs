//! Joint sampling of dictionary, loadings and regression weights, started
//! from the deterministic dictionary fit.

use cpcbayes::cohort;
use cpcbayes::diagnostics::rmse;
use cpcbayes::joint_model::{fit_joint, posterior_predictive_scores, JointConfig, JointHyper};

fn main() -> cpcbayes::Result<()> {
    let (cohort, _) = cohort::generate_synthetic(10, 3, 30, 0.5, 30, 42)?;
    let config = JointConfig {
        n_burn: 2000,
        n_keep: 1000,
        seed: 7,
        ..JointConfig::new(3, JointHyper::for_regions(cohort.p()))
    };
    let chain = fit_joint(&cohort, cohort::SYNTHETIC_SCORE, &config)?;
    let r = &chain.report;
    println!("acceptance: B {:.2}, C {:.2}", r.accept_rate_b, r.accept_rate_c);
    println!(
        "step sizes: tau_b {:.4} -> {:.4}, tau_c {:.4} -> {:.4}",
        r.tau_b_initial, r.tau_b, r.tau_c_initial, r.tau_c
    );

    let y = cohort.scores(cohort::SYNTHETIC_SCORE)?;
    let fitted: Vec<f64> = posterior_predictive_scores(&chain).iter().map(|p| p.mean).collect();
    let constant = vec![chain.score_mean; y.len()];
    println!(
        "in-sample rMSE {:.4} (constant predictor {:.4})",
        rmse(&fitted, &y)?,
        rmse(&constant, &y)?
    );

    let sy = chain.series(|s| s.sigma_y_sq);
    println!(
        "posterior mean sigma_y^2 {:.4}",
        sy.iter().sum::<f64>() / sy.len() as f64
    );
    Ok(())
}
