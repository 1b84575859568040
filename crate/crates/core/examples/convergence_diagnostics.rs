//! Autocorrelation and Geweke checks on a joint-model chain.

use cpcbayes::cohort;
use cpcbayes::diagnostics::{autocorrelation, geweke_z};
use cpcbayes::joint_model::{fit_joint, JointConfig, JointHyper};

fn main() -> cpcbayes::Result<()> {
    let (cohort, _) = cohort::generate_synthetic(8, 2, 20, 0.5, 20, 3)?;
    let config = JointConfig {
        n_burn: 3000,
        n_keep: 3000,
        seed: 1,
        ..JointConfig::new(2, JointHyper::for_regions(cohort.p()))
    };
    let chain = fit_joint(&cohort, cohort::SYNTHETIC_SCORE, &config)?;

    let series = [
        ("sigma_w_sq", chain.series(|s| s.sigma_w_sq)),
        ("sigma_c_sq", chain.series(|s| s.sigma_c_sq)),
        ("sigma_y_sq", chain.series(|s| s.sigma_y_sq)),
        ("w_1", chain.series(|s| s.w[0])),
    ];
    println!("{:<12} {:>8} {:>8} {:>8}", "series", "acf(1)", "acf(10)", "geweke");
    for (name, x) in &series {
        let acf = autocorrelation(x, 10)?;
        let z = geweke_z(x, 0.1, 0.5)?;
        println!("{:<12} {:>8.3} {:>8.3} {:>8.2}", name, acf[1], acf[10], z);
    }
    Ok(())
}
