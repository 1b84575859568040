//! Conjugate Bayesian linear regression of a score on dictionary loadings.

use cpcbayes::bayes_regress::{fit_blr, predict, predict_mean, BlrHyper};
use cpcbayes::cohort;
use cpcbayes::cpc::{self, CpcConfig};
use cpcbayes::diagnostics::rmse;

fn main() -> cpcbayes::Result<()> {
    let (cohort, truth) = cohort::generate_synthetic(10, 2, 60, 0.3, 30, 3)?;
    let y = cohort.scores(cohort::SYNTHETIC_SCORE)?;
    let fit = cpc::fit_dictionary(&cohort, &CpcConfig::new(2))?;

    let chain = fit_blr(&fit.loadings, &y, &BlrHyper::with_variance(10.0), 2000, 5000, 11)?;
    let mean = chain.coefficient_mean();
    println!("posterior mean (intercept first): {:.3?}", mean);

    // Learned loadings match the planted ones only up to sign and order, so
    // compare fits rather than weights.
    let fitted = predict_mean(&chain, &fit.loadings)?;
    println!("in-sample rMSE {:.4} (noise sd {})", rmse(&fitted, &y)?, truth.sigma_y);

    let sigma: Vec<f64> = chain.coefficient_draws().map(|(_, _, s2)| s2).collect();
    println!("mean sigma^2 {:.4}", sigma.iter().sum::<f64>() / sigma.len() as f64);

    let first = fit.loadings.subject(0);
    let p = predict(&chain, &first, true, 0)?;
    println!(
        "subject 0: observed {:.3}, predicted {:.3} +/- {:.3}",
        y[0],
        p.mean,
        p.sd()
    );
    Ok(())
}
