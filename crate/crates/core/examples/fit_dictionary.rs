//! Fit a shared dictionary to a noiseless cohort and check how well it
//! recovers the planted subspace.

use cpcbayes::cohort;
use cpcbayes::cpc::{self, CpcConfig};

fn main() -> cpcbayes::Result<()> {
    let (cohort, truth) = cohort::generate_noiseless(10, 2, 25, 7)?;
    let fit = cpc::fit_dictionary(&cohort, &CpcConfig::new(2))?;

    let report = &fit.report;
    println!("iterations {}, converged {}", report.iterations, report.converged);
    println!(
        "final objective {:.3e}",
        report.objective_trace.last().copied().unwrap_or(f64::NAN)
    );

    let err = cpc::relative_reconstruction_error(&cohort.matrices(), &fit.dictionary, &fit.loadings);
    println!("relative reconstruction error {:.3e}", err);

    // Projectors are invariant to sign flips and column order.
    let b = &truth.b_true;
    let planted = b * b.transpose();
    println!(
        "projector distance {:.3e}",
        (fit.dictionary.projector() - planted).norm()
    );

    // A fresh subject is mapped onto the learned dictionary by projection.
    let c = cpc::project_loadings(cohort.matrices()[0], &fit.dictionary)?;
    println!("subject 0 loadings {:?}", c.as_slice());
    Ok(())
}
