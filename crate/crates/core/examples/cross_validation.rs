//! Five-fold cross-validation of the three regression models with grid
//! search, printed as a results table.

use cpcbayes::cohort;
use cpcbayes::diagnostics::{default_grid, run_cv, table_csv, CvConfig, ModelKind};

fn main() -> cpcbayes::Result<()> {
    let (cohort, _) = cohort::generate_synthetic(10, 3, 40, 0.5, 30, 9)?;
    let config = CvConfig {
        n_burn: 500,
        n_keep: 1000,
        jobs: 4,
        ..CvConfig::new(3, 1)
    };
    let mut reports = Vec::new();
    for model in [ModelKind::Blr, ModelKind::Ssvs, ModelKind::Ridge] {
        let report = run_cv(&cohort, cohort::SYNTHETIC_SCORE, model, &default_grid(model), &config)?;
        for f in &report.folds {
            println!(
                "{} fold {}: test rMSE {:.4}, chose {:?}",
                report.method, f.fold, f.rmse_test, f.chosen
            );
        }
        reports.push(report);
    }
    println!();
    print!("{}", table_csv(&reports));
    Ok(())
}
