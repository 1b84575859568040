//! Generate a synthetic cohort and print the scree spectrum of its mean matrix.
//!
//! With three planted components the first three eigenvalues stand well
//! clear of the rest.

use cpcbayes::cohort;

fn main() -> cpcbayes::Result<()> {
    let (cohort, truth) = cohort::generate_synthetic(12, 3, 40, 0.5, 30, 1)?;
    println!(
        "{} subjects, {} regions, true K = {}",
        cohort.n(),
        cohort.p(),
        truth.b_true.ncols()
    );

    let eig = cohort::scree_eigenvalues(&cohort);
    for (i, v) in eig.iter().enumerate() {
        println!("{:>3} {:>8.4} {}", i + 1, v, "#".repeat((v * 10.0).round() as usize));
    }
    Ok(())
}
