//! Spike-and-slab variable selection on loadings where only some predictors
//! carry signal.

use cpcbayes::bayes_regress::{fit_ssvs, inclusion_probabilities, SsvsHyper};
use cpcbayes::cpc::LoadingMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cpcbayes::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (k, n) = (5, 120);
    let c = LoadingMatrix::new(DMatrix::from_fn(k, n, |_, _| rng.random::<f64>() * 2.0))?;
    let truth = [1.5, 0.0, -2.0, 0.0, 0.0];
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = c.subject(i).iter().zip(&truth).map(|(a, b)| a * b).sum();
            signal + 0.2 * (rng.random::<f64>() - 0.5)
        })
        .collect();

    let chain = fit_ssvs(&c, &y, &SsvsHyper::homogeneous(10.0, 1e-4), 2000, 5000, 1)?;
    let incl = inclusion_probabilities(&chain)?;
    println!("index  true   P(include)");
    println!("{:>5}  {:>5}  {:.3}", "b0", "-", incl[0]);
    for (j, (t, p)) in truth.iter().zip(&incl[1..]).enumerate() {
        println!("{:>5}  {:>5.1}  {:.3}", j + 1, t, p);
    }
    Ok(())
}
