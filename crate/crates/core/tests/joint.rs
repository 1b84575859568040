mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use cpcbayes::cohort;
use cpcbayes::joint_model::{
    basis_gramian, fit_joint, folded_proposal, folded_proposal_density, log_iw_density, log_posterior_uncached,
    posterior_predictive_scores, reconstruction_error_map, run_sampler, w_conditional, JointChain, JointConfig,
    JointHyper, JointInit, JointState, JointTarget,
};
use cpcbayes::Error;

fn correlation<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let s = common::random_spd(rng, p, 0.3);
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    let mut m = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (d[i] * d[j]));
    for i in 0..p {
        m[(i, i)] = 1.0;
    }
    m
}

fn random_state<R: Rng>(rng: &mut R, p: usize, k: usize, n: usize) -> JointState {
    let mut u = || rng.random::<f64>();
    JointState {
        b: DMatrix::from_fn(p, k, |_, _| u() - 0.5),
        c: DMatrix::from_fn(k, n, |_, _| 2.0 * u()),
        w: DVector::from_fn(k, |_, _| 2.0 * u() - 1.0),
        sigma_w_sq: 0.2 + u(),
        sigma_c_sq: 0.2 + u(),
        sigma_y_sq: 0.2 + u(),
    }
}

fn target(p: usize, k: usize, n: usize, seed: u64) -> (Vec<DMatrix<f64>>, Vec<f64>, JointTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<DMatrix<f64>> = (0..n).map(|_| correlation(&mut rng, p)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let refs: Vec<&DMatrix<f64>> = gammas.iter().collect();
    let ids: Vec<String> = (0..n).map(|i| format!("s{}", i)).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let t = JointTarget::new(&refs, &id_refs, &y, k, JointHyper::for_regions(p)).unwrap();
    (gammas, y, t)
}

#[test]
fn cached_posterior_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(p, k, n) in &[(2, 1, 2), (5, 2, 4), (8, 3, 6)] {
        let (gammas, _, t) = target(p, k, n, p as u64);
        let refs: Vec<&DMatrix<f64>> = gammas.iter().collect();
        for _ in 0..20 {
            let s = random_state(&mut rng, p, k, n);
            let fast = t.log_posterior(&s);
            let slow = log_posterior_uncached(&s, &refs, t.centered_scores(), t.hyper()).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-9 * slow.abs().max(1.0),
                "{} vs {}",
                fast,
                slow
            );
        }
    }
}

/// Inverse-Wishart log density written out with LU determinants and an
/// explicit inverse.
fn iw_oracle(x: &DMatrix<f64>, mean: &DMatrix<f64>, nu: f64, eps: f64) -> f64 {
    let p = x.nrows();
    let pf = p as f64;
    let psi = (mean + DMatrix::<f64>::identity(p, p) * eps) * (nu - pf - 1.0);
    let ln_gamma_p = pf * (pf - 1.0) / 4.0 * PI.ln() + (0..p).map(|j| ln_gamma((nu - j as f64) / 2.0)).sum::<f64>();
    let inv = x.clone().try_inverse().unwrap();
    0.5 * nu * psi.clone().lu().determinant().ln()
        - 0.5 * nu * pf * 2f64.ln()
        - ln_gamma_p
        - 0.5 * (nu + pf + 1.0) * x.clone().lu().determinant().ln()
        - 0.5 * (psi * inv).trace()
}

#[test]
fn iw_density_matches_second_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1, 2, 4, 7] {
        for _ in 0..10 {
            let x = common::random_spd(&mut rng, p, 0.2);
            let m = common::random_spd(&mut rng, p, 0.1);
            let nu = p as f64 + 2.0 + rng.random::<f64>() * 10.0;
            let ours = log_iw_density(&x, &m, nu, 1e-3).unwrap();
            let oracle = iw_oracle(&x, &m, nu, 1e-3);
            assert!(
                (ours - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
                "p = {}: {} vs {}",
                p,
                ours,
                oracle
            );
        }
    }
}

#[test]
fn one_by_one_iw_is_inverse_gamma() {
    for &(x, m, nu) in &[(0.5, 1.0, 4.0), (2.0, 0.3, 3.5), (1.0, 1.0, 10.0)] {
        let ours = log_iw_density(
            &DMatrix::from_element(1, 1, x),
            &DMatrix::from_element(1, 1, m),
            nu,
            0.0,
        )
        .unwrap();
        let oracle = common::ln_inverse_gamma(x, nu / 2.0, (nu - 2.0) * m / 2.0);
        assert!((ours - oracle).abs() < 1e-12);
    }
}

#[test]
fn w_conditional_mean_is_regularised_least_squares() {
    let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 2.0, 0.0, 1.5, 0.3]);
    let y = [0.4, -1.0, 0.6];
    let (precision, linear) = w_conditional(&c, &y, 2.0, 0.5);
    let mean = precision.lu().solve(&linear).unwrap();
    let x = c.transpose();
    let oracle = (x.transpose() * &x + DMatrix::<f64>::identity(2, 2) * (0.5 / 2.0))
        .lu()
        .solve(&(x.transpose() * DVector::from_column_slice(&y)))
        .unwrap();
    assert!((mean - oracle).amax() < 1e-12);
}

#[test]
fn folded_proposal_is_symmetric_and_normalised() {
    for &(a, b, tau) in &[(0.1, 0.7, 0.3), (2.0, 0.0, 1.0), (0.0, 0.0, 0.05)] {
        assert!((folded_proposal_density(a, b, tau) - folded_proposal_density(b, a, tau)).abs() < 1e-12);
    }
    let h = 1e-4;
    let mass: f64 = (0..200_000)
        .map(|i| folded_proposal_density((i as f64 + 0.5) * h, 0.4, 0.5) * h)
        .sum();
    assert!((mass - 1.0).abs() < 1e-6, "{}", mass);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!((0..1000).all(|_| folded_proposal(&mut rng, 0.01, 1.0) >= 0.0));
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn prior_only_loadings_follow_half_normal() {
    let mut hyper = JointHyper::for_regions(2);
    hyper.tau_c = 1.0;
    let (gammas, y, _) = target(2, 1, 2, 5);
    let refs: Vec<&DMatrix<f64>> = gammas.iter().collect();
    let t = JointTarget::new(&refs, &["a", "b"], &y, 1, hyper).unwrap().prior_only();
    let config = JointConfig {
        n_burn: 1000,
        n_keep: 50_000,
        seed: 9,
        adapt: false,
        freeze_variances: true,
        init: JointInit::Cold,
        ..JointConfig::new(1, hyper)
    };
    let chain = run_sampler(&t, &config).unwrap();
    let mut draws: Vec<f64> = chain
        .states
        .iter()
        .flat_map(|s| s.c.iter().copied().collect::<Vec<_>>())
        .collect();
    assert_eq!(draws.len(), 100_000);
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Quartiles of |Z|, Z ~ N(0, 1).
    for (q, expected) in [(0.25, 0.318_639), (0.5, 0.674_490), (0.75, 1.150_349)] {
        let got = quantile(&draws, q);
        assert!((got - expected).abs() < 0.02, "quartile {}: {} vs {}", q, got, expected);
    }
}

/// Component-wise random-walk Metropolis over (B, C, w, ln σ_w², ln σ_c², ln σ_y²)
/// using only the direct log posterior.
fn plain_metropolis(gammas: &[&DMatrix<f64>], y: &[f64], hyper: &JointHyper, sweeps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, k, n) = (gammas[0].nrows(), 1, gammas.len());
    let mut state = JointState {
        b: DMatrix::from_element(p, k, 0.5),
        c: DMatrix::from_element(k, n, 0.5),
        w: DVector::zeros(k),
        sigma_w_sq: 1.0,
        sigma_c_sq: 1.0,
        sigma_y_sq: 1.0,
    };
    let dim = p * k + k * n + k + 3;
    let log_target = |s: &JointState| {
        log_posterior_uncached(s, gammas, y, hyper).unwrap() + s.sigma_w_sq.ln() + s.sigma_c_sq.ln() + s.sigma_y_sq.ln()
    };
    let mut current = log_target(&state);
    let mut out = Vec::with_capacity(sweeps);
    for sweep in 0..sweeps {
        for j in 0..dim {
            let z: f64 = 0.6 * (rng.random::<f64>() * 2.0 - 1.0);
            let mut next = state.clone();
            match j {
                j if j < p * k => next.b[j] += z,
                j if j < p * k + k * n => next.c[j - p * k] += z,
                j if j < p * k + k * n + k => next.w[j - p * k - k * n] += z,
                j if j == dim - 3 => next.sigma_w_sq *= z.exp(),
                j if j == dim - 2 => next.sigma_c_sq *= z.exp(),
                _ => next.sigma_y_sq *= z.exp(),
            }
            let proposed = log_target(&next);
            if rng.random::<f64>().ln() < proposed - current {
                state = next;
                current = proposed;
            }
        }
        if sweep >= sweeps / 10 {
            out.push(state.sigma_y_sq);
        }
    }
    out
}

#[test]
fn sampler_agrees_with_plain_metropolis_on_tiny_problem() {
    let (gammas, _, t) = target(2, 1, 2, 21);
    let refs: Vec<&DMatrix<f64>> = gammas.iter().collect();
    let oracle = plain_metropolis(&refs, t.centered_scores(), t.hyper(), 300_000, 4);
    let oracle_mean = oracle.iter().sum::<f64>() / oracle.len() as f64;

    let config = JointConfig {
        n_burn: 5000,
        n_keep: 200_000,
        seed: 8,
        init: JointInit::Cold,
        ..JointConfig::new(1, *t.hyper())
    };
    let chain = run_sampler(&t, &config).unwrap();
    let ours = chain.series(|s| s.sigma_y_sq);
    let ours_mean = ours.iter().sum::<f64>() / ours.len() as f64;
    let rel = (ours_mean - oracle_mean).abs() / oracle_mean;
    assert!(
        rel < 0.05,
        "sigma_y^2 mean {} vs {} (relative {})",
        ours_mean,
        oracle_mean,
        rel
    );
}

fn chain_of(states: Vec<JointState>, score_mean: f64) -> JointChain {
    let (_, _, t) = target(2, 1, 2, 1);
    let mut chain = run_sampler(
        &t,
        &JointConfig {
            n_burn: 0,
            n_keep: 1,
            init: JointInit::Cold,
            ..JointConfig::new(1, *t.hyper())
        },
    )
    .unwrap();
    chain.states = states;
    chain.score_mean = score_mean;
    chain
}

#[test]
fn predictive_score_examples() {
    let base = JointState {
        b: DMatrix::from_element(2, 1, 0.5),
        c: DMatrix::from_row_slice(1, 2, &[1.0, 3.0]),
        w: DVector::zeros(1),
        sigma_w_sq: 1.0,
        sigma_c_sq: 1.0,
        sigma_y_sq: 1.0,
    };
    let flat = posterior_predictive_scores(&chain_of(vec![base.clone()], 4.5));
    assert!(flat.iter().all(|p| p.mean == 4.5 && p.sd == 0.0));

    let mut a = base.clone();
    a.w[0] = 1.0;
    let mut b = base;
    b.w[0] = 3.0;
    let two = posterior_predictive_scores(&chain_of(vec![a, b], 0.0));
    assert_eq!(two[0].draws, vec![1.0, 3.0]);
    assert!((two[0].mean - 2.0).abs() < 1e-15 && (two[0].sd - 1.0).abs() < 1e-15);
    assert!((two[1].mean - 6.0).abs() < 1e-15);
}

#[test]
fn reconstruction_map_and_gramian() {
    let (cohort, _) = cohort::generate_noiseless(4, 1, 2, 3).unwrap();
    let g0 = cohort.matrices()[0].clone();
    let state = JointState {
        b: DMatrix::zeros(4, 1),
        c: DMatrix::from_element(1, 2, 1.0),
        w: DVector::zeros(1),
        sigma_w_sq: 1.0,
        sigma_c_sq: 1.0,
        sigma_y_sq: 1.0,
    };
    let maps = reconstruction_error_map(&chain_of(vec![state.clone()], 0.0), &cohort);
    assert_eq!(maps.len(), 2);
    assert!((&maps[0] - g0.abs()).amax() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_state(&mut rng, 6, 3, 2);
    let direct = DMatrix::from_fn(3, 3, |i, j| s.b.column(i).dot(&s.b.column(j)));
    assert!((basis_gramian(&s) - direct).amax() < 1e-14);
}

#[test]
fn invalid_problems_are_rejected() {
    let (cohort, _) = cohort::generate_noiseless(4, 1, 3, 0).unwrap();
    let score = cohort::SYNTHETIC_SCORE;
    let bad_k = JointConfig::new(4, JointHyper::for_regions(4));
    assert!(matches!(fit_joint(&cohort, score, &bad_k), Err(Error::Config(_))));

    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    let fine = DMatrix::<f64>::identity(2, 2);
    match JointTarget::new(
        &[&fine, &indefinite],
        &["ok", "broken"],
        &[0.0, 1.0],
        1,
        JointHyper::for_regions(2),
    ) {
        Err(Error::Numerical(m)) => assert!(m.contains("broken"), "{}", m),
        Err(e) => panic!("unexpected error {}", e),
        Ok(_) => panic!("indefinite matrix accepted"),
    }
    let mut low_nu = JointHyper::for_regions(2);
    low_nu.nu0 = 3.0;
    assert!(matches!(
        JointTarget::new(&[&fine], &["a"], &[0.0], 1, low_nu),
        Err(Error::Config(_))
    ));
}

#[test]
fn runs_are_deterministic() {
    let (cohort, _) = cohort::generate_synthetic(6, 2, 8, 0.3, 12, 4).unwrap();
    let config = JointConfig {
        n_burn: 200,
        n_keep: 100,
        seed: 31,
        ..JointConfig::new(2, JointHyper::for_regions(6))
    };
    let a = fit_joint(&cohort, cohort::SYNTHETIC_SCORE, &config).unwrap();
    let b = fit_joint(&cohort, cohort::SYNTHETIC_SCORE, &config).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!((a.accept_rate_b, a.accept_rate_c), (b.accept_rate_b, b.accept_rate_c));
    assert!(a.states.iter().all(JointState::is_valid));
}
