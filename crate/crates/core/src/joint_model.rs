//! Joint Bayesian representation learning and prediction.
//!
//! Likelihood per subject: yₙ ~ N(cₙᵀw, σ_y²) on centred scores, and
//! Γₙ ~ IW(ν₀, Ψₙ) with Ψₙ = Q·(B diag(cₙ) Bᵀ + εI), Q = ν₀ − P − 1, so that
//! E[Γₙ] = B diag(cₙ) Bᵀ + εI. Priors: b_k ~ N(0, σ_B² I), cₙ ~ half-N(0, σ_c² I),
//! w ~ N(0, σ_w² I) and inverse-gamma on the three variances.
//!
//! B and C are updated by random-walk Metropolis (C per subject, with the
//! proposal folded at zero); w and the variances by exact Gibbs draws.

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::cohort::Cohort;
use crate::cpc::{self, CpcConfig, Dictionary, LoadingMatrix};
use crate::error::{Error, Result};
use crate::io::{write_json, write_matrix_csv, write_text};
use crate::linalg::{low_rank_product, spd_log_det};
use crate::stats::{ln_normal_pdf, sample_gaussian_canonical, standard_normal, InverseGamma};

pub const DEFAULT_BURN_IN: usize = 8000;
pub const DEFAULT_KEEP: usize = 2000;

/// Iterations between step-size adjustments during burn-in.
const ADAPT_WINDOW: usize = 100;
const ADAPT_FACTOR: f64 = 1.1;
const TARGET_ACCEPT: (f64, f64) = (0.15, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointHyper {
    pub nu0: f64,
    pub a_w: f64,
    pub b_w: f64,
    pub a_c: f64,
    pub b_c: f64,
    pub a_y: f64,
    pub b_y: f64,
    pub sigma_b_sq: f64,
    pub eps_ridge: f64,
    pub tau_b: f64,
    pub tau_c: f64,
}

impl JointHyper {
    /// Defaults for P regions: ν₀ = P + 5, σ_B² = 1/P, a = 3, b = 1.
    pub fn for_regions(p: usize) -> Self {
        Self {
            nu0: (p + 5) as f64,
            a_w: 3.0,
            b_w: 1.0,
            a_c: 3.0,
            b_c: 1.0,
            a_y: 3.0,
            b_y: 1.0,
            sigma_b_sq: 1.0 / p as f64,
            eps_ridge: 1e-3,
            tau_b: 0.01,
            tau_c: 0.1,
        }
    }

    /// Q = ν₀ − P − 1.
    pub fn q(&self, p: usize) -> f64 {
        self.nu0 - p as f64 - 1.0
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.nu0 > p as f64 + 1.0) {
            return Err(Error::Config(format!(
                "nu0 must exceed P + 1 = {}, got {}",
                p + 1,
                self.nu0
            )));
        }
        let named = [
            ("a_w", self.a_w),
            ("b_w", self.b_w),
            ("a_c", self.a_c),
            ("b_c", self.b_c),
            ("a_y", self.a_y),
            ("b_y", self.b_y),
            ("sigma_b_sq", self.sigma_b_sq),
            ("eps_ridge", self.eps_ridge),
            ("tau_b", self.tau_b),
            ("tau_c", self.tau_c),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{} must be positive, got {}", name, v)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w: DVector<f64>,
    pub sigma_w_sq: f64,
    pub sigma_c_sq: f64,
    pub sigma_y_sq: f64,
}

impl JointState {
    pub fn is_valid(&self) -> bool {
        self.c.iter().all(|&v| v >= 0.0) && self.sigma_w_sq > 0.0 && self.sigma_c_sq > 0.0 && self.sigma_y_sq > 0.0
    }
}

/// ln Γ_P(a), the multivariate gamma function.
pub fn ln_multivariate_gamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln() + (1..=p).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Log density at `x` of the inverse-Wishart with `nu0` degrees of freedom
/// and scale Ψ = Q·(`mean_matrix` + ε I), whose mean is `mean_matrix` + ε I.
pub fn log_iw_density(x: &DMatrix<f64>, mean_matrix: &DMatrix<f64>, nu0: f64, eps_ridge: f64) -> Result<f64> {
    let p = x.nrows();
    if x.ncols() != p || mean_matrix.nrows() != p || mean_matrix.ncols() != p {
        return Err(Error::Shape(
            "inverse-Wishart arguments must be square and equally sized".into(),
        ));
    }
    if !(nu0 > p as f64 + 1.0) {
        return Err(Error::Config(format!("nu0 must exceed P + 1 = {}, got {}", p + 1, nu0)));
    }
    let q = nu0 - p as f64 - 1.0;
    let psi = (mean_matrix + DMatrix::<f64>::identity(p, p) * eps_ridge) * q;
    let chol_x = x
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let log_det_x = 2.0 * chol_x.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det_psi =
        spd_log_det(&psi).ok_or_else(|| Error::Numerical("scale matrix is not positive definite".into()))?;
    let trace = (&psi * chol_x.inverse()).trace();
    let pf = p as f64;
    Ok(0.5 * nu0 * log_det_psi
        - 0.5 * nu0 * pf * LN_2
        - ln_multivariate_gamma(p, 0.5 * nu0)
        - 0.5 * (nu0 + pf + 1.0) * log_det_x
        - 0.5 * trace)
}

/// Scalar random-walk proposal reflected at zero: c' = |c + τ z|.
pub fn folded_proposal<R: Rng + ?Sized>(rng: &mut R, c: f64, tau: f64) -> f64 {
    (c + tau * standard_normal(rng)).abs()
}

/// Density of `to` under the folded proposal started at `from`.
pub fn folded_proposal_density(to: f64, from: f64, tau: f64) -> f64 {
    if to < 0.0 {
        return 0.0;
    }
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    (phi((to - from) / tau) + phi((to + from) / tau)) / tau
}

/// Full conditional of w (Gaussian, in canonical form): precision
/// I/σ_w² + Σₙ cₙcₙᵀ/σ_y² and linear term Σₙ cₙyₙ/σ_y².
pub fn w_conditional(c: &DMatrix<f64>, y: &[f64], sigma_w_sq: f64, sigma_y_sq: f64) -> (DMatrix<f64>, DVector<f64>) {
    let k = c.nrows();
    let precision = DMatrix::<f64>::identity(k, k) / sigma_w_sq + c * c.transpose() / sigma_y_sq;
    let linear = c * DVector::from_column_slice(y) / sigma_y_sq;
    (precision, linear)
}

pub fn sigma_w_conditional(w: &DVector<f64>, hyper: &JointHyper) -> InverseGamma {
    InverseGamma::new(hyper.a_w + 0.5 * w.len() as f64, hyper.b_w + 0.5 * w.norm_squared())
}

pub fn sigma_c_conditional(c: &DMatrix<f64>, hyper: &JointHyper) -> InverseGamma {
    InverseGamma::new(hyper.a_c + 0.5 * c.len() as f64, hyper.b_c + 0.5 * c.norm_squared())
}

pub fn sigma_y_conditional(c: &DMatrix<f64>, w: &DVector<f64>, y: &[f64], hyper: &JointHyper) -> InverseGamma {
    let resid: f64 = y
        .iter()
        .enumerate()
        .map(|(n, yn)| (c.column(n).dot(w) - yn).powi(2))
        .sum();
    InverseGamma::new(hyper.a_y + 0.5 * y.len() as f64, hyper.b_y + 0.5 * resid)
}

/// Precomputed, state-independent pieces of the posterior.
pub struct JointTarget {
    hyper: JointHyper,
    p: usize,
    k: usize,
    gammas: Vec<DMatrix<f64>>,
    gamma_inv: Vec<DMatrix<f64>>,
    trace_gamma_inv: Vec<f64>,
    log_det_gamma: Vec<f64>,
    iw_const: f64,
    y: Vec<f64>,
    y_mean: f64,
    likelihood: bool,
}

/// B-dependent intermediate quantities shared by every subject.
#[derive(Clone)]
struct BasisCache {
    btb: DMatrix<f64>,
    /// quad[n][k] = b_kᵀ Γₙ⁻¹ b_k
    quad: Vec<Vec<f64>>,
    log_prior: f64,
}

impl JointTarget {
    /// `y` is the raw score vector; it is centred here.
    pub fn new(gammas: &[&DMatrix<f64>], ids: &[&str], y: &[f64], k: usize, hyper: JointHyper) -> Result<Self> {
        let n = gammas.len();
        if n == 0 {
            return Err(Error::Config("no subjects".into()));
        }
        let p = gammas[0].nrows();
        if k == 0 || k >= p {
            return Err(Error::Config(format!("need 1 <= k < P, got k = {}, P = {}", k, p)));
        }
        if y.len() != n || ids.len() != n {
            return Err(Error::Shape(format!(
                "{} scores / {} ids for {} subjects",
                y.len(),
                ids.len(),
                n
            )));
        }
        hyper.validate(p)?;
        let mut used = Vec::with_capacity(n);
        let mut inv = Vec::with_capacity(n);
        let mut log_det = Vec::with_capacity(n);
        for (g, id) in gammas.iter().zip(ids) {
            let mut m = (*g).clone();
            let chol = match m.clone().cholesky() {
                Some(c) => c,
                None => {
                    m += DMatrix::<f64>::identity(p, p) * hyper.eps_ridge;
                    m.clone().cholesky().ok_or_else(|| {
                        Error::Numerical(format!("subject {}: matrix is not positive definite after jitter", id))
                    })?
                }
            };
            log_det.push(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>());
            inv.push(chol.inverse());
            used.push(m);
        }
        let trace_gamma_inv = inv.iter().map(|m| m.trace()).collect();
        let pf = p as f64;
        let nu = hyper.nu0;
        let iw_const = 0.5 * nu * pf * hyper.q(p).ln() - 0.5 * nu * pf * LN_2 - ln_multivariate_gamma(p, 0.5 * nu);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        Ok(Self {
            hyper,
            p,
            k,
            gammas: used,
            gamma_inv: inv,
            trace_gamma_inv,
            log_det_gamma: log_det,
            iw_const,
            y: y.iter().map(|v| v - y_mean).collect(),
            y_mean,
            likelihood: true,
        })
    }

    pub fn from_cohort(cohort: &Cohort, score: &str, k: usize, hyper: JointHyper) -> Result<Self> {
        Self::new(&cohort.matrices(), &cohort.ids(), &cohort.scores(score)?, k, hyper)
    }

    /// Drops both likelihood factors, leaving the prior as the target.
    pub fn prior_only(mut self) -> Self {
        self.likelihood = false;
        self
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }

    pub fn centered_scores(&self) -> &[f64] {
        &self.y
    }

    pub fn score_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn hyper(&self) -> &JointHyper {
        &self.hyper
    }

    /// Matrices actually used by the likelihood (jittered where needed).
    pub fn gammas(&self) -> &[DMatrix<f64>] {
        &self.gammas
    }

    fn basis_cache(&self, b: &DMatrix<f64>) -> BasisCache {
        let quad = self
            .gamma_inv
            .iter()
            .map(|gi| {
                let gb = gi * b;
                (0..self.k).map(|kk| b.column(kk).dot(&gb.column(kk))).collect()
            })
            .collect();
        let log_prior = b.iter().map(|v| ln_normal_pdf(*v, 0.0, self.hyper.sigma_b_sq)).sum();
        BasisCache {
            btb: b.transpose() * b,
            quad,
            log_prior,
        }
    }

    /// IW log likelihood of subject n via the matrix determinant lemma:
    /// |B S Bᵀ + εI| = ε^P |I + S^½ BᵀB S^½ / ε| and
    /// tr(Ψ Γ⁻¹) = Q (Σ_k c_k b_kᵀΓ⁻¹b_k + ε tr Γ⁻¹).
    fn subject_iw(&self, cache: &BasisCache, n: usize, c: &[f64]) -> f64 {
        let eps = self.hyper.eps_ridge;
        let q = self.hyper.q(self.p);
        let nu = self.hyper.nu0;
        let sqrt_c: Vec<f64> = c.iter().map(|v| v.sqrt()).collect();
        let inner = DMatrix::from_fn(self.k, self.k, |i, j| {
            let v = sqrt_c[i] * cache.btb[(i, j)] * sqrt_c[j] / eps;
            if i == j {
                1.0 + v
            } else {
                v
            }
        });
        let log_det_mean = match spd_log_det(&inner) {
            Some(ld) => self.p as f64 * eps.ln() + ld,
            None => return f64::NEG_INFINITY,
        };
        let quad: f64 = c.iter().zip(&cache.quad[n]).map(|(ck, qk)| ck * qk).sum();
        let trace = q * (quad + eps * self.trace_gamma_inv[n]);
        self.iw_const + 0.5 * nu * log_det_mean - 0.5 * (nu + self.p as f64 + 1.0) * self.log_det_gamma[n] - 0.5 * trace
    }

    fn subject_y(&self, n: usize, c: &[f64], w: &DVector<f64>, sigma_y_sq: f64) -> f64 {
        let pred: f64 = c.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        ln_normal_pdf(self.y[n], pred, sigma_y_sq)
    }

    fn c_prior(&self, c: &[f64], sigma_c_sq: f64) -> f64 {
        if c.iter().any(|v| *v < 0.0) {
            return f64::NEG_INFINITY;
        }
        c.iter().map(|v| LN_2 + ln_normal_pdf(*v, 0.0, sigma_c_sq)).sum()
    }

    /// Terms of the log posterior that involve cₙ.
    fn subject_terms(&self, cache: &BasisCache, n: usize, c: &[f64], state: &JointState) -> f64 {
        let prior = self.c_prior(c, state.sigma_c_sq);
        if !prior.is_finite() {
            return prior;
        }
        if !self.likelihood {
            return prior;
        }
        prior + self.subject_iw(cache, n, c) + self.subject_y(n, c, &state.w, state.sigma_y_sq)
    }

    fn variance_terms(&self, state: &JointState) -> f64 {
        let h = &self.hyper;
        let w_prior: f64 = state.w.iter().map(|v| ln_normal_pdf(*v, 0.0, state.sigma_w_sq)).sum();
        w_prior
            + InverseGamma::new(h.a_w, h.b_w).ln_pdf(state.sigma_w_sq)
            + InverseGamma::new(h.a_c, h.b_c).ln_pdf(state.sigma_c_sq)
            + InverseGamma::new(h.a_y, h.b_y).ln_pdf(state.sigma_y_sq)
    }

    /// Unnormalised log posterior using the cached per-subject pieces.
    pub fn log_posterior(&self, state: &JointState) -> f64 {
        let cache = self.basis_cache(&state.b);
        self.log_posterior_with(&cache, state)
    }

    fn log_posterior_with(&self, cache: &BasisCache, state: &JointState) -> f64 {
        let mut total = cache.log_prior + self.variance_terms(state);
        for n in 0..self.n() {
            let c: Vec<f64> = state.c.column(n).iter().copied().collect();
            total += self.subject_terms(cache, n, &c, state);
            if total == f64::NEG_INFINITY {
                return total;
            }
        }
        total
    }
}

/// Log posterior recomputed term by term with full P×P inverse-Wishart
/// evaluations and no cached quantities.
pub fn log_posterior_uncached(
    state: &JointState,
    gammas: &[&DMatrix<f64>],
    y_centered: &[f64],
    hyper: &JointHyper,
) -> Result<f64> {
    if state.c.iter().any(|v| *v < 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for (n, g) in gammas.iter().enumerate() {
        let cn: Vec<f64> = state.c.column(n).iter().copied().collect();
        let mean = low_rank_product(&state.b, &cn);
        total += log_iw_density(g, &mean, hyper.nu0, hyper.eps_ridge)?;
        let pred = state.c.column(n).dot(&state.w);
        total += ln_normal_pdf(y_centered[n], pred, state.sigma_y_sq);
    }
    let p = state.b.nrows();
    for kk in 0..state.b.ncols() {
        let bk = state.b.column(kk);
        total += -0.5 * p as f64 * (2.0 * PI * hyper.sigma_b_sq).ln() - 0.5 * bk.norm_squared() / hyper.sigma_b_sq;
    }
    let kdim = state.c.nrows() as f64;
    for n in 0..state.c.ncols() {
        let cn = state.c.column(n);
        total +=
            kdim * LN_2 - 0.5 * kdim * (2.0 * PI * state.sigma_c_sq).ln() - 0.5 * cn.norm_squared() / state.sigma_c_sq;
    }
    let kw = state.w.len() as f64;
    total += -0.5 * kw * (2.0 * PI * state.sigma_w_sq).ln() - 0.5 * state.w.norm_squared() / state.sigma_w_sq;
    let ig = |x: f64, a: f64, b: f64| a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x;
    total += ig(state.sigma_w_sq, hyper.a_w, hyper.b_w);
    total += ig(state.sigma_c_sq, hyper.a_c, hyper.b_c);
    total += ig(state.sigma_y_sq, hyper.a_y, hyper.b_y);
    Ok(total)
}

/// How the sampler is started.
#[derive(Debug, Clone)]
pub enum JointInit {
    /// Run the CPC dictionary fit with default settings and start from it.
    Dictionary,
    /// Start from a given dictionary and loadings.
    Given(Dictionary, LoadingMatrix),
    /// Random B and C drawn from the priors.
    Cold,
}

#[derive(Debug, Clone)]
pub struct JointConfig {
    pub k: usize,
    pub hyper: JointHyper,
    pub n_burn: usize,
    pub n_keep: usize,
    pub seed: u64,
    /// Adapt τ_b, τ_c during burn-in.
    pub adapt: bool,
    /// Propose all of C at once instead of one subject at a time.
    pub block_c: bool,
    /// Skip the σ_w², σ_c², σ_y² draws (they stay at their initial values).
    pub freeze_variances: bool,
    pub init: JointInit,
}

impl JointConfig {
    pub fn new(k: usize, hyper: JointHyper) -> Self {
        Self {
            k,
            hyper,
            n_burn: DEFAULT_BURN_IN,
            n_keep: DEFAULT_KEEP,
            seed: 0,
            adapt: true,
            block_c: false,
            freeze_variances: false,
            init: JointInit::Dictionary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub accept_rate_b: f64,
    pub accept_rate_c: f64,
    pub tau_b_initial: f64,
    pub tau_c_initial: f64,
    pub tau_b: f64,
    pub tau_c: f64,
    pub seed: u64,
    pub k: usize,
    pub n_burn: usize,
    pub n_keep: usize,
    pub score_mean: f64,
    pub hyper: JointHyper,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct JointChain {
    pub states: Vec<JointState>,
    /// Post-burn-in acceptance rates.
    pub accept_rate_b: f64,
    pub accept_rate_c: f64,
    pub n_burn: usize,
    pub seed: u64,
    /// Mean of the raw scores, added back to predictions.
    pub score_mean: f64,
    pub report: JointReport,
}

/// Runs the sampler on a cohort's matrices and the named score.
pub fn fit_joint(cohort: &Cohort, score: &str, config: &JointConfig) -> Result<JointChain> {
    let target = JointTarget::from_cohort(cohort, score, config.k, config.hyper)?;
    run_sampler(&target, config)
}

fn initial_state(target: &JointTarget, config: &JointConfig, rng: &mut ChaCha8Rng) -> Result<JointState> {
    let (p, k, n) = (target.p, target.k, target.n());
    let (b, c) = match &config.init {
        JointInit::Given(d, l) => {
            if d.p() != p || d.k() != k || l.k() != k || l.n() != n {
                return Err(Error::Shape(
                    "initial dictionary / loadings do not match the cohort".into(),
                ));
            }
            (d.matrix().clone(), l.matrix().clone())
        }
        JointInit::Dictionary => {
            let refs: Vec<&DMatrix<f64>> = target.gammas.iter().collect();
            let fit = cpc::fit_matrices(
                &refs,
                &CpcConfig {
                    seed: config.seed,
                    ..CpcConfig::new(k)
                },
            )?;
            (fit.dictionary.matrix().clone(), fit.loadings.matrix().clone())
        }
        JointInit::Cold => {
            let sb = target.hyper.sigma_b_sq.sqrt();
            let b = DMatrix::from_fn(p, k, |_, _| sb * standard_normal(rng));
            let c = DMatrix::from_fn(k, n, |_, _| standard_normal(rng).abs());
            (b, c)
        }
    };
    Ok(JointState {
        b,
        c,
        w: DVector::zeros(k),
        sigma_w_sq: 1.0,
        sigma_c_sq: 1.0,
        sigma_y_sq: 1.0,
    })
}

fn accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn adapt(tau: &mut f64, accepted: usize, proposed: usize) {
    if proposed == 0 {
        return;
    }
    let rate = accepted as f64 / proposed as f64;
    if rate < TARGET_ACCEPT.0 {
        *tau /= ADAPT_FACTOR;
    } else if rate > TARGET_ACCEPT.1 {
        *tau *= ADAPT_FACTOR;
    }
}

/// Metropolis-within-Gibbs over an already prepared target.
pub fn run_sampler(target: &JointTarget, config: &JointConfig) -> Result<JointChain> {
    if config.k != target.k {
        return Err(Error::Config("config k does not match target".into()));
    }
    if config.n_keep == 0 {
        return Err(Error::Config("n_keep must be >= 1".into()));
    }
    let started = Instant::now();
    let hyper = target.hyper;
    let (k, n) = (target.k, target.n());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initial_state(target, config, &mut rng)?;
    let mut cache = target.basis_cache(&state.b);
    let mut subject: Vec<f64> = (0..n)
        .map(|i| {
            let c: Vec<f64> = state.c.column(i).iter().copied().collect();
            target.subject_terms(&cache, i, &c, &state)
        })
        .collect();

    let mut tau_b = hyper.tau_b;
    let mut tau_c = hyper.tau_c;
    let (mut win_b, mut win_c, mut win_cn) = (0usize, 0usize, 0usize);
    let (mut acc_b, mut acc_c, mut prop_c) = (0usize, 0usize, 0usize);
    let total = config.n_burn + config.n_keep;
    let mut states = Vec::with_capacity(config.n_keep);

    for it in 0..total {
        let burning = it < config.n_burn;

        // Step 1: B block random walk.
        let proposal = &state.b + DMatrix::from_fn(state.b.nrows(), k, |_, _| tau_b * standard_normal(&mut rng));
        let new_cache = target.basis_cache(&proposal);
        let new_subject: Vec<f64> = if target.likelihood {
            (0..n)
                .map(|i| {
                    let c: Vec<f64> = state.c.column(i).iter().copied().collect();
                    target.subject_terms(&new_cache, i, &c, &state)
                })
                .collect()
        } else {
            subject.clone()
        };
        let delta =
            new_cache.log_prior - cache.log_prior + new_subject.iter().sum::<f64>() - subject.iter().sum::<f64>();
        if accept(&mut rng, delta) {
            state.b = proposal;
            cache = new_cache;
            subject = new_subject;
            if burning {
                win_b += 1;
            } else {
                acc_b += 1;
            }
        }

        // Step 2: folded random walk on C.
        if config.block_c {
            let proposal = state.c.map(|v| folded_proposal(&mut rng, v, tau_c));
            let new_subject: Vec<f64> = (0..n)
                .map(|i| {
                    let c: Vec<f64> = proposal.column(i).iter().copied().collect();
                    target.subject_terms(&cache, i, &c, &state)
                })
                .collect();
            let delta = new_subject.iter().sum::<f64>() - subject.iter().sum::<f64>();
            let ok = accept(&mut rng, delta);
            if ok {
                state.c = proposal;
                subject = new_subject;
            }
            if burning {
                win_c += ok as usize;
                win_cn += 1;
            } else {
                acc_c += ok as usize;
                prop_c += 1;
            }
        } else {
            for i in 0..n {
                let proposal: Vec<f64> = state
                    .c
                    .column(i)
                    .iter()
                    .map(|&v| folded_proposal(&mut rng, v, tau_c))
                    .collect();
                let value = target.subject_terms(&cache, i, &proposal, &state);
                let ok = accept(&mut rng, value - subject[i]);
                if ok {
                    state.c.set_column(i, &DVector::from_vec(proposal));
                    subject[i] = value;
                }
                if burning {
                    win_c += ok as usize;
                    win_cn += 1;
                } else {
                    acc_c += ok as usize;
                    prop_c += 1;
                }
            }
        }

        // Step 3: w.
        state.w = if target.likelihood {
            let (precision, linear) = w_conditional(&state.c, &target.y, state.sigma_w_sq, state.sigma_y_sq);
            sample_gaussian_canonical(&mut rng, &precision, &linear, 1.0)?
        } else {
            DVector::from_fn(k, |_, _| state.sigma_w_sq.sqrt() * standard_normal(&mut rng))
        };

        // Steps 4-6: variances.
        if !config.freeze_variances {
            state.sigma_w_sq = sigma_w_conditional(&state.w, &hyper).sample(&mut rng);
            state.sigma_c_sq = sigma_c_conditional(&state.c, &hyper).sample(&mut rng);
            state.sigma_y_sq = if target.likelihood {
                sigma_y_conditional(&state.c, &state.w, &target.y, &hyper).sample(&mut rng)
            } else {
                InverseGamma::new(hyper.a_y, hyper.b_y).sample(&mut rng)
            };
        }
        // The per-subject terms depend on w, σ_c², σ_y²; refresh them.
        for (i, s) in subject.iter_mut().enumerate() {
            let c: Vec<f64> = state.c.column(i).iter().copied().collect();
            *s = target.subject_terms(&cache, i, &c, &state);
        }

        if burning {
            if config.adapt && (it + 1) % ADAPT_WINDOW == 0 {
                adapt(&mut tau_b, win_b, ADAPT_WINDOW);
                adapt(&mut tau_c, win_c, win_cn);
            }
            if (it + 1) % ADAPT_WINDOW == 0 {
                win_b = 0;
                win_c = 0;
                win_cn = 0;
            }
        } else {
            states.push(state.clone());
        }
    }

    let accept_rate_b = acc_b as f64 / config.n_keep as f64;
    let accept_rate_c = if prop_c == 0 { 0.0 } else { acc_c as f64 / prop_c as f64 };
    let report = JointReport {
        accept_rate_b,
        accept_rate_c,
        tau_b_initial: hyper.tau_b,
        tau_c_initial: hyper.tau_c,
        tau_b,
        tau_c,
        seed: config.seed,
        k,
        n_burn: config.n_burn,
        n_keep: config.n_keep,
        score_mean: target.y_mean,
        hyper,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(JointChain {
        states,
        accept_rate_b,
        accept_rate_c,
        n_burn: config.n_burn,
        seed: config.seed,
        score_mean: target.y_mean,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveScores {
    /// ŷₙ = cₙᵀw + ȳ for each retained state.
    pub draws: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Posterior predictive scores per subject, uncentred.
pub fn posterior_predictive_scores(chain: &JointChain) -> Vec<PredictiveScores> {
    let n = chain.states.first().map_or(0, |s| s.c.ncols());
    (0..n)
        .map(|i| {
            let draws: Vec<f64> = chain
                .states
                .iter()
                .map(|s| s.c.column(i).dot(&s.w) + chain.score_mean)
                .collect();
            let m = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / m;
            let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / m).sqrt();
            PredictiveScores { draws, mean, sd }
        })
        .collect()
}

/// BᵀB for one state.
pub fn basis_gramian(state: &JointState) -> DMatrix<f64> {
    state.b.transpose() * &state.b
}

/// Per-subject elementwise mean over states of |Γₙ − B diag(cₙ) Bᵀ|.
pub fn reconstruction_error_map(chain: &JointChain, cohort: &Cohort) -> Vec<DMatrix<f64>> {
    let gammas = cohort.matrices();
    let count = chain.states.len() as f64;
    gammas
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut acc = DMatrix::zeros(g.nrows(), g.ncols());
            for s in &chain.states {
                let c: Vec<f64> = s.c.column(i).iter().copied().collect();
                acc += (*g - low_rank_product(&s.b, &c)).abs();
            }
            acc / count
        })
        .collect()
}

impl JointChain {
    pub fn series(&self, f: impl Fn(&JointState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    fn mean_matrix(&self, f: impl Fn(&JointState) -> DMatrix<f64>) -> DMatrix<f64> {
        let mut it = self.states.iter().map(f);
        let first = it.next().expect("non-empty chain");
        let sum = it.fold(first, |acc, m| acc + m);
        sum / self.states.len() as f64
    }

    /// Writes the chain output directory: `states/w.csv`,
    /// `states/variances.csv` (every `thin`-th state), `B_mean.csv`,
    /// `C_mean.csv`, `gramian_mean.csv` and `report.json`.
    pub fn save(&self, dir: &Path, thin: usize) -> Result<()> {
        let thin = thin.max(1);
        let k = self.report.k;
        let mut w = String::from("iter");
        for j in 1..=k {
            w.push_str(&format!(",w_{}", j));
        }
        w.push('\n');
        let mut v = String::from("iter,sigma_w_sq,sigma_c_sq,sigma_y_sq\n");
        for (i, s) in self.states.iter().enumerate().step_by(thin) {
            w.push_str(&i.to_string());
            for x in s.w.iter() {
                w.push_str(&format!(",{}", x));
            }
            w.push('\n');
            v.push_str(&format!("{},{},{},{}\n", i, s.sigma_w_sq, s.sigma_c_sq, s.sigma_y_sq));
        }
        write_text(&dir.join("states/w.csv"), &w)?;
        write_text(&dir.join("states/variances.csv"), &v)?;
        write_matrix_csv(&dir.join("B_mean.csv"), &self.mean_matrix(|s| s.b.clone()))?;
        write_matrix_csv(&dir.join("C_mean.csv"), &self.mean_matrix(|s| s.c.clone()))?;
        write_matrix_csv(&dir.join("gramian_mean.csv"), &self.mean_matrix(basis_gramian))?;
        write_json(&dir.join("report.json"), &self.report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_reduction_matches_inverse_gamma() {
        // IW(ν = 3, Ψ = 2) at x = 1 is IG(1.5, 1) at 1.
        let x = DMatrix::from_element(1, 1, 1.0);
        let mean = DMatrix::from_element(1, 1, 2.0 - 1e-3);
        let v = log_iw_density(&x, &mean, 3.0, 1e-3).unwrap();
        assert!((v - 0.415_107_497_420_594_7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn iw_rejects_bad_inputs() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(log_iw_density(&x, &x, 4.0, 1e-3), Err(Error::Config(_))));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let m = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(log_iw_density(&bad, &m, 6.0, 1e-3), Err(Error::Numerical(_))));
    }

    #[test]
    fn gibbs_shapes_at_full_atlas_scale() {
        let h = JointHyper::for_regions(116);
        let c = DMatrix::from_element(15, 52, 0.5);
        let w = DVector::from_element(15, 0.1);
        let y = vec![0.0; 52];
        assert_eq!(sigma_y_conditional(&c, &w, &y, &h).shape, 29.0);
        assert_eq!(sigma_c_conditional(&c, &h).shape, 393.0);
        assert_eq!(sigma_w_conditional(&w, &h).shape, 3.0 + 7.5);
    }

    #[test]
    fn zero_residual_keeps_prior_rate() {
        let h = JointHyper::for_regions(4);
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 2.0, 1.0, 3.0]);
        let w = DVector::from_vec(vec![0.3, -0.2]);
        let y: Vec<f64> = (0..3).map(|n| c.column(n).dot(&w)).collect();
        assert!((sigma_y_conditional(&c, &w, &y, &h).rate - h.b_y).abs() < 1e-15);
    }

    #[test]
    fn negative_loading_has_zero_posterior() {
        let g = DMatrix::<f64>::identity(3, 3);
        let target = JointTarget::new(&[&g, &g], &["a", "b"], &[1.0, 2.0], 1, JointHyper::for_regions(3)).unwrap();
        let state = JointState {
            b: DMatrix::from_element(3, 1, 0.5),
            c: DMatrix::from_row_slice(1, 2, &[0.5, -0.1]),
            w: DVector::zeros(1),
            sigma_w_sq: 1.0,
            sigma_c_sq: 1.0,
            sigma_y_sq: 1.0,
        };
        assert_eq!(target.log_posterior(&state), f64::NEG_INFINITY);
    }

    #[test]
    fn gramian_examples() {
        let mut s = JointState {
            b: DMatrix::identity(4, 2),
            c: DMatrix::zeros(2, 1),
            w: DVector::zeros(2),
            sigma_w_sq: 1.0,
            sigma_c_sq: 1.0,
            sigma_y_sq: 1.0,
        };
        assert_eq!(basis_gramian(&s), DMatrix::<f64>::identity(2, 2));
        s.b = DMatrix::zeros(4, 2);
        assert_eq!(basis_gramian(&s), DMatrix::<f64>::zeros(2, 2));
    }
}
