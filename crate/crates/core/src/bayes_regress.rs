//! Gibbs samplers mapping subject loadings to a scalar score.
//!
//! Both models regress y on the design X̂ = [1 | Cᵀ] (intercept first) with
//! prior mean zero. Plain BLR uses the normal-inverse-gamma prior
//! (β₀, β) | σ² ~ N(0, σ² σ_β² I), σ² ~ IG(a, b). SSVS replaces the
//! coefficient prior with a two-component spike/slab mixture selected by
//! binary indicators γ_k, k = 0..K.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpc::LoadingMatrix;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, write_text};
use crate::stats::{ln_normal_pdf, sample_gaussian_canonical, standard_normal, InverseGamma};

pub const DEFAULT_BURN_IN: usize = 5000;
pub const DEFAULT_KEEP: usize = 10000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrHyper {
    /// Prior covariance scale: V = σ_β² I_{K+1}.
    pub sigma_beta_sq: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for BlrHyper {
    fn default() -> Self {
        Self {
            sigma_beta_sq: 1.0,
            a: 3.0,
            b: 1.0,
        }
    }
}

impl BlrHyper {
    pub fn with_variance(sigma_beta_sq: f64) -> Self {
        Self {
            sigma_beta_sq,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_beta_sq", self.sigma_beta_sq), ("a", self.a), ("b", self.b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{} must be a positive finite number, got {}",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// Spike/slab hyperparameters. `v1` (slab) and `v2` (spike) hold either one
/// shared value or one value per coefficient index 0..=K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsHyper {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub g: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for SsvsHyper {
    fn default() -> Self {
        Self::homogeneous(1.0, 0.01)
    }
}

impl SsvsHyper {
    pub fn homogeneous(v1: f64, v2: f64) -> Self {
        Self {
            v1: vec![v1],
            v2: vec![v2],
            g: 0.5,
            a: 3.0,
            b: 1.0,
        }
    }

    /// Per-index (slab, spike) variances for a model with `k` loadings.
    pub fn variances(&self, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let expand = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; k + 1]),
                len if len == k + 1 => Ok(v.to_vec()),
                len => Err(Error::Config(format!(
                    "{} has {} entries, expected 1 or {}",
                    name,
                    len,
                    k + 1
                ))),
            }
        };
        let v1 = expand(&self.v1, "v1")?;
        let v2 = expand(&self.v2, "v2")?;
        for (s, t) in v1.iter().zip(&v2) {
            if !(*t > 0.0) || !s.is_finite() {
                return Err(Error::Config("slab and spike variances must be positive".into()));
            }
            if t >= s {
                return Err(Error::Config(format!(
                    "spike variance {} must be below slab variance {}",
                    t, s
                )));
            }
        }
        Ok((v1, v2))
    }

    fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g < 1.0) {
            return Err(Error::Config(format!("g must lie in (0, 1), got {}", self.g)));
        }
        BlrHyper {
            sigma_beta_sq: 1.0,
            a: self.a,
            b: self.b,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrSample {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsSample {
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Inclusion indicators; index 0 is the intercept.
    pub gamma: Vec<bool>,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainSamples {
    Blr(Vec<BlrSample>),
    Ssvs(Vec<SsvsSample>),
}

impl ChainSamples {
    fn kind(&self) -> &'static str {
        match self {
            ChainSamples::Blr(_) => "blr",
            ChainSamples::Ssvs(_) => "ssvs",
        }
    }
}

/// Retained post-burn-in draws.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcChain {
    pub samples: ChainSamples,
    pub n_burn: usize,
    pub seed: u64,
}

impl McmcChain {
    pub fn len(&self) -> usize {
        match &self.samples {
            ChainSamples::Blr(s) => s.len(),
            ChainSamples::Ssvs(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of loadings K.
    pub fn k(&self) -> usize {
        self.coefficient_draws().next().map_or(0, |(_, b, _)| b.len())
    }

    /// (β₀, β, σ²) per retained sample, regardless of model.
    pub fn coefficient_draws(&self) -> Box<dyn Iterator<Item = (f64, &[f64], f64)> + '_> {
        match &self.samples {
            ChainSamples::Blr(s) => Box::new(s.iter().map(|x| (x.beta0, x.beta.as_slice(), x.sigma_sq))),
            ChainSamples::Ssvs(s) => Box::new(s.iter().map(|x| (x.beta0, x.beta.as_slice(), x.sigma_sq))),
        }
    }

    /// Posterior mean of (β₀, β₁, …, β_K).
    pub fn coefficient_mean(&self) -> Vec<f64> {
        let k = self.k();
        let mut acc = vec![0.0; k + 1];
        for (b0, b, _) in self.coefficient_draws() {
            acc[0] += b0;
            for (a, v) in acc[1..].iter_mut().zip(b) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        acc.iter().map(|v| v / n).collect()
    }
}

/// Precomputed design X̂ = [1 | Cᵀ] for a regression problem.
struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

impl Design {
    fn new(c: &LoadingMatrix, y: &[f64]) -> Result<Self> {
        let n = c.n();
        if y.len() != n {
            return Err(Error::Shape(format!("{} scores for {} subjects", y.len(), n)));
        }
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 subjects, got {}", n)));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation("scores", format!("non-finite score {}", v)));
        }
        let k = c.k();
        let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { c.matrix()[(j - 1, i)] });
        let y = DVector::from_column_slice(y);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        Ok(Self { x, y, xtx, xty })
    }

    fn n(&self) -> usize {
        self.x.nrows()
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn rss(&self, coef: &DVector<f64>) -> f64 {
        (&self.y - &self.x * coef).norm_squared()
    }
}

fn check_counts(n_keep: usize) -> Result<()> {
    if n_keep == 0 {
        return Err(Error::Config("n_keep must be >= 1".into()));
    }
    Ok(())
}

/// Full conditional of σ² given the coefficients under a Gaussian prior with
/// per-coefficient variances σ²·`prior_var`.
fn sigma_conditional(design: &Design, coef: &DVector<f64>, prior_var: &[f64], a: f64, b: f64) -> InverseGamma {
    let penalty: f64 = coef.iter().zip(prior_var).map(|(c, v)| c * c / v).sum();
    InverseGamma::new(
        a + 0.5 * (design.n() + design.p()) as f64,
        b + 0.5 * design.rss(coef) + 0.5 * penalty,
    )
}

fn draw_coefficients<R: Rng>(rng: &mut R, design: &Design, prior_var: &[f64], sigma_sq: f64) -> Result<DVector<f64>> {
    let mut precision = design.xtx.clone();
    for (j, v) in prior_var.iter().enumerate() {
        precision[(j, j)] += 1.0 / v;
    }
    sample_gaussian_canonical(rng, &precision, &design.xty, sigma_sq)
}

fn split(coef: &DVector<f64>) -> (f64, Vec<f64>) {
    (coef[0], coef.iter().skip(1).copied().collect())
}

/// Conjugate Gibbs sampler for Bayesian linear regression.
pub fn fit_blr(
    c: &LoadingMatrix,
    y: &[f64],
    hyper: &BlrHyper,
    n_burn: usize,
    n_keep: usize,
    seed: u64,
) -> Result<McmcChain> {
    hyper.validate()?;
    check_counts(n_keep)?;
    let design = Design::new(c, y)?;
    let prior_var = vec![hyper.sigma_beta_sq; design.p()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sigma_sq = 1.0;
    let mut samples = Vec::with_capacity(n_keep);
    for it in 0..(n_burn + n_keep) {
        let coef = draw_coefficients(&mut rng, &design, &prior_var, sigma_sq)?;
        sigma_sq = sigma_conditional(&design, &coef, &prior_var, hyper.a, hyper.b).sample(&mut rng);
        if it >= n_burn {
            let (beta0, beta) = split(&coef);
            samples.push(BlrSample { beta0, beta, sigma_sq });
        }
    }
    Ok(McmcChain {
        samples: ChainSamples::Blr(samples),
        n_burn,
        seed,
    })
}

/// P(γ_k = 1 | β_k, σ²) = g𝒩(β_k; 0, σ²v1) / [g𝒩(β_k; 0, σ²v1) + (1−g)𝒩(β_k; 0, σ²v2)].
pub fn inclusion_probability(beta_k: f64, sigma_sq: f64, v1: f64, v2: f64, g: f64) -> f64 {
    let slab = g.ln() + ln_normal_pdf(beta_k, 0.0, sigma_sq * v1);
    let spike = (1.0 - g).ln() + ln_normal_pdf(beta_k, 0.0, sigma_sq * v2);
    1.0 / (1.0 + (spike - slab).exp())
}

/// One Bernoulli draw of γ_k from its full conditional.
pub fn draw_inclusion<R: Rng + ?Sized>(rng: &mut R, beta_k: f64, sigma_sq: f64, v1: f64, v2: f64, g: f64) -> bool {
    rng.random::<f64>() < inclusion_probability(beta_k, sigma_sq, v1, v2, g)
}

/// Stochastic search variable selection by Gibbs sampling over (γ, β, σ²).
pub fn fit_ssvs(
    c: &LoadingMatrix,
    y: &[f64],
    hyper: &SsvsHyper,
    n_burn: usize,
    n_keep: usize,
    seed: u64,
) -> Result<McmcChain> {
    hyper.validate()?;
    check_counts(n_keep)?;
    let design = Design::new(c, y)?;
    let (v1, v2) = hyper.variances(c.k())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dim = design.p();
    let mut coef = DVector::zeros(dim);
    let mut sigma_sq = 1.0;
    let mut gamma = vec![true; dim];
    let mut prior_var = v1.clone();
    let mut samples = Vec::with_capacity(n_keep);
    for it in 0..(n_burn + n_keep) {
        for j in 0..dim {
            gamma[j] = draw_inclusion(&mut rng, coef[j], sigma_sq, v1[j], v2[j], hyper.g);
            prior_var[j] = if gamma[j] { v1[j] } else { v2[j] };
        }
        coef = draw_coefficients(&mut rng, &design, &prior_var, sigma_sq)?;
        sigma_sq = sigma_conditional(&design, &coef, &prior_var, hyper.a, hyper.b).sample(&mut rng);
        if it >= n_burn {
            let (beta0, beta) = split(&coef);
            samples.push(SsvsSample {
                beta0,
                beta,
                gamma: gamma.clone(),
                sigma_sq,
            });
        }
    }
    Ok(McmcChain {
        samples: ChainSamples::Ssvs(samples),
        n_burn,
        seed,
    })
}

/// Posterior inclusion frequency of each index 0..=K.
pub fn inclusion_probabilities(chain: &McmcChain) -> Result<Vec<f64>> {
    let samples = match &chain.samples {
        ChainSamples::Ssvs(s) => s,
        other => {
            return Err(Error::SampleKind {
                expected: "ssvs",
                found: other.kind(),
            })
        }
    };
    let first = samples.first().ok_or_else(|| Error::Config("empty chain".into()))?;
    let mut acc = vec![0.0; first.gamma.len()];
    for s in samples {
        for (a, &g) in acc.iter_mut().zip(&s.gamma) {
            if g {
                *a += 1.0;
            }
        }
    }
    Ok(acc.iter().map(|v| v / samples.len() as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One predictive draw per retained sample.
    pub draws: Vec<f64>,
    pub mean: f64,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        let n = self.draws.len() as f64;
        let var = self.draws.iter().map(|d| (d - self.mean).powi(2)).sum::<f64>() / n;
        var.sqrt()
    }
}

/// ŷ_s = β₀ + βᵀc_new per retained sample, optionally with N(0, σ²_s) noise
/// drawn from a generator seeded by `seed`.
pub fn predict(chain: &McmcChain, c_new: &[f64], predictive_noise: bool, seed: u64) -> Result<Prediction> {
    if chain.is_empty() {
        return Err(Error::Config("empty chain".into()));
    }
    if c_new.len() != chain.k() {
        return Err(Error::Shape(format!(
            "{} loadings for a chain with K = {}",
            c_new.len(),
            chain.k()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = chain
        .coefficient_draws()
        .map(|(b0, b, s2)| {
            let mean = b0 + b.iter().zip(c_new).map(|(x, y)| x * y).sum::<f64>();
            if predictive_noise {
                mean + s2.sqrt() * standard_normal(&mut rng)
            } else {
                mean
            }
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    Ok(Prediction { draws, mean })
}

/// Posterior-mean point predictions for every column of `c`.
pub fn predict_mean(chain: &McmcChain, c: &LoadingMatrix) -> Result<Vec<f64>> {
    (0..c.n())
        .map(|i| predict(chain, &c.subject(i), false, 0).map(|p| p.mean))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ChainHyper {
    Blr(BlrHyper),
    Ssvs(SsvsHyper),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub hyper: ChainHyper,
    pub seed: u64,
    pub n_burn: usize,
    pub n_keep: usize,
    pub k: usize,
}

impl McmcChain {
    /// CSV with columns `beta0,beta_1..beta_K,sigma_sq[,gamma_0..gamma_K]`.
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut out = String::from("beta0");
        for j in 1..=k {
            out.push_str(&format!(",beta_{}", j));
        }
        out.push_str(",sigma_sq");
        if let ChainSamples::Ssvs(_) = self.samples {
            for j in 0..=k {
                out.push_str(&format!(",gamma_{}", j));
            }
        }
        out.push('\n');
        let mut push_row = |b0: f64, b: &[f64], s2: f64, g: Option<&[bool]>| {
            out.push_str(&format!("{}", b0));
            for v in b {
                out.push_str(&format!(",{}", v));
            }
            out.push_str(&format!(",{}", s2));
            if let Some(g) = g {
                for &x in g {
                    out.push_str(if x { ",1" } else { ",0" });
                }
            }
            out.push('\n');
        };
        match &self.samples {
            ChainSamples::Blr(s) => s.iter().for_each(|x| push_row(x.beta0, &x.beta, x.sigma_sq, None)),
            ChainSamples::Ssvs(s) => s
                .iter()
                .for_each(|x| push_row(x.beta0, &x.beta, x.sigma_sq, Some(&x.gamma))),
        }
        out
    }

    /// Writes `chain.csv` and the `chain.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path, hyper: ChainHyper) -> Result<()> {
        write_text(&dir.join("chain.csv"), &self.to_csv())?;
        write_json(
            &dir.join("chain.json"),
            &ChainSidecar {
                hyper,
                seed: self.seed,
                n_burn: self.n_burn,
                n_keep: self.len(),
                k: self.k(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<(Self, ChainSidecar)> {
        let side: ChainSidecar = read_json(&dir.join("chain.json"))?;
        let path = dir.join("chain.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let k = side.k;
        let ssvs = matches!(side.hyper, ChainHyper::Ssvs(_));
        let width = k + 2 + if ssvs { k + 1 } else { 0 };
        let parse_err = |m: String| Error::Parse {
            path: path.clone(),
            message: m,
        };
        let mut blr = Vec::new();
        let mut sv = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| parse_err(format!("line {}: {}", i + 1, e)))?;
            if vals.len() != width {
                return Err(parse_err(format!(
                    "line {} has {} fields, expected {}",
                    i + 1,
                    vals.len(),
                    width
                )));
            }
            let beta0 = vals[0];
            let beta = vals[1..=k].to_vec();
            let sigma_sq = vals[k + 1];
            if ssvs {
                let gamma = vals[k + 2..].iter().map(|&g| g != 0.0).collect();
                sv.push(SsvsSample {
                    beta0,
                    beta,
                    gamma,
                    sigma_sq,
                });
            } else {
                blr.push(BlrSample { beta0, beta, sigma_sq });
            }
        }
        let samples = if ssvs {
            ChainSamples::Ssvs(sv)
        } else {
            ChainSamples::Blr(blr)
        };
        Ok((
            McmcChain {
                samples,
                n_burn: side.n_burn,
                seed: side.seed,
            },
            side,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loadings(k: usize, n: usize, seed: u64) -> LoadingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LoadingMatrix::new(DMatrix::from_fn(k, n, |_, _| standard_normal(&mut rng).abs())).unwrap()
    }

    #[test]
    fn inclusion_at_zero_has_closed_form() {
        let p = inclusion_probability(0.0, 0.7, 1.0, 0.01, 0.5);
        assert!((p - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn equal_variances_give_prior_inclusion() {
        for beta in [-3.0, 0.0, 0.2, 10.0] {
            assert!((inclusion_probability(beta, 2.0, 0.5, 0.5, 0.3) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn config_errors() {
        let c = loadings(2, 1, 0);
        assert!(matches!(
            fit_blr(&c, &[1.0], &BlrHyper::default(), 0, 10, 0),
            Err(Error::Config(_))
        ));
        let c = loadings(2, 5, 0);
        let y = [1.0, 2.0, f64::NAN, 0.0, 1.0];
        assert!(matches!(
            fit_blr(&c, &y, &BlrHyper::default(), 0, 10, 0),
            Err(Error::Validation { .. })
        ));
        let y = [1.0; 5];
        let bad = SsvsHyper::homogeneous(0.01, 1.0);
        assert!(matches!(fit_ssvs(&c, &y, &bad, 0, 10, 0), Err(Error::Config(_))));
        let same = SsvsHyper::homogeneous(1.0, 1.0);
        assert!(matches!(fit_ssvs(&c, &y, &same, 0, 10, 0), Err(Error::Config(_))));
    }

    #[test]
    fn chains_retain_requested_count_and_stay_positive() {
        let c = loadings(3, 20, 1);
        let y: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let chain = fit_ssvs(&c, &y, &SsvsHyper::default(), 50, 200, 4).unwrap();
        assert_eq!(chain.len(), 200);
        match &chain.samples {
            ChainSamples::Ssvs(s) => {
                assert!(s.iter().all(|x| x.sigma_sq > 0.0 && x.gamma.len() == 4));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn inclusion_frequencies_require_ssvs_chain() {
        let chain = McmcChain {
            samples: ChainSamples::Blr(vec![BlrSample {
                beta0: 0.0,
                beta: vec![0.0],
                sigma_sq: 1.0,
            }]),
            n_burn: 0,
            seed: 0,
        };
        assert!(matches!(inclusion_probabilities(&chain), Err(Error::SampleKind { .. })));
    }

    #[test]
    fn inclusion_frequency_of_constant_and_alternating_chains() {
        let mk = |gs: Vec<Vec<bool>>| McmcChain {
            samples: ChainSamples::Ssvs(
                gs.into_iter()
                    .map(|gamma| SsvsSample {
                        beta0: 0.0,
                        beta: vec![0.0],
                        gamma,
                        sigma_sq: 1.0,
                    })
                    .collect(),
            ),
            n_burn: 0,
            seed: 0,
        };
        let all = mk(vec![vec![true, true]; 5]);
        assert_eq!(inclusion_probabilities(&all).unwrap(), vec![1.0, 1.0]);
        let alt = mk((0..10).map(|i| vec![i % 2 == 0, i % 2 == 1]).collect());
        assert_eq!(inclusion_probabilities(&alt).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn predict_examples() {
        let chain = |b0s: &[f64]| McmcChain {
            samples: ChainSamples::Blr(
                b0s.iter()
                    .map(|&beta0| BlrSample {
                        beta0,
                        beta: vec![0.0, 0.0],
                        sigma_sq: 1.0,
                    })
                    .collect(),
            ),
            n_burn: 0,
            seed: 0,
        };
        assert_eq!(predict(&chain(&[1.0]), &[5.0, -2.0], false, 0).unwrap().mean, 1.0);
        assert_eq!(predict(&chain(&[1.0, 3.0]), &[0.0, 0.0], false, 0).unwrap().mean, 2.0);
        assert!(matches!(
            predict(&chain(&[1.0]), &[1.0], false, 0),
            Err(Error::Shape(_))
        ));
        let noisy = predict(&chain(&[1.0, 3.0]), &[0.0, 0.0], true, 9).unwrap();
        assert_eq!(noisy.draws.len(), 2);
    }

    #[test]
    fn chain_csv_round_trip() {
        let c = loadings(2, 10, 3);
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let chain = fit_ssvs(&c, &y, &SsvsHyper::default(), 10, 30, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        chain.save(dir.path(), ChainHyper::Ssvs(SsvsHyper::default())).unwrap();
        let (back, side) = McmcChain::load(dir.path()).unwrap();
        assert_eq!(back, chain);
        assert_eq!(side.n_keep, 30);
    }
}
