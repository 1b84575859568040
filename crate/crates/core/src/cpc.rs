//! Common-principal-components dictionary learning.
//!
//! Each subject matrix is modelled as Γₙ ≈ B diag(cₙ) Bᵀ with BᵀB = I and
//! cₙ ≥ 0. The bi-quadratic dependence on B is split with auxiliary
//! variables Dₙ = B diag(cₙ) and multipliers Λₙ, giving the objective
//!
//! ```text
//! J = Σₙ ‖Γₙ − Dₙ Bᵀ‖²_F + Σₙ [ Tr(Λₙᵀ (Dₙ − B diag(cₙ))) + ½ ‖Dₙ − B diag(cₙ)‖²_F ]
//! ```
//!
//! which is minimised by cycling three exact block updates:
//!
//! 1. loadings: with BᵀB = I the cₙ terms separate into ½c² − c·b_kᵀ(d_k + λ_k),
//!    so c_{nk} = max(0, b_kᵀ(d_{n,k} + λ_{n,k}));
//! 2. dictionary: under BᵀB = I, ‖Dₙ Bᵀ‖² and ‖B diag(cₙ)‖² are constant, and the
//!    remaining B-linear terms collect into −Tr(BᵀM) with
//!    M = Σₙ [2 Γₙ Dₙ + (Dₙ + Λₙ) diag(cₙ)], so B = U Vᵀ from the thin SVD of M;
//! 3. auxiliaries: setting ∂J/∂Dₙ = 0 gives Dₙ (2BᵀB + I) = 2ΓₙB − Λₙ + B diag(cₙ),
//!    followed by the dual step Λₙ ← Λₙ + ρ (Dₙ − B diag(cₙ)).
//!
//! Steps 1–3 never increase J while Λ is held fixed; the dual step can.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::io::{read_json, read_matrix_csv, write_json, write_matrix_csv};
use crate::linalg::{procrustes, scale_columns, sym_eigen_desc};

/// P×K basis of subnetworks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    b: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.ncols() == 0 || b.ncols() > b.nrows() {
            return Err(Error::Shape(format!(
                "dictionary must be PxK with 1 <= K <= P, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { b })
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// ‖BᵀB − I‖_max.
    pub fn orthonormality_defect(&self) -> f64 {
        crate::linalg::identity_defect(&(self.b.transpose() * &self.b))
    }

    /// B Bᵀ, the projector onto the learned subspace when B is orthonormal.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }
}

/// K×N nonnegative loadings, one column per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    c: DMatrix<f64>,
}

impl LoadingMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = c.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::validation("loadings", format!("entry {} is not >= 0", v)));
        }
        Ok(Self { c })
    }

    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn subject(&self, n: usize) -> Vec<f64> {
        self.c.column(n).iter().copied().collect()
    }

    /// Loadings of the given subjects, in that order.
    pub fn select(&self, indices: &[usize]) -> LoadingMatrix {
        let cols: Vec<_> = indices.iter().map(|&i| self.c.column(i)).collect();
        LoadingMatrix {
            c: DMatrix::from_columns(&cols),
        }
    }

    pub fn from_columns(cols: &[DVector<f64>]) -> Result<Self> {
        Self::new(DMatrix::from_columns(cols))
    }
}

/// Splitting variables Dₙ and multipliers Λₙ, each P×K.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub d: Vec<DMatrix<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
}

impl AugmentedState {
    pub fn zeros(p: usize, k: usize, n: usize) -> Self {
        Self {
            d: vec![DMatrix::zeros(p, k); n],
            lambda: vec![DMatrix::zeros(p, k); n],
        }
    }

    fn check(&self, p: usize, k: usize, n: usize) -> Result<()> {
        if self.d.len() != n || self.lambda.len() != n {
            return Err(Error::Shape(format!(
                "augmented state holds {} / {} subjects, expected {}",
                self.d.len(),
                self.lambda.len(),
                n
            )));
        }
        let bad = |m: &DMatrix<f64>| m.nrows() != p || m.ncols() != k;
        if self.d.iter().chain(self.lambda.iter()).any(bad) {
            return Err(Error::Shape(format!("augmented state blocks must be {}x{}", p, k)));
        }
        Ok(())
    }
}

/// Objective after each block update in one iteration, with Λ fixed
/// throughout (the dual step comes after `after_auxiliary`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepObjectives {
    pub start: f64,
    pub after_loadings: f64,
    pub after_dictionary: f64,
    pub after_auxiliary: f64,
}

impl StepObjectives {
    /// Largest increase across the three block updates.
    pub fn max_increase(&self) -> f64 {
        [
            self.after_loadings - self.start,
            self.after_dictionary - self.after_loadings,
            self.after_auxiliary - self.after_dictionary,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpcFitReport {
    pub objective_trace: Vec<f64>,
    pub constraint_residual_trace: Vec<f64>,
    pub step_objectives: Vec<StepObjectives>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub k: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpcConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Relative objective change below which the fit may stop.
    pub tol: f64,
    /// Constraint residual max‖Dₙ − B diag(cₙ)‖_F required to stop.
    pub residual_tol: f64,
    /// Dual ascent step for Λ.
    pub dual_step: f64,
    pub seed: u64,
}

impl CpcConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 1000,
            tol: 1e-6,
            residual_tol: 1e-3,
            dual_step: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CpcFit {
    pub dictionary: Dictionary,
    pub loadings: LoadingMatrix,
    pub state: AugmentedState,
    pub report: CpcFitReport,
}

/// Value of the augmented objective J.
pub fn objective(gammas: &[&DMatrix<f64>], b: &DMatrix<f64>, c: &DMatrix<f64>, state: &AugmentedState) -> f64 {
    let bt = b.transpose();
    gammas
        .iter()
        .enumerate()
        .map(|(n, g)| {
            let d = &state.d[n];
            let lam = &state.lambda[n];
            let fit = (*g - d * &bt).norm_squared();
            let resid = d - scale_columns(b, c.column(n).as_slice());
            fit + lam.dot(&resid) + 0.5 * resid.norm_squared()
        })
        .sum()
}

/// max over subjects of ‖Dₙ − B diag(cₙ)‖_F.
pub fn constraint_residual(b: &DMatrix<f64>, c: &DMatrix<f64>, state: &AugmentedState) -> f64 {
    state
        .d
        .iter()
        .enumerate()
        .map(|(n, d)| (d - scale_columns(b, c.column(n).as_slice())).norm())
        .fold(0.0, f64::max)
}

fn check_gammas(gammas: &[&DMatrix<f64>], p: usize) -> Result<()> {
    if let Some(g) = gammas.iter().find(|g| g.nrows() != p || g.ncols() != p) {
        return Err(Error::Shape(format!(
            "subject matrix is {}x{}, expected {}x{}",
            g.nrows(),
            g.ncols(),
            p,
            p
        )));
    }
    Ok(())
}

/// Step 1: closed-form nonnegative loadings
/// c_{nk} = max(0, b_kᵀ(d_{n,k} + λ_{n,k})). Assumes orthonormal B.
pub fn update_loadings(gammas: &[&DMatrix<f64>], b: &Dictionary, state: &AugmentedState) -> Result<LoadingMatrix> {
    let (p, k, n) = (b.p(), b.k(), gammas.len());
    check_gammas(gammas, p)?;
    state.check(p, k, n)?;
    let bm = b.matrix();
    let c = DMatrix::from_fn(k, n, |kk, nn| {
        let target = state.d[nn].column(kk) + state.lambda[nn].column(kk);
        bm.column(kk).dot(&target).max(0.0)
    });
    Ok(LoadingMatrix { c })
}

/// Procrustes target M = Σₙ [2 Γₙ Dₙ + (Dₙ + Λₙ) diag(cₙ)].
pub fn procrustes_target(gammas: &[&DMatrix<f64>], c: &LoadingMatrix, state: &AugmentedState) -> Result<DMatrix<f64>> {
    let n = gammas.len();
    if n == 0 {
        return Err(Error::Shape("no subjects".into()));
    }
    let p = gammas[0].nrows();
    let k = c.k();
    check_gammas(gammas, p)?;
    state.check(p, k, n)?;
    if c.n() != n {
        return Err(Error::Shape(format!(
            "loadings cover {} subjects, expected {}",
            c.n(),
            n
        )));
    }
    let mut m = DMatrix::zeros(p, k);
    for (i, g) in gammas.iter().enumerate() {
        m += *g * &state.d[i] * 2.0;
        m += scale_columns(&(&state.d[i] + &state.lambda[i]), c.matrix().column(i).as_slice());
    }
    Ok(m)
}

/// Step 2: B = U Vᵀ from the thin SVD of the Procrustes target.
pub fn update_dictionary(gammas: &[&DMatrix<f64>], c: &LoadingMatrix, state: &AugmentedState) -> Result<Dictionary> {
    let m = procrustes_target(gammas, c, state)?;
    Dictionary::new(procrustes(&m)?)
}

/// Step 3, primal half: Dₙ solving Dₙ(2BᵀB + I) = 2ΓₙB − Λₙ + B diag(cₙ).
pub fn update_splitting(
    gammas: &[&DMatrix<f64>],
    b: &Dictionary,
    c: &LoadingMatrix,
    state: &AugmentedState,
) -> Result<Vec<DMatrix<f64>>> {
    let (p, k, n) = (b.p(), b.k(), gammas.len());
    check_gammas(gammas, p)?;
    state.check(p, k, n)?;
    if c.k() != k || c.n() != n {
        return Err(Error::Shape("loadings do not match dictionary / cohort".into()));
    }
    let bm = b.matrix();
    let system = bm.transpose() * bm * 2.0 + DMatrix::<f64>::identity(k, k);
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Numerical("2BᵀB + I is not positive definite".into()))?;
    let mut out = Vec::with_capacity(n);
    for (i, g) in gammas.iter().enumerate() {
        let rhs = *g * bm * 2.0 - &state.lambda[i] + scale_columns(bm, c.matrix().column(i).as_slice());
        // D A = R with A symmetric  <=>  A Dᵀ = Rᵀ
        out.push(chol.solve(&rhs.transpose()).transpose());
    }
    Ok(out)
}

/// Step 3: primal update of every Dₙ followed by dual ascent on Λₙ.
pub fn update_auxiliary(
    gammas: &[&DMatrix<f64>],
    b: &Dictionary,
    c: &LoadingMatrix,
    state: &AugmentedState,
    dual_step: f64,
) -> Result<AugmentedState> {
    let d = update_splitting(gammas, b, c, state)?;
    let lambda = d
        .iter()
        .zip(&state.lambda)
        .enumerate()
        .map(|(i, (dn, lam))| lam + (dn - scale_columns(b.matrix(), c.matrix().column(i).as_slice())) * dual_step)
        .collect();
    Ok(AugmentedState { d, lambda })
}

/// Initial state: B⁰ = top-K eigenvectors of the cohort mean, c⁰ its
/// projected loadings, Dₙ⁰ = B⁰ diag(cₙ⁰), Λₙ⁰ = 0.
pub fn initialize(gammas: &[&DMatrix<f64>], k: usize) -> Result<(Dictionary, LoadingMatrix, AugmentedState)> {
    let n = gammas.len();
    if n == 0 {
        return Err(Error::Config("no subjects".into()));
    }
    let p = gammas[0].nrows();
    check_gammas(gammas, p)?;
    let mut mean = DMatrix::zeros(p, p);
    for g in gammas {
        mean += *g;
    }
    mean /= n as f64;
    let (vals, vecs) = sym_eigen_desc(&mean);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition of the mean matrix failed".into()));
    }
    let dict = Dictionary::new(vecs.columns(0, k).into_owned())?;
    let cols: Vec<DVector<f64>> = gammas.iter().map(|g| project_matrix(g, dict.matrix())).collect();
    let loadings = LoadingMatrix::from_columns(&cols)?;
    let d = (0..n)
        .map(|i| scale_columns(dict.matrix(), loadings.matrix().column(i).as_slice()))
        .collect();
    let state = AugmentedState {
        d,
        lambda: vec![DMatrix::zeros(p, k); n],
    };
    Ok((dict, loadings, state))
}

/// Alternating minimisation on a whole cohort.
pub fn fit_dictionary(cohort: &Cohort, config: &CpcConfig) -> Result<CpcFit> {
    fit_matrices(&cohort.matrices(), config)
}

pub fn fit_matrices(gammas: &[&DMatrix<f64>], config: &CpcConfig) -> Result<CpcFit> {
    let p = gammas.first().map(|g| g.nrows()).unwrap_or(0);
    if config.k == 0 || config.k >= p {
        return Err(Error::Config(format!(
            "need 1 <= k < P, got k = {}, P = {}",
            config.k, p
        )));
    }
    if config.max_iters == 0 {
        return Err(Error::Config("max_iters must be >= 1".into()));
    }
    if !(config.tol > 0.0) {
        return Err(Error::Config("tol must be > 0".into()));
    }

    let (mut dict, mut loadings, mut state) = initialize(gammas, config.k)?;
    let mut report = CpcFitReport {
        objective_trace: Vec::new(),
        constraint_residual_trace: Vec::new(),
        step_objectives: Vec::new(),
        iterations: 0,
        converged: false,
        seed: config.seed,
        k: config.k,
        tol: config.tol,
    };
    let mut previous = objective(gammas, dict.matrix(), loadings.matrix(), &state);
    // Floor for the relative-change denominator when the fit is exact.
    let scale = gammas.iter().map(|g| g.norm_squared()).sum::<f64>() * f64::EPSILON;

    for _ in 0..config.max_iters {
        let start = objective(gammas, dict.matrix(), loadings.matrix(), &state);

        loadings = update_loadings(gammas, &dict, &state)?;
        let after_loadings = objective(gammas, dict.matrix(), loadings.matrix(), &state);

        dict = update_dictionary(gammas, &loadings, &state)?;
        let after_dictionary = objective(gammas, dict.matrix(), loadings.matrix(), &state);

        let d = update_splitting(gammas, &dict, &loadings, &state)?;
        state.d = d;
        let after_auxiliary = objective(gammas, dict.matrix(), loadings.matrix(), &state);

        for (i, lam) in state.lambda.iter_mut().enumerate() {
            let resid = &state.d[i] - scale_columns(dict.matrix(), loadings.matrix().column(i).as_slice());
            *lam += resid * config.dual_step;
        }

        let current = objective(gammas, dict.matrix(), loadings.matrix(), &state);
        let residual = constraint_residual(dict.matrix(), loadings.matrix(), &state);
        if !current.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }
        report.step_objectives.push(StepObjectives {
            start,
            after_loadings,
            after_dictionary,
            after_auxiliary,
        });
        report.objective_trace.push(current);
        report.constraint_residual_trace.push(residual);
        report.iterations += 1;

        let rel = (current - previous).abs() / previous.abs().max(scale).max(f64::MIN_POSITIVE);
        previous = current;
        if rel < config.tol && residual < config.residual_tol {
            report.converged = true;
            break;
        }
    }

    Ok(CpcFit {
        dictionary: dict,
        loadings,
        state,
        report,
    })
}

fn project_matrix(gamma: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(b.ncols(), |k, _| {
        let bk = b.column(k);
        bk.dot(&(gamma * bk)).max(0.0)
    })
}

/// Loadings for an unseen matrix: c_k = max(0, b_kᵀ Γ b_k), the minimiser of
/// ‖Γ − Σ_k c_k b_k b_kᵀ‖²_F over c ≥ 0 for orthonormal B.
pub fn project_loadings(gamma: &DMatrix<f64>, b: &Dictionary) -> Result<DVector<f64>> {
    if gamma.nrows() != b.p() || gamma.ncols() != b.p() {
        return Err(Error::Shape(format!(
            "matrix is {}x{}, dictionary expects {}x{}",
            gamma.nrows(),
            gamma.ncols(),
            b.p(),
            b.p()
        )));
    }
    Ok(project_matrix(gamma, b.matrix()))
}

/// Projected loadings for every subject of a cohort.
pub fn project_cohort(cohort: &Cohort, b: &Dictionary) -> Result<LoadingMatrix> {
    let cols = cohort
        .matrices()
        .into_iter()
        .map(|g| project_loadings(g, b))
        .collect::<Result<Vec<_>>>()?;
    LoadingMatrix::from_columns(&cols)
}

/// B diag(c) Bᵀ for nonnegative c.
pub fn reconstruct(b: &Dictionary, c: &[f64]) -> Result<DMatrix<f64>> {
    if c.len() != b.k() {
        return Err(Error::Shape(format!(
            "{} loadings for a {}-column dictionary",
            c.len(),
            b.k()
        )));
    }
    if let Some(v) = c.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::validation("loadings", format!("entry {} is negative", v)));
    }
    Ok(crate::linalg::low_rank_product(b.matrix(), c))
}

/// Σₙ‖Γₙ − B diag(cₙ)Bᵀ‖²_F / Σₙ‖Γₙ‖²_F.
pub fn relative_reconstruction_error(gammas: &[&DMatrix<f64>], b: &Dictionary, c: &LoadingMatrix) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, g) in gammas.iter().enumerate() {
        let r = crate::linalg::low_rank_product(b.matrix(), c.matrix().column(i).as_slice());
        num += (*g - r).norm_squared();
        den += g.norm_squared();
    }
    num / den
}

impl CpcFit {
    /// Writes `B.csv`, `C.csv` and `report.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_matrix_csv(&dir.join("B.csv"), self.dictionary.matrix())?;
        write_matrix_csv(&dir.join("C.csv"), self.loadings.matrix())?;
        write_json(&dir.join("report.json"), &self.report)
    }
}

pub fn load_dictionary(dir: &Path) -> Result<Dictionary> {
    Dictionary::new(read_matrix_csv(&dir.join("B.csv"))?)
}

pub fn load_loadings(dir: &Path) -> Result<LoadingMatrix> {
    LoadingMatrix::new(read_matrix_csv(&dir.join("C.csv"))?)
}

pub fn load_report(dir: &Path) -> Result<CpcFitReport> {
    read_json(&dir.join("report.json"))
}
