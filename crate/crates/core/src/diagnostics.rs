//! Prediction metrics, MCMC convergence diagnostics and the
//! cross-validation / grid-search harness.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes_regress::{self, BlrHyper, SsvsHyper};
use crate::cohort::Cohort;
use crate::cpc::{self, CpcConfig, LoadingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_BINS: usize = 10;

/// Root mean squared difference.
pub fn rmse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            y_hat.len(),
            y.len()
        )));
    }
    let ss: f64 = y_hat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information of the binned sequences divided by the geometric mean
/// of their entropies. Both sequences share equal-width bins over the pooled
/// min–max range. If either entropy is zero the result is 1 when the binned
/// sequences are identical and 0 otherwise.
pub fn nmi(y_hat: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "nmi needs equal non-empty lengths, got {} and {}",
            y_hat.len(),
            y.len()
        )));
    }
    if bins < 2 {
        return Err(Error::Config(format!("nmi needs at least 2 bins, got {}", bins)));
    }
    let lo = y_hat.iter().chain(y).copied().fold(f64::INFINITY, f64::min);
    let hi = y_hat.iter().chain(y).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let a: Vec<usize> = y_hat.iter().map(|&v| bin_index(v, lo, width, bins)).collect();
    let b: Vec<usize> = y.iter().map(|&v| bin_index(v, lo, width, bins)).collect();

    let total = y.len() as f64;
    let mut joint = vec![0.0; bins * bins];
    let mut ma = vec![0.0; bins];
    let mut mb = vec![0.0; bins];
    for (&i, &j) in a.iter().zip(&b) {
        joint[i * bins + j] += 1.0;
        ma[i] += 1.0;
        mb[j] += 1.0;
    }
    let ha = entropy(&ma, total);
    let hb = entropy(&mb, total);
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0.0 {
                mi += c / total * (c * total / (ma[i] * mb[j])).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Counts of predicted and true values over shared equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramComparison {
    pub edges: Vec<f64>,
    pub predicted: Vec<usize>,
    pub observed: Vec<usize>,
}

impl HistogramComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,predicted,observed\n");
        for i in 0..self.predicted.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.edges[i],
                self.edges[i + 1],
                self.predicted[i],
                self.observed[i]
            ));
        }
        out
    }
}

pub fn histogram_comparison(y_hat: &[f64], y: &[f64], bins: usize) -> Result<HistogramComparison> {
    if y_hat.is_empty() || y.is_empty() {
        return Err(Error::Shape("histogram needs non-empty inputs".into()));
    }
    if bins < 1 {
        return Err(Error::Config("histogram needs at least 1 bin".into()));
    }
    let lo = y_hat.iter().chain(y).copied().fold(f64::INFINITY, f64::min);
    let hi = y_hat.iter().chain(y).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let count = |v: &[f64]| {
        let mut c = vec![0; bins];
        for &x in v {
            c[bin_index(x, lo, width, bins)] += 1;
        }
        c
    };
    Ok(HistogramComparison {
        edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
        predicted: count(y_hat),
        observed: count(y),
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased autocovariances γ_0..γ_max_lag.
fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let m = mean(series);
    (0..=max_lag)
        .map(|lag| {
            series[..n - lag]
                .iter()
                .zip(&series[lag..])
                .map(|(a, b)| (a - m) * (b - m))
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Sample autocorrelation for lags 0..=max_lag. A zero-variance series
/// yields 1 at lag 0 and 0 elsewhere.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Config(format!(
            "series of length {} is too short for max_lag {}",
            series.len(),
            max_lag
        )));
    }
    let acov = autocovariance(series, max_lag);
    if acov[0] <= 0.0 {
        let mut out = vec![0.0; max_lag + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    Ok(acov.iter().map(|g| g / acov[0]).collect())
}

/// Spectral density at frequency zero (the long-run variance), estimated
/// with the initial monotone positive sequence of paired autocovariances.
pub fn spectral_density_at_zero(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let max_lag = n - 1;
    let acov = autocovariance(series, max_lag);
    if acov[0] <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m < max_lag {
        let pair = acov[2 * m] + acov[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    (2.0 * sum - acov[0]).max(acov[0] / n as f64)
}

/// Geweke z-score comparing the mean of the first `first_frac` of the chain
/// with the mean of the last `last_frac`, each standardised by its
/// spectral density at zero.
pub fn geweke_z(series: &[f64], first_frac: f64, last_frac: f64) -> Result<f64> {
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(Error::Config(format!(
            "invalid Geweke windows {} / {}",
            first_frac, last_frac
        )));
    }
    let n = series.len();
    let na = (first_frac * n as f64).floor() as usize;
    let nb = (last_frac * n as f64).floor() as usize;
    if na < 2 || nb < 2 {
        return Err(Error::Config(format!(
            "series of length {} is too short for Geweke windows",
            n
        )));
    }
    let a = &series[..na];
    let b = &series[n - nb..];
    let var = spectral_density_at_zero(a) / na as f64 + spectral_density_at_zero(b) / nb as f64;
    if var <= 0.0 {
        return Ok(0.0);
    }
    Ok((mean(a) - mean(b)) / var.sqrt())
}

/// Deterministic assignment of N subjects to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_assignments: Vec<usize>,
    pub folds: usize,
}

impl FoldSplit {
    pub fn new(n: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds < 2 || n < folds {
            return Err(Error::Config(format!(
                "cannot split {} subjects into {} folds",
                n, folds
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_assignments = vec![0; n];
        for (pos, &subject) in order.iter().enumerate() {
            fold_assignments[subject] = pos % folds;
        }
        Ok(Self {
            fold_assignments,
            folds,
        })
    }

    /// (training indices, test indices) for `fold`, in subject order.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.fold_assignments.len()).partition(|&i| self.fold_assignments[i] == fold);
        (train, test)
    }
}

/// L2-penalised least squares with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

impl RidgeModel {
    pub fn fit(c: &LoadingMatrix, y: &[f64], lambda: f64) -> Result<Self> {
        if y.len() != c.n() {
            return Err(Error::Shape(format!("{} scores for {} subjects", y.len(), c.n())));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("ridge penalty must be >= 0, got {}", lambda)));
        }
        let k = c.k();
        let x = DMatrix::from_fn(c.n(), k + 1, |i, j| if j == 0 { 1.0 } else { c.matrix()[(j - 1, i)] });
        let mut a = x.transpose() * &x;
        for j in 1..=k {
            a[(j, j)] += lambda;
        }
        let rhs = x.transpose() * DVector::from_column_slice(y);
        let coef = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal equations are singular".into()))?
            .solve(&rhs);
        Ok(Self {
            intercept: coef[0],
            beta: coef.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict(&self, c: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Blr,
    Ssvs,
    Ridge,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Blr => "BLR",
            ModelKind::Ssvs => "SSVS",
            ModelKind::Ridge => "Ridge Regression",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blr" => Ok(ModelKind::Blr),
            "ssvs" | "svss" => Ok(ModelKind::Ssvs),
            "ridge" => Ok(ModelKind::Ridge),
            other => Err(Error::Config(format!(
                "unknown model {:?} (expected blr, ssvs or ridge)",
                other
            ))),
        }
    }
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Hyperparameters {
    Blr(BlrHyper),
    Ssvs(SsvsHyper),
    Ridge { lambda: f64 },
}

impl Hyperparameters {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Blr(_) => ModelKind::Blr,
            Hyperparameters::Ssvs(_) => ModelKind::Ssvs,
            Hyperparameters::Ridge { .. } => ModelKind::Ridge,
        }
    }
}

/// Default search grids.
pub fn default_grid(model: ModelKind) -> Vec<Hyperparameters> {
    match model {
        ModelKind::Blr => [0.01, 0.1, 1.0, 10.0, 100.0]
            .into_iter()
            .map(|v| Hyperparameters::Blr(BlrHyper::with_variance(v)))
            .collect(),
        ModelKind::Ssvs => {
            let mut out = Vec::new();
            for v1 in [1.0, 10.0] {
                for v2 in [0.001, 0.01] {
                    out.push(Hyperparameters::Ssvs(SsvsHyper::homogeneous(v1, v2)));
                }
            }
            out
        }
        ModelKind::Ridge => [0.01, 0.1, 1.0, 10.0]
            .into_iter()
            .map(|lambda| Hyperparameters::Ridge { lambda })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub folds: usize,
    pub n_burn: usize,
    pub n_keep: usize,
    pub cpc_max_iters: usize,
    pub cpc_tol: f64,
    pub bins: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl CvConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            folds: DEFAULT_FOLDS,
            n_burn: bayes_regress::DEFAULT_BURN_IN,
            n_keep: bayes_regress::DEFAULT_KEEP,
            cpc_max_iters: 1000,
            cpc_tol: 1e-6,
            bins: DEFAULT_BINS,
            seed,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (n − 1 denominator).
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, sd }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDetail {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse_train: f64,
    pub rmse_test: f64,
    pub nmi_test: f64,
    pub chosen: Hyperparameters,
    /// Training rMSE of every grid cell, in grid order.
    pub grid_rmse_train: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score: String,
    pub model: ModelKind,
    pub method: String,
    pub rmse_train: MeanSd,
    pub rmse_test: MeanSd,
    /// NMI between pooled held-out predictions and true scores.
    pub nmi_test: f64,
    pub folds: Vec<FoldDetail>,
    pub fold_assignments: Vec<usize>,
    pub seed: u64,
}

/// Fits one grid cell and returns point predictions for (train, test).
fn fit_and_predict(
    hyper: &Hyperparameters,
    train_c: &LoadingMatrix,
    train_y: &[f64],
    test_c: &LoadingMatrix,
    config: &CvConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match hyper {
        Hyperparameters::Ridge { lambda } => {
            let model = RidgeModel::fit(train_c, train_y, *lambda)?;
            let pr = |c: &LoadingMatrix| (0..c.n()).map(|i| model.predict(&c.subject(i))).collect();
            Ok((pr(train_c), pr(test_c)))
        }
        Hyperparameters::Blr(h) => {
            let chain = bayes_regress::fit_blr(train_c, train_y, h, config.n_burn, config.n_keep, seed)?;
            Ok((
                bayes_regress::predict_mean(&chain, train_c)?,
                bayes_regress::predict_mean(&chain, test_c)?,
            ))
        }
        Hyperparameters::Ssvs(h) => {
            let chain = bayes_regress::fit_ssvs(train_c, train_y, h, config.n_burn, config.n_keep, seed)?;
            Ok((
                bayes_regress::predict_mean(&chain, train_c)?,
                bayes_regress::predict_mean(&chain, test_c)?,
            ))
        }
    }
}

fn fold_seed(root: u64, fold: usize) -> u64 {
    root.wrapping_add(1000 * (fold as u64 + 1))
}

struct FoldOutcome {
    detail: FoldDetail,
    test_indices: Vec<usize>,
    test_pred: Vec<f64>,
}

fn run_fold(
    cohort: &Cohort,
    y: &[f64],
    split: &FoldSplit,
    fold: usize,
    grid: &[Hyperparameters],
    config: &CvConfig,
) -> Result<FoldOutcome> {
    let (train, test) = split.split(fold);
    if train.len() < 2 || test.is_empty() {
        return Err(Error::Config(format!(
            "fold {} has {} training / {} test subjects",
            fold,
            train.len(),
            test.len()
        )));
    }
    let seed = fold_seed(config.seed, fold);
    let train_cohort = cohort.subset(&train)?;
    let test_cohort = cohort.subset(&test)?;
    let cpc_config = CpcConfig {
        max_iters: config.cpc_max_iters,
        tol: config.cpc_tol,
        seed,
        ..CpcConfig::new(config.k)
    };
    let fit = cpc::fit_dictionary(&train_cohort, &cpc_config)?;
    let train_c = cpc::project_cohort(&train_cohort, &fit.dictionary)?;
    let test_c = cpc::project_cohort(&test_cohort, &fit.dictionary)?;
    let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let test_y: Vec<f64> = test.iter().map(|&i| y[i]).collect();

    let cells: Vec<(Vec<f64>, Vec<f64>)> = grid
        .par_iter()
        .enumerate()
        .map(|(cell, h)| fit_and_predict(h, &train_c, &train_y, &test_c, config, seed.wrapping_add(cell as u64)))
        .collect::<Result<_>>()?;
    let grid_rmse_train = cells
        .iter()
        .map(|(tr, _)| rmse(tr, &train_y))
        .collect::<Result<Vec<f64>>>()?;
    // First minimum wins ties, keeping the choice independent of scheduling.
    let best = (0..grid.len()).fold(0, |best, i| {
        if grid_rmse_train[i] < grid_rmse_train[best] {
            i
        } else {
            best
        }
    });
    let (train_pred, test_pred) = &cells[best];
    let detail = FoldDetail {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        rmse_train: rmse(train_pred, &train_y)?,
        rmse_test: rmse(test_pred, &test_y)?,
        nmi_test: nmi(test_pred, &test_y, config.bins)?,
        chosen: grid[best].clone(),
        grid_rmse_train,
    };
    Ok(FoldOutcome {
        detail,
        test_indices: test,
        test_pred: test_pred.clone(),
    })
}

/// K-fold cross-validation: per fold, learn a dictionary on the training
/// subjects, project both sides, pick hyperparameters by training rMSE and
/// score the held-out subjects.
pub fn run_cv(
    cohort: &Cohort,
    score: &str,
    model: ModelKind,
    grid: &[Hyperparameters],
    config: &CvConfig,
) -> Result<EvalReport> {
    if cohort.n() < 5 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 5 subjects, got {}",
            cohort.n()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if let Some(h) = grid.iter().find(|h| h.kind() != model) {
        return Err(Error::Config(format!(
            "grid entry {:?} does not match model {:?}",
            h, model
        )));
    }
    let y = cohort.scores(score)?;
    let split = FoldSplit::new(cohort.n(), config.folds, config.seed)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    let outcomes: Vec<FoldOutcome> = pool.install(|| {
        (0..split.folds)
            .into_par_iter()
            .map(|f| run_fold(cohort, &y, &split, f, grid, config))
            .collect::<Result<_>>()
    })?;

    let mut pooled_pred = vec![0.0; cohort.n()];
    for o in &outcomes {
        for (&i, &p) in o.test_indices.iter().zip(&o.test_pred) {
            pooled_pred[i] = p;
        }
    }
    let folds: Vec<FoldDetail> = outcomes.into_iter().map(|o| o.detail).collect();
    Ok(EvalReport {
        score: score.to_string(),
        model,
        method: model.label().to_string(),
        rmse_train: MeanSd::of(&folds.iter().map(|f| f.rmse_train).collect::<Vec<_>>()),
        rmse_test: MeanSd::of(&folds.iter().map(|f| f.rmse_test).collect::<Vec<_>>()),
        nmi_test: nmi(&pooled_pred, &y, config.bins)?,
        folds,
        fold_assignments: split.fold_assignments,
        seed: config.seed,
    })
}

/// Header of the summary table, one row per (score, method).
pub const TABLE_HEADER: [&str; 5] = ["Score", "Method", "rMSE Train", "rMSE Test", "MI Test"];

pub fn table_csv(reports: &[EvalReport]) -> String {
    let mut out = TABLE_HEADER.join(",");
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            r.score, r.method, r.rmse_train, r.rmse_test, r.nmi_test
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn nmi_examples() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        assert!((nmi(&y, &y, 10).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 1.0], 2).unwrap(), 1.0);
        assert!(matches!(nmi(&[1.0], &[1.0, 2.0], 10), Err(Error::Shape(_))));
        // Constant but identical sequences.
        assert_eq!(nmi(&[2.0; 4], &[2.0; 4], 10).unwrap(), 1.0);
    }

    #[test]
    fn acf_guards_and_alternation() {
        assert_eq!(autocorrelation(&[3.0; 10], 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let acf = autocorrelation(&alt, 1).unwrap();
        assert!((acf[1] + 1.0).abs() < 0.01);
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn geweke_constant_is_zero() {
        assert_eq!(geweke_z(&[1.5; 100], 0.1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn folds_partition_and_balance() {
        let split = FoldSplit::new(23, 5, 9).unwrap();
        let mut sizes = [0usize; 5];
        for &f in &split.fold_assignments {
            sizes[f] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(split, FoldSplit::new(23, 5, 9).unwrap());
        let mut seen = [0; 23];
        for f in 0..5 {
            for i in split.split(f).1 {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("SSVS".parse::<ModelKind>().unwrap(), ModelKind::Ssvs);
        assert!("lasso".parse::<ModelKind>().is_err());
    }
}
