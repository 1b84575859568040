//! Command-line front end.
//!
//! Every subcommand takes `--out <dir>`, `--seed <u64>` (default 0),
//! `--jobs <n>` and `--config <file.json>`. Keys of the JSON object are flag
//! names (with `_` or `-`); explicit flags override values from the file.
//! Each run writes `run_meta.json` with the resolved arguments.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bayes_regress::{self, BlrHyper, ChainHyper, McmcChain, SsvsHyper};
use crate::cohort::{self, Cohort, SyntheticSpec};
use crate::cpc::{self, CpcConfig, Dictionary};
use crate::diagnostics::{self, CvConfig, Hyperparameters, ModelKind};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, write_series_csv, write_text};
use crate::joint_model::{self, JointConfig, JointHyper, JointInit};

#[derive(Debug, Parser)]
#[command(
    name = "cpcbayes",
    version,
    about = "Dictionary learning and Bayesian regression on cohorts of correlation matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for folds and grid cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// JSON file of flag values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CohortArgs {
    /// Manifest CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Skip the unit-diagonal and [-1, 1] checks on loaded matrices.
    #[arg(long)]
    pub relaxed: bool,
}

impl CohortArgs {
    fn load(&self) -> Result<Cohort> {
        cohort::load_cohort_with(&self.cohort, !self.relaxed)
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic cohort with known ground truth.
    Simulate(SimulateArgs),
    /// Eigenvalues of the cohort mean matrix.
    Scree(ScreeArgs),
    /// Fit the shared dictionary and loadings.
    FitDict(FitDictArgs),
    /// Project subjects onto a fitted dictionary.
    Project(ProjectArgs),
    /// Bayesian linear regression on projected loadings.
    FitBlr(FitBlrArgs),
    /// Spike-and-slab variable selection on projected loadings.
    FitSsvs(FitSsvsArgs),
    /// Joint sampler over basis, loadings and regression weights.
    FitJoint(FitJointArgs),
    /// Predict scores from a saved regression chain.
    Predict(PredictArgs),
    /// Cross-validated evaluation with grid search.
    Cv(CvArgs),
    /// Trace, autocorrelation and Geweke diagnostics for a saved chain.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_y: f64,
    /// Wishart degrees of freedom (default max(30, P + 2)).
    #[arg(long)]
    pub wishart_dof: Option<usize>,
    /// Exact low-rank matrices without Wishart noise.
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CpcArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

impl CpcArgs {
    fn config(&self, seed: u64) -> CpcConfig {
        CpcConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            ..CpcConfig::new(self.k)
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitDictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub cpc: CpcArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Directory holding `B.csv`.
    #[arg(long)]
    pub dict: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegressionArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub score: String,
    /// Dictionary directory; when absent a dictionary is fitted and saved
    /// under `<out>/dictionary`.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = bayes_regress::DEFAULT_BURN_IN)]
    pub n_burn: usize,
    #[arg(long, default_value_t = bayes_regress::DEFAULT_KEEP)]
    pub n_keep: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitBlrArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub reg: RegressionArgs,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_beta_sq: f64,
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitSsvsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub reg: RegressionArgs,
    /// Slab variance factor(s): one value or K + 1 comma-separated values.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub v1: Vec<f64>,
    /// Spike variance factor(s).
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub v2: Vec<f64>,
    /// Prior inclusion probability.
    #[arg(long, default_value_t = 0.5)]
    pub g: f64,
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Dictionary,
    Cold,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitJointArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub score: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = joint_model::DEFAULT_BURN_IN)]
    pub n_burn: usize,
    #[arg(long, default_value_t = joint_model::DEFAULT_KEEP)]
    pub n_keep: usize,
    /// Keep every n-th state in `states/`.
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Dictionary)]
    pub init: InitKind,
    /// Start from this dictionary (and its projected loadings).
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Inverse-Wishart degrees of freedom (default P + 5).
    #[arg(long)]
    pub nu0: Option<f64>,
    /// Basis prior variance (default 1/P).
    #[arg(long)]
    pub sigma_b_sq: Option<f64>,
    #[arg(long)]
    pub eps_ridge: Option<f64>,
    #[arg(long)]
    pub tau_b: Option<f64>,
    #[arg(long)]
    pub tau_c: Option<f64>,
    #[arg(long)]
    pub a_w: Option<f64>,
    #[arg(long)]
    pub b_w: Option<f64>,
    #[arg(long)]
    pub a_c: Option<f64>,
    #[arg(long)]
    pub b_c: Option<f64>,
    #[arg(long)]
    pub a_y: Option<f64>,
    #[arg(long)]
    pub b_y: Option<f64>,
    /// Disable step-size adaptation during burn-in.
    #[arg(long)]
    pub no_adapt: bool,
    /// Propose all loadings jointly instead of per subject.
    #[arg(long)]
    pub block_c: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Directory written by fit-blr or fit-ssvs.
    #[arg(long)]
    pub chain: PathBuf,
    /// Dictionary directory (default `<chain>/dictionary`).
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Add observation noise to each draw.
    #[arg(long)]
    pub noise: bool,
    /// Score column to compare against, if present.
    #[arg(long)]
    pub score: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub score: String,
    /// Comma-separated models from blr, ssvs, ridge.
    #[arg(long, value_delimiter = ',', default_value = "blr,ssvs,ridge")]
    pub model: Vec<ModelKind>,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = diagnostics::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = diagnostics::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = bayes_regress::DEFAULT_BURN_IN)]
    pub n_burn: usize,
    #[arg(long, default_value_t = bayes_regress::DEFAULT_KEEP)]
    pub n_keep: usize,
    #[arg(long, default_value_t = 1000)]
    pub cpc_max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub cpc_tol: f64,
    /// BLR grid over the coefficient prior variance.
    #[arg(long, value_delimiter = ',')]
    pub sigma_beta_sq: Vec<f64>,
    /// SSVS grid over the slab factor.
    #[arg(long, value_delimiter = ',')]
    pub v1: Vec<f64>,
    /// SSVS grid over the spike factor.
    #[arg(long, value_delimiter = ',')]
    pub v2: Vec<f64>,
    /// Ridge grid over the penalty.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by fit-joint, fit-blr or fit-ssvs.
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 0.1)]
    pub first_frac: f64,
    #[arg(long, default_value_t = 0.5)]
    pub last_frac: f64,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Scree(a) => &a.common,
            Command::FitDict(a) => &a.common,
            Command::Project(a) => &a.common,
            Command::FitBlr(a) => &a.common,
            Command::FitSsvs(a) => &a.common,
            Command::FitJoint(a) => &a.common,
            Command::Predict(a) => &a.common,
            Command::Cv(a) => &a.common,
            Command::Diagnose(a) => &a.common,
        }
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    argv: Vec<String>,
    seed: u64,
    jobs: usize,
    resolved: &'a Command,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    derived: serde_json::Value,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e);
            return 1;
        }
    };
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let cli = match cmd.try_get_matches_from(&argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli.command, argv) {
        Ok(summary) => {
            println!("{}", summary);
            0
        }
        Err(e) => {
            eprintln!("error: {}", e);
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

/// Inserts flags from a `--config` JSON file right after the subcommand
/// name, so that flags given on the command line take precedence.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(rest) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(rest));
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    if argv.len() < 2 {
        return Ok(argv);
    }
    let value: serde_json::Value = read_json(&path)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config(format!("{} must contain a JSON object", path.display())))?;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            continue;
        }
        let scalar = |v: &serde_json::Value| -> Result<String> {
            match v {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                other => Err(Error::Config(format!("unsupported value for {}: {}", key, other))),
            }
        };
        match v {
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",");
                flags.push(flag.into());
                flags.push(joined.into());
            }
            other => {
                flags.push(flag.into());
                flags.push(scalar(other)?.into());
            }
        }
    }
    let mut out = argv[..2].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

fn require(ok: bool, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(message.into()))
    }
}

fn execute(command: &Command, argv: Vec<String>) -> Result<String> {
    let common = command.common();
    require(common.jobs >= 1, "--jobs must be >= 1")?;
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    let (summary, derived) = match command {
        Command::Simulate(a) => simulate(a)?,
        Command::Scree(a) => scree(a)?,
        Command::FitDict(a) => fit_dict(a)?,
        Command::Project(a) => project(a)?,
        Command::FitBlr(a) => fit_regression(&a.common, &a.reg, RegressionHyper::Blr(a))?,
        Command::FitSsvs(a) => fit_regression(&a.common, &a.reg, RegressionHyper::Ssvs(a))?,
        Command::FitJoint(a) => fit_joint(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Cv(a) => cv(a)?,
        Command::Diagnose(a) => diagnose(a)?,
    };
    write_json(
        &common.out.join("run_meta.json"),
        &RunMeta {
            version: env!("CARGO_PKG_VERSION"),
            argv,
            seed: common.seed,
            jobs: common.jobs,
            resolved: command,
            derived,
        },
    )?;
    Ok(summary)
}

type Outcome = (String, serde_json::Value);

fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let dof = if a.noiseless {
        None
    } else {
        Some(a.wishart_dof.unwrap_or(30.max(a.p + 2)))
    };
    let spec = SyntheticSpec {
        p: a.p,
        k: a.k,
        n: a.n,
        sigma_y: a.sigma_y,
        wishart_dof: dof,
        seed: a.common.seed,
    };
    let (cohort, truth) = cohort::generate(&spec)?;
    let manifest = cohort::write_cohort(&cohort, &a.common.out)?;
    truth.save(&a.common.out.join("ground_truth.json"))?;
    Ok((
        format!(
            "simulate: wrote {} subjects (P={}, K={}) to {}",
            cohort.n(),
            cohort.p(),
            a.k,
            manifest.display()
        ),
        serde_json::json!({ "wishart_dof": dof }),
    ))
}

fn scree(a: &ScreeArgs) -> Result<Outcome> {
    let cohort = a.cohort.load()?;
    let values = cohort::scree_eigenvalues(&cohort);
    let path = a.common.out.join("scree.csv");
    write_series_csv(&path, ("index", "eigenvalue"), &values, 1)?;
    let top: Vec<String> = values.iter().take(5).map(|v| format!("{:.4}", v)).collect();
    Ok((
        format!(
            "scree: P={}, leading eigenvalues [{}] -> {}",
            values.len(),
            top.join(", "),
            path.display()
        ),
        serde_json::Value::Null,
    ))
}

fn fit_dict(a: &FitDictArgs) -> Result<Outcome> {
    let cohort = a.cohort.load()?;
    let fit = cpc::fit_dictionary(&cohort, &a.cpc.config(a.common.seed))?;
    fit.save(&a.common.out)?;
    let err = cpc::relative_reconstruction_error(&cohort.matrices(), &fit.dictionary, &fit.loadings);
    Ok((
        format!(
            "fit-dict: K={}, {} iterations, converged={}, relative reconstruction error {:.4e} -> {}",
            fit.dictionary.k(),
            fit.report.iterations,
            fit.report.converged,
            err,
            a.common.out.display()
        ),
        serde_json::json!({ "relative_reconstruction_error": err }),
    ))
}

fn project(a: &ProjectArgs) -> Result<Outcome> {
    let cohort = a.cohort.load()?;
    let dict = cpc::load_dictionary(&a.dict)?;
    require(
        dict.p() == cohort.p(),
        format!("dictionary has P={} but cohort has P={}", dict.p(), cohort.p()),
    )?;
    let loadings = cpc::project_cohort(&cohort, &dict)?;
    let path = a.common.out.join("C.csv");
    crate::io::write_matrix_csv(&path, loadings.matrix())?;
    Ok((
        format!(
            "project: {} subjects onto K={} -> {}",
            cohort.n(),
            dict.k(),
            path.display()
        ),
        serde_json::Value::Null,
    ))
}

/// Loads the dictionary named by `--dict`, or fits one with `--k`.
fn resolve_dictionary(
    cohort: &Cohort,
    dict: Option<&Path>,
    k: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<Dictionary> {
    match dict {
        Some(dir) => {
            let d = cpc::load_dictionary(dir)?;
            require(
                d.p() == cohort.p(),
                format!("dictionary has P={} but cohort has P={}", d.p(), cohort.p()),
            )?;
            if let Some(k) = k {
                require(k == d.k(), format!("--k {} does not match dictionary K={}", k, d.k()))?;
            }
            Ok(d)
        }
        None => {
            let k = k.ok_or_else(|| Error::Config("either --dict or --k is required".into()))?;
            let fit = cpc::fit_dictionary(
                cohort,
                &CpcConfig {
                    seed,
                    ..CpcConfig::new(k)
                },
            )?;
            fit.save(&out.join("dictionary"))?;
            Ok(fit.dictionary)
        }
    }
}

enum RegressionHyper<'a> {
    Blr(&'a FitBlrArgs),
    Ssvs(&'a FitSsvsArgs),
}

fn fit_regression(common: &Common, reg: &RegressionArgs, hyper: RegressionHyper<'_>) -> Result<Outcome> {
    require(reg.n_keep >= 1, "--n-keep must be >= 1")?;
    let cohort = reg.cohort.load()?;
    let y = cohort.scores(&reg.score)?;
    let dict = resolve_dictionary(&cohort, reg.dict.as_deref(), reg.k, common.seed, &common.out)?;
    let c = cpc::project_cohort(&cohort, &dict)?;
    let (chain, saved, name): (McmcChain, ChainHyper, &str) = match hyper {
        RegressionHyper::Blr(a) => {
            let h = BlrHyper {
                sigma_beta_sq: a.sigma_beta_sq,
                a: a.a,
                b: a.b,
            };
            (
                bayes_regress::fit_blr(&c, &y, &h, reg.n_burn, reg.n_keep, common.seed)?,
                ChainHyper::Blr(h),
                "fit-blr",
            )
        }
        RegressionHyper::Ssvs(a) => {
            let h = SsvsHyper {
                v1: a.v1.clone(),
                v2: a.v2.clone(),
                g: a.g,
                a: a.a,
                b: a.b,
            };
            (
                bayes_regress::fit_ssvs(&c, &y, &h, reg.n_burn, reg.n_keep, common.seed)?,
                ChainHyper::Ssvs(h.clone()),
                "fit-ssvs",
            )
        }
    };
    chain.save(&common.out, saved)?;
    let fitted = bayes_regress::predict_mean(&chain, &c)?;
    let train_rmse = diagnostics::rmse(&fitted, &y)?;
    let mut derived = serde_json::json!({ "train_rmse": train_rmse });
    let mut extra = String::new();
    if let Ok(incl) = bayes_regress::inclusion_probabilities(&chain) {
        extra = format!(
            ", inclusion [{}]",
            incl.iter().map(|p| format!("{:.2}", p)).collect::<Vec<_>>().join(", ")
        );
        derived["inclusion_probabilities"] = serde_json::json!(incl);
    }
    Ok((
        format!(
            "{}: {} draws, K={}, train rMSE {:.4}{} -> {}",
            name,
            chain.len(),
            chain.k(),
            train_rmse,
            extra,
            common.out.display()
        ),
        derived,
    ))
}

fn fit_joint(a: &FitJointArgs) -> Result<Outcome> {
    require(a.n_keep >= 1, "--n-keep must be >= 1")?;
    require(a.thin >= 1, "--thin must be >= 1")?;
    let cohort = a.cohort.load()?;
    require(
        a.k >= 1 && a.k < cohort.p(),
        format!("--k must satisfy 1 <= k < P = {}", cohort.p()),
    )?;
    let mut h = JointHyper::for_regions(cohort.p());
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut h.nu0, a.nu0);
    set(&mut h.sigma_b_sq, a.sigma_b_sq);
    set(&mut h.eps_ridge, a.eps_ridge);
    set(&mut h.tau_b, a.tau_b);
    set(&mut h.tau_c, a.tau_c);
    set(&mut h.a_w, a.a_w);
    set(&mut h.b_w, a.b_w);
    set(&mut h.a_c, a.a_c);
    set(&mut h.b_c, a.b_c);
    set(&mut h.a_y, a.a_y);
    set(&mut h.b_y, a.b_y);
    h.validate(cohort.p())?;
    let init = match (&a.dict, a.init) {
        (Some(dir), _) => {
            let d = cpc::load_dictionary(dir)?;
            let c = cpc::project_cohort(&cohort, &d)?;
            JointInit::Given(d, c)
        }
        (None, InitKind::Dictionary) => JointInit::Dictionary,
        (None, InitKind::Cold) => JointInit::Cold,
    };
    let config = JointConfig {
        n_burn: a.n_burn,
        n_keep: a.n_keep,
        seed: a.common.seed,
        adapt: !a.no_adapt,
        block_c: a.block_c,
        init,
        ..JointConfig::new(a.k, h)
    };
    let chain = joint_model::fit_joint(&cohort, &a.score, &config)?;
    chain.save(&a.common.out, a.thin)?;

    let y = cohort.scores(&a.score)?;
    let pred = joint_model::posterior_predictive_scores(&chain);
    let means: Vec<f64> = pred.iter().map(|p| p.mean).collect();
    let mut csv = String::from("subject_id,y,mean,sd\n");
    for ((id, yv), p) in cohort.ids().iter().zip(&y).zip(&pred) {
        csv.push_str(&format!("{},{},{},{}\n", id, yv, p.mean, p.sd));
    }
    write_text(&a.common.out.join("predictions.csv"), &csv)?;
    let hist = diagnostics::histogram_comparison(&means, &y, diagnostics::DEFAULT_BINS)?;
    write_text(&a.common.out.join("histogram.csv"), &hist.to_csv())?;
    let rmse = diagnostics::rmse(&means, &y)?;
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let baseline = diagnostics::rmse(&vec![ybar; y.len()], &y)?;
    Ok((
        format!(
            "fit-joint: {} states, accept B {:.2} C {:.2}, rMSE {:.4} (constant {:.4}) -> {}",
            chain.states.len(),
            chain.accept_rate_b,
            chain.accept_rate_c,
            rmse,
            baseline,
            a.common.out.display()
        ),
        serde_json::json!({ "hyper": h, "fit_rmse": rmse, "constant_rmse": baseline }),
    ))
}

fn predict(a: &PredictArgs) -> Result<Outcome> {
    let cohort = a.cohort.load()?;
    let (chain, _) = McmcChain::load(&a.chain)?;
    let dict_dir = a.dict.clone().unwrap_or_else(|| a.chain.join("dictionary"));
    let dict = cpc::load_dictionary(&dict_dir)?;
    require(
        dict.k() == chain.k(),
        format!("dictionary K={} does not match chain K={}", dict.k(), chain.k()),
    )?;
    let c = cpc::project_cohort(&cohort, &dict)?;
    let mut csv = String::from("subject_id,mean,sd\n");
    let mut means = Vec::with_capacity(cohort.n());
    for (i, id) in cohort.ids().iter().enumerate() {
        let p = bayes_regress::predict(&chain, &c.subject(i), a.noise, a.common.seed.wrapping_add(i as u64))?;
        csv.push_str(&format!("{},{},{}\n", id, p.mean, p.sd()));
        means.push(p.mean);
    }
    let path = a.common.out.join("predictions.csv");
    write_text(&path, &csv)?;
    let mut derived = serde_json::Value::Null;
    let mut extra = String::new();
    if let Some(score) = &a.score {
        let y = cohort.scores(score)?;
        let r = diagnostics::rmse(&means, &y)?;
        extra = format!(", rMSE {:.4}", r);
        derived = serde_json::json!({ "rmse": r });
    }
    Ok((
        format!("predict: {} subjects{} -> {}", cohort.n(), extra, path.display()),
        derived,
    ))
}

fn cv(a: &CvArgs) -> Result<Outcome> {
    require(a.folds >= 2, "--folds must be >= 2")?;
    require(a.bins >= 2, "--bins must be >= 2")?;
    require(a.n_keep >= 1, "--n-keep must be >= 1")?;
    require(!a.model.is_empty(), "--model needs at least one entry")?;
    let cohort = a.cohort.load()?;
    require(
        a.k >= 1 && a.k < cohort.p(),
        format!("--k must satisfy 1 <= k < P = {}", cohort.p()),
    )?;
    let config = CvConfig {
        folds: a.folds,
        n_burn: a.n_burn,
        n_keep: a.n_keep,
        cpc_max_iters: a.cpc_max_iters,
        cpc_tol: a.cpc_tol,
        bins: a.bins,
        jobs: a.common.jobs,
        ..CvConfig::new(a.k, a.common.seed)
    };
    let mut reports = Vec::new();
    for &model in &a.model {
        let grid = grid_for(a, model);
        reports.push(diagnostics::run_cv(&cohort, &a.score, model, &grid, &config)?);
    }
    write_json(&a.common.out.join("eval_report.json"), &reports)?;
    write_text(&a.common.out.join("eval_table.csv"), &diagnostics::table_csv(&reports))?;
    let parts: Vec<String> = reports
        .iter()
        .map(|r| format!("{} test rMSE {} MI {:.3}", r.method, r.rmse_test, r.nmi_test))
        .collect();
    Ok((
        format!("cv: {} -> {}", parts.join("; "), a.common.out.display()),
        serde_json::Value::Null,
    ))
}

fn grid_for(a: &CvArgs, model: ModelKind) -> Vec<Hyperparameters> {
    match model {
        ModelKind::Blr if !a.sigma_beta_sq.is_empty() => a
            .sigma_beta_sq
            .iter()
            .map(|&v| Hyperparameters::Blr(BlrHyper::with_variance(v)))
            .collect(),
        ModelKind::Ssvs if !a.v1.is_empty() || !a.v2.is_empty() => {
            let v1 = if a.v1.is_empty() { vec![1.0, 10.0] } else { a.v1.clone() };
            let v2 = if a.v2.is_empty() {
                vec![0.001, 0.01]
            } else {
                a.v2.clone()
            };
            v1.iter()
                .flat_map(|&s| {
                    v2.iter()
                        .map(move |&t| Hyperparameters::Ssvs(SsvsHyper::homogeneous(s, t)))
                })
                .collect()
        }
        ModelKind::Ridge if !a.lambda.is_empty() => a
            .lambda
            .iter()
            .map(|&lambda| Hyperparameters::Ridge { lambda })
            .collect(),
        _ => diagnostics::default_grid(model),
    }
}

/// Reads the named columns of a CSV with a header row.
fn read_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("not a number: {:?}", field),
            })?;
            cols[j].push(v);
        }
    }
    Ok(headers.into_iter().zip(cols).filter(|(h, _)| h != "iter").collect())
}

#[derive(Serialize)]
struct SeriesSummary {
    name: String,
    source: String,
    len: usize,
    mean: f64,
    sd: f64,
    acf_lag1: f64,
    geweke_z: f64,
}

fn diagnose(a: &DiagnoseArgs) -> Result<Outcome> {
    let sources: Vec<PathBuf> = if a.chain.join("states").is_dir() {
        vec![a.chain.join("states/variances.csv"), a.chain.join("states/w.csv")]
    } else {
        vec![a.chain.join("chain.csv")]
    };
    let mut summaries = Vec::new();
    for src in &sources {
        for (name, values) in read_columns(src)? {
            require(
                values.len() > a.max_lag,
                format!(
                    "series {} has {} values, need more than --max-lag {}",
                    name,
                    values.len(),
                    a.max_lag
                ),
            )?;
            let acf = diagnostics::autocorrelation(&values, a.max_lag)?;
            let z = diagnostics::geweke_z(&values, a.first_frac, a.last_frac)?;
            write_series_csv(
                &a.common.out.join(format!("trace_{}.csv", name)),
                ("iter", "value"),
                &values,
                0,
            )?;
            write_series_csv(
                &a.common.out.join(format!("acf_{}.csv", name)),
                ("lag", "value"),
                &acf,
                0,
            )?;
            let stats = diagnostics::MeanSd::of(&values);
            summaries.push(SeriesSummary {
                name,
                source: src
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                len: values.len(),
                mean: stats.mean,
                sd: stats.sd,
                acf_lag1: acf.get(1).copied().unwrap_or(0.0),
                geweke_z: z,
            });
        }
    }
    write_json(&a.common.out.join("diagnostics.json"), &summaries)?;
    let worst = summaries.iter().map(|s| s.geweke_z.abs()).fold(0.0, f64::max);
    Ok((
        format!(
            "diagnose: {} series, max |Geweke z| {:.2} -> {}",
            summaries.len(),
            worst,
            a.common.out.display()
        ),
        serde_json::Value::Null,
    ))
}
