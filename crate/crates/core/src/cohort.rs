//! Cohort data model: per-subject correlation matrices with named scalar
//! scores, manifest loading, synthetic generation and the scree spectrum.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_from_rows, matrix_rows, read_matrix_csv, write_json, write_matrix_csv, write_text};
use crate::linalg::{low_rank_product, orthonormalize, sym_eigen_desc};
use crate::stats::{standard_normal, standard_normal_matrix};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_REL_TOL: f64 = 1e-8;
const UNIT_TOL: f64 = 1e-9;

/// A symmetric positive-semidefinite P×P matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validates and wraps `values`. With `strict_diagonal` the correlation
    /// convention (unit diagonal, entries in [-1, 1]) is also enforced.
    pub fn new(values: DMatrix<f64>, strict_diagonal: bool) -> std::result::Result<Self, String> {
        let p = values.nrows();
        if p == 0 || values.ncols() != p {
            return Err(format!(
                "matrix is {}x{}, expected square",
                values.nrows(),
                values.ncols()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err("matrix has non-finite entries".into());
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if (values[(i, j)] - values[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(format!("not symmetric at ({}, {})", i, j));
                }
            }
        }
        if strict_diagonal {
            if let Some(i) = (0..p).find(|&i| (values[(i, i)] - 1.0).abs() > UNIT_TOL) {
                return Err(format!("diagonal entry {} is {}, expected 1", i, values[(i, i)]));
            }
            if values.iter().any(|v| v.abs() > 1.0 + UNIT_TOL) {
                return Err("entry outside [-1, 1]".into());
            }
        }
        let (eig, _) = sym_eigen_desc(&values);
        let max = eig[0].max(0.0);
        let min = eig[p - 1];
        if min < -PSD_REL_TOL * max {
            return Err(format!("not positive semidefinite (smallest eigenvalue {:e})", min));
        }
        Ok(Self { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub gamma: CorrelationMatrix,
    pub scores: BTreeMap<String, f64>,
}

/// N subjects sharing one region count.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    subjects: Vec<Subject>,
    p: usize,
}

impl Cohort {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::Config("cohort needs at least one subject".into()))?;
        let p = first.gamma.p();
        let mut seen = HashSet::new();
        for s in &subjects {
            if s.id.is_empty() {
                return Err(Error::validation("<unnamed>", "empty subject id"));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::validation(&s.id, "duplicate subject id"));
            }
            if s.gamma.p() != p {
                return Err(Error::Shape(format!(
                    "subject {} has p = {}, cohort has p = {}",
                    s.id,
                    s.gamma.p(),
                    p
                )));
            }
            if let Some((name, v)) = s.scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::validation(&s.id, format!("score {} is {}", name, v)));
            }
        }
        Ok(Self { subjects, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn matrices(&self) -> Vec<&DMatrix<f64>> {
        self.subjects.iter().map(|s| s.gamma.values()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.subjects.iter().map(|s| s.id.as_str()).collect()
    }

    /// Score column `name` in subject order.
    pub fn scores(&self, name: &str) -> Result<Vec<f64>> {
        self.subjects
            .iter()
            .map(|s| {
                s.scores
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::validation(&s.id, format!("no score named {:?}", name)))
            })
            .collect()
    }

    pub fn score_names(&self) -> Vec<String> {
        self.subjects[0].scores.keys().cloned().collect()
    }

    /// Sub-cohort with the given subject indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Cohort::new(indices.iter().map(|&i| self.subjects[i].clone()).collect())
    }

    /// Elementwise mean of the subject matrices.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.p, self.p);
        for s in &self.subjects {
            acc += s.gamma.values();
        }
        acc / self.n() as f64
    }
}

/// Loads a cohort from a manifest CSV (`subject_id,matrix_path,<scores>...`).
/// Matrix paths are resolved relative to the manifest's directory.
pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    load_cohort_with(manifest_path, true)
}

pub fn load_cohort_with(manifest_path: &Path, strict_diagonal: bool) -> Result<Cohort> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let parse_err = |message: String| Error::Parse {
        path: manifest_path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 || headers[0] != "subject_id" || headers[1] != "matrix_path" {
        return Err(parse_err("header must start with subject_id,matrix_path".into()));
    }
    let mut subjects = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let subject_id = record[0].trim().to_string();
        let mut scores = BTreeMap::new();
        for (name, raw) in headers.iter().zip(record.iter()).skip(2) {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::validation(&subject_id, format!("score {} = {:?} is not a number", name, raw)))?;
            if !v.is_finite() {
                return Err(Error::validation(&subject_id, format!("score {} is {}", name, v)));
            }
            scores.insert(name.clone(), v);
        }
        let mpath = resolve(base, record[1].trim());
        let values = read_matrix_csv(&mpath)?;
        if values.nrows() != values.ncols() {
            return Err(Error::Shape(format!(
                "subject {}: matrix {} is {}x{}",
                subject_id,
                mpath.display(),
                values.nrows(),
                values.ncols()
            )));
        }
        let gamma =
            CorrelationMatrix::new(values, strict_diagonal).map_err(|msg| Error::validation(&subject_id, msg))?;
        subjects.push(Subject {
            id: subject_id,
            gamma,
            scores,
        });
    }
    Cohort::new(subjects)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes `manifest.csv` plus `matrices/<id>.csv` under `dir`.
pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    let names = cohort.score_names();
    let mut manifest = String::from("subject_id,matrix_path");
    for n in &names {
        manifest.push(',');
        manifest.push_str(n);
    }
    manifest.push('\n');
    for s in cohort.subjects() {
        let rel = format!("matrices/{}.csv", s.id);
        write_matrix_csv(&dir.join(&rel), s.gamma.values())?;
        manifest.push_str(&s.id);
        manifest.push(',');
        manifest.push_str(&rel);
        for n in &names {
            manifest.push_str(&format!(",{}", s.scores[n]));
        }
        manifest.push('\n');
    }
    let path = dir.join("manifest.csv");
    write_text(&path, &manifest)?;
    Ok(path)
}

/// Score column name used by the synthetic generator.
pub const SYNTHETIC_SCORE: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub sigma_y: f64,
    /// Wishart degrees of freedom for the matrix noise; `None` gives exact
    /// low-rank matrices B diag(c) Bᵀ with no ridge or renormalisation.
    pub wishart_dof: Option<usize>,
    pub seed: u64,
}

/// Generator parameters kept alongside the synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGroundTruth {
    pub b_true: DMatrix<f64>,
    pub c_true: DMatrix<f64>,
    pub w_true: DVector<f64>,
    pub sigma_y: f64,
    pub wishart_dof: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    b_true: Vec<Vec<f64>>,
    c_true: Vec<Vec<f64>>,
    w_true: Vec<f64>,
    sigma_y: f64,
    wishart_dof: Option<usize>,
}

impl SyntheticGroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &GroundTruthFile {
                b_true: matrix_rows(&self.b_true),
                c_true: matrix_rows(&self.c_true),
                w_true: self.w_true.iter().copied().collect(),
                sigma_y: self.sigma_y,
                wishart_dof: self.wishart_dof,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: GroundTruthFile = crate::io::read_json(path)?;
        Ok(Self {
            b_true: matrix_from_rows(&f.b_true)?,
            c_true: matrix_from_rows(&f.c_true)?,
            w_true: DVector::from_vec(f.w_true),
            sigma_y: f.sigma_y,
            wishart_dof: f.wishart_dof,
        })
    }
}

/// Synthetic cohort with Wishart matrix noise around B diag(cₙ) Bᵀ + 0.1·I,
/// renormalised to unit diagonal.
pub fn generate_synthetic(
    p: usize,
    k: usize,
    n: usize,
    sigma_y: f64,
    wishart_dof: usize,
    seed: u64,
) -> Result<(Cohort, SyntheticGroundTruth)> {
    generate(&SyntheticSpec {
        p,
        k,
        n,
        sigma_y,
        wishart_dof: Some(wishart_dof),
        seed,
    })
}

/// Noise-free cohort Γₙ = B diag(cₙ) Bᵀ exactly, with y = Cᵀw.
pub fn generate_noiseless(p: usize, k: usize, n: usize, seed: u64) -> Result<(Cohort, SyntheticGroundTruth)> {
    generate(&SyntheticSpec {
        p,
        k,
        n,
        sigma_y: 0.0,
        wishart_dof: None,
        seed,
    })
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Cohort, SyntheticGroundTruth)> {
    let SyntheticSpec {
        p,
        k,
        n,
        sigma_y,
        wishart_dof,
        seed,
    } = *spec;
    if k == 0 || k >= p {
        return Err(Error::Config(format!("need 1 <= k < p, got k = {}, p = {}", k, p)));
    }
    if n == 0 {
        return Err(Error::Config("need n >= 1".into()));
    }
    if !(sigma_y >= 0.0) || !sigma_y.is_finite() {
        return Err(Error::Config(format!("sigma_y must be >= 0, got {}", sigma_y)));
    }
    if let Some(dof) = wishart_dof {
        if dof < p + 2 {
            return Err(Error::Config(format!(
                "wishart_dof must be >= p + 2 = {}, got {}",
                p + 2,
                dof
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b_true = orthonormalize(&standard_normal_matrix(&mut rng, p, k));
    let c_true = DMatrix::from_fn(k, n, |_, _| standard_normal(&mut rng).abs());
    let w_true = DVector::from_fn(k, |_, _| standard_normal(&mut rng));

    let mut subjects = Vec::with_capacity(n);
    for j in 0..n {
        let c: Vec<f64> = c_true.column(j).iter().copied().collect();
        let model = low_rank_product(&b_true, &c);
        let (values, strict) = match wishart_dof {
            None => (symmetrize(&model), false),
            Some(dof) => {
                let centre = model + DMatrix::<f64>::identity(p, p) * 0.1;
                (unit_diagonal(&wishart_draw(&mut rng, &centre, dof)?), true)
            }
        };
        let y_clean = c_true.column(j).dot(&w_true);
        let y = if sigma_y > 0.0 {
            y_clean + sigma_y * standard_normal(&mut rng)
        } else {
            y_clean
        };
        let id = format!("sub{:04}", j);
        let gamma = CorrelationMatrix::new(values, strict).map_err(|m| Error::validation(&id, m))?;
        let mut scores = BTreeMap::new();
        scores.insert(SYNTHETIC_SCORE.to_string(), y);
        subjects.push(Subject { id, gamma, scores });
    }
    let cohort = Cohort::new(subjects)?;
    Ok((
        cohort,
        SyntheticGroundTruth {
            b_true,
            c_true,
            w_true,
            sigma_y,
            wishart_dof,
        },
    ))
}

/// W ~ Wishart(dof, centre/dof), so E[W] = centre. Integer dof lets us sum
/// outer products of Gaussian draws directly.
fn wishart_draw(rng: &mut ChaCha8Rng, centre: &DMatrix<f64>, dof: usize) -> Result<DMatrix<f64>> {
    let p = centre.nrows();
    let chol = (centre / dof as f64)
        .cholesky()
        .ok_or_else(|| Error::Numerical("Wishart centre is not positive definite".into()))?;
    let l = chol.l();
    let mut acc = DMatrix::zeros(p, p);
    for _ in 0..dof {
        let z = DVector::from_fn(p, |_, _| standard_normal(rng));
        let x = &l * z;
        acc += &x * x.transpose();
    }
    Ok(symmetrize(&acc))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn unit_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    let d: Vec<f64> = (0..p).map(|i| m[(i, i)].sqrt()).collect();
    let mut out = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (d[i] * d[j]));
    for i in 0..p {
        out[(i, i)] = 1.0;
    }
    symmetrize(&out)
}

/// Eigenvalues of the cohort mean matrix, largest first.
pub fn scree_eigenvalues(cohort: &Cohort) -> Vec<f64> {
    let (vals, _) = sym_eigen_desc(&cohort.mean_matrix());
    vals.iter().copied().collect()
}
