use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use proptest::prelude::*;

use cpcbayes::cohort::{self, Cohort, CorrelationMatrix, Subject};
use cpcbayes::Error;

fn write(path: &Path, text: &str) {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).unwrap();
    }
    fs::write(path, text).unwrap();
}

fn identity_csv(p: usize) -> String {
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if i == j { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn loads_two_identity_subjects() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("m/a.csv"), &identity_csv(4));
    write(&dir.path().join("m/b.csv"), &identity_csv(4));
    write(
        &dir.path().join("manifest.csv"),
        "subject_id,matrix_path,ados\nA,m/a.csv,1.0\nB,m/b.csv,2.0\n",
    );
    let c = cohort::load_cohort(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!((c.n(), c.p()), (2, 4));
    assert_eq!(c.scores("ados").unwrap(), vec![1.0, 2.0]);
    assert_eq!(c.ids(), vec!["A", "B"]);
}

#[test]
fn load_errors_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");

    assert!(matches!(
        cohort::load_cohort(&dir.path().join("absent.csv")),
        Err(Error::Io { .. })
    ));

    write(&dir.path().join("wide.csv"), "1,0,0,0\n0,1,0,0\n0,0,1,0");
    write(&manifest, "subject_id,matrix_path,s\nA,wide.csv,1\n");
    assert!(matches!(cohort::load_cohort(&manifest), Err(Error::Shape(_))));

    write(&dir.path().join("i4.csv"), &identity_csv(4));
    write(&manifest, "subject_id,matrix_path,s\nA,i4.csv,NaN\n");
    match cohort::load_cohort(&manifest) {
        Err(Error::Validation { subject, .. }) => assert_eq!(subject, "A"),
        other => panic!("expected a validation error, got {:?}", other),
    }

    write(
        &dir.path().join("missing_matrix.csv"),
        "subject_id,matrix_path,s\nA,nope.csv,1\n",
    );
    assert!(matches!(
        cohort::load_cohort(&dir.path().join("missing_matrix.csv")),
        Err(Error::Io { .. })
    ));

    write(&dir.path().join("i3.csv"), &identity_csv(3));
    write(&manifest, "subject_id,matrix_path,s\nA,i4.csv,1\nB,i3.csv,1\n");
    assert!(matches!(cohort::load_cohort(&manifest), Err(Error::Shape(_))));

    write(&dir.path().join("asym.csv"), "1,0.5\n0.2,1");
    write(&manifest, "subject_id,matrix_path,s\nX,asym.csv,1\n");
    match cohort::load_cohort(&manifest) {
        Err(Error::Validation { subject, message }) => {
            assert_eq!(subject, "X");
            assert!(message.contains("symmetric"));
        }
        other => panic!("expected a validation error, got {:?}", other),
    }

    write(&manifest, "subject_id,matrix_path,s\nA,i4.csv,1\nA,i4.csv,2\n");
    assert!(matches!(cohort::load_cohort(&manifest), Err(Error::Validation { .. })));
}

#[test]
fn relaxed_loading_accepts_scaled_matrices() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("a.csv"), "2,0\n0,3");
    write(
        &dir.path().join("manifest.csv"),
        "subject_id,matrix_path,s\nA,a.csv,1\n",
    );
    let manifest = dir.path().join("manifest.csv");
    assert!(matches!(cohort::load_cohort(&manifest), Err(Error::Validation { .. })));
    assert_eq!(cohort::load_cohort_with(&manifest, false).unwrap().p(), 2);
}

#[test]
fn small_synthetic_has_exact_scores() {
    let (c, truth) = cohort::generate_synthetic(4, 2, 3, 0.0, 6, 7).unwrap();
    assert_eq!((c.n(), c.p()), (3, 4));
    let y = c.scores(cohort::SYNTHETIC_SCORE).unwrap();
    for (n, yn) in y.iter().enumerate() {
        let expected = truth.c_true.column(n).dot(&truth.w_true);
        assert!((yn - expected).abs() < 1e-12);
    }
    for g in c.matrices() {
        assert!(CorrelationMatrix::new(g.clone(), true).is_ok());
    }
    assert!((truth.b_true.transpose() * &truth.b_true - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    assert!(truth.c_true.iter().all(|v| *v >= 0.0));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let a = cohort::generate_synthetic(6, 2, 5, 0.3, 10, 99).unwrap();
    let b = cohort::generate_synthetic(6, 2, 5, 0.3, 10, 99).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let c = cohort::generate_synthetic(6, 2, 5, 0.3, 10, 100).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn synthetic_parameter_errors() {
    assert!(matches!(
        cohort::generate_synthetic(4, 4, 3, 0.0, 6, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        cohort::generate_synthetic(4, 2, 3, 0.0, 5, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        cohort::generate_synthetic(4, 2, 3, -1.0, 6, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn desk_scale_cohort_has_three_dominant_eigenvalues() {
    let (c, _) = cohort::generate_synthetic(12, 3, 40, 0.5, 30, 1).unwrap();
    let eig = cohort::scree_eigenvalues(&c);
    assert_eq!(eig.len(), 12);
    assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    assert!(eig[2] > 2.0 * eig[3], "spectrum {:?}", eig);
    let trace = c.mean_matrix().trace();
    assert!((eig.iter().sum::<f64>() - trace).abs() <= 1e-8 * trace);
}

#[test]
fn scree_of_identity_cohort() {
    let subject = |id: &str| Subject {
        id: id.into(),
        gamma: CorrelationMatrix::new(DMatrix::identity(4, 4), true).unwrap(),
        scores: BTreeMap::new(),
    };
    let c = Cohort::new(vec![subject("a"), subject("b")]).unwrap();
    let eig = cohort::scree_eigenvalues(&c);
    assert!(eig.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

/// Cyclic Jacobi eigenvalue iteration.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let p = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-24 {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if a[(i, j)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * a[(i, j)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut r = DMatrix::<f64>::identity(p, p);
                r[(i, i)] = c;
                r[(j, j)] = c;
                r[(i, j)] = s;
                r[(j, i)] = -s;
                a = r.transpose() * &a * &r;
            }
        }
    }
    let mut d: Vec<f64> = (0..p).map(|i| a[(i, i)]).collect();
    d.sort_by(|x, y| y.partial_cmp(x).unwrap());
    d
}

#[test]
fn scree_matches_independent_eigensolver() {
    let v: [f64; 5] = [0.9, -0.4, 0.3, 0.7, -0.2];
    let raw = DMatrix::from_fn(5, 5, |i, j| v[i] * v[j] + if i == j { 1.0 } else { 0.0 });
    let d: Vec<f64> = (0..5).map(|i| raw[(i, i)].sqrt()).collect();
    let mut g = DMatrix::from_fn(5, 5, |i, j| raw[(i, j)] / (d[i] * d[j]));
    for i in 0..5 {
        g[(i, i)] = 1.0;
    }
    let c = Cohort::new(vec![Subject {
        id: "only".into(),
        gamma: CorrelationMatrix::new(g.clone(), true).unwrap(),
        scores: BTreeMap::new(),
    }])
    .unwrap();
    let ours = cohort::scree_eigenvalues(&c);
    let oracle = jacobi_eigenvalues(g);
    for (a, b) in ours.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10, "{:?} vs {:?}", ours, oracle);
    }
}

fn correlation_from(raw: &[f64], p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(p, p, &raw[..p * p]);
    let s = &a * a.transpose() + DMatrix::<f64>::identity(p, p) * 0.05;
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    let mut m = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (d[i] * d[j]));
    for i in 0..p {
        m[(i, i)] = 1.0;
    }
    (&m + m.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_then_load_round_trips(
        p in 2usize..6,
        raw in prop::collection::vec(-1.0f64..1.0, 3 * 36),
        scores in prop::collection::vec(-1e6f64..1e6, 3),
    ) {
        let subjects: Vec<Subject> = (0..3)
            .map(|i| Subject {
                id: format!("s{}", i),
                gamma: CorrelationMatrix::new(correlation_from(&raw[i * 36..], p), true).unwrap(),
                scores: BTreeMap::from([("score".to_string(), scores[i])]),
            })
            .collect();
        let original = Cohort::new(subjects).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = cohort::write_cohort(&original, dir.path()).unwrap();
        let loaded = cohort::load_cohort(&manifest).unwrap();
        prop_assert_eq!(loaded.ids(), original.ids());
        prop_assert_eq!(loaded.scores("score").unwrap(), original.scores("score").unwrap());
        for (a, b) in loaded.matrices().iter().zip(original.matrices()) {
            prop_assert!((*a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn generator_output_satisfies_invariants(seed in 0u64..1000, k in 1usize..4) {
        let (c, truth) = cohort::generate_synthetic(6, k, 4, 0.2, 8, seed).unwrap();
        prop_assert!((truth.b_true.transpose() * &truth.b_true - DMatrix::<f64>::identity(k, k)).amax() <= 1e-10);
        prop_assert!(truth.c_true.iter().all(|v| *v >= 0.0));
        let eig = cohort::scree_eigenvalues(&c);
        prop_assert!(eig.iter().all(|v| *v >= -1e-8 * eig[0]));
    }
}
