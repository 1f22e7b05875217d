use kt_career::classify::{
    ClassifierSpec, Coefficients, FittedModel, GbdtParams, LdaSolver, Logistic, Penalty,
    TrainedClassifier,
};
use kt_career::features::FeatureMatrix;
use kt_career::matrix::Matrix;
use kt_career::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn schema(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Two Gaussian blobs centred at ±`sep` along every axis.
fn blobs(n: usize, d: usize, sep: f64, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let t = i % 2 == 0;
        let centre = if t { sep } else { -sep };
        rows.push((0..d).map(|_| centre + noise.sample(&mut rng)).collect::<Vec<_>>());
        y.push(t);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn every_family() -> Vec<ClassifierSpec> {
    vec![
        ClassifierSpec::Gbdt(GbdtParams {
            n_trees: 25,
            max_depth: 3,
            min_samples_leaf: 2,
            learning_rate: 0.1,
        }),
        ClassifierSpec::Lda {
            solver: LdaSolver::Svd,
        },
        ClassifierSpec::Lr {
            c: 1.0,
            penalty: Penalty::L2,
        },
        ClassifierSpec::Lr {
            c: 1.0,
            penalty: Penalty::L1,
        },
        ClassifierSpec::Svm { c: 1.0, gamma: None },
    ]
}

fn accuracy(model: &TrainedClassifier, x: &Matrix, y: &[bool]) -> f64 {
    let pred = model.predict(x).unwrap();
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn separated_blobs_are_learned_by_every_family() {
    let (x, y) = blobs(120, 3, 2.0, 1);
    for spec in every_family() {
        let m = TrainedClassifier::fit(&spec, &schema(3), &x, &y).unwrap();
        let acc = accuracy(&m, &x, &y);
        assert!(acc >= 0.95, "{spec}: {acc}");
    }
}

#[test]
fn vanishing_l2_strength_predicts_the_prior() {
    let (x, y) = blobs(100, 4, 1.0, 2);
    let spec = ClassifierSpec::Lr {
        c: 1e-9,
        penalty: Penalty::L2,
    };
    let m = TrainedClassifier::fit(&spec, &schema(4), &x, &y).unwrap();
    let Coefficients::Linear(w) = m.coefficients() else {
        panic!("linear model")
    };
    assert!(w.iter().all(|v| v.abs() < 1e-6), "{w:?}");
    for p in m.predict_proba_matrix(&x).unwrap() {
        assert!((p - 0.5).abs() < 1e-6);
    }
}

#[test]
fn lda_solvers_agree_on_full_rank_data() {
    let (x, y) = blobs(90, 5, 0.5, 3);
    let fitted: Vec<_> = [LdaSolver::Svd, LdaSolver::Lsqr, LdaSolver::Eigen]
        .iter()
        .map(|&solver| {
            TrainedClassifier::fit(&ClassifierSpec::Lda { solver }, &schema(5), &x, &y).unwrap()
        })
        .collect();
    let scores: Vec<Vec<f64>> = fitted.iter().map(|m| m.decision_function(&x).unwrap()).collect();
    let labels: Vec<Vec<bool>> = fitted.iter().map(|m| m.predict(&x).unwrap()).collect();
    for k in 1..3 {
        assert_eq!(labels[0], labels[k]);
        for (a, b) in scores[0].iter().zip(&scores[k]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_logistic_model_outputs_one_half() {
    let m = TrainedClassifier {
        spec: ClassifierSpec::Lr {
            c: 1.0,
            penalty: Penalty::L2,
        },
        schema: schema(2),
        standardizer: None,
        model: FittedModel::Lr(Logistic {
            coef: vec![0.0, 0.0],
            intercept: 0.0,
            iterations: 0,
            converged: true,
        }),
    };
    let x = Matrix::from_rows(&[[3.0, -1.0], [100.0, 7.0]]).unwrap();
    assert_eq!(m.predict_proba_matrix(&x).unwrap(), vec![0.5, 0.5]);
    assert_eq!(m.predict(&x).unwrap(), vec![false, false]);
}

#[test]
fn gbdt_training_loss_never_increases() {
    let (x, y) = blobs(150, 4, 0.4, 4);
    let spec = ClassifierSpec::Gbdt(GbdtParams {
        n_trees: 120,
        max_depth: 5,
        min_samples_leaf: 1,
        learning_rate: 0.1,
    });
    let m = TrainedClassifier::fit(&spec, &schema(4), &x, &y).unwrap();
    let FittedModel::Gbdt(g) = &m.model else {
        panic!()
    };
    assert_eq!(g.train_loss.len(), 121);
    for w in g.train_loss.windows(2) {
        assert!(w[1] <= w[0], "{w:?}");
    }
    let zero = g.truncated(0);
    let rate = y.iter().filter(|&&t| t).count() as f64 / y.len() as f64;
    let p0 = 1.0 / (1.0 + (-zero.decision(x.row(0))).exp());
    assert!((p0 - rate).abs() < 1e-12);
    let Coefficients::Importances(imp) = m.coefficients() else {
        panic!()
    };
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn svm_probabilities_are_monotone_in_the_decision_value() {
    let (x, y) = blobs(80, 2, 0.7, 5);
    let m = TrainedClassifier::fit(&ClassifierSpec::Svm { c: 1.0, gamma: None }, &schema(2), &x, &y)
        .unwrap();
    let FittedModel::Svm(svm) = &m.model else {
        panic!()
    };
    assert!(svm.machine.kkt_gap < 1e-3);
    let f = m.decision_function(&x).unwrap();
    let p = m.predict_proba_matrix(&x).unwrap();
    let mut idx: Vec<usize> = (0..f.len()).collect();
    idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
    for w in idx.windows(2) {
        assert!(p[w[0]] <= p[w[1]]);
    }
    assert_eq!(m.coefficients(), Coefficients::Unsupported);
}

#[test]
fn l1_logistic_finds_the_single_informative_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..200 {
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        y.push(r[3] + 0.2 * rng.random_range(-1.0..1.0) > 0.0);
        rows.push(r);
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let spec = ClassifierSpec::Lr {
        c: 100.0,
        penalty: Penalty::L1,
    };
    let m = TrainedClassifier::fit(&spec, &schema(6), &x, &y).unwrap();
    let mags = m.coefficients().magnitudes().unwrap();
    let top = (0..6).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    assert_eq!(top, 3);
}

#[test]
fn lda_reports_one_coefficient_per_feature() {
    let (x, y) = blobs(40, 7, 1.0, 7);
    let m = TrainedClassifier::fit(&ClassifierSpec::Lda { solver: LdaSolver::Eigen }, &schema(7), &x, &y)
        .unwrap();
    assert_eq!(m.coefficients().magnitudes().unwrap().len(), 7);
}

#[test]
fn duplicating_samples_keeps_lda_and_scaled_lr_decisions() {
    let (x, y) = blobs(60, 3, 0.6, 8);
    let idx: Vec<usize> = (0..60).chain(0..60).collect();
    let x2 = x.select_rows(&idx);
    let y2: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
    let grid = Matrix::from_rows(
        &(0..25)
            .map(|k| [(k % 5) as f64 - 2.0, (k / 5) as f64 - 2.0, 0.3])
            .collect::<Vec<_>>(),
    )
    .unwrap();

    let lda = ClassifierSpec::Lda {
        solver: LdaSolver::Svd,
    };
    let a = TrainedClassifier::fit(&lda, &schema(3), &x, &y).unwrap();
    let b = TrainedClassifier::fit(&lda, &schema(3), &x2, &y2).unwrap();
    assert_eq!(a.predict(&grid).unwrap(), b.predict(&grid).unwrap());

    for penalty in [Penalty::L1, Penalty::L2] {
        let one = ClassifierSpec::Lr { c: 0.5, penalty };
        let half = ClassifierSpec::Lr { c: 0.25, penalty };
        let a = TrainedClassifier::fit(&one, &schema(3), &x, &y).unwrap();
        let b = TrainedClassifier::fit(&half, &schema(3), &x2, &y2).unwrap();
        assert_eq!(a.predict(&grid).unwrap(), b.predict(&grid).unwrap());
        for (p, q) in a
            .decision_function(&grid)
            .unwrap()
            .iter()
            .zip(b.decision_function(&grid).unwrap())
        {
            assert!((p - q).abs() < 1e-6, "{penalty:?}: {p} vs {q}");
        }
    }
}

#[test]
fn save_and_load_round_trip_every_family() {
    let (x, y) = blobs(50, 2, 1.0, 9);
    for spec in every_family() {
        let m = TrainedClassifier::fit(&spec, &schema(2), &x, &y).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = TrainedClassifier::load(buf.as_slice()).unwrap();
        assert_eq!(back, m, "{spec}");
        assert_eq!(
            back.predict_proba_matrix(&x).unwrap(),
            m.predict_proba_matrix(&x).unwrap()
        );
    }
}

#[test]
fn schema_mismatch_names_both_schemas() {
    let (x, y) = blobs(30, 2, 1.0, 10);
    let m = TrainedClassifier::fit(&ClassifierSpec::Lda { solver: LdaSolver::Svd }, &schema(2), &x, &y)
        .unwrap();
    let table = FeatureMatrix {
        schema: vec!["f1".into(), "f0".into()],
        x,
        labels: y,
    };
    let err = m.predict_proba(&table).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch { .. }));
    assert!(err.to_string().contains("f0,f1"));
}

#[test]
fn single_class_labels_are_rejected() {
    let (x, _) = blobs(10, 2, 1.0, 11);
    for spec in every_family() {
        let err = TrainedClassifier::fit(&spec, &schema(2), &x, &[true; 10]).unwrap_err();
        assert!(matches!(err, Error::DegenerateLabels(_)), "{spec}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn probabilities_stay_in_the_unit_interval(
        values in prop::collection::vec(-1e3f64..1e3, 24),
        flips in prop::collection::vec(any::<bool>(), 12),
        probe in prop::collection::vec(-1e6f64..1e6, 2),
    ) {
        let x = Matrix::new(12, 2, values).unwrap();
        let mut y = flips;
        y[0] = true;
        y[1] = false;
        for spec in every_family() {
            let m = TrainedClassifier::fit(&spec, &schema(2), &x, &y).unwrap();
            let probe = Matrix::new(1, 2, probe.clone()).unwrap();
            for p in m.predict_proba_matrix(&x).unwrap().into_iter()
                .chain(m.predict_proba_matrix(&probe).unwrap())
            {
                prop_assert!(p.is_finite() && (0.0..=1.0).contains(&p), "{spec}: {p}");
            }
        }
    }
}
