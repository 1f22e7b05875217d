use kt_career::classify::{ClassifierSpec, Family, GbdtParams, LdaSolver, Penalty};
use kt_career::eval::{
    auc, average_precision, default_grid, grid_search, rfe, stratified_kfold, EvalReport,
    ReportRow,
};
use kt_career::matrix::Matrix;
use kt_career::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn schema(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Labels driven by the first `informative` columns; the rest are noise.
fn planted(n: usize, d: usize, informative: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signal: f64 = r[..informative].iter().sum();
        y.push(signal + 0.3 * rng.random_range(-1.0..1.0) > 0.0);
        rows.push(r);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn singleton_grid_returns_its_spec() {
    let (x, y) = planted(80, 3, 2, 1);
    let spec = ClassifierSpec::Lda {
        solver: LdaSolver::Svd,
    };
    let search = grid_search(&[spec], &schema(3), &x, &y, 5, 0).unwrap();
    assert_eq!(search.best_spec(), spec);
    assert_eq!(search.results.len(), 1);
}

#[test]
fn informative_spec_beats_a_penalty_dominated_one() {
    let (x, y) = planted(120, 4, 2, 2);
    let grid = [
        ClassifierSpec::Lr {
            c: 1e-4,
            penalty: Penalty::L1,
        },
        ClassifierSpec::Lr {
            c: 1.0,
            penalty: Penalty::L2,
        },
    ];
    let search = grid_search(&grid, &schema(4), &x, &y, 5, 3).unwrap();
    assert_eq!(search.best, 1);
    assert_eq!(search.results.len(), 2);
    assert_eq!(search.results[0].test.auc.mean, 0.5);
}

#[test]
fn permuted_grid_reaches_the_same_best_score() {
    let (x, y) = planted(100, 3, 1, 4);
    let grid = default_grid(Family::Lr);
    let mut reversed = grid.clone();
    reversed.reverse();
    let a = grid_search(&grid, &schema(3), &x, &y, 5, 5).unwrap();
    let b = grid_search(&reversed, &schema(3), &x, &y, 5, 5).unwrap();
    assert_eq!(
        a.best_result().test.combined.mean,
        b.best_result().test.combined.mean
    );
}

#[test]
fn failing_grid_point_is_named_in_the_error() {
    let (x, y) = planted(50, 2, 1, 6);
    let grid = [
        ClassifierSpec::Lda {
            solver: LdaSolver::Svd,
        },
        ClassifierSpec::Gbdt(GbdtParams {
            n_trees: 0,
            max_depth: 2,
            min_samples_leaf: 1,
            learning_rate: 0.1,
        }),
    ];
    let err = grid_search(&grid, &schema(2), &x, &y, 5, 0).unwrap_err();
    let Error::GridPoint { index, spec, .. } = &err else {
        panic!("{err}")
    };
    assert_eq!(*index, 1);
    assert!(spec.starts_with("GBDT(trees=0"));
}

#[test]
fn pure_noise_feature_is_eliminated_first_in_most_seeds() {
    let spec = ClassifierSpec::Lr {
        c: 1.0,
        penalty: Penalty::L2,
    };
    let mut hits = 0;
    for seed in 0..9 {
        let (x, y) = planted(150, 3, 2, 100 + seed);
        let result = rfe(&spec, &schema(3), &x, &y, &[1, 3], 5, seed).unwrap();
        hits += usize::from(result.elimination_order[0] == 2);
    }
    assert!(hits >= 7, "{hits}/9");
}

#[test]
fn full_size_target_keeps_every_feature() {
    let (x, y) = planted(60, 4, 2, 7);
    let spec = ClassifierSpec::Lda {
        solver: LdaSolver::Svd,
    };
    let result = rfe(&spec, &schema(4), &x, &y, &[4], 5, 0).unwrap();
    assert_eq!(result.best_subset().features, vec![0, 1, 2, 3]);
    assert!(result.elimination_order.is_empty());
}

#[test]
fn elimination_is_refused_for_the_kernel_machine() {
    let (x, y) = planted(40, 3, 1, 8);
    let spec = ClassifierSpec::Svm { c: 1.0, gamma: None };
    assert!(matches!(
        rfe(&spec, &schema(3), &x, &y, &[2], 5, 0),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn report_lists_train_and_test_lines() {
    let (x, y) = planted(60, 2, 1, 9);
    let search = grid_search(&default_grid(Family::Lda), &schema(2), &x, &y, 5, 0).unwrap();
    let best = search.best_result();
    let report = EvalReport {
        rows: vec![ReportRow {
            model: Family::Lda,
            features: "SP".into(),
            spec: best.spec,
            train: best.train,
            test: best.test,
            nested_test: None,
            selected: None,
        }],
    };
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("model,features,split,ap_mean"));
    assert!(lines[1].starts_with("LDA,SP,train,"));
    assert!(lines[2].starts_with("LDA,SP,test,"));
}

#[test]
fn average_precision_can_fall_below_the_base_rate() {
    // Both positives ranked last: AP = ½·⅓ + ½·½ < ½.
    let ap = average_precision(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap();
    assert!((ap - 5.0 / 12.0).abs() < 1e-15);
}

#[test]
fn random_scores_give_average_precision_near_the_base_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let labels: Vec<bool> = (0..2000).map(|i| i % 4 == 0).collect();
    let mean: f64 = (0..50)
        .map(|_| {
            let s: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
            average_precision(&s, &labels).unwrap()
        })
        .sum::<f64>()
        / 50.0;
    assert!((mean - 0.25).abs() < 0.01, "{mean}");
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..50),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&transformed, &labels).unwrap());
    }

    #[test]
    fn folds_partition_and_stay_balanced(
        labels in prop::collection::vec(any::<bool>(), 10..120),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos >= k && labels.len() - pos >= k);
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), labels.len());
        for f in 0..k {
            let size = folds.iter().filter(|&&a| a == f).count() as f64;
            let p = (0..labels.len()).filter(|&i| folds[i] == f && labels[i]).count() as f64;
            prop_assert!((p - pos as f64 / k as f64).abs() < 1.0);
            prop_assert!((size - labels.len() as f64 / k as f64).abs() < 1.0);
        }
    }
}
