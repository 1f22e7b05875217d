use kt_career::analysis::{
    lda_project_1d, nlg, nlg_comparison, one_tailed_mean_test, skill_ttest_map, t_cdf,
    t_quantile, t_test, t_two_sided_p, ClassHistogram, NLG_WINDOW,
};
use kt_career::cohort::{generate_cohort, CohortConfig};
use kt_career::matrix::Matrix;
use kt_career::state::KnowledgeStateSequence;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[test]
fn textbook_pooled_t_test() {
    // Means 2 and 5, both sample variances 1, pooled sd 1, se = √(2/3).
    let r = t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let t = -3.0 / (2.0f64 / 3.0).sqrt();
    assert!((r.t_score - t).abs() < 1e-12);
    assert_eq!(r.cohens_d, -3.0);
    let oracle = StudentsT::new(0.0, 1.0, 4.0).unwrap();
    assert!((r.p_value - 2.0 * oracle.cdf(t)).abs() < 1e-12);
}

#[test]
fn t_distribution_matches_an_independent_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let df = rng.random_range(1.0..200.0);
        let t = rng.random_range(-8.0..8.0);
        let oracle = StudentsT::new(0.0, 1.0, df).unwrap();
        assert!((t_cdf(t, df) - oracle.cdf(t)).abs() < 1e-10, "t={t} df={df}");
    }
}

#[test]
fn tabulated_critical_values() {
    for (df, critical) in [(5.0, 2.570582), (10.0, 2.228139), (30.0, 2.042272)] {
        assert!((t_quantile(0.975, df) - critical).abs() < 1e-6, "{df}");
        assert!((t_two_sided_p(critical, df) - 0.05).abs() < 1e-6);
    }
}

#[test]
fn one_tailed_test_examples() {
    let a = [0.3, 0.9, 0.4, 0.7];
    assert!((one_tailed_mean_test(&a, &a).unwrap().p_value - 0.5).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sd = (b.iter().map(|v| v * v).sum::<f64>() / 49.0).sqrt();
    let shifted: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0) + 3.0 * sd).collect();
    let r = one_tailed_mean_test(&shifted, &b).unwrap();
    assert!(r.p_value < 1e-6 && r.welch_p_value < 1e-6);
    let two = t_test(&shifted, &b).unwrap().p_value;
    assert!((r.p_value - two / 2.0).abs() < 1e-15);
}

#[test]
fn skill_map_signs_favour_the_stem_group() {
    let stem = Matrix::from_rows(&[[0.5, 0.9, 0.1], [0.6, 0.8, 0.2], [0.4, 0.95, 0.15]]).unwrap();
    let other = Matrix::from_rows(&[[0.5, 0.3, 0.1], [0.6, 0.2, 0.2], [0.4, 0.25, 0.15]]).unwrap();
    let map = skill_ttest_map(&stem, &other).unwrap();
    assert_eq!(map.len(), 3);
    let t: Vec<f64> = map.iter().map(|s| s.test.unwrap().t_score).collect();
    assert_eq!((t[0], t[2]), (0.0, 0.0));
    assert!(t[1] < 0.0);
    for s in skill_ttest_map(&stem, &stem).unwrap() {
        assert_eq!(s.test.unwrap().t_score, 0.0);
    }
}

#[test]
fn projection_separates_one_dimensional_classes() {
    let x = Matrix::new(6, 1, vec![-1.0, -1.1, -0.9, 1.0, 1.1, 0.9]).unwrap();
    let y = [false, false, false, true, true, true];
    let p = lda_project_1d(&x, &y).unwrap();
    let max_neg = p.values[..3].iter().copied().fold(f64::MIN, f64::max);
    let min_pos = p.values[3..].iter().copied().fold(f64::MAX, f64::min);
    assert!(max_neg < min_pos);
}

#[test]
fn projection_ordering_survives_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<[f64; 3]> = (0..40)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let y: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * r[1] > 0.6).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let a = lda_project_1d(&x, &y).unwrap().values;
    let b = lda_project_1d(&x.map(|v| 10.0 * v), &y).unwrap().values;
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        idx
    };
    assert_eq!(order(&a), order(&b));
}

#[test]
fn histogram_has_thirty_bins_covering_the_range() {
    let v: Vec<f64> = (0..100).map(|i| i as f64 / 7.0).collect();
    let l: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
    let h = ClassHistogram::new(&v, &l, 30).unwrap();
    assert_eq!(h.edges.len(), 31);
    assert_eq!(h.positive.iter().sum::<usize>() + h.negative.iter().sum::<usize>(), 100);
    assert_eq!(h.edges[0], 0.0);
    assert!((h.edges[30] - 99.0 / 7.0).abs() < 1e-12);
}

#[test]
fn short_sequences_use_overlapping_windows() {
    let rows: Vec<Vec<f64>> = (0..12).map(|t| vec![0.2 + 0.05 * t as f64]).collect();
    let s = KnowledgeStateSequence::from_rows(rows).unwrap();
    // First ten steps average 0.425, last ten 0.525.
    let expected = (0.525 - 0.425) / (1.0 - 0.425);
    assert!((nlg(&s, NLG_WINDOW).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn palindromic_trajectory_has_zero_gain_both_ways() {
    let rows: Vec<Vec<f64>> = [0.2, 0.4, 0.6, 0.4, 0.2]
        .iter()
        .map(|&v| vec![v, v / 2.0])
        .collect();
    let mut reversed = rows.clone();
    reversed.reverse();
    let fwd = nlg(&KnowledgeStateSequence::from_rows(rows).unwrap(), 2).unwrap();
    let back = nlg(&KnowledgeStateSequence::from_rows(reversed).unwrap(), 2).unwrap();
    assert_eq!(fwd, 0.0);
    assert_eq!(back, 0.0);
}

#[test]
fn planted_ability_gap_shows_in_average_knowledge() {
    let cohort = generate_cohort(&CohortConfig {
        ability_gap: 0.1,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let (mut stem, mut other) = (Vec::new(), Vec::new());
    for p in &cohort.profiles {
        match p.label {
            Some(true) => stem.push(p.profile.ave_know),
            _ => other.push(p.profile.ave_know),
        }
    }
    let r = t_test(&stem, &other).unwrap();
    assert!(r.mean_a > r.mean_b && r.p_value < 0.05, "{r:?}");
}

#[test]
fn planted_learning_gap_raises_stem_gain() {
    let cohort = generate_cohort(&CohortConfig {
        learn_gap: 0.1,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let traj = cohort.bkt_trajectories().unwrap();
    let (mut stem, mut other) = (Vec::new(), Vec::new());
    for (t, p) in traj.iter().zip(&cohort.profiles) {
        let g = nlg(t, NLG_WINDOW).unwrap();
        if p.label == Some(true) {
            stem.push(g);
        } else {
            other.push(g);
        }
    }
    let r = nlg_comparison(&stem, &other).unwrap();
    assert!(r.test.pooled.mean_a > r.test.pooled.mean_b);
    assert!(r.test.p_value < 0.05);
}

proptest! {
    #[test]
    fn t_test_is_antisymmetric_and_shift_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 2..20),
        b in prop::collection::vec(-10.0f64..10.0, 2..20),
        shift in -100.0f64..100.0,
    ) {
        let ab = t_test(&a, &b).unwrap();
        let ba = t_test(&b, &a).unwrap();
        prop_assert!((ab.t_score + ba.t_score).abs() < 1e-9);
        prop_assert!((ab.cohens_d + ba.cohens_d).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert_eq!(ab.t_score.signum(), (ab.mean_a - ab.mean_b).signum());

        let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let sb: Vec<f64> = b.iter().map(|v| v + shift).collect();
        let s = t_test(&sa, &sb).unwrap();
        prop_assert!((s.t_score - ab.t_score).abs() < 1e-6 * (1.0 + ab.t_score.abs()));
        prop_assert!((s.cohens_d - ab.cohens_d).abs() < 1e-6 * (1.0 + ab.cohens_d.abs()));
        prop_assert!((s.std_a - ab.std_a).abs() < 1e-8);
    }

    #[test]
    fn projection_class_order_survives_affine_maps(
        seed in any::<u64>(),
        scale in prop::collection::vec(0.5f64..4.0, 2),
        offset in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i % 2 == 0;
            let c = if t { 1.0 } else { -1.0 };
            rows.push([c + rng.random_range(-1.0..1.0), 0.5 * c + rng.random_range(-1.0..1.0)]);
            y.push(t);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let mapped = Matrix::from_rows(
            &rows.iter().map(|r| [scale[0] * r[0] + offset[0] + 0.3 * r[1], scale[1] * r[1] + offset[1]])
                .collect::<Vec<_>>(),
        ).unwrap();
        let class_gap = |v: &[f64]| {
            let mean = |t: bool| {
                let s: Vec<f64> = v.iter().zip(&y).filter(|(_, &l)| l == t).map(|(v, _)| *v).collect();
                s.iter().sum::<f64>() / s.len() as f64
            };
            mean(true) - mean(false)
        };
        let a = class_gap(&lda_project_1d(&x, &y).unwrap().values);
        let b = class_gap(&lda_project_1d(&mapped, &y).unwrap().values);
        prop_assert!(a > 0.0 && b > 0.0);
    }
}
