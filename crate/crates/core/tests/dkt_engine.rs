use kt_career::cohort::{generate_cohort, CohortConfig};
use kt_career::data::StudentSequence;
use kt_career::dkt::{
    batch_gradient, forward, gradient_check, loss_total, train, DktParams, Dropout, Lambdas,
    LossBatch, Optimizer, TrainConfig,
};
use kt_career::state::KnowledgeStateSequence;
use kt_career::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequence(rng: &mut ChaCha8Rng, m: usize, len: usize, id: &str) -> StudentSequence {
    StudentSequence::from_pairs(
        id,
        (0..len).map(|_| (rng.random_range(0..m), rng.random_bool(0.5))),
    )
    .unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let batch = vec![
        random_sequence(&mut rng, 3, 4, "a"),
        random_sequence(&mut rng, 3, 3, "b"),
    ];
    let params = DktParams::init(3, 4, 0.5, 3).unwrap();
    for lambdas in [Lambdas::NONE, Lambdas::DKT_PLUS] {
        let check = gradient_check(&params, &batch, lambdas, 1e-5).unwrap();
        println!("{lambdas:?}: {check:?}");
        assert!(check.max_relative_error < 1e-4, "{check:?}");
    }
}

#[test]
fn gradient_check_needs_a_next_step_term() {
    let params = DktParams::init(2, 3, 0.5, 1).unwrap();
    let batch = vec![StudentSequence::from_pairs("a", [(0, true)]).unwrap()];
    assert!(matches!(
        gradient_check(&params, &batch, Lambdas::NONE, 1e-5),
        Err(Error::UndefinedLoss)
    ));
}

#[test]
fn loss_total_reduces_to_prediction_loss_without_lambdas() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seqs: Vec<_> = (0..4).map(|i| random_sequence(&mut rng, 4, 6, &i.to_string())).collect();
    let params = DktParams::init(4, 6, 0.4, 2).unwrap();
    let states: Vec<KnowledgeStateSequence> =
        seqs.iter().map(|s| forward(&params, s, Dropout::Off).unwrap()).collect();
    let t = loss_total(&states, &seqs, Lambdas::NONE).unwrap();
    assert_eq!(t.total, t.prediction);
    assert!(t.prediction > 0.0 && t.reconstruction > 0.0 && t.w1 > 0.0);
}

#[test]
fn clipped_gradient_norm_never_exceeds_threshold() {
    let cohort = generate_cohort(&CohortConfig {
        n_students: 50,
        n_skills: 5,
        min_len: 10,
        max_len: 40,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig {
        hidden: 16,
        max_epochs: 20,
        patience: 100,
        batch_size: 8,
        learning_rate: 1.0,
        clip_norm: 3.0,
        init_std: 3.0,
        ..TrainConfig::default()
    };
    let (_, log) = train(&cohort.sequences, 5, &config).unwrap();
    assert!(log.grad_norms.iter().any(|&(before, _)| before > 3.0));
    for &(_, after) in &log.grad_norms {
        assert!(after <= 3.0 + 1e-9, "{after}");
    }
}

#[test]
fn training_lowers_prediction_loss_and_is_deterministic() {
    let cohort = generate_cohort(&CohortConfig {
        n_students: 50,
        n_skills: 5,
        min_len: 20,
        max_len: 60,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig {
        hidden: 16,
        max_epochs: 20,
        patience: 100,
        batch_size: 10,
        optimizer: Optimizer::Adam,
        ..TrainConfig::dkt()
    };
    let (model, log) = train(&cohort.sequences, 5, &config).unwrap();
    let first = log.epochs[0].terms.prediction;
    let last = log.epochs.last().unwrap().terms.prediction;
    assert_eq!(log.epochs.len(), 21);
    assert!(last < first, "{first} -> {last}");

    let (again, log2) = train(&cohort.sequences, 5, &config).unwrap();
    assert_eq!(model, again);
    assert_eq!(log, log2);
}

#[test]
fn batch_gradient_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seqs: Vec<_> = (0..16).map(|i| random_sequence(&mut rng, 4, 30, &i.to_string())).collect();
    let refs: Vec<_> = seqs.iter().collect();
    let params = DktParams::init(4, 8, 0.2, 4).unwrap();
    let (a, _) = batch_gradient(&params, &refs, Lambdas::DKT_PLUS, Some((0.5, 3))).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (b, _) = pool
        .install(|| batch_gradient(&params, &refs, Lambdas::DKT_PLUS, Some((0.5, 3))))
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn outputs_stay_inside_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = DktParams::init(6, 10, 3.0, 6).unwrap();
    let s = random_sequence(&mut rng, 6, 50, "x");
    let y = forward(&params, &s, Dropout::Off).unwrap();
    assert!(y.values().iter().all(|&v| v > 0.0 && v < 1.0));
    let batch = LossBatch::single(&y, &s).unwrap();
    let t = batch.terms(Lambdas::DKT_PLUS).unwrap();
    assert!(t.prediction >= 0.0 && t.reconstruction >= 0.0 && t.w1 >= 0.0 && t.w2_squared >= 0.0);
}
