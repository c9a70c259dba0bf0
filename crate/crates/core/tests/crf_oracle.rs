mod common;

use medclaim::crf::{self, Lattice, LabeledSequence, Optimizer, TrainConfig, Weights};
use medclaim::error::Error;
use medclaim::features::FeatureDictionary;
use medclaim::tagging::Scheme;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(seed: u64, count: usize) -> Vec<(Weights, Vec<Vec<u32>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(1..=6);
            let l = rng.gen_range(1..=4);
            let f = rng.gen_range(1..=5);
            (common::random_weights(&mut rng, f, l, 1.5), common::random_features(&mut rng, t, f))
        })
        .collect()
}

#[test]
fn probabilities_sum_to_one() {
    for (w, feats) in instances(1, 100) {
        let log_z = crf::forward_log_z(&w, &feats).unwrap();
        let total: f64 = common::all_labelings(feats.len(), w.n_labels())
            .iter()
            .map(|y| (crf::sequence_score(&w, &feats, y).unwrap() - log_z).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "sum {total}");
    }
}

#[test]
fn sequence_score_matches_direct_sum() {
    for (w, feats) in instances(2, 50) {
        for y in common::all_labelings(feats.len(), w.n_labels()).iter().take(20) {
            let got = crf::sequence_score(&w, &feats, y).unwrap();
            assert!((got - common::brute_score(&w, &feats, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_agrees_with_forward() {
    for (w, feats) in instances(3, 100) {
        let lattice = Lattice::new(&w, &feats).unwrap();
        assert!((lattice.log_z() - lattice.backward_log_z(&w)).abs() < 1e-9);
    }
}

#[test]
fn marginals_match_enumeration() {
    for (w, feats) in instances(4, 100) {
        let lattice = Lattice::new(&w, &feats).unwrap();
        let got = lattice.unary_marginals();
        let want = common::brute_marginals(&w, &feats);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-8, "{g} vs {e}");
        }
    }
}

#[test]
fn pairwise_marginals_match_enumeration() {
    for (w, feats) in instances(5, 60) {
        let l = w.n_labels();
        let t = feats.len();
        let log_z = common::brute_log_z(&w, &feats);
        let mut want = vec![0.0; t.saturating_sub(1) * l * l];
        for y in common::all_labelings(t, l) {
            let p = (common::brute_score(&w, &feats, &y) - log_z).exp();
            for i in 0..t.saturating_sub(1) {
                want[i * l * l + y[i] * l + y[i + 1]] += p;
            }
        }
        let got = Lattice::new(&w, &feats).unwrap().pairwise_marginals(&w);
        assert_eq!(got.len(), want.len());
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-8);
        }
    }
}

#[test]
fn viterbi_bounded_by_log_z() {
    for (w, feats) in instances(6, 100) {
        let (_, score) = crf::viterbi(&w, &feats).unwrap();
        assert!(score <= crf::forward_log_z(&w, &feats).unwrap() + 1e-12);
    }
}

#[test]
fn viterbi_equals_log_z_when_peaked() {
    let mut w = Weights::zeros(1, 3);
    let at = w.emission_index(0, 2);
    w.as_mut_slice()[at] = 60.0;
    let feats = vec![vec![0u32]; 3];
    let (path, score) = crf::viterbi(&w, &feats).unwrap();
    assert_eq!(path, vec![2, 2, 2]);
    assert!((score - crf::forward_log_z(&w, &feats).unwrap()).abs() < 1e-9);
}

fn toy_batch() -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..6)
        .map(|_| LabeledSequence {
            features: common::random_features(&mut rng, 5, 8),
            labels: (0..5).map(|_| rng.gen_range(0..3)).collect(),
        })
        .collect()
}

#[test]
fn full_batch_descent_is_monotone() {
    let batch = toy_batch();
    let mut w = Weights::zeros(8, 3);
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        let obj = crf::nll_gradient(&w, &batch, 0.01).unwrap();
        assert!(obj.loss <= last, "loss rose from {last} to {}", obj.loss);
        last = obj.loss;
        for (p, g) in w.as_mut_slice().iter_mut().zip(&obj.gradient) {
            *p -= 1e-3 * g;
        }
    }
}

fn dictionary(n: usize) -> FeatureDictionary {
    FeatureDictionary::from_names((0..n).map(|i| format!("f={i}")).collect()).unwrap()
}

fn sgd(lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size: 100,
        max_epochs: 20,
        patience: 20,
        learning_rate: lr,
        optimizer: Optimizer::Sgd,
        l2: 0.01,
        seed: 3,
    }
}

#[test]
fn sgd_training_loss_monotone_per_epoch() {
    let batch = toy_batch();
    let out = crf::train(dictionary(8), Scheme::Claim, &batch, &batch, &sgd(1e-3)).unwrap();
    assert_eq!(out.epochs_run, 20);
    for pair in out.history.windows(2) {
        assert!(pair[1].train_loss <= pair[0].train_loss);
    }
}

#[test]
fn training_is_deterministic() {
    let batch = toy_batch();
    let config = TrainConfig {
        batch_size: 2,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let a = crf::train(dictionary(8), Scheme::Claim, &batch, &batch[..2], &config).unwrap();
    let b = crf::train(dictionary(8), Scheme::Claim, &batch, &batch[..2], &config).unwrap();
    let bits = |w: &Weights| w.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model.weights), bits(&b.model.weights));
    assert_eq!(a.history, b.history);
}

#[test]
fn patience_one_with_constant_loss_stops_after_two_epochs() {
    let batch = toy_batch();
    let mut config = sgd(0.0);
    config.patience = 1;
    let out = crf::train(dictionary(8), Scheme::Claim, &batch, &batch, &config).unwrap();
    assert_eq!(out.epochs_run, 2);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn best_checkpoint_is_returned() {
    let batch = toy_batch();
    let config = TrainConfig {
        batch_size: 2,
        learning_rate: 0.5,
        patience: 2,
        ..TrainConfig::default()
    };
    let out = crf::train(dictionary(8), Scheme::Claim, &batch, &batch[..3], &config).unwrap();
    let best = out.history.iter().map(|h| h.val_nll).fold(f64::INFINITY, f64::min);
    let val = crf::mean_nll(&out.model.weights, &batch[..3]).unwrap();
    assert_eq!(val, best);
    assert_eq!(out.history[out.best_epoch - 1].val_nll, best);
}

#[test]
fn divergence_names_the_epoch() {
    let batch = toy_batch();
    let err = crf::train(dictionary(8), Scheme::Claim, &batch, &batch, &sgd(f64::MAX)).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch } if epoch >= 1), "{err:?}");
}

#[test]
fn unfrozen_dictionary_rejected() {
    let mut dict = FeatureDictionary::new();
    dict.insert("f=0").unwrap();
    let batch = toy_batch();
    assert!(crf::train(dict, Scheme::Claim, &batch, &batch, &sgd(0.1)).is_err());
}
