use std::sync::Arc;

use g2t_core::ctc::LabelSequence;
use g2t_core::neural::{train, Example, ModelConfig, ModelParams, TrainConfig};
use g2t_core::lexicon::LexiconTrie;
use g2t_core::NUM_CLASSES;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot_input(indices: &[usize], dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; indices.len() * dim];
    for (t, &i) in indices.iter().enumerate() {
        v[t * dim + i] = 1.0;
    }
    v
}

fn random_input(frames: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn small(hidden: usize, input_dim: usize, layers: usize, seed: u64) -> ModelParams {
    ModelParams::init(ModelConfig {
        input_dim,
        lstm_layers: layers,
        seed,
        ..ModelConfig::with_hidden(hidden)
    })
    .unwrap()
}

#[test]
fn rows_are_distributions() {
    let p = small(8, 26, 2, 1);
    let input = one_hot_input(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], 26);
    let lat = p.forward(&input, 10, None).unwrap();
    assert_eq!(lat.frames(), 10);
    assert_eq!(lat.probs().len(), 10 * NUM_CLASSES);
    for t in 0..10 {
        let s: f64 = lat.row(t).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(lat.row(t).iter().all(|&v| v > 0.0));
    }
}

#[test]
fn zero_params_give_uniform_lattice() {
    let p = ModelParams::zeros(ModelConfig::with_hidden(6)).unwrap();
    let lat = p.forward(&one_hot_input(&[3; 12], 26), 12, None).unwrap();
    for v in lat.probs() {
        assert!((v - 1.0 / 27.0).abs() < 1e-12);
    }
}

#[test]
fn bidirectional_sees_whole_sequence() {
    let p = small(6, 26, 1, 4);
    let a = one_hot_input(&[0, 1, 2, 3, 4, 5, 6, 7], 26);
    let b = one_hot_input(&[0, 1, 2, 3, 4, 5, 6, 9], 26);
    let la = p.forward(&a, 8, None).unwrap();
    let lb = p.forward(&b, 8, None).unwrap();
    // A change at the last frame must reach the first frame through the
    // backward direction.
    let diff: f64 = la.row(0).iter().zip(lb.row(0)).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-9);
}

#[test]
fn wrong_input_width_is_rejected() {
    let p = small(4, 26, 1, 0);
    assert!(p.forward(&[0.0; 25], 1, None).is_err());
    assert!(p.forward(&[], 0, None).is_err());
}

fn gradient_check(p: &ModelParams, input: &[f64], frames: usize, target: &LabelSequence, wd: f64) -> (usize, f64) {
    let (_, analytic) = p.loss_and_gradient(input, frames, target, wd).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut q = p.clone();
    let objective = |q: &ModelParams| {
        q.loss(input, frames, target).unwrap() + 0.5 * wd * q.squared_norm()
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = q.as_slice()[i];
        q.as_mut_slice()[i] = orig + h;
        let up = objective(&q);
        q.as_mut_slice()[i] = orig - h;
        let down = objective(&q);
        q.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (a - numeric).abs();
        let tol = 1e-4 * a.abs().max(numeric.abs()) + 1e-7;
        if err > tol {
            failures += 1;
        }
        worst = worst.max(err / (a.abs().max(numeric.abs()) + 1e-7));
    }
    (failures, worst)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let target = LabelSequence::from_word("hello").unwrap();
    for (input_dim, layers, seed) in [(26, 2, 1u64), (2, 1, 2), (1, 2, 3)] {
        let p = small(4, input_dim, layers, seed);
        let frames = 8;
        let input = if input_dim == 26 {
            one_hot_input(&[7, 7, 4, 11, 11, 11, 14, 14], 26)
        } else {
            random_input(frames, input_dim, &mut rng)
        };
        let (failures, worst) = gradient_check(&p, &input, frames, &target, 1e-3);
        assert_eq!(failures, 0, "dim {input_dim} layers {layers}: worst rel err {worst:e}");
    }
}

#[test]
fn duplicated_batch_doubles_loss() {
    let p = small(5, 26, 2, 3);
    let input = one_hot_input(&[2, 0, 19, 19, 0, 2, 2, 19], 26);
    let target = LabelSequence::from_word("cat").unwrap();
    let cache = p.forward_cached(&input, 8, None).unwrap();
    let mut g1 = p.zeros_like();
    let l1 = p.accumulate_gradient(&input, &cache, &target, &mut g1).unwrap();
    let mut g2 = p.zeros_like();
    let mut l2 = p.accumulate_gradient(&input, &cache, &target, &mut g2).unwrap();
    l2 += p.accumulate_gradient(&input, &cache, &target, &mut g2).unwrap();
    assert!((l2 - 2.0 * l1).abs() < 1e-12 * l1.abs().max(1.0));
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
}

#[test]
fn dropout_only_in_training_mode() {
    let p = ModelParams::init(ModelConfig {
        seed: 5,
        dropout_rate: 0.5,
        ..ModelConfig::with_hidden(6)
    })
    .unwrap();
    let input = one_hot_input(&[1, 2, 3, 4, 5, 6, 7, 8], 26);
    let eval_a = p.forward(&input, 8, None).unwrap();
    let eval_b = p.forward(&input, 8, None).unwrap();
    assert_eq!(eval_a.probs(), eval_b.probs());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = p.forward(&input, 8, Some(&mut rng)).unwrap();
    assert_ne!(eval_a.probs(), train.probs());
}

fn toy_examples(words: &[&str], per_word: usize, seed: u64) -> Vec<Example> {
    // Each letter holds for a random 2-4 frames; a noise frame is sometimes
    // inserted between letters.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for w in words {
        for _ in 0..per_word {
            let mut idx = Vec::new();
            for (i, c) in w.bytes().enumerate() {
                if i > 0 && rng.random_bool(0.3) {
                    idx.push(rng.random_range(0..26));
                }
                for _ in 0..rng.random_range(2..=4) {
                    idx.push((c - b'a') as usize);
                }
            }
            out.push(Example {
                input: one_hot_input(&idx, 26),
                frames: idx.len(),
                target: LabelSequence::from_word(w).unwrap(),
                word: w.to_string(),
            });
        }
    }
    out
}

#[test]
fn learns_toy_vocabulary_deterministically() {
    let words = ["ab", "ba", "abc", "cab"];
    let lex = Arc::new(LexiconTrie::new(words.iter().map(|s| s.to_string())).unwrap());
    let train_set = toy_examples(&words, 10, 1);
    let val_set = toy_examples(&words, 5, 2);
    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 8,
        learning_rate: 0.01,
        seed: 3,
        ..TrainConfig::default()
    };
    let init = small(8, 26, 1, 7);
    let run = || train(init.clone(), &train_set, &val_set, &lex, &cfg, |_| {}).unwrap();
    let a = run();
    let best = a.log.iter().map(|m| m.val_top1).fold(0.0, f64::max);
    assert!(best >= 0.95, "best val top1 {best}: {:?}", a.log.last());
    let b = run();
    assert_eq!(a.best, b.best);
    assert_eq!(a.last, b.last);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn zero_epochs_returns_initial() {
    let words = ["ab", "ba"];
    let lex = Arc::new(LexiconTrie::new(words.iter().map(|s| s.to_string())).unwrap());
    let set = toy_examples(&words, 2, 0);
    let init = small(4, 26, 1, 1);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(init.clone(), &set, &[], &lex, &cfg, |_| {}).unwrap();
    assert_eq!(out.best, init);
    assert_eq!(out.last, init);
    assert!(out.log.is_empty());
}

#[test]
fn infeasible_samples_are_skipped() {
    let words = ["ab", "ba", "aa"];
    let lex = Arc::new(LexiconTrie::new(words.iter().map(|s| s.to_string())).unwrap());
    let mut set = toy_examples(&words[..2], 4, 0);
    set.push(Example {
        input: one_hot_input(&[0, 0], 26),
        frames: 2,
        target: LabelSequence::from_word("aa").unwrap(),
        word: "aa".into(),
    });
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = train(small(4, 26, 1, 1), &set, &[], &lex, &cfg, |_| {}).unwrap();
    assert_eq!(out.log[0].skipped, 1);
}
