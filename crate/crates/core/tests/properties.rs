mod common;

use std::sync::Arc;

use common::*;
use g2t_core::ctc::{beam_decode_topk, ctc_loss, BeamConfig, LabelSequence};
use g2t_core::dataset::GestureDataset;
use g2t_core::discretize::{discretize, DiscretizerConfig, RegionShape};
use g2t_core::geometry::{
    default_qwerty, normalize, path_length, resample, Clamp, EncodedTrajectory, Key, KeyboardLayout, Point,
    Trajectory,
};
use g2t_core::lexicon::LexiconTrie;
use g2t_core::metrics::{cer, curvature, levenshtein, topk_accuracy, touch_point_stats};
use g2t_core::neural::{ModelConfig, ModelParams};
use g2t_core::pipeline::Preprocessor;
use g2t_core::shark2::{decode_topk, similarity, construct_template, Shark2Config, TemplateSet};
use g2t_core::synthgen::{generate, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn word_over(alphabet: &'static str, max_len: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(alphabet.chars().collect::<Vec<_>>()), 1..=max_len)
        .prop_map(|v| v.into_iter().collect())
}

/// 26 keys on a jittered grid with random sizes.
fn random_layout(seed: u64) -> KeyboardLayout {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(0.5..2.0);
    let h = rng.random_range(0.5..2.0);
    let keys = (0..26u8)
        .map(|i| {
            let (col, row) = ((i % 9) as f64, (i / 9) as f64);
            Key {
                label: (b'a' + i) as char,
                center: Point::new(
                    (col + 0.5) * w + rng.random_range(-0.2..0.2) * w,
                    (row + 0.5) * h + rng.random_range(-0.2..0.2) * h,
                ),
                width: w * rng.random_range(0.8..1.0),
                height: h * rng.random_range(0.8..1.0),
            }
        })
        .collect();
    KeyboardLayout::new("random", keys).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ctc_matches_path_enumeration(seed in any::<u64>(), frames in 1usize..=5, target in word_over("abc", 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = random_lattice(&mut rng, frames, &ABC_BLANK);
        let label = LabelSequence::from_word(&target).unwrap();
        prop_assume!(label.min_frames() <= frames);
        let brute = brute_force_strings(&lat, &ABC_BLANK).get(&target).copied().unwrap_or(0.0);
        let p = (-ctc_loss(&lat, &label).unwrap()).exp();
        prop_assert!((p - brute).abs() <= 1e-9 * brute, "{p} vs {brute}");
    }

    #[test]
    fn beam_respects_lexicon_and_probability_bound(
        seed in any::<u64>(),
        frames in 1usize..=4,
        words in proptest::collection::vec(word_over("abc", 4), 1..6),
        width in 1usize..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = random_lattice(&mut rng, frames, &ABC_BLANK);
        let lex = Arc::new(LexiconTrie::new(words.iter()).unwrap());
        let cfg = BeamConfig { beam_width: width.max(4), k: 4, lexicon: Some(lex.clone()) };
        let cands = beam_decode_topk(&lat, &cfg).unwrap();
        for c in &cands {
            prop_assert!(lex.contains(&c.word));
            prop_assert!(c.log_prob <= 0.0);
        }

        let free = BeamConfig { beam_width: 200, k: 200, lexicon: None };
        let all = beam_decode_topk(&lat, &free).unwrap();
        let total: f64 = all.iter().map(|c| c.log_prob.exp()).sum();
        prop_assert!(total <= 1.0 + 1e-12);
        let mut seen: Vec<&str> = all.iter().map(|c| c.word.as_str()).collect();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), all.len());
    }

    #[test]
    fn exact_beam_dominates_narrow(seed in any::<u64>(), frames in 1usize..=4, width in 1usize..8) {
        // 5 letters over 4 frames give at most 781 distinct prefixes
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = random_lattice(&mut rng, frames, &[0, 1, 2, 3, 4, g2t_core::BLANK]);
        let best = |w: usize| beam_decode_topk(&lat, &BeamConfig { beam_width: w, k: 1, lexicon: None }).unwrap()[0].log_prob;
        prop_assert!(best(1000) >= best(width) - 1e-12);
    }

    #[test]
    fn discretization_is_scale_invariant(seed in any::<u64>(), s in prop_oneof![Just(0.1), Just(10.0), Just(37.5), 0.01f64..100.0]) {
        let layout = random_layout(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let traj = random_trajectory(&mut rng, &layout, 5);
        for shape in [RegionShape::Square, RegionShape::Ellipse] {
            let pre = Preprocessor { region_shape: shape, ..Preprocessor::default() };
            let a = pre.features(&traj, &layout).unwrap();
            let b = pre.features(&traj.scaled(s), &layout.scaled(s).unwrap()).unwrap();
            prop_assert_eq!(a.indices, b.indices);
        }
    }

    #[test]
    fn waypoints_tolerate_perpendicular_noise(word in word_over("qwertyuiopasdfghjklzxcvbnm", 6), seed in any::<u64>()) {
        use rand::Rng;
        let layout = default_qwerty();
        let cfg = DiscretizerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Point> = word.chars().map(|c| layout.center(c).unwrap()).collect();
        let noisy: Vec<Point> = centers
            .iter()
            .map(|p| {
                let mag = rng.random_range(-0.499..0.499);
                if rng.random_bool(0.5) { Point::new(p.x + mag, p.y) } else { Point::new(p.x, p.y + mag) }
            })
            .collect();
        let enc = EncodedTrajectory { points: noisy };
        let d = discretize(&enc, &layout, &cfg).unwrap();
        prop_assert_eq!(d.labels(), word);
    }

    #[test]
    fn one_hot_argmax_recovers_indices(seed in any::<u64>(), n in 2usize..30) {
        let layout = default_qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = random_trajectory(&mut rng, &layout, n);
        let enc = EncodedTrajectory { points: traj.points };
        let d = discretize(&enc, &layout, &DiscretizerConfig::default()).unwrap();
        let m = d.one_hot.unwrap();
        for (t, &i) in d.indices.iter().enumerate() {
            let row = &m[t * 26..(t + 1) * 26];
            let arg = (0..26).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            prop_assert_eq!(arg, i);
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn topk_is_monotone(preds in proptest::collection::vec(proptest::collection::vec(word_over("ab", 2), 0..6), 1..10), seed in any::<u64>()) {
        let truths: Vec<String> = preds.iter().enumerate().map(|(i, _)| if (seed >> (i % 64)) & 1 == 0 { "a".into() } else { "ab".into() }).collect();
        let mut prev = 0.0;
        for k in 1..8 {
            let acc = topk_accuracy(&preds, &truths, k).unwrap();
            prop_assert!(acc >= prev);
            prev = acc;
        }
    }

    #[test]
    fn cer_triangle(a in word_over("abc", 6), b in word_over("abc", 6), c in word_over("abc", 6)) {
        let lhs = cer(&a, &c).unwrap() * c.len() as f64;
        let rhs = cer(&a, &b).unwrap() * b.len() as f64 + levenshtein(&b, &c) as f64;
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn touch_stats_scale_equivariant(seed in any::<u64>(), s in 0.05f64..50.0) {
        use rand::Rng;
        let layout = default_qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(char, Point)> = (0..60)
            .map(|i| {
                let c = (b'a' + (i % 7) as u8) as char;
                let p = layout.center(c).unwrap();
                (c, Point::new(p.x + rng.random_range(-0.5..0.5), p.y + rng.random_range(-0.5..0.5)))
            })
            .collect();
        let base = touch_point_stats(&samples, &layout).unwrap();
        let scaled: Vec<(char, Point)> = samples.iter().map(|&(c, p)| (c, p.scale(s))).collect();
        let big = touch_point_stats(&scaled, &layout.scaled(s).unwrap()).unwrap();
        prop_assert!((big.adkc - s * base.adkc).abs() <= 1e-9 * big.adkc.max(1e-12));
        prop_assert!((big.amal - s * base.amal).abs() <= 1e-9 * big.amal.max(1e-12));
    }

    #[test]
    fn curvature_rotation_invariant(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..20).map(|_| Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..4.0))).collect();
        let (c, s) = (theta.cos(), theta.sin());
        let rot: Vec<Point> = pts.iter().map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect();
        let a = curvature(&EncodedTrajectory { points: pts }).unwrap();
        let b = curvature(&EncodedTrajectory { points: rot }).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn resample_preserves_length_and_is_deterministic(r in 0.5f64..5.0, turns in 0.3f64..1.0, n in 20usize..200) {
        // smooth arc
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let a = turns * std::f64::consts::TAU * i as f64 / (n - 1) as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let traj = Trajectory::new(pts.clone()).unwrap();
        let len = path_length(&pts);
        let step = len / 40.0;
        let a = resample(&traj, step, Clamp::default()).unwrap();
        let b = resample(&traj, step, Clamp::default()).unwrap();
        prop_assert!(a.len() >= 32);
        prop_assert!((path_length(&a.points) - len).abs() <= 0.01 * len);
        prop_assert!(a.points.iter().zip(&b.points).all(|(p, q)| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits()));
    }

    #[test]
    fn normalize_is_scale_equivariant(seed in any::<u64>(), s in 0.01f64..100.0) {
        let layout = random_layout(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = random_trajectory(&mut rng, &layout, 6);
        let a = normalize(&traj, &layout).unwrap();
        let b = normalize(&traj.scaled(s), &layout.scaled(s).unwrap()).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!(p.dist(*q) < 1e-12);
        }
    }

    #[test]
    fn shark2_similarity_symmetric(a in word_over("qwertyuiopasdfghjklzxcvbnm", 6), b in word_over("qwertyuiopasdfghjklzxcvbnm", 6)) {
        let unit = default_qwerty().normalized().unwrap();
        let ta = construct_template(&a, &unit, 100).unwrap();
        let tb = construct_template(&b, &unit, 100).unwrap();
        let w = Shark2Config::default().weights;
        let ab = similarity(&ta.ideal_path, &tb, w).unwrap();
        let ba = similarity(&tb.ideal_path, &ta, w).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn pruning_keeps_surviving_top1(seed in any::<u64>()) {
        let layout = default_qwerty();
        let words: Vec<String> = common_words().into_iter().take(150).collect();
        let set = TemplateSet::build(&words, &layout, Shark2Config::default()).unwrap();
        let open = TemplateSet::build(&words, &layout, Shark2Config { prune_radius: f64::INFINITY, ..Shark2Config::default() }).unwrap();
        let word = &words[(seed % 150) as usize];
        let traj = &generate(word, &layout, &SynthConfig { noise_sigma: 0.5, seed, ..SynthConfig::default() }, 1).unwrap()[0];
        let unpruned = decode_topk(traj, &open, &layout, 1).unwrap();
        let top = open.templates().iter().find(|t| t.word == unpruned[0].word).unwrap();
        let unit = normalize(traj, &layout).unwrap();
        let radius = 2.0 * set.layout().key_pitch();
        let survives = top.start().dist(unit.points[0]) <= radius && top.end().dist(*unit.points.last().unwrap()) <= radius;
        if survives {
            prop_assert_eq!(&decode_topk(traj, &set, &layout, 1).unwrap()[0].word, &unpruned[0].word);
        }
    }

    #[test]
    fn synthgen_is_deterministic_and_noiseless_samples_decode(seed in any::<u64>(), idx in 0usize..150) {
        let layout = default_qwerty();
        let words: Vec<String> = common_words().into_iter().take(150).collect();
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        let a = generate(&words[idx], &layout, &cfg, 3).unwrap();
        prop_assert_eq!(&a, &generate(&words[idx], &layout, &cfg, 3).unwrap());
        let clean = generate(&words[idx], &layout, &SynthConfig { noise_sigma: 0.0, ..cfg }, 1).unwrap();
        let set = TemplateSet::build(&words, &layout, Shark2Config::default()).unwrap();
        prop_assert_eq!(&decode_topk(&clean[0], &set, &layout, 1).unwrap()[0].word, &words[idx]);
    }

    #[test]
    fn dataset_round_trip_and_loso_partition(seed in any::<u64>(), users in 2usize..5, per_user in 1usize..5) {
        use rand::Rng;
        let layout = default_qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for u in 0..users {
            for _ in 0..per_user {
                let n = rng.random_range(2..8);
                let mut t = random_trajectory(&mut rng, &layout, n);
                if rng.random_bool(0.5) {
                    t.times = Some((0..t.points.len()).map(|i| i as f64 * 0.0137).collect());
                }
                samples.push(t.labeled("word").with_user(format!("user{u}")));
            }
        }
        let ds = GestureDataset::new(samples, "qwerty-default", "prop").unwrap();
        let back = GestureDataset::parse_jsonl(&ds.to_jsonl(), std::path::Path::new("x")).unwrap();
        prop_assert_eq!(&back, &ds);
        let splits = ds.loso_splits().unwrap();
        prop_assert_eq!(splits.len(), users);
        let tested: usize = splits.iter().map(|s| s.test.len()).sum();
        prop_assert_eq!(tested, ds.len());
        for s in &splits {
            prop_assert_eq!(s.train.len() + s.test.len(), ds.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lattice_rows_are_stochastic(seed in any::<u64>(), frames in 1usize..20) {
        use rand::Rng;
        let p = ModelParams::init(ModelConfig { seed, ..ModelConfig::with_hidden(6) }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = vec![0.0; frames * 26];
        for t in 0..frames {
            input[t * 26 + rng.random_range(0..26)] = 1.0;
        }
        let lat = p.forward(&input, frames, None).unwrap();
        for t in 0..frames {
            prop_assert!((lat.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(lat.row(t).iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn wider_beam_rarely_lowers_best() {
    let mut violations = 0;
    let mut cases = 0;
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = random_lattice(&mut rng, 3 + (seed % 6) as usize, &[0, 1, 2, 3, 4, g2t_core::BLANK]);
        let best = |w: usize| beam_decode_topk(&lat, &BeamConfig { beam_width: w, k: 1, lexicon: None }).unwrap()[0].log_prob;
        for w in 1..8 {
            cases += 1;
            if best(w + 1) < best(w) - 1e-12 {
                violations += 1;
            }
        }
    }
    eprintln!("beam width monotonicity violations: {violations}/{cases}");
    assert!(violations * 20 <= cases, "{violations}/{cases}");
}
