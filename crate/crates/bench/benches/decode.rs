use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use g2t_core::shark2::decode_topk;
use g2t_core::{
    beam_decode_topk, default_qwerty, synthgen, BeamConfig, LexiconTrie, ModelConfig, ModelFile, ModelParams,
    NeuralDecoder, Point, Preprocessor, Shark2Config, SynthConfig, TemplateSet, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lexicon(n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = std::collections::HashSet::new();
    while seen.len() < n {
        let len = rng.random_range(3..=10);
        seen.insert((0..len).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect::<String>());
    }
    let mut words: Vec<String> = seen.into_iter().collect();
    words.sort();
    words
}

/// Back-and-forth sweeps across the keyboard, `legs` segments long.
fn sweep(legs: usize) -> Trajectory {
    let points = (0..=legs)
        .map(|i| Point::new(if i % 2 == 0 { 0.5 } else { 9.5 }, 0.5 + (i % 3) as f64))
        .collect();
    Trajectory::new(points).unwrap()
}

fn forward(c: &mut Criterion) {
    let layout = default_qwerty();
    let pre = Preprocessor::default();
    let params = ModelParams::init(ModelConfig::default()).unwrap();
    let mut group = c.benchmark_group("forward");
    for legs in [1, 3, 11] {
        let f = pre.features(&sweep(legs), &layout).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(f.frames), &f, |b, f| {
            b.iter(|| params.forward(black_box(&f.data), f.frames, None).unwrap())
        });
    }
    group.finish();
}

fn beam(c: &mut Criterion) {
    let layout = default_qwerty();
    let pre = Preprocessor::default();
    let params = ModelParams::init(ModelConfig::default()).unwrap();
    let f = pre.features(&sweep(11), &layout).unwrap();
    let lattice = params.forward(&f.data, f.frames, None).unwrap();
    let trie = Arc::new(LexiconTrie::new(lexicon(50_000)).unwrap());
    let mut group = c.benchmark_group("beam_t256");
    for width in [4, 16, 64] {
        let free = BeamConfig { beam_width: width, k: 4, lexicon: None };
        group.bench_with_input(BenchmarkId::new("free", width), &free, |b, cfg| {
            b.iter(|| beam_decode_topk(black_box(&lattice), cfg).unwrap())
        });
        let constrained = BeamConfig { beam_width: width, k: 4, lexicon: Some(trie.clone()) };
        group.bench_with_input(BenchmarkId::new("lexicon50k", width), &constrained, |b, cfg| {
            b.iter(|| beam_decode_topk(black_box(&lattice), cfg).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let layout = default_qwerty();
    let words = lexicon(50_000);
    let trie = Arc::new(LexiconTrie::new(&words).unwrap());
    let model = ModelFile { params: ModelParams::init(ModelConfig::default()).unwrap(), preprocess: Preprocessor::default() };
    let neural = NeuralDecoder::new(model, Some(trie), 16, 4).unwrap();
    let traj = sweep(11);
    c.bench_function("neural_decode_t256_50k", |b| b.iter(|| neural.decode(black_box(&traj), &layout, 4).unwrap()));

    let templates = TemplateSet::build(&words[..5_000], &layout, Shark2Config::default()).unwrap();
    let sample = &synthgen::generate(&words[0], &layout, &SynthConfig::default(), 1).unwrap()[0];
    c.bench_function("shark2_decode_5k", |b| {
        b.iter(|| decode_topk(black_box(sample), &templates, &layout, 4).unwrap())
    });
}

criterion_group!(benches, forward, beam, end_to_end);
criterion_main!(benches);
