//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use g2t_core::ctc::collapse;
use g2t_core::geometry::{KeyboardLayout, Point, Trajectory};
use g2t_core::{ProbLattice, BLANK, NUM_CLASSES};
use rand::Rng;

pub const WORD_FILE: &str = include_str!("../../../../data/common_words.txt");

pub fn common_words() -> Vec<String> {
    WORD_FILE.lines().map(str::to_string).collect()
}

/// Random lattice whose mass sits on `classes` only.
pub fn random_lattice(rng: &mut impl Rng, frames: usize, classes: &[usize]) -> ProbLattice {
    let mut probs = vec![0.0; frames * NUM_CLASSES];
    for t in 0..frames {
        let raw: Vec<f64> = classes.iter().map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (&c, v) in classes.iter().zip(raw) {
            probs[t * NUM_CLASSES + c] = v / total;
        }
    }
    ProbLattice::new(frames, probs).unwrap()
}

/// Probability of every collapsed label string, by enumerating all
/// `|classes|^T` paths.
pub fn brute_force_strings(lattice: &ProbLattice, classes: &[usize]) -> HashMap<String, f64> {
    let frames = lattice.frames();
    let mut out = HashMap::new();
    let mut digits = vec![0usize; frames];
    loop {
        let path: Vec<usize> = digits.iter().map(|&d| classes[d]).collect();
        let p: f64 = path.iter().enumerate().map(|(t, &c)| lattice.row(t)[c]).product();
        *out.entry(collapse(&path)).or_insert(0.0) += p;
        let mut i = 0;
        loop {
            if i == frames {
                return out;
            }
            digits[i] += 1;
            if digits[i] < classes.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Highest-probability string, alphabetical tie-break; `allowed` filters.
pub fn brute_force_argmax(strings: &HashMap<String, f64>, allowed: impl Fn(&str) -> bool) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for (s, &p) in strings {
        if !allowed(s) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bs, bp)) => p > *bp || (p == *bp && s < bs),
        };
        if better {
            best = Some((s.clone(), p));
        }
    }
    best
}

pub const ABC_BLANK: [usize; 4] = [0, 1, 2, BLANK];

/// Random polyline with `n` points inside the layout's bounding box.
pub fn random_trajectory(rng: &mut impl Rng, layout: &KeyboardLayout, n: usize) -> Trajectory {
    let width = layout.width();
    let bottom = layout
        .keys()
        .iter()
        .map(|k| k.center.y + k.height / 2.0)
        .fold(0.0, f64::max);
    let left = layout
        .keys()
        .iter()
        .map(|k| k.center.x - k.width / 2.0)
        .fold(f64::INFINITY, f64::min);
    let points = (0..n)
        .map(|_| Point::new(left + rng.random_range(0.0..width), rng.random_range(0.0..bottom)))
        .collect();
    Trajectory::new(points).unwrap()
}
