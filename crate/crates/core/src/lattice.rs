use crate::error::{Error, Result};
use crate::geometry::{index_letter, ALPHABET_SIZE};

/// Size of the extended output alphabet: 26 letters plus the CTC blank.
pub const NUM_CLASSES: usize = ALPHABET_SIZE + 1;

/// Class index of the CTC blank.
pub const BLANK: usize = ALPHABET_SIZE;

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Per-frame class distributions, row-major `T x 27`, classes `a..z` then blank.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbLattice {
    frames: usize,
    probs: Vec<f64>,
}

impl ProbLattice {
    /// Builds a lattice, checking that every row is a probability
    /// distribution within `1e-6`.
    pub fn new(frames: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != frames * NUM_CLASSES {
            return Err(Error::LengthMismatch {
                expected: frames * NUM_CLASSES,
                actual: probs.len(),
            });
        }
        for (t, row) in probs.chunks(NUM_CLASSES).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidConfig(format!(
                    "lattice row {t} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "lattice row {t} sums to {sum}"
                )));
            }
        }
        Ok(Self { frames, probs })
    }

    pub fn from_rows(rows: &[[f64; NUM_CLASSES]]) -> Result<Self> {
        Self::new(rows.len(), rows.iter().flatten().copied().collect())
    }

    pub fn uniform(frames: usize) -> Self {
        Self {
            frames,
            probs: vec![1.0 / NUM_CLASSES as f64; frames * NUM_CLASSES],
        }
    }

    /// One-hot lattice following `path` (class indices, blank = 26).
    pub fn one_hot_path(path: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; path.len() * NUM_CLASSES];
        for (t, &c) in path.iter().enumerate() {
            if c >= NUM_CLASSES {
                return Err(Error::IndexOutOfRange(c));
            }
            probs[t * NUM_CLASSES + c] = 1.0;
        }
        Self::new(path.len(), probs)
    }

    pub(crate) fn from_raw_unchecked(frames: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), frames * NUM_CLASSES);
        Self { frames, probs }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.probs[t * NUM_CLASSES..(t + 1) * NUM_CLASSES]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Natural logs of the (floored) probabilities.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| p.max(PROB_FLOOR).ln()).collect()
    }
}

/// `ln(exp(a) + exp(b))`, exact for infinite arguments.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

pub fn class_char(c: usize) -> Option<char> {
    (c < ALPHABET_SIZE).then(|| index_letter(c))
}
