//! CTC loss (log-space forward-backward), collapse, greedy decoding and
//! prefix beam search with an optional lexicon constraint.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{letter_index, ALPHABET_SIZE};
use crate::lattice::{class_char, log_add, ProbLattice, BLANK, NUM_CLASSES};
use crate::lexicon::LexiconTrie;

/// Target characters as class indices in `0..26`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSequence {
    chars: Vec<usize>,
}

impl LabelSequence {
    pub fn new(chars: Vec<usize>) -> Result<Self> {
        if chars.is_empty() {
            return Err(Error::Empty("label sequence".into()));
        }
        if let Some(&bad) = chars.iter().find(|&&c| c >= ALPHABET_SIZE) {
            return Err(Error::IndexOutOfRange(bad));
        }
        Ok(Self { chars })
    }

    pub fn from_word(word: &str) -> Result<Self> {
        crate::geometry::validate_word(word)?;
        Self::new(word.chars().map(|c| letter_index(c).unwrap()).collect())
    }

    pub fn chars(&self) -> &[usize] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Minimum number of frames an alignment needs: one per character plus
    /// a separating blank between each pair of equal neighbours.
    pub fn min_frames(&self) -> usize {
        self.chars.len() + self.chars.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

/// Blank-interleaved target `φ z1 φ z2 ... φ`.
fn extend_target(target: &LabelSequence) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &c in target.chars() {
        ext.push(c);
        ext.push(BLANK);
    }
    ext
}

fn check_feasible(frames: usize, target: &LabelSequence) -> Result<()> {
    let required = target.min_frames();
    if required > frames {
        return Err(Error::InfeasibleAlignment {
            target_len: target.len(),
            required,
            frames,
        });
    }
    Ok(())
}

/// Log-space forward variables, `alpha[t * S + s]`.
fn forward_vars(log_probs: &[f64], frames: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; frames * s_len];
    alpha[0] = log_probs[ext[0]];
    if s_len > 1 {
        alpha[1] = log_probs[ext[1]];
    }
    for t in 1..frames {
        let lp = &log_probs[t * NUM_CLASSES..(t + 1) * NUM_CLASSES];
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        let cur = &mut cur[..s_len];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = a + lp[ext[s]];
        }
    }
    alpha
}

/// Log-space backward variables excluding the emission at `t`:
/// `beta[t][s]` is the log probability of completing the alignment from
/// state `s` after frame `t`.
fn backward_vars(log_probs: &[f64], frames: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut beta = vec![f64::NEG_INFINITY; frames * s_len];
    let last = (frames - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        let lp = &log_probs[(t + 1) * NUM_CLASSES..(t + 2) * NUM_CLASSES];
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let next = &next[..s_len];
        for s in 0..s_len {
            let mut b = next[s] + lp[ext[s]];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1] + lp[ext[s + 1]]);
            }
            if s + 2 < s_len && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                b = log_add(b, next[s + 2] + lp[ext[s + 2]]);
            }
            cur[s] = b;
        }
    }
    beta
}

fn total_log_prob(alpha: &[f64], frames: usize, s_len: usize) -> f64 {
    let last = (frames - 1) * s_len;
    let mut total = alpha[last + s_len - 1];
    if s_len > 1 {
        total = log_add(total, alpha[last + s_len - 2]);
    }
    total
}

/// Negative log-likelihood of `target` under `lattice`, in nats.
///
/// Returns `+inf` when no alignment has non-zero probability.
pub fn ctc_loss(lattice: &ProbLattice, target: &LabelSequence) -> Result<f64> {
    ctc_loss_from_log_probs(&lattice.log_probs(), lattice.frames(), target)
}

pub fn ctc_loss_from_log_probs(
    log_probs: &[f64],
    frames: usize,
    target: &LabelSequence,
) -> Result<f64> {
    check_feasible(frames, target)?;
    let ext = extend_target(target);
    let alpha = forward_vars(log_probs, frames, &ext);
    Ok(-total_log_prob(&alpha, frames, ext.len()))
}

/// Loss and per-frame, per-class posterior occupancy `Σ_{s: ext[s]=k} γ_t(s)`,
/// row-major `T x 27`. The derivative of the loss with respect to
/// `ln π_t[k]` is the negated occupancy.
pub fn ctc_occupancy(
    log_probs: &[f64],
    frames: usize,
    target: &LabelSequence,
) -> Result<(f64, Vec<f64>)> {
    check_feasible(frames, target)?;
    let ext = extend_target(target);
    let s_len = ext.len();
    let alpha = forward_vars(log_probs, frames, &ext);
    let beta = backward_vars(log_probs, frames, &ext);
    let total = total_log_prob(&alpha, frames, s_len);
    let mut occ = vec![0.0; frames * NUM_CLASSES];
    if total == f64::NEG_INFINITY {
        return Ok((f64::INFINITY, occ));
    }
    for t in 0..frames {
        let row = &mut occ[t * NUM_CLASSES..(t + 1) * NUM_CLASSES];
        for (s, &k) in ext.iter().enumerate() {
            let lg = alpha[t * s_len + s] + beta[t * s_len + s] - total;
            if lg > f64::NEG_INFINITY {
                row[k] += lg.exp();
            }
        }
    }
    Ok((-total, occ))
}

/// Loss and its gradient with respect to the lattice entries `π_t[k]`.
pub fn ctc_loss_grad_probs(lattice: &ProbLattice, target: &LabelSequence) -> Result<(f64, Vec<f64>)> {
    let (loss, occ) = ctc_occupancy(&lattice.log_probs(), lattice.frames(), target)?;
    let grad = occ
        .iter()
        .zip(lattice.probs())
        .map(|(&o, &p)| if o == 0.0 { 0.0 } else { -o / p })
        .collect();
    Ok((loss, grad))
}

/// Loss and its gradient with respect to pre-softmax logits, given the
/// softmax output `probs` (row-major `T x 27`): `π - occupancy`.
pub fn ctc_loss_grad_logits(
    probs: &[f64],
    frames: usize,
    target: &LabelSequence,
) -> Result<(f64, Vec<f64>)> {
    let log_probs: Vec<f64> = probs
        .iter()
        .map(|&p| p.max(crate::lattice::PROB_FLOOR).ln())
        .collect();
    let (loss, mut occ) = ctc_occupancy(&log_probs, frames, target)?;
    for (g, &p) in occ.iter_mut().zip(probs) {
        *g = p - *g;
    }
    Ok((loss, occ))
}

/// Merges adjacent repeats, then removes blanks.
pub fn collapse(path: &[usize]) -> String {
    let mut out = String::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev {
            if let Some(ch) = class_char(c) {
                out.push(ch);
            }
        }
        prev = Some(c);
    }
    out
}

/// Collapses the per-frame argmax; ties go to the lower class index.
pub fn greedy_decode(lattice: &ProbLattice) -> String {
    let path: Vec<usize> = (0..lattice.frames())
        .map(|t| {
            let row = lattice.row(t);
            let mut best = 0;
            for c in 1..NUM_CLASSES {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

#[derive(Clone, Debug)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub k: usize,
    pub lexicon: Option<std::sync::Arc<LexiconTrie>>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 16,
            k: 4,
            lexicon: None,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.beam_width < self.k {
            return Err(Error::InvalidConfig(format!(
                "need beam_width ({}) >= k ({}) >= 1",
                self.beam_width, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub word: String,
    pub log_prob: f64,
}

/// Prefix identities: trie nodes when a lexicon is set, otherwise an arena
/// of (parent, letter) pairs.
enum Prefixes<'a> {
    Trie(&'a LexiconTrie),
    Free {
        parent: Vec<u32>,
        letter: Vec<u8>,
        index: HashMap<(u32, u8), u32>,
    },
}

const ROOT: u32 = 0;

impl Prefixes<'_> {
    fn extend(&mut self, id: u32, c: usize) -> Option<u32> {
        match self {
            Prefixes::Trie(trie) => trie.child(id, c),
            Prefixes::Free {
                parent,
                letter,
                index,
            } => {
                let next = parent.len() as u32;
                Some(*index.entry((id, c as u8)).or_insert_with(|| {
                    parent.push(id);
                    letter.push(c as u8);
                    next
                }))
            }
        }
    }

    fn last(&self, id: u32) -> Option<usize> {
        match self {
            Prefixes::Trie(trie) => trie.last_letter(id),
            Prefixes::Free { letter, .. } => (id != ROOT).then(|| letter[id as usize] as usize),
        }
    }

    fn emittable(&self, id: u32) -> bool {
        match self {
            Prefixes::Trie(trie) => trie.is_terminal(id),
            Prefixes::Free { .. } => true,
        }
    }

    fn spell(&self, id: u32) -> String {
        match self {
            Prefixes::Trie(trie) => trie.prefix_of(id),
            Prefixes::Free { parent, letter, .. } => {
                let mut bytes = Vec::new();
                let mut n = id;
                while n != ROOT {
                    bytes.push(b'a' + letter[n as usize]);
                    n = parent[n as usize];
                }
                bytes.reverse();
                String::from_utf8(bytes).expect("ascii")
            }
        }
    }
}

#[derive(Clone, Copy)]
struct BeamEntry {
    id: u32,
    blank: f64,
    non_blank: f64,
}

impl BeamEntry {
    fn total(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

/// Prefix beam search over a lattice.
///
/// Alignments are merged by collapsed prefix. With a lexicon, prefixes that
/// leave the trie are dropped and only complete words are returned; without
/// one, the best collapsed strings (including the empty string) are returned.
/// Results are ranked by log probability, ties broken alphabetically.
pub fn beam_decode_topk(lattice: &ProbLattice, cfg: &BeamConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let log_probs = lattice.log_probs();
    Ok(beam_search_log(&log_probs, lattice.frames(), cfg))
}

pub(crate) fn beam_search_log(log_probs: &[f64], frames: usize, cfg: &BeamConfig) -> Vec<Candidate> {
    let mut prefixes = match cfg.lexicon.as_deref() {
        Some(trie) => Prefixes::Trie(trie),
        None => Prefixes::Free {
            parent: vec![u32::MAX],
            letter: vec![0],
            index: HashMap::new(),
        },
    };

    let mut beam = vec![BeamEntry {
        id: ROOT,
        blank: 0.0,
        non_blank: f64::NEG_INFINITY,
    }];
    let mut next: Vec<BeamEntry> = Vec::new();
    let mut slot: HashMap<u32, usize> = HashMap::new();

    for t in 0..frames {
        let lp = &log_probs[t * NUM_CLASSES..(t + 1) * NUM_CLASSES];
        next.clear();
        slot.clear();
        let mut entry = |id: u32, next: &mut Vec<BeamEntry>| -> usize {
            *slot.entry(id).or_insert_with(|| {
                next.push(BeamEntry {
                    id,
                    blank: f64::NEG_INFINITY,
                    non_blank: f64::NEG_INFINITY,
                });
                next.len() - 1
            })
        };

        for b in &beam {
            let total = b.total();
            let last = prefixes.last(b.id);

            let i = entry(b.id, &mut next);
            next[i].blank = log_add(next[i].blank, total + lp[BLANK]);
            if let Some(c) = last {
                next[i].non_blank = log_add(next[i].non_blank, b.non_blank + lp[c]);
            }

            for (c, &lpc) in lp.iter().enumerate().take(ALPHABET_SIZE) {
                if lpc == f64::NEG_INFINITY {
                    continue;
                }
                let Some(child) = prefixes.extend(b.id, c) else {
                    continue;
                };
                // a repeated letter needs an intervening blank
                let from = if last == Some(c) { b.blank } else { total };
                let j = entry(child, &mut next);
                next[j].non_blank = log_add(next[j].non_blank, from + lpc);
            }
        }

        if t + 1 < frames {
            next.sort_by(|a, b| b.total().total_cmp(&a.total()).then(a.id.cmp(&b.id)));
            next.truncate(cfg.beam_width);
        }
        std::mem::swap(&mut beam, &mut next);
    }

    let mut out: Vec<Candidate> = beam
        .iter()
        .filter(|b| prefixes.emittable(b.id))
        .map(|b| Candidate {
            word: prefixes.spell(b.id),
            log_prob: b.total(),
        })
        .filter(|c| c.log_prob > f64::NEG_INFINITY)
        .collect();
    out.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.word.cmp(&b.word))
    });
    out.truncate(cfg.k);
    out
}
