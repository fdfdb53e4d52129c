//! Keyboard layouts, raw trajectories and arc-length resampling.
//!
//! Coordinates follow screen space: x grows rightward, y grows downward and
//! the origin sits at the top-left corner of the top-left key. Layout files
//! express everything in key-width units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHABET_SIZE: usize = 26;

/// Name under which [`default_qwerty`] is registered.
pub const DEFAULT_LAYOUT_NAME: &str = "qwerty-default";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn lerp(self, other: Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Maps a lowercase ASCII letter to its alphabetical index (`a` = 0).
pub fn letter_index(c: char) -> Option<usize> {
    if c.is_ascii_lowercase() {
        Some(c as usize - 'a' as usize)
    } else {
        None
    }
}

pub fn index_letter(i: usize) -> char {
    debug_assert!(i < ALPHABET_SIZE);
    (b'a' + i as u8) as char
}

/// Checks that `word` is non-empty and made of `a`-`z` only.
pub fn validate_word(word: &str) -> Result<()> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return Err(Error::InvalidWord {
            word: word.to_string(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Key {
    pub label: char,
    pub center: Point,
    pub width: f64,
    pub height: f64,
}

impl Key {
    pub fn left(&self) -> f64 {
        self.center.x - self.width / 2.0
    }

    pub fn right(&self) -> f64 {
        self.center.x + self.width / 2.0
    }
}

#[derive(Serialize, Deserialize)]
struct KeySpec {
    label: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct LayoutSpec {
    name: String,
    keys: Vec<KeySpec>,
}

/// A 26-key letter layout. Keys are stored alphabetically so that
/// `keys()[i]` is the key for letter index `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyboardLayout {
    name: String,
    keys: Vec<Key>,
}

impl KeyboardLayout {
    pub fn new(name: impl Into<String>, keys: Vec<Key>) -> Result<Self> {
        let name = name.into();
        if keys.len() != ALPHABET_SIZE {
            return Err(Error::InvalidLayout(format!(
                "expected {ALPHABET_SIZE} keys, got {}",
                keys.len()
            )));
        }
        let mut slots: Vec<Option<Key>> = vec![None; ALPHABET_SIZE];
        for key in keys {
            let idx = letter_index(key.label).ok_or_else(|| {
                Error::InvalidLayout(format!("label {:?} is not a-z", key.label))
            })?;
            if slots[idx].is_some() {
                return Err(Error::InvalidLayout(format!(
                    "duplicate label {:?}",
                    key.label
                )));
            }
            let finite = key.center.x.is_finite()
                && key.center.y.is_finite()
                && key.width.is_finite()
                && key.height.is_finite();
            if !finite || key.width <= 0.0 || key.height <= 0.0 {
                return Err(Error::InvalidLayout(format!(
                    "key {:?} has non-positive or non-finite geometry",
                    key.label
                )));
            }
            slots[idx] = Some(key);
        }
        let keys: Vec<Key> = slots.into_iter().map(|k| k.unwrap()).collect();
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                if a.center == b.center {
                    return Err(Error::InvalidLayout(format!(
                        "keys {:?} and {:?} share a center",
                        a.label, b.label
                    )));
                }
            }
        }
        Ok(Self { name, keys })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Keys in alphabetical order.
    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn key(&self, label: char) -> Option<&Key> {
        letter_index(label).map(|i| &self.keys[i])
    }

    pub fn center(&self, label: char) -> Result<Point> {
        self.key(label)
            .map(|k| k.center)
            .ok_or(Error::UnknownKey(label))
    }

    /// Total keyboard width: rightmost key edge minus leftmost key edge.
    pub fn width(&self) -> f64 {
        let left = self.keys.iter().map(Key::left).fold(f64::INFINITY, f64::min);
        let right = self
            .keys
            .iter()
            .map(Key::right)
            .fold(f64::NEG_INFINITY, f64::max);
        right - left
    }

    /// Mean key width, the length unit in which resampling steps and pruning
    /// radii are expressed.
    pub fn key_pitch(&self) -> f64 {
        self.keys.iter().map(|k| k.width).sum::<f64>() / ALPHABET_SIZE as f64
    }

    /// Uniformly scales every key center and dimension by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let keys = self
            .keys
            .iter()
            .map(|k| Key {
                label: k.label,
                center: k.center.scale(s),
                width: k.width * s,
                height: k.height * s,
            })
            .collect();
        Self::new(self.name.clone(), keys)
    }

    /// The layout expressed on a unit-width keyboard.
    pub fn normalized(&self) -> Result<Self> {
        let w = self.width();
        if w.is_nan() || w <= 0.0 {
            return Err(Error::InvalidLayout("zero keyboard width".into()));
        }
        self.scaled(1.0 / w)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: LayoutSpec = serde_json::from_str(text)?;
        let mut keys = Vec::with_capacity(spec.keys.len());
        for k in spec.keys {
            let mut chars = k.label.chars();
            let label = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(Error::InvalidLayout(format!(
                        "label {:?} is not a single letter",
                        k.label
                    )))
                }
            };
            keys.push(Key {
                label,
                center: Point::new(k.cx, k.cy),
                width: k.w,
                height: k.h,
            });
        }
        Self::new(spec.name, keys)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let spec = LayoutSpec {
            name: self.name.clone(),
            keys: self
                .keys
                .iter()
                .map(|k| KeySpec {
                    label: k.label.to_string(),
                    cx: k.center.x,
                    cy: k.center.y,
                    w: k.width,
                    h: k.height,
                })
                .collect(),
        };
        serde_json::to_value(spec).expect("layout serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("layout serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The canonical QWERTY letter block with unit keys.
pub fn default_qwerty() -> KeyboardLayout {
    const ROWS: [(&str, f64, f64); 3] = [
        ("qwertyuiop", 0.0, 0.5),
        ("asdfghjkl", 0.25, 1.5),
        ("zxcvbnm", 0.75, 2.5),
    ];
    let keys = ROWS
        .iter()
        .flat_map(|&(letters, offset, y)| {
            letters.chars().enumerate().map(move |(i, label)| Key {
                label,
                center: Point::new(offset + i as f64 + 0.5, y),
                width: 1.0,
                height: 1.0,
            })
        })
        .collect();
    KeyboardLayout::new(DEFAULT_LAYOUT_NAME, keys).expect("default layout is valid")
}

/// A recorded gesture. Timestamps are optional and never used for decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
    pub times: Option<Vec<f64>>,
    pub word: Option<String>,
    pub user_id: Option<String>,
}

impl Trajectory {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        Self::with_times(points, None)
    }

    pub fn with_times(points: Vec<Point>, times: Option<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite coordinate".into()));
        }
        if let Some(ts) = &times {
            if ts.len() != points.len() {
                return Err(Error::InvalidTrajectory(format!(
                    "{} timestamps for {} points",
                    ts.len(),
                    points.len()
                )));
            }
            if ts.windows(2).any(|w| w[1].is_nan() || w[1] < w[0]) {
                return Err(Error::InvalidTrajectory(
                    "timestamps must be non-decreasing".into(),
                ));
            }
        }
        Ok(Self {
            points,
            times,
            word: None,
            user_id: None,
        })
    }

    pub fn labeled(mut self, word: impl Into<String>) -> Self {
        self.word = Some(word.into());
        self
    }

    pub fn with_user(mut self, user: impl Into<String>) -> Self {
        self.user_id = Some(user.into());
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p.scale(s)).collect(),
            ..self.clone()
        }
    }
}

/// A fixed-length, arc-length-uniform point sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTrajectory {
    pub points: Vec<Point>,
}

impl EncodedTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

/// Inclusive bounds on the resampled length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub min: usize,
    pub max: usize,
}

impl Clamp {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

impl Default for Clamp {
    fn default() -> Self {
        Self::new(8, 256)
    }
}

/// Expresses a trajectory on the unit-width keyboard of `layout`.
pub fn normalize(traj: &Trajectory, layout: &KeyboardLayout) -> Result<Trajectory> {
    let w = layout.width();
    if w.is_nan() || w <= 0.0 {
        return Err(Error::InvalidLayout("zero keyboard width".into()));
    }
    let mut out = traj.clone();
    for p in &mut out.points {
        *p = Point::new(p.x / w, p.y / w);
    }
    Ok(out)
}

pub fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Resamples a trajectory to points equally spaced along its arc.
pub fn resample(traj: &Trajectory, step: f64, clamp: Clamp) -> Result<EncodedTrajectory> {
    resample_polyline(&traj.points, step, clamp)
}

/// Resamples a polyline so that consecutive outputs are `L / (T - 1)` apart
/// along the arc, with `T = clamp(floor(L / step) + 1)`.
pub fn resample_polyline(points: &[Point], step: f64, clamp: Clamp) -> Result<EncodedTrajectory> {
    if points.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if step.is_nan() || step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("resampling step {step} must be > 0")));
    }
    if clamp.min < 2 || clamp.min > clamp.max {
        return Err(Error::InvalidConfig(format!(
            "clamp [{}, {}] must satisfy 2 <= min <= max",
            clamp.min, clamp.max
        )));
    }
    let total = path_length(points);
    if total == 0.0 {
        return Ok(EncodedTrajectory {
            points: vec![points[0]; clamp.min],
        });
    }
    let raw = (total / step).floor() as usize + 1;
    let t = raw.clamp(clamp.min, clamp.max);
    Ok(EncodedTrajectory {
        points: sample_uniform(points, total, t),
    })
}

/// Samples `n >= 2` points at arc positions `i * total / (n - 1)`.
pub(crate) fn sample_uniform(points: &[Point], total: f64, n: usize) -> Vec<Point> {
    debug_assert!(n >= 2);
    let last = *points.last().unwrap();
    if total == 0.0 {
        return vec![points[0]; n];
    }
    let spacing = total / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    out.push(points[0]);

    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut seg_len = points[0].dist(points[1]);
    for i in 1..n - 1 {
        let target = i as f64 * spacing;
        while seg + 2 < points.len() && seg_start + seg_len < target {
            seg_start += seg_len;
            seg += 1;
            seg_len = points[seg].dist(points[seg + 1]);
        }
        let frac = if seg_len > 0.0 {
            ((target - seg_start) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg].lerp(points[seg + 1], frac));
    }
    out.push(last);
    out
}
