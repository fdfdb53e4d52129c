//! SHARK² template-matching baseline.
//!
//! Each lexicon word becomes an ideal path through its letter centers. A
//! gesture is compared against every surviving template with a shape channel
//! (position- and scale-normalized) and a location channel (raw coordinates),
//! combined as a convex sum of mean pointwise distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    normalize, path_length, sample_uniform, validate_word, EncodedTrajectory, KeyboardLayout,
    Point, Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub shape: f64,
    pub location: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        Self {
            shape: 0.5,
            location: 0.5,
        }
    }
}

impl ChannelWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shape >= 0.0
            && self.location >= 0.0
            && (self.shape + self.location - 1.0).abs() < 1e-9;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "channel weights ({}, {}) must be non-negative and sum to 1",
                self.shape, self.location
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Shark2Config {
    /// Points per template.
    pub resolution: usize,
    pub weights: ChannelWeights,
    /// Start/end pruning radius in key widths.
    pub prune_radius: f64,
}

impl Default for Shark2Config {
    fn default() -> Self {
        Self {
            resolution: 100,
            weights: ChannelWeights::default(),
            prune_radius: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordTemplate {
    pub word: String,
    pub ideal_path: EncodedTrajectory,
    pub start_key: char,
    pub end_key: char,
    /// Shape-channel form of `ideal_path`, cached.
    shape: Vec<Point>,
}

impl WordTemplate {
    pub fn start(&self) -> Point {
        self.ideal_path.points[0]
    }

    pub fn end(&self) -> Point {
        *self.ideal_path.points.last().unwrap()
    }
}

/// Letter-center waypoints of `word`, consecutive duplicates collapsed.
pub fn word_waypoints(word: &str, layout: &KeyboardLayout) -> Result<Vec<Point>> {
    let mut pts: Vec<Point> = Vec::with_capacity(word.len());
    let mut prev = None;
    for c in word.chars() {
        let p = layout.center(c)?;
        if prev != Some(c) {
            pts.push(p);
        }
        prev = Some(c);
    }
    if pts.is_empty() {
        return Err(Error::InvalidWord { word: word.into() });
    }
    Ok(pts)
}

pub fn construct_template(word: &str, layout: &KeyboardLayout, n: usize) -> Result<WordTemplate> {
    if word.is_empty() {
        return Err(Error::InvalidWord { word: word.into() });
    }
    if n < 2 {
        return Err(Error::InvalidConfig(format!("template resolution {n} must be >= 2")));
    }
    let mut waypoints = word_waypoints(word, layout)?;
    if waypoints.len() == 1 {
        waypoints.push(waypoints[0]);
    }
    let points = sample_uniform(&waypoints, path_length(&waypoints), n);
    let shape = shape_normalize(&points);
    Ok(WordTemplate {
        word: word.to_string(),
        start_key: word.chars().next().unwrap(),
        end_key: word.chars().last().unwrap(),
        ideal_path: EncodedTrajectory { points },
        shape,
    })
}

fn extent(points: &[Point]) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (x1 - x0).max(y1 - y0)
}

/// Centroid at the origin, larger bounding-box side scaled to 1. Zero-extent
/// curves are only translated.
fn shape_normalize(points: &[Point]) -> Vec<Point> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let side = extent(points);
    let s = if side > 0.0 { 1.0 / side } else { 1.0 };
    points
        .iter()
        .map(|p| Point::new((p.x - cx) * s, (p.y - cy) * s))
        .collect()
}

fn mean_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.dist(*q)).sum::<f64>() / a.len() as f64
}

fn score_parts(
    enc: &[Point],
    enc_shape: &[Point],
    tpl: &[Point],
    tpl_shape: &[Point],
    weights: ChannelWeights,
) -> f64 {
    let d_loc = mean_distance(enc, tpl);
    // shape is undefined for a single point; fall back to location only
    if extent(enc) == 0.0 || extent(tpl) == 0.0 {
        return -d_loc;
    }
    let d_shape = mean_distance(enc_shape, tpl_shape);
    -(weights.shape * d_shape + weights.location * d_loc)
}

/// Similarity of a resampled gesture to a template; 0 is a perfect match.
pub fn similarity(enc: &EncodedTrajectory, tpl: &WordTemplate, weights: ChannelWeights) -> Result<f64> {
    if enc.len() != tpl.ideal_path.len() {
        return Err(Error::LengthMismatch {
            expected: tpl.ideal_path.len(),
            actual: enc.len(),
        });
    }
    let enc_shape = shape_normalize(&enc.points);
    Ok(score_parts(
        &enc.points,
        &enc_shape,
        &tpl.ideal_path.points,
        &tpl.shape,
        weights,
    ))
}

/// Templates for a lexicon, built on the unit-width form of a layout.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    templates: Vec<WordTemplate>,
    config: Shark2Config,
    layout: KeyboardLayout,
    /// `config.prune_radius` converted to unit-width coordinates.
    radius: f64,
}

impl TemplateSet {
    pub fn build<I, S>(words: I, layout: &KeyboardLayout, config: Shark2Config) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        config.weights.validate()?;
        if config.prune_radius.is_nan() || config.prune_radius < 0.0 {
            return Err(Error::InvalidConfig("prune_radius must be >= 0".into()));
        }
        let unit = layout.normalized()?;
        let mut unique: Vec<String> = Vec::new();
        for w in words {
            let w = w.as_ref();
            validate_word(w)?;
            unique.push(w.to_string());
        }
        unique.sort();
        unique.dedup();
        let templates = unique
            .iter()
            .map(|w| construct_template(w, &unit, config.resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            templates,
            radius: config.prune_radius * unit.key_pitch(),
            config,
            layout: unit,
        })
    }

    pub fn templates(&self) -> &[WordTemplate] {
        &self.templates
    }

    pub fn config(&self) -> &Shark2Config {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// The unit-width layout the templates live on.
    pub fn layout(&self) -> &KeyboardLayout {
        &self.layout
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub word: String,
    pub score: f64,
}

/// Ranks lexicon words for a raw gesture drawn on `layout`.
pub fn decode_topk(
    traj: &Trajectory,
    set: &TemplateSet,
    layout: &KeyboardLayout,
    k: usize,
) -> Result<Vec<Scored>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if set.is_empty() {
        return Err(Error::Empty("template set".into()));
    }
    let unit = normalize(traj, layout)?;
    let n = set.config.resolution;
    let points = sample_uniform(&unit.points, path_length(&unit.points), n);
    let shape = shape_normalize(&points);
    let (start, end) = (points[0], points[n - 1]);

    let survives = |t: &WordTemplate| {
        t.start().dist(start) <= set.radius && t.end().dist(end) <= set.radius
    };
    let mut pool: Vec<&WordTemplate> = set.templates.iter().filter(|t| survives(t)).collect();
    if pool.is_empty() {
        pool = set.templates.iter().collect();
    }

    let mut scored: Vec<Scored> = pool
        .into_iter()
        .map(|t| Scored {
            word: t.word.clone(),
            score: score_parts(&points, &shape, &t.ideal_path.points, &t.shape, set.config.weights),
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word)));
    scored.truncate(k);
    Ok(scored)
}
