//! Evaluation and data-analysis measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EncodedTrajectory, KeyboardLayout, Point, Trajectory};
use crate::shark2::word_waypoints;

/// Fraction of samples whose truth is among the first `k` predictions.
pub fn topk_accuracy<S: AsRef<str>>(predictions: &[Vec<S>], truths: &[S], k: usize) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, y)| p.iter().take(k).any(|w| w.as_ref() == y.as_ref()))
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate: edit distance over reference length.
pub fn cer(hypothesis: &str, reference: &str) -> Result<f64> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(Error::Empty("reference".into()));
    }
    Ok(levenshtein(hypothesis, reference) as f64 / n as f64)
}

/// Word error rate over whitespace-separated tokens.
pub fn wer(hypothesis: &str, reference: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(Error::Empty("reference".into()));
    }
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=r.len()).collect();
    let mut cur = vec![0; r.len() + 1];
    for (i, hw) in h.iter().enumerate() {
        cur[0] = i + 1;
        for (j, rw) in r.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(hw != rw))
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[r.len()] as f64 / r.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyTouchStats {
    pub key: char,
    pub ellipse_center: Point,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchPointStats {
    /// Average distance from per-key touch centroid to key center.
    pub adkc: f64,
    /// Average major axis length, `2 sqrt(lambda_max)` per key.
    pub amal: f64,
    pub per_key: Vec<KeyTouchStats>,
    /// Keys with exactly one sample (covariance undefined).
    pub excluded: Vec<char>,
}

/// Eigenvalues `(min, max)` of the symmetric matrix `[[a, b], [b, c]]`.
fn sym2_eigen(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = (a + c) / 2.0;
    let r = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    ((mean - r).max(0.0), (mean + r).max(0.0))
}

/// Per-key touch ellipses and the ADKC/AMAL summaries. Inputs are
/// `(intended key, touch point)` pairs in the same frame as `layout`.
pub fn touch_point_stats(samples: &[(char, Point)], layout: &KeyboardLayout) -> Result<TouchPointStats> {
    let mut groups: Vec<Vec<Point>> = vec![Vec::new(); crate::geometry::ALPHABET_SIZE];
    for &(key, p) in samples {
        let idx = crate::geometry::letter_index(key).ok_or(Error::UnknownKey(key))?;
        groups[idx].push(p);
    }
    let mut per_key = Vec::new();
    let mut excluded = Vec::new();
    for (key, pts) in layout.keys().iter().zip(&groups) {
        match pts.len() {
            0 => continue,
            1 => {
                excluded.push(key.label);
                continue;
            }
            _ => {}
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in pts {
            let (dx, dy) = (p.x - mx, p.y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let d = n - 1.0;
        let (lambda_min, lambda_max) = sym2_eigen(sxx / d, sxy / d, syy / d);
        per_key.push(KeyTouchStats {
            key: key.label,
            ellipse_center: Point::new(mx, my),
            lambda_min,
            lambda_max,
            n_points: pts.len(),
        });
    }
    let (adkc, amal) = if per_key.is_empty() {
        (0.0, 0.0)
    } else {
        let n = per_key.len() as f64;
        let adkc = per_key
            .iter()
            .map(|k| k.ellipse_center.dist(layout.key(k.key).unwrap().center))
            .sum::<f64>()
            / n;
        let amal = per_key.iter().map(|k| 2.0 * k.lambda_max.sqrt()).sum::<f64>() / n;
        (adkc, amal)
    };
    Ok(TouchPointStats {
        adkc,
        amal,
        per_key,
        excluded,
    })
}

/// One touch point per letter of `word`. Each letter owns the span of
/// trajectory arc-length fractions closest to its waypoint's fraction on the
/// ideal path; the touch is the sharpest turn inside that span, or the point
/// nearest the waypoint fraction when the span has no interior sample. First
/// and last letters take the endpoints. Repeated letters share a point.
pub fn touch_points(traj: &Trajectory, word: &str, layout: &KeyboardLayout) -> Result<Vec<(char, Point)>> {
    let waypoints = word_waypoints(word, layout)?;
    let ideal = cumulative_fractions(&waypoints);
    let pts = &traj.points;
    let actual = cumulative_fractions(pts);
    let last = waypoints.len() - 1;
    let picks: Vec<usize> = (0..=last)
        .map(|w| {
            if w == 0 {
                return 0;
            }
            if w == last {
                return pts.len() - 1;
            }
            let lo = (ideal[w - 1] + ideal[w]) / 2.0;
            let hi = (ideal[w] + ideal[w + 1]) / 2.0;
            let span = (1..pts.len() - 1).filter(|&i| actual[i] >= lo && actual[i] <= hi);
            // ties (e.g. a straight pass) go to the closest fraction
            let mut best: Option<(usize, f64, f64)> = None;
            for i in span {
                let t = turning_angle(pts[i - 1], pts[i], pts[i + 1]);
                let d = (actual[i] - ideal[w]).abs();
                let better = match best {
                    None => true,
                    Some((_, bt, bd)) => t > bt + ANGLE_TOL || ((t - bt).abs() <= ANGLE_TOL && d < bd),
                };
                if better {
                    best = Some((i, t, d));
                }
            }
            best.map_or_else(|| nearest_fraction(&actual, ideal[w]), |(i, _, _)| i)
        })
        .collect();
    let mut out = Vec::with_capacity(word.len());
    let mut w = 0;
    let mut prev = None;
    for c in word.chars() {
        if prev.is_some() && prev != Some(c) {
            w += 1;
        }
        prev = Some(c);
        out.push((c, pts[picks[w]]));
    }
    Ok(out)
}

const ANGLE_TOL: f64 = 1e-9;

fn nearest_fraction(fractions: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, f) in fractions.iter().enumerate() {
        if (f - target).abs() < (fractions[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Angle between the incoming and outgoing directions at `b`; 0 when
/// either step has zero length.
fn turning_angle(a: Point, b: Point, c: Point) -> f64 {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    if (ux == 0.0 && uy == 0.0) || (vx == 0.0 && vy == 0.0) {
        return 0.0;
    }
    (ux * vy - uy * vx).atan2(ux * vx + uy * vy).abs()
}

/// Arc length up to each point over total length; all zero for a
/// degenerate path.
fn cumulative_fractions(points: &[Point]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += points[i - 1].dist(*p);
        }
        cum.push(acc);
    }
    if acc > 0.0 {
        cum.iter_mut().for_each(|c| *c /= acc);
    }
    cum
}

/// Curvature at each interior sample by central differences; endpoints are
/// excluded and points with zero velocity get 0.
pub fn curvature(enc: &EncodedTrajectory) -> Result<Vec<f64>> {
    let p = &enc.points;
    if p.len() < 3 {
        return Err(Error::InvalidTrajectory(format!(
            "curvature needs at least 3 points, got {}",
            p.len()
        )));
    }
    Ok(p.windows(3)
        .map(|w| {
            let dx = (w[2].x - w[0].x) / 2.0;
            let dy = (w[2].y - w[0].y) / 2.0;
            let ddx = w[2].x - 2.0 * w[1].x + w[0].x;
            let ddy = w[2].y - 2.0 * w[1].y + w[0].y;
            let speed_sq = dx * dx + dy * dy;
            if speed_sq == 0.0 {
                0.0
            } else {
                (dx * ddy - dy * ddx).abs() / speed_sq.powf(1.5)
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean and linearly-interpolated quartiles.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Summary {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
