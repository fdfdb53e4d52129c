//! Coarse discretization of resampled trajectories into per-key regions.
//!
//! Each key owns an enlarged region (square or ellipse) whose size is the key
//! size multiplied by `ratio`. A point is assigned to the containing region
//! whose key center is nearest; points outside every region fall back to the
//! nearest key center. Exact distance ties go to the alphabetically first key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EncodedTrajectory, Key, KeyboardLayout, Point, ALPHABET_SIZE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionShape {
    #[default]
    Square,
    Ellipse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    OneHot,
    Integer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerConfig {
    pub region_shape: RegionShape,
    pub ratio: f64,
    pub encoding: Encoding,
}

impl Default for DiscretizerConfig {
    fn default() -> Self {
        Self {
            region_shape: RegionShape::Square,
            ratio: 2.0,
            encoding: Encoding::OneHot,
        }
    }
}

impl DiscretizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratio.is_nan() || self.ratio <= 0.0 || !self.ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "discretizer ratio {} must be > 0",
                self.ratio
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedTrajectory {
    pub indices: Vec<usize>,
    /// Row-major `T x 26` indicator matrix, present for one-hot encoding.
    pub one_hot: Option<Vec<f64>>,
}

impl DiscretizedTrajectory {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn labels(&self) -> String {
        self.indices
            .iter()
            .map(|&i| crate::geometry::index_letter(i))
            .collect()
    }
}

/// Whether `point` lies in the (closed) region of `key`.
pub fn region_contains(point: Point, key: &Key, cfg: &DiscretizerConfig) -> bool {
    let dx = (point.x - key.center.x).abs();
    let dy = (point.y - key.center.y).abs();
    match cfg.region_shape {
        RegionShape::Square => {
            let half_w = cfg.ratio * key.width / 2.0;
            let half_h = cfg.ratio * key.height / 2.0;
            dx <= half_w && dy <= half_h
        }
        RegionShape::Ellipse => {
            let a = cfg.ratio * key.width;
            let b = cfg.ratio * key.height;
            (dx * dx) / (a * a) + (dy * dy) / (b * b) <= 1.0
        }
    }
}

/// Region index for a single point.
pub fn assign_region(point: Point, layout: &KeyboardLayout, cfg: &DiscretizerConfig) -> usize {
    let mut best_inside: Option<(f64, usize)> = None;
    let mut best_any = (f64::INFINITY, 0);
    for (i, key) in layout.keys().iter().enumerate() {
        let d = point.dist_sq(key.center);
        // strict comparison keeps the earlier (alphabetical) key on ties
        if d < best_any.0 {
            best_any = (d, i);
        }
        if region_contains(point, key, cfg) && best_inside.is_none_or(|(bd, _)| d < bd) {
            best_inside = Some((d, i));
        }
    }
    best_inside.unwrap_or(best_any).1
}

pub fn discretize(
    enc: &EncodedTrajectory,
    layout: &KeyboardLayout,
    cfg: &DiscretizerConfig,
) -> Result<DiscretizedTrajectory> {
    cfg.validate()?;
    let indices: Vec<usize> = enc
        .points
        .iter()
        .map(|&p| assign_region(p, layout, cfg))
        .collect();
    let one_hot = match cfg.encoding {
        Encoding::OneHot => Some(encode_one_hot(&indices)?),
        Encoding::Integer => None,
    };
    Ok(DiscretizedTrajectory { indices, one_hot })
}

/// Row-major `T x 26` one-hot matrix.
pub fn encode_one_hot(indices: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; indices.len() * ALPHABET_SIZE];
    for (t, &i) in indices.iter().enumerate() {
        if i >= ALPHABET_SIZE {
            return Err(Error::IndexOutOfRange(i));
        }
        out[t * ALPHABET_SIZE + i] = 1.0;
    }
    Ok(out)
}

/// Integer encoding used by the encoding ablation: `a` = 1, `b` = 2, ...
pub fn encode_integer(indices: &[usize]) -> Result<Vec<f64>> {
    indices
        .iter()
        .map(|&i| {
            if i >= ALPHABET_SIZE {
                Err(Error::IndexOutOfRange(i))
            } else {
                Ok((i + 1) as f64)
            }
        })
        .collect()
}

/// Writes a `T x 26` matrix as CSV with a letter header row.
pub fn one_hot_csv(one_hot: &[f64]) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..ALPHABET_SIZE)
        .map(|i| crate::geometry::index_letter(i).to_string())
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in one_hot.chunks(ALPHABET_SIZE) {
        let cells: Vec<String> = row.iter().map(|v| format!("{}", *v as u8)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
