//! Parametric synthetic gesture generator: jittered letter-center waypoints,
//! linear interpolation, moving-average smoothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{validate_word, KeyboardLayout, Point, Trajectory};
use crate::shark2::word_waypoints;

pub const SYNTH_USER: &str = "synth";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Standard deviation of waypoint jitter, in key widths.
    pub noise_sigma: f64,
    /// Moving-average window in samples (odd).
    pub smoothing_window: usize,
    pub points_per_segment: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.25,
            smoothing_window: 5,
            points_per_segment: 12,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(
                "smoothing_window must be odd and >= 1".into(),
            ));
        }
        if self.points_per_segment == 0 {
            return Err(Error::InvalidConfig("points_per_segment must be >= 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable per-sample seed derived from the run seed, the word and the
/// sample index.
pub fn sample_seed(seed: u64, word: &str, index: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ h) ^ index as u64)
}

/// Centered moving average; the window shrinks symmetrically near the ends
/// so the first and last points are preserved.
pub fn smooth(points: &[Point], window: usize) -> Vec<Point> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &points[i - h..=i + h];
            let m = span.len() as f64;
            Point::new(
                span.iter().map(|p| p.x).sum::<f64>() / m,
                span.iter().map(|p| p.y).sum::<f64>() / m,
            )
        })
        .collect()
}

/// Piecewise-linear densification with `per_segment` points per segment.
fn interpolate(waypoints: &[Point], per_segment: usize) -> Vec<Point> {
    if waypoints.len() == 1 {
        return vec![waypoints[0]; per_segment.max(2)];
    }
    let mut out = Vec::with_capacity((waypoints.len() - 1) * per_segment + 1);
    for w in waypoints.windows(2) {
        for i in 0..per_segment {
            out.push(w[0].lerp(w[1], i as f64 / per_segment as f64));
        }
    }
    out.push(*waypoints.last().unwrap());
    out
}

/// Jittered waypoints for one sample; exposed for generator diagnostics.
pub fn jittered_waypoints(
    word: &str,
    layout: &KeyboardLayout,
    sigma_units: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point>> {
    let mut pts = word_waypoints(word, layout)?;
    if sigma_units > 0.0 {
        let normal = Normal::new(0.0, sigma_units)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for p in &mut pts {
            p.x += normal.sample(rng);
            p.y += normal.sample(rng);
        }
    }
    Ok(pts)
}

/// `count` labeled samples of `word` in the layout's own units.
pub fn generate(
    word: &str,
    layout: &KeyboardLayout,
    cfg: &SynthConfig,
    count: usize,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    validate_word(word)?;
    let sigma = cfg.noise_sigma * layout.key_pitch();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, word, i));
            let waypoints = jittered_waypoints(word, layout, sigma, &mut rng)?;
            let dense = interpolate(&waypoints, cfg.points_per_segment);
            let points = smooth(&dense, cfg.smoothing_window);
            Ok(Trajectory::new(points)?.labeled(word).with_user(SYNTH_USER))
        })
        .collect()
}
