//! Gesture datasets in JSONL form and train/test splitting.
//!
//! Line 1 is a header `{"layout": "<name>"}` (an optional `"source"` is
//! kept); every following non-blank line is one sample
//! `{"word": "...", "user": "...", "points": [[x, y], ...]}` where each point
//! may carry a third element, its timestamp. Coordinates are raw layout units.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{validate_word, Point, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct GestureDataset {
    pub samples: Vec<Trajectory>,
    pub layout_name: String,
    pub source: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    word: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user: Option<String>,
    points: Vec<Vec<f64>>,
}

fn sample_from_line(line: SampleLine) -> std::result::Result<Trajectory, String> {
    validate_word(&line.word).map_err(|e| e.to_string())?;
    let timed = line.points.first().is_some_and(|p| p.len() == 3);
    let mut points = Vec::with_capacity(line.points.len());
    let mut times = Vec::new();
    for (i, p) in line.points.iter().enumerate() {
        match (p.len(), timed) {
            (2, false) => points.push(Point::new(p[0], p[1])),
            (3, true) => {
                points.push(Point::new(p[0], p[1]));
                times.push(p[2]);
            }
            _ => {
                return Err(format!(
                    "point {i} has {} values; expected all [x, y] or all [x, y, t]",
                    p.len()
                ))
            }
        }
    }
    let traj = Trajectory::with_times(points, timed.then_some(times)).map_err(|e| e.to_string())?;
    let traj = traj.labeled(line.word);
    Ok(match line.user {
        Some(u) => traj.with_user(u),
        None => traj,
    })
}

impl GestureDataset {
    pub fn new(samples: Vec<Trajectory>, layout_name: impl Into<String>, source: impl Into<String>) -> Result<Self> {
        for s in &samples {
            let word = s
                .word
                .as_deref()
                .ok_or_else(|| Error::InvalidTrajectory("sample without word".into()))?;
            validate_word(word)?;
            if s.points.len() < 2 {
                return Err(Error::InvalidTrajectory("sample with fewer than 2 points".into()));
            }
        }
        Ok(Self {
            samples,
            layout_name: layout_name.into(),
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct words, sorted.
    pub fn words(&self) -> Vec<String> {
        let mut w: Vec<String> = self.samples.iter().filter_map(|s| s.word.clone()).collect();
        w.sort();
        w.dedup();
        w
    }

    fn subset(&self, samples: Vec<Trajectory>) -> Self {
        Self {
            samples,
            layout_name: self.layout_name.clone(),
            source: self.source.clone(),
        }
    }

    pub fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hline, header)) = lines.next() else {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            });
        };
        let header: HeaderLine = match serde_json::from_str(header) {
            Ok(h) if hline == 0 => h,
            _ => {
                return Err(Error::MissingHeader {
                    path: path.to_path_buf(),
                })
            }
        };
        let mut samples = Vec::new();
        for (i, line) in lines {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let parsed: SampleLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            samples.push(sample_from_line(parsed).map_err(parse_err)?);
        }
        Ok(Self {
            samples,
            layout_name: header.layout,
            source: header.source.unwrap_or_else(|| path.display().to_string()),
        })
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_jsonl(&text, path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = HeaderLine {
            layout: self.layout_name.clone(),
            source: (!self.source.is_empty()).then(|| self.source.clone()),
        };
        writeln!(out, "{}", serde_json::to_string(&header).unwrap()).unwrap();
        for s in &self.samples {
            let points = s
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| match &s.times {
                    Some(ts) => vec![p.x, p.y, ts[i]],
                    None => vec![p.x, p.y],
                })
                .collect();
            let line = SampleLine {
                word: s.word.clone().unwrap_or_default(),
                user: s.user_id.clone(),
                points,
            };
            writeln!(out, "{}", serde_json::to_string(&line).unwrap()).unwrap();
        }
        out
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Leave-one-subject-out splits ordered by user id.
    pub fn loso_splits(&self) -> Result<Vec<Split>> {
        let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            let user = s.user_id.as_deref().ok_or_else(|| {
                Error::InvalidTrajectory(format!("sample {i} has no user id; LOSO needs one"))
            })?;
            by_user.entry(user).or_default().push(i);
        }
        if by_user.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "LOSO needs at least 2 users, found {}",
                by_user.len()
            )));
        }
        Ok(by_user
            .iter()
            .map(|(user, idx)| {
                let test: Vec<Trajectory> = idx.iter().map(|&i| self.samples[i].clone()).collect();
                let train: Vec<Trajectory> = self
                    .samples
                    .iter()
                    .filter(|s| s.user_id.as_deref() != Some(*user))
                    .cloned()
                    .collect();
                Split {
                    name: user.to_string(),
                    train: self.subset(train),
                    test: self.subset(test),
                }
            })
            .collect())
    }

    /// Seeded shuffle, then the first `round(n * fraction)` samples train.
    pub fn random_split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {train_fraction} must be in (0, 1)"
            )));
        }
        let n = self.samples.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::InvalidConfig(format!(
                "fraction {train_fraction} of {n} samples leaves one side empty"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |ids: &[usize]| self.subset(ids.iter().map(|&i| self.samples[i].clone()).collect());
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Held-out user (LOSO) or a split label.
    pub name: String,
    pub train: GestureDataset,
    pub test: GestureDataset,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(word: &str, user: &str, x: f64) -> Trajectory {
        Trajectory::new(vec![Point::new(x, 0.5), Point::new(x + 1.0, 1.5)])
            .unwrap()
            .labeled(word)
            .with_user(user)
    }

    fn parse(text: &str) -> Result<GestureDataset> {
        GestureDataset::parse_jsonl(text, Path::new("mem.jsonl"))
    }

    #[test]
    fn loads_header_and_samples() {
        let text = "{\"layout\": \"qwerty-default\"}\n\
            {\"word\": \"hi\", \"user\": \"u1\", \"points\": [[5.5, 1.5], [7.5, 0.5]]}\n\
            {\"word\": \"go\", \"user\": \"u2\", \"points\": [[4.75, 1.5, 0.0], [8.5, 0.5, 0.1]]}\n";
        let ds = parse(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.layout_name, "qwerty-default");
        assert_eq!(ds.samples[1].times, Some(vec![0.0, 0.1]));
    }

    #[test]
    fn rejects_bad_input() {
        let header = "{\"layout\": \"q\"}\n";
        let bad_word = format!("{header}{{\"word\": \"naïve\", \"user\": \"u\", \"points\": [[0,0],[1,1]]}}\n");
        assert!(matches!(parse(&bad_word), Err(Error::Parse { line: 2, .. })));
        let one_point = format!("{header}{{\"word\": \"a\", \"user\": \"u\", \"points\": [[0,0]]}}\n");
        assert!(matches!(parse(&one_point), Err(Error::Parse { line: 2, .. })));
        let garbage = format!("{header}{{not json\n");
        assert!(matches!(parse(&garbage), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse(""), Err(Error::EmptyFile { .. })));
        let no_header = "{\"word\": \"a\", \"user\": \"u\", \"points\": [[0,0],[1,1]]}\n";
        assert!(matches!(parse(no_header), Err(Error::MissingHeader { .. })));
        let mixed = format!("{header}{{\"word\": \"a\", \"points\": [[0,0,1],[1,1]]}}\n");
        assert!(matches!(parse(&mixed), Err(Error::Parse { .. })));
    }

    #[test]
    fn loso_partition() {
        let mut samples = Vec::new();
        for u in ["c", "a", "b"] {
            for i in 0..5 {
                samples.push(sample("cat", u, i as f64));
            }
        }
        let ds = GestureDataset::new(samples, "q", "t").unwrap();
        let splits = ds.loso_splits().unwrap();
        assert_eq!(splits.len(), 3);
        assert_eq!(splits.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        for s in &splits {
            assert_eq!(s.test.len(), 5);
            assert_eq!(s.train.len(), 10);
            assert!(s.test.samples.iter().all(|t| t.user_id.as_deref() == Some(s.name.as_str())));
        }
    }

    #[test]
    fn loso_uneven_and_single_user() {
        let mut samples = vec![sample("a", "A", 0.0)];
        samples.extend((0..9).map(|i| sample("b", "B", i as f64)));
        let ds = GestureDataset::new(samples.clone(), "q", "t").unwrap();
        let sizes: Vec<(usize, usize)> = ds
            .loso_splits()
            .unwrap()
            .iter()
            .map(|s| (s.train.len(), s.test.len()))
            .collect();
        assert_eq!(sizes, vec![(9, 1), (1, 9)]);

        let one = GestureDataset::new(samples[1..].to_vec(), "q", "t").unwrap();
        assert!(one.loso_splits().is_err());
    }

    #[test]
    fn duplicate_sample_stays_with_its_user() {
        let s = sample("dup", "A", 0.0);
        let mut twin = s.clone();
        twin.user_id = Some("B".into());
        let ds = GestureDataset::new(vec![s, twin], "q", "t").unwrap();
        let splits = ds.loso_splits().unwrap();
        assert_eq!(splits[0].test.samples[0].user_id.as_deref(), Some("A"));
        assert_eq!(splits[1].test.samples[0].user_id.as_deref(), Some("B"));
        assert_eq!(splits[0].test.len(), 1);
    }

    #[test]
    fn random_split_sizes() {
        let ds = GestureDataset::new((0..100).map(|i| sample("a", "u", i as f64)).collect(), "q", "t").unwrap();
        let (tr, te) = ds.random_split(0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let (tr2, te2) = ds.random_split(0.8, 1).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);

        let two = GestureDataset::new(ds.samples[..2].to_vec(), "q", "t").unwrap();
        let (a, b) = two.random_split(0.5, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert!(two.random_split(0.1, 0).is_err());
        assert!(ds.random_split(1.0, 0).is_err());
    }
}
