//! End-to-end decoding: raw trajectory to ranked word candidates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ctc::{beam_decode_topk, BeamConfig, Candidate, LabelSequence};
use crate::discretize::{discretize, DiscretizerConfig, Encoding, RegionShape};
use crate::error::{Error, Result};
use crate::geometry::{normalize, resample, Clamp, EncodedTrajectory, KeyboardLayout, Trajectory, ALPHABET_SIZE};
use crate::lexicon::LexiconTrie;
use crate::neural::{Example, ModelFile};
use crate::shark2::{decode_topk, TemplateSet};

/// What the network sees at each frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// One-hot region indices, 26 wide.
    #[default]
    OneHot,
    /// Region index + 1 as a single scalar.
    Integer,
    /// Resampled (x, y) in key widths.
    Cartesian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preprocessor {
    pub encoding: InputEncoding,
    pub region_shape: RegionShape,
    pub ratio: f64,
    /// Resampling step in key widths.
    pub step: f64,
    pub clamp: Clamp,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            encoding: InputEncoding::OneHot,
            region_shape: RegionShape::Square,
            ratio: 2.0,
            step: 0.25,
            clamp: Clamp::default(),
        }
    }
}

/// Network input for one trajectory, row-major `frames x input_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub data: Vec<f64>,
    pub frames: usize,
    pub indices: Option<Vec<usize>>,
}

impl Preprocessor {
    pub fn with_encoding(encoding: InputEncoding) -> Self {
        Self {
            encoding,
            ..Self::default()
        }
    }

    pub fn for_input_dim(dim: usize) -> Result<Self> {
        let encoding = match dim {
            ALPHABET_SIZE => InputEncoding::OneHot,
            1 => InputEncoding::Integer,
            2 => InputEncoding::Cartesian,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "no input encoding produces {dim} features"
                )))
            }
        };
        Ok(Self::with_encoding(encoding))
    }

    pub fn input_dim(&self) -> usize {
        match self.encoding {
            InputEncoding::OneHot => ALPHABET_SIZE,
            InputEncoding::Integer => 1,
            InputEncoding::Cartesian => 2,
        }
    }

    pub fn discretizer(&self) -> DiscretizerConfig {
        DiscretizerConfig {
            region_shape: self.region_shape,
            ratio: self.ratio,
            encoding: match self.encoding {
                InputEncoding::Integer => Encoding::Integer,
                _ => Encoding::OneHot,
            },
        }
    }

    /// Normalizes to the unit-width keyboard and resamples. Returns the
    /// resampled trajectory with the unit layout it is expressed on.
    pub fn encode(&self, traj: &Trajectory, layout: &KeyboardLayout) -> Result<(EncodedTrajectory, KeyboardLayout)> {
        let unit = layout.normalized()?;
        let norm = normalize(traj, layout)?;
        let enc = resample(&norm, self.step * unit.key_pitch(), self.clamp)?;
        Ok((enc, unit))
    }

    pub fn features(&self, traj: &Trajectory, layout: &KeyboardLayout) -> Result<Features> {
        let (enc, unit) = self.encode(traj, layout)?;
        let frames = enc.len();
        match self.encoding {
            InputEncoding::Cartesian => {
                let pitch = unit.key_pitch();
                let data = enc.points.iter().flat_map(|p| [p.x / pitch, p.y / pitch]).collect();
                Ok(Features {
                    data,
                    frames,
                    indices: None,
                })
            }
            InputEncoding::OneHot | InputEncoding::Integer => {
                let d = discretize(&enc, &unit, &self.discretizer())?;
                let data = match d.one_hot {
                    Some(m) => m,
                    None => crate::discretize::encode_integer(&d.indices)?,
                };
                Ok(Features {
                    data,
                    frames,
                    indices: Some(d.indices),
                })
            }
        }
    }

    /// Builds a training example from a labeled trajectory.
    pub fn example(&self, traj: &Trajectory, layout: &KeyboardLayout) -> Result<Example> {
        let word = traj
            .word
            .clone()
            .ok_or_else(|| Error::InvalidTrajectory("sample has no word label".into()))?;
        let target = LabelSequence::from_word(&word)?;
        let f = self.features(traj, layout)?;
        Ok(Example {
            input: f.data,
            frames: f.frames,
            target,
            word,
        })
    }

    pub fn examples(&self, samples: &[Trajectory], layout: &KeyboardLayout) -> Result<Vec<Example>> {
        samples.iter().map(|s| self.example(s, layout)).collect()
    }
}

/// A trained network plus its lexicon-constrained beam search.
#[derive(Clone, Debug)]
pub struct NeuralDecoder {
    pub model: ModelFile,
    pub beam: BeamConfig,
}

impl NeuralDecoder {
    pub fn new(model: ModelFile, lexicon: Option<Arc<LexiconTrie>>, beam_width: usize, k: usize) -> Result<Self> {
        let beam = BeamConfig {
            beam_width,
            k,
            lexicon,
        };
        beam.validate()?;
        Ok(Self { model, beam })
    }

    pub fn decode(&self, traj: &Trajectory, layout: &KeyboardLayout, k: usize) -> Result<Vec<Candidate>> {
        let f = self.model.preprocess.features(traj, layout)?;
        let lattice = self.model.params.forward(&f.data, f.frames, None)?;
        let beam = BeamConfig {
            k,
            beam_width: self.beam.beam_width.max(k),
            lexicon: self.beam.lexicon.clone(),
        };
        beam_decode_topk(&lattice, &beam)
    }
}

#[derive(Clone, Debug)]
pub enum Decoder {
    Neural(NeuralDecoder),
    Shark2(TemplateSet),
}

impl Decoder {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Neural(d) if d.model.preprocess.encoding == InputEncoding::Cartesian => "conventional",
            Decoder::Neural(_) => "neural",
            Decoder::Shark2(_) => "shark2",
        }
    }

    /// Top-`k` words. For SHARK² the `log_prob` field carries the
    /// similarity score (0 best, more negative worse).
    pub fn decode(&self, traj: &Trajectory, layout: &KeyboardLayout, k: usize) -> Result<Vec<Candidate>> {
        match self {
            Decoder::Neural(d) => d.decode(traj, layout, k),
            Decoder::Shark2(set) => Ok(decode_topk(traj, set, layout, k)?
                .into_iter()
                .map(|s| Candidate {
                    word: s.word,
                    log_prob: s.score,
                })
                .collect()),
        }
    }
}
