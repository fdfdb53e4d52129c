//! Word-gesture keyboard decoding.
//!
//! Trajectories are resampled, discretized into key regions and decoded
//! either by a BiLSTM-CTC network with lexicon-constrained beam search or
//! by the SHARK² template matcher.

pub mod ctc;
pub mod dataset;
pub mod discretize;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod lexicon;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod shark2;
pub mod synthgen;

pub use ctc::{beam_decode_topk, BeamConfig, Candidate, LabelSequence};
pub use dataset::{GestureDataset, Split};
pub use discretize::{DiscretizerConfig, Encoding, RegionShape};
pub use error::{Error, Result};
pub use geometry::{default_qwerty, Clamp, EncodedTrajectory, Key, KeyboardLayout, Point, Trajectory};
pub use lattice::{ProbLattice, BLANK, NUM_CLASSES};
pub use lexicon::LexiconTrie;
pub use neural::{ModelConfig, ModelFile, ModelParams, TrainConfig};
pub use pipeline::{Decoder, InputEncoding, NeuralDecoder, Preprocessor};
pub use shark2::{Shark2Config, TemplateSet};
pub use synthgen::SynthConfig;
