//! Character-level neural decoder: stacked bidirectional LSTM, a dense
//! ReLU + layer-norm block and a 27-way softmax trained with CTC.
//!
//! Parameters live in one flat buffer with named tensor views so the
//! optimizer, weight decay, serialization and gradient checks all treat
//! them uniformly.

mod io;
mod model;
mod train;

pub use io::{
    decode_model, encode_model, load_params, read_model, save_params, write_model, ModelFile,
    MODEL_MAGIC,
};
pub use model::ForwardCache;
pub use train::{
    evaluate_examples, train, EpochMetrics, EvalSummary, Example, TrainConfig, TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub lstm_layers: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub dense_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_hidden(48)
    }
}

impl ModelConfig {
    /// Desk-scale defaults with a given hidden size; dense width is twice it.
    pub fn with_hidden(hidden_dim: usize) -> Self {
        Self {
            input_dim: crate::geometry::ALPHABET_SIZE,
            lstm_layers: 2,
            hidden_dim,
            dropout_rate: 0.3,
            dense_dim: 2 * hidden_dim,
            output_dim: NUM_CLASSES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "output_dim must be {NUM_CLASSES}, got {}",
                self.output_dim
            )));
        }
        if self.input_dim == 0 || self.lstm_layers == 0 || self.hidden_dim == 0 || self.dense_dim == 0 {
            return Err(Error::InvalidConfig("all model dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.hidden_dim
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into the flat parameter buffer, in elements.
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmOffsets {
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

/// Element offsets of every tensor, resolved once per config.
#[derive(Clone, Debug)]
pub(crate) struct Offsets {
    /// `lstm[layer][direction]`, direction 0 forward, 1 backward.
    pub lstm: Vec<[LstmOffsets; 2]>,
    pub dense_w: usize,
    pub dense_b: usize,
    pub ln_gain: usize,
    pub ln_bias: usize,
    pub out_w: usize,
    pub out_b: usize,
}

fn build_specs(cfg: &ModelConfig) -> (Vec<TensorSpec>, Offsets) {
    let mut specs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, rows: usize, cols: usize| {
        let at = offset;
        specs.push(TensorSpec {
            name,
            rows,
            cols,
            offset: at,
        });
        offset += rows * cols;
        at
    };
    let h = cfg.hidden_dim;
    let mut lstm = Vec::with_capacity(cfg.lstm_layers);
    for layer in 0..cfg.lstm_layers {
        let input = cfg.layer_input(layer);
        let mut dirs = [LstmOffsets { w: 0, u: 0, b: 0 }; 2];
        for (d, dir) in ["fwd", "bwd"].iter().enumerate() {
            dirs[d] = LstmOffsets {
                w: push(format!("lstm{layer}.{dir}.w_input"), 4 * h, input),
                u: push(format!("lstm{layer}.{dir}.w_hidden"), 4 * h, h),
                b: push(format!("lstm{layer}.{dir}.bias"), 4 * h, 1),
            };
        }
        lstm.push(dirs);
    }
    let dense_w = push("dense.w".into(), cfg.dense_dim, 2 * h);
    let dense_b = push("dense.bias".into(), cfg.dense_dim, 1);
    let ln_gain = push("norm.gain".into(), cfg.dense_dim, 1);
    let ln_bias = push("norm.bias".into(), cfg.dense_dim, 1);
    let out_w = push("output.w".into(), NUM_CLASSES, cfg.dense_dim);
    let out_b = push("output.bias".into(), NUM_CLASSES, 1);
    (
        specs,
        Offsets {
            lstm,
            dense_w,
            dense_b,
            ln_gain,
            ln_bias,
            out_w,
            out_b,
        },
    )
}

/// All trainable parameters of the decoder.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    specs: Vec<TensorSpec>,
    pub(crate) offsets: Offsets,
    data: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.specs == other.specs
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (specs, offsets) = build_specs(&config);
        let n = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        Ok(Self {
            config,
            specs,
            offsets,
            data: vec![0.0; n],
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization from
    /// `config.seed`; layer-norm gain starts at 1 and its bias at 0.
    pub fn init(config: ModelConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        for i in 0..p.specs.len() {
            let spec = p.specs[i].clone();
            let fan_in = if spec.name.ends_with("w_input") || spec.name.ends_with(".w") {
                spec.cols
            } else if spec.name.starts_with("lstm") {
                h
            } else if spec.name.starts_with("dense") {
                2 * h
            } else if spec.name.starts_with("output") {
                config.dense_dim
            } else {
                0
            };
            let slice = &mut p.data[spec.offset..spec.offset + spec.len()];
            if spec.name == "norm.gain" {
                slice.fill(1.0);
            } else if spec.name == "norm.bias" {
                slice.fill(0.0);
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in slice {
                    *v = rng.random_range(-bound..=bound);
                }
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.offset..s.offset + s.len()])
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// A zeroed buffer shaped like the parameters, for gradients.
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }
}
