//! Model file format.
//!
//! ```text
//! "G2T1" | u32 LE header length | JSON header | f64 LE tensors
//! ```
//!
//! The header carries the format version, model config, output class order,
//! the preprocessing the model was trained with, and each tensor's name,
//! shape and byte offset relative to the start of the tensor data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::lattice::NUM_CLASSES;
use crate::pipeline::Preprocessor;

pub const MODEL_MAGIC: &[u8; 4] = b"G2T1";
const FORMAT_VERSION: u32 = 1;
const BLANK_LABEL: &str = "<blank>";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    bytes: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    class_order: Vec<String>,
    preprocess: Preprocessor,
    tensors: Vec<TensorEntry>,
}

/// Parameters together with the preprocessing they expect.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub params: ModelParams,
    pub preprocess: Preprocessor,
}

fn class_order() -> Vec<String> {
    (0..NUM_CLASSES)
        .map(|c| match crate::lattice::class_char(c) {
            Some(ch) => ch.to_string(),
            None => BLANK_LABEL.to_string(),
        })
        .collect()
}

pub fn encode_model(model: &ModelFile) -> Vec<u8> {
    let params = &model.params;
    let tensors = params
        .specs()
        .iter()
        .map(|s| TensorEntry {
            name: s.name.clone(),
            rows: s.rows,
            cols: s.cols,
            offset: s.offset * 8,
            bytes: s.len() * 8,
        })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: *params.config(),
        class_order: class_order(),
        preprocess: model.preprocess.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + params.len() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("missing magic".into()));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated("missing header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let data_start = 8 + header_len;
    if bytes.len() < data_start {
        return Err(Error::Truncated(format!(
            "header needs {header_len} bytes, {} available",
            bytes.len() - 8
        )));
    }
    let value: serde_json::Value =
        serde_json::from_slice(&bytes[8..data_start]).map_err(|e| Error::BadHeader(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::BadHeader("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let header: Header = serde_json::from_value(value).map_err(|e| Error::BadHeader(e.to_string()))?;
    if header.class_order != class_order() {
        return Err(Error::BadHeader("unexpected class order".into()));
    }

    let mut params = ModelParams::zeros(header.config)?;
    if header.tensors.len() != params.specs().len() {
        return Err(Error::ShapeMismatch {
            what: "tensor count".into(),
            expected: params.specs().len().to_string(),
            actual: header.tensors.len().to_string(),
        });
    }
    let data = &bytes[data_start..];
    let specs = params.specs().to_vec();
    for (entry, spec) in header.tensors.iter().zip(&specs) {
        if entry.name != spec.name || entry.rows != spec.rows || entry.cols != spec.cols || entry.bytes != spec.len() * 8 {
            return Err(Error::ShapeMismatch {
                what: format!("tensor {}", spec.name),
                expected: format!("{} {}x{}", spec.name, spec.rows, spec.cols),
                actual: format!("{} {}x{}", entry.name, entry.rows, entry.cols),
            });
        }
        let end = entry.offset + entry.bytes;
        if end > data.len() {
            return Err(Error::Truncated(format!(
                "tensor {} ends at byte {end}, data has {}",
                entry.name,
                data.len()
            )));
        }
        let dst = &mut params.as_mut_slice()[spec.offset..spec.offset + spec.len()];
        for (v, chunk) in dst.iter_mut().zip(data[entry.offset..end].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if header.preprocess.input_dim() != header.config.input_dim {
        return Err(Error::ShapeMismatch {
            what: "preprocessing input width".into(),
            expected: header.config.input_dim.to_string(),
            actual: header.preprocess.input_dim().to_string(),
        });
    }
    Ok(ModelFile {
        params,
        preprocess: header.preprocess,
    })
}

pub fn write_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    decode_model(&std::fs::read(path)?)
}

/// Saves parameters with the default preprocessing for their input width.
pub fn save_params(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let preprocess = Preprocessor::for_input_dim(params.config().input_dim)?;
    write_model(
        path,
        &ModelFile {
            params: params.clone(),
            preprocess,
        },
    )
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    Ok(read_model(path)?.params)
}
