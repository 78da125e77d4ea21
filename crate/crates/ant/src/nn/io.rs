//! Model file format.
//!
//! Layout: magic `ANTM`, format version `u16` LE, a length-prefixed JSON
//! metadata block (spec, encoding, normalization stats, labels, training
//! seed), the parameter tensors as little-endian `f32` blobs in layer
//! order (weight then bias per parameterized layer), and a trailing CRC32
//! of everything before it.

use super::{LayerState, Model, ModelSpec, NnError};
use crate::features::{EncodingKind, NormStats};
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"ANTM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    encoding: EncodingKind,
    norm_stats: Option<NormStats>,
    labels: Vec<String>,
    train_seed: u64,
}

fn push_f32s<'a>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Full serialized image of a model (what `save_model` writes).
pub(crate) fn to_bytes(model: &Model) -> Vec<u8> {
    let header = Header {
        spec: model.spec.clone(),
        encoding: model.encoding.clone(),
        norm_stats: model.norm_stats,
        labels: model.labels.clone(),
        train_seed: model.train_seed,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for state in &model.weights {
        match state {
            LayerState::Conv { w, b } => {
                push_f32s(&mut out, w.iter());
                push_f32s(&mut out, b.iter());
            }
            LayerState::Dense { w, b } => {
                push_f32s(&mut out, w.iter());
                push_f32s(&mut out, b.iter());
            }
            LayerState::Stateless => {}
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let slice = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(slice)
    }

    fn f32s(&mut self, n: usize) -> Option<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    }
}

pub fn load_model(path: &Path) -> Result<Model, NnError> {
    let bytes = std::fs::read(path)?;
    let bad = |reason: &str| NnError::BadModelFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    if bytes.len() < 4 + 2 + 4 + 4 {
        return Err(bad("truncated file"));
    }
    // The trailing checksum covers everything before it, so corruption
    // anywhere — including inside the JSON header — is caught first.
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(bad("checksum mismatch"));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("bad magic (not a model file)"));
    }
    let version = u16::from_le_bytes(r.take(2).unwrap().try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(NnError::BadModelFile {
            path: path.to_path_buf(),
            reason: format!("unsupported format version {version}"),
        });
    }
    let json_len = u32::from_le_bytes(r.take(4).unwrap().try_into().unwrap()) as usize;
    let json = r.take(json_len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json)
        .map_err(|e| bad(&format!("unreadable header: {e}")))?;
    header
        .spec
        .validate()
        .map_err(|e| bad(&format!("invalid stored spec: {e}")))?;

    let mut model = Model::new(
        header.spec,
        header.encoding,
        header.labels,
        header.norm_stats,
        header.train_seed,
    )?;
    for state in &mut model.weights {
        match state {
            LayerState::Conv { w, b } => {
                let dim = w.dim();
                let data = r
                    .f32s(w.len())
                    .ok_or_else(|| bad("truncated weight block"))?;
                *w = Array3::from_shape_vec(dim, data).unwrap();
                let bias = r.f32s(b.len()).ok_or_else(|| bad("truncated bias block"))?;
                *b = Array1::from_vec(bias);
            }
            LayerState::Dense { w, b } => {
                let dim = w.dim();
                let data = r
                    .f32s(w.len())
                    .ok_or_else(|| bad("truncated weight block"))?;
                *w = Array2::from_shape_vec(dim, data).unwrap();
                let bias = r.f32s(b.len()).ok_or_else(|| bad("truncated bias block"))?;
                *b = Array1::from_vec(bias);
            }
            LayerState::Stateless => {}
        }
    }
    if r.pos != body.len() {
        return Err(bad("trailing bytes after weight blocks"));
    }
    Ok(model)
}
