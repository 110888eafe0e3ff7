//! NNWT model files.
//!
//! All integers are little-endian:
//!
//! ```text
//! "NNWT" | u16 version = 1 | u16 layer_count
//! per layer:
//!   u32 in_dim | u32 out_dim | u8 activation (0 = ReLU, 1 = Sigmoid)
//!   f32 dropout_rate | f32 activity_reg
//!   in_dim * out_dim f32 weights, row-major with row = input index
//!   out_dim f32 biases
//! ```
//!
//! Parameters are stored as f32, so saving rounds a model to single
//! precision. A loaded model saves back to the same bytes.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::model::{Activation, LayerSpec, MlpModel};
use crate::binio::{Cursor, ShortRead};

pub const MAGIC: &[u8; 4] = b"NNWT";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum NnwtError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not an NNWT file (magic bytes {found:02x?})")]
    NotNnwt { found: Vec<u8> },
    #[error("unsupported NNWT version {version} at offset {offset}")]
    UnsupportedVersion { version: u16, offset: usize },
    #[error("NNWT file truncated at offset {offset} (needed {needed} more bytes)")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown activation code {code} at offset {offset}")]
    BadActivation { code: u8, offset: usize },
    #[error("invalid layer at offset {offset}: {reason}")]
    InvalidLayer { offset: usize, reason: String },
    #[error("{extra} unexpected bytes after the last layer at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

impl From<ShortRead> for NnwtError {
    fn from(e: ShortRead) -> Self {
        NnwtError::Truncated {
            offset: e.offset,
            needed: e.needed,
        }
    }
}

pub fn to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * model.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u16::try_from(model.layers().len()).expect("layer count fits in u16");
    out.extend_from_slice(&count.to_le_bytes());
    for layer in model.layers() {
        let spec = layer.spec();
        out.extend_from_slice(&(spec.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(spec.out_dim as u32).to_le_bytes());
        out.push(spec.activation.code());
        out.extend_from_slice(&(spec.dropout_rate as f32).to_le_bytes());
        out.extend_from_slice(&(spec.activity_reg as f32).to_le_bytes());
        // Standard layout iterates row-major.
        for &w in layer.weights().iter() {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        for &b in layer.bias().iter() {
            out.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel, NnwtError> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.take(4).map_err(|_| NnwtError::NotNnwt {
        found: bytes.iter().take(4).copied().collect(),
    })?;
    if magic != MAGIC {
        return Err(NnwtError::NotNnwt {
            found: magic.to_vec(),
        });
    }
    let version_at = cur.offset();
    let version = cur.u16()?;
    if version != VERSION {
        return Err(NnwtError::UnsupportedVersion {
            version,
            offset: version_at,
        });
    }
    let count = cur.u16()? as usize;
    let mut parts = Vec::with_capacity(count);
    for _ in 0..count {
        let layer_at = cur.offset();
        let in_dim = cur.u32()? as usize;
        let out_dim = cur.u32()? as usize;
        let act_at = cur.offset();
        let code = cur.u8()?;
        let activation = Activation::from_code(code).ok_or(NnwtError::BadActivation {
            code,
            offset: act_at,
        })?;
        let dropout = f64::from(cur.f32()?);
        let reg = f64::from(cur.f32()?);
        if in_dim == 0 || out_dim == 0 {
            return Err(NnwtError::InvalidLayer {
                offset: layer_at,
                reason: format!("zero dimension {in_dim}x{out_dim}"),
            });
        }
        let n_weights = in_dim.checked_mul(out_dim).ok_or(NnwtError::InvalidLayer {
            offset: layer_at,
            reason: "dimension overflow".into(),
        })?;
        let weights = cur.f32s(n_weights)?;
        let bias = cur.f32s(out_dim)?;
        let spec = LayerSpec::new(in_dim, out_dim, activation)
            .with_dropout(dropout)
            .with_activity_reg(reg);
        let weights = Array2::from_shape_vec(
            (in_dim, out_dim),
            weights.into_iter().map(f64::from).collect(),
        )
        .expect("shape matches length");
        let bias = Array1::from_iter(bias.into_iter().map(f64::from));
        parts.push((layer_at, spec, weights, bias));
    }
    if cur.remaining() > 0 {
        return Err(NnwtError::TrailingBytes {
            offset: cur.offset(),
            extra: cur.remaining(),
        });
    }
    let offsets: Vec<usize> = parts.iter().map(|p| p.0).collect();
    MlpModel::from_parts(parts.into_iter().map(|(_, s, w, b)| (s, w, b)).collect()).map_err(|e| {
        let offset = match &e {
            super::NnError::InvalidLayer { index, .. } => offsets.get(*index).copied(),
            _ => None,
        };
        NnwtError::InvalidLayer {
            offset: offset.unwrap_or(8),
            reason: e.to_string(),
        }
    })
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), NnwtError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&to_bytes(model))?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel, NnwtError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MlpModel {
        MlpModel::init(
            &[
                LayerSpec::new(5, 4, Activation::Relu)
                    .with_dropout(0.55)
                    .with_activity_reg(1e-4),
                LayerSpec::new(4, 3, Activation::Sigmoid),
            ],
            8,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_at_f32_precision() {
        let m = model();
        let bytes = to_bytes(&m);
        let loaded = from_bytes(&bytes).unwrap();
        for (a, b) in m.parameters().zip(loaded.parameters()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(f64::from(*a as f32), *b);
        }
        assert_eq!(loaded.layers()[0].spec().dropout_rate, f64::from(0.55f32));
        assert_eq!(to_bytes(&loaded), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&model());
        assert_eq!(&bytes[..4], b"NNWT");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[2, 0]);
        assert_eq!(&bytes[8..12], &[5, 0, 0, 0]);
        assert_eq!(bytes[16], 0);
        let expected_len = 8 + (4 + 4 + 1 + 4 + 4) * 2 + 4 * (5 * 4 + 4 + 4 * 3 + 3);
        assert_eq!(bytes.len(), expected_len);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = to_bytes(&model());

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(from_bytes(&wrong), Err(NnwtError::NotNnwt { .. })));
        assert!(matches!(from_bytes(b"NN"), Err(NnwtError::NotNnwt { .. })));

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            from_bytes(&v2),
            Err(NnwtError::UnsupportedVersion {
                version: 2,
                offset: 4
            })
        ));

        let cut = &bytes[..bytes.len() - 3];
        match from_bytes(cut) {
            Err(NnwtError::Truncated { offset, .. }) => assert!(offset < cut.len()),
            other => panic!("expected truncation, got {other:?}"),
        }

        let mut act = bytes.clone();
        act[16] = 9;
        assert!(matches!(
            from_bytes(&act),
            Err(NnwtError::BadActivation {
                code: 9,
                offset: 16
            })
        ));

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            from_bytes(&extra),
            Err(NnwtError::TrailingBytes { .. })
        ));
    }

    #[test]
    fn structural_invariants_checked_on_load() {
        // Single ReLU output layer violates the 3-sigmoid-output rule.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"NNWT");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&0f32.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
        bytes.extend([0u8; 4 * 6]);
        assert!(matches!(
            from_bytes(&bytes),
            Err(NnwtError::InvalidLayer { offset: 8, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nnwt");
        let m = model();
        save_model(&m, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(to_bytes(&loaded), to_bytes(&m));
        assert!(matches!(
            load_model(dir.path().join("missing")),
            Err(NnwtError::Io(_))
        ));
    }
}
