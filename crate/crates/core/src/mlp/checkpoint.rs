//! Versioned binary model checkpoints.
//!
//! Layout: the magic line, a little-endian u64 header length, a JSON
//! header (config + layer shapes), then row-major little-endian f64
//! parameter bytes per layer (weights, then biases). Round-trips are
//! bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, MlpConfig, MlpError, MlpModel};

pub const MLP_MAGIC: &[u8] = b"SHIFTLAB-MLP-v1\n";

#[derive(Serialize, Deserialize)]
struct Header {
    config: MlpConfig,
    layer_dims: Vec<(usize, usize)>,
}

fn io_err(path: &Path, source: std::io::Error) -> MlpError {
    MlpError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialise a model to `path`.
pub fn save_mlp(model: &MlpModel, path: &Path) -> Result<(), MlpError> {
    let header = Header {
        config: model.config().clone(),
        layer_dims: model
            .layers()
            .iter()
            .map(|l| (l.weights.nrows(), l.weights.ncols()))
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| MlpError::Checkpoint(e.to_string()))?;
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut write = |buf: &[u8]| file.write_all(buf).map_err(|e| io_err(path, e));
    write(MLP_MAGIC)?;
    write(&(header_json.len() as u64).to_le_bytes())?;
    write(&header_json)?;
    for layer in model.layers() {
        for v in layer.weights.iter() {
            write(&v.to_le_bytes())?;
        }
        for v in layer.biases.iter() {
            write(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Load a model saved by [`save_mlp`].
pub fn load_mlp(path: &Path) -> Result<MlpModel, MlpError> {
    let mut file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    parse_mlp(&bytes)
}

/// Parse checkpoint bytes (used by the bundled compositional format too).
pub(crate) fn parse_mlp(bytes: &[u8]) -> Result<MlpModel, MlpError> {
    let bad = |msg: &str| MlpError::Checkpoint(msg.to_string());
    if bytes.len() < MLP_MAGIC.len() || &bytes[..MLP_MAGIC.len()] != MLP_MAGIC {
        return Err(bad("bad magic: not a model checkpoint"));
    }
    let mut at = MLP_MAGIC.len();
    if bytes.len() < at + 8 {
        return Err(bad("truncated header length"));
    }
    let header_len = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    at += 8;
    if bytes.len() < at + header_len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[at..at + header_len])
        .map_err(|e| MlpError::Checkpoint(format!("header: {e}")))?;
    at += header_len;

    let mut layers = Vec::with_capacity(header.layer_dims.len());
    for &(rows, cols) in &header.layer_dims {
        let n_w = rows * cols;
        let need = (n_w + cols) * 8;
        if bytes.len() < at + need {
            return Err(bad("truncated parameter data"));
        }
        let mut take = |count: usize| {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                out.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
                at += 8;
            }
            out
        };
        let weights = Array2::from_shape_vec((rows, cols), take(n_w)).expect("shape");
        let biases = Array1::from_vec(take(cols));
        layers.push(Layer { weights, biases });
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    MlpModel::from_layers(header.config, layers)
}

/// Serialise to an in-memory buffer (compositional bundles embed these).
pub(crate) fn mlp_to_bytes(model: &MlpModel) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        layer_dims: model
            .layers()
            .iter()
            .map(|l| (l.weights.nrows(), l.weights.ncols()))
            .collect(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::new();
    out.extend_from_slice(MLP_MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for layer in model.layers() {
        for v in layer.weights.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.biases.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Activation;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let config = MlpConfig {
            hidden_layers: 2,
            width: 10,
            activation: Activation::Gelu,
            dropout: 0.1,
            weight_decay: 1e-4,
            learning_rate: 3e-4,
            input_dim: 4,
            output_dim: 3,
        };
        let model = MlpModel::init(&config, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.slmlp");
        save_mlp(&model, &path).unwrap();
        let loaded = load_mlp(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        for (a, b) in loaded.layers().iter().zip(model.layers()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_mlp(&path), Err(MlpError::Checkpoint(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let config = MlpConfig {
            hidden_layers: 1,
            width: 4,
            activation: Activation::Relu,
            dropout: 0.0,
            weight_decay: 0.0,
            learning_rate: 1e-3,
            input_dim: 2,
            output_dim: 1,
        };
        let model = MlpModel::init(&config, 0).unwrap();
        let bytes = mlp_to_bytes(&model);
        assert!(parse_mlp(&bytes[..bytes.len() - 4]).is_err());
    }
}
