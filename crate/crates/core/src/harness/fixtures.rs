//! Frame serialization for recorded test vectors: raw little-endian
//! complex64 samples (f32 real, f32 imaginary) next to a JSON sidecar that
//! records the shape and the seed that generated the data.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSidecar {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub description: String,
}

fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut os = data_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Write `data` as packed f32 pairs at `path`, with the sidecar at
/// `path.json`. The element count must match the product of `shape`.
pub fn save_complex_fixture(
    path: &Path,
    data: &[Complex64],
    shape: &[usize],
    seed: u64,
    description: &str,
) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "fixture shape {shape:?} implies {expected} elements, got {}",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    let sidecar = FixtureSidecar {
        dtype: "complex64-le".into(),
        shape: shape.to_vec(),
        seed,
        description: description.into(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)
        .expect("sidecar is always serializable");
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Read a fixture written by [`save_complex_fixture`].
pub fn load_complex_fixture(path: &Path) -> Result<(Vec<Complex64>, FixtureSidecar)> {
    let sidecar_text = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: FixtureSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::InvalidConfig(format!("fixture sidecar: {e}")))?;
    if sidecar.dtype != "complex64-le" {
        return Err(Error::InvalidConfig(format!(
            "fixture dtype '{}' not supported",
            sidecar.dtype
        )));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "fixture byte length {} is not a whole number of complex64 values",
            bytes.len()
        )));
    }
    let count = bytes.len() / 8;
    let expected: usize = sidecar.shape.iter().product();
    if count != expected {
        return Err(Error::ShapeMismatch(format!(
            "fixture holds {count} values but sidecar shape {:?} implies {expected}",
            sidecar.shape
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes(chunk[0..4].try_into().expect("chunk is 8 bytes"));
        let im = f32::from_le_bytes(chunk[4..8].try_into().expect("chunk is 8 bytes"));
        data.push(Complex64::new(re as f64, im as f64));
    }
    Ok((data, sidecar))
}
