//! Binary policy checkpoints.
//!
//! Layout, little-endian: `b"ERFI"`, `u32` version, `u32` layer-size count,
//! that many `u32` sizes, then for every layer its `(out, in)` row-major
//! `f64` weights followed by its biases, then the per-action log standard
//! deviations. Version 1 networks use ELU hidden activations.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, PolicyParams};
use super::PolicyError;

pub const MAGIC: &[u8; 4] = b"ERFI";
pub const VERSION: u32 = 1;

pub fn encode(params: &PolicyParams) -> Result<Vec<u8>, PolicyError> {
    params.validate()?;
    if params.activation != Activation::Elu {
        return Err(PolicyError::Format(format!(
            "version {VERSION} checkpoints store ELU networks only"
        )));
    }
    if params.log_std.len() != params.output_size() {
        return Err(PolicyError::Format(
            "checkpoints hold policies: log-std length must equal the output size".into(),
        ));
    }
    let mut out = Vec::with_capacity(16 + 8 * params.num_parameters());
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((params.sizes.len() as u32).to_le_bytes());
    for &s in &params.sizes {
        out.extend((s as u32).to_le_bytes());
    }
    for (w, b) in params.weights.iter().zip(&params.biases) {
        for v in w.iter().chain(b.iter()) {
            out.extend(v.to_le_bytes());
        }
    }
    for v in &params.log_std {
        out.extend(v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PolicyError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(PolicyError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PolicyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PolicyError> {
        let bytes = self.take(n.checked_mul(8).ok_or(PolicyError::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<PolicyParams, PolicyError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(PolicyError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(PolicyError::Version(version));
    }
    let count = r.u32()? as usize;
    if count < 2 {
        return Err(PolicyError::Format(format!("{count} layer sizes")));
    }
    let sizes = (0..count)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let mut weights = Vec::with_capacity(count - 1);
    let mut biases = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        let (inp, out) = (w[0], w[1]);
        let wv = r.f64s(out * inp)?;
        weights.push(Array2::from_shape_vec((out, inp), wv).expect("length checked"));
        biases.push(Array1::from(r.f64s(out)?));
    }
    let log_std = Array1::from(r.f64s(*sizes.last().unwrap())?);
    if r.pos != bytes.len() {
        return Err(PolicyError::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params = PolicyParams {
        sizes,
        weights,
        biases,
        log_std,
        activation: Activation::Elu,
        generation: 0,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<(), PolicyError> {
    let bytes = encode(params)?;
    let io = |e: std::io::Error| PolicyError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams, PolicyError> {
    let bytes = fs::read(path).map_err(|e| PolicyError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode(&bytes)
}
