//! Regressor weight files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "SPOT"
//! version      u32      1
//! layers       u32      5
//! channels     u32 x 6  2 8 16 16 32 1
//! strides      u32 x 5  1 2 2 2 1
//! kernel       u32      3
//! tensors      f32 ...  per layer: weight [out][in][ky][kx], bias,
//!                       then for layers 1-4: scale, shift, running mean, running variance
//! ```

use std::fs;
use std::path::Path;

use super::network::{RegressorParams, CHANNEL_PLAN, KERNEL, PARAM_COUNT, STRIDES};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPOT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_params(params: &RegressorParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut out = Vec::with_capacity(4 + 4 * (14 + PARAM_COUNT));
    out.extend_from_slice(MAGIC);
    let header = [FORMAT_VERSION, STRIDES.len() as u32]
        .into_iter()
        .chain(CHANNEL_PLAN.iter().map(|&c| c as u32))
        .chain(STRIDES.iter().map(|&s| s as u32))
        .chain([KERNEL as u32]);
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for &v in t {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<RegressorParams> {
    let mut words = Reader { bytes, pos: 0 };
    if words.take(4)? != MAGIC {
        return Err(Error::WeightsMagic);
    }
    let version = words.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::WeightsVersion(version));
    }
    let layers = words.u32()? as usize;
    if layers != STRIDES.len() {
        return Err(Error::WeightsPlan(format!("{layers} layers")));
    }
    let channels: Vec<usize> = (0..CHANNEL_PLAN.len()).map(|_| words.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    let strides: Vec<usize> = (0..STRIDES.len()).map(|_| words.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    let kernel = words.u32()? as usize;
    if channels != CHANNEL_PLAN || strides != STRIDES || kernel != KERNEL {
        return Err(Error::WeightsPlan(format!(
            "channels {channels:?}, strides {strides:?}, kernel {kernel}"
        )));
    }

    let mut params = RegressorParams::zeros();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(words.take(4)?.try_into().expect("4 bytes")) as f64;
        }
    }
    if words.pos != bytes.len() {
        return Err(Error::WeightsPlan(format!("{} trailing bytes", bytes.len() - words.pos)));
    }
    params.validate()?;
    Ok(params)
}

pub fn save_params(params: &RegressorParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params)?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<RegressorParams> {
    decode_params(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::WeightsTruncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
