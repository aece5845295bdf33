//! Binary PGM (`P5`) reading and writing.
//!
//! Images are stored with maxval 65535 (two bytes per sample, most
//! significant byte first); masks with maxval 255 and 0/255 semantics.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{BinaryMask, Grid};

struct RawPgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u16>,
}

fn write_pgm(path: &Path, width: usize, height: usize, maxval: u32, samples: impl Iterator<Item = u16>) -> Result<()> {
    let mut buf = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for s in samples {
        if maxval > 255 {
            buf.extend_from_slice(&s.to_be_bytes());
        } else {
            buf.push(s as u8);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<RawPgm> {
    let bytes = fs::read(path)?;
    let header_err = |reason: &str| Error::PgmHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes).as_deref() != Some("P5") {
        return Err(header_err("missing P5 magic"));
    }
    let mut number = |what: &str| -> Result<usize> {
        token(&bytes)
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| header_err(&format!("bad or missing {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(header_err("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::PgmMaxval {
            path: path.to_path_buf(),
            maxval: maxval.min(u32::MAX as usize) as u32,
        });
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(header_err("missing separator before raster"));
    }
    pos += 1;

    let wide = maxval > 255;
    let expected = width * height * if wide { 2 } else { 1 };
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::PgmTruncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let samples = if wide {
        payload[..expected]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        payload[..expected].iter().map(|&b| b as u16).collect()
    };
    Ok(RawPgm {
        width,
        height,
        maxval: maxval as u32,
        samples,
    })
}

/// Writes a `[0, 1]` grid as a 16-bit PGM, storing `round(value * 65535)`.
pub fn save_pgm(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    if !grid.is_unit_range() {
        return Err(Error::InvalidGrid("PGM images must have values in [0, 1]".into()));
    }
    let samples = grid.values().iter().map(|&v| (v * 65535.0).round() as u16);
    write_pgm(path.as_ref(), grid.width(), grid.height(), 65535, samples)
}

/// Reads a 16-bit PGM written by [`save_pgm`].
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let raw = read_pgm(path)?;
    if raw.maxval != 65535 {
        return Err(Error::PgmMaxval {
            path: path.to_path_buf(),
            maxval: raw.maxval,
        });
    }
    let values = raw.samples.iter().map(|&s| s as f64 / 65535.0).collect();
    Grid::new(raw.width, raw.height, values)
}

/// Writes a mask as an 8-bit PGM with 0 for background and 255 for foreground.
pub fn save_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let samples = mask.as_grid().values().iter().map(|&v| if v == 1.0 { 255 } else { 0 });
    write_pgm(path.as_ref(), mask.width(), mask.height(), 255, samples)
}

/// Reads an 8-bit mask PGM; samples `>= 128` are foreground.
pub fn load_mask_pgm(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let raw = read_pgm(path)?;
    if raw.maxval != 255 {
        return Err(Error::PgmMaxval {
            path: path.to_path_buf(),
            maxval: raw.maxval,
        });
    }
    let values = raw.samples.iter().map(|&s| if s >= 128 { 1.0 } else { 0.0 }).collect();
    BinaryMask::from_grid(Grid::new(raw.width, raw.height, values)?)
}
