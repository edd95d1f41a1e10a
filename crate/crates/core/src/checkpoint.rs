//! Binary accumulator checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size      | field                                             |
//! |--------|-----------|---------------------------------------------------|
//! | 0      | 8         | magic `GCACCUM\0`                                 |
//! | 8      | 4         | format version, `u32` (currently 1)               |
//! | 12     | 4         | width, `u32`                                      |
//! | 16     | 4         | height, `u32`                                     |
//! | 20     | 4         | flags, `u32`; bit 0 set when channel info present |
//! | 24     | 8         | frame count `n`, `u64`                            |
//! | 32     | 8         | probe wavelength in nm, `f64` (NaN if absent)     |
//! | 40     | 8         | display wavelength in nm, `f64` (NaN if absent)   |
//! | 48     | 8·w·h     | `sum_ref`, row-major `f64`                        |
//! | …      | 8         | `sum_bucket`, `f64`                               |
//! | …      | 8·w·h     | `sum_ref_bucket`, row-major `f64`                 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::correlator::CorrelationAccumulator;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::optics::SpectralChannel;

pub const MAGIC: [u8; 8] = *b"GCACCUM\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

const FLAG_CHANNEL: u32 = 1;

pub fn write_accumulator<W: Write>(acc: &CorrelationAccumulator, mut w: W) -> std::io::Result<()> {
    let (width, height) = acc.dims();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    let flags = if acc.channel().is_some() {
        FLAG_CHANNEL
    } else {
        0
    };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&acc.n().to_le_bytes())?;
    let (probe, display) = acc.channel().map_or((f64::NAN, f64::NAN), |c| {
        (c.probe_wavelength_nm, c.display_wavelength_nm)
    });
    w.write_all(&probe.to_le_bytes())?;
    w.write_all(&display.to_le_bytes())?;
    write_f64s(&mut w, acc.sum_ref().as_slice())?;
    w.write_all(&acc.sum_bucket().to_le_bytes())?;
    write_f64s(&mut w, acc.sum_ref_bucket().as_slice())?;
    w.flush()
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Decodes a checkpoint. `origin` is only used in error messages.
pub fn read_accumulator<R: Read>(mut r: R, origin: &Path) -> Result<CorrelationAccumulator> {
    let io = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(origin, "truncated checkpoint")
        } else {
            Error::io(origin, e)
        }
    };
    let magic: [u8; 8] = read_array(&mut r).map_err(io)?;
    if magic != MAGIC {
        return Err(Error::format(
            origin,
            "not an accumulator checkpoint (bad magic)",
        ));
    }
    let version = u32::from_le_bytes(read_array(&mut r).map_err(io)?);
    if version != VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let width = u32::from_le_bytes(read_array(&mut r).map_err(io)?) as usize;
    let height = u32::from_le_bytes(read_array(&mut r).map_err(io)?) as usize;
    let flags = u32::from_le_bytes(read_array(&mut r).map_err(io)?);
    let n = u64::from_le_bytes(read_array(&mut r).map_err(io)?);
    let probe = f64::from_le_bytes(read_array(&mut r).map_err(io)?);
    let display = f64::from_le_bytes(read_array(&mut r).map_err(io)?);
    if width == 0 || height == 0 {
        return Err(Error::format(origin, "checkpoint has zero dimensions"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(origin, "checkpoint dimensions overflow"))?;
    let sum_ref = read_f64s(&mut r, count).map_err(io)?;
    let sum_bucket = f64::from_le_bytes(read_array(&mut r).map_err(io)?);
    let sum_ref_bucket = read_f64s(&mut r, count).map_err(io)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(Error::format(origin, "trailing bytes after checkpoint"));
    }
    let channel = if flags & FLAG_CHANNEL != 0 {
        Some(
            SpectralChannel::new(probe, display)
                .map_err(|e| Error::format(origin, e.to_string()))?,
        )
    } else {
        None
    };
    CorrelationAccumulator::from_parts(
        n,
        Grid::from_vec(width, height, sum_ref)?,
        sum_bucket,
        Grid::from_vec(width, height, sum_ref_bucket)?,
        channel,
    )
    .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn save(acc: &CorrelationAccumulator, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_accumulator(acc, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<CorrelationAccumulator> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_accumulator(BufReader::new(file), path)
}
