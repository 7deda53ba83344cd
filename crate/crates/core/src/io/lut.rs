//! BRDF table dump: 8-byte magic `RCAPLUT1`, `u32` resolution, `u32` seed,
//! then `resolution^2` pairs `(beta1, beta2)` as little-endian f32, with
//! roughness as the slow axis.

use std::fs;
use std::path::Path;

use crate::brdf::BrdfLut;
use crate::error::{Error, Result};

pub const LUT_MAGIC: &[u8; 8] = b"RCAPLUT1";
const HEADER: usize = 16;

pub fn lut_to_bytes(lut: &BrdfLut) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * lut.entries().len());
    out.extend_from_slice(LUT_MAGIC);
    out.extend_from_slice(&(lut.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&(lut.seed() as u32).to_le_bytes());
    for e in lut.entries() {
        out.extend_from_slice(&(e[0] as f32).to_le_bytes());
        out.extend_from_slice(&(e[1] as f32).to_le_bytes());
    }
    out
}

pub fn lut_from_bytes(buf: &[u8]) -> std::result::Result<BrdfLut, String> {
    if buf.len() < HEADER || &buf[..8] != LUT_MAGIC {
        return Err("bad magic at byte 0".into());
    }
    let res = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
    let seed = u32::from_le_bytes([buf[12], buf[13], buf[14], buf[15]]) as u64;
    if !(2..=4096).contains(&res) {
        return Err(format!("unsupported resolution {res} at byte 8"));
    }
    if buf.len() - HEADER != 8 * res * res {
        return Err(format!("payload is {} bytes, expected {}", buf.len() - HEADER, 8 * res * res));
    }
    let f = |o: usize| f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]) as f64;
    let entries = (0..res * res).map(|i| [f(HEADER + 8 * i), f(HEADER + 8 * i + 4)]).collect();
    BrdfLut::from_entries(res, seed, entries).map_err(|e| e.to_string())
}

pub fn write_lut(lut: &BrdfLut, path: &Path) -> Result<()> {
    fs::write(path, lut_to_bytes(lut)).map_err(Error::at(path))?;
    Ok(())
}

pub fn read_lut(path: &Path) -> Result<BrdfLut> {
    let buf = fs::read(path).map_err(Error::at(path))?;
    lut_from_bytes(&buf).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
}
