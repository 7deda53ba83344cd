use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 8] = b"RCAPFLT1";

/// Shaped little-endian f32 array: magic, `u32` rank, `u32` extents, payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDump {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl FloatDump {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let n: u64 = dims.iter().map(|&d| d as u64).product();
        if dims.is_empty() || n != data.len() as u64 {
            return Err(Error::invalid(format!("dump dims {dims:?} do not match {} values", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<u32>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, String> {
        let u32_at = |o: usize| -> std::result::Result<u32, String> {
            buf.get(o..o + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or_else(|| format!("truncated at byte {o}"))
        };
        if buf.len() < 12 || &buf[..8] != DUMP_MAGIC {
            return Err("bad magic at byte 0".into());
        }
        let rank = u32_at(8)? as usize;
        if rank == 0 || rank > 8 {
            return Err(format!("unsupported rank {rank} at byte 8"));
        }
        let dims = (0..rank).map(|i| u32_at(12 + 4 * i)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n: u64 = dims.iter().map(|&d| d as u64).product();
        let start = 12 + 4 * rank;
        if (buf.len() - start) as u64 != 4 * n {
            return Err(format!("payload is {} bytes, expected {}", buf.len() - start, 4 * n));
        }
        let data = buf[start..].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(Error::at(path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(Error::at(path))?;
        Self::from_bytes(&buf).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let data = vec![0.0, -1.5, f32::MIN_POSITIVE, 3.25e7, 1.0 / 3.0, 7.0];
        let d = FloatDump::new(vec![2, 3], data).unwrap();
        assert_eq!(FloatDump::from_bytes(&d.to_bytes()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FloatDump::new(vec![2, 2], vec![0.0; 3]).is_err());
        let mut b = FloatDump::new(vec![1], vec![1.0]).unwrap().to_bytes();
        b.pop();
        assert!(FloatDump::from_bytes(&b).is_err());
        assert!(FloatDump::from_bytes(b"RCAPFLT0\x01\0\0\0").is_err());
    }
}
