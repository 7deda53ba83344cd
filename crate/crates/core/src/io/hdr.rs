//! Radiance RGBE (`.hdr`) reader and writer.
//!
//! Reading accepts flat, old-style RLE and new-style RLE scanlines and any of
//! the eight resolution-line orientations; output is always top-to-bottom,
//! left-to-right. Writing emits `-Y h +X w` with new-style RLE when the width
//! allows it.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::envmap::LatLongImage;
use crate::error::{Error, Result};

/// Parse failure with the byte offset at which it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HdrError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported format '{format}' at byte {offset}")]
    UnsupportedFormat { format: String, offset: usize },
    #[error("missing FORMAT line in header")]
    MissingFormat,
    #[error("malformed header at byte {offset}: {msg}")]
    Header { offset: usize, msg: String },
    #[error("malformed resolution line at byte {offset}")]
    Resolution { offset: usize },
    #[error("truncated scanline {row} at byte {offset}")]
    Truncated { row: usize, offset: usize },
    #[error("scanline {row} overruns its width at byte {offset}")]
    Overrun { row: usize, offset: usize },
}

/// Largest accepted dimension; keeps allocations bounded on hostile input.
const MAX_DIM: usize = 1 << 15;
const MAX_PIXELS: usize = 1 << 26;

/// `(r, g, b, e)` to linear floats: `m * 2^(e - 136)`; `e = 0` is black.
pub fn rgbe_to_float(p: [u8; 4]) -> [f32; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = libm_ldexp(1.0, p[3] as i32 - 136);
    [p[0] as f32 * f, p[1] as f32 * f, p[2] as f32 * f]
}

fn libm_ldexp(x: f32, e: i32) -> f32 {
    // Exact for the exponent range reachable from a u8 (-136..=119).
    (x as f64 * 2f64.powi(e)) as f32
}

/// Frexp-based encoding with mantissa truncation.
pub fn float_to_rgbe(c: [f32; 3]) -> [u8; 4] {
    let v = c[0].max(c[1]).max(c[2]);
    if !(v >= 1e-32) {
        return [0, 0, 0, 0];
    }
    let (m, e) = frexp(v as f64);
    if e > 127 {
        return [255, 255, 255, 255];
    }
    let scale = m * 256.0 / v as f64;
    let q = |x: f32| ((x.max(0.0) as f64) * scale).min(255.0) as u8;
    [q(c[0]), q(c[1]), q(c[2]), (e + 128) as u8]
}

/// `v = m * 2^e` with `m` in `[0.5, 1)`, for positive finite `v`.
fn frexp(v: f64) -> (f64, i32) {
    let mut e = v.log2().floor() as i32 + 1;
    let mut m = v / 2f64.powi(e);
    // Correct rounding of log2 near powers of two.
    if m >= 1.0 {
        m /= 2.0;
        e += 1;
    } else if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Option<&'a [u8]> {
        if self.pos >= self.buf.len() {
            return None;
        }
        let rest = &self.buf[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        self.pos += end + 1;
        Some(&rest[..end])
    }

    fn byte(&mut self) -> Option<u8> {
        let b = *self.buf.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    fn pixel(&mut self) -> Option<[u8; 4]> {
        let p = self.buf.get(self.pos..self.pos + 4)?;
        self.pos += 4;
        Some([p[0], p[1], p[2], p[3]])
    }
}

/// Axis layout from the resolution line.
#[derive(Debug, Clone, Copy)]
struct Layout {
    /// Number of scanlines and their length.
    lines: usize,
    len: usize,
    /// Scanlines run along x (`true`) or y.
    rows_are_x: bool,
    /// The outer (scanline-index) axis runs in decreasing image coordinate.
    outer_neg: bool,
    inner_neg: bool,
}

fn parse_resolution(line: &[u8], offset: usize) -> std::result::Result<Layout, HdrError> {
    let err = || HdrError::Resolution { offset };
    let text = std::str::from_utf8(line).map_err(|_| err())?;
    let tok: Vec<&str> = text.split_whitespace().collect();
    if tok.len() != 4 {
        return Err(err());
    }
    let axis = |s: &str| -> Option<(bool, char)> {
        let mut c = s.chars();
        let sign = c.next()?;
        let ax = c.next()?;
        if c.next().is_some() || !(sign == '+' || sign == '-') || !(ax == 'X' || ax == 'Y') {
            return None;
        }
        Some((sign == '-', ax))
    };
    let (n0, a0) = axis(tok[0]).ok_or_else(err)?;
    let (n1, a1) = axis(tok[2]).ok_or_else(err)?;
    if a0 == a1 {
        return Err(err());
    }
    let d0: usize = tok[1].parse().map_err(|_| err())?;
    let d1: usize = tok[3].parse().map_err(|_| err())?;
    if d0 == 0 || d1 == 0 || d0 > MAX_DIM || d1 > MAX_DIM || d0 * d1 > MAX_PIXELS {
        return Err(err());
    }
    // Image-space "up" is +Y; row 0 of the output is the top, i.e. -Y first.
    Ok(Layout { lines: d0, len: d1, rows_are_x: a1 == 'X', outer_neg: !n0 ^ (a0 == 'X'), inner_neg: n1 ^ (a1 == 'Y') })
}

fn read_flat(
    cur: &mut Cursor<'_>,
    out: &mut [[u8; 4]],
    first: Option<[u8; 4]>,
    row: usize,
) -> std::result::Result<(), HdrError> {
    let len = out.len();
    let mut i = 0;
    let mut shift = 0u32;
    let mut pending = first;
    while i < len {
        let start = cur.pos;
        let p = match pending.take() {
            Some(p) => p,
            None => cur.pixel().ok_or(HdrError::Truncated { row, offset: cur.pos })?,
        };
        if p[0] == 1 && p[1] == 1 && p[2] == 1 {
            // Old-style run: repeat previous pixel.
            if i == 0 {
                return Err(HdrError::Overrun { row, offset: start });
            }
            let count = (p[3] as usize).checked_shl(shift).unwrap_or(usize::MAX);
            if count > len - i {
                return Err(HdrError::Overrun { row, offset: start });
            }
            let prev = out[i - 1];
            out[i..i + count].iter_mut().for_each(|q| *q = prev);
            i += count;
            shift += 8;
            if shift > 24 {
                return Err(HdrError::Overrun { row, offset: start });
            }
        } else {
            out[i] = p;
            i += 1;
            shift = 0;
        }
    }
    Ok(())
}

fn read_rle(cur: &mut Cursor<'_>, out: &mut [[u8; 4]], row: usize) -> std::result::Result<(), HdrError> {
    let len = out.len();
    for ch in 0..4 {
        let mut i = 0;
        while i < len {
            let at = cur.pos;
            let n = cur.byte().ok_or(HdrError::Truncated { row, offset: at })? as usize;
            if n > 128 {
                let count = n - 128;
                if count > len - i {
                    return Err(HdrError::Overrun { row, offset: at });
                }
                let v = cur.byte().ok_or(HdrError::Truncated { row, offset: cur.pos })?;
                out[i..i + count].iter_mut().for_each(|p| p[ch] = v);
                i += count;
            } else {
                if n == 0 || n > len - i {
                    return Err(HdrError::Overrun { row, offset: at });
                }
                for p in &mut out[i..i + n] {
                    p[ch] = cur.byte().ok_or(HdrError::Truncated { row, offset: cur.pos })?;
                }
                i += n;
            }
        }
    }
    Ok(())
}

fn read_scanline(cur: &mut Cursor<'_>, out: &mut [[u8; 4]], row: usize) -> std::result::Result<(), HdrError> {
    let len = out.len();
    if !(8..0x8000).contains(&len) {
        return read_flat(cur, out, None, row);
    }
    let at = cur.pos;
    let head = cur.pixel().ok_or(HdrError::Truncated { row, offset: at })?;
    if head[0] != 2 || head[1] != 2 || head[2] & 0x80 != 0 {
        return read_flat(cur, out, Some(head), row);
    }
    if ((head[2] as usize) << 8 | head[3] as usize) != len {
        return Err(HdrError::Overrun { row, offset: at });
    }
    read_rle(cur, out, row)
}

/// Decode an in-memory `.hdr` file into linear RGB.
pub fn decode_hdr(buf: &[u8]) -> std::result::Result<HdrImage, HdrError> {
    let mut cur = Cursor { buf, pos: 0 };
    let first = cur.line().ok_or(HdrError::BadMagic { offset: 0 })?;
    if !(first.starts_with(b"#?RADIANCE") || first.starts_with(b"#?RGBE")) {
        return Err(HdrError::BadMagic { offset: 0 });
    }
    let mut format_ok = false;
    loop {
        let at = cur.pos;
        let line = cur
            .line()
            .ok_or(HdrError::Header { offset: at, msg: "unterminated header".into() })?;
        if line.is_empty() {
            break;
        }
        if let Some(f) = line.strip_prefix(b"FORMAT=") {
            let f = String::from_utf8_lossy(f).trim().to_string();
            if f != "32-bit_rle_rgbe" {
                return Err(HdrError::UnsupportedFormat { format: f, offset: at });
            }
            format_ok = true;
        }
    }
    if !format_ok {
        return Err(HdrError::MissingFormat);
    }
    let at = cur.pos;
    let line = cur.line().ok_or(HdrError::Resolution { offset: at })?;
    let layout = parse_resolution(line, at)?;
    let (width, height) = if layout.rows_are_x { (layout.len, layout.lines) } else { (layout.lines, layout.len) };
    // Grows only as scanlines decode, so a forged header cannot force a
    // large allocation on a short input.
    let mut raw: Vec<[u8; 4]> = Vec::new();
    let mut scan = vec![[0u8; 4]; layout.len];
    for li in 0..layout.lines {
        read_scanline(&mut cur, &mut scan, li)?;
        raw.extend_from_slice(&scan);
    }
    let mut data = vec![0f32; width * height * 3];
    for (li, line) in raw.chunks_exact(layout.len).enumerate() {
        let outer = if layout.outer_neg { layout.lines - 1 - li } else { li };
        for (k, p) in line.iter().enumerate() {
            let inner = if layout.inner_neg { layout.len - 1 - k } else { k };
            let (x, y) = if layout.rows_are_x { (inner, outer) } else { (outer, inner) };
            let c = rgbe_to_float(*p);
            let o = 3 * (y * width + x);
            data[o..o + 3].copy_from_slice(&c);
        }
    }
    Ok(HdrImage { width, height, data })
}

/// Decoded pixels, row-major RGB, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

fn encode_rle_channel(values: &[u8], out: &mut Vec<u8>) {
    let n = values.len();
    let mut i = 0;
    while i < n {
        // Find the next run of at least 4 equal bytes.
        let mut run_start = i;
        let mut run_len = 0;
        while run_start < n {
            run_len = 1;
            while run_start + run_len < n && run_len < 127 && values[run_start + run_len] == values[run_start] {
                run_len += 1;
            }
            if run_len >= 4 {
                break;
            }
            run_start += run_len;
        }
        if run_len < 4 {
            run_start = n;
        }
        while i < run_start {
            let count = (run_start - i).min(128);
            out.push(count as u8);
            out.extend_from_slice(&values[i..i + count]);
            i += count;
        }
        if run_start < n {
            out.push(128 + run_len as u8);
            out.push(values[run_start]);
            i = run_start + run_len;
        }
    }
}

/// Encode row-major linear RGB as a `.hdr` byte stream.
pub fn encode_hdr(width: usize, height: usize, data: &[f32]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || data.len() != width * height * 3 {
        return Err(Error::invalid("image dimensions do not match data"));
    }
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("hdr pixels must be finite and non-negative"));
    }
    let mut out = Vec::with_capacity(width * height * 4 + 64);
    out.extend_from_slice(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {height} +X {width}\n").as_bytes());
    let rle = (8..0x8000).contains(&width);
    let mut chan = vec![0u8; width];
    for y in 0..height {
        let row: Vec<[u8; 4]> = (0..width)
            .map(|x| {
                let o = 3 * (y * width + x);
                float_to_rgbe([data[o], data[o + 1], data[o + 2]])
            })
            .collect();
        if rle {
            out.extend_from_slice(&[2, 2, (width >> 8) as u8, (width & 0xff) as u8]);
            for ch in 0..4 {
                chan.iter_mut().zip(&row).for_each(|(c, p)| *c = p[ch]);
                encode_rle_channel(&chan, &mut out);
            }
        } else {
            row.iter().for_each(|p| out.extend_from_slice(p));
        }
    }
    Ok(out)
}

/// Read an equirectangular `.hdr` environment map.
pub fn read_hdr(path: &Path) -> Result<LatLongImage> {
    let buf = fs::read(path).map_err(Error::at(path))?;
    let img = decode_hdr(&buf)?;
    LatLongImage::new(img.width, img.height, img.data.iter().map(|&v| v as f64).collect())
        .map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn write_hdr(img: &LatLongImage, path: &Path) -> Result<()> {
    let data: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    fs::write(path, encode_hdr(img.width(), img.height(), &data)?).map_err(Error::at(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_examples() {
        assert_eq!(rgbe_to_float([128, 128, 128, 129]), [1.0, 1.0, 1.0]);
        assert_eq!(rgbe_to_float([200, 10, 3, 0]), [0.0; 3]);
    }

    #[test]
    fn encode_is_fixed_point_after_one_pass() {
        for v in [1e-20f32, 0.001, 0.5, 1.0, 1.0 - 1e-7, 3.7, 1234.5] {
            let c = [v, v * 0.3, v * 0.9];
            let once = rgbe_to_float(float_to_rgbe(c));
            let twice = rgbe_to_float(float_to_rgbe(once));
            assert_eq!(once, twice, "{v}");
            assert!((once[0] - v).abs() <= v / 128.0);
        }
        assert_eq!(float_to_rgbe([0.0; 3]), [0; 4]);
    }

    #[test]
    fn frexp_at_powers_of_two() {
        for e in -40..40 {
            let v = 2f64.powi(e);
            assert_eq!(frexp(v), (0.5, e + 1));
        }
    }

    fn header(res: &str) -> Vec<u8> {
        format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n{res}\n").into_bytes()
    }

    #[test]
    fn rle_round_trip() {
        let (w, h) = (37, 5);
        let data: Vec<f32> = (0..w * h * 3).map(|i| if i % 7 < 3 { 0.25 } else { (i % 11) as f32 * 0.4 }).collect();
        let bytes = encode_hdr(w, h, &data).unwrap();
        let img = decode_hdr(&bytes).unwrap();
        assert_eq!((img.width, img.height), (w, h));
        for (a, b) in img.data.chunks(3).zip(data.chunks(3)) {
            let peak = b.iter().cloned().fold(0.0f32, f32::max);
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= peak / 128.0);
            }
        }
        let again = encode_hdr(w, h, &img.data).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn flat_and_old_rle() {
        let mut b = header("-Y 1 +X 4");
        b.extend_from_slice(&[128, 128, 128, 129]);
        b.extend_from_slice(&[1, 1, 1, 2]);
        b.extend_from_slice(&[0, 0, 0, 0]);
        let img = decode_hdr(&b).unwrap();
        assert_eq!(&img.data[..9], &[1.0; 9]);
        assert_eq!(&img.data[9..], &[0.0; 3]);
    }

    #[test]
    fn orientation_is_normalized() {
        // +Y: bottom scanline first.
        let mut b = header("+Y 2 +X 1");
        b.extend_from_slice(&[128, 128, 128, 129]);
        b.extend_from_slice(&[0, 0, 0, 0]);
        let img = decode_hdr(&b).unwrap();
        assert_eq!(img.data, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        // -X: right-to-left.
        let mut b = header("-Y 1 -X 2");
        b.extend_from_slice(&[128, 128, 128, 129]);
        b.extend_from_slice(&[0, 0, 0, 0]);
        let img = decode_hdr(&b).unwrap();
        assert_eq!(img.data, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        // Column-major: +X 2 -Y 1 stores one scanline per column.
        let mut b = header("+X 2 -Y 1");
        b.extend_from_slice(&[0, 0, 0, 0]);
        b.extend_from_slice(&[128, 128, 128, 129]);
        let img = decode_hdr(&b).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.data, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn structured_errors() {
        assert_eq!(decode_hdr(b"P6\n"), Err(HdrError::BadMagic { offset: 0 }));
        assert!(matches!(
            decode_hdr(b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n"),
            Err(HdrError::UnsupportedFormat { offset: 11, .. })
        ));
        assert_eq!(decode_hdr(b"#?RADIANCE\n\n-Y 1 +X 1\n"), Err(HdrError::MissingFormat));
        let mut b = header("-Y 2 +X 1");
        b.extend_from_slice(&[1, 2, 3, 4, 5]);
        let off = b.len() - 1;
        assert_eq!(decode_hdr(&b), Err(HdrError::Truncated { row: 1, offset: off }));
    }

    #[test]
    fn rle_overrun_is_rejected() {
        let mut b = header("-Y 1 +X 8");
        b.extend_from_slice(&[2, 2, 0, 8]);
        b.extend_from_slice(&[128 + 9, 7]);
        assert!(matches!(decode_hdr(&b), Err(HdrError::Overrun { row: 0, .. })));
    }
}
