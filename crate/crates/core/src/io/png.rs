use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// `[0, 1]` to 8 bits, rounding half up.
pub fn quantize(v: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("png value {v} outside [0, 1]")));
    }
    Ok((v * 255.0 + 0.5).floor() as u8)
}

pub fn encode_png_bytes(img: &Image) -> Result<Vec<u8>> {
    let bytes = img.data().iter().map(|&v| quantize(v)).collect::<Result<Vec<u8>>>()?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        w.write_image_data(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// 8-bit RGB PNG without colour-profile chunks.
pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let bytes = encode_png_bytes(img)?;
    let mut f = BufWriter::new(File::create(path).map_err(Error::at(path))?);
    std::io::Write::write_all(&mut f, &bytes)?;
    Ok(())
}

/// Read an 8-bit RGB or RGBA PNG into `[0, 1]` values; alpha is dropped.
pub fn read_png(path: &Path) -> Result<Image> {
    let dec = png::Decoder::new(BufReader::new(File::open(path).map_err(Error::at(path))?));
    let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        c => return Err(Error::Png(format!("unsupported colour type {c:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + w * stride];
        for px in row.chunks(stride) {
            data.extend(px[..3].iter().map(|&b| b as f64 / 255.0));
        }
    }
    Image::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize(0.0).unwrap(), 0);
        assert_eq!(quantize(1.0).unwrap(), 255);
        assert_eq!(quantize(0.5).unwrap(), 128);
        assert!(quantize(1.0001).is_err());
        assert!(quantize(-1e-9).is_err());
        assert!(quantize(f64::NAN).is_err());
    }

    #[test]
    fn ramp_is_monotone_and_exact() {
        let mut prev = 0;
        for i in 0..256 {
            let q = quantize(i as f64 / 255.0).unwrap();
            assert_eq!(q as usize, i);
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let data: Vec<f64> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = Image::new(4, 3, data).unwrap();
        write_png(&img, &p).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_png_bytes(&img).unwrap(), std::fs::read(&p).unwrap());
    }
}
