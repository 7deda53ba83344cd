use crate::error::{Error, Result};
use crate::math::Rgb;

/// Row-major RGB image, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, c: Rgb) -> Self {
        let data = (0..width * height).flat_map(|_| [c.x, c.y, c.z]).collect();
        Self { width, height, data }
    }

    pub fn from_pixels(width: usize, height: usize, px: &[Rgb]) -> Result<Self> {
        Self::new(width, height, px.iter().flat_map(|c| [c.x, c.y, c.z]).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let o = 3 * (y * self.width + x);
        Rgb::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Rgb) {
        let o = 3 * (y * self.width + x);
        self.data[o..o + 3].copy_from_slice(c.as_slice());
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}
