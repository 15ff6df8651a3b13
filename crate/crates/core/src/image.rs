//! 8-bit grayscale images and their PGM (P5) / PNG encodings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Binary PGM: `P5\n<w> <h>\n255\n` followed by raw row-major bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width, self.height);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            let to_io = |e: png::EncodingError| Error::io("<png>", std::io::Error::other(e));
            let mut writer = encoder.write_header().map_err(to_io)?;
            writer.write_image_data(&self.pixels).map_err(to_io)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_png()?;
        fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }
}

impl From<&crate::sensor::ApsImage> for GrayImage {
    fn from(img: &crate::sensor::ApsImage) -> Self {
        GrayImage {
            width: img.width,
            height: img.height,
            pixels: img.pixels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let img = GrayImage {
            width: 3,
            height: 2,
            pixels: vec![0, 1, 2, 253, 254, 255],
        };
        let bytes = img.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 253, 254, 255]);
    }

    #[test]
    fn png_has_signature() {
        let img = GrayImage {
            width: 4,
            height: 4,
            pixels: vec![7; 16],
        };
        let bytes = img.to_png().unwrap();
        assert_eq!(&bytes[..8], &[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A]);
    }
}
