use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Binary P6 encoding, maxval 255.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        let bad = |detail: &str| Error::Format {
            field: "ppm",
            detail: detail.to_string(),
        };
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        if fields[0] != "P6" {
            return Err(bad("magic is not P6"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("maxval must be 255"));
        }
        let len = width * height * 3;
        let raster = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated raster"))?;
        Ok(Image {
            width,
            height,
            pixels: raster.to_vec(),
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_ppm(&bytes)
    }

    /// Flattened pixels mapped affinely from `[0, 255]` to `[-1, 1]`.
    pub fn to_normalized(&self) -> Tensor {
        Tensor::from_vec(self.pixels.iter().map(|&p| p as f64 / 127.5 - 1.0).collect())
    }

    /// Inverse of [`Image::to_normalized`], clamping to `[-1, 1]` first.
    pub fn from_normalized(values: &[f64], width: usize, height: usize) -> Result<Image> {
        if values.len() != width * height * 3 {
            return Err(Error::shape("from_normalized", &[values.len()], &[height, width, 3]));
        }
        let pixels = values
            .iter()
            .map(|&v| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
                ((v + 1.0) * 127.5).round() as u8
            })
            .collect();
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_layout() {
        let mut img = Image::new(2, 1);
        img.set(1, 0, [1, 2, 3]);
        let bytes = img.to_ppm();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 0, 0, 1, 2, 3]);
        assert_eq!(Image::from_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn truncated_ppm_is_an_error() {
        let bytes = Image::new(4, 4).to_ppm();
        assert!(Image::from_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(Image::from_ppm(b"P3\n1 1\n255\n").is_err());
    }

    #[test]
    fn normalization_roundtrips_every_byte() {
        let mut img = Image::new(86, 1);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = (i % 256) as u8;
        }
        let back = Image::from_normalized(img.to_normalized().data(), 86, 1).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn out_of_range_values_clamp() {
        let img = Image::from_normalized(&[-3.0, 5.0, 0.0], 1, 1).unwrap();
        assert_eq!(img.pixels, vec![0, 255, 128]);
    }
}
