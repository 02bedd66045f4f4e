//! 8-bit RGB frames, PGM/PPM I/O, and crop-and-resize into network inputs.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{HiftError, Result};
use crate::tensor::Tensor;

/// Interleaved RGB frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(HiftError::Shape(format!(
                "{width}x{height} RGB image cannot hold {} bytes",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Reads a binary or ASCII PGM/PPM file; grayscale is expanded to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| HiftError::Format(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    /// Writes a binary PPM (P6).
    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        PnmEncoder::new(file)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(
                &self.data,
                self.width as u32,
                self.height as u32,
                ExtendedColorType::Rgb8,
            )
            .map_err(|e| HiftError::Format(format!("{}: {e}", path.display())))
    }

    pub fn mean_color(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for px in self.data.chunks(3) {
            for c in 0..3 {
                acc[c] += px[c] as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        acc.map(|v| v / n)
    }

    /// Square crop of side `side` (frame pixels) centered at `(cx, cy)`,
    /// bilinearly resampled to `out x out` and normalized into a `3 x out x out`
    /// tensor. Samples outside the frame take the frame's mean color.
    pub fn crop_resize(&self, cx: f64, cy: f64, side: f64, out: usize) -> Tensor {
        let pad = self.mean_color();
        let scale = side / out as f64;
        let x0 = cx - side / 2.0;
        let y0 = cy - side / 2.0;
        let mut data = vec![0.0; 3 * out * out];
        let fetch = |x: isize, y: isize, c: usize| -> f64 {
            if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                pad[c]
            } else {
                self.data[(y as usize * self.width + x as usize) * 3 + c] as f64
            }
        };
        for oy in 0..out {
            // Continuous coordinate of the output pixel center, shifted so
            // integer values land on source pixel centers.
            let sy = y0 + (oy as f64 + 0.5) * scale - 0.5;
            let iy = sy.floor();
            let fy = sy - iy;
            let iy = iy as isize;
            for ox in 0..out {
                let sx = x0 + (ox as f64 + 0.5) * scale - 0.5;
                let ix = sx.floor();
                let fx = sx - ix;
                let ix = ix as isize;
                for c in 0..3 {
                    let v = (1.0 - fy) * ((1.0 - fx) * fetch(ix, iy, c) + fx * fetch(ix + 1, iy, c))
                        + fy * ((1.0 - fx) * fetch(ix, iy + 1, c) + fx * fetch(ix + 1, iy + 1, c));
                    data[(c * out + oy) * out + ox] = normalize(v);
                }
            }
        }
        Tensor::new(&[3, out, out], data).expect("crop shape")
    }
}

/// Maps 8-bit intensities to roughly unit scale around zero.
pub fn normalize(v: f64) -> f64 {
    (v - 127.5) / 64.0
}
