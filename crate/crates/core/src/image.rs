//! Floating-point raster images and the resampling helpers used by the
//! flow estimator and the preprocessing stages.

use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image with intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} with {} pixels",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image".into()));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel access with coordinates clamped to the border.
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real-valued position, border-clamped.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.get_clamped(x0, y0);
        let b = self.get_clamped(x0 + 1, y0);
        let c = self.get_clamped(x0, y0 + 1);
        let d = self.get_clamped(x0 + 1, y0 + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Half-resolution image by 2×2 box averaging (odd edges clamp).
    pub fn downsample(&self) -> GrayImage {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        GrayImage::from_fn(w, h, |x, y| {
            let (sx, sy) = (2 * x as isize, 2 * y as isize);
            0.25 * (self.get_clamped(sx, sy)
                + self.get_clamped(sx + 1, sy)
                + self.get_clamped(sx, sy + 1)
                + self.get_clamped(sx + 1, sy + 1))
        })
    }

    /// Bilinear resize to the given dimensions (pixel-center aligned).
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// Crops the axis-aligned square of side `side` centered at `(cx, cy)`,
    /// resampled to `out_side × out_side`. Outside pixels clamp to the border.
    pub fn crop_square(&self, cx: f64, cy: f64, side: f64, out_side: usize) -> GrayImage {
        let step = side / out_side as f64;
        let x0 = cx - side / 2.0;
        let y0 = cy - side / 2.0;
        GrayImage::from_fn(out_side, out_side, |x, y| {
            self.sample(x0 + (x as f64 + 0.5) * step - 0.5, y0 + (y as f64 + 0.5) * step - 0.5)
        })
    }

    /// Resamples through an inverse mapping: output pixel `p` takes the
    /// value of this image at `inverse(p)`.
    pub fn warp(&self, inverse: impl Fn(f64, f64) -> (f64, f64)) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let (sx, sy) = inverse(x as f64, y as f64);
            self.sample(sx, sy)
        })
    }

    /// Loads an image file; color images are converted with BT.601 luma
    /// weights, grayscale images are read as-is.
    pub fn load(path: &Path) -> Result<GrayImage> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if img.color().has_color() {
            let rgb = img.into_rgb8();
            let (w, h) = rgb.dimensions();
            rgb8_to_gray(w as usize, h as usize, rgb.as_raw())
        } else {
            Ok(from_luma8(&img.into_luma8()))
        }
    }

    /// Writes an 8-bit grayscale PNG (values clamped to `[0, 1]`).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8())
            .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

fn from_luma8(img: &image::GrayImage) -> GrayImage {
    let (w, h) = img.dimensions();
    GrayImage {
        width: w as usize,
        height: h as usize,
        data: img.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
    }
}

/// ITU-R BT.601 luma from linear RGB components in `[0, 1]`.
pub fn luma_bt601(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Converts an 8-bit RGB buffer to grayscale with BT.601 weights.
pub fn rgb8_to_gray(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidArgument("rgb buffer size mismatch".into()));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|p| luma_bt601(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0))
        .collect();
    GrayImage::new(width, height, data)
}

/// 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes PNG or binary PPM depending on the file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resize(&self, width: usize, height: usize) -> RgbImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let channels: Vec<GrayImage> = (0..3)
            .map(|c| {
                GrayImage::from_fn(self.width, self.height, |x, y| {
                    self.data[3 * (y * self.width + x) + c] as f64
                })
                .resize(width, height)
            })
            .collect();
        let mut data = Vec::with_capacity(width * height * 3);
        for i in 0..width * height {
            for ch in &channels {
                data.push(ch.data()[i].round().clamp(0.0, 255.0) as u8);
            }
        }
        RgbImage { width, height, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_sampling() {
        let img = GrayImage::from_fn(3, 3, |x, y| (x + 3 * y) as f64);
        assert_eq!(img.sample(1.0, 1.0), 4.0);
        assert!((img.sample(0.5, 0.0) - 0.5).abs() < 1e-12);
        assert!((img.sample(1.5, 1.5) - 6.0).abs() < 1e-12);
        assert_eq!(img.sample(-4.0, 10.0), 6.0);
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = GrayImage::from_fn(4, 2, |x, _| x as f64);
        let d = img.downsample();
        assert_eq!((d.width(), d.height()), (2, 1));
        assert_eq!(d.data(), &[0.5, 2.5]);
    }

    #[test]
    fn bt601_weights_sum_to_one() {
        assert!((luma_bt601(1.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
        let g = rgb8_to_gray(1, 1, &[255, 0, 0]).unwrap();
        assert!((g.data()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = GrayImage::from_fn(5, 4, |x, y| ((x * 4 + y) as f64) / 19.0);
        img.save_png(&path).unwrap();
        let back = GrayImage::load(&path).unwrap();
        assert_eq!(back.to_u8(), img.to_u8());
    }

    #[test]
    fn color_files_use_bt601() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        RgbImage {
            width: 1,
            height: 1,
            data: vec![0, 255, 0],
        }
        .save(&path)
        .unwrap();
        assert!((GrayImage::load(&path).unwrap().data()[0] - 0.587).abs() < 1e-12);
    }
}
