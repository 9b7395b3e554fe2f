//! Raster containers, luma conversion, cropping and bilinear resampling.
//!
//! All images are 8-bit, row-major and immutable once built; every operation
//! returns a fresh buffer.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    BufferSize {
        width: u32,
        height: u32,
        channels: u32,
        actual: usize,
    },
    #[error("rectangle {rect:?} exceeds image extent {width}x{height}")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("resize target must be at least 1x1, got {width}x{height}")]
    InvalidTarget { width: u32, height: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("could not encode {path}: {message}")]
    Encode { path: String, message: String },
}

/// Axis-aligned pixel rectangle, `w`×`h` starting at (`x`, `y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn square(x: u32, y: u32, k: u32) -> Self {
        Self::new(x, y, k, k)
    }

    /// True when the rectangle is non-empty and lies inside a `width`×`height` frame.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImagingError::BufferSize {
                width,
                height,
                channels: 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single color.
    ///
    /// Panics on a zero dimension.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills `r` (clipped to the frame) with one color.
    pub fn fill_rect(&mut self, r: Rect, rgb: [u8; 3]) {
        let x_end = (r.x + r.w).min(self.width);
        let y_end = (r.y + r.h).min(self.height);
        for y in r.y..y_end {
            for x in r.x..x_end {
                self.put_pixel(x, y, rgb);
            }
        }
    }

    pub fn load_png(path: &Path) -> Result<Self, ImagingError> {
        let display = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|source| ImagingError::Io {
            path: display.clone(),
            source,
        })?;
        let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| ImagingError::Decode {
                path: display,
                message: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = decoded.dimensions();
        Self::new(w, h, decoded.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImagingError> {
        let display = path.display().to_string();
        let mut bytes = Vec::new();
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut bytes),
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| ImagingError::Encode {
            path: display.clone(),
            message: e.to_string(),
        })?;
        std::fs::write(path, bytes).map_err(|source| ImagingError::Io {
            path: display,
            source,
        })
    }
}

/// 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage { width, height });
        }
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::BufferSize {
                width,
                height,
                channels: 1,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Panics on a zero dimension.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// Builds an image from a closure over (x, y).
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn transpose(&self) -> GrayImage {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut data = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                data[x * h + y] = self.data[y * w + x];
            }
        }
        GrayImage {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

/// Rec.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
///
/// Evaluated in exact integer arithmetic so no tie is lost to float error.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let s = 299 * u32::from(rgb[0]) + 587 * u32::from(rgb[1]) + 114 * u32::from(rgb[2]);
    ((s + 500) / 1000) as u8
}

pub fn to_grayscale(img: &PixelImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| luma([p[0], p[1], p[2]]))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

pub fn crop_rect(img: &PixelImage, r: Rect) -> Result<PixelImage, ImagingError> {
    if !r.fits(img.width, img.height) {
        return Err(ImagingError::OutOfBounds {
            rect: r,
            width: img.width,
            height: img.height,
        });
    }
    let stride = img.width as usize * 3;
    let row_len = r.w as usize * 3;
    let mut data = Vec::with_capacity(row_len * r.h as usize);
    for y in r.y..r.y + r.h {
        let start = y as usize * stride + r.x as usize * 3;
        data.extend_from_slice(&img.data[start..start + row_len]);
    }
    Ok(PixelImage {
        width: r.w,
        height: r.h,
        data,
    })
}

/// Source sample positions for one axis: (lower index, upper index, upper weight).
///
/// Pixel centers are aligned: `src = (dst + 0.5) * scale - 0.5`, clamped to the
/// valid range.
fn axis_taps(src_len: u32, dst_len: u32) -> Vec<(usize, usize, f32)> {
    let scale = f64::from(src_len) / f64::from(dst_len);
    let max = f64::from(src_len - 1);
    (0..dst_len)
        .map(|d| {
            let s = ((f64::from(d) + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor();
            let hi = (lo + 1.0).min(max);
            (lo as usize, hi as usize, (s - lo) as f32)
        })
        .collect()
}

pub fn bilinear_resize(
    img: &PixelImage,
    target_w: u32,
    target_h: u32,
) -> Result<PixelImage, ImagingError> {
    if target_w == 0 || target_h == 0 {
        return Err(ImagingError::InvalidTarget {
            width: target_w,
            height: target_h,
        });
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width, target_w);
    let ys = axis_taps(img.height, target_h);
    let stride = img.width as usize * 3;
    let mut data = Vec::with_capacity(target_w as usize * target_h as usize * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &img.data[y0 * stride..(y0 + 1) * stride];
        let row1 = &img.data[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = f32::from(row0[x0 * 3 + c]) * (1.0 - fx) + f32::from(row0[x1 * 3 + c]) * fx;
                let bottom =
                    f32::from(row1[x0 * 3 + c]) * (1.0 - fx) + f32::from(row1[x1 * 3 + c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(PixelImage {
        width: target_w,
        height: target_h,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> PixelImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.gen()).collect();
        PixelImage::new(w, h, data).unwrap()
    }

    /// Nearest integer to s/1000 with halves going up, found by search rather
    /// than by the closed form used in `luma`.
    fn luma_oracle(r: u8, g: u8, b: u8) -> u8 {
        let s = 299 * i64::from(r) + 587 * i64::from(g) + 114 * i64::from(b);
        (0..=255i64)
            .min_by_key(|&n| {
                let d = (1000 * n - s).abs();
                // prefer the upper neighbour on an exact tie
                (d, -n)
            })
            .unwrap() as u8
    }

    #[test]
    fn white_maps_to_white() {
        let g = to_grayscale(&PixelImage::filled(5, 4, [255, 255, 255]));
        assert!(g.data().iter().all(|&v| v == 255));
        assert_eq!((g.width(), g.height()), (5, 4));
    }

    #[test]
    fn pure_red_luma() {
        let g = to_grayscale(&PixelImage::filled(1, 1, [255, 0, 0]));
        assert_eq!(g.data(), &[76]);
    }

    #[test]
    fn random_image_matches_scalar_oracle() {
        for seed in 0..50 {
            let img = random_image(8, 8, seed);
            let g = to_grayscale(&img);
            for y in 0..8 {
                for x in 0..8 {
                    let [r, gg, b] = img.pixel(x, y);
                    assert_eq!(g.get(x, y), luma_oracle(r, gg, b));
                }
            }
        }
    }

    #[test]
    fn luma_ties_round_up() {
        // 299*0 + 587*0 + 114*x ends in 500 only for x with 114x = 1000n + 500;
        // x = 250 gives 28500 -> 28.5 -> 29.
        assert_eq!(luma([0, 0, 250]), 29);
        assert_eq!(luma_oracle(0, 0, 250), 29);
    }

    #[test]
    fn full_crop_is_identity() {
        let img = random_image(7, 5, 1);
        assert_eq!(crop_rect(&img, Rect::new(0, 0, 7, 5)).unwrap(), img);
    }

    #[test]
    fn single_pixel_crop() {
        let img = random_image(7, 5, 2);
        let c = crop_rect(&img, Rect::new(0, 0, 1, 1)).unwrap();
        assert_eq!(c.data(), &img.pixel(0, 0));
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = random_image(7, 5, 3);
        assert!(matches!(
            crop_rect(&img, Rect::new(3, 0, 5, 2)),
            Err(ImagingError::OutOfBounds { .. })
        ));
        assert!(crop_rect(&img, Rect::new(0, 0, 0, 2)).is_err());
    }

    #[test]
    fn resize_rejects_zero_target() {
        let img = random_image(4, 4, 4);
        assert!(matches!(
            bilinear_resize(&img, 0, 3),
            Err(ImagingError::InvalidTarget { .. })
        ));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = PixelImage::filled(13, 9, [12, 200, 77]);
        for (w, h) in [(1, 1), (5, 30), (224, 224), (13, 9)] {
            let r = bilinear_resize(&img, w, h).unwrap();
            assert_eq!((r.width(), r.height()), (w, h));
            assert!(r.data().chunks(3).all(|p| p == [12, 200, 77]));
        }
    }

    #[test]
    fn resize_two_pixel_ramp_is_monotone() {
        let img = PixelImage::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let r = bilinear_resize(&img, 4, 1).unwrap();
        let vals: Vec<u8> = r.data().chunks(3).map(|p| p[0]).collect();
        assert_eq!(vals[0], 0);
        assert_eq!(vals[3], 255);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]), "{vals:?}");
    }

    /// Direct per-pixel bilinear formula, written independently of `axis_taps`.
    fn bilinear_oracle(img: &PixelImage, tw: u32, th: u32, x: u32, y: u32, c: usize) -> f64 {
        let sx = ((x as f64 + 0.5) * img.width() as f64 / tw as f64 - 0.5)
            .max(0.0)
            .min((img.width() - 1) as f64);
        let sy = ((y as f64 + 0.5) * img.height() as f64 / th as f64 - 0.5)
            .max(0.0)
            .min((img.height() - 1) as f64);
        let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        let (ax, ay) = (sx - x0 as f64, sy - y0 as f64);
        let p = |xx: u32, yy: u32| img.pixel(xx, yy)[c] as f64;
        p(x0, y0) * (1.0 - ax) * (1.0 - ay)
            + p(x1, y0) * ax * (1.0 - ay)
            + p(x0, y1) * (1.0 - ax) * ay
            + p(x1, y1) * ax * ay
    }

    #[test]
    fn gradient_upscale_matches_direct_formula() {
        let mut img = PixelImage::filled(64, 64, [0, 0, 0]);
        for y in 0..64 {
            for x in 0..64 {
                img.put_pixel(x, y, [(x * 4) as u8, (y * 4) as u8, ((x + y) * 2) as u8]);
            }
        }
        let r = bilinear_resize(&img, 224, 224).unwrap();
        let mut worst = 0.0f64;
        for y in 0..224 {
            for x in 0..224 {
                for c in 0..3 {
                    let want = bilinear_oracle(&img, 224, 224, x, y, c);
                    worst = worst.max((r.pixel(x, y)[c] as f64 - want).abs());
                }
            }
        }
        assert!(worst <= 1.0, "max abs diff {worst}");
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = random_image(9, 6, 9);
        img.save_png(&path).unwrap();
        assert_eq!(PixelImage::load_png(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn gray_inputs_are_fixed_points(v in any::<u8>()) {
            prop_assert_eq!(luma([v, v, v]), v);
        }

        #[test]
        fn nested_crops_compose(
            seed in any::<u64>(),
            (a, b) in (0u32..15, 0u32..15)
                .prop_flat_map(|(ax, ay)| (Just(ax), Just(ay), 1..=16 - ax, 1..=16 - ay))
                .prop_flat_map(|(ax, ay, aw, ah)| {
                    let a = Rect::new(ax, ay, aw, ah);
                    (Just(a), 0..aw, 0..ah)
                })
                .prop_flat_map(|(a, bx, by)| (Just(a), Just(bx), Just(by), 1..=a.w - bx, 1..=a.h - by))
                .prop_map(|(a, bx, by, bw, bh)| (a, Rect::new(bx, by, bw, bh))),
        ) {
            let img = random_image(16, 16, seed);
            let twice = crop_rect(&crop_rect(&img, a).unwrap(), b).unwrap();
            let once = crop_rect(&img, Rect::new(a.x + b.x, a.y + b.y, b.w, b.h)).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn resize_to_own_size_is_identity(seed in any::<u64>(), w in 1u32..20, h in 1u32..20) {
            let img = random_image(w, h, seed);
            prop_assert_eq!(bilinear_resize(&img, w, h).unwrap(), img);
        }

        #[test]
        fn resize_never_overshoots(seed in any::<u64>(), w in 1u32..12, h in 1u32..12, tw in 1u32..40, th in 1u32..40) {
            let img = random_image(w, h, seed);
            let r = bilinear_resize(&img, tw, th).unwrap();
            for c in 0..3 {
                let src = img.data().iter().skip(c).step_by(3);
                let (lo, hi) = src.fold((255u8, 0u8), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                for &v in r.data().iter().skip(c).step_by(3) {
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }
    }
}
