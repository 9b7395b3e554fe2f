//! Gaussian smoothing and Sobel gradients, both with edge replication.

use crate::imaging::GrayImage;

use super::EdgeError;

/// Normalized 1-D Gaussian taps with half-width `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / sum) as f32).collect()
}

pub fn gaussian_smooth(img: &GrayImage, sigma: f64) -> Result<GrayImage, EdgeError> {
    let field = gaussian_smooth_field(img, sigma)?;
    let out = field.iter().map(|&a| a.round().clamp(0.0, 255.0) as u8).collect();
    Ok(GrayImage::new(img.width(), img.height(), out).expect("dimensions preserved"))
}

/// Unrounded smoothing result, row-major.
pub fn gaussian_smooth_field(img: &GrayImage, sigma: f64) -> Result<Vec<f32>, EdgeError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EdgeError::InvalidSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.data();

    // horizontal pass into f32, rows padded by replication
    let mut tmp = vec![0f32; w * h];
    let mut padded = vec![0f32; w + 2 * radius];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = i.saturating_sub(radius).min(w - 1);
            *p = f32::from(row[x]);
        }
        let dst = &mut tmp[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            let window = &padded[x..x + kernel.len()];
            *d = window.iter().zip(&kernel).map(|(a, b)| a * b).sum();
        }
    }

    // vertical pass accumulates whole rows so the inner loop vectorizes
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let acc = &mut out[y * w..(y + 1) * w];
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y + k).saturating_sub(radius).min(h - 1);
            let src = &tmp[sy * w..(sy + 1) * w];
            acc.iter_mut().zip(src).for_each(|(a, &s)| *a += kw * s);
        }
    }
    Ok(out)
}

/// Per-pixel Sobel response.
///
/// `direction` is not stored; it is derived on demand from `gx`/`gy`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<i16>,
    gy: Vec<i16>,
    magnitude: Vec<f32>,
}

impl GradientField {
    /// Builds a field from raw gradient components; magnitude is `hypot(gx, gy)`.
    pub fn from_components(width: usize, height: usize, gx: Vec<i16>, gy: Vec<i16>) -> Self {
        assert_eq!(gx.len(), width * height);
        assert_eq!(gy.len(), width * height);
        let magnitude = gx
            .iter()
            .zip(&gy)
            .map(|(&a, &b)| f32::from(a).hypot(f32::from(b)))
            .collect();
        Self {
            width,
            height,
            gx,
            gy,
            magnitude,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gx(&self) -> &[i16] {
        &self.gx
    }

    pub fn gy(&self) -> &[i16] {
        &self.gy
    }

    pub fn magnitude(&self) -> &[f32] {
        &self.magnitude
    }

    /// Gradient direction at (x, y) in radians, in (-pi, pi].
    pub fn direction(&self, x: usize, y: usize) -> f32 {
        let i = y * self.width + x;
        let a = f32::from(self.gy[i]).atan2(f32::from(self.gx[i]));
        if a <= -std::f32::consts::PI {
            std::f32::consts::PI
        } else {
            a
        }
    }
}

pub fn sobel_gradients(img: &GrayImage) -> Result<GradientField, EdgeError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 3 || h < 3 {
        return Err(EdgeError::TooSmall {
            width: w,
            height: h,
        });
    }
    let data = img.data();
    let mut gx = vec![0i16; w * h];
    let mut gy = vec![0i16; w * h];
    let px = |x: usize, y: usize| i16::from(data[y * w + x]);
    for y in 0..h {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        let (up, mid, down) = (&data[yu * w..(yu + 1) * w], &data[y * w..(y + 1) * w], &data[yd * w..(yd + 1) * w]);
        let row_gx = &mut gx[y * w..(y + 1) * w];
        let row_gy = &mut gy[y * w..(y + 1) * w];
        // interior columns without clamping
        for x in 1..w - 1 {
            let (l, r) = (x - 1, x + 1);
            let a = i16::from(up[l]);
            let b = i16::from(up[x]);
            let c = i16::from(up[r]);
            let d = i16::from(mid[l]);
            let f = i16::from(mid[r]);
            let g = i16::from(down[l]);
            let hh = i16::from(down[x]);
            let i = i16::from(down[r]);
            row_gx[x] = (c + 2 * f + i) - (a + 2 * d + g);
            row_gy[x] = (g + 2 * hh + i) - (a + 2 * b + c);
        }
        for x in [0, w - 1] {
            let l = x.saturating_sub(1);
            let r = (x + 1).min(w - 1);
            row_gx[x] = (px(r, yu) + 2 * px(r, y) + px(r, yd)) - (px(l, yu) + 2 * px(l, y) + px(l, yd));
            row_gy[x] = (px(l, yd) + 2 * px(x, yd) + px(r, yd)) - (px(l, yu) + 2 * px(x, yu) + px(r, yu));
        }
    }
    Ok(GradientField::from_components(w, h, gx, gy))
}
