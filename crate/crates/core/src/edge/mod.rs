//! Information detection: turns a screenshot into a binary matrix marking
//! visually meaningful pixels.
//!
//! Stages run in a fixed order: luma, CLAHE, Gaussian smoothing, Sobel
//! gradients, non-maximum suppression, hysteresis, then dilation. Every stage
//! preserves the image dimensions and is deterministic.

mod canny;
mod clahe;
mod filters;
mod matrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{to_grayscale, GrayImage, PixelImage};

pub use canny::{hysteresis_threshold, non_max_suppress, quantize_magnitude, sector, Sector};
pub use filters::{gaussian_kernel, gaussian_smooth, gaussian_smooth_field, sobel_gradients, GradientField};
pub use matrix::{dilate, InfoMatrix, MatrixError};

#[derive(Debug, Error, PartialEq)]
pub enum EdgeError {
    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("image must be at least 3x3 for gradients, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("hysteresis thresholds need 0 < low < high, got low={low} high={high}")]
    BadThresholds { low: u8, high: u8 },
    #[error("invalid edge config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeConfig {
    pub clahe_clip_limit: f64,
    /// Tiles per axis of the CLAHE grid.
    pub clahe_tiles: u32,
    pub gaussian_sigma: f64,
    /// Thresholds are on the 8-bit scale produced by [`quantize_magnitude`]:
    /// 13/38 here is the classic 50/150 pair on raw Sobel magnitudes.
    pub hysteresis_low: u8,
    pub hysteresis_high: u8,
    /// Chebyshev radius.
    pub dilation_radius: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            clahe_clip_limit: 2.0,
            clahe_tiles: 8,
            gaussian_sigma: 1.4,
            hysteresis_low: 13,
            hysteresis_high: 38,
            dilation_radius: 1,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<(), EdgeError> {
        if self.hysteresis_low == 0 || self.hysteresis_low >= self.hysteresis_high {
            return Err(EdgeError::BadThresholds {
                low: self.hysteresis_low,
                high: self.hysteresis_high,
            });
        }
        if !(self.gaussian_sigma > 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(EdgeError::InvalidSigma(self.gaussian_sigma));
        }
        if !(self.clahe_clip_limit >= 0.0) {
            return Err(EdgeError::Config(format!(
                "clahe_clip_limit must be >= 0, got {}",
                self.clahe_clip_limit
            )));
        }
        if self.clahe_tiles == 0 {
            return Err(EdgeError::Config("clahe_tiles must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn equalize_adaptive(img: &GrayImage, cfg: &EdgeConfig) -> GrayImage {
    clahe::equalize_adaptive(img, cfg.clahe_tiles, cfg.clahe_clip_limit)
}

pub fn detect_information(img: &PixelImage, cfg: &EdgeConfig) -> Result<InfoMatrix, EdgeError> {
    cfg.validate()?;
    let gray = to_grayscale(img);
    let equalized = equalize_adaptive(&gray, cfg);
    let smooth = gaussian_smooth(&equalized, cfg.gaussian_sigma)?;
    let gradients = sobel_gradients(&smooth)?;
    let thin = non_max_suppress(&gradients);
    let edges = hysteresis_threshold(&thin, cfg.hysteresis_low, cfg.hysteresis_high)?;
    Ok(dilate(&edges, cfg.dilation_radius))
}
