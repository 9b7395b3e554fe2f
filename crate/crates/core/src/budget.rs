//! Visual-token accounting, modeled attention cost, and wall-clock scaling
//! probes for the cropping pipeline.
//!
//! Costs are in normalized units with every big-O constant set to 1. They
//! model attention work, not measured time.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crop::{isc_pipeline, CropError, CropManifest, IscConfig};
use crate::edge::EdgeConfig;
use crate::synth::{fixtures, generate_screen, SynthError};

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("invalid token model: {0}")]
    Model(String),
    #[error("scaling probe needs at least 4 sizes and 3 repeats, got {sizes} sizes and {repeats} repeats")]
    ProbeShape { sizes: usize, repeats: usize },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Crop(#[from] CropError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenBudgetModel {
    /// Vision-encoder patch side p.
    pub patch_size: u32,
    /// Sub-image side S.
    pub target_size: u32,
    pub max_subimages: usize,
    pub attn_heads: u32,
    pub head_dim: u32,
}

impl Default for TokenBudgetModel {
    fn default() -> Self {
        Self {
            patch_size: 14,
            target_size: 224,
            max_subimages: 16,
            attn_heads: 16,
            head_dim: 64,
        }
    }
}

impl TokenBudgetModel {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.patch_size == 0 || self.target_size == 0 || self.max_subimages == 0 || self.attn_heads == 0 || self.head_dim == 0 {
            return Err(BudgetError::Model(format!("all fields must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// Tokens for one sub-image: `ceil(S / p)` per axis.
    pub fn tokens_per_subimage(&self) -> u64 {
        let side = u64::from(self.target_size.div_ceil(self.patch_size));
        side * side
    }

    fn attention_unit(&self) -> u128 {
        u128::from(self.attn_heads) * u128::from(self.head_dim)
    }
}

/// `ceil(w * h / p^2)`.
pub fn token_count_full(w: u32, h: u32, model: &TokenBudgetModel) -> u64 {
    let p2 = u64::from(model.patch_size) * u64::from(model.patch_size);
    (u64::from(w) * u64::from(h)).div_ceil(p2)
}

pub fn token_count_isc_n(subimages: usize, model: &TokenBudgetModel) -> u64 {
    subimages as u64 * model.tokens_per_subimage()
}

pub fn token_count_isc(manifest: &CropManifest, model: &TokenBudgetModel) -> u64 {
    token_count_isc_n(manifest.sub_images.len(), model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeledCosts {
    pub t_standard: u128,
    pub t_isc: u128,
}

impl ModeledCosts {
    pub fn ratio(&self) -> f64 {
        self.t_standard as f64 / self.t_isc as f64
    }
}

/// `T_standard = N_full^2 H d` and `T_ISC = w h + |Ω| N_sub^2 H d`.
pub fn modeled_costs_n(w: u32, h: u32, subimages: usize, model: &TokenBudgetModel) -> ModeledCosts {
    let n_full = u128::from(token_count_full(w, h, model));
    let n_sub = u128::from(model.tokens_per_subimage());
    let unit = model.attention_unit();
    ModeledCosts {
        t_standard: n_full * n_full * unit,
        t_isc: u128::from(w) * u128::from(h) + subimages as u128 * n_sub * n_sub * unit,
    }
}

pub fn modeled_costs(w: u32, h: u32, manifest: &CropManifest, model: &TokenBudgetModel) -> ModeledCosts {
    modeled_costs_n(w, h, manifest.sub_images.len(), model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub w: u32,
    pub h: u32,
    pub pixels: u64,
    pub ms_median: f64,
    pub tokens_full: u64,
    pub tokens_isc: u64,
    pub t_standard: u128,
    pub t_isc: u128,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Milliseconds per pixel.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub records: Vec<ScalingRecord>,
    pub fit: LinearFit,
    pub repeats: usize,
}

pub const CSV_HEADER: &str = "w,h,pixels,ms_median,tokens_full,tokens_isc,t_standard,t_isc,ratio";

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:.3},{},{},{},{},{:.6}\n",
                r.w, r.h, r.pixels, r.ms_median, r.tokens_full, r.tokens_isc, r.t_standard, r.t_isc, r.ratio
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let summary = serde_json::json!({
            "sizes": self.records.len(),
            "repeats": self.repeats,
            "slope_ms_per_pixel": self.fit.slope,
            "intercept_ms": self.fit.intercept,
            "r_squared": self.fit.r_squared,
        });
        serde_json::to_string_pretty(&summary).expect("summary is serializable")
    }
}

/// 854×480, 1280×720, 1920×1080 and 2560×1440.
pub const DEFAULT_SIZES: [(u32, u32); 4] = [(854, 480), (1280, 720), (1920, 1080), (2560, 1440)];

/// Median of `samples`; the mean of the middle two for even counts.
pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Median wall-clock of `f` in milliseconds over `repeats` runs after one
/// untimed warm-up run.
pub fn time_median<T>(repeats: usize, mut f: impl FnMut() -> T) -> f64 {
    std::hint::black_box(f());
    let mut samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(&mut samples)
}

/// Times the cropping pipeline on seeded synthetic screens at each size and
/// fits wall-clock against pixel count. Runs on the calling thread.
pub fn scaling_probe(
    sizes: &[(u32, u32)],
    ecfg: &EdgeConfig,
    icfg: &IscConfig,
    model: &TokenBudgetModel,
    repeats: usize,
    seed: u64,
) -> Result<ScalingReport, BudgetError> {
    if sizes.len() < 4 || repeats < 3 {
        return Err(BudgetError::ProbeShape {
            sizes: sizes.len(),
            repeats,
        });
    }
    model.validate()?;
    let mut records = Vec::with_capacity(sizes.len());
    for &(w, h) in sizes {
        let (img, _) = generate_screen(&fixtures::scaled(w, h, seed))?;
        let manifest = isc_pipeline(&img, ecfg, icfg)?;
        let ms_median = time_median(repeats, || isc_pipeline(&img, ecfg, icfg));
        let costs = modeled_costs(w, h, &manifest, model);
        log::info!("{w}x{h}: {ms_median:.2} ms, {} regions", manifest.regions.len());
        records.push(ScalingRecord {
            w,
            h,
            pixels: u64::from(w) * u64::from(h),
            ms_median,
            tokens_full: token_count_full(w, h, model),
            tokens_isc: token_count_isc(&manifest, model),
            t_standard: costs.t_standard,
            t_isc: costs.t_isc,
            ratio: costs.ratio(),
        });
    }
    let xs: Vec<f64> = records.iter().map(|r| r.pixels as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.ms_median).collect();
    Ok(ScalingReport {
        fit: linear_fit(&xs, &ys),
        records,
        repeats,
    })
}
