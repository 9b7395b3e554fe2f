//! Multi-scale adaptive region extraction and uniform resizing.
//!
//! A square window starts at `k_min` and grows geometrically. At every scale
//! the window slides in row-major order; a window whose share of 1-entries
//! reaches the scale's threshold becomes a region and its cells are cleared in
//! a private working copy, so no 1-entry is ever counted for two regions.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{detect_information, EdgeConfig, EdgeError, InfoMatrix};
use crate::imaging::{bilinear_resize, crop_rect, ImagingError, PixelImage, Rect};

#[derive(Debug, Error)]
pub enum CropError {
    #[error("window {k}x{k} at ({x},{y}) exceeds matrix {cols}x{rows}")]
    OutOfBounds {
        x: u32,
        y: u32,
        k: u32,
        cols: usize,
        rows: usize,
    },
    #[error("image is {image_w}x{image_h} but information matrix is {cols}x{rows}")]
    DimensionMismatch {
        image_w: u32,
        image_h: u32,
        cols: usize,
        rows: usize,
    },
    #[error("invalid crop config: {0}")]
    Config(String),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IscConfig {
    /// Side of the smallest window, in pixels.
    pub k_min: u32,
    /// Density threshold at the smallest scale.
    pub rho_min: f64,
    /// Window growth factor between scales.
    pub alpha: f64,
    pub n_max: usize,
    /// Side of every resized sub-image.
    pub target_size: u32,
    /// Lower bound on the per-scale threshold.
    pub rho_floor: f64,
    pub include_context_thumbnail: bool,
}

impl Default for IscConfig {
    fn default() -> Self {
        Self {
            k_min: 64,
            rho_min: 0.10,
            alpha: 1.5,
            n_max: 16,
            target_size: 224,
            rho_floor: 0.005,
            include_context_thumbnail: false,
        }
    }
}

impl IscConfig {
    pub fn validate(&self) -> Result<(), CropError> {
        let fail = |m: String| Err(CropError::Config(m));
        if self.k_min < 8 {
            return fail(format!("k_min must be >= 8, got {}", self.k_min));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= 1.0) {
            return fail(format!("rho_min must be in (0, 1], got {}", self.rho_min));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return fail(format!("alpha must be > 1, got {}", self.alpha));
        }
        if self.n_max < 1 {
            return fail("n_max must be >= 1".into());
        }
        if self.target_size < 32 {
            return fail(format!("target_size must be >= 32, got {}", self.target_size));
        }
        if !(self.rho_floor >= 0.0 && self.rho_floor <= 1.0) {
            return fail(format!("rho_floor must be in [0, 1], got {}", self.rho_floor));
        }
        Ok(())
    }
}

/// One extracted square window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub k: u32,
    /// 1-based extraction order; 0 marks the optional whole-frame thumbnail.
    pub id: u32,
    /// Fraction of 1-entries in the window when it was extracted.
    pub density: f64,
}

impl Region {
    pub fn rect(&self) -> Rect {
        Rect::square(self.x, self.y, self.k)
    }

    pub fn is_context(&self) -> bool {
        self.id == 0
    }
}

/// Exact share of 1-entries in the `k`×`k` window at (`x`, `y`).
pub fn window_density(m: &InfoMatrix, x: u32, y: u32, k: u32) -> Result<f64, CropError> {
    if k == 0 || x as usize + k as usize > m.cols() || y as usize + k as usize > m.rows() {
        return Err(CropError::OutOfBounds {
            x,
            y,
            k,
            cols: m.cols(),
            rows: m.rows(),
        });
    }
    let (x, k) = (x as usize, k as usize);
    let ones: usize = (y as usize..y as usize + k)
        .map(|r| m.row(r)[x..x + k].iter().map(|&b| b as usize).sum::<usize>())
        .sum();
    Ok(ones as f64 / (k * k) as f64)
}

/// `max(rho_min / (k / k_min)^2, rho_floor)`.
pub fn scale_threshold(cfg: &IscConfig, k: u32) -> f64 {
    let ratio = f64::from(k) / f64::from(cfg.k_min);
    (cfg.rho_min / (ratio * ratio)).max(cfg.rho_floor)
}

/// Next window side: `ceil(alpha * k)`, always strictly larger than `k`.
pub fn next_scale(k: u32, alpha: f64) -> u32 {
    ((alpha * f64::from(k)).ceil() as u32).max(k + 1)
}

/// Window sides visited for a `rows`×`cols` matrix when the region budget
/// never runs out.
pub fn scale_schedule(cfg: &IscConfig, rows: usize, cols: usize) -> Vec<u32> {
    let limit = rows.max(cols) as u64;
    let mut ks = Vec::new();
    let mut k = cfg.k_min;
    while u64::from(k) <= limit {
        ks.push(k);
        k = next_scale(k, cfg.alpha);
    }
    ks
}

/// Scan stride at window side `k`: `max(floor(k / 4), 32)`.
pub fn scan_step(k: u32) -> u32 {
    (k / 4).max(32)
}

/// Working copy with per-row prefix counts, so a window sum costs one
/// subtraction per row and clearing a window only touches its rows.
struct WorkingCopy {
    cols: usize,
    bits: Vec<u8>,
    prefix: Vec<u32>,
}

impl WorkingCopy {
    fn new(m: &InfoMatrix) -> Self {
        let cols = m.cols();
        let mut prefix = vec![0u32; m.rows() * (cols + 1)];
        for r in 0..m.rows() {
            let p = &mut prefix[r * (cols + 1)..(r + 1) * (cols + 1)];
            let mut acc = 0u32;
            for (c, &b) in m.row(r).iter().enumerate() {
                acc += u32::from(b);
                p[c + 1] = acc;
            }
        }
        Self {
            cols,
            bits: m.bits().to_vec(),
            prefix,
        }
    }

    fn window_ones(&self, x: usize, y: usize, k: usize) -> u64 {
        let stride = self.cols + 1;
        (y..y + k)
            .map(|r| u64::from(self.prefix[r * stride + x + k] - self.prefix[r * stride + x]))
            .sum()
    }

    fn clear(&mut self, x: usize, y: usize, k: usize) {
        let stride = self.cols + 1;
        for r in y..y + k {
            self.bits[r * self.cols + x..r * self.cols + x + k].fill(0);
            let row = &self.bits[r * self.cols..(r + 1) * self.cols];
            let p = &mut self.prefix[r * stride..(r + 1) * stride];
            let mut acc = p[x];
            for c in x..self.cols {
                acc += u32::from(row[c]);
                p[c + 1] = acc;
            }
        }
    }
}

/// Extracts information-balanced square regions from `m`.
///
/// The returned list is sorted by density (descending), ties by id.
pub fn adaptive_extract(m: &InfoMatrix, cfg: &IscConfig) -> Vec<Region> {
    let mut regions = Vec::new();
    if m.is_empty() {
        return regions;
    }
    let (rows, cols) = (m.rows(), m.cols());
    let mut work = WorkingCopy::new(m);
    let limit = rows.max(cols) as u64;
    let mut k = cfg.k_min;
    'scales: while u64::from(k) <= limit && regions.len() < cfg.n_max {
        let ku = k as usize;
        let step = scan_step(k) as usize;
        let threshold = scale_threshold(cfg, k);
        let area = (ku * ku) as f64;
        let mut y = 0usize;
        while y + ku <= rows {
            let mut x = 0usize;
            while x + ku <= cols {
                let density = work.window_ones(x, y, ku) as f64 / area;
                if density >= threshold {
                    regions.push(Region {
                        x: x as u32,
                        y: y as u32,
                        k,
                        id: regions.len() as u32 + 1,
                        density,
                    });
                    work.clear(x, y, ku);
                    if regions.len() >= cfg.n_max {
                        break 'scales;
                    }
                }
                x += step;
            }
            y += step;
        }
        k = next_scale(k, cfg.alpha);
    }
    sort_regions(&mut regions);
    regions
}

/// Density descending, ties by id ascending.
pub fn sort_regions(regions: &mut [Region]) {
    regions.sort_by(|a, b| b.density.total_cmp(&a.density).then(a.id.cmp(&b.id)));
}

/// Share of the 1-entries of `m` that fall inside the union of `regions`;
/// 0 when `m` has no 1-entries.
pub fn residual_coverage(m: &InfoMatrix, regions: &[Region]) -> f64 {
    let total = m.count_ones();
    if total == 0 {
        return 0.0;
    }
    let mut covered = 0usize;
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for r in 0..m.rows() {
        spans.clear();
        spans.extend(
            regions
                .iter()
                .filter(|g| !g.is_context())
                .filter(|g| (g.y as usize..(g.y + g.k) as usize).contains(&r))
                .map(|g| (g.x as usize, ((g.x + g.k) as usize).min(m.cols()))),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_unstable();
        let row = m.row(r);
        let mut reach = 0usize;
        for &(a, b) in spans.iter() {
            let a = a.max(reach);
            if b > a {
                covered += row[a..b].iter().map(|&v| v as usize).sum::<usize>();
                reach = b;
            }
        }
    }
    covered as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub path: Option<String>,
    pub width: u32,
    pub height: u32,
}

/// Extracted regions, their resized crops and the matrix they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CropManifest {
    pub source: SourceInfo,
    pub config: IscConfig,
    pub regions: Vec<Region>,
    /// Aligned 1:1 with `regions`, each exactly `target_size` square.
    pub sub_images: Vec<PixelImage>,
    pub residual_coverage: f64,
    pub info: InfoMatrix,
}

/// Serialized form of a [`CropManifest`]; sub-images live in separate files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub source: SourceInfo,
    pub config: IscConfig,
    pub regions: Vec<Region>,
    pub residual_coverage: f64,
    pub info_matrix_rle: Vec<u64>,
}

impl ManifestRecord {
    pub fn info_matrix(&self) -> Result<InfoMatrix, crate::edge::MatrixError> {
        InfoMatrix::from_rle(
            self.source.height as usize,
            self.source.width as usize,
            &self.info_matrix_rle,
        )
    }
}

impl CropManifest {
    pub fn record(&self) -> ManifestRecord {
        ManifestRecord {
            source: self.source.clone(),
            config: self.config.clone(),
            regions: self.regions.clone(),
            residual_coverage: self.residual_coverage,
            info_matrix_rle: self.info.to_rle(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.record()).expect("manifest is always serializable")
    }

    /// Regions produced by extraction, without the context thumbnail.
    pub fn extracted(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| !r.is_context())
    }

    pub fn sub_image_name(stem: &str, region: &Region) -> String {
        format!("{stem}_r{}.png", region.id)
    }

    /// Writes every sub-image as `{stem}_r{id}.png` under `dir`.
    pub fn write_sub_images(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, ImagingError> {
        self.regions
            .iter()
            .zip(&self.sub_images)
            .map(|(region, img)| {
                let path = dir.join(Self::sub_image_name(stem, region));
                img.save_png(&path).map(|_| path)
            })
            .collect()
    }
}

/// Crops every region from `img` and resizes it to the target square.
pub fn finalize_crops(
    img: &PixelImage,
    info: &InfoMatrix,
    regions: &[Region],
    cfg: &IscConfig,
) -> Result<CropManifest, CropError> {
    if info.rows() != img.height() as usize || info.cols() != img.width() as usize {
        return Err(CropError::DimensionMismatch {
            image_w: img.width(),
            image_h: img.height(),
            cols: info.cols(),
            rows: info.rows(),
        });
    }
    let s = cfg.target_size;
    let mut regions = regions.to_vec();
    let mut sub_images = Vec::with_capacity(regions.len() + 1);
    for r in &regions {
        if !r.rect().fits(img.width(), img.height()) {
            return Err(CropError::OutOfBounds {
                x: r.x,
                y: r.y,
                k: r.k,
                cols: info.cols(),
                rows: info.rows(),
            });
        }
        let crop = crop_rect(img, r.rect())?;
        sub_images.push(bilinear_resize(&crop, s, s)?);
    }
    let residual_coverage = residual_coverage(info, &regions);
    if cfg.include_context_thumbnail {
        regions.push(Region {
            x: 0,
            y: 0,
            k: img.width().max(img.height()),
            id: 0,
            density: info.density(),
        });
        sub_images.push(bilinear_resize(img, s, s)?);
    }
    Ok(CropManifest {
        source: SourceInfo {
            path: None,
            width: img.width(),
            height: img.height(),
        },
        config: cfg.clone(),
        regions,
        sub_images,
        residual_coverage,
        info: info.clone(),
    })
}

/// Detection, extraction and resizing in one call.
pub fn isc_pipeline(
    img: &PixelImage,
    ecfg: &EdgeConfig,
    icfg: &IscConfig,
) -> Result<CropManifest, CropError> {
    icfg.validate()?;
    let info = detect_information(img, ecfg)?;
    let regions = adaptive_extract(&info, icfg);
    finalize_crops(img, &info, &regions, icfg)
}
