//! Run configuration: library defaults, then a flat TOML file, then flags.

use std::path::Path;

use clap::Args;
use serde::Deserialize;

use infocrop::budget::TokenBudgetModel;
use infocrop::crop::IscConfig;
use infocrop::edge::EdgeConfig;
use infocrop::srdl::{DualLoopConfig, SrdlConfig};

use crate::error::CliError;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "ISC_CONFIG";

macro_rules! settings {
    ($($(#[$doc:meta])* $field:ident: $ty:ty,)*) => {
        /// Every tunable, all optional. Config-file keys and flags share
        /// kebab-case names.
        #[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        pub struct Settings {
            $($(#[$doc])* #[arg(long, global = true)] pub $field: Option<$ty>,)*
        }

        impl Settings {
            /// Values set in `over` win.
            pub fn overlay(self, over: Settings) -> Settings {
                Settings { $($field: over.$field.or(self.$field),)* }
            }
        }
    };
}

settings! {
    /// CLAHE clip limit.
    clahe_clip_limit: f64,
    /// CLAHE tiles per axis.
    clahe_tiles: u32,
    /// Gaussian smoothing sigma in pixels.
    gaussian_sigma: f64,
    /// Weak-edge threshold on the 8-bit magnitude scale.
    hysteresis_low: u8,
    /// Strong-edge threshold on the 8-bit magnitude scale.
    hysteresis_high: u8,
    /// Dilation radius in pixels.
    dilation_radius: usize,
    /// Smallest crop window side.
    k_min: u32,
    /// Density threshold at the smallest window.
    rho_min: f64,
    /// Window growth factor between scales.
    alpha: f64,
    /// Maximum number of regions.
    n_max: usize,
    /// Side of every resized sub-image.
    target_size: u32,
    /// Lower bound on the per-scale density threshold.
    rho_floor: f64,
    /// Append a whole-screen thumbnail to every manifest.
    include_context_thumbnail: bool,
    /// IoU a refined position must exceed.
    tau: f64,
    /// Refinement budget per element.
    max_iters: u32,
    /// Spectral entropy threshold for visual hard cases, in nats.
    h_min: f64,
    /// History IoU below which a record counts as failed.
    failure_iou: f64,
    /// Augmented variants per failed description.
    n_variants: usize,
    /// Also annotate screens that are not visual hard cases.
    include_baseline: bool,
    /// Vision-encoder patch side.
    patch_size: u32,
    /// Attention heads in the cost model.
    attn_heads: u32,
    /// Attention head dimension in the cost model.
    head_dim: u32,
    /// Seed for every randomized step.
    seed: u64,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub edge: EdgeConfig,
    pub isc: IscConfig,
    pub srdl: SrdlConfig,
    pub model: TokenBudgetModel,
    pub seed: u64,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        macro_rules! apply {
            ($target:expr, $($field:ident),*) => {
                $(if let Some(v) = self.$field { $target.$field = v; })*
            };
        }
        let mut edge = EdgeConfig::default();
        apply!(edge, clahe_clip_limit, clahe_tiles, gaussian_sigma, hysteresis_low, hysteresis_high, dilation_radius);
        edge.validate()?;

        let mut isc = IscConfig::default();
        apply!(isc, k_min, rho_min, alpha, n_max, target_size, rho_floor, include_context_thumbnail);
        isc.validate()?;

        let mut loop_cfg = DualLoopConfig::default();
        apply!(loop_cfg, tau, max_iters);
        loop_cfg.validate()?;
        let mut srdl = SrdlConfig {
            loop_cfg,
            ..SrdlConfig::default()
        };
        apply!(srdl, h_min, failure_iou, n_variants, include_baseline);
        if !(srdl.h_min >= 0.0) {
            return Err(CliError::Config(format!("h_min must be >= 0, got {}", srdl.h_min)));
        }
        if !(0.0..=1.0).contains(&srdl.failure_iou) {
            return Err(CliError::Config(format!("failure_iou must be in [0, 1], got {}", srdl.failure_iou)));
        }

        let mut model = TokenBudgetModel {
            target_size: isc.target_size,
            max_subimages: isc.n_max,
            ..TokenBudgetModel::default()
        };
        apply!(model, patch_size, attn_heads, head_dim);
        model.validate()?;

        Ok(RunConfig {
            edge,
            isc,
            srdl,
            model,
            seed: self.seed.unwrap_or(0),
        })
    }
}

/// Defaults, overlaid by the config file (explicit path, else `$ISC_CONFIG`),
/// overlaid by flags.
pub fn load(explicit: Option<&Path>, flags: Settings) -> Result<RunConfig, CliError> {
    let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty());
    let path = explicit.map(Path::to_path_buf).or_else(|| from_env.map(Into::into));
    let file = match path {
        Some(p) => Settings::from_file(&p)?,
        None => Settings::default(),
    };
    file.overlay(flags).resolve()
}
