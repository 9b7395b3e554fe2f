//! Seeded synthetic GUI screens with exact ground truth.
//!
//! Elements are bordered rectangles; text is simulated by short hatch strokes
//! and icons by small line glyphs, so rendering needs no font stack and is
//! bit-identical everywhere. Every ink pixel is recorded in the ground-truth
//! mask; fills are not.

mod oracle;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::InfoMatrix;
use crate::imaging::{PixelImage, Rect};
use crate::srdl::BBox;

pub use oracle::{drifting_agent, noisy_agent, perfect_agent, Noise, OracleAgent};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("placed {placed} of {requested} elements before running out of retries")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("invalid screen spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityProfile {
    /// Uniform placement with wide gaps and loose text.
    Sparse,
    /// Elements gathered around a few seeded cluster centers.
    Clustered,
    /// Uniform placement with tight gaps and tight text.
    Dense,
}

impl std::str::FromStr for DensityProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "clustered" => Ok(Self::Clustered),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown density profile {other:?}")),
        }
    }
}

impl DensityProfile {
    fn gap(self) -> u32 {
        match self {
            Self::Sparse => 24,
            Self::Clustered => 6,
            Self::Dense => 4,
        }
    }

    /// Vertical pitch of simulated text lines.
    fn line_pitch(self) -> u32 {
        match self {
            Self::Sparse => 6,
            Self::Clustered => 5,
            Self::Dense => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Button,
    Input,
    Icon,
    Text,
    Menu,
}

impl ElementKind {
    pub const ALL: [ElementKind; 5] = [Self::Button, Self::Input, Self::Icon, Self::Text, Self::Menu];

    pub fn name(self) -> &'static str {
        match self {
            Self::Button => "button",
            Self::Input => "input",
            Self::Icon => "icon",
            Self::Text => "text",
            Self::Menu => "menu",
        }
    }

    fn size(self, rng: &mut ChaCha8Rng) -> (u32, u32) {
        match self {
            Self::Button => (rng.gen_range(72..=180), rng.gen_range(28..=44)),
            Self::Input => (rng.gen_range(140..=300), rng.gen_range(28..=40)),
            Self::Icon => {
                let s = rng.gen_range(24..=44);
                (s, s)
            }
            Self::Text => (rng.gen_range(60..=240), rng.gen_range(14..=22)),
            Self::Menu => (rng.gen_range(110..=200), rng.gen_range(90..=200)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedColor {
    pub name: String,
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: [u8; 3],
    /// Borders, text strokes and glyphs.
    pub ink: [u8; 3],
    /// Widget fills; their names appear in descriptions.
    pub widgets: Vec<NamedColor>,
}

impl Default for Palette {
    fn default() -> Self {
        let named = [
            ("red", [220, 60, 60]),
            ("green", [70, 170, 90]),
            ("blue", [70, 120, 220]),
            ("orange", [240, 150, 40]),
            ("purple", [150, 90, 200]),
            ("gray", [160, 160, 160]),
            ("teal", [40, 160, 160]),
            ("yellow", [235, 205, 70]),
        ];
        Self {
            background: [248, 248, 248],
            ink: [30, 30, 30],
            widgets: named
                .iter()
                .map(|(n, rgb)| NamedColor {
                    name: n.to_string(),
                    rgb: *rgb,
                })
                .collect(),
        }
    }
}

/// Labels used in descriptions. None of them collide with the phrasing
/// words of the template augmenter.
const LABELS: [&str; 30] = [
    "save", "cancel", "search", "settings", "profile", "home", "mail", "share", "delete", "edit",
    "print", "upload", "download", "help", "next", "back", "refresh", "filter", "sort", "login",
    "logout", "account", "cart", "music", "photo", "video", "calendar", "clock", "map", "phone",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenSpec {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub element_count: usize,
    pub profile: DensityProfile,
    pub palette: Palette,
    /// Cluster count for the clustered profile.
    pub clusters: usize,
    /// Lower bound on both sides of every element; 0 keeps kind defaults.
    pub min_element_side: u32,
    /// Element kinds to draw from, uniformly.
    pub kinds: Vec<ElementKind>,
}

impl Default for ScreenSpec {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
            seed: 0,
            element_count: 12,
            profile: DensityProfile::Clustered,
            palette: Palette::default(),
            clusters: 5,
            min_element_side: 0,
            kinds: ElementKind::ALL.to_vec(),
        }
    }
}

impl ScreenSpec {
    pub fn new(width: u32, height: u32, seed: u64, element_count: usize, profile: DensityProfile) -> Self {
        Self {
            width,
            height,
            seed,
            element_count,
            profile,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.width < 16 || self.height < 16 {
            return Err(SynthError::InvalidSpec(format!(
                "screen must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.palette.widgets.is_empty() {
            return Err(SynthError::InvalidSpec("palette has no widget colors".into()));
        }
        if self.kinds.is_empty() {
            return Err(SynthError::InvalidSpec("no element kinds to draw from".into()));
        }
        if self.profile == DensityProfile::Clustered && self.clusters == 0 {
            return Err(SynthError::InvalidSpec("clustered profile needs at least one cluster".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: u32,
    pub bbox: BBox,
    pub kind: ElementKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub width: u32,
    pub height: u32,
    pub elements: Vec<Element>,
    /// Exactly the ink pixels.
    pub info_mask: InfoMatrix,
}

impl GroundTruth {
    pub fn element(&self, description: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.description == description)
    }
}

/// Pixel buffer plus the mask of every ink pixel drawn so far.
struct Canvas {
    img: PixelImage,
    mask: InfoMatrix,
    ink: [u8; 3],
}

impl Canvas {
    fn fill(&mut self, r: Rect, rgb: [u8; 3]) {
        self.img.fill_rect(r, rgb);
    }

    fn stroke(&mut self, r: Rect) {
        self.img.fill_rect(r, self.ink);
        let x1 = (r.x + r.w).min(self.img.width());
        let y1 = (r.y + r.h).min(self.img.height());
        for y in r.y..y1 {
            for x in r.x..x1 {
                self.mask.set(y as usize, x as usize, true);
            }
        }
    }

    fn dot(&mut self, x: u32, y: u32) {
        self.stroke(Rect::new(x, y, 1, 1));
    }

    fn border(&mut self, r: Rect, t: u32) {
        self.stroke(Rect::new(r.x, r.y, r.w, t));
        self.stroke(Rect::new(r.x, r.y + r.h - t, r.w, t));
        self.stroke(Rect::new(r.x, r.y, t, r.h));
        self.stroke(Rect::new(r.x + r.w - t, r.y, t, r.h));
    }

    /// Rows of short strokes ("words") inside `area`, one row per `pitch`.
    fn text_block(&mut self, area: Rect, pitch: u32, rng: &mut ChaCha8Rng) {
        if area.w < 6 || area.h < 1 {
            return;
        }
        let mut y = area.y;
        while y < area.y + area.h {
            let line_end = area.x + rng.gen_range(area.w / 2..=area.w);
            let mut x = area.x;
            while x + 3 <= line_end {
                let len = rng.gen_range(3..=12).min(line_end - x);
                self.stroke(Rect::new(x, y, len, 1));
                x += len + rng.gen_range(3..=5);
            }
            y += pitch;
        }
    }

    fn glyph(&mut self, r: Rect, style: u32) {
        let (cx, cy) = (r.x + r.w / 2, r.y + r.h / 2);
        let arm = r.w.min(r.h) / 2;
        match style {
            // plus sign
            0 => {
                self.stroke(Rect::new(cx - arm, cy, 2 * arm + 1, 1));
                self.stroke(Rect::new(cx, cy - arm, 1, 2 * arm + 1));
            }
            // diagonal cross
            1 => {
                for d in 0..=2 * arm {
                    self.dot(cx - arm + d, cy - arm + d);
                    self.dot(cx + arm - d, cy - arm + d);
                }
            }
            // hollow square
            _ => self.border(Rect::new(cx - arm, cy - arm, 2 * arm + 1, 2 * arm + 1), 1),
        }
    }
}

fn draw_element(canvas: &mut Canvas, kind: ElementKind, r: Rect, fill: [u8; 3], pitch: u32, rng: &mut ChaCha8Rng) {
    let t = rng.gen_range(1..=2u32);
    match kind {
        ElementKind::Input => canvas.fill(r, [255, 255, 255]),
        _ => canvas.fill(r, fill),
    }
    canvas.border(r, t);
    let pad = t + 3;
    let inner = |px: u32, py: u32| {
        Rect::new(
            r.x + px,
            r.y + py,
            r.w.saturating_sub(2 * px),
            r.h.saturating_sub(2 * py),
        )
    };
    match kind {
        ElementKind::Button => {
            let lines = if r.h >= 36 { 2 } else { 1 };
            let block_h = (lines - 1) * pitch + 1;
            let area = inner(pad + 4, (r.h - block_h) / 2);
            canvas.text_block(Rect::new(area.x, area.y, area.w, block_h), pitch, rng);
        }
        ElementKind::Input => {
            let area = inner(pad + 2, r.h / 2);
            canvas.text_block(Rect::new(area.x, area.y, area.w / 2, 1), pitch, rng);
            // caret
            let caret_x = r.x + r.w - pad - 6;
            canvas.stroke(Rect::new(caret_x, r.y + pad, 1, r.h - 2 * pad));
        }
        ElementKind::Icon => {
            let g = inner(pad + 2, pad + 2);
            if g.w >= 5 && g.h >= 5 {
                canvas.glyph(g, rng.gen_range(0..3));
            }
        }
        ElementKind::Text => {
            let area = inner(pad, pad);
            canvas.text_block(area, pitch, rng);
        }
        ElementKind::Menu => {
            let item_h = 24;
            let mut y = r.y + t;
            while y + item_h < r.y + r.h - t {
                let item = Rect::new(r.x + pad + 2, y + item_h / 2 - 1, r.w - 2 * pad - 4, 3.min(pitch + 1));
                canvas.text_block(Rect::new(item.x, item.y, item.w * 2 / 3, 1), pitch, rng);
                y += item_h;
                if y + item_h < r.y + r.h - t {
                    canvas.stroke(Rect::new(r.x + t, y, r.w - 2 * t, 1));
                }
            }
        }
    }
}

fn inflate(r: &Rect, gap: u32) -> (i64, i64, i64, i64) {
    let g = i64::from(gap);
    (
        i64::from(r.x) - g,
        i64::from(r.y) - g,
        i64::from(r.x + r.w) + g,
        i64::from(r.y + r.h) + g,
    )
}

fn clashes(candidate: &Rect, placed: &[Rect], gap: u32) -> bool {
    let (ax0, ay0, ax1, ay1) = inflate(candidate, gap);
    placed.iter().any(|p| {
        let (bx0, by0, bx1, by1) = (i64::from(p.x), i64::from(p.y), i64::from(p.x + p.w), i64::from(p.y + p.h));
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    })
}

const MAX_ATTEMPTS: u32 = 4000;
const MARGIN: u32 = 8;

/// Renders a screen and its ground truth. Identical specs give identical
/// bytes.
pub fn generate_screen(spec: &ScreenSpec) -> Result<(PixelImage, GroundTruth), SynthError> {
    spec.validate()?;
    // separate streams: element attributes, placement, and per-element drawing
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut place = ChaCha8Rng::seed_from_u64(spec.seed);
    place.set_stream(1);
    let (w, h) = (spec.width, spec.height);
    let mut canvas = Canvas {
        img: PixelImage::filled(w, h, spec.palette.background),
        mask: InfoMatrix::zeros(h as usize, w as usize),
        ink: spec.palette.ink,
    };
    let centers: Vec<(i64, i64)> = (0..spec.clusters.max(1))
        .map(|_| {
            (
                place.gen_range(i64::from(w) / 8..=i64::from(w) * 7 / 8),
                place.gen_range(i64::from(h) / 8..=i64::from(h) * 7 / 8),
            )
        })
        .collect();
    let gap = spec.profile.gap();
    let mut placed: Vec<Rect> = Vec::with_capacity(spec.element_count);
    let mut elements = Vec::with_capacity(spec.element_count);
    let mut used = HashSet::new();
    for i in 0..spec.element_count {
        let kind = spec.kinds[rng.gen_range(0..spec.kinds.len())];
        let (mut ew, mut eh) = kind.size(&mut rng);
        ew = ew.max(spec.min_element_side);
        eh = eh.max(spec.min_element_side);
        if ew + 2 * MARGIN > w || eh + 2 * MARGIN > h {
            return Err(SynthError::PlacementFailure {
                placed: i,
                requested: spec.element_count,
            });
        }
        let (max_x, max_y) = (i64::from(w - MARGIN - ew), i64::from(h - MARGIN - eh));
        let mut rect = None;
        for attempt in 0..MAX_ATTEMPTS {
            let (x, y) = match spec.profile {
                DensityProfile::Clustered => {
                    let (cx, cy) = centers[i % centers.len()];
                    let spread = 40 + i64::from(attempt) / 8;
                    (
                        cx - i64::from(ew) / 2 + place.gen_range(-spread..=spread),
                        cy - i64::from(eh) / 2 + place.gen_range(-spread..=spread) / 2,
                    )
                }
                _ => (
                    place.gen_range(i64::from(MARGIN)..=max_x),
                    place.gen_range(i64::from(MARGIN)..=max_y),
                ),
            };
            let x = x.clamp(i64::from(MARGIN), max_x) as u32;
            let y = y.clamp(i64::from(MARGIN), max_y) as u32;
            let r = Rect::new(x, y, ew, eh);
            if !clashes(&r, &placed, gap) {
                rect = Some(r);
                break;
            }
        }
        let Some(r) = rect else {
            return Err(SynthError::PlacementFailure {
                placed: i,
                requested: spec.element_count,
            });
        };
        let description = unique_description(&mut rng, &spec.palette, kind, &mut used);
        let color = spec
            .palette
            .widgets
            .iter()
            .find(|c| description.starts_with(&format!("{} ", c.name)))
            .expect("description starts with a palette color")
            .rgb;
        let mut pen = ChaCha8Rng::seed_from_u64(spec.seed);
        pen.set_stream(i as u64 + 2);
        draw_element(&mut canvas, kind, r, color, spec.profile.line_pitch(), &mut pen);
        placed.push(r);
        elements.push(Element {
            id: i as u32 + 1,
            bbox: BBox::raw(f64::from(r.x), f64::from(r.y), f64::from(r.x + r.w), f64::from(r.y + r.h)),
            kind,
            description,
        });
    }
    Ok((
        canvas.img,
        GroundTruth {
            width: w,
            height: h,
            elements,
            info_mask: canvas.mask,
        },
    ))
}

/// "{color} {label} {kind}", unique within the screen.
fn unique_description(
    rng: &mut ChaCha8Rng,
    palette: &Palette,
    kind: ElementKind,
    used: &mut HashSet<String>,
) -> String {
    let n = palette.widgets.len() * LABELS.len();
    let start = rng.gen_range(0..n);
    // walks every combination once from a random start
    for k in 0..n {
        let idx = (start + k) % n;
        let color = &palette.widgets[idx % palette.widgets.len()].name;
        let label = LABELS[idx / palette.widgets.len()];
        let d = format!("{color} {label} {}", kind.name());
        if used.insert(d.clone()) {
            return d;
        }
    }
    // every color/label pair is taken for this kind; number the duplicate
    let mut k = 2;
    loop {
        let d = format!("{} {} {} {k}", palette.widgets[0].name, LABELS[0], kind.name());
        if used.insert(d.clone()) {
            return d;
        }
        k += 1;
    }
}

/// Named screens used by tests, benchmarks and the CLI.
pub mod fixtures {
    use super::{DensityProfile, ElementKind, ScreenSpec};

    /// 1920×1080, five compact toolbar clusters of three icons each.
    pub fn clustered_hd(seed: u64) -> ScreenSpec {
        ScreenSpec {
            clusters: 5,
            kinds: vec![ElementKind::Icon],
            ..ScreenSpec::new(1920, 1080, seed, 15, DensityProfile::Clustered)
        }
    }

    /// 1920×1080 packed with widgets of every kind.
    pub fn dense_hd() -> ScreenSpec {
        ScreenSpec::new(1920, 1080, 7, 70, DensityProfile::Dense)
    }

    /// A screen of `w`×`h` whose widget count scales with its area.
    pub fn scaled(w: u32, h: u32, seed: u64) -> ScreenSpec {
        let count = ((u64::from(w) * u64::from(h)) / 40_000).max(4) as usize;
        ScreenSpec::new(w, h, seed, count, DensityProfile::Sparse)
    }
}
