//! Functional hard-case mining from past grounding performance.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, ElementDescription, SrdlError};

/// Records below this IoU count as failures even when marked successful.
pub const DEFAULT_FAILURE_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub image_id: String,
    pub description: String,
    pub predicted: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<BBox>,
    pub iou: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceHistory {
    pub records: Vec<HistoryRecord>,
}

impl PerformanceHistory {
    pub fn push(&mut self, record: HistoryRecord) -> Result<(), SrdlError> {
        if !(0.0..=1.0).contains(&record.iou) {
            return Err(SrdlError::Record(format!("iou {} outside [0, 1]", record.iou)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, SrdlError> {
        let mut history = Self::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|source| SrdlError::Io {
                context: "reading history".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line)
                .map_err(|e| SrdlError::Record(format!("history line {}: {e}", i + 1)))?;
            history.push(record)?;
        }
        Ok(history)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Distinct (image, description) pairs that failed, in first-seen order.
    pub fn failures(&self, iou_floor: f64) -> Vec<(&str, &str)> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| !r.success || r.iou < iou_floor)
            .map(|r| (r.image_id.as_str(), r.description.as_str()))
            .filter(|key| seen.insert(*key))
            .collect()
    }
}

/// Rewrites a description into alternative phrasings.
pub trait Augmenter {
    /// Exactly `n` variants of `seed`.
    fn augment(&mut self, seed: &str, n: usize) -> Result<Vec<String>, SrdlError>;
}

const LEADS: [&str; 6] = ["", "tap", "press", "select", "click", "open"];
const FRAMES: [&str; 7] = [
    "{} ",
    "the {} ",
    "{} here",
    "the {} shown",
    "{} on screen",
    "that {} please",
    "find the {} ",
];

/// Wraps the seed in seeded phrase templates. The seed text is kept whole, so
/// its head noun and every other token survive.
#[derive(Debug, Clone)]
pub struct TemplateAugmenter {
    seed: u64,
}

impl TemplateAugmenter {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Number of distinct variants available per seed text.
    pub fn capacity() -> usize {
        LEADS.len() * FRAMES.len() - 1
    }
}

/// 64-bit FNV-1a.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Augmenter for TemplateAugmenter {
    fn augment(&mut self, seed: &str, n: usize) -> Result<Vec<String>, SrdlError> {
        let core = seed.split_whitespace().collect::<Vec<_>>().join(" ");
        if core.is_empty() {
            return Err(SrdlError::Augmenter {
                seed: seed.into(),
                reason: "empty description".into(),
            });
        }
        if n > Self::capacity() {
            return Err(SrdlError::Augmenter {
                seed: seed.into(),
                reason: format!("at most {} variants, asked for {n}", Self::capacity()),
            });
        }
        let mut combos: Vec<(usize, usize)> = (0..LEADS.len())
            .flat_map(|l| (0..FRAMES.len()).map(move |f| (l, f)))
            .filter(|&c| c != (0, 0))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&core));
        combos.shuffle(&mut rng);
        Ok(combos
            .into_iter()
            .take(n)
            .map(|(l, f)| {
                let body = FRAMES[f].replace("{}", &core);
                format!("{} {}", LEADS[l], body).split_whitespace().collect::<Vec<_>>().join(" ")
            })
            .collect())
    }
}

/// One augmented grounding target tied to the screen it failed on.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedCase {
    pub image_id: String,
    pub description: ElementDescription,
}

/// Augmented variants of every description that failed in `history`.
///
/// A seed the augmenter cannot handle is logged and skipped.
pub fn mine_functional(
    history: &PerformanceHistory,
    augmenter: &mut dyn Augmenter,
    n_variants: usize,
    iou_floor: f64,
) -> Vec<MinedCase> {
    let mut out = Vec::new();
    if n_variants == 0 {
        return out;
    }
    for (image_id, seed) in history.failures(iou_floor) {
        match augmenter.augment(seed, n_variants) {
            Ok(variants) if variants.len() == n_variants => {
                out.extend(variants.into_iter().map(|text| MinedCase {
                    image_id: image_id.to_string(),
                    description: ElementDescription::augmented(text, seed),
                }));
            }
            Ok(variants) => log::warn!(
                "augmenter returned {} variants for {seed:?}, expected {n_variants}",
                variants.len()
            ),
            Err(e) => log::warn!("skipping {seed:?}: {e}"),
        }
    }
    out
}
