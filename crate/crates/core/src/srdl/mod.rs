//! Self-refining dual learning: alternate grounding and referring until the
//! grounded position is stable, and keep the stable pairs as annotations.
//!
//! Agents are pluggable through [`Agent`]; they can live in-process (the
//! synthetic oracles) or behind the JSON-lines protocol in [`wire`].

mod bbox;
mod mining;
pub mod wire;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{detect_information, EdgeConfig};
use crate::imaging::PixelImage;
use crate::spectral::{score_matrix, select_visual_hard_cases, EntropyReport};

pub use bbox::{iou, BBox};
pub use mining::{
    mine_functional, Augmenter, HistoryRecord, MinedCase, PerformanceHistory, TemplateAugmenter,
    DEFAULT_FAILURE_IOU,
};

#[derive(Debug, Error)]
pub enum SrdlError {
    #[error("degenerate box {0:?}")]
    DegenerateBox([f64; 4]),
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("agent protocol violation: {0}")]
    Protocol(String),
    #[error("augmenter failed on {seed:?}: {reason}")]
    Augmenter { seed: String, reason: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Edge(#[from] crate::edge::EdgeError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record: {0}")]
    Record(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("no element matches description {0:?}")]
    UnknownDescription(String),
    #[error("no ground truth for screen {0:?}")]
    UnknownScreen(String),
    #[error("agent returned an invalid box: {0}")]
    InvalidBox(String),
    #[error("agent error: {0}")]
    Failed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

/// A screenshot handed to an agent. `path` is required by out-of-process
/// agents, which receive the image by file name.
#[derive(Debug, Clone)]
pub struct Screen {
    pub id: String,
    pub path: Option<PathBuf>,
    pub image: PixelImage,
}

/// Referring and grounding behaviour required from any agent.
///
/// Both `ground` and `refer` must be deterministic for a fixed agent state;
/// implementations may keep mutable state between calls.
pub trait Agent {
    /// Basic descriptions of every element on the screen.
    fn enumerate(&mut self, screen: &Screen) -> Result<Vec<String>, AgentError>;
    /// Locates the element described by `description`.
    fn ground(&mut self, screen: &Screen, description: &str) -> Result<BBox, AgentError>;
    /// Describes the element at `bbox`.
    fn refer(&mut self, screen: &Screen, bbox: &BBox) -> Result<String, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn enumerate(&mut self, screen: &Screen) -> Result<Vec<String>, AgentError> {
        (**self).enumerate(screen)
    }

    fn ground(&mut self, screen: &Screen, description: &str) -> Result<BBox, AgentError> {
        (**self).ground(screen, description)
    }

    fn refer(&mut self, screen: &Screen, bbox: &BBox) -> Result<String, AgentError> {
        (**self).refer(screen, bbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionKind {
    Basic,
    Referred,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "from")]
pub enum Origin {
    Enumeration,
    Referring { iteration: u32 },
    Augmenter { seed: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDescription {
    pub text: String,
    pub kind: DescriptionKind,
    pub origin: Origin,
}

impl ElementDescription {
    pub fn basic(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            kind: DescriptionKind::Basic,
            origin: Origin::Enumeration,
        }
    }

    pub fn augmented(text: impl Into<String>, seed: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            kind: DescriptionKind::Augmented,
            origin: Origin::Augmenter { seed: seed.into() },
        }
    }
}

/// Lowercase with single spaces; the deduplication key for descriptions.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualLoopConfig {
    /// IoU a refined position must exceed to be accepted.
    pub tau: f64,
    /// Refinement budget after the initial ground/refer pass.
    pub max_iters: u32,
}

impl Default for DualLoopConfig {
    fn default() -> Self {
        Self {
            tau: 0.7,
            max_iters: 5,
        }
    }
}

impl DualLoopConfig {
    pub fn validate(&self) -> Result<(), SrdlError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SrdlError::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.max_iters < 1 {
            return Err(SrdlError::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which mining channel produced an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Baseline,
    Visual,
    Functional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub description: ElementDescription,
    pub bbox: BBox,
    /// Loop counter at exit: 1 for an immediately stable element.
    pub iterations_used: u32,
    pub final_iou: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    /// The refinement budget ran out without the position stabilizing.
    MaxIterations { refinements: u32, last_iou: f64 },
    AgentFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub image_id: String,
    pub description: ElementDescription,
    pub reason: RejectReason,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub baseline: usize,
    pub visual: usize,
    pub functional: usize,
}

impl SourceCounts {
    fn bump(&mut self, source: Source) {
        match source {
            Source::Baseline => self.baseline += 1,
            Source::Visual => self.visual += 1,
            Source::Functional => self.functional += 1,
        }
    }
}

/// Persisted form of one accepted sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub image: String,
    pub description: String,
    pub bbox: BBox,
    pub iters: u32,
    pub iou: f64,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfAnnotationSet {
    pub samples: Vec<Sample>,
    pub rejected: Vec<Rejection>,
}

impl SelfAnnotationSet {
    pub fn extend(&mut self, other: SelfAnnotationSet) {
        self.samples.extend(other.samples);
        self.rejected.extend(other.rejected);
    }

    /// Accepted samples per channel.
    pub fn counts(&self) -> SourceCounts {
        let mut c = SourceCounts::default();
        self.samples.iter().for_each(|s| c.bump(s.source));
        c
    }

    pub fn acceptance_rate(&self) -> f64 {
        let total = self.samples.len() + self.rejected.len();
        if total == 0 {
            0.0
        } else {
            self.samples.len() as f64 / total as f64
        }
    }

    pub fn lines(&self) -> Vec<AnnotationLine> {
        self.samples
            .iter()
            .map(|s| AnnotationLine {
                image: s.image_id.clone(),
                description: s.description.text.clone(),
                bbox: s.bbox,
                iters: s.iterations_used,
                iou: s.final_iou,
                source: s.source,
            })
            .collect()
    }

    /// One JSON object per accepted sample, newline terminated.
    pub fn to_jsonl(&self) -> String {
        self.lines()
            .iter()
            .map(|l| serde_json::to_string(l).expect("annotation is serializable") + "\n")
            .collect()
    }
}

/// Result of refining a single element.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accepted { bbox: BBox, iterations_used: u32, final_iou: f64 },
    Rejected(RejectReason),
}

fn checked_iou(a: &BBox, b: &BBox) -> Result<f64, AgentError> {
    iou(a, b).map_err(|e| AgentError::InvalidBox(e.to_string()))
}

/// Runs the ground/refer loop for one description.
///
/// `G(D')` is evaluated once per iteration and reused for both the
/// stability test and the position update.
pub fn refine_element<A: Agent + ?Sized>(
    agent: &mut A,
    screen: &Screen,
    description: &str,
    cfg: &DualLoopConfig,
) -> Result<Outcome, AgentError> {
    let mut p = agent.ground(screen, description)?;
    let mut referred = agent.refer(screen, &p)?;
    let mut g = agent.ground(screen, &referred)?;
    let mut sim = checked_iou(&p, &g)?;
    let mut n = 1u32;
    while sim <= cfg.tau && n <= cfg.max_iters {
        p = g;
        referred = agent.refer(screen, &p)?;
        g = agent.ground(screen, &referred)?;
        sim = checked_iou(&p, &g)?;
        n += 1;
    }
    log::trace!("{}: {description:?} settled at n={n} iou={sim:.4}", screen.id);
    Ok(if sim > cfg.tau {
        Outcome::Accepted {
            bbox: p,
            iterations_used: n,
            final_iou: sim,
        }
    } else {
        Outcome::Rejected(RejectReason::MaxIterations {
            refinements: n - 1,
            last_iou: sim,
        })
    })
}

fn record<A: Agent + ?Sized>(
    agent: &mut A,
    screen: &Screen,
    description: ElementDescription,
    source: Source,
    cfg: &DualLoopConfig,
    out: &mut SelfAnnotationSet,
) -> Result<(), SrdlError> {
    let image_id = screen.id.clone();
    match refine_element(agent, screen, &description.text, cfg) {
        Ok(Outcome::Accepted {
            bbox,
            iterations_used,
            final_iou,
        }) => out.samples.push(Sample {
            image_id,
            description,
            bbox,
            iterations_used,
            final_iou,
            source,
        }),
        Ok(Outcome::Rejected(reason)) => out.rejected.push(Rejection {
            image_id,
            description,
            reason,
            source,
        }),
        Err(AgentError::Protocol(msg)) => return Err(SrdlError::Protocol(msg)),
        Err(e) => {
            log::warn!("{image_id}: {:?} failed: {e}", description.text);
            out.rejected.push(Rejection {
                image_id,
                description,
                reason: RejectReason::AgentFailure(e.to_string()),
                source,
            })
        }
    }
    Ok(())
}

/// Enumerates a screen's elements and refines each one.
pub fn dual_loop<A: Agent + ?Sized>(
    agent: &mut A,
    screen: &Screen,
    cfg: &DualLoopConfig,
) -> Result<SelfAnnotationSet, SrdlError> {
    cfg.validate()?;
    let mut out = SelfAnnotationSet::default();
    for text in enumerate(agent, screen)? {
        record(agent, screen, ElementDescription::basic(text), Source::Baseline, cfg, &mut out)?;
    }
    Ok(out)
}

fn enumerate<A: Agent + ?Sized>(agent: &mut A, screen: &Screen) -> Result<Vec<String>, SrdlError> {
    match agent.enumerate(screen) {
        Ok(list) => Ok(list),
        Err(AgentError::Protocol(msg)) => Err(SrdlError::Protocol(msg)),
        Err(e) => {
            log::warn!("{}: enumeration failed: {e}", screen.id);
            Ok(Vec::new())
        }
    }
}

/// Elements to refine, deduplicated by (screen, normalized description).
#[derive(Default)]
struct WorkQueue<'a> {
    seen: HashSet<(String, String)>,
    items: Vec<(&'a Screen, ElementDescription, Source)>,
}

impl<'a> WorkQueue<'a> {
    fn push(&mut self, screen: &'a Screen, d: ElementDescription, source: Source) {
        if self.seen.insert((screen.id.clone(), normalize_text(&d.text))) {
            self.items.push((screen, d, source));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrdlConfig {
    /// Entropy threshold for visual hard cases, in nats.
    pub h_min: f64,
    pub loop_cfg: DualLoopConfig,
    /// History records below this IoU count as failures.
    pub failure_iou: f64,
    /// Augmented variants per failed description.
    pub n_variants: usize,
    /// Also annotate screens that are not visual hard cases.
    pub include_baseline: bool,
}

impl Default for SrdlConfig {
    fn default() -> Self {
        Self {
            h_min: crate::spectral::DEFAULT_H_MIN,
            loop_cfg: DualLoopConfig::default(),
            failure_iou: DEFAULT_FAILURE_IOU,
            n_variants: 3,
            include_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrdlRun {
    pub annotations: SelfAnnotationSet,
    pub entropy: Vec<(String, EntropyReport)>,
    pub visual_hard: Vec<String>,
    pub mined: Vec<MinedCase>,
}

/// Entropy-ranked visual hard cases plus history-mined functional cases,
/// each refined through the dual loop.
///
/// Visual hard screens come first (highest entropy first), then mined
/// descriptions, then the remaining screens. A description already queued
/// for the same screen is skipped.
pub fn run_srdl<A: Agent + ?Sized>(
    corpus: &[Screen],
    agent: &mut A,
    augmenter: &mut dyn Augmenter,
    history: &PerformanceHistory,
    ecfg: &EdgeConfig,
    cfg: &SrdlConfig,
) -> Result<SrdlRun, SrdlError> {
    if corpus.is_empty() {
        return Err(SrdlError::EmptyCorpus);
    }
    cfg.loop_cfg.validate()?;
    let mut entropy = Vec::with_capacity(corpus.len());
    for screen in corpus {
        let m = detect_information(&screen.image, ecfg)?;
        entropy.push((screen.id.clone(), score_matrix(&m, cfg.h_min)));
    }
    let visual_hard = select_visual_hard_cases(&entropy, cfg.h_min);
    let mined = mine_functional(history, augmenter, cfg.n_variants, cfg.failure_iou);

    let by_id = |id: &str| corpus.iter().find(|s| s.id == id);
    let mut queue = WorkQueue::default();
    let mut enumerated = Vec::new();
    for id in &visual_hard {
        let screen = by_id(id).expect("ids come from the corpus");
        enumerated.push(id.clone());
        for text in enumerate(agent, screen)? {
            queue.push(screen, ElementDescription::basic(text), Source::Visual);
        }
    }
    for case in &mined {
        match by_id(&case.image_id) {
            Some(screen) => queue.push(screen, case.description.clone(), Source::Functional),
            None => log::warn!("mined case for unknown screen {:?}", case.image_id),
        }
    }
    if cfg.include_baseline {
        for screen in corpus.iter().filter(|s| !enumerated.contains(&s.id)) {
            for text in enumerate(agent, screen)? {
                queue.push(screen, ElementDescription::basic(text), Source::Baseline);
            }
        }
    }

    let mut annotations = SelfAnnotationSet::default();
    for (screen, d, source) in queue.items {
        record(agent, screen, d, source, &cfg.loop_cfg, &mut annotations)?;
    }
    Ok(SrdlRun {
        annotations,
        entropy,
        visual_hard,
        mined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Agent whose answers come from fixed tables.
    struct Scripted {
        boxes: Vec<(String, BBox)>,
        grounds: usize,
    }

    impl Agent for Scripted {
        fn enumerate(&mut self, _: &Screen) -> Result<Vec<String>, AgentError> {
            Ok(self.boxes.iter().map(|(d, _)| d.clone()).collect())
        }

        fn ground(&mut self, _: &Screen, d: &str) -> Result<BBox, AgentError> {
            self.grounds += 1;
            self.boxes
                .iter()
                .find(|(t, _)| t == d)
                .map(|(_, b)| *b)
                .ok_or_else(|| AgentError::UnknownDescription(d.into()))
        }

        fn refer(&mut self, _: &Screen, b: &BBox) -> Result<String, AgentError> {
            let best = self
                .boxes
                .iter()
                .max_by(|x, y| iou(&x.1, b).unwrap().total_cmp(&iou(&y.1, b).unwrap()))
                .unwrap();
            Ok(best.0.clone())
        }
    }

    fn screen() -> Screen {
        Screen {
            id: "s".into(),
            path: None,
            image: PixelImage::filled(64, 64, [255, 255, 255]),
        }
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn stable_agent_accepts_after_one_pass() {
        let mut agent = Scripted {
            boxes: vec![("ok".into(), bx(0.0, 0.0, 10.0, 10.0)), ("b".into(), bx(20.0, 20.0, 30.0, 30.0))],
            grounds: 0,
        };
        let set = dual_loop(&mut agent, &screen(), &DualLoopConfig::default()).unwrap();
        assert_eq!(set.samples.len(), 2);
        assert!(set.samples.iter().all(|s| s.iterations_used == 1 && s.final_iou == 1.0));
        // two grounding calls per element: the initial one and G(D')
        assert_eq!(agent.grounds, 4);
    }

    #[test]
    fn unknown_description_is_rejected_not_fatal() {
        struct Broken;
        impl Agent for Broken {
            fn enumerate(&mut self, _: &Screen) -> Result<Vec<String>, AgentError> {
                Ok(vec!["ghost".into()])
            }
            fn ground(&mut self, _: &Screen, d: &str) -> Result<BBox, AgentError> {
                Err(AgentError::UnknownDescription(d.into()))
            }
            fn refer(&mut self, _: &Screen, _: &BBox) -> Result<String, AgentError> {
                unreachable!()
            }
        }
        let set = dual_loop(&mut Broken, &screen(), &DualLoopConfig::default()).unwrap();
        assert!(set.samples.is_empty());
        assert!(matches!(set.rejected[0].reason, RejectReason::AgentFailure(_)));
    }

    #[test]
    fn protocol_errors_abort() {
        struct Garbled;
        impl Agent for Garbled {
            fn enumerate(&mut self, _: &Screen) -> Result<Vec<String>, AgentError> {
                Err(AgentError::Protocol("not json".into()))
            }
            fn ground(&mut self, _: &Screen, _: &str) -> Result<BBox, AgentError> {
                unreachable!()
            }
            fn refer(&mut self, _: &Screen, _: &BBox) -> Result<String, AgentError> {
                unreachable!()
            }
        }
        assert!(matches!(
            dual_loop(&mut Garbled, &screen(), &DualLoopConfig::default()),
            Err(SrdlError::Protocol(_))
        ));
    }

    #[test]
    fn config_validation() {
        for cfg in [
            DualLoopConfig { tau: 0.0, max_iters: 5 },
            DualLoopConfig { tau: 1.5, max_iters: 5 },
            DualLoopConfig { tau: 0.7, max_iters: 0 },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(DualLoopConfig { tau: 1.0, max_iters: 1 }.validate().is_ok());
    }

    #[test]
    fn normalization_folds_case_and_spacing() {
        assert_eq!(normalize_text("  The  Save\tButton "), "the save button");
    }

    #[test]
    fn jsonl_shape() {
        let set = SelfAnnotationSet {
            samples: vec![Sample {
                image_id: "a".into(),
                description: ElementDescription::basic("red ok button"),
                bbox: bx(1.0, 2.0, 3.0, 4.0),
                iterations_used: 1,
                final_iou: 1.0,
                source: Source::Visual,
            }],
            rejected: vec![],
        };
        assert_eq!(
            set.to_jsonl(),
            "{\"image\":\"a\",\"description\":\"red ok button\",\"bbox\":[1.0,2.0,3.0,4.0],\"iters\":1,\"iou\":1.0,\"source\":\"visual\"}\n"
        );
    }
}
