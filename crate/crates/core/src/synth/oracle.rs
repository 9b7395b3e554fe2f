//! Agents that answer from synthetic ground truth, optionally perturbed.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Element, GroundTruth};
use crate::srdl::{iou, normalize_text, Agent, AgentError, BBox, Screen};

#[derive(Debug, Clone)]
pub enum Noise {
    None,
    /// Every edge of a grounded box moves by uniform noise in `[-px, px]`.
    Jitter { px: f64, rng: Box<ChaCha8Rng> },
    /// Grounded boxes shift right by a cumulative offset growing
    /// `px_per_call` on every grounding call.
    Drift { px_per_call: f64, offset: f64 },
}

impl Noise {
    pub fn jitter(px: f64, seed: u64) -> Self {
        Self::Jitter {
            px: px.max(0.0),
            rng: Box::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn drift(px_per_call: f64) -> Self {
        Self::Drift {
            px_per_call: px_per_call.max(0.0),
            offset: 0.0,
        }
    }
}

/// Oracle agent over one or more ground-truth screens.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    truths: BTreeMap<String, GroundTruth>,
    /// Used for screens not found in `truths`.
    fallback: Option<GroundTruth>,
    noise: Noise,
}

pub fn perfect_agent(gt: GroundTruth) -> OracleAgent {
    OracleAgent {
        truths: BTreeMap::new(),
        fallback: Some(gt),
        noise: Noise::None,
    }
}

pub fn noisy_agent(gt: GroundTruth, jitter_px: f64, seed: u64) -> OracleAgent {
    perfect_agent(gt).with_noise(Noise::jitter(jitter_px, seed))
}

pub fn drifting_agent(gt: GroundTruth, drift_px_per_call: f64) -> OracleAgent {
    perfect_agent(gt).with_noise(Noise::drift(drift_px_per_call))
}

fn tokens(text: &str) -> HashSet<String> {
    normalize_text(text).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

impl OracleAgent {
    /// Oracle keyed by screen id.
    pub fn for_screens(truths: BTreeMap<String, GroundTruth>) -> Self {
        Self {
            truths,
            fallback: None,
            noise: Noise::None,
        }
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    fn truth(&self, screen: &Screen) -> Result<&GroundTruth, AgentError> {
        self.truths
            .get(&screen.id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| AgentError::UnknownScreen(screen.id.clone()))
    }

    /// Exact description match, else the element sharing the most tokens
    /// with the query (ties by Jaccard similarity, then lowest id).
    pub fn resolve<'a>(gt: &'a GroundTruth, description: &str) -> Result<&'a Element, AgentError> {
        let key = normalize_text(description);
        if let Some(e) = gt.elements.iter().find(|e| normalize_text(&e.description) == key) {
            return Ok(e);
        }
        let query = tokens(description);
        let mut best: Option<(&Element, usize, f64)> = None;
        for e in &gt.elements {
            let t = tokens(&e.description);
            let shared = query.intersection(&t).count();
            if shared == 0 {
                continue;
            }
            let jaccard = shared as f64 / query.union(&t).count() as f64;
            let better = match best {
                None => true,
                Some((_, s, j)) => shared > s || (shared == s && jaccard > j),
            };
            if better {
                best = Some((e, shared, jaccard));
            }
        }
        best.map(|(e, _, _)| e)
            .ok_or_else(|| AgentError::UnknownDescription(description.into()))
    }
}

impl Agent for OracleAgent {
    fn enumerate(&mut self, screen: &Screen) -> Result<Vec<String>, AgentError> {
        Ok(self.truth(screen)?.elements.iter().map(|e| e.description.clone()).collect())
    }

    fn ground(&mut self, screen: &Screen, description: &str) -> Result<BBox, AgentError> {
        let b = Self::resolve(self.truth(screen)?, description)?.bbox;
        Ok(match &mut self.noise {
            Noise::None => b,
            Noise::Jitter { px, rng } => {
                if *px == 0.0 {
                    b
                } else {
                    let j = *px;
                    let mut d = || rng.gen_range(-j..=j);
                    BBox::raw(b.x1 + d(), b.y1 + d(), b.x2 + d(), b.y2 + d())
                }
            }
            Noise::Drift { px_per_call, offset } => {
                *offset += *px_per_call;
                b.translate(*offset, 0.0)
            }
        })
    }

    /// Element with the highest IoU against `bbox`; ties (including no
    /// overlap at all) go to the nearest center, then the lowest id.
    fn refer(&mut self, screen: &Screen, bbox: &BBox) -> Result<String, AgentError> {
        let gt = self.truth(screen)?;
        let (qx, qy) = bbox.center();
        let mut best: Option<(&Element, f64, f64)> = None;
        for e in &gt.elements {
            let v = iou(&e.bbox, bbox).map_err(|err| AgentError::InvalidBox(err.to_string()))?;
            let (ex, ey) = e.bbox.center();
            let dist = (ex - qx).hypot(ey - qy);
            let better = match best {
                None => true,
                Some((_, bv, bd)) => v > bv || (v == bv && dist < bd),
            };
            if better {
                best = Some((e, v, dist));
            }
        }
        best.map(|(e, _, _)| e.description.clone())
            .ok_or_else(|| AgentError::Failed(format!("screen {:?} has no elements", screen.id)))
    }
}
