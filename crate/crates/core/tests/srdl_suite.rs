//! Dual-loop convergence and hard-case mining against synthetic oracles.

use infocrop::edge::EdgeConfig;
use infocrop::imaging::PixelImage;
use infocrop::srdl::{
    dual_loop, iou, refine_element, run_srdl, Agent, AgentError, BBox, DualLoopConfig, HistoryRecord, Outcome,
    PerformanceHistory, RejectReason, Screen, Source, SrdlConfig, TemplateAugmenter,
};
use infocrop::synth::{
    drifting_agent, generate_screen, noisy_agent, perfect_agent, DensityProfile, GroundTruth, OracleAgent, ScreenSpec,
};

fn synth_screen(id: &str, spec: &ScreenSpec) -> (Screen, GroundTruth) {
    let (image, gt) = generate_screen(spec).unwrap();
    (
        Screen {
            id: id.into(),
            path: None,
            image,
        },
        gt,
    )
}

fn blank_screen(id: &str) -> Screen {
    Screen {
        id: id.into(),
        path: None,
        image: PixelImage::filled(320, 240, [248, 248, 248]),
    }
}

fn large_elements(seed: u64) -> ScreenSpec {
    ScreenSpec {
        min_element_side: 100,
        ..ScreenSpec::new(1280, 720, seed, 6, DensityProfile::Sparse)
    }
}

#[test]
fn perfect_agent_accepts_everything_at_once() {
    let (screen, gt) = synth_screen("s", &ScreenSpec::new(1280, 720, 4, 5, DensityProfile::Clustered));
    let set = dual_loop(&mut perfect_agent(gt.clone()), &screen, &DualLoopConfig::default()).unwrap();
    assert!(set.rejected.is_empty());
    assert_eq!(set.samples.len(), 5);
    for (s, e) in set.samples.iter().zip(&gt.elements) {
        assert_eq!(s.description.text, e.description);
        assert_eq!(s.bbox, e.bbox);
        assert_eq!(s.iterations_used, 1);
        assert_eq!(s.final_iou, 1.0);
    }
}

#[test]
fn drifting_agent_never_converges() {
    let cfg = DualLoopConfig::default();
    let (screen, gt) = synth_screen("s", &large_elements(8));
    for e in &gt.elements {
        let mut agent = drifting_agent(gt.clone(), 0.5 * e.bbox.width());
        match refine_element(&mut agent, &screen, &e.description, &cfg).unwrap() {
            Outcome::Rejected(RejectReason::MaxIterations { refinements, last_iou }) => {
                assert_eq!(refinements, cfg.max_iters);
                assert!(last_iou <= cfg.tau);
            }
            other => panic!("{}: {other:?}", e.description),
        }
    }
}

#[test]
fn jittered_agent_on_large_elements_always_converges() {
    let cfg = DualLoopConfig::default();
    let mut worst = 1.0f64;
    for trial in 0..200u64 {
        let (screen, gt) = synth_screen("s", &large_elements(trial % 10));
        let mut agent = noisy_agent(gt.clone(), 2.0, trial);
        let set = dual_loop(&mut agent, &screen, &cfg).unwrap();
        assert!(set.rejected.is_empty(), "trial {trial}: {:?}", set.rejected);
        assert_eq!(set.samples.len(), gt.elements.len());
        worst = set.samples.iter().map(|s| s.final_iou).fold(worst, f64::min);
    }
    // no single draw can fall below the analytic worst case
    assert!(worst >= (96.0f64 / 104.0).powi(2) - 1e-12, "worst {worst}");
}

#[test]
fn raising_tau_never_accepts_more() {
    let (screen, gt) = synth_screen("s", &ScreenSpec::new(1280, 720, 5, 8, DensityProfile::Sparse));
    let mut prev = usize::MAX;
    for tau in [0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99] {
        let cfg = DualLoopConfig { tau, max_iters: 5 };
        let set = dual_loop(&mut noisy_agent(gt.clone(), 4.0, 77), &screen, &cfg).unwrap();
        assert!(set.samples.len() <= prev, "tau {tau}");
        prev = set.samples.len();
    }
}

/// Remembers the last box returned by `ground`.
struct Recording {
    inner: OracleAgent,
    last_ground: Option<BBox>,
}

impl Agent for Recording {
    fn enumerate(&mut self, screen: &Screen) -> Result<Vec<String>, AgentError> {
        self.inner.enumerate(screen)
    }

    fn ground(&mut self, screen: &Screen, description: &str) -> Result<BBox, AgentError> {
        let b = self.inner.ground(screen, description)?;
        self.last_ground = Some(b);
        Ok(b)
    }

    fn refer(&mut self, screen: &Screen, bbox: &BBox) -> Result<String, AgentError> {
        self.inner.refer(screen, bbox)
    }
}

#[test]
fn accepted_samples_agree_with_the_final_grounding() {
    let cfg = DualLoopConfig::default();
    let (screen, gt) = synth_screen("s", &ScreenSpec::new(1280, 720, 6, 10, DensityProfile::Dense));
    for seed in 0..20 {
        let mut agent = Recording {
            inner: noisy_agent(gt.clone(), 6.0, seed),
            last_ground: None,
        };
        for e in &gt.elements {
            if let Outcome::Accepted { bbox, final_iou, .. } =
                refine_element(&mut agent, &screen, &e.description, &cfg).unwrap()
            {
                let last = agent.last_ground.unwrap();
                assert_eq!(iou(&bbox, &last).unwrap(), final_iou);
                assert!(final_iou > cfg.tau);
            }
        }
    }
}

#[test]
fn blank_corpus_yields_nothing() {
    let corpus = vec![blank_screen("a"), blank_screen("b")];
    let mut agent = perfect_agent(GroundTruth {
        width: 320,
        height: 240,
        elements: Vec::new(),
        info_mask: infocrop::edge::InfoMatrix::zeros(240, 320),
    });
    let run = run_srdl(
        &corpus,
        &mut agent,
        &mut TemplateAugmenter::new(0),
        &PerformanceHistory::default(),
        &EdgeConfig::default(),
        &SrdlConfig::default(),
    )
    .unwrap();
    assert!(run.visual_hard.is_empty());
    assert!(run.annotations.samples.is_empty() && run.annotations.rejected.is_empty());
    assert!(run.entropy.iter().all(|(_, r)| r.degenerate && r.entropy == 0.0));
}

fn failure(image: &str, description: &str) -> HistoryRecord {
    HistoryRecord {
        image_id: image.into(),
        description: description.into(),
        predicted: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
        truth: None,
        iou: 0.05,
        success: false,
    }
}

#[test]
fn both_mining_channels_contribute() {
    let (busy, gt) = synth_screen("busy", &ScreenSpec::new(1280, 720, 12, 8, DensityProfile::Dense));
    let corpus = vec![busy, blank_screen("blank")];
    let mut history = PerformanceHistory::default();
    history.push(failure("busy", &gt.elements[0].description)).unwrap();
    history.push(failure("busy", &gt.elements[3].description)).unwrap();
    let cfg = SrdlConfig::default();
    let truths = [("busy".to_string(), gt.clone()), ("blank".to_string(), GroundTruth {
        width: 320,
        height: 240,
        elements: Vec::new(),
        info_mask: infocrop::edge::InfoMatrix::zeros(240, 320),
    })];
    let run_once = || {
        let mut agent = OracleAgent::for_screens(truths.iter().cloned().collect());
        run_srdl(
            &corpus,
            &mut agent,
            &mut TemplateAugmenter::new(1),
            &history,
            &EdgeConfig::default(),
            &cfg,
        )
        .unwrap()
    };
    let run = run_once();
    assert_eq!(run.visual_hard, vec!["busy".to_string()]);
    assert_eq!(run.mined.len(), 2 * cfg.n_variants);
    let counts = run.annotations.counts();
    assert_eq!(counts.visual, gt.elements.len());
    assert_eq!(counts.functional, 2 * cfg.n_variants);
    assert_eq!(counts.baseline, 0);
    for s in run.annotations.samples.iter().filter(|s| s.source == Source::Functional) {
        let seed = match &s.description.origin {
            infocrop::srdl::Origin::Augmenter { seed } => seed,
            other => panic!("functional sample without provenance: {other:?}"),
        };
        assert_eq!(s.bbox, gt.element(seed).unwrap().bbox);
    }
    assert_eq!(run, run_once());
}
