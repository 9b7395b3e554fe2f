//! Cross-module checks on synthetic screens: entropy ranking, token budgets
//! and the agent wire server.

use std::io::Cursor;

use infocrop::budget::{modeled_costs, token_count_full, token_count_isc, TokenBudgetModel};
use infocrop::crop::{isc_pipeline, IscConfig};
use infocrop::edge::{detect_information, EdgeConfig};
use infocrop::imaging::PixelImage;
use infocrop::spectral::{score_matrix, select_visual_hard_cases, EntropyReport};
use infocrop::srdl::wire::{serve, Response};
use infocrop::synth::{fixtures, generate_screen, perfect_agent, DensityProfile, ScreenSpec};

fn report(img: &PixelImage, h_min: f64) -> EntropyReport {
    score_matrix(&detect_information(img, &EdgeConfig::default()).unwrap(), h_min)
}

#[test]
fn screen_entropy_is_bounded_and_ranked() {
    let blank = PixelImage::filled(1280, 720, [248, 248, 248]);
    let mut reports = vec![("blank".to_string(), report(&blank, 9.0))];
    for (i, count) in [3usize, 10, 30].into_iter().enumerate() {
        let (img, _) = generate_screen(&ScreenSpec::new(1280, 720, i as u64, count, DensityProfile::Dense)).unwrap();
        reports.push((format!("w{count}"), report(&img, 9.0)));
    }
    // 1280×720 pads to 2048×1024
    let ln_n = (2048.0f64 * 1024.0).ln();
    for (id, r) in &reports {
        assert!(r.entropy >= 0.0 && r.entropy <= ln_n, "{id}: {}", r.entropy);
    }
    assert!(reports[0].1.degenerate && !reports[0].1.is_hard);
    let picked = select_visual_hard_cases(&reports, 0.0);
    assert_eq!(picked.len(), 3);
    assert!(!picked.contains(&"blank".to_string()));
    let h = |id: &String| reports.iter().find(|(i, _)| i == id).unwrap().1.entropy;
    assert!(picked.windows(2).all(|w| h(&w[0]) >= h(&w[1])));
}

#[test]
fn dense_screen_fits_the_token_budget() {
    let (img, _) = generate_screen(&fixtures::dense_hd()).unwrap();
    let manifest = isc_pipeline(&img, &EdgeConfig::default(), &IscConfig::default()).unwrap();
    let model = TokenBudgetModel::default();
    let full = token_count_full(1920, 1080, &model);
    let isc = token_count_isc(&manifest, &model);
    assert!(isc as f64 / full as f64 <= 0.5, "{isc} of {full}");
    assert!(modeled_costs(1920, 1080, &manifest, &model).ratio() >= 50.0);
}

#[test]
fn wire_server_answers_for_a_perfect_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (img, gt) = generate_screen(&ScreenSpec::new(640, 400, 3, 3, DensityProfile::Clustered)).unwrap();
    let path = dir.path().join("screen.png");
    img.save_png(&path).unwrap();
    let p = path.to_string_lossy();
    let target = &gt.elements[1];
    let [x1, y1, x2, y2] = target.bbox.to_array();
    let requests = format!(
        "{{\"op\":\"enumerate\",\"image\":\"{p}\"}}\n\
         {{\"op\":\"ground\",\"image\":\"{p}\",\"description\":\"{}\"}}\n\
         {{\"op\":\"refer\",\"image\":\"{p}\",\"bbox\":[{x1},{y1},{x2},{y2}]}}\n\
         {{\"op\":\"ground\",\"image\":\"{p}\",\"description\":\"nothing like it\"}}\n",
        target.description
    );
    let mut out = Vec::new();
    serve(&mut perfect_agent(gt.clone()), Cursor::new(requests), &mut out).unwrap();
    let replies: Vec<Response> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 4);
    let listed: Vec<String> = gt.elements.iter().map(|e| e.description.clone()).collect();
    assert_eq!(replies[0].descriptions.as_ref(), Some(&listed));
    assert_eq!(replies[1].bbox, Some(target.bbox.to_array()));
    assert_eq!(replies[2].description.as_deref(), Some(target.description.as_str()));
    assert!(!replies[3].ok && replies[3].error.is_some());
}
