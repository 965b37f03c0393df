use super::reference::naive_ap_r40;
use super::*;
use crate::kitti::{format_detection_file, format_label_file, ClassName};

pub(crate) fn make_label(class: ClassName, height_px: f64, occ: i32, trunc: f64, x: f64, z: f64) -> Label3D {
    Label3D {
        class_name: class,
        truncation: trunc,
        occlusion: occ,
        alpha: 0.1,
        bbox2d: [300.0, 100.0, 360.0, 100.0 + height_px],
        dims3d: [1.6, 1.7, 4.0],
        location: [x, 1.7, z],
        rotation_y: 0.2,
    }
}

fn dont_care(bbox: [f64; 4]) -> Label3D {
    Label3D {
        class_name: ClassName::DontCare,
        truncation: -1.0,
        occlusion: -1,
        alpha: -10.0,
        bbox2d: bbox,
        dims3d: [-1.0, -1.0, -1.0],
        location: [-1000.0, -1000.0, -1000.0],
        rotation_y: -10.0,
    }
}

fn self_eval_frames() -> Vec<FrameData> {
    let frame1 = vec![
        make_label(ClassName::Car, 50.0, 0, 0.0, 0.0, 20.0),
        make_label(ClassName::Car, 30.0, 1, 0.2, 8.0, 30.0),
        make_label(ClassName::Pedestrian, 60.0, 0, 0.1, -5.0, 15.0),
        dont_care([500.0, 120.0, 580.0, 170.0]),
    ];
    let frame2 = vec![
        make_label(ClassName::Cyclist, 45.0, 0, 0.05, 3.0, 25.0),
        make_label(ClassName::Van, 52.0, 0, 0.0, -8.0, 22.0),
        make_label(ClassName::Car, 26.0, 2, 0.45, 12.0, 40.0),
        make_label(ClassName::Pedestrian, 55.0, 3, 0.0, 6.0, 18.0),
    ];
    let as_dets = |gts: &[Label3D]| -> Vec<Detection> {
        gts.iter().map(|g| Detection { label: g.clone(), score: 1.0 }).collect()
    };
    vec![
        FrameData { id: "000000".into(), dets: as_dets(&frame1), gts: frame1 },
        FrameData { id: "000001".into(), dets: as_dets(&frame2), gts: frame2 },
        FrameData { id: "000002".into(), gts: vec![], dets: vec![] },
    ]
}

#[test]
fn self_evaluation_scores_100_everywhere() {
    let report = evaluate_parsed(&self_eval_frames(), &EvalConfig::default(), "self").unwrap();
    assert_eq!(report.cells.len(), 18);
    let mut populated = 0;
    for cell in &report.cells {
        if cell.counts.gt > 0 {
            populated += 1;
            assert_eq!(cell.ap_3d, Some(100.0), "{:?}", (cell.class, cell.difficulty, cell.iou_config));
            assert_eq!(cell.ap_bev, Some(100.0));
            assert_eq!(cell.counts.fp, 0);
        } else {
            assert_eq!(cell.ap_3d, None, "zero-GT cells must report absent, not zero");
            assert_eq!(cell.ap_bev, None);
        }
    }
    assert!(populated >= 12, "fixture should populate most cells, got {populated}");
}

#[test]
fn empty_detections_score_zero_where_gt_exists() {
    let mut frames = self_eval_frames();
    for frame in &mut frames {
        frame.dets.clear();
    }
    let report = evaluate_parsed(&frames, &EvalConfig::default(), "empty").unwrap();
    for cell in &report.cells {
        if cell.counts.gt > 0 {
            assert_eq!(cell.ap_3d, Some(0.0));
            assert_eq!(cell.ap_bev, Some(0.0));
        }
    }
}

#[test]
fn fp_then_tp_scores_exactly_50() {
    let gt = make_label(ClassName::Car, 50.0, 0, 0.0, 0.0, 20.0);
    let tp = Detection { label: gt.clone(), score: 0.5 };
    let fp = Detection { label: make_label(ClassName::Car, 50.0, 0, 0.0, 30.0, 60.0), score: 0.9 };
    let frames = vec![FrameData { id: "0".into(), gts: vec![gt], dets: vec![fp, tp] }];
    let report = evaluate_parsed(&frames, &EvalConfig::default(), "fp-tp").unwrap();
    for difficulty in Difficulty::ALL {
        for config in [IouConfigId::Primary, IouConfigId::Secondary] {
            let cell = report.cell(TargetClass::Car, difficulty, config);
            assert_eq!(cell.ap_3d, Some(50.0));
            assert_eq!(cell.ap_bev, Some(50.0));
            assert_eq!(cell.counts, CellCounts { gt: 1, tp: 1, fp: 1, ignored: 0 });
        }
    }
}

#[test]
fn sigma_is_zero_for_identical_per_image_aps_and_absent_for_one_image() {
    let report = evaluate_parsed(&self_eval_frames(), &EvalConfig::default(), "self").unwrap();
    // cars appear in two frames at Hard: both images score 100 -> variance 0
    let hard = report.cell(TargetClass::Car, Difficulty::Hard, IouConfigId::Primary);
    assert_eq!(hard.sigma_3d, Some(0.0));
    // pedestrian GT countable in one frame only -> absent
    let ped = report.cell(TargetClass::Pedestrian, Difficulty::Easy, IouConfigId::Primary);
    assert_eq!(ped.sigma_3d, None);
}

#[test]
fn frame_enumeration_order_does_not_matter() {
    let frames = self_eval_frames();
    let mut reversed = frames.clone();
    reversed.reverse();
    let a = evaluate_parsed(&frames, &EvalConfig::default(), "m").unwrap();
    let b = evaluate_parsed(&reversed, &EvalConfig::default(), "m").unwrap();
    assert_eq!(report::render_json(&a), report::render_json(&b));
}

#[test]
fn pooled_ap_matches_the_naive_oracle_on_random_fixtures() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let classes = [ClassName::Car, ClassName::Pedestrian, ClassName::Cyclist, ClassName::Van];
    for fixture in 0..6 {
        let num_frames = rng.random_range(1..=4);
        let mut frames = Vec::new();
        for f in 0..num_frames {
            let mut gts = Vec::new();
            let mut dets = Vec::new();
            for k in 0..rng.random_range(0..=5) {
                let class = classes[rng.random_range(0..classes.len())];
                let x = k as f64 * 15.0;
                let z = 20.0 + k as f64 * 10.0;
                let gt = make_label(class, rng.random_range(20.0..60.0), rng.random_range(0..3), 0.1, x, z);
                // jittered detection near the gt plus occasional far fp
                let mut det = gt.clone();
                det.location[0] += rng.random_range(-0.4..0.4);
                dets.push(Detection { label: det, score: rng.random_range(0.0..1.0) });
                if rng.random_bool(0.3) {
                    let far = make_label(class, 50.0, 0, 0.0, x + 200.0, z + 300.0);
                    dets.push(Detection { label: far, score: rng.random_range(0.0..1.0) });
                }
                gts.push(gt);
            }
            frames.push(FrameData { id: format!("{f:06}"), gts, dets });
        }
        let cfg = EvalConfig::default();
        let report = evaluate_parsed(&frames, &cfg, "random").unwrap();

        // recompute every populated cell with the brute-force oracle
        let mut ordered: Vec<&FrameData> = frames.iter().collect();
        ordered.sort_by(|a, b| a.id.cmp(&b.id));
        for cell in &report.cells {
            if cell.counts.gt == 0 {
                continue;
            }
            let mut flags = Vec::new();
            for (ord, frame) in ordered.iter().enumerate() {
                let m = match_detections(
                    &frame.gts,
                    &frame.dets,
                    cell.class,
                    cell.difficulty,
                    iou_3d,
                    cell.iou_threshold,
                    &cfg.difficulty_thresholds,
                    ord,
                );
                flags.extend(m.flags);
            }
            sort_ranking(&mut flags);
            let oracle = naive_ap_r40(&flags, cell.counts.gt);
            let got = cell.ap_3d.unwrap();
            assert!((got - oracle).abs() <= 1e-9, "fixture {fixture}: {got} vs {oracle}");
        }
    }
}

#[test]
fn directory_evaluation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gt_dir = dir.path().join("gt").join("label_2");
    let det_dir = dir.path().join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();

    for frame in self_eval_frames() {
        std::fs::write(gt_dir.join(format!("{}.txt", frame.id)), format_label_file(&frame.gts)).unwrap();
        // one frame deliberately has no detection file
        if frame.id != "000002" {
            std::fs::write(det_dir.join(format!("{}.txt", frame.id)), format_detection_file(&frame.dets)).unwrap();
        }
    }

    let report = evaluate(&dir.path().join("gt"), &det_dir, &EvalConfig::default()).unwrap();
    assert_eq!(report.num_frames, 3);
    assert_eq!(report.method, "det");
    for cell in &report.cells {
        if cell.counts.gt > 0 {
            assert_eq!(cell.ap_3d, Some(100.0));
        }
    }
}

#[test]
fn unknown_detection_frame_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let det_dir = dir.path().join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();
    std::fs::write(gt_dir.join("000000.txt"), "").unwrap();
    std::fs::write(det_dir.join("000000.txt"), "").unwrap();
    std::fs::write(det_dir.join("000099.txt"), "").unwrap();

    let err = evaluate(&gt_dir, &det_dir, &EvalConfig::default()).unwrap_err();
    match err {
        EvalError::FrameSetMismatch { unexpected } => assert_eq!(unexpected, vec!["000099".to_string()]),
        other => panic!("expected FrameSetMismatch, got {other}"),
    }
}

#[test]
fn parse_failures_are_aggregated_with_frame_ids() {
    let dir = tempfile::tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let det_dir = dir.path().join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();
    std::fs::write(gt_dir.join("000000.txt"), "not a label line\n").unwrap();
    std::fs::write(gt_dir.join("000001.txt"), "").unwrap();
    std::fs::write(det_dir.join("000001.txt"), "Car 0 0 0 10 10 20 20 1 1 1 0 0 10 0\n").unwrap(); // 15 tokens, not 16

    let err = evaluate(&gt_dir, &det_dir, &EvalConfig::default()).unwrap_err();
    match err {
        EvalError::Parse { failures } => {
            let frames: Vec<&str> = failures.iter().map(|(f, _)| f.as_str()).collect();
            assert!(frames.contains(&"gt/000000"));
            assert!(frames.contains(&"det/000001"));
        }
        other => panic!("expected Parse, got {other}"),
    }
}

#[test]
fn bad_config_rejected() {
    let broken_threshold = EvalConfig {
        primary: ClassThresholds { car: 0.0, pedestrian: 0.5, cyclist: 0.5 },
        ..EvalConfig::default()
    };
    assert!(matches!(evaluate_parsed(&[], &broken_threshold, "x"), Err(EvalError::Config(_))));
    let broken_points = EvalConfig { recall_points: 11, ..EvalConfig::default() };
    assert!(matches!(evaluate_parsed(&[], &broken_points, "x"), Err(EvalError::Config(_))));
}
