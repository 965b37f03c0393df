//! End-to-end behavior of the `segfuse` binary: exit codes, file outputs,
//! idempotence, and the frozen fusion snapshot.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segfuse_core::kitti::{format_detection_file, format_label_file, parse_label_line, Detection};
use segfuse_core::netpbm::{write_p5, write_p6, GrayImage, RgbImage};

fn segfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segfuse"))
        .args(args)
        .output()
        .expect("binary must run")
}

fn segfuse_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segfuse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary must run")
}

fn write_gray(path: &Path, width: usize, height: usize, pixels: Vec<u8>) {
    let mut bytes = Vec::new();
    write_p5(&mut bytes, &GrayImage { width, height, pixels }).unwrap();
    std::fs::write(path, bytes).unwrap();
}

/// Deterministic little test scene: a ramp image and a prior with one
/// rectangle per class.
fn write_fuse_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let (w, h) = (64usize, 32usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            rgb.push(((x * 3 + y * 5) % 256) as u8);
            rgb.push(((x * 7 + y * 2) % 256) as u8);
            rgb.push(((x + y * 11) % 256) as u8);
        }
    }
    let image_path = dir.join("image.ppm");
    let mut bytes = Vec::new();
    write_p6(&mut bytes, &RgbImage { width: w, height: h, pixels: rgb }).unwrap();
    std::fs::write(&image_path, bytes).unwrap();

    let mut prior = vec![0u8; w * h];
    for y in 8..20 {
        for x in 10..30 {
            prior[y * w + x] = 85;
        }
    }
    for y in 5..25 {
        for x in 40..46 {
            prior[y * w + x] = 170;
        }
    }
    let prior_path = dir.join("prior.pgm");
    write_gray(&prior_path, w, h, prior);
    (image_path, prior_path)
}

fn write_mask_fixture(dir: &Path) {
    let (w, h) = (16usize, 8usize);
    let rect = |x0: usize, x1: usize, y0: usize, y1: usize| {
        let mut m = vec![0u8; w * h];
        for y in y0..y1 {
            for x in x0..x1 {
                m[y * w + x] = 255;
            }
        }
        m
    };
    write_gray(&dir.join("car0.pgm"), w, h, rect(1, 6, 2, 6));
    write_gray(&dir.join("ped0.pgm"), w, h, rect(4, 8, 3, 7));
    write_gray(&dir.join("cyc0.pgm"), w, h, rect(10, 14, 1, 5));
    std::fs::write(dir.join("000000.txt"), "Car car0.pgm\nPedestrian ped0.pgm\n").unwrap();
    std::fs::write(dir.join("000001.txt"), "Cyclist cyc0.pgm\n").unwrap();
}

#[test]
fn encode_priors_writes_one_pgm_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    let out = dir.path().join("priors");
    std::fs::create_dir_all(&masks).unwrap();
    write_mask_fixture(&masks);

    let output = segfuse(&["encode-priors", "--masks", masks.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("000000.pgm").is_file());
    assert!(out.join("000001.pgm").is_file());
    assert!(out.join("run_manifest.json").is_file());

    // overlap pixels belong to the pedestrian; car-only pixels stay 85
    let map = segfuse_core::prior::read_pgm(&mut std::fs::File::open(out.join("000000.pgm")).unwrap()).unwrap();
    assert_eq!(map.pixel(2, 3), 85);
    assert_eq!(map.pixel(5, 4), 170, "overlap must go to the higher-priority class");

    // idempotent: byte-identical prior maps on a second run
    let first = std::fs::read(out.join("000000.pgm")).unwrap();
    let again = segfuse(&["encode-priors", "--masks", masks.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(first, std::fs::read(out.join("000000.pgm")).unwrap());
}

#[test]
fn encode_priors_with_empty_masks_dir_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    let out = dir.path().join("priors");
    std::fs::create_dir_all(&masks).unwrap();
    let output = segfuse(&["encode-priors", "--masks", masks.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("warning"));
    let pgms = std::fs::read_dir(&out).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().and_then(|x| x.to_str()) == Some("pgm")
    });
    assert_eq!(pgms.count(), 0);
}

#[test]
fn encode_priors_missing_mask_names_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    let out = dir.path().join("priors");
    std::fs::create_dir_all(&masks).unwrap();
    std::fs::write(masks.join("000042.txt"), "Car not_there.pgm\n").unwrap();
    let output = segfuse(&["encode-priors", "--masks", masks.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("000042"));
}

#[test]
fn encode_priors_accepts_a_custom_intensity_table() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    let out = dir.path().join("priors");
    std::fs::create_dir_all(&masks).unwrap();
    write_mask_fixture(&masks);
    let table = dir.path().join("table.txt");
    std::fs::write(&table, "Car 30\nPedestrian 200\nCyclist 90\n").unwrap();
    let output = segfuse(&[
        "encode-priors",
        "--masks",
        masks.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--intensity-table",
        table.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let map = segfuse_core::prior::read_pgm(&mut std::fs::File::open(out.join("000000.pgm")).unwrap()).unwrap();
    assert_eq!(map.pixel(2, 3), 30);
    assert_eq!(map.pixel(5, 4), 200);

    std::fs::write(&table, "Car 0\n").unwrap();
    let bad = segfuse(&[
        "encode-priors",
        "--masks",
        masks.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--intensity-table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fuse_writes_snapshot_and_report_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (image, prior) = write_fuse_inputs(dir.path());
    let out_a = dir.path().join("a.bin");
    let out_b = dir.path().join("b.bin");
    for out in [&out_a, &out_b] {
        let output = segfuse(&[
            "fuse",
            "--image",
            image.to_str().unwrap(),
            "--prior",
            prior.to_str().unwrap(),
            "--strategy",
            "multiply",
            "--point",
            "after_dla",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give identical snapshots");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.bin.json")).unwrap()).unwrap();
    assert_eq!(report["fuse_calls"], 1);
    assert_eq!(report["output_shape"], serde_json::json!([1, 64, 8, 16]));
    assert!(report["probe"]["stages"].as_array().unwrap().len() >= 4);
    assert_eq!(report["manifest"]["command"], "fuse");
}

#[test]
fn fuse_snapshot_matches_the_frozen_golden() {
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_fuse.bin");
    let dir = tempfile::tempdir().unwrap();
    let (image, prior) = write_fuse_inputs(dir.path());
    let out = dir.path().join("snapshot.bin");
    let output = segfuse(&[
        "fuse",
        "--image",
        image.to_str().unwrap(),
        "--prior",
        prior.to_str().unwrap(),
        "--strategy",
        "multiply",
        "--point",
        "after_dla",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let produced = std::fs::read(&out).unwrap();
    if std::env::var("SEGFUSE_BLESS").is_ok() {
        std::fs::write(&golden_path, &produced).unwrap();
        return;
    }
    let golden = std::fs::read(&golden_path)
        .expect("golden fixture missing; regenerate with SEGFUSE_BLESS=1 cargo test");
    assert_eq!(produced, golden, "fusion output drifted from the frozen reference run");
}

#[test]
fn fuse_mismatched_prior_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (image, _) = write_fuse_inputs(dir.path());
    let bad_prior = dir.path().join("bad.pgm");
    write_gray(&bad_prior, 16, 16, vec![0; 256]);
    let output = segfuse(&[
        "fuse",
        "--image",
        image.to_str().unwrap(),
        "--prior",
        bad_prior.to_str().unwrap(),
        "--strategy",
        "multiply",
        "--point",
        "after_dla",
        "--seed",
        "1",
        "--out",
        dir.path().join("x.bin").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

fn write_eval_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let gt_dir = dir.join("gt").join("label_2");
    let det_dir = dir.join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();
    let car = parse_label_line("Car 0.00 0 0.10 300.0 100.0 360.0 150.0 1.6 1.7 4.0 2.0 1.7 20.0 0.20").unwrap();
    let ped =
        parse_label_line("Pedestrian 0.05 0 0.30 500.0 110.0 530.0 165.0 1.8 0.6 0.8 -3.0 1.6 12.0 1.10").unwrap();
    let cyc = parse_label_line("Cyclist 0.00 1 -0.50 600.0 120.0 640.0 150.0 1.7 0.6 1.8 5.0 1.7 25.0 -0.90").unwrap();
    std::fs::write(gt_dir.join("000000.txt"), format_label_file(&[car.clone(), ped.clone()])).unwrap();
    std::fs::write(gt_dir.join("000001.txt"), format_label_file(&[cyc.clone(), car.clone()])).unwrap();
    let dets = |labels: &[segfuse_core::kitti::Label3D]| {
        format_detection_file(
            &labels.iter().map(|l| Detection { label: l.clone(), score: 1.0 }).collect::<Vec<_>>(),
        )
    };
    std::fs::write(det_dir.join("000000.txt"), dets(&[car.clone(), ped])).unwrap();
    std::fs::write(det_dir.join("000001.txt"), dets(&[cyc, car])).unwrap();
    (dir.join("gt"), det_dir)
}

#[test]
fn eval_self_match_scores_100_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, det) = write_eval_fixture(dir.path());
    let out = dir.path().join("report.json");
    let run = || {
        segfuse(&[
            "eval",
            "--gt",
            gt.to_str().unwrap(),
            "--det",
            det.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let output = run();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("AP_3D"));
    assert!(stdout.contains("100.00"));

    let strip_manifest = |path: &Path| {
        let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        value.as_object_mut().unwrap().remove("manifest");
        value
    };
    let first = strip_manifest(&out);
    for cell in first["report"]["cells"].as_array().unwrap() {
        if cell["counts"]["gt"].as_u64().unwrap() > 0 {
            assert_eq!(cell["ap_3d"], 100.0);
            assert_eq!(cell["ap_bev"], 100.0);
        } else {
            assert!(cell["ap_3d"].is_null(), "zero-GT cells report absent AP");
        }
    }
    assert!(out.with_extension("csv").is_file());
    assert!(out.with_extension("txt").is_file());

    let csv_first = std::fs::read(out.with_extension("csv")).unwrap();
    assert!(run().status.success());
    assert_eq!(first, strip_manifest(&out), "reports must be idempotent modulo the manifest");
    assert_eq!(csv_first, std::fs::read(out.with_extension("csv")).unwrap());
}

#[test]
fn eval_empty_det_dir_scores_zero_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, det) = write_eval_fixture(dir.path());
    std::fs::remove_dir_all(&det).unwrap();
    std::fs::create_dir_all(&det).unwrap();
    let out = dir.path().join("report.json");
    let output = segfuse(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for cell in value["report"]["cells"].as_array().unwrap() {
        if cell["counts"]["gt"].as_u64().unwrap() > 0 {
            assert_eq!(cell["ap_3d"], 0.0);
        }
    }
}

#[test]
fn eval_unknown_det_frame_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, det) = write_eval_fixture(dir.path());
    std::fs::write(det.join("000099.txt"), "").unwrap();
    let output = segfuse(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("000099"));
}

#[test]
fn eval_iou_config_flag_restricts_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, det) = write_eval_fixture(dir.path());
    let out = dir.path().join("report.json");
    let output = segfuse(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
        "--iou-config",
        "secondary",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cells = value["report"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    assert!(cells.iter().all(|c| c["iou_config"] == "secondary"));
}

#[test]
fn gradcheck_reports_every_strategy_and_honors_the_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_segfuse"))
        .current_dir(dir.path())
        .env("SLAM3D_THREADS", "1")
        .args(["gradcheck", "--trials", "10", "--seed", "1"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    for strategy in ["multiply", "concat", "attention"] {
        assert!(stdout.contains(&format!("fusion {strategy}")), "missing {strategy} in report");
    }
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let output = segfuse_in(
        dir.path(),
        &[
            "fuse", "--image", "x.ppm", "--prior", "y.pgm", "--strategy", "invalid", "--point", "after_dla",
            "--seed", "0", "--out", "z.bin",
        ],
    );
    assert_eq!(output.status.code(), Some(64));
    let output = segfuse_in(dir.path(), &["not-a-command"]);
    assert_eq!(output.status.code(), Some(64));
}
