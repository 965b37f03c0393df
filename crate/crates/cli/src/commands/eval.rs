//! `segfuse eval`: KITTI-protocol evaluation with text, CSV and JSON
//! reports.

use std::path::Path;

use segfuse_core::eval::report::{render_csv, render_json, render_text};
use segfuse_core::eval::{evaluate, EvalConfig, EvalError, EvalReport, IouConfigId};

use crate::manifest::{write_atomic, ManifestBuilder};

use super::CliError;

fn filter_config(report: EvalReport, config: Option<IouConfigId>) -> EvalReport {
    match config {
        None => report,
        Some(id) => EvalReport {
            method: report.method,
            num_frames: report.num_frames,
            cells: report.cells.into_iter().filter(|c| c.iou_config == id).collect(),
        },
    }
}

pub fn run(gt_dir: &Path, det_dir: &Path, iou_config: Option<IouConfigId>, out: &Path) -> Result<(), CliError> {
    let builder = ManifestBuilder::new(
        "eval",
        &format!(
            "gt={} det={} iou_config={}",
            gt_dir.display(),
            det_dir.display(),
            iou_config.map(|c| c.to_string()).unwrap_or_else(|| "both".into())
        ),
        &[gt_dir, det_dir],
        0,
    );

    let report = evaluate(gt_dir, det_dir, &EvalConfig::default()).map_err(|e| match e {
        EvalError::FrameSetMismatch { .. } | EvalError::Parse { .. } | EvalError::Io { .. } => CliError::data(e),
        other => CliError::data(other),
    })?;
    let report = filter_config(report, iou_config);

    let text = render_text(&report);
    print!("{text}");

    let manifest = builder.finish();
    let json = serde_json::json!({
        "manifest": manifest,
        "report": serde_json::from_str::<serde_json::Value>(&render_json(&report)).expect("report json"),
    });
    write_atomic(out, serde_json::to_string_pretty(&json).expect("json").as_bytes()).map_err(CliError::data)?;
    write_atomic(&out.with_extension("csv"), render_csv(&report).as_bytes()).map_err(CliError::data)?;
    write_atomic(&out.with_extension("txt"), text.as_bytes()).map_err(CliError::data)?;
    Ok(())
}
