//! Report emission: an aligned plain-text table per metric with the
//! "Easy Mod. Hard" columns repeated under each IoU configuration, a flat
//! CSV, and JSON with the full PR curves.

use crate::kitti::TargetClass;

use super::matching::Difficulty;
use super::{EvalCell, EvalReport, IouConfigId};

fn fmt_value(v: Option<f64>, width: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.2}"),
        None => format!("{:>width$}", "-"),
    }
}

fn metric_of(cell: &EvalCell, metric: &str) -> Option<f64> {
    match metric {
        "ap_3d" => cell.ap_3d,
        "ap_bev" => cell.ap_bev,
        "sigma_3d" => cell.sigma_3d,
        _ => unreachable!("unknown metric {metric}"),
    }
}

fn metric_block(report: &EvalReport, title: &str, metric: &str, width: usize) -> String {
    let configs = report.configs();
    let mut out = String::new();
    out.push_str(&format!("{title}\n"));
    let pad = |s: &str| format!("{s:>width$}");
    let mut header = format!("{:<12}", "class");
    for (i, _) in configs.iter().enumerate() {
        let gap = if i > 0 { "  " } else { "" };
        header.push_str(&format!(
            "{gap} {:>5} {} {} {}",
            "IoU",
            pad("Easy"),
            pad("Mod."),
            pad("Hard"),
        ));
    }
    out.push_str(&header);
    out.push('\n');
    for class in TargetClass::ALL {
        let mut row = format!("{:<12}", class.as_str());
        for (i, &config) in configs.iter().enumerate() {
            let threshold = report.cell(class, Difficulty::Easy, config).iou_threshold;
            let gap = if i > 0 { "  " } else { "" };
            row.push_str(&format!("{gap} {threshold:>5.2}"));
            for difficulty in Difficulty::ALL {
                let cell = report.cell(class, difficulty, config);
                row.push(' ');
                row.push_str(&fmt_value(metric_of(cell, metric), width));
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Aligned text tables for AP_3D, AP_BEV and sigma_3D.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("method: {}    frames: {}\n", report.method, report.num_frames));
    out.push_str("absent cells (no ground truth) print as '-'\n\n");
    out.push_str(&metric_block(report, "AP_3D (IoU | R40) %", "ap_3d", 7));
    out.push('\n');
    out.push_str(&metric_block(report, "AP_BEV (IoU | R40) %", "ap_bev", 7));
    out.push('\n');
    out.push_str(&metric_block(report, "sigma_3D (per-image AP_3D variance)", "sigma_3d", 9));
    out
}

/// Flat CSV: `method,class,difficulty,iou_config,metric,value`; absent
/// values emit an empty field.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,class,difficulty,iou_config,metric,value\n");
    for cell in &report.cells {
        for metric in ["ap_3d", "ap_bev", "sigma_3d"] {
            let value = metric_of(cell, metric).map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                report.method,
                cell.class.as_str(),
                cell.difficulty,
                cell.iou_config,
                metric,
                value
            ));
        }
    }
    out
}

/// JSON with every cell, the counts and the full PR curves.
pub fn render_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_parsed, EvalConfig, FrameData};
    use crate::kitti::parse_label_line;

    fn tiny_report() -> EvalReport {
        let gt = parse_label_line(
            "Car 0.00 0 0.00 100.0 100.0 200.0 160.0 1.6 1.7 4.0 0.0 1.7 20.0 0.00",
        )
        .unwrap();
        let frames = vec![FrameData {
            id: "000001".into(),
            gts: vec![gt.clone()],
            dets: vec![crate::kitti::Detection { label: gt, score: 1.0 }],
        }];
        evaluate_parsed(&frames, &EvalConfig::default(), "unit").unwrap()
    }

    #[test]
    fn text_report_has_the_column_structure() {
        let text = render_text(&tiny_report());
        assert_eq!(text.matches("Easy").count(), 6, "Easy under each IoU config per metric block");
        assert_eq!(text.matches("Mod.").count(), 6);
        assert_eq!(text.matches("Hard").count(), 6);
        for class in ["Car", "Pedestrian", "Cyclist"] {
            assert!(text.contains(class));
        }
        assert!(text.contains("AP_3D"));
        assert!(text.contains("AP_BEV"));
        assert!(text.contains("sigma_3D"));
        assert!(text.contains("100.00"));
    }

    #[test]
    fn csv_report_has_a_row_per_cell_and_metric() {
        let csv = render_csv(&tiny_report());
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "method,class,difficulty,iou_config,metric,value");
        assert_eq!(lines.len(), 1 + 18 * 3, "18 cells x 3 metrics");
        assert!(lines.iter().any(|l| l.starts_with("unit,Car,easy,primary,ap_3d,100.0")));
        // absent pedestrian cells carry empty values
        assert!(lines.iter().any(|l| l.starts_with("unit,Pedestrian,easy,primary,ap_3d,") && l.ends_with(',')));
    }

    #[test]
    fn json_report_keeps_the_pr_curves() {
        let json = render_json(&tiny_report());
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let cells = value["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 18);
        let car_easy = cells
            .iter()
            .find(|c| c["class"] == "Car" && c["difficulty"] == "easy" && c["iou_config"] == "primary")
            .unwrap();
        assert_eq!(car_easy["ap_3d"], 100.0);
        assert_eq!(car_easy["pr_curve"].as_array().unwrap().len(), 40);
    }
}
