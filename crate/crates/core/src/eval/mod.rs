//! KITTI-protocol 3D detection evaluation: difficulty filtering, greedy
//! matching, AP|R40 for 3D and BEV overlap, per-image AP variance, and
//! report emission (aligned text, CSV, JSON).

pub mod ap;
pub mod geometry;
pub mod matching;
pub mod reference;
pub mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::kitti::{self, Detection, Label3D, ParseError, TargetClass};

use ap::{ap_r40, prediction_variance, sort_ranking, PrCurve, RankedFlag};
use geometry::{bev_iou_labels, iou_3d};
use matching::{match_detections, Difficulty, DifficultyThresholds, MatchResult, DEFAULT_DIFFICULTY_THRESHOLDS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("detection frames without ground truth: {}", unexpected.join(", "))]
    FrameSetMismatch { unexpected: Vec<String> },
    #[error("{} file(s) failed to parse: {}", failures.len(),
            failures.iter().map(|(f, e)| format!("{f}: {e}")).collect::<Vec<_>>().join("; "))]
    Parse { failures: Vec<(String, ParseError)> },
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("cannot read `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Minimum-overlap thresholds per class.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassThresholds {
    pub car: f64,
    pub pedestrian: f64,
    pub cyclist: f64,
}

impl ClassThresholds {
    pub fn threshold(&self, class: TargetClass) -> f64 {
        match class {
            TargetClass::Car => self.car,
            TargetClass::Pedestrian => self.pedestrian,
            TargetClass::Cyclist => self.cyclist,
        }
    }
}

/// Which of the two overlap configurations a result cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouConfigId {
    Primary,
    Secondary,
}

impl IouConfigId {
    pub fn as_str(&self) -> &'static str {
        match self {
            IouConfigId::Primary => "primary",
            IouConfigId::Secondary => "secondary",
        }
    }
}

impl std::fmt::Display for IouConfigId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full evaluation protocol configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalConfig {
    /// 0.70 for cars, 0.50 for pedestrians and cyclists.
    pub primary: ClassThresholds,
    /// 0.50 for cars, 0.30 for pedestrians and cyclists.
    pub secondary: ClassThresholds,
    pub recall_points: usize,
    pub difficulty_thresholds: [DifficultyThresholds; 3],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            primary: ClassThresholds { car: 0.7, pedestrian: 0.5, cyclist: 0.5 },
            secondary: ClassThresholds { car: 0.5, pedestrian: 0.3, cyclist: 0.3 },
            recall_points: 40,
            difficulty_thresholds: DEFAULT_DIFFICULTY_THRESHOLDS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        for t in [
            self.primary.car,
            self.primary.pedestrian,
            self.primary.cyclist,
            self.secondary.car,
            self.secondary.pedestrian,
            self.secondary.cyclist,
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(EvalError::Config(format!("IoU threshold {t} outside (0, 1]")));
            }
        }
        if self.recall_points != 40 {
            return Err(EvalError::Config(format!(
                "recall_points must be 40, got {}",
                self.recall_points
            )));
        }
        Ok(())
    }

    pub fn thresholds_for(&self, id: IouConfigId) -> &ClassThresholds {
        match id {
            IouConfigId::Primary => &self.primary,
            IouConfigId::Secondary => &self.secondary,
        }
    }
}

/// Ground truth and detections of one frame.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub id: String,
    pub gts: Vec<Label3D>,
    pub dets: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CellCounts {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
}

/// One (class, difficulty, IoU config) result cell. AP values are absent
/// (not zero) when no ground truth exists for the cell; the variance is
/// absent with fewer than two ground-truth-bearing images.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalCell {
    pub class: TargetClass,
    pub difficulty: Difficulty,
    pub iou_config: IouConfigId,
    pub iou_threshold: f64,
    pub ap_3d: Option<f64>,
    pub ap_bev: Option<f64>,
    pub sigma_3d: Option<f64>,
    /// Interpolated (recall, precision) pairs of the pooled 3D ranking.
    pub pr_curve: Option<PrCurve>,
    /// Counts from the 3D matching.
    pub counts: CellCounts,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub method: String,
    pub num_frames: usize,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn find_cell(&self, class: TargetClass, difficulty: Difficulty, config: IouConfigId) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.class == class && c.difficulty == difficulty && c.iou_config == config)
    }

    pub fn cell(&self, class: TargetClass, difficulty: Difficulty, config: IouConfigId) -> &EvalCell {
        self.find_cell(class, difficulty, config)
            .expect("cell missing; the report was filtered")
    }

    /// IoU configurations present in this (possibly filtered) report.
    pub fn configs(&self) -> Vec<IouConfigId> {
        [IouConfigId::Primary, IouConfigId::Secondary]
            .into_iter()
            .filter(|id| self.cells.iter().any(|c| c.iou_config == *id))
            .collect()
    }
}

fn pool_and_score(results: &[MatchResult]) -> (usize, CellCounts, Option<f64>, Option<PrCurve>, Option<f64>) {
    let num_gt: usize = results.iter().map(|r| r.num_gt).sum();
    let counts = CellCounts {
        gt: num_gt,
        tp: results.iter().map(|r| r.tp).sum(),
        fp: results.iter().map(|r| r.fp).sum(),
        ignored: results.iter().map(|r| r.ignored).sum(),
    };
    if num_gt == 0 {
        return (0, counts, None, None, None);
    }
    let mut pooled: Vec<RankedFlag> = results.iter().flat_map(|r| r.flags.iter().copied()).collect();
    sort_ranking(&mut pooled);
    let (ap, curve) = ap_r40(&pooled, num_gt).expect("num_gt > 0");

    let per_image: Vec<f64> = results
        .iter()
        .filter(|r| r.num_gt > 0)
        .map(|r| {
            let mut flags = r.flags.clone();
            sort_ranking(&mut flags);
            ap_r40(&flags, r.num_gt).expect("num_gt > 0").0
        })
        .collect();
    let sigma = prediction_variance(&per_image).ok();
    (num_gt, counts, Some(ap), Some(curve), sigma)
}

/// Evaluate parsed frames. Frames are brought into a canonical order by id
/// first, so the caller's enumeration order does not influence the result.
pub fn evaluate_parsed(frames: &[FrameData], cfg: &EvalConfig, method: &str) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let mut ordered: Vec<&FrameData> = frames.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut cells = Vec::with_capacity(3 * 3 * 2);
    for class in TargetClass::ALL {
        for config_id in [IouConfigId::Primary, IouConfigId::Secondary] {
            let threshold = cfg.thresholds_for(config_id).threshold(class);
            for difficulty in Difficulty::ALL {
                let run = |iou_fn: fn(&Label3D, &Label3D) -> f64| -> Vec<MatchResult> {
                    ordered
                        .par_iter()
                        .enumerate()
                        .map(|(ord, frame)| {
                            match_detections(
                                &frame.gts,
                                &frame.dets,
                                class,
                                difficulty,
                                iou_fn,
                                threshold,
                                &cfg.difficulty_thresholds,
                                ord,
                            )
                        })
                        .collect()
                };
                let results_3d = run(iou_3d);
                let results_bev = run(bev_iou_labels);

                let (_, counts, ap_3d, pr_curve, sigma_3d) = pool_and_score(&results_3d);
                let (_, _, ap_bev, _, _) = pool_and_score(&results_bev);
                cells.push(EvalCell {
                    class,
                    difficulty,
                    iou_config: config_id,
                    iou_threshold: threshold,
                    ap_3d,
                    ap_bev,
                    sigma_3d,
                    pr_curve,
                    counts,
                });
            }
        }
    }
    Ok(EvalReport { method: method.to_string(), num_frames: ordered.len(), cells })
}

/// Resolve the label directory: accept either a directory that directly
/// holds `<frame>.txt` files or a KITTI root containing `label_2/`.
fn resolve_label_dir(gt_dir: &Path) -> PathBuf {
    let nested = gt_dir.join("label_2");
    if nested.is_dir() {
        nested
    } else {
        gt_dir.to_path_buf()
    }
}

fn frame_stems(dir: &Path) -> Result<BTreeSet<String>, EvalError> {
    let mut stems = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    for entry in entries {
        let entry = entry.map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    Ok(stems)
}

fn read_file(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

/// Load KITTI-layout directories and evaluate.
///
/// Every ground-truth frame must be present; a missing detection file means
/// "no detections for that frame". Detection files without a ground-truth
/// counterpart are a [`EvalError::FrameSetMismatch`]. Parse failures are
/// aggregated across files and reported together with their frame ids.
pub fn evaluate(gt_dir: &Path, det_dir: &Path, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let label_dir = resolve_label_dir(gt_dir);
    let gt_frames = frame_stems(&label_dir)?;
    let det_frames = frame_stems(det_dir)?;

    let unexpected: Vec<String> = det_frames.difference(&gt_frames).cloned().collect();
    if !unexpected.is_empty() {
        return Err(EvalError::FrameSetMismatch { unexpected });
    }

    let mut frames = Vec::with_capacity(gt_frames.len());
    let mut failures: Vec<(String, ParseError)> = Vec::new();
    for id in &gt_frames {
        let gt_text = read_file(&label_dir.join(format!("{id}.txt")))?;
        let gts = match kitti::parse_label_file(&gt_text) {
            Ok(gts) => gts,
            Err(e) => {
                failures.push((format!("gt/{id}"), e));
                continue;
            }
        };
        let det_path = det_dir.join(format!("{id}.txt"));
        let dets = if det_path.is_file() {
            match kitti::parse_detection_file(&read_file(&det_path)?) {
                Ok(dets) => dets,
                Err(e) => {
                    failures.push((format!("det/{id}"), e));
                    continue;
                }
            }
        } else {
            Vec::new()
        };
        frames.push(FrameData { id: id.clone(), gts, dets });
    }
    if !failures.is_empty() {
        return Err(EvalError::Parse { failures });
    }

    let method = det_dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("detections")
        .to_string();
    evaluate_parsed(&frames, cfg, &method)
}

#[cfg(test)]
mod tests;
