//! Difficulty filtering and PASCAL-style greedy matching of detections to
//! ground truth within one image.

use crate::kitti::{ClassName, Detection, Label3D, TargetClass};

use super::ap::RankedFlag;
use super::geometry::bbox2d_intersection;

/// Evaluation difficulty buckets; a ground truth that fails even the Hard
/// thresholds is ignored entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of assigning a ground truth to its easiest qualifying bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignedDifficulty {
    Level(Difficulty),
    Ignored,
}

/// Per-level gates on 2D box height, occlusion and truncation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DifficultyThresholds {
    pub min_height_px: f64,
    pub max_occlusion: i32,
    pub max_truncation: f64,
}

/// The benchmark's difficulty table (Easy / Moderate / Hard).
pub const DEFAULT_DIFFICULTY_THRESHOLDS: [DifficultyThresholds; 3] = [
    DifficultyThresholds { min_height_px: 40.0, max_occlusion: 0, max_truncation: 0.15 },
    DifficultyThresholds { min_height_px: 25.0, max_occlusion: 1, max_truncation: 0.30 },
    DifficultyThresholds { min_height_px: 25.0, max_occlusion: 2, max_truncation: 0.50 },
];

/// Assign a ground truth to the easiest difficulty whose thresholds it
/// passes. Occlusion 3 ("unknown") fails even Hard and lands in Ignored.
pub fn assign_difficulty(label: &Label3D, thresholds: &[DifficultyThresholds; 3]) -> AssignedDifficulty {
    let height = label.bbox_height();
    for (level, gate) in Difficulty::ALL.iter().zip(thresholds) {
        if height >= gate.min_height_px
            && label.occlusion <= gate.max_occlusion
            && label.truncation <= gate.max_truncation
        {
            return AssignedDifficulty::Level(*level);
        }
    }
    AssignedDifficulty::Ignored
}

/// Classes whose ground truth is close enough to the evaluated class that
/// detections overlapping it should not count as false positives.
fn neighbor_class(class: TargetClass) -> Option<ClassName> {
    match class {
        TargetClass::Car => Some(ClassName::Van),
        TargetClass::Pedestrian => Some(ClassName::PersonSitting),
        TargetClass::Cyclist => None,
    }
}

/// Detection outcome inside one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetOutcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

/// Matching result for one image, one class, one difficulty, one IoU
/// threshold.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
    /// IoU of each true positive with its ground truth.
    pub matched_ious: Vec<f64>,
    /// Score-ordered TP/FP flags (ignored detections excluded), ready to be
    /// pooled across images.
    pub flags: Vec<RankedFlag>,
}

/// Fraction of the detection's own 2D area that a DontCare region may cover
/// before the detection is taken out of the evaluation.
const DONT_CARE_COVER: f64 = 0.5;

/// Greedy PASCAL matching for one image.
///
/// Detections of `class` are visited in descending score order (ties by
/// record index); each takes the unmatched countable ground truth with the
/// highest IoU at or above `threshold`. Detections that instead overlap an
/// ignorable ground truth (same class but harder than `difficulty`, or the
/// neighbor class), or whose 2D box is mostly inside a DontCare region, are
/// neither true nor false positives.
#[allow(clippy::too_many_arguments)]
pub fn match_detections<F>(
    gts: &[Label3D],
    dets: &[Detection],
    class: TargetClass,
    difficulty: Difficulty,
    iou_fn: F,
    threshold: f64,
    thresholds: &[DifficultyThresholds; 3],
    frame_ord: usize,
) -> MatchResult
where
    F: Fn(&Label3D, &Label3D) -> f64,
{
    let class_name = class.class_name();

    let mut countable: Vec<&Label3D> = Vec::new();
    let mut ignorable: Vec<&Label3D> = Vec::new();
    let mut dont_care: Vec<&Label3D> = Vec::new();
    for gt in gts {
        if gt.is_dont_care() {
            dont_care.push(gt);
        } else if gt.class_name == class_name {
            match assign_difficulty(gt, thresholds) {
                AssignedDifficulty::Level(level) if level <= difficulty => countable.push(gt),
                _ => ignorable.push(gt),
            }
        } else if Some(gt.class_name) == neighbor_class(class) {
            ignorable.push(gt);
        }
    }

    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].label.class_name == class_name)
        .collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; countable.len()];
    let mut result = MatchResult {
        num_gt: countable.len(),
        tp: 0,
        fp: 0,
        ignored: 0,
        matched_ious: Vec::new(),
        flags: Vec::new(),
    };

    for det_index in order {
        let det = &dets[det_index];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in countable.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let iou = iou_fn(&det.label, gt);
            if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, iou)) = best {
            gt_taken[gi] = true;
            result.tp += 1;
            result.matched_ious.push(iou);
            result.flags.push(RankedFlag { score: det.score, frame_ord, index: det_index, tp: true });
            continue;
        }

        let overlaps_ignorable = ignorable.iter().any(|gt| iou_fn(&det.label, gt) >= threshold);
        let in_dont_care = || {
            let area = (det.label.bbox2d[2] - det.label.bbox2d[0]).max(0.0)
                * (det.label.bbox2d[3] - det.label.bbox2d[1]).max(0.0);
            area > 0.0
                && dont_care
                    .iter()
                    .any(|dc| bbox2d_intersection(&det.label.bbox2d, &dc.bbox2d) / area > DONT_CARE_COVER)
        };
        if overlaps_ignorable || in_dont_care() {
            result.ignored += 1;
        } else {
            result.fp += 1;
            result.flags.push(RankedFlag { score: det.score, frame_ord, index: det_index, tp: false });
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::geometry::iou_3d;
    use crate::kitti::parse_label_line;

    fn gt(class: &str, height_px: f64, occ: i32, trunc: f64, x: f64) -> Label3D {
        let mut label = parse_label_line(&format!(
            "{class} {trunc} {occ} 0.0 100.0 100.0 150.0 {} 1.6 1.7 4.0 {x} 1.7 20.0 0.0",
            100.0 + height_px
        ))
        .unwrap();
        label.location[0] = x;
        label
    }

    fn det_at(class: &str, x: f64, score: f64) -> Detection {
        Detection { label: gt(class, 50.0, 0, 0.0, x), score }
    }

    const THRESHOLDS: [DifficultyThresholds; 3] = DEFAULT_DIFFICULTY_THRESHOLDS;

    #[test]
    fn difficulty_table_matches_the_benchmark_definition() {
        let easy = gt("Car", 45.0, 0, 0.10, 0.0);
        assert_eq!(assign_difficulty(&easy, &THRESHOLDS), AssignedDifficulty::Level(Difficulty::Easy));
        let moderate = gt("Car", 30.0, 1, 0.20, 0.0);
        assert_eq!(assign_difficulty(&moderate, &THRESHOLDS), AssignedDifficulty::Level(Difficulty::Moderate));
        let hard = gt("Car", 27.0, 2, 0.45, 0.0);
        assert_eq!(assign_difficulty(&hard, &THRESHOLDS), AssignedDifficulty::Level(Difficulty::Hard));
        let ignored = gt("Car", 20.0, 2, 0.40, 0.0);
        assert_eq!(assign_difficulty(&ignored, &THRESHOLDS), AssignedDifficulty::Ignored);
        let unknown_occlusion = gt("Car", 60.0, 3, 0.0, 0.0);
        assert_eq!(assign_difficulty(&unknown_occlusion, &THRESHOLDS), AssignedDifficulty::Ignored);
    }

    #[test]
    fn single_overlapping_detection_is_a_tp() {
        let gts = vec![gt("Car", 50.0, 0, 0.0, 0.0)];
        let dets = vec![det_at("Car", 0.0, 0.9)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp, result.ignored, result.num_gt), (1, 0, 0, 1));
        assert!(result.matched_ious[0] > 0.89);
    }

    #[test]
    fn second_detection_on_the_same_gt_is_an_fp() {
        let gts = vec![gt("Car", 50.0, 0, 0.0, 0.0)];
        // both overlap the GT; only the higher-scored one may take it
        let dets = vec![det_at("Car", 0.0, 0.9), det_at("Car", 0.05, 0.8)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp), (1, 1));
        assert!(result.flags[0].tp && !result.flags[1].tp);
    }

    #[test]
    fn van_overlap_is_ignored_under_car_evaluation() {
        let gts = vec![gt("Van", 50.0, 0, 0.0, 0.0)];
        let dets = vec![det_at("Car", 0.0, 0.9)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp, result.ignored), (0, 0, 1));
    }

    #[test]
    fn harder_gt_does_not_penalize_detections_at_easier_levels() {
        // hard GT (occluded): at Easy it is ignorable, the detection on it
        // must not become an FP
        let gts = vec![gt("Car", 30.0, 2, 0.4, 0.0)];
        let dets = vec![det_at("Car", 0.0, 0.9)];
        let easy = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((easy.tp, easy.fp, easy.ignored, easy.num_gt), (0, 0, 1, 0));
        let hard = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Hard, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((hard.tp, hard.fp, hard.num_gt), (1, 0, 1));
    }

    #[test]
    fn detection_mostly_inside_dont_care_is_ignored() {
        let dont_care =
            parse_label_line("DontCare -1 -1 -10 90.0 90.0 160.0 160.0 -1 -1 -1 -1000 -1000 -1000 -10").unwrap();
        let gts = vec![dont_care];
        // far from any countable GT, 2D box fully inside the DontCare region
        let dets = vec![det_at("Car", 50.0, 0.9)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp, result.ignored), (0, 0, 1));
    }

    #[test]
    fn unrelated_detection_is_an_fp() {
        let gts = vec![gt("Car", 50.0, 0, 0.0, 0.0)];
        let dets = vec![det_at("Car", 50.0, 0.9)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp), (0, 1));
    }

    #[test]
    fn other_class_detections_are_not_considered() {
        let gts = vec![gt("Car", 50.0, 0, 0.0, 0.0)];
        let dets = vec![det_at("Pedestrian", 0.0, 0.9)];
        let result = match_detections(&gts, &dets, TargetClass::Car, Difficulty::Easy, iou_3d, 0.7, &THRESHOLDS, 0);
        assert_eq!((result.tp, result.fp, result.ignored), (0, 0, 0));
        assert_eq!(result.num_gt, 1);
    }
}
