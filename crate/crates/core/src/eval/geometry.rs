//! Rotated-box overlap in the ground plane and in 3D.
//!
//! BEV boxes are convex quadrilaterals in the camera (x, z) plane; the
//! intersection area comes from Sutherland–Hodgman clipping plus the
//! shoelace formula. 3D IoU multiplies the BEV intersection by the overlap
//! of the vertical extents (KITTI convention: the box location is the
//! bottom-face center, y points down).

use crate::kitti::Label3D;

/// Top-down footprint of a 3D box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevBox {
    /// Center (x, z) in meters.
    pub center: (f64, f64),
    /// (length, width) in meters; length runs along the heading.
    pub size: (f64, f64),
    /// Yaw around the vertical axis, radians.
    pub yaw: f64,
}

impl BevBox {
    pub fn area(&self) -> f64 {
        self.size.0 * self.size.1
    }

    /// Corners in counter-clockwise order in the (x, z) plane.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (hl, hw) = (self.size.0 / 2.0, self.size.1 / 2.0);
        let (sin, cos) = self.yaw.sin_cos();
        let rotate = |dx: f64, dz: f64| {
            (
                self.center.0 + cos * dx + sin * dz,
                self.center.1 - sin * dx + cos * dz,
            )
        };
        [
            rotate(hl, hw),
            rotate(-hl, hw),
            rotate(-hl, -hw),
            rotate(hl, -hw),
        ]
    }

    /// Footprint of a KITTI label: (x, z) center, (length, width) extents,
    /// rotation_y heading.
    pub fn from_label(label: &Label3D) -> Self {
        Self {
            center: (label.location[0], label.location[2]),
            size: (label.dims3d[2], label.dims3d[1]),
            yaw: label.rotation_y,
        }
    }
}

/// Clip `subject` against one directed edge (a -> b) of a convex
/// counter-clockwise clip polygon; points on the left side (inclusive) stay.
fn clip_against_edge(subject: &[(f64, f64)], a: (f64, f64), b: (f64, f64)) -> Vec<(f64, f64)> {
    let side = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let mut out = Vec::with_capacity(subject.len() + 2);
    for (i, &current) in subject.iter().enumerate() {
        let previous = subject[(i + subject.len() - 1) % subject.len()];
        let side_current = side(current);
        let side_previous = side(previous);
        let crosses = (side_current < 0.0) != (side_previous < 0.0);
        if crosses {
            let t = side_previous / (side_previous - side_current);
            out.push((
                previous.0 + t * (current.0 - previous.0),
                previous.1 + t * (current.1 - previous.1),
            ));
        }
        if side_current >= 0.0 {
            out.push(current);
        }
    }
    out
}

/// Sutherland–Hodgman intersection of a polygon with a convex CCW clip
/// polygon.
pub fn clip_polygon(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut polygon = subject.to_vec();
    for i in 0..clip.len() {
        if polygon.is_empty() {
            break;
        }
        polygon = clip_against_edge(&polygon, clip[i], clip[(i + 1) % clip.len()]);
    }
    polygon
}

/// Shoelace area; sign-free.
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, &(x0, z0)) in points.iter().enumerate() {
        let (x1, z1) = points[(i + 1) % points.len()];
        twice += x0 * z1 - x1 * z0;
    }
    twice.abs() / 2.0
}

/// Intersection area of two BEV boxes.
pub fn bev_intersection(a: &BevBox, b: &BevBox) -> f64 {
    clip_area(&a.corners(), &b.corners())
}

fn clip_area(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> f64 {
    polygon_area(&clip_polygon(subject, clip))
}

/// Bird's-eye-view IoU of two rotated boxes, in [0, 1].
pub fn bev_iou(a: &BevBox, b: &BevBox) -> f64 {
    let intersection = bev_intersection(a, b);
    let union = a.area() + b.area() - intersection;
    if union <= 0.0 {
        return 0.0;
    }
    (intersection / union).clamp(0.0, 1.0)
}

/// Vertical extent `[y - h, y]` of a KITTI box (y points down, the location
/// is the bottom face).
fn y_interval(label: &Label3D) -> (f64, f64) {
    (label.location[1] - label.dims3d[0], label.location[1])
}

/// 3D IoU: BEV intersection times the overlap of the vertical extents.
pub fn iou_3d(a: &Label3D, b: &Label3D) -> f64 {
    let bev_a = BevBox::from_label(a);
    let bev_b = BevBox::from_label(b);
    let (a_lo, a_hi) = y_interval(a);
    let (b_lo, b_hi) = y_interval(b);
    let overlap_y = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let intersection = bev_intersection(&bev_a, &bev_b) * overlap_y;
    let vol_a = bev_a.area() * a.dims3d[0];
    let vol_b = bev_b.area() * b.dims3d[0];
    let union = vol_a + vol_b - intersection;
    if union <= 0.0 {
        return 0.0;
    }
    (intersection / union).clamp(0.0, 1.0)
}

/// BEV IoU of two labels, threshold-compatible with [`iou_3d`].
pub fn bev_iou_labels(a: &Label3D, b: &Label3D) -> f64 {
    bev_iou(&BevBox::from_label(a), &BevBox::from_label(b))
}

/// Axis-aligned 2D intersection area of two `(left, top, right, bottom)`
/// boxes; used for the DontCare-region test.
pub fn bbox2d_intersection(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    w * h
}
