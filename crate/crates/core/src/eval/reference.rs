//! Slow, independent reference computations used by the test suites: grid
//! rasterization for BEV IoU, voxel counting for 3D IoU and a brute-force
//! PR/AP evaluation. None of these share code with the production paths
//! they check.

use crate::kitti::Label3D;

use super::ap::RankedFlag;
use super::geometry::BevBox;

/// Point-in-rotated-rectangle test via the box frame.
fn inside(b: &BevBox, x: f64, z: f64) -> bool {
    let (dx, dz) = (x - b.center.0, z - b.center.1);
    let (sin, cos) = b.yaw.sin_cos();
    // inverse of the corner rotation used by BevBox
    let local_l = cos * dx - sin * dz;
    let local_w = sin * dx + cos * dz;
    local_l.abs() <= b.size.0 / 2.0 && local_w.abs() <= b.size.1 / 2.0
}

fn joint_bounds(a: &BevBox, b: &BevBox) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut z_min = f64::INFINITY;
    let mut z_max = f64::NEG_INFINITY;
    for corner in a.corners().iter().chain(b.corners().iter()) {
        x_min = x_min.min(corner.0);
        x_max = x_max.max(corner.0);
        z_min = z_min.min(corner.1);
        z_max = z_max.max(corner.1);
    }
    (x_min, x_max, z_min, z_max)
}

fn aabbs_disjoint(a: &BevBox, b: &BevBox) -> bool {
    let bounds = |bx: &BevBox| {
        let corners = bx.corners();
        let xs = corners.iter().map(|c| c.0);
        let zs = corners.iter().map(|c| c.1);
        (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
            zs.clone().fold(f64::INFINITY, f64::min),
            zs.fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (ax0, ax1, az0, az1) = bounds(a);
    let (bx0, bx1, bz0, bz1) = bounds(b);
    ax1 < bx0 || bx1 < ax0 || az1 < bz0 || bz1 < az0
}

/// BEV IoU by counting cell centers of a `grid x grid` lattice spanning the
/// joint bounding region: IoU = |in both| / |in either|.
///
/// When the axis-aligned bounds of the two boxes are disjoint no cell can
/// lie in both, so the result is exactly zero without scanning.
pub fn bev_iou_raster(a: &BevBox, b: &BevBox, grid: usize) -> f64 {
    if aabbs_disjoint(a, b) {
        return 0.0;
    }
    let (x_min, x_max, z_min, z_max) = joint_bounds(a, b);
    let dx = (x_max - x_min) / grid as f64;
    let dz = (z_max - z_min) / grid as f64;
    let mut both = 0u64;
    let mut any = 0u64;
    for iz in 0..grid {
        let z = z_min + (iz as f64 + 0.5) * dz;
        for ix in 0..grid {
            let x = x_min + (ix as f64 + 0.5) * dx;
            let in_a = inside(a, x, z);
            let in_b = inside(b, x, z);
            both += (in_a && in_b) as u64;
            any += (in_a || in_b) as u64;
        }
    }
    if any == 0 {
        return 0.0;
    }
    both as f64 / any as f64
}

/// 3D IoU by voxel counting on a `grid^3` lattice spanning the joint
/// bounding volume.
pub fn iou_3d_voxel(a: &Label3D, b: &Label3D, grid: usize) -> f64 {
    let bev_a = BevBox::from_label(a);
    let bev_b = BevBox::from_label(b);
    let (x_min, x_max, z_min, z_max) = joint_bounds(&bev_a, &bev_b);
    let y_lo = (a.location[1] - a.dims3d[0]).min(b.location[1] - b.dims3d[0]);
    let y_hi = a.location[1].max(b.location[1]);
    let dx = (x_max - x_min) / grid as f64;
    let dy = (y_hi - y_lo) / grid as f64;
    let dz = (z_max - z_min) / grid as f64;
    let in_y = |label: &Label3D, y: f64| y >= label.location[1] - label.dims3d[0] && y <= label.location[1];
    let mut both = 0u64;
    let mut any = 0u64;
    for iy in 0..grid {
        let y = y_lo + (iy as f64 + 0.5) * dy;
        let a_y = in_y(a, y);
        let b_y = in_y(b, y);
        if !a_y && !b_y {
            continue;
        }
        for iz in 0..grid {
            let z = z_min + (iz as f64 + 0.5) * dz;
            for ix in 0..grid {
                let x = x_min + (ix as f64 + 0.5) * dx;
                let in_a = a_y && inside(&bev_a, x, z);
                let in_b = b_y && inside(&bev_b, x, z);
                both += (in_a && in_b) as u64;
                any += (in_a || in_b) as u64;
            }
        }
    }
    if any == 0 {
        return 0.0;
    }
    both as f64 / any as f64
}

/// Brute-force AP|R40 from a score-ordered flag list: for each of the 40
/// recall points, scan every prefix of the ranking, recompute precision and
/// recall from scratch, and keep the best precision at recall >= r.
pub fn naive_ap_r40(flags: &[RankedFlag], num_gt: usize) -> f64 {
    assert!(num_gt >= 1, "caller must handle the empty-GT case");
    let mut total = 0.0;
    for k in 1..=40 {
        let r = k as f64 / 40.0;
        let mut best = 0.0f64;
        for prefix in 1..=flags.len() {
            let tp = flags[..prefix].iter().filter(|f| f.tp).count();
            let recall = tp as f64 / num_gt as f64;
            let precision = tp as f64 / prefix as f64;
            if recall >= r {
                best = best.max(precision);
            }
        }
        total += best;
    }
    100.0 * total / 40.0
}
