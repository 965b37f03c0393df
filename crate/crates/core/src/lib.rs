//! Segmentation-guided feature fusion for monocular 3D detection, plus the
//! full KITTI 3D-object-detection evaluation protocol.
//!
//! The crate is organized around the data flow:
//!
//! 1. **kitti** – parse/emit KITTI label, detection and calibration files.
//! 2. **prior** – turn externally produced instance masks into a class-wise
//!    grayscale prior map, stored as binary PGM.
//! 3. **transform** – apply one shared affine resampling pass to an RGB
//!    image and its prior so they stay pixel-aligned.
//! 4. **tensor** – a minimal rank-4 f64 tensor with exactly the kernels the
//!    fusion module needs, each with an analytic backward pass and a
//!    finite-difference checker.
//! 5. **fusion** – the fusion module (multiply / concat / attention) wired
//!    around a deterministic toy backbone and aggregator, with three
//!    injection points.
//! 6. **eval** – rotated-box IoU, detection/GT matching with difficulty
//!    filtering, AP|R40, AP_BEV and per-image AP variance, emitted as
//!    text/CSV/JSON reports.

pub mod eval;
pub mod fusion;
pub mod kitti;
pub mod netpbm;
pub mod prior;
pub mod tensor;
pub mod transform;

mod seeds;

pub use tensor::Tensor;
