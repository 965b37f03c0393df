//! Command implementations and the shared error/exit-code mapping.

pub mod encode_priors;
pub mod eval;
pub mod fuse;
pub mod gradcheck;

use std::fmt;

use segfuse_core::netpbm::RgbImage;
use segfuse_core::tensor::Tensor;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent input data (exit 2).
    Data(String),
    /// A verification run found a violation (exit 1).
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Check(_) => 1,
        }
    }

    pub fn data(err: impl fmt::Display) -> Self {
        CliError::Data(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(msg) | CliError::Check(msg) => f.write_str(msg),
        }
    }
}

/// Interleaved 8-bit RGB to a 1x3xHxW tensor in [0, 1].
pub fn rgb_to_tensor(image: &RgbImage) -> Tensor {
    Tensor::from_fn([1, 3, image.height, image.width], |_, c, y, x| {
        image.pixels[(y * image.width + x) * 3 + c] as f64 / 255.0
    })
}
