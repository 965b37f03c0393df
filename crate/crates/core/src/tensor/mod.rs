//! Minimal dense rank-4 tensor (batch, channel, height, width) in f64,
//! with exactly the kernels the fusion module needs. Every kernel is pure
//! and deterministic; the differentiable ones come in a recorded-op flavor
//! (see [`ops`]) whose `backward` produces analytic input gradients, checked
//! against central finite differences by [`gradcheck::grad_check`].

pub mod gradcheck;
pub mod ops;

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensor data must be finite")]
    NonFinite,
    #[error("data length {found} does not match shape product {expected}")]
    Length { expected: usize, found: usize },
    #[error("backward called before forward was recorded")]
    State,
    #[error("bad tensor snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense rank-4 tensor, row-major with width fastest. Values are finite by
/// construction and the tensor is immutable after it is built.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::Length { expected, found: data.len() });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        assert!(value.is_finite());
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for b in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f(b, c, h, w));
                    }
                }
            }
        }
        Self::new(shape, data).expect("from_fn produced non-finite values")
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Buffer size in bytes, for memory accounting.
    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(b, c, h, w)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Value-preserving map; used by tests and the toy providers.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Tensor::new(self.shape, data).expect("map produced non-finite values")
    }

    /// Internal constructor for kernel outputs whose finiteness follows from
    /// finite inputs.
    pub(crate) fn from_parts(shape: [usize; 4], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Write the snapshot format: four little-endian u32 dims, then the raw
/// little-endian f64 payload.
pub fn write_snapshot<W: Write>(sink: &mut W, t: &Tensor) -> Result<(), TensorError> {
    for dim in t.shape {
        let dim = u32::try_from(dim).map_err(|_| TensorError::Snapshot(format!("dimension {dim} exceeds u32")))?;
        sink.write_all(&dim.to_le_bytes())?;
    }
    for v in &t.data {
        sink.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read the snapshot format written by [`write_snapshot`].
pub fn read_snapshot<R: Read>(source: &mut R) -> Result<Tensor, TensorError> {
    let mut shape = [0usize; 4];
    let mut buf4 = [0u8; 4];
    for dim in &mut shape {
        source.read_exact(&mut buf4).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => TensorError::Snapshot("truncated header".into()),
            _ => TensorError::Io(e),
        })?;
        *dim = u32::from_le_bytes(buf4) as usize;
    }
    let expected: usize = shape.iter().product();
    let mut data = Vec::with_capacity(expected);
    let mut buf8 = [0u8; 8];
    for _ in 0..expected {
        source.read_exact(&mut buf8).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                TensorError::Snapshot(format!("truncated payload: expected {expected} values, found {}", data.len()))
            }
            _ => TensorError::Io(e),
        })?;
        data.push(f64::from_le_bytes(buf8));
    }
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_data() {
        assert!(matches!(Tensor::new([1, 1, 1, 2], vec![1.0, f64::NAN]), Err(TensorError::NonFinite)));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Tensor::new([1, 1, 2, 2], vec![0.0; 3]),
            Err(TensorError::Length { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn indexing_is_row_major_width_fastest() {
        let t = Tensor::from_fn([2, 3, 4, 5], |b, c, h, w| (b * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.index(0, 0, 0, 1)], 1.0);
        assert_eq!(t.data()[t.index(0, 0, 1, 0)], 10.0);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let t = Tensor::from_fn([1, 2, 3, 4], |b, c, h, w| (b + c * 7 + h * 13 + w * 29) as f64 * 0.37 - 1.5);
        let mut buffer = Vec::new();
        write_snapshot(&mut buffer, &t).unwrap();
        assert_eq!(buffer.len(), 16 + t.len() * 8);
        let back = read_snapshot(&mut buffer.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn snapshot_truncation_reported() {
        let t = Tensor::zeros([1, 1, 2, 2]);
        let mut buffer = Vec::new();
        write_snapshot(&mut buffer, &t).unwrap();
        buffer.truncate(buffer.len() - 3);
        assert!(matches!(read_snapshot(&mut buffer.as_slice()), Err(TensorError::Snapshot(_))));
    }
}
