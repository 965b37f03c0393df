//! Class-wise grayscale semantic prior maps.
//!
//! Instance masks produced by any segmentation source are flattened into a
//! single 8-bit map where each category paints a fixed gray intensity and
//! overlaps are resolved by a fixed class priority, so the result is
//! independent of mask order. Maps round-trip bit-exactly through binary
//! PGM (P5, maxval 255).

use std::io::{Read, Write};

use thiserror::Error;

use crate::kitti::TargetClass;
use crate::netpbm::{self, GrayImage, NetpbmError};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("mask `{source_tag}` is {mask_width}x{mask_height}, expected {expected_width}x{expected_height}")]
    DimensionMismatch {
        source_tag: String,
        mask_width: usize,
        mask_height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("intensity table: {0}")]
    BadIntensityTable(String),
    #[error(transparent)]
    Netpbm(#[from] NetpbmError),
}

/// Gray value per category. Background is always 0.
///
/// The defaults space the three categories evenly across the 8-bit range so
/// they stay well separated after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IntensityTable {
    pub car: u8,
    pub pedestrian: u8,
    pub cyclist: u8,
}

impl Default for IntensityTable {
    fn default() -> Self {
        Self { car: 85, pedestrian: 170, cyclist: 255 }
    }
}

impl IntensityTable {
    pub fn intensity(&self, class: TargetClass) -> u8 {
        match class {
            TargetClass::Car => self.car,
            TargetClass::Pedestrian => self.pedestrian,
            TargetClass::Cyclist => self.cyclist,
        }
    }

    /// All values a map built with this table may contain (incl. background).
    pub fn value_set(&self) -> [u8; 4] {
        [0, self.car, self.pedestrian, self.cyclist]
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let values = [self.car, self.pedestrian, self.cyclist];
        if values.contains(&0) {
            return Err(PriorError::BadIntensityTable("class intensities must be non-zero".into()));
        }
        if values[0] == values[1] || values[0] == values[2] || values[1] == values[2] {
            return Err(PriorError::BadIntensityTable("class intensities must be distinct".into()));
        }
        Ok(())
    }
}

/// One binary instance mask from an external segmentation source.
#[derive(Debug, Clone)]
pub struct InstanceMask {
    pub class_name: TargetClass,
    pub width: usize,
    pub height: usize,
    /// Row-major coverage flags, `width * height` entries.
    pub mask: Vec<bool>,
    /// Free-text producer tag (network name, "gt", ...).
    pub source: String,
}

impl InstanceMask {
    /// Interpret a gray image as a binary mask: any non-zero pixel covers.
    pub fn from_gray(class_name: TargetClass, image: &GrayImage, source: impl Into<String>) -> Self {
        Self {
            class_name,
            width: image.width,
            height: image.height,
            mask: image.pixels.iter().map(|&p| p != 0).collect(),
            source: source.into(),
        }
    }
}

/// Single-channel 8-bit class-wise prior map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayPriorMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub intensity_table: IntensityTable,
}

impl GrayPriorMap {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Overlap priority: rarer, smaller categories win so they are never
/// painted over by larger ones.
fn priority(class: TargetClass) -> u8 {
    match class {
        TargetClass::Car => 1,
        TargetClass::Pedestrian => 2,
        TargetClass::Cyclist => 3,
    }
}

fn class_of_priority(rank: u8) -> TargetClass {
    match rank {
        1 => TargetClass::Car,
        2 => TargetClass::Pedestrian,
        _ => TargetClass::Cyclist,
    }
}

/// Flatten instance masks into one prior map.
///
/// Background stays 0; a pixel covered by several masks gets the intensity
/// of the highest-priority class, so the result does not depend on the
/// order of `masks`. Masks of the same class union together.
pub fn encode_semantic_map(
    masks: &[InstanceMask],
    width: usize,
    height: usize,
) -> Result<GrayPriorMap, PriorError> {
    encode_semantic_map_with(masks, width, height, IntensityTable::default())
}

/// [`encode_semantic_map`] with a custom intensity table.
pub fn encode_semantic_map_with(
    masks: &[InstanceMask],
    width: usize,
    height: usize,
    table: IntensityTable,
) -> Result<GrayPriorMap, PriorError> {
    table.validate()?;
    let mut ranks = vec![0u8; width * height];
    for mask in masks {
        if mask.width != width || mask.height != height {
            return Err(PriorError::DimensionMismatch {
                source_tag: mask.source.clone(),
                mask_width: mask.width,
                mask_height: mask.height,
                expected_width: width,
                expected_height: height,
            });
        }
        let rank = priority(mask.class_name);
        for (slot, &covered) in ranks.iter_mut().zip(&mask.mask) {
            if covered && rank > *slot {
                *slot = rank;
            }
        }
    }
    let pixels = ranks
        .into_iter()
        .map(|rank| if rank == 0 { 0 } else { table.intensity(class_of_priority(rank)) })
        .collect();
    Ok(GrayPriorMap { width, height, pixels, intensity_table: table })
}

/// Write the map as binary PGM (P5, maxval 255).
pub fn write_pgm<W: Write>(map: &GrayPriorMap, sink: &mut W) -> Result<(), PriorError> {
    let image = GrayImage { width: map.width, height: map.height, pixels: map.pixels.clone() };
    netpbm::write_p5(sink, &image)?;
    Ok(())
}

/// Read a binary PGM back into a map. The intensity table is not stored in
/// the file; the default table is assumed.
pub fn read_pgm<R: Read>(source: &mut R) -> Result<GrayPriorMap, PriorError> {
    let image = netpbm::read_p5(source)?;
    Ok(GrayPriorMap {
        width: image.width,
        height: image.height,
        pixels: image.pixels,
        intensity_table: IntensityTable::default(),
    })
}

/// Lift the map into a 1x1xHxW tensor with values in [0, 1] (pixel / 255).
pub fn map_to_tensor(map: &GrayPriorMap) -> Tensor {
    let data = map.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Tensor::new([1, 1, map.height, map.width], data).expect("u8 pixels are finite")
}
