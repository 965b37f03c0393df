//! KITTI 3D Object Detection text formats: ground-truth labels (15 fields
//! per line), detection results (16 fields, trailing confidence score) and
//! calibration files (key-prefixed matrix lines).
//!
//! Parsing is strict: unknown class names, wrong arity, non-finite numbers
//! and invariant violations on non-DontCare records are all rejected.
//! Emission uses 6 decimal places so that `parse(format(x))` is the
//! identity within 1e-6 per field.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Slack applied to interval checks so values that were rounded to six
/// decimals at the boundary (e.g. alpha = pi emitted as "3.141593") still
/// re-parse as valid.
const BOUNDARY_SLACK: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field `{field}`: cannot parse `{token}` as a finite number")]
    Numeric { field: &'static str, token: String },
    #[error("field `{field}`: {message}")]
    Range { field: &'static str, message: String },
    #[error("unknown class name `{0}`")]
    UnknownClass(String),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
}

/// Object category of a KITTI ground-truth record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ClassName {
    Car,
    Van,
    Truck,
    Pedestrian,
    PersonSitting,
    Cyclist,
    Tram,
    Misc,
    DontCare,
}

impl ClassName {
    pub const ALL: [ClassName; 9] = [
        ClassName::Car,
        ClassName::Van,
        ClassName::Truck,
        ClassName::Pedestrian,
        ClassName::PersonSitting,
        ClassName::Cyclist,
        ClassName::Tram,
        ClassName::Misc,
        ClassName::DontCare,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassName::Car => "Car",
            ClassName::Van => "Van",
            ClassName::Truck => "Truck",
            ClassName::Pedestrian => "Pedestrian",
            ClassName::PersonSitting => "Person_sitting",
            ClassName::Cyclist => "Cyclist",
            ClassName::Tram => "Tram",
            ClassName::Misc => "Misc",
            ClassName::DontCare => "DontCare",
        }
    }
}

impl FromStr for ClassName {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        ClassName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseError::UnknownClass(s.to_string()))
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three categories that receive priors and are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum TargetClass {
    Car,
    Pedestrian,
    Cyclist,
}

impl TargetClass {
    pub const ALL: [TargetClass; 3] = [TargetClass::Car, TargetClass::Pedestrian, TargetClass::Cyclist];

    pub fn class_name(&self) -> ClassName {
        match self {
            TargetClass::Car => ClassName::Car,
            TargetClass::Pedestrian => ClassName::Pedestrian,
            TargetClass::Cyclist => ClassName::Cyclist,
        }
    }

    pub fn as_str(&self) -> &'static str {
        self.class_name().as_str()
    }
}

impl FromStr for TargetClass {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        TargetClass::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseError::UnknownClass(s.to_string()))
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One KITTI ground-truth object record.
///
/// DontCare records keep their sentinel fields (truncation −1, occlusion −1,
/// angles −10, dims −1, location −1000); all other classes are validated
/// against the geometric invariants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Label3D {
    pub class_name: ClassName,
    /// Fraction of the object outside image borders, in [0, 1].
    pub truncation: f64,
    /// 0 visible, 1 semi-occluded, 2 fully occluded, 3 unknown.
    pub occlusion: i32,
    /// Observation angle, radians in [−pi, pi].
    pub alpha: f64,
    /// 2D box (left, top, right, bottom) in pixels.
    pub bbox2d: [f64; 4],
    /// 3D extents (height, width, length) in meters.
    pub dims3d: [f64; 3],
    /// Bottom-center of the 3D box (x, y, z) in the camera frame, meters.
    pub location: [f64; 3],
    /// Yaw around the camera y axis, radians in [−pi, pi].
    pub rotation_y: f64,
}

impl Label3D {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == ClassName::DontCare
    }

    /// 2D box height in pixels; drives the difficulty assignment.
    pub fn bbox_height(&self) -> f64 {
        self.bbox2d[3] - self.bbox2d[1]
    }

    fn validate(&self) -> Result<(), ParseError> {
        let range = |field, message: String| Err(ParseError::Range { field, message });
        if self.bbox2d[2] < self.bbox2d[0] - BOUNDARY_SLACK {
            return range("bbox2d", format!("right {} < left {}", self.bbox2d[2], self.bbox2d[0]));
        }
        if self.bbox2d[3] < self.bbox2d[1] - BOUNDARY_SLACK {
            return range("bbox2d", format!("bottom {} < top {}", self.bbox2d[3], self.bbox2d[1]));
        }
        if self.is_dont_care() {
            return Ok(());
        }
        if !(-BOUNDARY_SLACK..=1.0 + BOUNDARY_SLACK).contains(&self.truncation) {
            return range("truncation", format!("{} outside [0, 1]", self.truncation));
        }
        if !(0..=3).contains(&self.occlusion) {
            return range("occlusion", format!("{} outside {{0, 1, 2, 3}}", self.occlusion));
        }
        let pi = std::f64::consts::PI + BOUNDARY_SLACK;
        if !(-pi..=pi).contains(&self.alpha) {
            return range("alpha", format!("{} outside [-pi, pi]", self.alpha));
        }
        if !(-pi..=pi).contains(&self.rotation_y) {
            return range("rotation_y", format!("{} outside [-pi, pi]", self.rotation_y));
        }
        if self.dims3d.iter().any(|&d| d <= 0.0) {
            return range("dims3d", format!("{:?} must be positive", self.dims3d));
        }
        Ok(())
    }
}

/// A detector output record: a [`Label3D`] plus a confidence score.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Detection {
    pub label: Label3D,
    pub score: f64,
}

/// Camera-2 projection matrix from a KITTI calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Calib {
    /// 3x4 projection matrix, row-major.
    pub p2: [[f64; 4]; 3],
}

fn parse_finite(field: &'static str, token: &str) -> Result<f64, ParseError> {
    let value: f64 = token.parse().map_err(|_| ParseError::Numeric {
        field,
        token: token.to_string(),
    })?;
    if !value.is_finite() {
        return Err(ParseError::Numeric {
            field,
            token: token.to_string(),
        });
    }
    Ok(value)
}

/// Occlusion appears as "0" in ground truth but "0.00" in some result
/// files; accept any numeric token that is integral.
fn parse_occlusion(token: &str) -> Result<i32, ParseError> {
    let value = parse_finite("occlusion", token)?;
    let rounded = value.round();
    if (value - rounded).abs() > BOUNDARY_SLACK || !(-1.0..=3.0).contains(&rounded) {
        return Err(ParseError::Range {
            field: "occlusion",
            message: format!("{token} is not one of {{-1, 0, 1, 2, 3}}"),
        });
    }
    Ok(rounded as i32)
}

fn label_from_tokens(tokens: &[&str]) -> Result<Label3D, ParseError> {
    let class_name: ClassName = tokens[0].parse()?;
    let label = Label3D {
        class_name,
        truncation: parse_finite("truncation", tokens[1])?,
        occlusion: parse_occlusion(tokens[2])?,
        alpha: parse_finite("alpha", tokens[3])?,
        bbox2d: [
            parse_finite("bbox2d.left", tokens[4])?,
            parse_finite("bbox2d.top", tokens[5])?,
            parse_finite("bbox2d.right", tokens[6])?,
            parse_finite("bbox2d.bottom", tokens[7])?,
        ],
        dims3d: [
            parse_finite("dims3d.height", tokens[8])?,
            parse_finite("dims3d.width", tokens[9])?,
            parse_finite("dims3d.length", tokens[10])?,
        ],
        location: [
            parse_finite("location.x", tokens[11])?,
            parse_finite("location.y", tokens[12])?,
            parse_finite("location.z", tokens[13])?,
        ],
        rotation_y: parse_finite("rotation_y", tokens[14])?,
    };
    label.validate()?;
    Ok(label)
}

/// Parse one 15-field ground-truth label line.
pub fn parse_label_line(line: &str) -> Result<Label3D, ParseError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 15 {
        return Err(ParseError::FieldCount {
            expected: 15,
            found: tokens.len(),
        });
    }
    label_from_tokens(&tokens)
}

/// Parse one 16-field detection line (label fields plus trailing score).
pub fn parse_detection_line(line: &str) -> Result<Detection, ParseError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 16 {
        return Err(ParseError::FieldCount {
            expected: 16,
            found: tokens.len(),
        });
    }
    let label = label_from_tokens(&tokens[..15])?;
    let score = parse_finite("score", tokens[15])?;
    Ok(Detection { label, score })
}

/// Parse a calibration block; only the camera-2 projection (`P2:` line,
/// 12 values) is extracted.
pub fn parse_calib(text_block: &str) -> Result<Calib, ParseError> {
    let line = text_block
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("P2:"))
        .ok_or(ParseError::MissingKey("P2"))?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 12 {
        return Err(ParseError::Numeric {
            field: "P2",
            token: format!("expected 12 values, found {}", tokens.len()),
        });
    }
    let mut p2 = [[0.0; 4]; 3];
    for (i, token) in tokens.iter().enumerate() {
        p2[i / 4][i % 4] = parse_finite("P2", token)?;
    }
    if p2[0][0] <= 0.0 || p2[1][1] <= 0.0 {
        return Err(ParseError::Range {
            field: "P2",
            message: format!("focal lengths must be positive, got {} and {}", p2[0][0], p2[1][1]),
        });
    }
    Ok(Calib { p2 })
}

fn push_fields(out: &mut String, label: &Label3D) {
    use fmt::Write;
    write!(
        out,
        "{} {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        label.class_name,
        label.truncation,
        label.occlusion,
        label.alpha,
        label.bbox2d[0],
        label.bbox2d[1],
        label.bbox2d[2],
        label.bbox2d[3],
        label.dims3d[0],
        label.dims3d[1],
        label.dims3d[2],
        label.location[0],
        label.location[1],
        label.location[2],
        label.rotation_y,
    )
    .expect("write to String cannot fail");
}

/// Emit one label record (no trailing newline).
pub fn format_label(label: &Label3D) -> String {
    let mut out = String::new();
    push_fields(&mut out, label);
    out
}

/// Emit one detection record (no trailing newline).
pub fn format_detection(d: &Detection) -> String {
    use fmt::Write;
    let mut out = String::new();
    push_fields(&mut out, &d.label);
    write!(out, " {:.6}", d.score).expect("write to String cannot fail");
    out
}

/// Emit a calibration block containing the `P2:` line.
pub fn format_calib(c: &Calib) -> String {
    let values: Vec<String> = c
        .p2
        .iter()
        .flat_map(|row| row.iter())
        .map(|v| format!("{v:.6}"))
        .collect();
    format!("P2: {}\n", values.join(" "))
}

/// Parse a whole label file; blank lines are skipped.
pub fn parse_label_file(contents: &str) -> Result<Vec<Label3D>, ParseError> {
    contents
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_label_line)
        .collect()
}

/// Parse a whole detection file; blank lines are skipped.
pub fn parse_detection_file(contents: &str) -> Result<Vec<Detection>, ParseError> {
    contents
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_detection_line)
        .collect()
}

/// Emit a detection file with newline-terminated records.
pub fn format_detection_file(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        out.push_str(&format_detection(d));
        out.push('\n');
    }
    out
}

/// Emit a label file with newline-terminated records.
pub fn format_label_file(labels: &[Label3D]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&format_label(l));
        out.push('\n');
    }
    out
}
