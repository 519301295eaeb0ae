//! Point cloud containers shared by every stage of the pipeline.

use alloc::string::String;
use alloc::vec::Vec;

/// One raw LiDAR return. Coordinates are meters; `z` is height.
///
/// Parsing is the single sanitization point: anything reaching the pipeline
/// is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Ordered point container. Indices into `points` are the stable per-point
/// identifiers used by the whole pipeline; order is preserved from the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            frame_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point classification verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label {
    Ground,
    Obstacle,
    /// Point fell outside the radial range, or its segment could not be
    /// trained (too few candidates or a numerical failure).
    Unassigned,
}

impl Label {
    /// CSV/file encoding: ground 1, obstacle 0, unassigned -1.
    pub fn to_code(self) -> i8 {
        match self {
            Label::Ground => 1,
            Label::Obstacle => 0,
            Label::Unassigned => -1,
        }
    }

    pub fn from_code(code: i8) -> Option<Label> {
        match code {
            1 => Some(Label::Ground),
            0 => Some(Label::Obstacle),
            -1 => Some(Label::Unassigned),
            _ => None,
        }
    }
}

/// Pipeline output, parallel to the input cloud index-for-index.
///
/// `z_bar`, `variance`, `d_stat` hold the posterior ground height, its
/// variance, and the normalized deviation used by the classifier; they are
/// NaN exactly where the label is `Unassigned`. `segment_of` records which
/// angular segment judged each point (`None` for points outside the radial
/// range), enabling per-segment metric breakdowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub labels: Vec<Label>,
    pub z_bar: Vec<f64>,
    pub variance: Vec<f64>,
    pub d_stat: Vec<f64>,
    pub segment_of: Vec<Option<u32>>,
}

impl LabeledCloud {
    /// All-`Unassigned` skeleton for `n` points.
    pub fn unassigned(n: usize) -> Self {
        LabeledCloud {
            labels: alloc::vec![Label::Unassigned; n],
            z_bar: alloc::vec![f64::NAN; n],
            variance: alloc::vec![f64::NAN; n],
            d_stat: alloc::vec![f64::NAN; n],
            segment_of: alloc::vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
