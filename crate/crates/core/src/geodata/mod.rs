//! Detection ingest, chipping, quadrant filters, class statistics and splits.

mod chip;
mod filter;
mod ingest;
mod split;
mod stats;
pub mod xview;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use chip::{chip, ChipOutput, ImageSize};
pub use filter::{filter_candidates, is_interesting, is_unique, quadrant_of, FilterParams};
pub use ingest::{ingest_detections, IngestFormat, IngestOutput, RecordError};
pub use split::{make_splits, Split, SplitAssignment, DEFAULT_SPLIT_RATIOS};
pub use stats::{compute_class_stats, ClassStats};

/// Default chip edge length in pixels.
pub const DEFAULT_CHIP_SIZE: u32 = 512;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("invalid {format} document: {message}")]
    Document {
        format: &'static str,
        message: String,
    },
    #[error("source image {image_id} has invalid dimensions {width}x{height}")]
    InvalidImageSize {
        image_id: String,
        width: u32,
        height: u32,
    },
    #[error("no dimensions known for source image {0}")]
    MissingImageSize(String),
    #[error("invalid chipping parameters: {0}")]
    InvalidChipParams(String),
    #[error("class {0:?} is absent from the corpus statistics")]
    ClassNotInStats(String),
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("need at least 3 chips to form train/val/test splits, got {0}")]
    TooFewChips(usize),
}

/// Axis-aligned pixel box, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box from corner form `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    /// Intersection with another box; `None` when they do not overlap.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = self.right().min(other.right());
        let y2 = self.bottom().min(other.bottom());
        (x2 > x1 && y2 > y1).then(|| BBox::from_corners(x1, y1, x2, y2))
    }

    pub fn translate(&self, dx: i64, dy: i64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}

impl From<[i64; 4]> for BBox {
    fn from(v: [i64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// A detection as read from an annotation source, before chipping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDetection {
    pub detection_id: String,
    pub image_id: String,
    pub class_name: String,
    pub bbox: BBox,
}

/// A tile cut from a source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageChip {
    pub chip_id: String,
    pub source_image_id: String,
    pub origin: (u32, u32),
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_uri: Option<String>,
}

impl ImageChip {
    pub fn bounds(&self) -> BBox {
        BBox::new(0, 0, self.width as i64, self.height as i64)
    }
}

/// A chip-local detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub detection_id: String,
    pub chip_id: String,
    pub class_name: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    /// Location phrase as used in generated queries.
    pub fn phrase(self) -> &'static str {
        match self {
            Quadrant::TopLeft => "top-left",
            Quadrant::TopRight => "top-right",
            Quadrant::BottomLeft => "bottom-left",
            Quadrant::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

/// Trims and collapses internal whitespace runs in a class label.
pub fn normalize_class_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_conversion() {
        assert_eq!(
            BBox::from_corners(10, 20, 50, 60),
            BBox::new(10, 20, 40, 40)
        );
        assert!(BBox::from_corners(10, 20, 10, 60).is_degenerate());
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = BBox::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        assert_eq!(serde_json::from_str::<BBox>("[1,2,3,4]").unwrap(), b);
        assert_eq!(b.to_string(), "[1, 2, 3, 4]");
    }

    #[test]
    fn class_name_normalization() {
        assert_eq!(normalize_class_name("  Small   Car \t"), "Small Car");
        assert_eq!(normalize_class_name("   "), "");
    }
}
