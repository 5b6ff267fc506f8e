//! Bounding box to pixel mask: backend call, sub-part merge, RLE persistence.

mod backend;
mod mask;
mod rle;

use serde::{Deserialize, Serialize};

pub use backend::{
    HttpSegmentBackend, RecordedBackend, RecordedSegmentation, RectangleStub, SegmentBackend,
};
pub use mask::{BinaryMask, RleMask};
pub use rle::{rle_decode, rle_encode};

use crate::geodata::{BBox, ImageChip};

/// A part is merged only if strictly more than this many of its pixels lie in the box.
pub const PART_OVERLAP_THRESHOLD: usize = 80;

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("segmentation backend error: {0}")]
    Backend(String),
    #[error("mask is {got:?}, expected {expected:?} (width, height)")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("RLE counts sum to {got}, expected {expected}")]
    RleLength { expected: usize, got: u64 },
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
}

/// Automatic mask generator settings forwarded to the segmentation backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamConfig {
    pub points_per_side: u32,
    pub pred_iou_thresh: f64,
    pub stability_score_thresh: f64,
    pub min_mask_region_area: u32,
}

impl Default for SamConfig {
    fn default() -> Self {
        Self {
            points_per_side: 128,
            pred_iou_thresh: 0.95,
            stability_score_thresh: 0.95,
            min_mask_region_area: 80,
        }
    }
}

impl SamConfig {
    pub fn validate(&self) -> Result<(), MaskError> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.pred_iou_thresh) || !unit(self.stability_score_thresh) {
            return Err(MaskError::InvalidConfig(
                "thresholds must be in (0, 1]".into(),
            ));
        }
        if self.points_per_side == 0 || self.min_mask_region_area == 0 {
            return Err(MaskError::InvalidConfig(
                "integer settings must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPart {
    pub mask: BinaryMask,
    pub overlap_with_bbox: usize,
}

impl MaskPart {
    pub fn new(mask: BinaryMask, bbox: &BBox) -> Self {
        let overlap_with_bbox = mask.area_within(bbox);
        Self {
            mask,
            overlap_with_bbox,
        }
    }
}

/// Asks `backend` for the parts of `bbox` and measures each part's overlap with it.
pub fn segment_bbox(
    backend: &dyn SegmentBackend,
    chip: &ImageChip,
    bbox: &BBox,
    cfg: &SamConfig,
) -> Result<Vec<MaskPart>, MaskError> {
    let expected = (chip.width as usize, chip.height as usize);
    backend
        .segment(chip, bbox, cfg)?
        .into_iter()
        .map(|m| {
            if m.dims() != expected {
                return Err(MaskError::ShapeMismatch {
                    expected,
                    got: m.dims(),
                });
            }
            Ok(MaskPart::new(m, bbox))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedMask {
    pub mask: BinaryMask,
    /// No part qualified; the record must not enter the dataset.
    pub degenerate: bool,
    pub parts_used: usize,
}

/// Union of every part with more than [`PART_OVERLAP_THRESHOLD`] pixels inside the box.
pub fn merge_parts(
    parts: &[MaskPart],
    width: usize,
    height: usize,
) -> Result<MergedMask, MaskError> {
    let mut mask = BinaryMask::new(width, height);
    let mut parts_used = 0;
    for p in parts {
        if p.mask.dims() != (width, height) {
            return Err(MaskError::ShapeMismatch {
                expected: (width, height),
                got: p.mask.dims(),
            });
        }
        if p.overlap_with_bbox > PART_OVERLAP_THRESHOLD {
            mask.union_with(&p.mask);
            parts_used += 1;
        }
    }
    Ok(MergedMask {
        degenerate: parts_used == 0,
        mask,
        parts_used,
    })
}

/// One line of the mask JSON-Lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub detection_id: String,
    pub width: usize,
    pub height: usize,
    pub rle_counts: Vec<u64>,
    #[serde(default)]
    pub degenerate: bool,
}

impl MaskRecord {
    pub fn new(detection_id: impl Into<String>, mask: &BinaryMask, degenerate: bool) -> Self {
        Self {
            detection_id: detection_id.into(),
            width: mask.width(),
            height: mask.height(),
            rle_counts: rle_encode(mask),
            degenerate,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask, MaskError> {
        rle_decode(&self.rle_counts, self.width, self.height)
    }
}
