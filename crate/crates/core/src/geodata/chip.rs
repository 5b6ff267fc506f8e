use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BBox, Detection, GeoError, ImageChip, RawDetection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Default, Clone)]
pub struct ChipOutput {
    pub chips: Vec<ImageChip>,
    pub detections: Vec<Detection>,
    /// Source images (or their detections) that could not be tiled.
    pub rejected: Vec<(String, String)>,
    /// Clamped copies that kept less than the minimum area fraction.
    pub dropped_clamped: usize,
}

/// Tiles each source image into non-overlapping `chip_size` squares and
/// moves detections into chip-local coordinates.
///
/// Right and bottom edge tiles keep whatever size is left. A detection is
/// copied into every tile it intersects; a copy whose clamped area is below
/// `min_area_frac` of the original area is dropped.
pub fn chip(
    detections: &[RawDetection],
    sizes: &BTreeMap<String, ImageSize>,
    chip_size: u32,
    min_area_frac: f64,
) -> Result<ChipOutput, GeoError> {
    if chip_size == 0 {
        return Err(GeoError::InvalidChipParams("chip_size must be > 0".into()));
    }
    if !(min_area_frac > 0.0 && min_area_frac <= 1.0) {
        return Err(GeoError::InvalidChipParams(format!(
            "min_area_frac must be in (0, 1], got {min_area_frac}"
        )));
    }

    let mut by_image: BTreeMap<&str, Vec<&RawDetection>> = BTreeMap::new();
    for d in detections {
        by_image.entry(d.image_id.as_str()).or_default();
    }
    for image_id in sizes.keys() {
        by_image.entry(image_id.as_str()).or_default();
    }
    for d in detections {
        by_image.get_mut(d.image_id.as_str()).unwrap().push(d);
    }

    let mut out = ChipOutput::default();
    for (image_id, dets) in by_image {
        let Some(size) = sizes.get(image_id) else {
            out.rejected.push((
                image_id.to_string(),
                GeoError::MissingImageSize(image_id.to_string()).to_string(),
            ));
            continue;
        };
        if size.width < 1 || size.height < 1 {
            out.rejected.push((
                image_id.to_string(),
                GeoError::InvalidImageSize {
                    image_id: image_id.to_string(),
                    width: size.width,
                    height: size.height,
                }
                .to_string(),
            ));
            continue;
        }
        tile_image(image_id, *size, &dets, chip_size, min_area_frac, &mut out);
    }

    out.detections
        .sort_by(|a, b| (&a.chip_id, &a.detection_id).cmp(&(&b.chip_id, &b.detection_id)));
    Ok(out)
}

fn tile_image(
    image_id: &str,
    size: ImageSize,
    dets: &[&RawDetection],
    chip_size: u32,
    min_area_frac: f64,
    out: &mut ChipOutput,
) {
    let image_bounds = BBox::new(0, 0, size.width as i64, size.height as i64);
    let mut tiles = Vec::new();
    for oy in (0..size.height).step_by(chip_size as usize) {
        for ox in (0..size.width).step_by(chip_size as usize) {
            let chip = ImageChip {
                chip_id: format!("{image_id}_{ox}_{oy}"),
                source_image_id: image_id.to_string(),
                origin: (ox, oy),
                width: chip_size.min(size.width - ox),
                height: chip_size.min(size.height - oy),
                pixel_uri: None,
            };
            let rect = BBox::new(ox as i64, oy as i64, chip.width as i64, chip.height as i64);
            tiles.push((chip, rect));
        }
    }

    let mut copies: Vec<Detection> = Vec::new();
    for d in dets {
        let original_area = d.bbox.area() as f64;
        let Some(inside) = d.bbox.intersect(&image_bounds) else {
            out.dropped_clamped += 1;
            continue;
        };
        let mut emitted: Vec<Detection> = Vec::new();
        for (chip, rect) in &tiles {
            let Some(clamped) = inside.intersect(rect) else {
                continue;
            };
            if (clamped.area() as f64) < min_area_frac * original_area {
                out.dropped_clamped += 1;
                continue;
            }
            emitted.push(Detection {
                detection_id: d.detection_id.clone(),
                chip_id: chip.chip_id.clone(),
                class_name: d.class_name.clone(),
                bbox: clamped.translate(-rect.x, -rect.y),
            });
        }
        let n = emitted.len();
        for mut det in emitted {
            if n > 1 {
                det.detection_id = format!("{}@{}", det.detection_id, det.chip_id);
            }
            copies.push(det);
        }
    }

    out.chips.extend(tiles.into_iter().map(|(c, _)| c));
    out.detections.extend(copies);
}
