use std::collections::{BTreeMap, HashMap};

use super::{compute_class_stats, ClassStats, Detection, GeoError, ImageChip, Quadrant};

/// Thresholds of the uniqueness and interest filters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterParams {
    /// A class is interesting when its corpus frequency is strictly below this.
    pub interest_frac: f64,
    /// A detection is unique when fewer than this many same-class peers share its quadrant.
    pub unique_max: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            interest_frac: 0.5,
            unique_max: 2,
        }
    }
}

/// Quadrant containing the box center. Left iff `cx < W/2`, top iff `cy < H/2`.
pub fn quadrant_of(d: &Detection, chip: &ImageChip) -> Quadrant {
    // cx < W/2  <=>  2x + w < W, exact in integers.
    let left = 2 * d.bbox.x + d.bbox.w < chip.width as i64;
    let top = 2 * d.bbox.y + d.bbox.h < chip.height as i64;
    match (top, left) {
        (true, true) => Quadrant::TopLeft,
        (true, false) => Quadrant::TopRight,
        (false, true) => Quadrant::BottomLeft,
        (false, false) => Quadrant::BottomRight,
    }
}

/// True iff `d` is the only detection of its class in its quadrant.
pub fn is_unique(d: &Detection, peers: &[Detection], chip: &ImageChip) -> bool {
    is_unique_with(d, peers, chip, FilterParams::default().unique_max)
}

fn is_unique_with(d: &Detection, peers: &[Detection], chip: &ImageChip, unique_max: usize) -> bool {
    let q = quadrant_of(d, chip);
    let same = peers
        .iter()
        .filter(|p| p.class_name == d.class_name && quadrant_of(p, chip) == q)
        .count();
    same < unique_max
}

/// True iff the class of `d` makes up strictly less than half of the corpus.
pub fn is_interesting(d: &Detection, stats: &ClassStats) -> Result<bool, GeoError> {
    is_interesting_with(d, stats, FilterParams::default().interest_frac)
}

fn is_interesting_with(
    d: &Detection,
    stats: &ClassStats,
    interest_frac: f64,
) -> Result<bool, GeoError> {
    let freq = stats
        .frequency(&d.class_name)
        .ok_or_else(|| GeoError::ClassNotInStats(d.class_name.clone()))?;
    Ok(freq < interest_frac)
}

/// Detections passing both filters, sorted by `(chip_id, detection_id)`.
///
/// Class frequencies are taken over `detections` itself. Detections whose
/// chip is not in `chips` are skipped.
pub fn filter_candidates(
    chips: &[ImageChip],
    detections: &[Detection],
    params: FilterParams,
) -> Vec<Detection> {
    let stats = compute_class_stats(detections, None);
    let chip_index: HashMap<&str, &ImageChip> =
        chips.iter().map(|c| (c.chip_id.as_str(), c)).collect();

    let mut by_chip: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_chip
            .entry(d.chip_id.as_str())
            .or_default()
            .push(d.clone());
    }

    let mut out = Vec::new();
    for (chip_id, peers) in &by_chip {
        let Some(chip) = chip_index.get(chip_id) else {
            log::warn!(
                "{} detections reference unknown chip {chip_id}",
                peers.len()
            );
            continue;
        };
        for d in peers {
            let interesting = is_interesting_with(d, &stats, params.interest_frac).unwrap_or(false);
            if interesting && is_unique_with(d, peers, chip, params.unique_max) {
                out.push(d.clone());
            }
        }
    }
    out.sort_by(|a, b| (&a.chip_id, &a.detection_id).cmp(&(&b.chip_id, &b.detection_id)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::BBox;

    fn chip512() -> ImageChip {
        ImageChip {
            chip_id: "c".into(),
            source_image_id: "s".into(),
            origin: (0, 0),
            width: 512,
            height: 512,
            pixel_uri: None,
        }
    }

    fn det(id: &str, class: &str, x: i64, y: i64, w: i64, h: i64) -> Detection {
        Detection {
            detection_id: id.into(),
            chip_id: "c".into(),
            class_name: class.into(),
            bbox: BBox::new(x, y, w, h),
        }
    }

    #[test]
    fn quadrant_examples() {
        let c = chip512();
        assert_eq!(
            quadrant_of(&det("a", "x", 0, 0, 10, 10), &c),
            Quadrant::TopLeft
        );
        assert_eq!(
            quadrant_of(&det("a", "x", 256, 256, 10, 10), &c),
            Quadrant::BottomRight
        );
        // center exactly (256, 100)
        assert_eq!(
            quadrant_of(&det("a", "x", 251, 95, 10, 10), &c),
            Quadrant::TopRight
        );
        // center (255.5, 255.5) stays top-left
        assert_eq!(
            quadrant_of(&det("a", "x", 255, 255, 1, 1), &c),
            Quadrant::TopLeft
        );
    }

    #[test]
    fn uniqueness_counts_class_within_quadrant() {
        let c = chip512();
        let peers = vec![
            det("1", "car", 10, 10, 5, 5),
            det("2", "car", 40, 10, 5, 5),
            det("3", "bus", 80, 10, 5, 5),
        ];
        assert!(!is_unique(&peers[0], &peers, &c));
        assert!(!is_unique(&peers[1], &peers, &c));
        assert!(is_unique(&peers[2], &peers, &c));

        let single = vec![det("1", "car", 10, 10, 5, 5)];
        assert!(is_unique(&single[0], &single, &c));

        let split = vec![
            det("1", "car", 10, 10, 5, 5),
            det("2", "car", 300, 10, 5, 5),
        ];
        assert!(is_unique(&split[0], &split, &c));
        assert!(is_unique(&split[1], &split, &c));
    }

    fn corpus(counts: &[(&str, usize)]) -> Vec<Detection> {
        let mut v = Vec::new();
        for (class, n) in counts {
            for i in 0..*n {
                v.push(det(&format!("{class}{i}"), class, 0, 0, 1, 1));
            }
        }
        v
    }

    #[test]
    fn interest_is_strictly_below_half() {
        let dets = corpus(&[("car", 60), ("bus", 40)]);
        let stats = compute_class_stats(&dets, None);
        assert!(!is_interesting(&det("x", "car", 0, 0, 1, 1), &stats).unwrap());
        assert!(is_interesting(&det("x", "bus", 0, 0, 1, 1), &stats).unwrap());

        let dets = corpus(&[("car", 50), ("bus", 50)]);
        let stats = compute_class_stats(&dets, None);
        assert!(!is_interesting(&det("x", "car", 0, 0, 1, 1), &stats).unwrap());
        assert!(!is_interesting(&det("x", "bus", 0, 0, 1, 1), &stats).unwrap());

        let stats = compute_class_stats(&corpus(&[("car", 3)]), None);
        assert!(!is_interesting(&det("x", "car", 0, 0, 1, 1), &stats).unwrap());
        assert!(matches!(
            is_interesting(&det("x", "tank", 0, 0, 1, 1), &stats),
            Err(GeoError::ClassNotInStats(_))
        ));
    }

    #[test]
    fn filter_edge_cases() {
        let c = chip512();
        assert!(
            filter_candidates(std::slice::from_ref(&c), &[], FilterParams::default()).is_empty()
        );
        let same = vec![
            det("1", "car", 10, 10, 5, 5),
            det("2", "car", 40, 10, 5, 5),
            det("3", "car", 70, 10, 5, 5),
        ];
        assert!(filter_candidates(&[c], &same, FilterParams::default()).is_empty());
    }

    #[test]
    fn filter_hand_counted_fixture() {
        // 12 detections: 6 car (frequency 0.5, never interesting),
        // bus x3, boat x2, shed x1.
        let c = chip512();
        let dets = vec![
            det("01", "car", 10, 10, 5, 5),
            det("02", "car", 300, 10, 5, 5),
            det("03", "car", 10, 300, 5, 5),
            det("04", "car", 300, 300, 5, 5),
            det("05", "car", 20, 20, 5, 5),
            det("06", "car", 320, 320, 5, 5),
            det("07", "bus", 50, 50, 5, 5),
            det("08", "bus", 60, 60, 5, 5),
            det("09", "bus", 400, 400, 5, 5),
            det("10", "boat", 100, 400, 5, 5),
            det("11", "boat", 120, 420, 5, 5),
            det("12", "shed", 400, 10, 5, 5),
        ];
        let out = filter_candidates(&[c], &dets, FilterParams::default());
        let ids: Vec<_> = out.iter().map(|d| d.detection_id.as_str()).collect();
        assert_eq!(ids, ["09", "12"]);
    }
}
