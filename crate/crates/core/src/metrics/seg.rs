use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::maskgen::BinaryMask;

/// Ground-truth masks with fewer pixels than this are `Small`.
pub const SMALL_OBJECT_AREA: usize = 500;

/// Intersection over union; two empty masks agree perfectly (1.0).
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimMismatch(a.dims(), b.dims()));
    }
    let union = a.union_area(b);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.intersection_area(b) as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    All,
    Small,
    Large,
}

impl Bucket {
    pub fn of_area(gt_area: usize) -> Bucket {
        if gt_area < SMALL_OBJECT_AREA {
            Bucket::Small
        } else {
            Bucket::Large
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegSample {
    pub id: String,
    pub pred: BinaryMask,
    pub gt: BinaryMask,
}

impl SegSample {
    pub fn bucket(&self) -> Bucket {
        Bucket::of_area(self.gt.area())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub giou: f64,
    pub ciou: f64,
    pub count: usize,
    /// Population std of per-sample IoU.
    pub giou_std: f64,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    /// Buckets without samples are absent.
    pub buckets: BTreeMap<Bucket, BucketStats>,
}

impl SegReport {
    pub fn get(&self, b: Bucket) -> Option<&BucketStats> {
        self.buckets.get(&b)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}{:>8}{:>10}{:>10}{:>12}",
            "Size", "N", "cIoU", "gIoU", "gIoU std"
        );
        for b in [Bucket::All, Bucket::Small, Bucket::Large] {
            match self.buckets.get(&b) {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{:<8}{:>8}{:>10.4}{:>10.4}{:>12.4}",
                        format!("{b:?}"),
                        s.count,
                        s.ciou,
                        s.giou,
                        s.giou_std
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{:<8}{:>8}{:>10}{:>10}{:>12}",
                        format!("{b:?}"),
                        0,
                        "-",
                        "-",
                        "-"
                    );
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct Acc {
    ious: Vec<f64>,
    inter: u64,
    union: u64,
}

impl Acc {
    fn finish(self) -> Option<BucketStats> {
        let n = self.ious.len();
        if n == 0 {
            return None;
        }
        let mean = self.ious.iter().sum::<f64>() / n as f64;
        let var = self.ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(BucketStats {
            giou: mean,
            // all-empty bucket: every pair agreed
            ciou: if self.union == 0 {
                1.0
            } else {
                self.inter as f64 / self.union as f64
            },
            count: n,
            giou_std: var.sqrt(),
            intersection: self.inter,
            union: self.union,
        })
    }
}

/// gIoU (mean per-sample IoU) and cIoU (summed intersections over summed
/// unions) for All, Small and Large. Samples are reduced in id order.
pub fn evaluate_segmentation(samples: &[SegSample]) -> Result<SegReport, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut order: Vec<&SegSample> = samples.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut accs: BTreeMap<Bucket, Acc> = BTreeMap::new();
    for s in order {
        if s.pred.dims() != s.gt.dims() {
            return Err(MetricError::DimMismatch(s.pred.dims(), s.gt.dims()));
        }
        let inter = s.pred.intersection_area(&s.gt) as u64;
        let union = s.pred.union_area(&s.gt) as u64;
        let v = if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        for b in [Bucket::All, s.bucket()] {
            let acc = accs.entry(b).or_default();
            acc.ious.push(v);
            acc.inter += inter;
            acc.union += union;
        }
    }
    Ok(SegReport {
        buckets: accs
            .into_iter()
            .filter_map(|(b, a)| a.finish().map(|s| (b, s)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::BBox;

    fn square(x: i64, y: i64, side: i64) -> BinaryMask {
        BinaryMask::from_bbox(64, 64, &BBox::new(x, y, side, side))
    }

    #[test]
    fn iou_examples() {
        let a = square(5, 5, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &square(40, 40, 10)).unwrap(), 0.0);
        let shifted = BinaryMask::from_bbox(64, 64, &BBox::new(10, 5, 10, 10));
        assert_eq!(iou(&a, &shifted).unwrap(), 50.0 / 150.0);
        assert_eq!(
            iou(&BinaryMask::new(4, 4), &BinaryMask::new(4, 4)).unwrap(),
            1.0
        );
        assert!(iou(&a, &BinaryMask::new(4, 4)).is_err());
    }

    #[test]
    fn two_sample_hand_arithmetic() {
        let gt = square(0, 0, 10);
        let samples = vec![
            SegSample {
                id: "a".into(),
                pred: gt.clone(),
                gt: gt.clone(),
            },
            SegSample {
                id: "b".into(),
                pred: BinaryMask::new(64, 64),
                gt: gt.clone(),
            },
        ];
        let r = evaluate_segmentation(&samples).unwrap();
        let all = r.get(Bucket::All).unwrap();
        assert_eq!(all.giou, 0.5);
        assert_eq!(all.ciou, 0.5);
        assert_eq!(all.giou_std, 0.5);
        assert!(r.get(Bucket::Large).is_none());
        assert_eq!(r.get(Bucket::Small).unwrap().count, 2);
    }

    #[test]
    fn bucket_boundary() {
        assert_eq!(Bucket::of_area(499), Bucket::Small);
        assert_eq!(Bucket::of_area(500), Bucket::Large);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            evaluate_segmentation(&[]),
            Err(MetricError::Empty)
        ));
    }

    #[test]
    fn table_lists_all_buckets() {
        let gt = square(0, 0, 30);
        let r = evaluate_segmentation(&[SegSample {
            id: "a".into(),
            pred: gt.clone(),
            gt,
        }])
        .unwrap();
        let t = r.to_table();
        assert!(t.contains("Small") && t.contains("Large") && t.contains("All"));
    }
}
