use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Detection, Split, SplitAssignment};

/// Per-class detection counts, overall and per split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub frequencies: BTreeMap<String, f64>,
    /// Present only when a split assignment was supplied.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_split: BTreeMap<Split, BTreeMap<String, usize>>,
    /// Detections on chips absent from the split assignment.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub unassigned: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl ClassStats {
    pub fn frequency(&self, class: &str) -> Option<f64> {
        self.frequencies.get(class).copied()
    }

    pub fn split_total(&self, split: Split) -> usize {
        self.per_split.get(&split).map_or(0, |m| m.values().sum())
    }

    /// Aligned-column table, one row per class, totals last.
    pub fn to_table(&self) -> String {
        let splits: Vec<Split> = self.per_split.keys().copied().collect();
        let name_w = self
            .counts
            .keys()
            .map(|k| k.chars().count())
            .chain(["Object Category".len(), "Total".len()])
            .max()
            .unwrap_or(0);

        let mut out = String::new();
        let _ = write!(
            out,
            "{:<name_w$}  {:>8}  {:>9}",
            "Object Category", "Count", "Frequency"
        );
        for s in &splits {
            let _ = write!(out, "  {:>8}", s.to_string());
        }
        out.push('\n');
        for (class, count) in &self.counts {
            let _ = write!(
                out,
                "{:<name_w$}  {:>8}  {:>9.4}",
                class, count, self.frequencies[class]
            );
            for s in &splits {
                let n = self.per_split[s].get(class).copied().unwrap_or(0);
                let _ = write!(out, "  {:>8}", n);
            }
            out.push('\n');
        }
        let total_freq = if self.total == 0 { 0.0 } else { 1.0 };
        let _ = write!(
            out,
            "{:<name_w$}  {:>8}  {:>9.4}",
            "Total", self.total, total_freq
        );
        for s in &splits {
            let _ = write!(out, "  {:>8}", self.split_total(*s));
        }
        out.push('\n');
        out
    }
}

/// Exact per-class tallies; frequencies are over the whole input.
pub fn compute_class_stats(
    detections: &[Detection],
    splits: Option<&SplitAssignment>,
) -> ClassStats {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in detections {
        *counts.entry(d.class_name.clone()).or_default() += 1;
    }
    let total = detections.len();
    let frequencies = counts
        .iter()
        .map(|(k, &n)| (k.clone(), n as f64 / total as f64))
        .collect();

    let mut per_split: BTreeMap<Split, BTreeMap<String, usize>> = BTreeMap::new();
    let mut unassigned = 0;
    if let Some(assign) = splits {
        for s in Split::ALL {
            per_split.insert(s, BTreeMap::new());
        }
        let lookup: HashMap<&str, Split> = assign
            .splits
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        for d in detections {
            match lookup.get(d.chip_id.as_str()) {
                Some(s) => {
                    *per_split
                        .get_mut(s)
                        .unwrap()
                        .entry(d.class_name.clone())
                        .or_default() += 1
                }
                None => unassigned += 1,
            }
        }
    }

    ClassStats {
        total,
        counts,
        frequencies,
        per_split,
        unassigned,
    }
}
