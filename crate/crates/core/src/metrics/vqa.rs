use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VqaCategory {
    Count,
    Presence,
    Comparison,
    Area,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaItem {
    pub category: VqaCategory,
    pub predicted: String,
    pub gold: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl CategoryAccuracy {
    fn new(correct: usize, total: usize) -> Self {
        Self {
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    /// Categories with no items are absent.
    pub per_category: BTreeMap<VqaCategory, CategoryAccuracy>,
    pub overall: Option<CategoryAccuracy>,
}

impl VqaReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12}{:>8}{:>8}{:>10}",
            "Category", "Correct", "Total", "Acc (%)"
        );
        let rows = self
            .per_category
            .iter()
            .map(|(c, a)| (format!("{c:?}"), *a));
        for (name, a) in rows.chain(self.overall.map(|a| ("Overall".to_string(), a))) {
            let _ = writeln!(
                out,
                "{:<12}{:>8}{:>8}{:>10.2}",
                name,
                a.correct,
                a.total,
                a.accuracy * 100.0
            );
        }
        out
    }
}

fn normalize(answer: &str) -> String {
    let t = answer.trim().to_lowercase();
    t.strip_suffix('.').unwrap_or(&t).trim_end().to_string()
}

/// Exact-match accuracy after lowercasing, trimming and dropping a trailing period.
pub fn vqa_accuracy(items: &[VqaItem]) -> VqaReport {
    let mut tallies: BTreeMap<VqaCategory, (usize, usize)> = BTreeMap::new();
    for it in items {
        let t = tallies.entry(it.category).or_default();
        t.1 += 1;
        if normalize(&it.predicted) == normalize(&it.gold) {
            t.0 += 1;
        }
    }
    let correct: usize = tallies.values().map(|t| t.0).sum();
    VqaReport {
        per_category: tallies
            .into_iter()
            .map(|(c, (k, n))| (c, CategoryAccuracy::new(k, n)))
            .collect(),
        overall: (!items.is_empty()).then(|| CategoryAccuracy::new(correct, items.len())),
    }
}
