use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeoError;

/// Train/val/test fractions matching 7,205 / 500 / 1,500 out of 9,205 images.
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [7205.0 / 9205.0, 500.0 / 9205.0, 1500.0 / 9205.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub splits: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.splits.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn get(&self, chip_id: &str) -> Option<Split> {
        self.splits.get(chip_id).copied()
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`.
pub(crate) fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut rema = [0f64; 3];
    for i in 0..3 {
        let mut q = n as f64 * ratios[i];
        if (q - q.round()).abs() < 1e-9 {
            q = q.round();
        }
        counts[i] = q.floor() as usize;
        rema[i] = q - q.floor();
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    // stable: ties resolved by group order
    order.sort_by(|&a, &b| rema[b].partial_cmp(&rema[a]).unwrap());
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Seeded shuffle of the (sorted) chip ids, then contiguous train/val/test blocks.
pub fn make_splits<S: AsRef<str>>(
    chip_ids: &[S],
    seed: u64,
    ratios: [f64; 3],
) -> Result<SplitAssignment, GeoError> {
    if ratios.iter().any(|r| r.is_nan() || *r <= 0.0)
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6
    {
        return Err(GeoError::InvalidRatios(ratios));
    }
    let mut ids: Vec<&str> = chip_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < Split::ALL.len() {
        return Err(GeoError::TooFewChips(ids.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let counts = apportion(ids.len(), &ratios);
    let mut splits = BTreeMap::new();
    let mut it = ids.into_iter();
    for (split, n) in Split::ALL.into_iter().zip(counts) {
        for id in it.by_ref().take(n) {
            splits.insert(id.to_string(), split);
        }
    }
    Ok(SplitAssignment { seed, splits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_by_hand() {
        // 10 * (0.45, 0.35, 0.2) = 4.5, 3.5, 2.0 -> floors 4,3,2; one left, tie -> train
        assert_eq!(apportion(10, &[0.45, 0.35, 0.2]), [5, 3, 2]);
        assert_eq!(apportion(7, &[0.5, 0.3, 0.2]), [4, 2, 1]);
    }

    #[test]
    fn published_split_sizes() {
        let ids: Vec<String> = (0..9205).map(|i| format!("chip{i:05}")).collect();
        let a = make_splits(&ids, 7, DEFAULT_SPLIT_RATIOS).unwrap();
        assert_eq!(a.counts(), [7205, 500, 1500]);
        assert_eq!(a.splits.len(), 9205);
    }

    #[test]
    fn one_each() {
        let a = make_splits(&["a", "b", "c"], 1, [1.0 / 3.0; 3]).unwrap();
        assert_eq!(a.counts(), [1, 1, 1]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ids: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let a = make_splits(&ids, 42, DEFAULT_SPLIT_RATIOS).unwrap();
        let mut reversed = ids.clone();
        reversed.reverse();
        assert_eq!(a, make_splits(&reversed, 42, DEFAULT_SPLIT_RATIOS).unwrap());
        assert_ne!(
            a.splits,
            make_splits(&ids, 43, DEFAULT_SPLIT_RATIOS).unwrap().splits
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            make_splits(&["a", "b"], 0, DEFAULT_SPLIT_RATIOS),
            Err(GeoError::TooFewChips(2))
        ));
        assert!(make_splits(&["a", "b", "c"], 0, [0.5, 0.5, 0.0]).is_err());
        assert!(make_splits(&["a", "b", "c"], 0, [0.7826, 0.0543, 0.1630]).is_err());
    }
}
