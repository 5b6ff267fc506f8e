use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    chip_map, read_json, write_json, write_text, CandidateRow, PipelineError, RunConfig, Workspace,
};
use crate::geodata::{compute_class_stats, BBox, ImageChip, Quadrant, Split, SplitAssignment};
use crate::jsonl;
use crate::maskgen::{MaskRecord, RleMask, SamConfig};
use crate::prompting::QueryRecord;

pub const MANIFEST_VERSION: u32 = 1;

/// One dataset entry: an object, its queries and its mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub chip_id: String,
    pub detection_id: String,
    pub class_name: String,
    pub bbox: BBox,
    pub quadrant: Quadrant,
    pub queries: Vec<QueryRecord>,
    pub mask: RleMask,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub records: usize,
    pub queries: usize,
    pub chips: usize,
    pub records_per_split: BTreeMap<Split, usize>,
    pub chips_per_split: BTreeMap<Split, usize>,
    /// Candidates left out, one ledger line each.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub counts: ManifestCounts,
    pub llm_backend: String,
    pub llm_model: String,
    pub segment_backend: String,
    pub sam: SamConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub detection_id: String,
    pub reason: String,
}

impl ManifestCounts {
    pub fn tally(records: &[ManifestRecord], excluded: usize) -> Self {
        let mut records_per_split = BTreeMap::new();
        let mut chips: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
        for r in records {
            *records_per_split.entry(r.split).or_insert(0) += 1;
            chips.entry(r.split).or_default().insert(&r.chip_id);
        }
        Self {
            records: records.len(),
            queries: records.iter().map(|r| r.queries.len()).sum(),
            chips: chips.values().map(BTreeSet::len).sum(),
            records_per_split,
            chips_per_split: chips.into_iter().map(|(s, c)| (s, c.len())).collect(),
            excluded,
        }
    }
}

/// Joins candidates with their queries, masks and splits.
///
/// A candidate missing any piece is left out and ledgered with the first
/// missing piece as its reason.
pub fn package_stage(cfg: &RunConfig, ws: &Workspace) -> Result<ManifestHeader, PipelineError> {
    let mut rows: Vec<CandidateRow> = jsonl::read(&ws.candidates())?;
    rows.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
    let mut queries: BTreeMap<String, Vec<QueryRecord>> = BTreeMap::new();
    for q in jsonl::read::<QueryRecord>(&ws.queries())? {
        queries.entry(q.detection_id.clone()).or_default().push(q);
    }
    let masks: BTreeMap<String, MaskRecord> = jsonl::read::<MaskRecord>(&ws.masks())?
        .into_iter()
        .map(|m| (m.detection_id.clone(), m))
        .collect();
    let splits: SplitAssignment = read_json(&ws.splits())?;
    let want = cfg.variants_per_object as usize;

    let mut records = Vec::new();
    let mut ledger = Vec::new();
    for row in rows {
        let reason = match (
            queries.remove(&row.detection_id),
            masks.get(&row.detection_id),
            splits.get(&row.chip_id),
        ) {
            (None, ..) => "no queries".to_string(),
            (Some(q), ..) if q.len() != want => format!("{} queries, expected {want}", q.len()),
            (_, None, _) => "no mask".to_string(),
            (_, Some(m), _) if m.degenerate => "degenerate mask".to_string(),
            (_, _, None) => "chip has no split".to_string(),
            (Some(mut q), Some(m), Some(split)) => {
                q.sort_by_key(|r| r.variant);
                records.push(ManifestRecord {
                    chip_id: row.chip_id,
                    detection_id: row.detection_id,
                    class_name: row.class_name,
                    bbox: row.bbox,
                    quadrant: row.quadrant,
                    queries: q,
                    mask: RleMask {
                        width: m.width,
                        height: m.height,
                        rle_counts: m.rle_counts.clone(),
                    },
                    split,
                });
                continue;
            }
        };
        ledger.push(LedgerEntry {
            detection_id: row.detection_id,
            reason,
        });
    }

    jsonl::write(&ws.package_ledger(), &ledger)?;
    if records.is_empty() {
        return Err(PipelineError::Invalid("join produced zero records".into()));
    }

    let header = ManifestHeader {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        counts: ManifestCounts::tally(&records, ledger.len()),
        llm_backend: format!("{:?}", cfg.llm.kind).to_lowercase(),
        llm_model: cfg.llm.model.clone(),
        segment_backend: cfg.segmenter.name().to_string(),
        sam: cfg.sam,
    };
    let dets: Vec<_> = records
        .iter()
        .map(|r| crate::geodata::Detection {
            detection_id: r.detection_id.clone(),
            chip_id: r.chip_id.clone(),
            class_name: r.class_name.clone(),
            bbox: r.bbox,
        })
        .collect();
    write_text(
        &ws.class_table(),
        &compute_class_stats(&dets, Some(&splits)).to_table(),
    )?;
    jsonl::write(&ws.manifest_records(), &records)?;
    write_json(&ws.manifest_header(), &header)?;
    Ok(header)
}

/// One line of the human-review export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub detection_id: String,
    pub chip_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_uri: Option<String>,
    pub class_name: String,
    pub bbox: BBox,
    pub queries: Vec<String>,
    pub mask: RleMask,
    /// Filled in by the reviewer.
    pub verdict: Option<String>,
}

/// Draws `n` manifest records (all if fewer) for manual verification.
pub fn sample_for_review(
    ws: &Workspace,
    n: usize,
    seed: u64,
) -> Result<Vec<ReviewItem>, PipelineError> {
    let records: Vec<ManifestRecord> = jsonl::read(&ws.manifest_records())?;
    let chips = chip_map(jsonl::read_if_exists::<ImageChip>(&ws.chips())?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, records.len(), n.min(records.len())).into_vec();
    picked.sort_unstable();
    let items: Vec<ReviewItem> = picked
        .into_iter()
        .map(|i| {
            let r = &records[i];
            ReviewItem {
                detection_id: r.detection_id.clone(),
                chip_id: r.chip_id.clone(),
                pixel_uri: chips.get(&r.chip_id).and_then(|c| c.pixel_uri.clone()),
                class_name: r.class_name.clone(),
                bbox: r.bbox,
                queries: r.queries.iter().map(|q| q.text.clone()).collect(),
                mask: r.mask.clone(),
                verdict: None,
            }
        })
        .collect();
    jsonl::write(&ws.review(), &items)?;
    Ok(items)
}
