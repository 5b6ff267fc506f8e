//! File-based pipeline stages: ingest → chip → filter → synth → masks →
//! split → package.
//!
//! Every stage reads and writes JSON-Lines inside one output directory
//! ([`Workspace`]) and processes records in sorted id order, so a run is a
//! pure function of its inputs, its [`RunConfig`] and the backends' answers.

mod config;
mod eval;
mod masks;
mod package;
mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::GatewayError;
use crate::geodata::{
    chip, compute_class_stats, filter_candidates, ingest_detections, make_splits, quadrant_of,
    BBox, ClassStats, Detection, GeoError, ImageChip, ImageSize, IngestFormat, Quadrant,
    RawDetection, RecordError, SplitAssignment,
};
use crate::jsonl::{self, JsonlError};

pub use config::{RunConfig, SegmenterSpec};
pub use eval::{
    eval_caption_files, eval_seg_files, eval_vqa_files, CaptionGold, CaptionPrediction, EvalMask,
    EvalOutcome, VqaGold, VqaPrediction,
};
pub use masks::{build_segmenter, masks_stage, MaskLedgerEntry, MaskSummary};
pub use package::{
    package_stage, sample_for_review, LedgerEntry, ManifestCounts, ManifestHeader, ManifestRecord,
    ReviewItem, MANIFEST_VERSION,
};
pub use synth::{build_chat_backend, synth_stage, JournalEntry, SynthFailure, SynthSummary};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Invalid(String),
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("{failed} of {total} records failed; see {}", ledger.display())]
    Partial {
        failed: usize,
        total: usize,
        ledger: PathBuf,
    },
}

impl PipelineError {
    /// 2 for I/O and unreachable backends, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Jsonl(JsonlError::Io { .. })
            | PipelineError::Io { .. }
            | PipelineError::BackendUnavailable(_) => 2,
            PipelineError::Gateway(GatewayError::Connection(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Output directory layout shared by all stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

macro_rules! ws_paths {
    ($($name:ident => $file:literal),* $(,)?) => {
        impl Workspace {
            $(pub fn $name(&self) -> PathBuf { self.root.join($file) })*
        }
    };
}

ws_paths! {
    raw_detections => "raw_detections.jsonl",
    ingest_errors => "ingest_errors.jsonl",
    chips => "chips.jsonl",
    detections => "detections.jsonl",
    chip_rejects => "chip_rejects.jsonl",
    candidates => "candidates.jsonl",
    stats_json => "stats.json",
    stats_txt => "stats.txt",
    queries => "queries.jsonl",
    synth_journal => "synth_journal.jsonl",
    synth_ledger => "synth_ledger.jsonl",
    llm_audit => "llm_audit.jsonl",
    masks => "masks.jsonl",
    mask_ledger => "mask_ledger.jsonl",
    splits => "splits.json",
    manifest_header => "manifest/header.json",
    manifest_records => "manifest/records.jsonl",
    class_table => "manifest/class_distribution.txt",
    package_ledger => "manifest/ledger.jsonl",
    review => "review.jsonl",
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("manifest")).map_err(PipelineError::io(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

/// One line of the filtered detection manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub chip_id: String,
    pub detection_id: String,
    pub class_name: String,
    pub bbox: BBox,
    pub quadrant: Quadrant,
}

impl CandidateRow {
    pub fn detection(&self) -> Detection {
        Detection {
            detection_id: self.detection_id.clone(),
            chip_id: self.chip_id.clone(),
            class_name: self.class_name.clone(),
            bbox: self.bbox,
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_text(path, &s)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(path))?;
    }
    std::fs::write(path, text).map_err(PipelineError::io(path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let s = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
    serde_json::from_str(&s).map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))
}

pub(crate) fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub detections: usize,
    pub zero_area_dropped: usize,
    pub unknown_classes: BTreeMap<String, usize>,
    pub errors: Vec<RecordError>,
}

/// Parses `input` and writes the raw detections plus per-record errors.
pub fn ingest_stage(
    input: &Path,
    format: IngestFormat,
    ws: &Workspace,
) -> Result<IngestSummary, PipelineError> {
    let source = std::fs::read_to_string(input).map_err(PipelineError::io(input))?;
    let out = ingest_detections(&source, format)?;
    let mut dets = out.detections;
    dets.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
    jsonl::write(&ws.raw_detections(), &dets)?;
    jsonl::write(&ws.ingest_errors(), &out.errors)?;
    Ok(IngestSummary {
        detections: dets.len(),
        zero_area_dropped: out.zero_area_dropped,
        unknown_classes: out.unknown_classes,
        errors: out.errors,
    })
}

/// Reads `{"image_id": {"width": W, "height": H}, ...}`.
pub fn read_image_sizes(path: &Path) -> Result<BTreeMap<String, ImageSize>, PipelineError> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipSummary {
    pub chips: usize,
    pub detections: usize,
    pub rejected: usize,
    pub dropped_clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipReject {
    pub id: String,
    pub reason: String,
}

pub fn chip_stage(
    cfg: &RunConfig,
    sizes: &Path,
    ws: &Workspace,
) -> Result<ChipSummary, PipelineError> {
    let raw: Vec<RawDetection> = jsonl::read(&ws.raw_detections())?;
    let sizes = read_image_sizes(sizes)?;
    let out = chip(&raw, &sizes, cfg.chip_size, cfg.min_area_frac)?;
    let rejects: Vec<ChipReject> = out
        .rejected
        .iter()
        .map(|(id, reason)| ChipReject {
            id: id.clone(),
            reason: reason.clone(),
        })
        .collect();
    jsonl::write(&ws.chips(), &out.chips)?;
    jsonl::write(&ws.detections(), &out.detections)?;
    jsonl::write(&ws.chip_rejects(), &rejects)?;
    Ok(ChipSummary {
        chips: out.chips.len(),
        detections: out.detections.len(),
        rejected: rejects.len(),
        dropped_clamped: out.dropped_clamped,
    })
}

pub(crate) fn chip_map(chips: Vec<ImageChip>) -> BTreeMap<String, ImageChip> {
    chips.into_iter().map(|c| (c.chip_id.clone(), c)).collect()
}

/// Applies the uniqueness and interest filters; returns the surviving rows.
pub fn filter_stage(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<CandidateRow>, PipelineError> {
    let chips: Vec<ImageChip> = jsonl::read(&ws.chips())?;
    let dets: Vec<Detection> = jsonl::read(&ws.detections())?;
    let kept = filter_candidates(&chips, &dets, cfg.filter_params());
    let chips = chip_map(chips);
    let rows: Vec<CandidateRow> = kept
        .into_iter()
        .map(|d| CandidateRow {
            quadrant: quadrant_of(&d, &chips[&d.chip_id]),
            chip_id: d.chip_id,
            detection_id: d.detection_id,
            class_name: d.class_name,
            bbox: d.bbox,
        })
        .collect();
    jsonl::write(&ws.candidates(), &rows)?;
    Ok(rows)
}

/// Class statistics over the chipped detections, split-aware when splits exist.
pub fn stats_stage(ws: &Workspace) -> Result<ClassStats, PipelineError> {
    let dets: Vec<Detection> = jsonl::read_if_exists(&ws.detections())?;
    let splits: Option<SplitAssignment> = if ws.splits().exists() {
        Some(read_json(&ws.splits())?)
    } else {
        None
    };
    let stats = compute_class_stats(&dets, splits.as_ref());
    write_json(&ws.stats_json(), &stats)?;
    write_text(&ws.stats_txt(), &stats.to_table())?;
    Ok(stats)
}

/// Splits the chips that hold at least one candidate.
pub fn split_stage(cfg: &RunConfig, ws: &Workspace) -> Result<SplitAssignment, PipelineError> {
    let rows: Vec<CandidateRow> = jsonl::read(&ws.candidates())?;
    let mut ids: Vec<&str> = rows.iter().map(|r| r.chip_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let a = make_splits(&ids, cfg.seed, cfg.split_ratios)?;
    write_json(&ws.splits(), &a)?;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ingest: IngestSummary,
    pub chip: ChipSummary,
    pub candidates: usize,
    pub synth: SynthSummary,
    pub masks: MaskSummary,
    pub header: ManifestHeader,
}

/// Every stage in order with the backends described by `cfg`.
///
/// Synthesis failures do not stop the run; they are ledgered and the
/// affected detections drop out at packaging.
pub fn run_all(
    cfg: &RunConfig,
    input: &Path,
    format: IngestFormat,
    sizes: &Path,
    ws: &Workspace,
) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let ingest = ingest_stage(input, format, ws)?;
    if !ingest.errors.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "{} malformed records in {}",
            ingest.errors.len(),
            input.display()
        )));
    }
    let chip = chip_stage(cfg, sizes, ws)?;
    let candidates = filter_stage(cfg, ws)?.len();
    stats_stage(ws)?;
    let chat = build_chat_backend(cfg, ws)?;
    let synth = match synth_stage(cfg, ws, &chat) {
        Ok(s) => s,
        Err(PipelineError::Partial { failed, ledger, .. }) => {
            log::warn!(
                "{failed} detections failed synthesis; see {}",
                ledger.display()
            );
            synth::summary_from_disk(ws)?
        }
        Err(e) => return Err(e),
    };
    let seg = build_segmenter(cfg)?;
    let masks = masks_stage(cfg, ws, seg.as_ref())?;
    split_stage(cfg, ws)?;
    stats_stage(ws)?;
    let header = package_stage(cfg, ws)?;
    Ok(RunSummary {
        ingest,
        chip,
        candidates,
        synth,
        masks,
        header,
    })
}
