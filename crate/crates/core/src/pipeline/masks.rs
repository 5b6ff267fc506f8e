use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    chip_map, thread_pool, CandidateRow, PipelineError, RunConfig, SegmenterSpec, Workspace,
};
use crate::gateway::UreqTransport;
use crate::geodata::ImageChip;
use crate::jsonl;
use crate::maskgen::{
    merge_parts, segment_bbox, HttpSegmentBackend, MaskError, MaskRecord, RecordedBackend,
    RecordedSegmentation, RectangleStub, SegmentBackend,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskLedgerEntry {
    pub detection_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub backend: String,
    pub detections: usize,
    pub written: usize,
    pub degenerate: usize,
    pub failed: usize,
}

pub fn build_segmenter(cfg: &RunConfig) -> Result<Box<dyn SegmentBackend>, PipelineError> {
    Ok(match &cfg.segmenter {
        SegmenterSpec::Rectangle => Box::new(RectangleStub),
        SegmenterSpec::Recorded { path } => {
            let recs: Vec<RecordedSegmentation> = jsonl::read(path)?;
            Box::new(RecordedBackend::new(recs))
        }
        SegmenterSpec::Http {
            endpoint,
            timeout_secs,
        } => Box::new(HttpSegmentBackend::new(
            endpoint.clone(),
            Arc::new(UreqTransport::new(Duration::from_secs(*timeout_secs))),
        )),
    })
}

/// One merged mask per candidate.
///
/// Degenerate masks are kept in the file with their flag set so that
/// packaging can ledger them; other per-record errors go to the mask
/// ledger. An unreachable backend aborts the stage.
pub fn masks_stage(
    cfg: &RunConfig,
    ws: &Workspace,
    backend: &dyn SegmentBackend,
) -> Result<MaskSummary, PipelineError> {
    cfg.sam
        .validate()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let mut rows: Vec<CandidateRow> = jsonl::read(&ws.candidates())?;
    rows.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
    let chips = chip_map(jsonl::read::<ImageChip>(&ws.chips())?);

    let results: Vec<Result<MaskRecord, MaskError>> = thread_pool(cfg.workers).install(|| {
        rows.par_iter()
            .map(|row| {
                let chip = chips
                    .get(&row.chip_id)
                    .ok_or_else(|| MaskError::Backend(format!("unknown chip {}", row.chip_id)))?;
                let parts = segment_bbox(backend, chip, &row.bbox, &cfg.sam)?;
                let merged = merge_parts(&parts, chip.width as usize, chip.height as usize)?;
                Ok(MaskRecord::new(
                    &row.detection_id,
                    &merged.mask,
                    merged.degenerate,
                ))
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut ledger = Vec::new();
    for (row, r) in rows.iter().zip(results) {
        match r {
            Ok(m) => records.push(m),
            Err(MaskError::BackendUnavailable(m)) => {
                return Err(PipelineError::BackendUnavailable(m))
            }
            Err(e) => ledger.push(MaskLedgerEntry {
                detection_id: row.detection_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    jsonl::write(&ws.masks(), &records)?;
    jsonl::write(&ws.mask_ledger(), &ledger)?;
    let degenerate = records.iter().filter(|m| m.degenerate).count();
    Ok(MaskSummary {
        backend: backend.name().to_string(),
        detections: rows.len(),
        written: records.len() - degenerate,
        degenerate,
        failed: ledger.len(),
    })
}
