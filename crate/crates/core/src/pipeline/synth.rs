use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chip_map, thread_pool, CandidateRow, PipelineError, RunConfig, Workspace};
use crate::gateway::{
    ChatBackend, ChatRequest, LlmClient, REPHRASE_TEMPERATURE, STAGE_TEMPERATURE,
};
use crate::geodata::{Detection, ImageChip};
use crate::jsonl;
use crate::prompting::{
    decide_include_bbox_with, parse_query_response, render_rephrase, render_stage1, render_stage2,
    QueryRecord,
};

/// One finished detection in the resume journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub config_hash: String,
    pub detection_id: String,
    pub records: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFailure {
    pub detection_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub detections: usize,
    /// Taken from the journal of an earlier run.
    pub resumed: usize,
    pub completed: usize,
    pub failed: usize,
    pub records: usize,
    pub includes_spatial: usize,
}

/// Chat client for `cfg.llm`, auditing every attempt into the workspace.
pub fn build_chat_backend(
    cfg: &RunConfig,
    ws: &super::Workspace,
) -> Result<LlmClient, PipelineError> {
    let path = ws.llm_audit();
    let audit = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(PipelineError::io(&path))?;
    Ok(LlmClient::new(cfg.llm.clone())?.with_audit(Box::new(audit)))
}

/// Spatial coin for every candidate, drawn in sorted id order.
pub(crate) fn draw_coins(cfg: &RunConfig, ids: &BTreeSet<&str>) -> BTreeMap<String, bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    ids.iter()
        .map(|id| {
            (
                id.to_string(),
                decide_include_bbox_with(&mut rng, cfg.spatial_prob),
            )
        })
        .collect()
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    backend: &'a dyn ChatBackend,
}

impl Ctx<'_> {
    fn ask(&self, prompt: String, temperature: f64, tag: String) -> Result<String, String> {
        let req = ChatRequest::user(&self.cfg.llm.model, prompt, temperature, tag);
        self.backend
            .complete(&req)
            .map(|r| r.content)
            .map_err(|e| e.to_string())
    }

    fn run_one(
        &self,
        d: &Detection,
        peers: &[Detection],
        coin: bool,
    ) -> Result<Vec<QueryRecord>, SynthFailure> {
        let id = &d.detection_id;
        let fail = |stage: &str, error: String| SynthFailure {
            detection_id: id.clone(),
            stage: stage.into(),
            error,
        };

        let p1 = render_stage1(d, peers).map_err(|e| fail("stage1", e.to_string()))?;
        let raw = self
            .ask(p1, STAGE_TEMPERATURE, format!("{id}:stage1"))
            .map_err(|e| fail("stage1", e))?;
        let characteristics = parse_query_response(&raw).unwrap_or_else(|_| raw.trim().to_string());
        if characteristics.is_empty() {
            return Err(fail("stage1", "empty characteristics".into()));
        }

        let p2 = render_stage2(d, peers, &characteristics, coin)
            .map_err(|e| fail("stage2", e.to_string()))?;
        let raw = self
            .ask(p2, STAGE_TEMPERATURE, format!("{id}:stage2"))
            .map_err(|e| fail("stage2", e))?;
        let principal = parse_query_response(&raw).map_err(|e| fail("stage2", e.to_string()))?;

        let record = |variant: u8, text: String| QueryRecord {
            query_id: QueryRecord::make_id(id, variant),
            detection_id: id.clone(),
            chip_id: d.chip_id.clone(),
            text,
            variant,
            includes_spatial: coin,
            characteristics: characteristics.clone(),
        };
        let mut out = vec![record(0, principal.clone())];
        for v in 1..self.cfg.variants_per_object {
            let stage = format!("rephrase{v}");
            let p =
                render_rephrase(&principal, v, coin).map_err(|e| fail(&stage, e.to_string()))?;
            let raw = self
                .ask(p, REPHRASE_TEMPERATURE, format!("{id}:{stage}"))
                .map_err(|e| fail(&stage, e))?;
            let text = parse_query_response(&raw).map_err(|e| fail(&stage, e.to_string()))?;
            out.push(record(v, text));
        }
        Ok(out)
    }
}

fn load_journal(
    ws: &Workspace,
    hash: &str,
) -> Result<BTreeMap<String, Vec<QueryRecord>>, PipelineError> {
    let entries: Vec<JournalEntry> = jsonl::read_if_exists(&ws.synth_journal())?;
    let mut done = BTreeMap::new();
    let mut stale = 0;
    for e in entries {
        if e.config_hash == hash {
            done.insert(e.detection_id, e.records);
        } else {
            stale += 1;
        }
    }
    if stale > 0 {
        log::warn!("ignoring {stale} journal entries from a different config");
    }
    Ok(done)
}

/// Stage 1, stage 2 and the rephrasings for every candidate.
///
/// Finished detections are journaled as they complete and skipped on the
/// next run. Per-detection failures go to the synth ledger; if any occur
/// the stage still writes its outputs and then returns
/// [`PipelineError::Partial`].
pub fn synth_stage(
    cfg: &RunConfig,
    ws: &Workspace,
    backend: &dyn ChatBackend,
) -> Result<SynthSummary, PipelineError> {
    cfg.validate()?;
    let mut rows: Vec<CandidateRow> = jsonl::read(&ws.candidates())?;
    rows.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
    let dets: Vec<Detection> = jsonl::read(&ws.detections())?;
    let chips = chip_map(jsonl::read::<ImageChip>(&ws.chips())?);
    let mut peers: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for d in &dets {
        peers.entry(d.chip_id.as_str()).or_default().push(d.clone());
    }

    let ids: BTreeSet<&str> = rows.iter().map(|r| r.detection_id.as_str()).collect();
    let coins = draw_coins(cfg, &ids);
    let hash = cfg.hash();
    let mut done = load_journal(ws, &hash)?;
    done.retain(|id, _| ids.contains(id.as_str()));
    let resumed = done.len();

    let pending: Vec<&CandidateRow> = rows
        .iter()
        .filter(|r| !done.contains_key(&r.detection_id))
        .collect();
    let ctx = Ctx { cfg, backend };
    let journal = Mutex::new(());
    let journal_path = ws.synth_journal();
    let results: Vec<Result<(String, Vec<QueryRecord>), SynthFailure>> = thread_pool(cfg.workers)
        .install(|| {
            pending
                .par_iter()
                .map(|row| {
                    let d = row.detection();
                    if !chips.contains_key(&d.chip_id) {
                        return Err(SynthFailure {
                            detection_id: d.detection_id.clone(),
                            stage: "input".into(),
                            error: format!("unknown chip {}", d.chip_id),
                        });
                    }
                    let chip_peers = peers.get(d.chip_id.as_str()).map_or(&[][..], Vec::as_slice);
                    let records = ctx.run_one(&d, chip_peers, coins[&d.detection_id])?;
                    let entry = JournalEntry {
                        config_hash: hash.clone(),
                        detection_id: d.detection_id.clone(),
                        records,
                    };
                    let _guard = journal.lock().unwrap();
                    if let Err(e) = jsonl::append(&journal_path, &entry) {
                        log::error!("journal write failed: {e}");
                    }
                    Ok((entry.detection_id, entry.records))
                })
                .collect()
        });

    let mut failures = Vec::new();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    for r in results {
        match r {
            Ok((id, recs)) => {
                done.insert(id, recs);
            }
            Err(f) => failures.push(f),
        }
    }
    failures.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
    jsonl::write(&ws.synth_ledger(), &failures)?;

    let records: Vec<QueryRecord> = done.into_values().flatten().collect();
    jsonl::write(&ws.queries(), &records)?;

    if !failures.is_empty() {
        return Err(PipelineError::Partial {
            failed: failures.len(),
            total: rows.len(),
            ledger: ws.synth_ledger(),
        });
    }
    Ok(SynthSummary {
        detections: rows.len(),
        resumed,
        completed,
        failed: 0,
        includes_spatial: count_spatial(&records),
        records: records.len(),
    })
}

fn count_spatial(records: &[QueryRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.variant == 0 && r.includes_spatial)
        .count()
}

/// Summary rebuilt from the files a (possibly partial) synth run left behind.
pub(crate) fn summary_from_disk(ws: &Workspace) -> Result<SynthSummary, PipelineError> {
    let rows: Vec<CandidateRow> = jsonl::read(&ws.candidates())?;
    let records: Vec<QueryRecord> = jsonl::read_if_exists(&ws.queries())?;
    let failures: Vec<SynthFailure> = jsonl::read_if_exists(&ws.synth_ledger())?;
    Ok(SynthSummary {
        detections: rows.len(),
        resumed: 0,
        completed: records.iter().filter(|r| r.variant == 0).count(),
        failed: failures.len(),
        includes_spatial: count_spatial(&records),
        records: records.len(),
    })
}
