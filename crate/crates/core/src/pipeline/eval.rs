use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::jsonl;
use crate::maskgen::rle_decode;
use crate::metrics::{
    evaluate_segmentation, tokenize, vqa_accuracy, CaptionItem, CaptionReport, SegReport,
    SegSample, VqaCategory, VqaItem, VqaReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalMask {
    #[serde(alias = "detection_id")]
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rle_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPrediction {
    pub id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionGold {
    pub id: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaPrediction {
    pub id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaGold {
    pub id: String,
    pub category: VqaCategory,
    pub answer: String,
}

/// A report plus the ids that appeared on only one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome<R> {
    pub matched: usize,
    pub unmatched_pred: Vec<String>,
    pub unmatched_gt: Vec<String>,
    pub report: R,
}

struct Joined<P, G> {
    pairs: Vec<(String, P, G)>,
    unmatched_pred: Vec<String>,
    unmatched_gt: Vec<String>,
}

fn join<P, G>(
    pred: Vec<P>,
    gt: Vec<G>,
    pid: impl Fn(&P) -> &str,
    gid: impl Fn(&G) -> &str,
) -> Result<Joined<P, G>, PipelineError> {
    let mut preds: BTreeMap<String, P> = BTreeMap::new();
    for p in pred {
        let id = pid(&p).to_string();
        if preds.insert(id.clone(), p).is_some() {
            return Err(PipelineError::Invalid(format!(
                "duplicate prediction id {id}"
            )));
        }
    }
    let mut golds: BTreeMap<String, G> = BTreeMap::new();
    for g in gt {
        let id = gid(&g).to_string();
        if golds.insert(id.clone(), g).is_some() {
            return Err(PipelineError::Invalid(format!(
                "duplicate ground-truth id {id}"
            )));
        }
    }
    let mut pairs = Vec::new();
    let mut unmatched_gt = Vec::new();
    for (id, g) in golds {
        match preds.remove(&id) {
            Some(p) => pairs.push((id, p, g)),
            None => unmatched_gt.push(id),
        }
    }
    if pairs.is_empty() {
        return Err(PipelineError::Invalid(
            "no prediction ids match the ground truth".into(),
        ));
    }
    Ok(Joined {
        pairs,
        unmatched_pred: preds.into_keys().collect(),
        unmatched_gt,
    })
}

fn outcome<P, G, R>(j: &Joined<P, G>, report: R) -> EvalOutcome<R> {
    EvalOutcome {
        matched: j.pairs.len(),
        unmatched_pred: j.unmatched_pred.clone(),
        unmatched_gt: j.unmatched_gt.clone(),
        report,
    }
}

pub fn eval_seg_files(pred: &Path, gt: &Path) -> Result<EvalOutcome<SegReport>, PipelineError> {
    let j = join(
        jsonl::read::<EvalMask>(pred)?,
        jsonl::read::<EvalMask>(gt)?,
        |m| &m.id,
        |m| &m.id,
    )?;
    let decode = |m: &EvalMask| {
        rle_decode(&m.rle_counts, m.width, m.height)
            .map_err(|e| PipelineError::Invalid(format!("{}: {e}", m.id)))
    };
    let samples = j
        .pairs
        .iter()
        .map(|(id, p, g)| {
            Ok(SegSample {
                id: id.clone(),
                pred: decode(p)?,
                gt: decode(g)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let report =
        evaluate_segmentation(&samples).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(outcome(&j, report))
}

pub fn eval_caption_files(
    pred: &Path,
    gt: &Path,
) -> Result<EvalOutcome<CaptionReport>, PipelineError> {
    let j = join(
        jsonl::read::<CaptionPrediction>(pred)?,
        jsonl::read::<CaptionGold>(gt)?,
        |p| &p.id,
        |g| &g.id,
    )?;
    let items: Vec<CaptionItem> = j
        .pairs
        .iter()
        .map(|(_, p, g)| CaptionItem {
            candidate: tokenize(&p.caption),
            references: g.references.iter().map(|r| tokenize(r)).collect(),
        })
        .collect();
    let report =
        CaptionReport::compute(&items).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(outcome(&j, report))
}

pub fn eval_vqa_files(pred: &Path, gt: &Path) -> Result<EvalOutcome<VqaReport>, PipelineError> {
    let j = join(
        jsonl::read::<VqaPrediction>(pred)?,
        jsonl::read::<VqaGold>(gt)?,
        |p| &p.id,
        |g| &g.id,
    )?;
    let items: Vec<VqaItem> = j
        .pairs
        .iter()
        .map(|(_, p, g)| VqaItem {
            category: g.category,
            predicted: p.answer.clone(),
            gold: g.answer.clone(),
        })
        .collect();
    Ok(outcome(&j, vqa_accuracy(&items)))
}
