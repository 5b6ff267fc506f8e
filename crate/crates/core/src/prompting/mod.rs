//! Two-stage query prompts, the rephrase prompt, and reply parsing.
//!
//! Stage 1 asks the model for distinguishing visual characteristics of one
//! detection; stage 2 turns those characteristics into a localization query,
//! optionally mentioning where the object sits. Two rephrasings of the
//! stage-2 query give three variants per object.

mod parse;
mod template;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geodata::Detection;

pub use parse::parse_query_response;

pub const STAGE1_TEMPLATE: &str = include_str!("../../templates/stage1.txt");
pub const STAGE2_TEMPLATE: &str = include_str!("../../templates/stage2.txt");
pub const REPHRASE_TEMPLATE: &str = include_str!("../../templates/rephrase.txt");

/// Stage-2 sentence present only when the bounding box may be used.
pub const LOCATION_CLAUSE: &str = "and the location described by the bounding box.";
/// Stage-2 sentence present only when the bounding box may not be used.
pub const NO_LOCATION_CLAUSE: &str =
    "Do not mention or use any location-related info such as: top, near the center in your query.";

const REPHRASE_KEEP_LOCATION: &str = "Keep any location words from the original query.";
const REPHRASE_NO_LOCATION: &str =
    "Do not add any location-related words such as top, bottom, left, right, or center.";

/// Number of queries produced per selected object.
pub const VARIANTS_PER_OBJECT: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template slot {{{0}}} has no value")]
    UnresolvedSlot(String),
    #[error("malformed template: {0}")]
    BadTemplate(String),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("malformed model response ({reason})")]
    MalformedResponse { reason: String, raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Stage1,
    Stage2,
    Rephrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub body: &'static str,
}

impl PromptTemplate {
    pub const fn for_stage(stage: Stage) -> Self {
        let body = match stage {
            Stage::Stage1 => STAGE1_TEMPLATE,
            Stage::Stage2 => STAGE2_TEMPLATE,
            Stage::Rephrase => REPHRASE_TEMPLATE,
        };
        Self { stage, body }
    }

    /// Resolves the inline conditionals, then fills every `{slot}`.
    pub fn render(
        &self,
        slots: &[(&str, &str)],
        include_bbox: bool,
    ) -> Result<String, PromptError> {
        let resolved = template::resolve_conditionals(self.body, include_bbox)?;
        template::substitute(&resolved, slots)
    }
}

/// One generated query for one detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub detection_id: String,
    pub chip_id: String,
    pub text: String,
    /// 0 is the principal query, 1 and 2 are rephrasings.
    pub variant: u8,
    pub includes_spatial: bool,
    pub characteristics: String,
}

impl QueryRecord {
    pub fn make_id(detection_id: &str, variant: u8) -> String {
        format!("{detection_id}:q{variant}")
    }
}

/// Class label as shown to the model: `"Other X ..."` becomes `"x"`.
pub fn display_class_name(class_name: &str) -> String {
    let words: Vec<&str> = class_name.split_whitespace().collect();
    match words.iter().position(|w| *w == "Other") {
        Some(i) if i + 1 < words.len() => words[i + 1].to_lowercase(),
        Some(_) => words
            .iter()
            .filter(|w| **w != "Other")
            .map(|w| w.to_lowercase())
            .collect::<Vec<_>>()
            .join(" "),
        None => class_name.to_string(),
    }
}

/// `"3 Building, 1 Bus"`: per-class counts, classes in lexicographic order.
pub fn classes_list_str(peers: &[Detection]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in peers {
        *counts.entry(p.class_name.as_str()).or_default() += 1;
    }
    counts
        .iter()
        .map(|(c, n)| format!("{n} {c}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn render_stage1(d: &Detection, peers: &[Detection]) -> Result<String, PromptError> {
    if peers.is_empty() {
        return Err(PromptError::EmptyInput("peer detection list"));
    }
    let classes = classes_list_str(peers);
    let class_name = display_class_name(&d.class_name);
    let bbox = d.bbox.to_string();
    PromptTemplate::for_stage(Stage::Stage1).render(
        &[
            ("classes_list_str", &classes),
            ("class_name", &class_name),
            ("bbox", &bbox),
        ],
        false,
    )
}

pub fn render_stage2(
    d: &Detection,
    peers: &[Detection],
    characteristics: &str,
    include_bbox: bool,
) -> Result<String, PromptError> {
    if characteristics.trim().is_empty() {
        return Err(PromptError::EmptyInput("characteristics"));
    }
    if peers.is_empty() {
        return Err(PromptError::EmptyInput("peer detection list"));
    }
    let classes = classes_list_str(peers);
    let class_name = display_class_name(&d.class_name);
    let bbox = d.bbox.to_string();
    PromptTemplate::for_stage(Stage::Stage2).render(
        &[
            ("classes_list_str", &classes),
            ("class_name", &class_name),
            ("bbox", &bbox),
            ("unique_characteristics.query", characteristics),
        ],
        include_bbox,
    )
}

/// Prompt for one rephrasing (`variant` 1 or 2) of the principal query.
pub fn render_rephrase(
    principal: &str,
    variant: u8,
    includes_spatial: bool,
) -> Result<String, PromptError> {
    if principal.trim().is_empty() {
        return Err(PromptError::EmptyInput("principal query"));
    }
    let variant = variant.to_string();
    let rule = if includes_spatial {
        REPHRASE_KEEP_LOCATION
    } else {
        REPHRASE_NO_LOCATION
    };
    PromptTemplate::for_stage(Stage::Rephrase).render(
        &[
            ("variant", &variant),
            ("principal", principal),
            ("spatial_rule", rule),
        ],
        includes_spatial,
    )
}

/// Fair coin deciding whether the query may mention the object's location.
pub fn decide_include_bbox<R: Rng + ?Sized>(rng: &mut R) -> bool {
    decide_include_bbox_with(rng, 0.5)
}

pub fn decide_include_bbox_with<R: Rng + ?Sized>(rng: &mut R, spatial_prob: f64) -> bool {
    rng.gen_bool(spatial_prob.clamp(0.0, 1.0))
}
