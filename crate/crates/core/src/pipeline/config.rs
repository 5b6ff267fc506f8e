use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::gateway::BackendConfig;
use crate::geodata::{FilterParams, DEFAULT_CHIP_SIZE, DEFAULT_SPLIT_RATIOS};
use crate::maskgen::SamConfig;
use crate::prompting::VARIANTS_PER_OBJECT;

/// Which segmentation backend produces the masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmenterSpec {
    /// Filled bounding box; needs no service.
    Rectangle,
    /// Replays a JSON-Lines file of captured answers.
    Recorded { path: PathBuf },
    Http {
        endpoint: String,
        #[serde(default = "default_seg_timeout")]
        timeout_secs: u64,
    },
}

fn default_seg_timeout() -> u64 {
    120
}

impl SegmenterSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SegmenterSpec::Rectangle => "rectangle-stub",
            SegmenterSpec::Recorded { .. } => "recorded",
            SegmenterSpec::Http { .. } => "http",
        }
    }
}

/// Everything that determines a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub chip_size: u32,
    pub min_area_frac: f64,
    pub interest_frac: f64,
    pub unique_max: usize,
    pub spatial_prob: f64,
    pub variants_per_object: u8,
    pub split_ratios: [f64; 3],
    /// Worker threads for per-record fan-out; does not affect output.
    pub workers: usize,
    pub llm: BackendConfig,
    pub sam: SamConfig,
    pub segmenter: SegmenterSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FilterParams::default();
        Self {
            seed: 42,
            chip_size: DEFAULT_CHIP_SIZE,
            min_area_frac: 0.3,
            interest_frac: f.interest_frac,
            unique_max: f.unique_max,
            spatial_prob: 0.5,
            variants_per_object: VARIANTS_PER_OBJECT,
            split_ratios: DEFAULT_SPLIT_RATIOS,
            workers: 4,
            llm: BackendConfig::default(),
            sam: SamConfig::default(),
            segmenter: SegmenterSpec::Rectangle,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let cfg: RunConfig = super::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Invalid(m));
        if self.chip_size == 0 {
            return bad("chip_size must be positive".into());
        }
        if !(self.min_area_frac > 0.0 && self.min_area_frac <= 1.0) {
            return bad(format!(
                "min_area_frac {} not in (0, 1]",
                self.min_area_frac
            ));
        }
        for (name, p) in [
            ("interest_frac", self.interest_frac),
            ("spatial_prob", self.spatial_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} not in [0, 1]"));
            }
        }
        if self.unique_max == 0 {
            return bad("unique_max must be positive".into());
        }
        if !(1..=VARIANTS_PER_OBJECT).contains(&self.variants_per_object) {
            return bad(format!(
                "variants_per_object must be in 1..={VARIANTS_PER_OBJECT}"
            ));
        }
        self.llm.validate()?;
        self.sam
            .validate()
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            interest_frac: self.interest_frac,
            unique_max: self.unique_max,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `workers`.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            workers: 0,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
