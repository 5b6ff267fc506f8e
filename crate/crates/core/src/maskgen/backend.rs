use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError, RleMask, SamConfig};
use crate::gateway::{HttpRequest, Transport, TransportError};
use crate::geodata::{BBox, ImageChip};

/// Anything that can split a bounding box region into mask parts.
pub trait SegmentBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Masks must have the chip's dimensions.
    fn segment(
        &self,
        chip: &ImageChip,
        bbox: &BBox,
        cfg: &SamConfig,
    ) -> Result<Vec<BinaryMask>, MaskError>;
}

/// Returns the filled bounding box as the single part.
#[derive(Debug, Default, Clone, Copy)]
pub struct RectangleStub;

impl SegmentBackend for RectangleStub {
    fn name(&self) -> &str {
        "rectangle-stub"
    }

    fn segment(
        &self,
        chip: &ImageChip,
        bbox: &BBox,
        _cfg: &SamConfig,
    ) -> Result<Vec<BinaryMask>, MaskError> {
        Ok(vec![BinaryMask::from_bbox(
            chip.width as usize,
            chip.height as usize,
            bbox,
        )])
    }
}

/// One line of a recorded-backend file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedSegmentation {
    pub chip_id: String,
    pub bbox: BBox,
    pub parts: Vec<RleMask>,
}

/// Replays backend answers captured earlier, keyed by `(chip_id, bbox)`.
#[derive(Debug, Default, Clone)]
pub struct RecordedBackend {
    entries: HashMap<(String, BBox), Vec<RleMask>>,
}

impl RecordedBackend {
    pub fn new(records: impl IntoIterator<Item = RecordedSegmentation>) -> Self {
        Self {
            entries: records
                .into_iter()
                .map(|r| ((r.chip_id, r.bbox), r.parts))
                .collect(),
        }
    }
}

impl SegmentBackend for RecordedBackend {
    fn name(&self) -> &str {
        "recorded"
    }

    fn segment(
        &self,
        chip: &ImageChip,
        bbox: &BBox,
        _cfg: &SamConfig,
    ) -> Result<Vec<BinaryMask>, MaskError> {
        let parts = self
            .entries
            .get(&(chip.chip_id.clone(), *bbox))
            .ok_or_else(|| {
                MaskError::Backend(format!("no recording for {} {}", chip.chip_id, bbox))
            })?;
        parts.iter().map(BinaryMask::try_from).collect()
    }
}

#[derive(Serialize)]
struct SegmentRequest<'a> {
    chip_uri: &'a str,
    bbox: BBox,
    config: &'a SamConfig,
}

#[derive(Deserialize)]
struct SegmentResponse {
    parts: Vec<RleMask>,
}

/// `POST {endpoint}/segment` over any [`Transport`].
pub struct HttpSegmentBackend {
    endpoint: String,
    transport: Arc<dyn Transport>,
}

impl HttpSegmentBackend {
    pub fn new(endpoint: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            transport,
        }
    }
}

impl SegmentBackend for HttpSegmentBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn segment(
        &self,
        chip: &ImageChip,
        bbox: &BBox,
        cfg: &SamConfig,
    ) -> Result<Vec<BinaryMask>, MaskError> {
        let uri = chip.pixel_uri.as_deref().unwrap_or(&chip.chip_id);
        let body = serde_json::to_string(&SegmentRequest {
            chip_uri: uri,
            bbox: *bbox,
            config: cfg,
        })
        .expect("request serializes");
        let req = HttpRequest {
            url: format!("{}/segment", self.endpoint),
            bearer: None,
            body,
        };
        let resp = self.transport.post_json(&req).map_err(|e| match e {
            TransportError::Timeout => MaskError::BackendUnavailable("timed out".into()),
            TransportError::Connection(m) => MaskError::BackendUnavailable(m),
        })?;
        if resp.status != 200 {
            return Err(MaskError::Backend(format!(
                "status {}: {}",
                resp.status, resp.body
            )));
        }
        let parsed: SegmentResponse = serde_json::from_str(&resp.body)
            .map_err(|e| MaskError::Backend(format!("bad response: {e}")))?;
        parsed.parts.iter().map(BinaryMask::try_from).collect()
    }
}
