use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use serde_json::Value;

use super::{normalize_class_name, xview, BBox, GeoError, RawDetection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    /// xView-style GeoJSON FeatureCollection.
    XviewGeojson,
    /// One `{image_id, class_name, bbox: [x, y, w, h]}` object per line.
    Jsonl,
}

impl FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xview-geojson" | "geojson" => Ok(IngestFormat::XviewGeojson),
            "jsonl" => Ok(IngestFormat::Jsonl),
            other => Err(format!("unknown ingest format {other:?}")),
        }
    }
}

/// A record that could not be converted, with its position in the source.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RecordError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Default, Clone)]
pub struct IngestOutput {
    pub detections: Vec<RawDetection>,
    /// Boxes with zero (or negative) width or height, dropped.
    pub zero_area_dropped: usize,
    /// `unknown:<id>` label → occurrences.
    pub unknown_classes: BTreeMap<String, usize>,
    pub errors: Vec<RecordError>,
}

impl IngestOutput {
    fn push(&mut self, det: RawDetection) {
        if det.bbox.is_degenerate() {
            log::warn!(
                "dropping zero-area box {} for detection {}",
                det.bbox,
                det.detection_id
            );
            self.zero_area_dropped += 1;
        } else {
            self.detections.push(det);
        }
    }
}

/// Parses an annotation stream into raw detections.
///
/// Per-record problems are collected in [`IngestOutput::errors`]; only a
/// document that cannot be read at all is an `Err`.
pub fn ingest_detections(source: &str, format: IngestFormat) -> Result<IngestOutput, GeoError> {
    match format {
        IngestFormat::XviewGeojson => ingest_geojson(source),
        IngestFormat::Jsonl => Ok(ingest_jsonl(source)),
    }
}

fn ingest_geojson(source: &str) -> Result<IngestOutput, GeoError> {
    let doc: Value = serde_json::from_str(source).map_err(|e| GeoError::Document {
        format: "GeoJSON",
        message: e.to_string(),
    })?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoError::Document {
            format: "GeoJSON",
            message: "missing `features` array".into(),
        })?;

    let mut out = IngestOutput::default();
    for (index, feature) in features.iter().enumerate() {
        match geojson_feature(index, feature, &mut out.unknown_classes) {
            Ok(det) => out.push(det),
            Err(message) => out.errors.push(RecordError {
                location: format!("feature {index}"),
                message,
            }),
        }
    }
    Ok(out)
}

fn geojson_feature(
    index: usize,
    feature: &Value,
    unknown: &mut BTreeMap<String, usize>,
) -> Result<RawDetection, String> {
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or("missing properties object")?;

    let image_id = props
        .get("image_id")
        .map(scalar_to_string)
        .ok_or("missing image_id")?;
    if image_id.is_empty() {
        return Err("empty image_id".into());
    }

    let coords = props
        .get("bounds_imcoords")
        .and_then(Value::as_str)
        .ok_or("missing bounds_imcoords string")?;
    let bbox = parse_corner_string(coords)?;

    let class_name = if let Some(name) = props
        .get("class_name")
        .or_else(|| props.get("type_name"))
        .and_then(Value::as_str)
    {
        normalize_class_name(name)
    } else {
        let type_id = props
            .get("type_id")
            .ok_or("missing type_id or class field")?;
        let id = match type_id {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| format!("type_id {type_id} is not an integer"))?;
        match u32::try_from(id).ok().and_then(xview::class_name) {
            Some(name) => name.to_string(),
            None => {
                let label = format!("unknown:{id}");
                *unknown.entry(label.clone()).or_default() += 1;
                label
            }
        }
    };
    if class_name.is_empty() {
        return Err("empty class name".into());
    }

    let detection_id = feature
        .get("id")
        .or_else(|| props.get("feature_id"))
        .or_else(|| props.get("detection_id"))
        .map(scalar_to_string)
        .unwrap_or_else(|| format!("{image_id}#{index}"));

    Ok(RawDetection {
        detection_id,
        image_id,
        class_name,
        bbox,
    })
}

fn scalar_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    }
}

/// Parses `"x1,y1,x2,y2"` into `(x, y, w, h)`.
pub(crate) fn parse_corner_string(s: &str) -> Result<BBox, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 comma-separated coordinates, got {s:?}"));
    }
    let mut v = [0i64; 4];
    for (slot, part) in v.iter_mut().zip(&parts) {
        let f: f64 = part
            .parse()
            .map_err(|_| format!("coordinate {part:?} is not a number"))?;
        if !f.is_finite() {
            return Err(format!("coordinate {part:?} is not finite"));
        }
        *slot = f.round() as i64;
    }
    Ok(BBox::from_corners(v[0], v[1], v[2], v[3]))
}

#[derive(Deserialize)]
struct JsonlRecord {
    image_id: Value,
    class_name: String,
    bbox: [f64; 4],
    #[serde(default)]
    detection_id: Option<Value>,
}

fn ingest_jsonl(source: &str) -> IngestOutput {
    let mut out = IngestOutput::default();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RecordError {
            location: format!("line {line_no}"),
            message,
        };
        let rec: JsonlRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(err(e.to_string()));
                continue;
            }
        };
        let class_name = normalize_class_name(&rec.class_name);
        let image_id = scalar_to_string(&rec.image_id);
        if class_name.is_empty() || image_id.is_empty() {
            out.errors.push(err("empty class_name or image_id".into()));
            continue;
        }
        if rec.bbox.iter().any(|c| !c.is_finite()) {
            out.errors.push(err("non-finite bbox coordinate".into()));
            continue;
        }
        let [x, y, w, h] = rec.bbox.map(|c| c.round() as i64);
        out.push(RawDetection {
            detection_id: rec
                .detection_id
                .as_ref()
                .map(scalar_to_string)
                .unwrap_or_else(|| format!("{image_id}#{i}")),
            image_id,
            class_name,
            bbox: BBox::new(x, y, w, h),
        });
    }
    out
}
