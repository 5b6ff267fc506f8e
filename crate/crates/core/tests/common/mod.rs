#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use gres_core::gateway::{Clock, HttpRequest, HttpResponse, Transport, TransportError};
use gres_core::geodata::{BBox, Detection, ImageChip};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Transport that replays a fixed status sequence and records dispatch times.
pub struct ScriptedTransport {
    pub script: Mutex<VecDeque<Result<u16, TransportError>>>,
    pub fallback: u16,
    pub calls: Mutex<Vec<Duration>>,
    pub clock: Arc<dyn Clock>,
    pub content: String,
}

impl ScriptedTransport {
    pub fn new(
        clock: Arc<dyn Clock>,
        script: Vec<Result<u16, TransportError>>,
        fallback: u16,
    ) -> Self {
        Self {
            script: Mutex::new(script.into()),
            fallback,
            calls: Mutex::new(Vec::new()),
            clock,
            content: "{\"query\": \"Locate the barge\"}".into(),
        }
    }

    pub fn call_times(&self) -> Vec<Duration> {
        self.calls.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, _req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.lock().unwrap().push(self.clock.now());
        let next = self
            .script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or(Ok(self.fallback));
        let status = next?;
        let body = if status == 200 {
            serde_json::json!({"choices": [{"message": {"role": "assistant", "content": self.content}}]}).to_string()
        } else {
            "{\"error\": \"scripted\"}".to_string()
        };
        Ok(HttpResponse { status, body })
    }
}

/// Largest number of timestamps inside any half-open 60 s window.
pub fn max_in_window(times: &[Duration]) -> usize {
    let mut t = times.to_vec();
    t.sort();
    let w = Duration::from_secs(60);
    (0..t.len())
        .map(|i| t[i..].iter().take_while(|&&x| x < t[i] + w).count())
        .max()
        .unwrap_or(0)
}

/// Exhaustive filter oracle: recounts everything from scratch with
/// floating-point box centers.
pub fn filter_oracle(
    chips: &[ImageChip],
    dets: &[Detection],
    interest_frac: f64,
    unique_max: usize,
) -> Vec<Detection> {
    let total = dets.len() as f64;
    let quadrant = |d: &Detection, c: &ImageChip| {
        let cx = d.bbox.x as f64 + d.bbox.w as f64 / 2.0;
        let cy = d.bbox.y as f64 + d.bbox.h as f64 / 2.0;
        (cx < c.width as f64 / 2.0, cy < c.height as f64 / 2.0)
    };
    let mut out: Vec<Detection> = dets
        .iter()
        .filter(|d| {
            let Some(c) = chips.iter().find(|c| c.chip_id == d.chip_id) else {
                return false;
            };
            let class_count = dets.iter().filter(|o| o.class_name == d.class_name).count() as f64;
            let same_quadrant = dets
                .iter()
                .filter(|o| {
                    o.chip_id == d.chip_id
                        && o.class_name == d.class_name
                        && quadrant(o, c) == quadrant(d, c)
                })
                .count();
            class_count / total < interest_frac && same_quadrant < unique_max
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| (&a.chip_id, &a.detection_id).cmp(&(&b.chip_id, &b.detection_id)));
    out
}

pub fn chip(id: &str, w: u32, h: u32) -> ImageChip {
    ImageChip {
        chip_id: id.into(),
        source_image_id: id.into(),
        origin: (0, 0),
        width: w,
        height: h,
        pixel_uri: None,
    }
}

pub fn det(id: &str, chip: &str, class: &str, bbox: BBox) -> Detection {
    Detection {
        detection_id: id.into(),
        chip_id: chip.into(),
        class_name: class.into(),
        bbox,
    }
}

fn ngrams(tokens: &[&str], n: usize) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(tokens[i..i + n].join(" ")).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// CIDEr-D recomputed directly from the published definition.
pub fn cider_oracle(items: &[(&str, Vec<&str>)]) -> Vec<f64> {
    let toks = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .chars()
            .filter(|c| !c.is_ascii_punctuation())
            .collect::<String>()
            .split_whitespace()
            .map(String::from)
            .collect()
    };
    let n_docs = items.len() as f64;
    let mut df: BTreeMap<String, f64> = BTreeMap::new();
    for (_, refs) in items {
        let mut seen = std::collections::BTreeSet::new();
        for r in refs {
            let t = toks(r);
            let t: Vec<&str> = t.iter().map(String::as_str).collect();
            for n in 1..=4 {
                seen.extend(ngrams(&t, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0.0) += 1.0;
        }
    }
    let vec_of = |s: &str| -> (Vec<BTreeMap<String, f64>>, f64) {
        let t = toks(s);
        let t: Vec<&str> = t.iter().map(String::as_str).collect();
        let v = (1..=4)
            .map(|n| {
                ngrams(&t, n)
                    .into_iter()
                    .map(|(g, tf)| {
                        let d = df.get(&g).copied().unwrap_or(0.0).max(1.0);
                        (g, tf * (n_docs.ln() - d.ln()))
                    })
                    .collect()
            })
            .collect();
        (v, t.len().saturating_sub(1) as f64)
    };
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    items
        .iter()
        .map(|(cand, refs)| {
            let (hv, hl) = vec_of(cand);
            let mut total = 0.0;
            for r in refs {
                let (rv, rl) = vec_of(r);
                let pen = (-((hl - rl) * (hl - rl)) / 72.0).exp();
                let mut per_n = 0.0;
                for n in 0..4 {
                    let mut dot = 0.0;
                    for (g, h) in &hv[n] {
                        if let Some(x) = rv[n].get(g) {
                            dot += h.min(*x) * x;
                        }
                    }
                    let (a, b) = (norm(&hv[n]), norm(&rv[n]));
                    if a != 0.0 && b != 0.0 {
                        dot /= a * b;
                    }
                    per_n += dot * pen;
                }
                total += per_n / 4.0;
            }
            total / refs.len() as f64 * 10.0
        })
        .collect()
}
