//! Offline stand-in for a chat-completion model.
//!
//! Replies are a pure function of the prompt text and are shaped like what
//! the real model is asked to return for each prompt kind.

use sha2::{Digest, Sha256};

use crate::geodata::{BBox, Quadrant};
use crate::prompting::LOCATION_CLAUSE;

const COLORS: &[&str] = &[
    "white", "grey", "dark", "red", "blue", "silver", "beige", "black",
];
const SHAPES: &[&str] = &[
    "rectangular",
    "elongated",
    "square",
    "compact",
    "oval",
    "L-shaped",
];
const FEATURES: &[&str] = &[
    "a flat roof",
    "sharp straight edges",
    "a visible shadow",
    "a bright top surface",
    "a distinct outline",
    "a darker center",
];
const VERBS: &[&str] = &["Segment", "Locate", "Identify", "Find", "Show"];

pub(crate) fn digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn pick<'a>(h: &[u8; 32], slot: usize, options: &[&'a str]) -> &'a str {
    options[h[slot] as usize % options.len()]
}

fn line_value<'a>(prompt: &'a str, prefix: &str, suffix: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)))
}

fn parse_bbox(text: &str) -> Option<BBox> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?;
    let v: Vec<i64> = inner
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    (v.len() == 4).then(|| BBox::new(v[0], v[1], v[2], v[3]))
}

fn quadrant_512(b: &BBox) -> Quadrant {
    match (2 * b.y + b.h < 512, 2 * b.x + b.w < 512) {
        (true, true) => Quadrant::TopLeft,
        (true, false) => Quadrant::TopRight,
        (false, true) => Quadrant::BottomLeft,
        (false, false) => Quadrant::BottomRight,
    }
}

fn json_query(text: &str) -> String {
    serde_json::json!({ "query": text }).to_string()
}

pub(crate) fn mock_reply(prompt: &str) -> String {
    let h = digest(prompt);
    let class = line_value(prompt, "Only focus on ", " in the image.").unwrap_or("object");

    if prompt.contains("Generate a sentence (not a question)") {
        let size = line_value(prompt, "The bounding box of the ", ".")
            .and_then(|l| l.split_once(" is at coordinates "))
            .and_then(|(_, b)| parse_bbox(b))
            .map(|b| format!(" about {} by {} pixels", b.w, b.h))
            .unwrap_or_default();
        return format!(
            "The {class} is a {} {} object{size} with {}.",
            pick(&h, 0, COLORS),
            pick(&h, 1, SHAPES),
            pick(&h, 2, FEATURES)
        );
    }

    if prompt.contains("Please generate a query that would help locate") {
        let characteristics =
            line_value(prompt, "Generate the query considering the sentence: ", "")
                .unwrap_or("")
                .trim_end_matches('.');
        let descriptor = characteristics
            .split_once(" is ")
            .map_or(characteristics, |(_, rest)| rest);
        let location = if prompt.contains(LOCATION_CLAUSE) {
            line_value(prompt, "In the original image, where the image's origin is at the top left corner, the object is a ", ".")
                .and_then(|l| l.split_once(" located at bounding box coordinates "))
                .and_then(|(_, b)| parse_bbox(b))
                .map(|b| format!(" in the {} of the image", quadrant_512(&b).phrase()))
                .unwrap_or_default()
        } else {
            String::new()
        };
        return json_query(&format!(
            "{} the {class}{location} that is {descriptor}",
            pick(&h, 3, VERBS)
        ));
    }

    if let Some(principal) = line_value(prompt, "Query: ", "") {
        let variant = if prompt.contains("(2 of 2)") { 2 } else { 1 };
        let (first, rest) = principal.split_once(' ').unwrap_or((principal, ""));
        let verb = VERBS
            .iter()
            .cycle()
            .skip(h[4] as usize % VERBS.len())
            .find(|v| !v.eq_ignore_ascii_case(first))
            .unwrap();
        let text = if variant == 1 {
            format!("{verb} {rest}")
        } else {
            format!("In this image, {} {rest}", verb.to_lowercase())
        };
        return json_query(&text);
    }

    let tag: String = h[..4].iter().map(|b| format!("{b:02x}")).collect();
    json_query(&format!(
        "Locate the {class} described in the request ({tag})"
    ))
}
