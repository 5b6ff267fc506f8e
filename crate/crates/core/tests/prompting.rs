use gres_core::geodata::{BBox, Detection};
use gres_core::prompting::{
    parse_query_response, render_rephrase, render_stage1, render_stage2, REPHRASE_TEMPLATE,
    STAGE1_TEMPLATE, STAGE2_TEMPLATE,
};

const CLASS: &str = "Zqxclass";
const CHARS: &str = "Zqxcharacteristics";

fn target() -> Detection {
    Detection {
        detection_id: "t".into(),
        chip_id: "c".into(),
        class_name: CLASS.into(),
        bbox: BBox::new(101, 202, 33, 44),
    }
}

/// Maps sentinel values back to their slot names.
fn unfill(rendered: &str) -> String {
    rendered
        .replace(&format!("1 {CLASS}"), "{classes_list_str}")
        .replace(CLASS, "{class_name}")
        .replace("[101, 202, 33, 44]", "{bbox}")
        .replace(CHARS, "{unique_characteristics.query}")
}

#[test]
fn stage1_is_the_template_verbatim() {
    let d = target();
    let out = render_stage1(&d, std::slice::from_ref(&d)).unwrap();
    assert_eq!(unfill(&out), STAGE1_TEMPLATE);
}

#[test]
fn stage2_is_the_template_with_one_branch_per_conditional() {
    let d = target();
    let peers = [d.clone()];
    let conds = [
        (
            "{ ' located at bounding box coordinates {bbox}.' if include_bbox else '.'}",
            " located at bounding box coordinates {bbox}.",
            ".",
        ),
        (
            "{ 'and the location described by the bounding box.' if include_bbox else '.'}",
            "and the location described by the bounding box.",
            ".",
        ),
        (
            "{ 'Do not mention or use any location-related info such as: top, near the center in your query.' if not include_bbox else ''}",
            "",
            "Do not mention or use any location-related info such as: top, near the center in your query.",
        ),
    ];
    for include in [true, false] {
        let mut want = STAGE2_TEMPLATE.to_string();
        for (expr, yes, no) in conds {
            assert!(want.contains(expr), "template lost conditional {expr}");
            want = want.replace(expr, if include { yes } else { no });
        }
        let out = render_stage2(&d, &peers, CHARS, include).unwrap();
        assert_eq!(unfill(&out), want, "include_bbox = {include}");
    }
}

#[test]
fn rephrase_fills_every_slot() {
    for v in [1, 2] {
        let out = render_rephrase("Segment the Zqx thing", v, false).unwrap();
        assert!(out.contains(&format!("({v} of 2)")));
        assert!(out.contains("Query: Segment the Zqx thing\n"));
        assert!(
            !out.contains("{variant}")
                && !out.contains("{principal}")
                && !out.contains("{spatial_rule}")
        );
    }
    assert!(REPHRASE_TEMPLATE.ends_with("{\"query\": \"<your_query_here>\"}"));
}

#[test]
fn sentinel_values_with_braces_are_not_rescanned() {
    let mut d = target();
    d.class_name = "{bbox}".into();
    let out = render_stage1(&d, &[d.clone()]).unwrap();
    assert!(out.contains("Only focus on {bbox} in the image."));
}

#[test]
fn reply_parsing() {
    assert_eq!(
        parse_query_response("{\"query\": \"Locate the barge.\"}").unwrap(),
        "Locate the barge."
    );
    assert_eq!(
        parse_query_response("Sure:\n```json\n{\"query\": \"Find the bus\"}\n```").unwrap(),
        "Find the bus"
    );
    assert!(parse_query_response("no json here").is_err());
    assert!(parse_query_response("{\"query\": \"\"}").is_err());
}
