mod common;

use common::{chip, cider_oracle, det, filter_oracle};
use gres_core::geodata::{
    filter_candidates, make_splits, quadrant_of, BBox, FilterParams, Quadrant,
};
use gres_core::maskgen::{merge_parts, rle_decode, rle_encode, BinaryMask, MaskPart, RleMask};
use gres_core::metrics::{bleu, cider_scores, iou, rouge_l, CaptionItem};
use proptest::prelude::*;

fn arb_mask(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h)
            .prop_map(move |bits| BinaryMask::from_fn(w, h, |x, y| bits[y * w + x]))
    })
}

fn arb_mask_pair(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(any::<bool>(), w * h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
            .prop_map(move |(a, b)| {
                (
                    BinaryMask::from_fn(w, h, |x, y| a[y * w + x]),
                    BinaryMask::from_fn(w, h, |x, y| b[y * w + x]),
                )
            })
    })
}

/// Detections as (chip index, class index, x, y, w, h) inside 64x64 or 33x33 chips.
fn arb_corpus() -> impl Strategy<Value = (Vec<gres_core::ImageChip>, Vec<gres_core::Detection>)> {
    let chips = proptest::collection::vec(prop_oneof![Just(64u32), Just(33u32)], 1..5);
    chips.prop_flat_map(|sizes| {
        let n = sizes.len();
        let dets = proptest::collection::vec(
            (
                0..n,
                0..4usize,
                0.0..1.0f64,
                0.0..1.0f64,
                1..20i64,
                1..20i64,
            ),
            0..40,
        );
        (Just(sizes), dets).prop_map(|(sizes, raw)| {
            let chips: Vec<_> = sizes
                .iter()
                .enumerate()
                .map(|(i, s)| chip(&format!("c{i}"), *s, *s))
                .collect();
            let dets = raw
                .into_iter()
                .enumerate()
                .map(|(i, (c, k, fx, fy, w, h))| {
                    let side = sizes[c] as i64;
                    let (w, h) = (w.min(side), h.min(side));
                    let x = (fx * (side - w) as f64) as i64;
                    let y = (fy * (side - h) as f64) as i64;
                    det(
                        &format!("d{i:02}"),
                        &format!("c{c}"),
                        &format!("k{k}"),
                        BBox::new(x, y, w, h),
                    )
                })
                .collect();
            (chips, dets)
        })
    })
}

const WORDS: [&str; 8] = ["a", "red", "car", "near", "the", "big", "shed", "road"];

fn arb_sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec(0..WORDS.len(), 1..10)
        .prop_map(|ix| ix.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rle_round_trip(m in arb_mask(24)) {
        let (w, h) = m.dims();
        let counts = rle_encode(&m);
        prop_assert_eq!(counts.iter().sum::<u64>(), (w * h) as u64);
        prop_assert!(counts.iter().skip(1).all(|&c| c > 0));
        prop_assert_eq!(rle_decode(&counts, w, h).unwrap(), m.clone());
        let rle = RleMask::from(&m);
        prop_assert_eq!(BinaryMask::try_from(&rle).unwrap(), m);
    }

    #[test]
    fn iou_is_symmetric_and_bounded((a, b) in arb_mask_pair(16)) {
        let x = iou(&a, &b).unwrap();
        prop_assert_eq!(x, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
        let inter = a.intersection_area(&b) as f64;
        let union = a.union_area(&b) as f64;
        prop_assert_eq!(inter + union, (a.area() + b.area()) as f64);
        prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn filter_agrees_with_oracle((chips, dets) in arb_corpus()) {
        prop_assert_eq!(filter_candidates(&chips, &dets, FilterParams::default()), filter_oracle(&chips, &dets, 0.5, 2));
    }

    #[test]
    fn quadrants_are_exhaustive(side in 1u32..600, x in 0i64..600, y in 0i64..600, w in 1i64..600, h in 1i64..600) {
        let c = chip("c", side, side);
        let d = det("d", "c", "k", BBox::new(x, y, w, h));
        let left = (x as f64 + w as f64 / 2.0) < side as f64 / 2.0;
        let top = (y as f64 + h as f64 / 2.0) < side as f64 / 2.0;
        let want = match (top, left) {
            (true, true) => Quadrant::TopLeft,
            (true, false) => Quadrant::TopRight,
            (false, true) => Quadrant::BottomLeft,
            (false, false) => Quadrant::BottomRight,
        };
        prop_assert_eq!(quadrant_of(&d, &c), want);
    }

    #[test]
    fn splits_partition_chips(n in 3usize..300, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("chip{i:04}")).collect();
        let a = make_splits(&ids, seed, [0.7, 0.1, 0.2]).unwrap();
        prop_assert_eq!(a.splits.len(), n);
        let counts = a.counts();
        for (c, r) in counts.iter().zip([0.7, 0.1, 0.2]) {
            prop_assert!((*c as f64 - r * n as f64).abs() < 1.0 + 1e-9);
        }
        let mut shuffled = ids.clone();
        shuffled.reverse();
        prop_assert_eq!(make_splits(&shuffled, seed, [0.7, 0.1, 0.2]).unwrap(), a);
    }

    #[test]
    fn merge_is_union_of_qualifying_parts(parts in proptest::collection::vec((0i64..20, 0i64..20, 1i64..20, 1i64..20), 0..5)) {
        let (w, h) = (32usize, 32usize);
        let bbox = BBox::new(4, 4, 20, 20);
        let parts: Vec<MaskPart> = parts
            .into_iter()
            .map(|(x, y, pw, ph)| MaskPart::new(BinaryMask::from_bbox(w, h, &BBox::new(x, y, pw, ph)), &bbox))
            .collect();
        let merged = merge_parts(&parts, w, h).unwrap();
        let keep: Vec<&MaskPart> = parts.iter().filter(|p| p.mask.area_within(&bbox) > 80).collect();
        prop_assert_eq!(merged.parts_used, keep.len());
        prop_assert_eq!(merged.degenerate, keep.is_empty());
        let want = BinaryMask::from_fn(w, h, |x, y| keep.iter().any(|p| p.mask.get(x, y)));
        prop_assert_eq!(merged.mask, want);
    }

    #[test]
    fn caption_metrics_bounded(pairs in proptest::collection::vec((arb_sentence(), proptest::collection::vec(arb_sentence(), 1..4)), 2..6)) {
        let items: Vec<CaptionItem> = pairs
            .iter()
            .map(|(c, refs)| CaptionItem::from_text(c, &refs.iter().map(String::as_str).collect::<Vec<_>>()))
            .collect();
        for b in bleu(&items, 4).unwrap() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        }
        let r = rouge_l(&items, 1.2).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));

        let got = cider_scores(&items, 4, 6.0).unwrap();
        let oracle_in: Vec<(&str, Vec<&str>)> = pairs
            .iter()
            .map(|(c, refs)| (c.as_str(), refs.iter().map(String::as_str).collect()))
            .collect();
        let want = cider_oracle(&oracle_in);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{} vs {}", g, w);
        }
    }
}

#[test]
fn identical_captions_score_perfectly() {
    let items = vec![
        CaptionItem::from_text("a red car near the road", &["a red car near the road"]),
        CaptionItem::from_text("the big shed", &["the big shed"]),
    ];
    let b = bleu(&items, 4).unwrap();
    assert!(b.iter().all(|x| (x - 1.0).abs() < 1e-12), "{b:?}");
    assert!((rouge_l(&items, 1.2).unwrap() - 1.0).abs() < 1e-12);
}
