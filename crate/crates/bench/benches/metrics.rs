use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gres_core::maskgen::{rle_decode, rle_encode, BinaryMask};
use gres_core::metrics::{bleu, cider, iou, CaptionItem};
use gres_core::objectives::{
    random_mask_instance, random_token_logits, total_loss_with_grad, LossWeights, DEFAULT_DICE_EPS,
};
use gres_core::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blob_mask(rng: &mut ChaCha8Rng, side: usize) -> BinaryMask {
    let mut m = BinaryMask::new(side, side);
    for _ in 0..8 {
        let w = rng.gen_range(8..side as i64 / 2);
        let h = rng.gen_range(8..side as i64 / 2);
        let b = BBox::new(
            rng.gen_range(0..side as i64 - w),
            rng.gen_range(0..side as i64 - h),
            w,
            h,
        );
        m.union_with(&BinaryMask::from_bbox(side, side, &b));
    }
    m
}

fn masks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("mask");
    for side in [128usize, 512] {
        let a = blob_mask(&mut rng, side);
        let b = blob_mask(&mut rng, side);
        let counts = rle_encode(&a);
        g.bench_with_input(BenchmarkId::new("iou", side), &side, |bench, _| {
            bench.iter(|| iou(black_box(&a), black_box(&b)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rle_encode", side), &side, |bench, _| {
            bench.iter(|| rle_encode(black_box(&a)))
        });
        g.bench_with_input(BenchmarkId::new("rle_decode", side), &side, |bench, &s| {
            bench.iter(|| rle_decode(black_box(&counts), s, s).unwrap())
        });
    }
    g.finish();
}

const WORDS: [&str; 16] = [
    "a", "the", "white", "red", "boat", "car", "bus", "near", "pier", "road", "parked", "large",
    "small", "shed", "along", "building",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..16);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn captions(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let items: Vec<CaptionItem> = (0..500)
        .map(|_| {
            let cand = sentence(&mut rng);
            let refs: Vec<String> = (0..5).map(|_| sentence(&mut rng)).collect();
            CaptionItem::from_text(&cand, &refs.iter().map(String::as_str).collect::<Vec<_>>())
        })
        .collect();
    c.bench_function("caption/bleu4_500", |b| {
        b.iter(|| bleu(black_box(&items), 4).unwrap())
    });
    c.bench_function("caption/cider_500", |b| {
        b.iter(|| cider(black_box(&items), 4, 6.0).unwrap())
    });
}

fn losses(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens = random_token_logits(&mut rng);
    let (pred, gt) = random_mask_instance(&mut rng);
    let w = LossWeights::default();
    c.bench_function("objectives/total_with_grad", |b| {
        b.iter(|| {
            total_loss_with_grad(
                black_box(&tokens),
                black_box(&pred),
                black_box(&gt),
                &w,
                DEFAULT_DICE_EPS,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, masks, captions, losses);
criterion_main!(benches);
