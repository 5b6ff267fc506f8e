//! Reference training objectives with analytic gradients.
//!
//! `total = λ_txt·L_txt + λ_mask·(λ_bce·L_bce + λ_dice·L_dice)`, where
//! `L_txt` is token cross-entropy over counted positions and the mask
//! terms are computed on per-pixel logits. Everything is `f64` and
//! reduced in a fixed order, so results are bit-reproducible.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::maskgen::BinaryMask;

pub const DEFAULT_DICE_EPS: f64 = 1.0;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObjectiveError {
    #[error("no counted token positions")]
    EmptyTarget,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("target {target} at position {position} is outside vocabulary of size {vocab}")]
    TargetOutOfRange {
        position: usize,
        target: usize,
        vocab: usize,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("non-finite logit at index {0}")]
    NonFinite(usize),
    #[error("loss weights must be finite and non-negative")]
    InvalidWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_txt: f64,
    pub lambda_mask: f64,
    pub lambda_bce: f64,
    pub lambda_dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_txt: 1.0,
            lambda_mask: 1.0,
            lambda_bce: 2.0,
            lambda_dice: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if [
            self.lambda_txt,
            self.lambda_mask,
            self.lambda_bce,
            self.lambda_dice,
        ]
        .into_iter()
        .all(ok)
        {
            Ok(())
        } else {
            Err(ObjectiveError::InvalidWeights)
        }
    }
}

/// Per-pixel mask logits, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl LogitGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, ObjectiveError> {
        let g = Self {
            width,
            height,
            values,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            values: vec![v; width * height],
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.values.len() != self.width * self.height {
            return Err(ObjectiveError::Shape(format!(
                "{}x{} grid with {} values",
                self.width,
                self.height,
                self.values.len()
            )));
        }
        check_finite(&self.values)
    }

    fn check_against(&self, gt: &BinaryMask) -> Result<(), ObjectiveError> {
        self.validate()?;
        if gt.dims() != (self.width, self.height) {
            return Err(ObjectiveError::DimMismatch {
                expected: (self.width, self.height),
                got: gt.dims(),
            });
        }
        Ok(())
    }
}

/// Next-token logits for one sequence, `seq_len × vocab` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogits {
    pub vocab: usize,
    pub values: Vec<f64>,
    pub target: Vec<usize>,
    /// `true` marks a position that contributes to the loss.
    pub loss_mask: Vec<bool>,
}

impl TokenLogits {
    pub fn new(
        vocab: usize,
        values: Vec<f64>,
        target: Vec<usize>,
        loss_mask: Vec<bool>,
    ) -> Result<Self, ObjectiveError> {
        let t = Self {
            vocab,
            values,
            target,
            loss_mask,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn seq_len(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let t = self.seq_len();
        if self.vocab == 0 || self.values.len() != t * self.vocab || self.loss_mask.len() != t {
            return Err(ObjectiveError::Shape(format!(
                "T={t}, V={}, {} logits, {} mask entries",
                self.vocab,
                self.values.len(),
                self.loss_mask.len()
            )));
        }
        if let Some((position, &target)) = self
            .target
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= self.vocab)
        {
            return Err(ObjectiveError::TargetOutOfRange {
                position,
                target,
                vocab: self.vocab,
            });
        }
        check_finite(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_txt: f64,
    pub l_bce: f64,
    pub l_dice: f64,
    pub l_mask: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(l_txt: f64, l_bce: f64, l_dice: f64, w: &LossWeights) -> Self {
        let l_mask = w.lambda_bce * l_bce + w.lambda_dice * l_dice;
        Self {
            l_txt,
            l_bce,
            l_dice,
            l_mask,
            total: w.lambda_txt * l_txt + w.lambda_mask * l_mask,
        }
    }
}

fn check_finite(v: &[f64]) -> Result<(), ObjectiveError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(ObjectiveError::NonFinite(i)),
        None => Ok(()),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean cross-entropy over counted positions and its gradient w.r.t. every logit.
pub fn text_ce(tl: &TokenLogits) -> Result<(f64, Vec<f64>), ObjectiveError> {
    tl.validate()?;
    let count = tl.loss_mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(ObjectiveError::EmptyTarget);
    }
    let v = tl.vocab;
    let mut grad = vec![0.0; tl.values.len()];
    let mut loss = 0.0;
    for (t, row) in tl.values.chunks_exact(v).enumerate() {
        if !tl.loss_mask[t] {
            continue;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[tl.target[t]];
        let g = &mut grad[t * v..(t + 1) * v];
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - lse).exp() / count as f64;
        }
        g[tl.target[t]] -= 1.0 / count as f64;
    }
    Ok((loss / count as f64, grad))
}

/// Mean per-pixel binary cross-entropy on logits.
pub fn bce_with_logits(
    pred: &LogitGrid,
    gt: &BinaryMask,
) -> Result<(f64, Vec<f64>), ObjectiveError> {
    pred.check_against(gt)?;
    let n = pred.values.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut loss = 0.0;
    let grad = pred
        .values
        .iter()
        .zip(gt.iter_pixels())
        .map(|(&x, g)| {
            let g = g as u8 as f64;
            loss += x.max(0.0) - x * g + (-x.abs()).exp().ln_1p();
            (sigmoid(x) - g) / n as f64
        })
        .collect();
    Ok((loss / n as f64, grad))
}

/// Soft DICE loss on sigmoid probabilities, smoothed by `eps`.
pub fn dice_loss(
    pred: &LogitGrid,
    gt: &BinaryMask,
    eps: f64,
) -> Result<(f64, Vec<f64>), ObjectiveError> {
    pred.check_against(gt)?;
    let p: Vec<f64> = pred.values.iter().map(|&x| sigmoid(x)).collect();
    let mut inter = 0.0;
    let mut sum = 0.0;
    for (&pi, g) in p.iter().zip(gt.iter_pixels()) {
        let g = g as u8 as f64;
        inter += pi * g;
        sum += pi + g;
    }
    let num = 2.0 * inter + eps;
    let den = sum + eps;
    let grad = p
        .iter()
        .zip(gt.iter_pixels())
        .map(|(&pi, g)| {
            let g = g as u8 as f64;
            -(2.0 * g * den - num) / (den * den) * pi * (1.0 - pi)
        })
        .collect();
    Ok((1.0 - num / den, grad))
}

/// Gradient of the total loss, split by input.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalGradient {
    pub tokens: Vec<f64>,
    pub pixels: Vec<f64>,
}

pub fn total_loss(
    tl: &TokenLogits,
    pred: &LogitGrid,
    gt: &BinaryMask,
    w: &LossWeights,
) -> Result<LossBreakdown, ObjectiveError> {
    total_loss_with_grad(tl, pred, gt, w, DEFAULT_DICE_EPS).map(|(b, _)| b)
}

pub fn total_loss_with_grad(
    tl: &TokenLogits,
    pred: &LogitGrid,
    gt: &BinaryMask,
    w: &LossWeights,
    eps: f64,
) -> Result<(LossBreakdown, TotalGradient), ObjectiveError> {
    w.validate()?;
    let (l_txt, g_txt) = text_ce(tl)?;
    let (l_bce, g_bce) = bce_with_logits(pred, gt)?;
    let (l_dice, g_dice) = dice_loss(pred, gt, eps)?;
    let breakdown = LossBreakdown::compose(l_txt, l_bce, l_dice, w);
    let tokens = g_txt.iter().map(|g| w.lambda_txt * g).collect();
    let pixels = g_bce
        .iter()
        .zip(&g_dice)
        .map(|(b, d)| w.lambda_mask * (w.lambda_bce * b + w.lambda_dice * d))
        .collect();
    Ok((breakdown, TotalGradient { tokens, pixels }))
}

/// Largest relative error between the analytic gradient of `f` at `point`
/// and central differences with step `h`.
///
/// `f` returns the value and the analytic gradient.
pub fn finite_diff_check<F>(f: F, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    assert_eq!(
        analytic.len(),
        point.len(),
        "gradient length must match the point"
    );
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x).0;
        x[i] = orig - h;
        let down = f(&x).0;
        x[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / (fd.abs() + 1e-8));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub loss: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub dice_eps: f64,
    pub rows: Vec<GradCheckRow>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10}{:>10}{:>14}{:>11}  result",
            "loss", "instances", "max rel err", "tolerance"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10}{:>10}{:>14.3e}{:>11.0e}  {}",
                r.loss,
                r.instances,
                r.max_rel_err,
                r.tolerance,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

/// Random token logits with `T ≤ 8`, `V ≤ 32` and at least one counted position.
pub fn random_token_logits<R: Rng + ?Sized>(rng: &mut R) -> TokenLogits {
    let t = rng.gen_range(1..=8);
    let v = rng.gen_range(2..=32);
    let values = (0..t * v).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let target = (0..t).map(|_| rng.gen_range(0..v)).collect();
    let mut loss_mask: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.75)).collect();
    let keep = rng.gen_range(0..t);
    loss_mask[keep] = true;
    TokenLogits {
        vocab: v,
        values,
        target,
        loss_mask,
    }
}

/// Random logits and ground truth on a grid of at most 16×16.
pub fn random_mask_instance<R: Rng + ?Sized>(rng: &mut R) -> (LogitGrid, BinaryMask) {
    let w = rng.gen_range(1..=16);
    let h = rng.gen_range(1..=16);
    let values = (0..w * h).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let gt = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.5));
    (
        LogitGrid {
            width: w,
            height: h,
            values,
        },
        gt,
    )
}

/// Runs the finite-difference check on `instances` random problems per loss.
pub fn run_gradient_checks(seed: u64, instances: usize, dice_eps: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    let w = LossWeights::default();
    for _ in 0..instances {
        let tl = random_token_logits(&mut rng);
        let (grid, gt) = random_mask_instance(&mut rng);

        let e = finite_diff_check(
            |x| {
                let t = TokenLogits {
                    values: x.to_vec(),
                    ..tl.clone()
                };
                text_ce(&t).expect("valid instance")
            },
            &tl.values,
            DEFAULT_FD_STEP,
        );
        worst[0] = worst[0].max(e);

        let with_grid = |x: &[f64]| LogitGrid {
            values: x.to_vec(),
            ..grid.clone()
        };
        let e = finite_diff_check(
            |x| bce_with_logits(&with_grid(x), &gt).expect("valid instance"),
            &grid.values,
            DEFAULT_FD_STEP,
        );
        worst[1] = worst[1].max(e);

        let e = finite_diff_check(
            |x| dice_loss(&with_grid(x), &gt, dice_eps).expect("valid instance"),
            &grid.values,
            DEFAULT_FD_STEP,
        );
        worst[2] = worst[2].max(e);

        let split = tl.values.len();
        let mut point = tl.values.clone();
        point.extend_from_slice(&grid.values);
        let e = finite_diff_check(
            |x| {
                let t = TokenLogits {
                    values: x[..split].to_vec(),
                    ..tl.clone()
                };
                let (b, g) = total_loss_with_grad(&t, &with_grid(&x[split..]), &gt, &w, dice_eps)
                    .expect("valid instance");
                let mut flat = g.tokens;
                flat.extend(g.pixels);
                (b.total, flat)
            },
            &point,
            DEFAULT_FD_STEP,
        );
        worst[3] = worst[3].max(e);
    }
    let rows = ["text_ce", "bce", "dice", "total"]
        .iter()
        .zip(worst)
        .map(|(name, e)| GradCheckRow {
            loss: name.to_string(),
            instances,
            max_rel_err: e,
            tolerance: GRADIENT_TOLERANCE,
            passed: e < GRADIENT_TOLERANCE,
        })
        .collect();
    GradCheckReport {
        seed,
        dice_eps,
        rows,
    }
}
