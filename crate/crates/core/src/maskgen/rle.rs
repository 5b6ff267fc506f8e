//! COCO-style uncompressed RLE: column-major, first run counts zeros.

use super::{BinaryMask, MaskError, RleMask};

pub fn rle_encode(m: &BinaryMask) -> Vec<u64> {
    let (w, h) = m.dims();
    if w * h == 0 {
        return Vec::new();
    }
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = m.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

pub fn rle_decode(counts: &[u64], width: usize, height: usize) -> Result<BinaryMask, MaskError> {
    let total: u64 = counts.iter().sum();
    if total != (width * height) as u64 {
        return Err(MaskError::RleLength {
            expected: width * height,
            got: total,
        });
    }
    let mut m = BinaryMask::new(width, height);
    let mut pos = 0usize;
    for (i, &run) in counts.iter().enumerate() {
        if i % 2 == 1 {
            for p in pos..pos + run as usize {
                m.set(p / height, p % height, true);
            }
        }
        pos += run as usize;
    }
    Ok(m)
}

impl From<&BinaryMask> for RleMask {
    fn from(m: &BinaryMask) -> Self {
        RleMask {
            width: m.width(),
            height: m.height(),
            rle_counts: rle_encode(m),
        }
    }
}

impl TryFrom<&RleMask> for BinaryMask {
    type Error = MaskError;

    fn try_from(r: &RleMask) -> Result<Self, Self::Error> {
        rle_decode(&r.rle_counts, r.width, r.height)
    }
}
