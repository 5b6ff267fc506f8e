use serde::{Deserialize, Serialize};

use crate::geodata::BBox;

/// Row-major bit-per-pixel mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Mask with the (clipped) rectangle filled.
    pub fn from_bbox(width: usize, height: usize, bbox: &BBox) -> Self {
        let bounds = BBox::new(0, 0, width as i64, height as i64);
        let mut m = Self::new(width, height);
        if let Some(r) = bbox.intersect(&bounds) {
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    m.set(x as usize, y as usize, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) out of bounds"
        );
        let i = y * self.width + x;
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        debug_assert_eq!(self.dims(), other.dims());
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_area(&self, other: &BinaryMask) -> usize {
        debug_assert_eq!(self.dims(), other.dims());
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Set pixels inside `bbox`.
    pub fn area_within(&self, bbox: &BBox) -> usize {
        let bounds = BBox::new(0, 0, self.width as i64, self.height as i64);
        let Some(r) = bbox.intersect(&bounds) else {
            return 0;
        };
        let mut n = 0;
        for y in r.y..r.bottom() {
            for x in r.x..r.right() {
                n += self.get(x as usize, y as usize) as usize;
            }
        }
        n
    }

    pub fn iter_pixels(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| (self.words[i / 64] >> (i % 64)) & 1 == 1)
    }
}

/// Serialized form: dims plus column-major RLE counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub rle_counts: Vec<u64>,
}
