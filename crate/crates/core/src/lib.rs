//! Dataset synthesis and evaluation toolkit for reasoning segmentation on
//! satellite imagery.
//!
//! The crate covers the whole data path: detections are ingested and cut
//! into 512×512 chips ([`geodata`]), filtered down to unique and visually
//! interesting objects, turned into natural-language queries through a
//! chat-completion backend ([`prompting`], [`gateway`]), paired with pixel
//! masks from a segmentation backend ([`maskgen`]) and packaged into a
//! manifest ([`pipeline`]). [`metrics`] and [`objectives`] hold the
//! evaluation stack and the reference training losses.

pub mod gateway;
pub mod geodata;
pub mod jsonl;
pub mod maskgen;
pub mod metrics;
pub mod objectives;
pub mod pipeline;
pub mod prompting;

pub use geodata::{BBox, Detection, ImageChip, Quadrant, RawDetection};
pub use maskgen::BinaryMask;
