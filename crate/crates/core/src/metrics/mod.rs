//! Evaluation: segmentation IoU (gIoU/cIoU), caption metrics, VQA accuracy.

mod caption;
mod seg;
mod vqa;

pub use caption::{
    bleu, cider, cider_scores, cider_with_idf, rouge_l, tokenize, CaptionItem, CaptionReport,
    CiderIdf,
};
pub use seg::{
    evaluate_segmentation, iou, Bucket, BucketStats, SegReport, SegSample, SMALL_OBJECT_AREA,
};
pub use vqa::{vqa_accuracy, CategoryAccuracy, VqaCategory, VqaItem, VqaReport};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("masks differ in size: {0:?} vs {1:?}")]
    DimMismatch((usize, usize), (usize, usize)),
    #[error("no samples to evaluate")]
    Empty,
    #[error("item {0} has no reference captions")]
    NoReferences(usize),
    #[error(
        "CIDEr needs at least 2 items to estimate document frequencies, or an explicit idf table"
    )]
    CorpusTooSmall,
}
