//! Foreground-only overlap metrics between a predicted mask `B` and ground truth `A`.
//!
//! `dice = 2|A∩B| / (|A| + |B|)` and `iou = |A∩B| / |A∪B|`, both evaluated from
//! integer confusion counts with a single final division. The background class
//! (true negatives) never enters either score.

use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::mask::BinaryMask;

/// Pixel confusion counts of a prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl OverlapCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Both masks empty: neither score has a denominator.
    pub fn is_degenerate(&self) -> bool {
        self.true_pos + self.false_pos + self.false_neg == 0
    }

    /// 1.0 for the degenerate both-empty case.
    pub fn dice(&self) -> f64 {
        if self.is_degenerate() {
            return 1.0;
        }
        let tp2 = 2 * self.true_pos;
        tp2 as f64 / (tp2 + self.false_pos + self.false_neg) as f64
    }

    /// 1.0 for the degenerate both-empty case.
    pub fn iou(&self) -> f64 {
        if self.is_degenerate() {
            return 1.0;
        }
        self.true_pos as f64 / (self.true_pos + self.false_pos + self.false_neg) as f64
    }
}

impl Add for OverlapCounts {
    type Output = OverlapCounts;

    fn add(self, rhs: OverlapCounts) -> OverlapCounts {
        OverlapCounts {
            true_pos: self.true_pos + rhs.true_pos,
            false_pos: self.false_pos + rhs.false_pos,
            false_neg: self.false_neg + rhs.false_neg,
            true_neg: self.true_neg + rhs.true_neg,
        }
    }
}

pub fn overlap_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<OverlapCounts> {
    if pred.dims() != gt.dims() {
        return Err(SegError::Contract(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut c = OverlapCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(overlap_counts(pred, gt)?.dice())
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(overlap_counts(pred, gt)?.iou())
}

/// Scores of one prediction/ground-truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub id: String,
    pub dice: f64,
    pub iou: f64,
    pub counts: OverlapCounts,
    pub degenerate: bool,
    pub post_processed: bool,
}

impl PairReport {
    pub fn from_counts(id: impl Into<String>, counts: OverlapCounts, post_processed: bool) -> Self {
        PairReport {
            id: id.into(),
            dice: counts.dice(),
            iou: counts.iou(),
            counts,
            degenerate: counts.is_degenerate(),
            post_processed,
        }
    }

    pub fn evaluate(id: impl Into<String>, pred: &BinaryMask, gt: &BinaryMask, post_processed: bool) -> Result<Self> {
        Ok(Self::from_counts(id, overlap_counts(pred, gt)?, post_processed))
    }
}

/// Test-set aggregate. `macro_*` (mean of per-image scores) is the headline figure;
/// `micro_*` pools pixel counts over all images before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub images: usize,
    pub degenerate: usize,
    pub macro_dice: f64,
    pub macro_iou: f64,
    pub micro_dice: f64,
    pub micro_iou: f64,
    pub pooled: OverlapCounts,
}

pub fn aggregate(reports: &[PairReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(SegError::Config("cannot aggregate an empty list of reports".into()));
    }
    let n = reports.len() as f64;
    let pooled = reports.iter().fold(OverlapCounts::default(), |acc, r| acc + r.counts);
    Ok(Summary {
        images: reports.len(),
        degenerate: reports.iter().filter(|r| r.degenerate).count(),
        macro_dice: reports.iter().map(|r| r.dice).sum::<f64>() / n,
        macro_iou: reports.iter().map(|r| r.iou).sum::<f64>() / n,
        micro_dice: pooled.dice(),
        micro_iou: pooled.iou(),
        pooled,
    })
}
