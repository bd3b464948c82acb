//! Lung segmentation toolkit.
//!
//! * [`tensor`]: CHW tensors and the primitive layers (convolution, ReLU, batch norm,
//!   nearest upsampling, channel softmax/argmax).
//! * [`decoder`]: encoder stub + four upsample/conv/ReLU/BN decoder blocks + softmax
//!   classifier, with the `SEGW` weight file format ([`segw`]) and text configs ([`config`]).
//! * [`postprocess`]: connected-component labeling and the keep-the-largest-regions filter.
//! * [`metrics`]: foreground Dice and IoU with macro and micro aggregation.
//! * [`io`], [`fixtures`], [`harness`]: mask files, overlays, synthetic data and the
//!   batch drivers used by the `lungseg` binary.
//!
//! ```
//! use lungseg::mask::BinaryMask;
//! use lungseg::metrics::{dice, iou};
//! use lungseg::postprocess::{keep_largest_k, Connectivity};
//!
//! let gt = BinaryMask::from_fn(8, 8, |y, x| (2..7).contains(&y) && (x < 3 || x > 4));
//! let mut pred = gt.clone();
//! pred.set(0, 4, true); // stray fragment
//! let cleaned = keep_largest_k(&pred, 2, Connectivity::Eight).unwrap();
//! assert_eq!(cleaned, gt);
//! assert!(dice(&cleaned, &gt).unwrap() > dice(&pred, &gt).unwrap());
//! assert_eq!(iou(&cleaned, &gt).unwrap(), 1.0);
//! ```

pub mod config;
pub mod decoder;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod postprocess;
pub mod segw;
pub mod tensor;

pub use config::DecoderConfig;
pub use decoder::{decoder_block, encoder_stub, forward, load_weights, predict_mask, save_weights, WeightStore};
pub use error::{Result, SegError, WeightFileError};
pub use mask::{BinaryMask, LabelImage};
pub use metrics::{aggregate, dice, iou, overlap_counts, OverlapCounts, PairReport, Summary};
pub use postprocess::{keep_largest_k, label_components, post_process, ComponentStats, Connectivity};
pub use tensor::{BnParams, KernelBank, Tensor};
