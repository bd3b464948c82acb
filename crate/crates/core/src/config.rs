//! Decoder architecture hyperparameters and their flat `key = value` text form.
//!
//! ```text
//! # lines starting with '#' are comments
//! num_blocks = 4
//! block_channels = 256, 128, 64, 32
//! kernel_size = 3
//! upsample_factor = 2
//! num_classes = 2
//! encoder_channels = 512
//! encoder_downsample = 16
//! input_channels = 1
//! bn_epsilon = 0.001
//! ```
//!
//! Omitted keys take their default values; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SegError};
use crate::tensor::DEFAULT_BN_EPSILON;

/// Kernel size of every encoder-stub convolution.
pub const ENCODER_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub num_blocks: usize,
    pub block_channels: Vec<usize>,
    pub kernel_size: usize,
    pub upsample_factor: usize,
    pub num_classes: usize,
    pub encoder_channels: usize,
    pub encoder_downsample: usize,
    /// 1 for grayscale, 3 for RGB input.
    pub input_channels: usize,
    pub bn_epsilon: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            num_blocks: 4,
            block_channels: vec![256, 128, 64, 32],
            kernel_size: 3,
            upsample_factor: 2,
            num_classes: 2,
            encoder_channels: 512,
            encoder_downsample: 16,
            input_channels: 1,
            bn_epsilon: DEFAULT_BN_EPSILON,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SegError::Config(msg));
        if self.num_blocks != self.block_channels.len() {
            return bad(format!(
                "num_blocks is {} but block_channels lists {} entries",
                self.num_blocks,
                self.block_channels.len()
            ));
        }
        if let Some(i) = self.block_channels.iter().position(|&c| c == 0) {
            return bad(format!("block {i} has zero channels"));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes {} must be at least 2", self.num_classes));
        }
        if self.encoder_channels == 0 {
            return bad("encoder_channels must be positive".into());
        }
        if !(self.input_channels == 1 || self.input_channels == 3) {
            return bad(format!("input_channels {} must be 1 or 3", self.input_channels));
        }
        if self.encoder_downsample < 2 || !self.encoder_downsample.is_power_of_two() {
            return bad(format!(
                "encoder_downsample {} must be a power of two >= 2",
                self.encoder_downsample
            ));
        }
        if self.upsample_factor == 0 {
            return bad("upsample_factor must be positive".into());
        }
        let restored = u32::try_from(self.num_blocks)
            .ok()
            .and_then(|n| self.upsample_factor.checked_pow(n));
        if restored != Some(self.encoder_downsample) {
            return bad(format!(
                "upsample_factor^num_blocks = {}^{} must equal encoder_downsample {}",
                self.upsample_factor, self.num_blocks, self.encoder_downsample
            ));
        }
        if !(self.bn_epsilon.is_finite() && self.bn_epsilon > 0.0) {
            return bad(format!("bn_epsilon {} must be positive", self.bn_epsilon));
        }
        Ok(())
    }

    /// Number of stride-2 stages in the encoder stub.
    pub fn encoder_stages(&self) -> usize {
        self.encoder_downsample.trailing_zeros() as usize
    }

    /// Output channels of each encoder stage, doubling up to `encoder_channels`.
    pub fn encoder_stage_channels(&self) -> Vec<usize> {
        let n = self.encoder_stages();
        (0..n).map(|s| (self.encoder_channels >> (n - 1 - s)).max(1)).collect()
    }

    /// Input channels of decoder block `i`.
    pub fn block_input_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.encoder_channels
        } else {
            self.block_channels[i - 1]
        }
    }

    /// Channels fed to the classifier.
    pub fn decoder_output_channels(&self) -> usize {
        *self.block_channels.last().unwrap_or(&self.encoder_channels)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = DecoderConfig::default();
        let mut saw_blocks = false;
        let mut saw_channels = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(body, _)| body).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SegError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let count = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| SegError::Config(format!("line {}: `{key}` expects a count, got `{v}`", lineno + 1)))
            };
            match key {
                "num_blocks" => {
                    c.num_blocks = count(value)?;
                    saw_blocks = true;
                }
                "block_channels" => {
                    c.block_channels = value.split(',').map(|v| count(v.trim())).collect::<Result<_>>()?;
                    saw_channels = true;
                }
                "kernel_size" => c.kernel_size = count(value)?,
                "upsample_factor" => c.upsample_factor = count(value)?,
                "num_classes" => c.num_classes = count(value)?,
                "encoder_channels" => c.encoder_channels = count(value)?,
                "encoder_downsample" => c.encoder_downsample = count(value)?,
                "input_channels" => c.input_channels = count(value)?,
                "bn_epsilon" => {
                    c.bn_epsilon = value.parse().map_err(|_| {
                        SegError::Config(format!(
                            "line {}: `bn_epsilon` expects a real number, got `{value}`",
                            lineno + 1
                        ))
                    })?
                }
                other => {
                    return Err(SegError::Config(format!(
                        "line {}: unknown config key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        if saw_channels && !saw_blocks {
            c.num_blocks = c.block_channels.len();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SegError::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let channels: Vec<String> = self.block_channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "num_blocks = {}", self.num_blocks);
        let _ = writeln!(s, "block_channels = {}", channels.join(", "));
        let _ = writeln!(s, "kernel_size = {}", self.kernel_size);
        let _ = writeln!(s, "upsample_factor = {}", self.upsample_factor);
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "encoder_channels = {}", self.encoder_channels);
        let _ = writeln!(s, "encoder_downsample = {}", self.encoder_downsample);
        let _ = writeln!(s, "input_channels = {}", self.input_channels);
        let _ = writeln!(s, "bn_epsilon = {:?}", self.bn_epsilon);
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
