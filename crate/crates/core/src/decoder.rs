//! Encoder-decoder segmentation network: a strided-convolution encoder stub, a chain
//! of decoder blocks (upsample, conv, ReLU, batch norm) and a 1×1 classifier
//! followed by a per-pixel softmax over the classes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DecoderConfig, ENCODER_KERNEL};
use crate::error::{Result, SegError, WeightFileError};
use crate::mask::BinaryMask;
use crate::segw::{self, Record, RecordHeader};
use crate::tensor::{
    argmax_channels, batch_norm, conv2d, conv2d_strided, relu, softmax_channels, upsample_nearest, BnParams,
    KernelBank, Tensor,
};

/// Learned parameters of one decoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub conv: KernelBank,
    pub bn: BnParams,
}

/// All learned parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub encoder: Vec<KernelBank>,
    pub blocks: Vec<BlockWeights>,
    pub classifier: KernelBank,
}

/// One expected record: its layer, file name and shape.
struct Slot {
    layer: String,
    header: RecordHeader,
}

fn schema(c: &DecoderConfig) -> Vec<Slot> {
    let mut slots = Vec::new();
    let mut push = |layer: &str, name: String, dims: Vec<usize>| {
        slots.push(Slot {
            layer: layer.to_string(),
            header: RecordHeader::new(name, dims),
        })
    };
    let mut in_ch = c.input_channels;
    for (s, out) in c.encoder_stage_channels().into_iter().enumerate() {
        let layer = format!("encoder stage {s}");
        push(
            &layer,
            format!("encoder.{s}.weight"),
            vec![out, in_ch, ENCODER_KERNEL, ENCODER_KERNEL],
        );
        push(&layer, format!("encoder.{s}.bias"), vec![out]);
        in_ch = out;
    }
    let k = c.kernel_size;
    for (i, &out) in c.block_channels.iter().enumerate() {
        let layer = format!("block {i}");
        push(
            &layer,
            format!("block.{i}.conv.weight"),
            vec![out, c.block_input_channels(i), k, k],
        );
        push(&layer, format!("block.{i}.conv.bias"), vec![out]);
        for p in ["gamma", "beta", "running_mean", "running_var"] {
            push(&layer, format!("block.{i}.bn.{p}"), vec![out]);
        }
    }
    let feat = c.decoder_output_channels();
    push(
        "classifier",
        "classifier.weight".into(),
        vec![c.num_classes, feat, 1, 1],
    );
    push("classifier", "classifier.bias".into(), vec![c.num_classes]);
    slots
}

impl WeightStore {
    /// Builds a store by drawing every value from `draw(record name, fan_in)`.
    fn generate(c: &DecoderConfig, mut draw: impl FnMut(&str, usize) -> f64) -> Result<Self> {
        c.validate()?;
        let mut values: Vec<Vec<f64>> = Vec::new();
        for slot in schema(c) {
            let fan_in: usize = slot.header.dims.iter().skip(1).product();
            values.push(
                (0..slot.header.len())
                    .map(|_| draw(&slot.header.name, fan_in))
                    .collect(),
            );
        }
        Self::assemble(c, values)
    }

    /// Every parameter zero, batch norm variance one.
    pub fn zeros(c: &DecoderConfig) -> Result<Self> {
        Self::generate(c, |name, _| if name.ends_with("running_var") { 1.0 } else { 0.0 })
    }

    /// Deterministic pseudo-random parameters, each exactly representable as `f32`.
    ///
    /// Convolution weights are uniform in `±sqrt(6 / fan_in)`; batch norm scales and
    /// variances are drawn near one.
    pub fn random(c: &DecoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::generate(c, |name, fan_in| {
            let v: f64 = if name.ends_with(".weight") {
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                rng.random_range(-bound..bound)
            } else if name.ends_with("gamma") || name.ends_with("running_var") {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(-0.1..0.1)
            };
            v as f32 as f64
        })
    }

    /// Consumes values in schema order.
    fn assemble(c: &DecoderConfig, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut it = values.into_iter();
        let mut next = || it.next().expect("schema and values have equal length");
        let mut encoder = Vec::new();
        let mut in_ch = c.input_channels;
        for out in c.encoder_stage_channels() {
            let (w, b) = (next(), next());
            encoder.push(KernelBank::new(out, in_ch, ENCODER_KERNEL, ENCODER_KERNEL, w, b)?);
            in_ch = out;
        }
        let mut blocks = Vec::new();
        for (i, &out) in c.block_channels.iter().enumerate() {
            let (w, b) = (next(), next());
            let conv = KernelBank::new(out, c.block_input_channels(i), c.kernel_size, c.kernel_size, w, b)?;
            let (gamma, beta, mean, var) = (next(), next(), next(), next());
            let bn = BnParams::new(gamma, beta, mean, var, c.bn_epsilon)?;
            blocks.push(BlockWeights { conv, bn });
        }
        let (w, b) = (next(), next());
        let classifier = KernelBank::new(c.num_classes, c.decoder_output_channels(), 1, 1, w, b)?;
        Ok(WeightStore {
            encoder,
            blocks,
            classifier,
        })
    }

    fn records(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        for (s, k) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{s}.weight"), k.dims().to_vec(), k.weights().to_vec()));
            out.push((format!("encoder.{s}.bias"), vec![k.out_channels()], k.bias().to_vec()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((
                format!("block.{i}.conv.weight"),
                b.conv.dims().to_vec(),
                b.conv.weights().to_vec(),
            ));
            out.push((
                format!("block.{i}.conv.bias"),
                vec![b.conv.out_channels()],
                b.conv.bias().to_vec(),
            ));
            let n = b.bn.channels();
            out.push((format!("block.{i}.bn.gamma"), vec![n], b.bn.gamma().to_vec()));
            out.push((format!("block.{i}.bn.beta"), vec![n], b.bn.beta().to_vec()));
            out.push((
                format!("block.{i}.bn.running_mean"),
                vec![n],
                b.bn.running_mean().to_vec(),
            ));
            out.push((
                format!("block.{i}.bn.running_var"),
                vec![n],
                b.bn.running_var().to_vec(),
            ));
        }
        let k = &self.classifier;
        out.push(("classifier.weight".into(), k.dims().to_vec(), k.weights().to_vec()));
        out.push(("classifier.bias".into(), vec![k.out_channels()], k.bias().to_vec()));
        out
    }

    /// Checks every layer against `c`, reporting the first inconsistent one.
    pub fn validate(&self, c: &DecoderConfig) -> Result<()> {
        c.validate()?;
        let expected = schema(c);
        let actual = self.records();
        for (i, slot) in expected.iter().enumerate() {
            match actual.get(i) {
                Some((name, dims, _)) if *name == slot.header.name && *dims == slot.header.dims => {}
                Some((name, dims, _)) if *name == slot.header.name => {
                    return Err(SegError::Config(format!(
                        "{} (`{name}`) has shape {dims:?}, config expects {:?}",
                        slot.layer, slot.header.dims
                    )))
                }
                _ => {
                    return Err(SegError::Config(format!(
                        "{} is missing from the weight store (expected `{}`)",
                        slot.layer, slot.header.name
                    )))
                }
            }
        }
        if let Some((name, _, _)) = actual.get(expected.len()) {
            return Err(SegError::Config(format!(
                "weight store has a layer the config does not declare: `{name}`"
            )));
        }
        for b in &self.blocks {
            if b.bn.epsilon() != c.bn_epsilon {
                return Err(SegError::Config(format!(
                    "batch norm epsilon {} differs from config {}",
                    b.bn.epsilon(),
                    c.bn_epsilon
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let records: Vec<Record> = self
            .records()
            .into_iter()
            .map(|(name, dims, values)| Record {
                header: RecordHeader::new(name, dims),
                values: values.into_iter().map(|v| v as f32).collect(),
            })
            .collect();
        segw::encode(&records)
    }

    /// Parses a `SEGW` file, validating every record shape against `c` before reading payloads.
    pub fn from_bytes(bytes: &[u8], c: &DecoderConfig) -> Result<Self> {
        c.validate()?;
        let table = segw::parse_table(bytes)?;
        let expected = schema(c);
        for (index, header) in table.headers.iter().enumerate() {
            let Some(slot) = expected.get(index) else {
                return Err(WeightFileError::UnexpectedRecord {
                    record: header.name.clone(),
                    index,
                }
                .into());
            };
            if header.name != slot.header.name {
                return Err(WeightFileError::UnexpectedRecord {
                    record: header.name.clone(),
                    index,
                }
                .into());
            }
            if header.dims != slot.header.dims {
                return Err(WeightFileError::ShapeMismatch {
                    layer: slot.layer.clone(),
                    record: header.name.clone(),
                    expected: slot.header.dims.clone(),
                    found: header.dims.clone(),
                }
                .into());
            }
        }
        if let Some(slot) = expected.get(table.headers.len()) {
            return Err(WeightFileError::MissingRecord {
                layer: slot.layer.clone(),
                record: slot.header.name.clone(),
            }
            .into());
        }
        let records = table.read_payloads()?;
        let values = records
            .into_iter()
            .map(|r| r.values.into_iter().map(f64::from).collect())
            .collect();
        Self::assemble(c, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| SegError::io(path, e))
    }

    pub fn load(path: &Path, c: &DecoderConfig) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| SegError::io(path, e))?;
        Self::from_bytes(&bytes, c)
    }
}

pub fn save_weights(w: &WeightStore, path: &Path) -> Result<()> {
    w.save(path)
}

pub fn load_weights(path: &Path, c: &DecoderConfig) -> Result<WeightStore> {
    WeightStore::load(path, c)
}

fn check_input(image: &Tensor, c: &DecoderConfig) -> Result<()> {
    if image.channels() != c.input_channels {
        return Err(SegError::Contract(format!(
            "network expects {} input channel(s), image has {}",
            c.input_channels,
            image.channels()
        )));
    }
    let m = c.encoder_downsample;
    if !image.height().is_multiple_of(m) || !image.width().is_multiple_of(m) {
        return Err(SegError::InputShape {
            height: image.height(),
            width: image.width(),
            multiple: m,
        });
    }
    Ok(())
}

/// Stride-2 3×3 convolution + ReLU per stage; reduces resolution by `encoder_downsample`.
pub fn encoder_stub(image: &Tensor, w: &WeightStore, c: &DecoderConfig) -> Result<Tensor> {
    check_input(image, c)?;
    let mut x = image.clone();
    for stage in &w.encoder {
        x = relu(&conv2d_strided(&x, stage, 2)?);
    }
    Ok(x)
}

/// Upsample, convolve, ReLU, then batch norm.
pub fn decoder_block(x: &Tensor, block: &BlockWeights, c: &DecoderConfig) -> Result<Tensor> {
    if x.channels() != block.conv.in_channels() {
        return Err(SegError::Contract(format!(
            "decoder block expects {} input channels, got {}",
            block.conv.in_channels(),
            x.channels()
        )));
    }
    let up = upsample_nearest(x, c.upsample_factor)?;
    let conv = conv2d(&up, &block.conv)?;
    batch_norm(&relu(&conv), &block.bn)
}

/// Full network: `K × H × W` class probabilities at input resolution.
pub fn forward(image: &Tensor, w: &WeightStore, c: &DecoderConfig) -> Result<Tensor> {
    w.validate(c)?;
    let mut x = encoder_stub(image, w, c)?;
    for block in &w.blocks {
        x = decoder_block(&x, block, c)?;
    }
    softmax_channels(&conv2d(&x, &w.classifier)?)
}

/// Foreground wherever `lung_class` is the most probable class.
pub fn predict_mask(prob: &Tensor, lung_class: usize) -> Result<BinaryMask> {
    if lung_class >= prob.channels() {
        return Err(SegError::Config(format!(
            "lung class {lung_class} out of range for {} classes",
            prob.channels()
        )));
    }
    Ok(argmax_channels(prob).mask_of(lung_class as u32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DecoderConfig {
        DecoderConfig {
            num_blocks: 2,
            block_channels: vec![6, 4],
            encoder_channels: 8,
            encoder_downsample: 4,
            ..Default::default()
        }
    }

    #[test]
    fn schema_chains_channels() {
        let w = WeightStore::random(&DecoderConfig::default(), 1).unwrap();
        assert_eq!(w.encoder.len(), 4);
        assert_eq!(w.encoder[0].dims(), [64, 1, 3, 3]);
        assert_eq!(w.blocks[0].conv.dims(), [256, 512, 3, 3]);
        assert_eq!(w.blocks[3].conv.dims(), [32, 64, 3, 3]);
        assert_eq!(w.classifier.dims(), [2, 32, 1, 1]);
        w.validate(&DecoderConfig::default()).unwrap();
    }

    #[test]
    fn encoder_shapes_and_errors() {
        let c = DecoderConfig::default();
        let w = WeightStore::zeros(&c).unwrap();
        let f = encoder_stub(&Tensor::filled(1, 16, 16, 0.3), &w, &c).unwrap();
        assert_eq!(f.shape(), (512, 1, 1));
        assert!(f.data().iter().all(|&v| v == 0.0));

        let err = encoder_stub(&Tensor::zeros(1, 33, 32), &w, &c).unwrap_err();
        assert!(matches!(err, SegError::InputShape { multiple: 16, .. }));
        assert!(err.to_string().contains("16"));
        assert!(matches!(
            encoder_stub(&Tensor::zeros(3, 32, 32), &w, &c),
            Err(SegError::Contract(_))
        ));
    }

    #[test]
    fn degenerate_block_is_relu() {
        let c = DecoderConfig {
            upsample_factor: 1,
            ..small()
        };
        let block = BlockWeights {
            conv: KernelBank::new(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap(),
            bn: BnParams::identity(1, 0.0).unwrap(),
        };
        let x = Tensor::from_fn(1, 3, 3, |_, y, x| y as f64 - x as f64).unwrap();
        assert_eq!(decoder_block(&x, &block, &c).unwrap(), relu(&x));
    }

    #[test]
    fn block_channel_mismatch() {
        let c = DecoderConfig::default();
        let w = WeightStore::zeros(&c).unwrap();
        let out = decoder_block(&Tensor::zeros(512, 2, 2), &w.blocks[0], &c).unwrap();
        assert_eq!(out.shape(), (256, 4, 4));
        assert!(matches!(
            decoder_block(&Tensor::zeros(8, 2, 2), &w.blocks[0], &c),
            Err(SegError::Contract(_))
        ));
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let c = small();
        let w = WeightStore::zeros(&c).unwrap();
        let p = forward(&Tensor::filled(1, 8, 8, 0.7), &w, &c).unwrap();
        assert_eq!(p.shape(), (2, 8, 8));
        assert!(p.data().iter().all(|&v| v == 0.5));
        assert!(predict_mask(&p, 1).unwrap().is_empty());
        assert_eq!(predict_mask(&p, 0).unwrap().count(), 64);
    }

    #[test]
    fn forward_reports_first_inconsistent_layer() {
        let c = DecoderConfig::default();
        let other = DecoderConfig {
            block_channels: vec![256, 64, 64, 32],
            ..Default::default()
        };
        let w = WeightStore::zeros(&other).unwrap();
        let err = forward(&Tensor::zeros(1, 32, 32), &w, &c).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, SegError::Config(_)));
        assert!(msg.contains("block 1"), "{msg}");
    }

    #[test]
    fn predict_mask_checkerboard_and_range() {
        let p = Tensor::from_fn(2, 2, 2, |c, y, x| {
            let lung = (y + x) % 2 == 1;
            if (c == 1) == lung {
                0.9
            } else {
                0.1
            }
        })
        .unwrap();
        let m = predict_mask(&p, 1).unwrap();
        assert_eq!(m.bits(), &[false, true, true, false]);
        assert!(matches!(predict_mask(&p, 2), Err(SegError::Config(_))));
    }

    #[test]
    fn bytes_round_trip_small() {
        let c = small();
        let w = WeightStore::random(&c, 9).unwrap();
        assert_eq!(WeightStore::from_bytes(&w.to_bytes(), &c).unwrap(), w);
    }
}
