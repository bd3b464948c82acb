//! Runs the encoder stub and decoder on a synthetic chest-like image.
//!
//! Weights are pseudo-random, so the mask itself means nothing; the example shows
//! the shapes flowing through each stage and the effect of component filtering.
//!
//! ```text
//! cargo run --release --example decoder_forward [seed]
//! ```

use lungseg::config::DecoderConfig;
use lungseg::decoder::{decoder_block, encoder_stub, predict_mask, WeightStore};
use lungseg::fixtures::synthesize;
use lungseg::postprocess::{post_process, Connectivity, DEFAULT_KEEP, DEFAULT_THRESHOLD};
use lungseg::tensor::{conv2d, softmax_channels};
use lungseg::{label_components, Result, Tensor};

fn main() -> Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = DecoderConfig::default();
    config.validate()?;
    println!("config hash {}", config.hash());

    let weights = WeightStore::random(&config, seed)?;
    let fixture = synthesize(seed, 1, 64)?.remove(0);
    let image = Tensor::from_fn(1, 64, 64, |_, y, x| {
        f64::from(fixture.image.get_pixel(x as u32, y as u32)[0]) / 255.0
    })?;

    let mut x = encoder_stub(&image, &weights, &config)?;
    println!("encoder output     {:?}", x.shape());
    for (i, block) in weights.blocks.iter().enumerate() {
        x = decoder_block(&x, block, &config)?;
        println!("after block {i}      {:?}", x.shape());
    }
    let prob = softmax_channels(&conv2d(&x, &weights.classifier)?)?;
    println!("probabilities      {:?}", prob.shape());

    let raw = predict_mask(&prob, 1)?;
    let filtered = post_process(&prob, 1, DEFAULT_THRESHOLD, DEFAULT_KEEP, Connectivity::Eight)?;
    let count = |m| label_components(m, Connectivity::Eight).1.len();
    println!(
        "argmax mask: {} px in {} components; filtered: {} px in {} components",
        raw.count(),
        count(&raw),
        filtered.count(),
        count(&filtered)
    );
    Ok(())
}
