use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lungseg::config::DecoderConfig;
use lungseg::decoder::WeightStore;
use lungseg::fixtures::DEFAULT_FIXTURE_SIZE;
use lungseg::harness::{
    run_eval, run_forward, run_overlay, run_post, run_synth, EvalOptions, ForwardOptions, OverlayOptions, PostOptions,
    DEFAULT_ALPHA,
};
use lungseg::io::{Color, DEFAULT_MASK_THRESHOLD};
use lungseg::postprocess::{Connectivity, DEFAULT_KEEP, DEFAULT_THRESHOLD};
use lungseg::Result;

#[derive(Parser)]
#[command(
    name = "lungseg",
    version,
    about = "Lung mask inference, post-processing and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score prediction masks against ground truth (Dice / IoU).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also score after keeping the k largest components.
        #[arg(long)]
        post: bool,
        #[arg(long, default_value_t = DEFAULT_KEEP)]
        k: usize,
        #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
        connectivity: u32,
        /// Mask foreground threshold (0-255).
        #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
        threshold: u8,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Keep the k largest connected components of a mask file or directory.
    Post {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KEEP)]
        k: usize,
        #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
        connectivity: u32,
    },
    /// Run the segmentation network on one image.
    Forward {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_mask: PathBuf,
        /// Probability map as a SEGW tensor file.
        #[arg(long)]
        out_prob: Option<PathBuf>,
        /// Unfiltered argmax mask.
        #[arg(long)]
        out_raw: Option<PathBuf>,
        #[arg(long)]
        no_post: bool,
        #[arg(long, default_value_t = DEFAULT_KEEP)]
        k: usize,
        #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
        connectivity: u32,
        /// Lung probability threshold used before component filtering.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Render a mask (or ground truth vs prediction) over a grayscale image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value = "ff0000")]
        color: String,
    },
    /// Generate a synthetic image / ground-truth / prediction dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_FIXTURE_SIZE)]
        size: usize,
    },
    /// Write pseudo-random weights for a config.
    Init {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_connectivity(s: &str) -> std::result::Result<u32, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("connectivity must be 4 or 8, got {s}")),
    }
}

fn connectivity(n: u32) -> Result<Connectivity> {
    Connectivity::from_count(n)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Eval {
            pred,
            gt,
            post,
            k,
            connectivity: conn,
            threshold,
            out_csv,
            out_json,
            jobs,
        } => {
            let opts = EvalOptions {
                post,
                k,
                connectivity: connectivity(conn)?,
                threshold,
                jobs,
                ..EvalOptions::new(pred, gt)
            };
            let report = run_eval(&opts)?;
            report.write_csv(&out_csv)?;
            report.write_json(&out_json)?;
            print!("{}", report.comparison_table());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(if report.warnings.is_empty() { 0 } else { 2 })
        }
        Command::Post {
            input,
            out,
            k,
            connectivity: conn,
        } => {
            let opts = PostOptions {
                k,
                connectivity: connectivity(conn)?,
                ..PostOptions::new(input, out)
            };
            let outcome = run_post(&opts)?;
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            Ok(if outcome.failures.is_empty() { 0 } else { 2 })
        }
        Command::Forward {
            image,
            weights,
            config,
            out_mask,
            out_prob,
            out_raw,
            no_post,
            k,
            connectivity: conn,
            threshold,
        } => {
            let opts = ForwardOptions {
                config,
                out_prob,
                out_raw,
                no_post,
                k,
                threshold,
                connectivity: connectivity(conn)?,
                ..ForwardOptions::new(image, weights, out_mask)
            };
            let outcome = run_forward(&opts)?;
            let (c, h, w) = outcome.probabilities.shape();
            println!("probabilities {c}x{h}x{w}, lung pixels {}", outcome.mask.count());
            Ok(0)
        }
        Command::Overlay {
            image,
            mask,
            gt,
            out,
            alpha,
            color,
        } => {
            let opts = OverlayOptions {
                gt,
                alpha,
                color: Color::from_hex(&color)?,
                ..OverlayOptions::new(image, mask, out)
            };
            run_overlay(&opts)?;
            Ok(0)
        }
        Command::Synth { out, seed, count, size } => {
            run_synth(&out, seed, count, size)?;
            Ok(0)
        }
        Command::Init { config, seed, out } => {
            let config = match config {
                Some(p) => DecoderConfig::load(&p)?,
                None => DecoderConfig::default(),
            };
            WeightStore::random(&config, seed)?.save(&out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
