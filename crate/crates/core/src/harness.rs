//! Batch drivers behind the command-line tool: dataset pairing, evaluation reports,
//! mask filtering, network inference, overlay rendering and fixture synthesis.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::DecoderConfig;
use crate::decoder::{forward, predict_mask, WeightStore};
use crate::error::{Result, SegError};
use crate::fixtures::{generate_fixtures, FixtureLayout};
use crate::io::{
    read_gray, read_image_tensor, read_mask, render_comparison, render_overlay, write_mask, write_rgb, Color,
    ComparisonColors, DEFAULT_MASK_THRESHOLD,
};
use crate::mask::BinaryMask;
use crate::metrics::{aggregate, overlap_counts, PairReport, Summary};
use crate::postprocess::{
    keep_largest_k, label_components, post_process, Connectivity, DEFAULT_KEEP, DEFAULT_THRESHOLD,
};
use crate::segw::save_tensor;
use crate::tensor::Tensor;

/// One prediction/ground-truth file pair sharing a file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub id: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetPairing {
    /// Sorted by id.
    pub pairs: Vec<ImagePair>,
    /// Stems found on only one side, and other non-fatal oddities.
    pub warnings: Vec<String>,
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && !path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'))
        && image::ImageFormat::from_path(path).is_ok()
}

/// Image files of a directory keyed by stem.
fn list_images(dir: &Path, warnings: &mut Vec<String>) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(SegError::Config(format!("{} is not a directory", dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| SegError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image_file(p))
        .collect();
    paths.sort();
    let mut by_stem: BTreeMap<String, PathBuf> = BTreeMap::new();
    for p in paths {
        let Some(stem) = p.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
            warnings.push(format!("skipping non-UTF-8 file name {}", p.display()));
            continue;
        };
        if let Some(first) = by_stem.get(&stem) {
            warnings.push(format!(
                "duplicate stem `{stem}`: using {} and ignoring {}",
                first.display(),
                p.display()
            ));
            continue;
        }
        by_stem.insert(stem, p);
    }
    Ok(by_stem)
}

/// Pairs files with identical stems across the two directories.
pub fn pair_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<DatasetPairing> {
    let mut warnings = Vec::new();
    let preds = list_images(pred_dir, &mut warnings)?;
    let gts = list_images(gt_dir, &mut warnings)?;
    let mut pairs = Vec::new();
    for (id, pred) in &preds {
        match gts.get(id) {
            Some(gt) => pairs.push(ImagePair {
                id: id.clone(),
                pred: pred.clone(),
                gt: gt.clone(),
            }),
            None => warnings.push(format!("`{id}` has a prediction but no ground truth")),
        }
    }
    for id in gts.keys().filter(|id| !preds.contains_key(*id)) {
        warnings.push(format!("`{id}` has ground truth but no prediction"));
    }
    if pairs.is_empty() {
        let sample = |m: &BTreeMap<String, PathBuf>| m.keys().take(5).cloned().collect::<Vec<_>>().join(", ");
        return Err(SegError::Config(format!(
            "no common file stems between {} [{}] and {} [{}]",
            pred_dir.display(),
            sample(&preds),
            gt_dir.display(),
            sample(&gts)
        )));
    }
    Ok(DatasetPairing { pairs, warnings })
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    /// Also score predictions after keeping the `k` largest components.
    pub post: bool,
    pub k: usize,
    pub connectivity: Connectivity,
    /// Mask read threshold.
    pub threshold: u8,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl EvalOptions {
    pub fn new(pred_dir: impl Into<PathBuf>, gt_dir: impl Into<PathBuf>) -> Self {
        EvalOptions {
            pred_dir: pred_dir.into(),
            gt_dir: gt_dir.into(),
            post: false,
            k: DEFAULT_KEEP,
            connectivity: Connectivity::Eight,
            threshold: DEFAULT_MASK_THRESHOLD,
            jobs: None,
        }
    }

    fn fingerprint(&self) -> String {
        let canonical = format!(
            "post={};k={};connectivity={};threshold={}",
            self.post, self.k, self.connectivity, self.threshold
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub id: String,
    pub raw: PairReport,
    pub post: Option<PairReport>,
    /// Components left after filtering.
    pub post_components: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub config_hash: String,
    pub threshold: u8,
    pub k: usize,
    pub connectivity: u32,
    pub post: bool,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub summary: Summary,
    pub summary_post: Option<Summary>,
    pub rows: Vec<EvalRow>,
    pub warnings: Vec<String>,
}

fn evaluate_pair(pair: &ImagePair, opts: &EvalOptions) -> Result<EvalRow> {
    let pred = read_mask(&pair.pred, opts.threshold)?;
    let gt = read_mask(&pair.gt, opts.threshold)?;
    let raw = PairReport::from_counts(&pair.id, overlap_counts(&pred, &gt)?, false);
    let (post, post_components) = if opts.post {
        let filtered = keep_largest_k(&pred, opts.k, opts.connectivity)?;
        let components = label_components(&filtered, opts.connectivity).1.len();
        let report = PairReport::from_counts(&pair.id, overlap_counts(&filtered, &gt)?, true);
        (Some(report), Some(components))
    } else {
        (None, None)
    };
    Ok(EvalRow {
        id: pair.id.clone(),
        raw,
        post,
        post_components,
    })
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SegError::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Scores every pair, optionally with and without post-processing.
///
/// Pairs that fail to load are skipped and listed in `warnings`. Rows come back
/// sorted by id regardless of scheduling.
pub fn run_eval(opts: &EvalOptions) -> Result<EvalReport> {
    if opts.k == 0 {
        return Err(SegError::Config("must keep at least one component (k >= 1)".into()));
    }
    let pairing = pair_dataset(&opts.pred_dir, &opts.gt_dir)?;
    let results: Vec<(String, Result<EvalRow>)> = in_pool(opts.jobs, || {
        pairing
            .pairs
            .par_iter()
            .map(|p| (p.id.clone(), evaluate_pair(p, opts)))
            .collect()
    })?;

    let mut warnings = pairing.warnings;
    let mut rows = Vec::with_capacity(results.len());
    for (id, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => warnings.push(format!("skipped `{id}`: {e}")),
        }
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let raw: Vec<PairReport> = rows.iter().map(|r| r.raw.clone()).collect();
    let summary = aggregate(&raw).map_err(|_| SegError::Config("no pair could be evaluated".into()))?;
    let summary_post = if opts.post {
        let post: Vec<PairReport> = rows.iter().filter_map(|r| r.post.clone()).collect();
        Some(aggregate(&post)?)
    } else {
        None
    };

    Ok(EvalReport {
        metadata: RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: opts.fingerprint(),
            threshold: opts.threshold,
            k: opts.k,
            connectivity: opts.connectivity.count(),
            post: opts.post,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        },
        summary,
        summary_post,
        rows,
        warnings,
    })
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    /// One row per image (`id,dice,iou,dice_post,iou_post,degenerate`), followed by
    /// `#macro` and `#micro` summary rows whose last column counts degenerate pairs.
    /// Post columns are empty when post-processing was not requested.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,dice,iou,dice_post,iou_post,degenerate\n");
        for r in &self.rows {
            let (dp, ip) = match &r.post {
                Some(p) => (fmt6(p.dice), fmt6(p.iou)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.id),
                fmt6(r.raw.dice),
                fmt6(r.raw.iou),
                dp,
                ip,
                u8::from(r.raw.degenerate)
            ));
        }
        let s = &self.summary;
        let post = self.summary_post.as_ref();
        let pick = |f: fn(&Summary) -> f64| post.map(|p| fmt6(f(p))).unwrap_or_default();
        out.push_str(&format!(
            "#macro,{},{},{},{},{}\n",
            fmt6(s.macro_dice),
            fmt6(s.macro_iou),
            pick(|p| p.macro_dice),
            pick(|p| p.macro_iou),
            s.degenerate
        ));
        out.push_str(&format!(
            "#micro,{},{},{},{},{}\n",
            fmt6(s.micro_dice),
            fmt6(s.micro_iou),
            pick(|p| p.micro_dice),
            pick(|p| p.micro_iou),
            s.degenerate
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| SegError::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| SegError::io(path, e))
    }

    /// Two-column table in the style of a methods comparison: raw and filtered scores.
    pub fn comparison_table(&self) -> String {
        let mut s = format!("{:<12} {:>8} {:>8}\n", "Method", "IoU", "Dice");
        s.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4}\n",
            "net", self.summary.macro_iou, self.summary.macro_dice
        ));
        if let Some(p) = &self.summary_post {
            s.push_str(&format!(
                "{:<12} {:>8.4} {:>8.4}\n",
                "net-post", p.macro_iou, p.macro_dice
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PostOptions {
    /// A mask file or a directory of mask files.
    pub input: PathBuf,
    pub output: PathBuf,
    pub k: usize,
    pub connectivity: Connectivity,
    pub threshold: u8,
}

impl PostOptions {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PostOptions {
            input: input.into(),
            output: output.into(),
            k: DEFAULT_KEEP,
            connectivity: Connectivity::Eight,
            threshold: DEFAULT_MASK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PostOutcome {
    pub written: Vec<PathBuf>,
    /// `path: error` per file that could not be processed.
    pub failures: Vec<String>,
}

fn filter_file(input: &Path, output: &Path, opts: &PostOptions) -> Result<()> {
    let m = read_mask(input, opts.threshold)?;
    write_mask(&keep_largest_k(&m, opts.k, opts.connectivity)?, output)
}

/// Keeps the `k` largest components of one mask, or of every mask in a directory
/// (written under the same file names).
pub fn run_post(opts: &PostOptions) -> Result<PostOutcome> {
    if opts.k == 0 {
        return Err(SegError::Config("must keep at least one component (k >= 1)".into()));
    }
    let mut outcome = PostOutcome::default();
    if opts.input.is_dir() {
        std::fs::create_dir_all(&opts.output).map_err(|e| SegError::io(&opts.output, e))?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&opts.input)
            .map_err(|e| SegError::io(&opts.input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_image_file(p))
            .collect();
        files.sort();
        for f in files {
            let out = opts.output.join(f.file_name().expect("listed files have names"));
            match filter_file(&f, &out, opts) {
                Ok(()) => outcome.written.push(out),
                Err(e) => outcome.failures.push(format!("{}: {e}", f.display())),
            }
        }
    } else {
        filter_file(&opts.input, &opts.output, opts)?;
        outcome.written.push(opts.output.clone());
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub image: PathBuf,
    pub weights: PathBuf,
    /// `None` uses the default architecture.
    pub config: Option<PathBuf>,
    pub out_mask: PathBuf,
    pub out_prob: Option<PathBuf>,
    /// Unfiltered argmax mask.
    pub out_raw: Option<PathBuf>,
    pub no_post: bool,
    pub lung_class: usize,
    pub threshold: f64,
    pub k: usize,
    pub connectivity: Connectivity,
}

impl ForwardOptions {
    pub fn new(image: impl Into<PathBuf>, weights: impl Into<PathBuf>, out_mask: impl Into<PathBuf>) -> Self {
        ForwardOptions {
            image: image.into(),
            weights: weights.into(),
            config: None,
            out_mask: out_mask.into(),
            out_prob: None,
            out_raw: None,
            no_post: false,
            lung_class: 1,
            threshold: DEFAULT_THRESHOLD,
            k: DEFAULT_KEEP,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutcome {
    pub probabilities: Tensor,
    pub raw_mask: BinaryMask,
    /// What was written to `out_mask`.
    pub mask: BinaryMask,
}

/// Image → network → probability map → mask, with optional component filtering.
pub fn run_forward(opts: &ForwardOptions) -> Result<ForwardOutcome> {
    let config = match &opts.config {
        Some(p) => DecoderConfig::load(p)?,
        None => DecoderConfig::default(),
    };
    let weights = WeightStore::load(&opts.weights, &config)?;
    let image = read_image_tensor(&opts.image, config.input_channels)?;
    let prob = forward(&image, &weights, &config)?;
    let raw_mask = predict_mask(&prob, opts.lung_class)?;
    let mask = if opts.no_post {
        raw_mask.clone()
    } else {
        post_process(&prob, opts.lung_class, opts.threshold, opts.k, opts.connectivity)?
    };
    write_mask(&mask, &opts.out_mask)?;
    if let Some(p) = &opts.out_raw {
        write_mask(&raw_mask, p)?;
    }
    if let Some(p) = &opts.out_prob {
        save_tensor(&prob, p)?;
    }
    Ok(ForwardOutcome {
        probabilities: prob,
        raw_mask,
        mask,
    })
}

#[derive(Debug, Clone)]
pub struct OverlayOptions {
    pub image: PathBuf,
    /// The mask to show; the prediction when `gt` is given.
    pub mask: PathBuf,
    pub gt: Option<PathBuf>,
    pub out: PathBuf,
    pub alpha: f64,
    pub color: Color,
}

pub const DEFAULT_ALPHA: f64 = 0.4;

impl OverlayOptions {
    pub fn new(image: impl Into<PathBuf>, mask: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        OverlayOptions {
            image: image.into(),
            mask: mask.into(),
            gt: None,
            out: out.into(),
            alpha: DEFAULT_ALPHA,
            color: Color::RED,
        }
    }
}

/// Renders a single-mask overlay, or a ground-truth versus prediction comparison.
pub fn run_overlay(opts: &OverlayOptions) -> Result<()> {
    let image = read_gray(&opts.image)?;
    let mask = read_mask(&opts.mask, DEFAULT_MASK_THRESHOLD)?;
    let rendered = match &opts.gt {
        Some(gt) => {
            let gt = read_mask(gt, DEFAULT_MASK_THRESHOLD)?;
            render_comparison(&image, &gt, &mask, ComparisonColors::default(), opts.alpha)?
        }
        None => render_overlay(&image, &mask, opts.color, opts.alpha)?,
    };
    write_rgb(&rendered, &opts.out)
}

/// Writes a synthetic dataset; see [`crate::fixtures`].
pub fn run_synth(out: &Path, seed: u64, count: usize, size: usize) -> Result<FixtureLayout> {
    generate_fixtures(out, seed, count, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch_masks(dir: &Path, stems: &[&str]) {
        std::fs::create_dir_all(dir).unwrap();
        for s in stems {
            write_mask(&BinaryMask::from_fn(4, 4, |y, _| y < 2), &dir.join(format!("{s}.png"))).unwrap();
        }
    }

    #[test]
    fn pairing_intersects_stems() {
        let tmp = tempfile::tempdir().unwrap();
        let (p, g) = (tmp.path().join("p"), tmp.path().join("g"));
        touch_masks(&p, &["c", "a", "b"]);
        touch_masks(&g, &["b", "c", "d"]);
        let pairing = pair_dataset(&p, &g).unwrap();
        let ids: Vec<_> = pairing.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(pairing.warnings.len(), 2);
        assert!(pairing.warnings[0].contains("`a`"));
        assert!(pairing.warnings[1].contains("`d`"));
    }

    #[test]
    fn identical_listings_pair_fully() {
        let tmp = tempfile::tempdir().unwrap();
        let (p, g) = (tmp.path().join("p"), tmp.path().join("g"));
        touch_masks(&p, &["x", "y"]);
        touch_masks(&g, &["y", "x"]);
        std::fs::write(p.join("notes.txt"), "ignored").unwrap();
        let pairing = pair_dataset(&p, &g).unwrap();
        assert_eq!(pairing.pairs.len(), 2);
        assert!(pairing.warnings.is_empty());
    }

    #[test]
    fn disjoint_listings_fail_with_samples() {
        let tmp = tempfile::tempdir().unwrap();
        let (p, g) = (tmp.path().join("p"), tmp.path().join("g"));
        touch_masks(&p, &["a"]);
        touch_masks(&g, &["z"]);
        let msg = pair_dataset(&p, &g).unwrap_err().to_string();
        assert!(msg.contains('a') && msg.contains('z'), "{msg}");
    }

    #[test]
    fn csv_escapes_awkward_ids() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("q\""), "\"q\"\"\"");
    }
}
