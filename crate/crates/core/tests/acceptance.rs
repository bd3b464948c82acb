//! Exit criteria. Each test prints one `[PASS]`/`[FAIL]` line with its measured
//! values and wall time, then asserts.
//!
//! Run with `cargo test -p lungseg --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

mod common;

use std::time::{Duration, Instant};

use lungseg::config::DecoderConfig;
use lungseg::decoder::{forward, WeightStore};
use lungseg::error::{SegError, WeightFileError};
use lungseg::harness::{run_eval, EvalOptions};
use lungseg::metrics::{dice, iou, overlap_counts};
use lungseg::postprocess::{label_components, Connectivity};
use lungseg::segw::{self, RecordHeader};
use lungseg::tensor::conv2d;
use lungseg::{fixtures, BinaryMask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;

fn verdict(id: &str, title: &str, pass: bool, detail: String, elapsed: Duration, limit: Duration) {
    let in_time = elapsed < limit;
    println!(
        "[{}] {id} {title}: {detail}; {:.3}s (limit {:.0?})",
        if pass && in_time { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit
    );
    assert!(pass, "{id} {title} failed: {detail}");
    assert!(in_time, "{id} {title} exceeded {limit:?}: {elapsed:?}");
}

#[test]
fn ac1_metric_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
    let mut mismatches = 0;
    let mut worst_identity = 0.0f64;
    for _ in 0..1000 {
        let h = rng.random_range(1..=64);
        let w = rng.random_range(1..=64);
        let (dp, dg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred = random_mask(&mut rng, h, w, dp);
        let gt = random_mask(&mut rng, h, w, dg);
        let (d, j) = (dice(&pred, &gt).unwrap(), iou(&pred, &gt).unwrap());
        let (od, oj) = brute_force_scores(&pred, &gt);
        if d != od || j != oj {
            mismatches += 1;
        }
        worst_identity = worst_identity.max((d - 2.0 * j / (1.0 + j)).abs());
    }
    verdict(
        "AC1",
        "metric exactness",
        mismatches == 0 && worst_identity <= 1e-12,
        format!("1000 pairs, {mismatches} oracle mismatches, max |dice - 2iou/(1+iou)| = {worst_identity:.2e}"),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn ac2_labeling_matches_flood_fill() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0F5);
    let mut mismatches = 0;
    for _ in 0..500 {
        let density = rng.random_range(0.05..0.95);
        let m = random_mask(&mut rng, 64, 64, density);
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let (labels, stats) = label_components(&m, conn);
            let oracle = flood_fill_labels(&m, eight);
            let areas: Vec<usize> = stats.iter().map(|s| s.area).collect();
            if labels.labels() != oracle.as_slice() || areas != flood_fill_areas(&oracle) {
                mismatches += 1;
            }
        }
    }
    verdict(
        "AC2",
        "labeling vs BFS flood fill",
        mismatches == 0,
        format!("500 masks x 2 connectivities, {mismatches} mismatches"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn ac3_post_processing_on_fixtures() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let layout = fixtures::generate_fixtures(tmp.path(), 7, 20, fixtures::DEFAULT_FIXTURE_SIZE).unwrap();
    let opts = EvalOptions {
        post: true,
        ..EvalOptions::new(&layout.pred, &layout.gt)
    };
    let report = run_eval(&opts).unwrap();
    let csv = report.to_csv();

    // Judge from the emitted CSV rows.
    let mut rows = 0;
    let mut all_improve = true;
    for line in csv.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split(',').collect();
        let (d, dp): (f64, f64) = (f[1].parse().unwrap(), f[3].parse().unwrap());
        all_improve &= dp >= d;
        rows += 1;
    }
    let macro_row: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("#macro"))
        .unwrap()
        .split(',')
        .collect();
    let (macro_raw, macro_post): (f64, f64) = (macro_row[1].parse().unwrap(), macro_row[3].parse().unwrap());

    // Re-count components of every filtered mask independently.
    let mut max_components = 0;
    for row in &report.rows {
        let pred = lungseg::io::read_mask(&layout.pred.join(format!("{}.png", row.id)), 128).unwrap();
        let filtered = lungseg::keep_largest_k(&pred, 2, Connectivity::Eight).unwrap();
        let n = flood_fill_areas(&flood_fill_labels(&filtered, true)).len();
        max_components = max_components.max(n);
    }

    verdict(
        "AC3",
        "post-processing improves fixture scores",
        rows == 20 && all_improve && macro_post > macro_raw && max_components <= 2,
        format!(
            "{rows} rows, dice_post >= dice for all: {all_improve}, macro dice {macro_raw:.6} -> {macro_post:.6}, \
             max components after filtering {max_components}"
        ),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn ac4_forward_contract() {
    let start = Instant::now();
    let config = DecoderConfig::default();
    let weights = WeightStore::random(&config, 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let image = Tensor::from_fn(1, 32, 32, |_, _, _| rng.random_range(0.0..1.0)).unwrap();

    let runs: Vec<Tensor> = (0..3).map(|_| forward(&image, &weights, &config).unwrap()).collect();
    let first = &runs[0];
    let shape_ok = first.shape() == (2, 32, 32);
    let plane = 32 * 32;
    let worst_sum = (0..plane)
        .map(|p| (first.data()[p] + first.data()[plane + p] - 1.0).abs())
        .fold(0.0, f64::max);
    let in_range = first.data().iter().all(|&v| (0.0..=1.0).contains(&v));
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let repeat_identical = runs.iter().all(|r| bits(r) == bits(first));

    let batch: Vec<Tensor> = vec![image.clone(); 4]
        .par_iter()
        .map(|img| forward(img, &weights, &config).unwrap())
        .collect();
    let parallel_identical = batch.iter().all(|r| bits(r) == bits(first));

    verdict(
        "AC4",
        "forward pass contract",
        shape_ok && worst_sum <= 1e-6 && in_range && repeat_identical && parallel_identical,
        format!(
            "shape {:?}, max |sum - 1| = {worst_sum:.2e}, repeat bit-identical: {repeat_identical}, \
             parallel bit-identical: {parallel_identical}",
            first.shape()
        ),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn ac5_convolution_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = rng.random_range(1..=4);
        let o = rng.random_range(1..=4);
        let h = rng.random_range(1..=16);
        let w = rng.random_range(1..=16);
        let kh = [1, 3][rng.random_range(0..2)];
        let kw = [1, 3][rng.random_range(0..2)];
        let x = random_tensor(&mut rng, c, h, w);
        let k = random_kernel(&mut rng, o, c, kh, kw, true);
        let got = conv2d(&x, &k).unwrap();
        worst = worst.max(max_rel_err(got.data(), &direct_conv(&x, &k)));
    }
    verdict(
        "AC5",
        "convolution vs nested-loop oracle",
        worst <= 1e-5,
        format!("100 cases, max relative error {worst:.2e}"),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn ac6_self_evaluation() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let layout = fixtures::generate_fixtures(tmp.path(), 11, 10, 64).unwrap();
    let report = run_eval(&EvalOptions::new(&layout.gt, &layout.gt)).unwrap();
    let csv = report.to_csv();
    let summary_ok = ["#macro", "#micro"].iter().all(|tag| {
        let row: Vec<&str> = csv.lines().find(|l| l.starts_with(tag)).unwrap().split(',').collect();
        row[1] == "1.000000" && row[2] == "1.000000"
    });
    let rows_ok = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .all(|l| l.split(',').nth(1) == Some("1.000000") && l.split(',').nth(2) == Some("1.000000"));
    verdict(
        "AC6",
        "self-evaluation",
        summary_ok && rows_ok && report.rows.len() == 10,
        format!("macro/micro rows exactly 1.000000: {summary_ok}, every image row 1.000000: {rows_ok}"),
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn ac7_weight_serialization() {
    let start = Instant::now();
    let config = DecoderConfig::default();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("w.segw");
    let w = WeightStore::random(&config, 7).unwrap();
    w.save(&path).unwrap();
    let round_trip = WeightStore::load(&path, &config).unwrap() == w;

    let bytes = std::fs::read(&path).unwrap();
    let truncated = tmp.path().join("t.segw");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    let trunc_ok = matches!(
        WeightStore::load(&truncated, &config),
        Err(SegError::WeightFile(WeightFileError::Truncated { .. }))
    );

    // Rewrite block 1's kernel to declare 64 input channels instead of 256.
    let mut records = segw::decode(&bytes).unwrap();
    let r = records
        .iter_mut()
        .find(|r| r.header.name == "block.1.conv.weight")
        .unwrap();
    let dims = vec![128, 64, 3, 3];
    r.values.truncate(dims.iter().product());
    r.header = RecordHeader::new("block.1.conv.weight", dims);
    let mismatched = tmp.path().join("m.segw");
    std::fs::write(&mismatched, segw::encode(&records)).unwrap();
    let err = WeightStore::load(&mismatched, &config).unwrap_err();
    let shape_ok = matches!(
        &err,
        SegError::WeightFile(WeightFileError::ShapeMismatch { layer, .. }) if layer == "block 1"
    ) && err.to_string().contains("block 1");

    verdict(
        "AC7",
        "weight serialization",
        round_trip && trunc_ok && shape_ok,
        format!("round trip exact: {round_trip}, truncation error: {trunc_ok}, shape error names block 1: {shape_ok}"),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn ac8_worked_example() {
    let start = Instant::now();
    // Indices 0..9 in raster order on a 3x3 grid.
    let b = BinaryMask::from_fn(3, 3, |y, x| y * 3 + x < 4);
    let a = BinaryMask::from_fn(3, 3, |y, x| (2..6).contains(&(y * 3 + x)));
    let c = overlap_counts(&b, &a).unwrap();
    let (d, j) = (dice(&b, &a).unwrap(), iou(&b, &a).unwrap());
    // |A| = 4, |B| = 4, |A∩B| = 2, |A∪B| = 6.
    let pass = (c.true_pos, c.true_pos + c.false_neg, c.true_pos + c.false_pos) == (2, 4, 4)
        && d == 0.5
        && (j - 1.0 / 3.0).abs() <= 1e-15;
    verdict(
        "AC8",
        "hand-enumerated dice/iou",
        pass,
        format!("dice {d}, iou {j:.15}"),
        start.elapsed(),
        Duration::from_secs(1),
    );
}
