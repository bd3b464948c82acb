//! Generates a synthetic dataset, then scores the noisy predictions with and
//! without component filtering.
//!
//! ```text
//! cargo run --release --example evaluate_fixtures [out_dir] [count]
//! ```

use std::path::PathBuf;

use lungseg::fixtures::generate_fixtures;
use lungseg::harness::{run_eval, EvalOptions};
use lungseg::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lungseg-fixtures"));
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let layout = generate_fixtures(&out, 2024, count, 64)?;
    println!("wrote {count} cases under {}", out.display());

    let opts = EvalOptions {
        post: true,
        ..EvalOptions::new(layout.pred, layout.gt)
    };
    let report = run_eval(&opts)?;
    for row in &report.rows {
        let post = row.post.as_ref().expect("post requested");
        println!(
            "{}  dice {:.4} -> {:.4}  iou {:.4} -> {:.4}",
            row.id, row.raw.dice, post.dice, row.raw.iou, post.iou
        );
    }
    println!();
    print!("{}", report.comparison_table());

    let csv = out.join("metrics.csv");
    report.write_csv(&csv)?;
    report.write_json(&out.join("metrics.json"))?;
    println!("\nper-image scores in {}", csv.display());
    Ok(())
}
