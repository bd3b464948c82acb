//! Renders a single-mask overlay and a ground-truth comparison overlay as PNGs.
//!
//! ```text
//! cargo run --release --example overlay [out_dir]
//! ```

use std::path::PathBuf;

use lungseg::fixtures::synthesize;
use lungseg::io::{render_comparison, render_overlay, write_rgb, Color, ComparisonColors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lungseg-overlay"));
    std::fs::create_dir_all(&out)?;

    let f = synthesize(5, 1, 128)?.remove(0);

    let single = out.join("prediction.png");
    write_rgb(
        &render_overlay(&f.image, &f.pred, Color::from_hex("00c0ff")?, 0.45)?,
        &single,
    )?;

    // Yellow where both agree, green for missed lung, red for spurious fragments.
    let compare = out.join("comparison.png");
    write_rgb(
        &render_comparison(&f.image, &f.gt, &f.pred, ComparisonColors::default(), 0.5)?,
        &compare,
    )?;

    println!("{}\n{}", single.display(), compare.display());
    Ok(())
}
