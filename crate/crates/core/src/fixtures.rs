//! Deterministic synthetic dataset: two bright ellipses on a noisy dark field,
//! the exact two-ellipse ground truth, and a prediction that adds small
//! fragments disjoint from both lungs.
//!
//! Layout under the output directory:
//!
//! ```text
//! images/case_000.png   grayscale "radiograph"
//! gt/case_000.png       ground-truth mask
//! pred/case_000.png     corrupted prediction
//! ```

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SegError};
use crate::io::{write_gray, write_mask};
use crate::mask::BinaryMask;
use crate::postprocess::{label_components, Connectivity};

pub const DEFAULT_FIXTURE_SIZE: usize = 64;

/// One generated case.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub id: String,
    pub image: GrayImage,
    pub gt: BinaryMask,
    pub pred: BinaryMask,
}

/// Paths of a dataset written by [`generate_fixtures`].
#[derive(Debug, Clone)]
pub struct FixtureLayout {
    pub images: PathBuf,
    pub gt: PathBuf,
    pub pred: PathBuf,
}

impl FixtureLayout {
    pub fn under(root: &Path) -> Self {
        FixtureLayout {
            images: root.join("images"),
            gt: root.join("gt"),
            pred: root.join("pred"),
        }
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, y: usize, x: usize) -> bool {
        let dx = (x as f64 - self.cx) / self.rx;
        let dy = (y as f64 - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

fn lungs(rng: &mut ChaCha8Rng, size: usize) -> BinaryMask {
    let s = size as f64;
    loop {
        let mut lobe = |center: f64| Ellipse {
            cx: s * (center + rng.random_range(-0.02..0.02)),
            cy: s * (0.5 + rng.random_range(-0.04..0.04)),
            rx: s * rng.random_range(0.11..0.15),
            ry: s * rng.random_range(0.26..0.33),
        };
        let (left, right) = (lobe(0.3), lobe(0.7));
        let m = BinaryMask::from_fn(size, size, |y, x| left.contains(y, x) || right.contains(y, x));
        if label_components(&m, Connectivity::Eight).1.len() == 2 {
            return m;
        }
    }
}

/// True when the square at `(top, left)` of side `side`, grown by `margin`,
/// touches no foreground pixel of `m`.
fn clear_around(m: &BinaryMask, top: usize, left: usize, side: usize, margin: usize) -> bool {
    let y0 = top.saturating_sub(margin);
    let x0 = left.saturating_sub(margin);
    let y1 = (top + side + margin).min(m.height());
    let x1 = (left + side + margin).min(m.width());
    (y0..y1).all(|y| (x0..x1).all(|x| !m.get(y, x)))
}

fn fragments(rng: &mut ChaCha8Rng, gt: &BinaryMask) -> BinaryMask {
    let size = gt.height();
    let mut pred = gt.clone();
    let wanted = rng.random_range(1..=3);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < wanted {
        attempts += 1;
        if attempts > 10_000 && placed > 0 {
            break;
        }
        let side = rng.random_range(2..=3);
        let top = rng.random_range(0..size - side);
        let left = rng.random_range(0..size - side);
        // Margin 2 leaves at least one background pixel between fragment and any region.
        if !clear_around(&pred, top, left, side, 2) {
            continue;
        }
        for y in top..top + side {
            for x in left..left + side {
                pred.set(y, x, true);
            }
        }
        placed += 1;
    }
    pred
}

fn radiograph(rng: &mut ChaCha8Rng, gt: &BinaryMask) -> GrayImage {
    let size = gt.height() as u32;
    GrayImage::from_fn(size, size, |x, y| {
        let base = if gt.get(y as usize, x as usize) { 170.0 } else { 45.0 };
        let noise: f64 = rng.random_range(-20.0..20.0);
        Luma([(base + noise).round().clamp(0.0, 255.0) as u8])
    })
}

/// Builds `count` cases in memory from `seed`.
pub fn synthesize(seed: u64, count: usize, size: usize) -> Result<Vec<Fixture>> {
    if size < 32 {
        return Err(SegError::Config(format!("fixture size {size} must be at least 32")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let gt = lungs(&mut rng, size);
            let pred = fragments(&mut rng, &gt);
            let image = radiograph(&mut rng, &gt);
            Fixture {
                id: format!("case_{i:03}"),
                image,
                gt,
                pred,
            }
        })
        .collect())
}

/// Writes `count` image/ground-truth/prediction triples under `out_dir`.
pub fn generate_fixtures(out_dir: &Path, seed: u64, count: usize, size: usize) -> Result<FixtureLayout> {
    let layout = FixtureLayout::under(out_dir);
    for dir in [&layout.images, &layout.gt, &layout.pred] {
        std::fs::create_dir_all(dir).map_err(|e| SegError::io(dir.as_path(), e))?;
    }
    for f in synthesize(seed, count, size)? {
        let name = format!("{}.png", f.id);
        write_gray(&f.image, &layout.images.join(&name))?;
        write_mask(&f.gt, &layout.gt.join(&name))?;
        write_mask(&f.pred, &layout.pred.join(&name))?;
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dice;
    use crate::postprocess::keep_largest_k;

    #[test]
    fn construction_contract() {
        for size in [32, 64] {
            for f in synthesize(7, 10, size).unwrap() {
                assert_eq!(label_components(&f.gt, Connectivity::Eight).1.len(), 2);
                assert!(label_components(&f.pred, Connectivity::Eight).1.len() > 2);
                assert!(f.gt.is_subset_of(&f.pred));
                let cleaned = keep_largest_k(&f.pred, 2, Connectivity::Eight).unwrap();
                assert!(dice(&cleaned, &f.gt).unwrap() > dice(&f.pred, &f.gt).unwrap());
                assert_eq!(cleaned, f.gt);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = synthesize(3, 4, 32).unwrap();
        let b = synthesize(3, 4, 32).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.pred, y.pred);
        }
        let c = synthesize(4, 1, 32).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }
}
