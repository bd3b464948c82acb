//! Connected-component post-processing of predicted masks.
//!
//! Foreground regions are labeled with a two-pass union-find scan and per-component
//! statistics; the filter then keeps only the `k` largest regions (two for a pair of
//! lungs) and drops every smaller fragment.

use std::fmt;

use crate::error::{Result, SegError};
use crate::mask::{BinaryMask, LabelImage};
use crate::tensor::Tensor;

pub const DEFAULT_KEEP: usize = 2;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Pixel adjacency used when growing components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity {
    /// Edge neighbors only.
    Four,
    /// Edge and corner neighbors.
    #[default]
    Eight,
}

impl Connectivity {
    /// Parses a neighbor count; only 4 and 8 are valid.
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(SegError::Config(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

/// Axis-aligned bounding box in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.left as f64
            && y >= self.top as f64
            && x <= (self.left + self.width - 1) as f64
            && y <= (self.top + self.height - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    /// 1-based label in the accompanying [`LabelImage`].
    pub label: u32,
    pub area: usize,
    pub bbox: BoundingBox,
    /// Mean `(x, y)` pixel coordinate.
    pub centroid: (f64, f64),
}

/// Minimal disjoint-set forest over provisional labels.
struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // Index 0 is the background and never joins anything.
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels every maximal connected foreground region.
///
/// Background is 0; components get labels `1..=N` in raster order of their
/// first pixel. The returned stats are indexed by `label - 1`.
pub fn label_components(m: &BinaryMask, connectivity: Connectivity) -> (LabelImage, Vec<ComponentStats>) {
    let (h, w) = m.dims();
    let mut provisional = vec![0u32; h * w];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) {
                continue;
            }
            // Already-visited neighbors: W, then NW, N, NE for eight-connectivity.
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            if x > 0 && m.get(y, x - 1) {
                neighbors[n] = provisional[y * w + x - 1];
                n += 1;
            }
            if y > 0 {
                let above = (y - 1) * w;
                if m.get(y - 1, x) {
                    neighbors[n] = provisional[above + x];
                    n += 1;
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && m.get(y - 1, x - 1) {
                        neighbors[n] = provisional[above + x - 1];
                        n += 1;
                    }
                    if x + 1 < w && m.get(y - 1, x + 1) {
                        neighbors[n] = provisional[above + x + 1];
                        n += 1;
                    }
                }
            }
            let label = if n == 0 {
                sets.make()
            } else {
                let first = neighbors[0];
                for &other in &neighbors[1..n] {
                    sets.union(first, other);
                }
                first
            };
            provisional[y * w + x] = label;
        }
    }

    // Second pass: resolve roots and renumber by first raster encounter.
    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut stats: Vec<ComponentStats> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    let mut extent: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut labels = vec![0u32; h * w];
    for y in 0..h {
        for x in 0..w {
            let p = provisional[y * w + x];
            if p == 0 {
                continue;
            }
            let root = sets.find(p) as usize;
            if final_of_root[root] == 0 {
                stats.push(ComponentStats {
                    label: stats.len() as u32 + 1,
                    area: 0,
                    bbox: BoundingBox {
                        left: x,
                        top: y,
                        width: 1,
                        height: 1,
                    },
                    centroid: (0.0, 0.0),
                });
                sums.push((0.0, 0.0));
                extent.push((x, y, x, y));
                final_of_root[root] = stats.len() as u32;
            }
            let label = final_of_root[root];
            labels[y * w + x] = label;
            let i = label as usize - 1;
            stats[i].area += 1;
            sums[i].0 += x as f64;
            sums[i].1 += y as f64;
            let e = &mut extent[i];
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
        }
    }
    for ((s, sum), e) in stats.iter_mut().zip(&sums).zip(&extent) {
        s.bbox = BoundingBox {
            left: e.0,
            top: e.1,
            width: e.2 - e.0 + 1,
            height: e.3 - e.1 + 1,
        };
        s.centroid = (sum.0 / s.area as f64, sum.1 / s.area as f64);
    }

    let image = LabelImage::new(h, w, labels).expect("label plane matches mask");
    (image, stats)
}

/// Keeps the pixels of the `k` largest components and clears all others.
///
/// Equal areas are ordered by label, so the component met first in raster order wins.
/// With fewer than `k` components the mask is returned unchanged.
pub fn keep_largest_k(m: &BinaryMask, k: usize, connectivity: Connectivity) -> Result<BinaryMask> {
    if k == 0 {
        return Err(SegError::Config("must keep at least one component (k >= 1)".into()));
    }
    let (labels, mut stats) = label_components(m, connectivity);
    if stats.len() <= k {
        return Ok(m.clone());
    }
    stats.sort_by(|a, b| b.area.cmp(&a.area).then(a.label.cmp(&b.label)));
    let mut keep = vec![false; stats.len() + 1];
    for s in &stats[..k] {
        keep[s.label as usize] = true;
    }
    let bits = labels.labels().iter().map(|&l| keep[l as usize]).collect();
    BinaryMask::new(m.height(), m.width(), bits)
}

/// Thresholds one class of a probability map, then keeps the `k` largest regions.
pub fn post_process(
    prob: &Tensor,
    lung_class: usize,
    threshold: f64,
    k: usize,
    connectivity: Connectivity,
) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SegError::Config(format!(
            "binarization threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if lung_class >= prob.channels() {
        return Err(SegError::Config(format!(
            "lung class {lung_class} out of range for {} classes",
            prob.channels()
        )));
    }
    let bits = prob.plane(lung_class).iter().map(|&p| p >= threshold).collect();
    let raw = BinaryMask::new(prob.height(), prob.width(), bits)?;
    keep_largest_k(&raw, k, connectivity)
}
