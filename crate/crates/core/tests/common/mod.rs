//! Reference implementations used as independent oracles. None of them call into
//! the library's algorithms; they only use its data types.
#![allow(dead_code)]

use std::collections::VecDeque;

use lungseg::{BinaryMask, KernelBank, Tensor};
use rand::Rng;

/// Breadth-first flood fill started from each unvisited foreground pixel in raster
/// order. Labels are 1-based in order of discovery; background is 0.
pub fn flood_fill_labels(m: &BinaryMask, eight: bool) -> Vec<u32> {
    let (h, w) = m.dims();
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if !m.get(sy, sx) || labels[sy * w + sx] != 0 {
                continue;
            }
            next += 1;
            labels[sy * w + sx] = next;
            queue.push_back((sy, sx));
            while let Some((y, x)) = queue.pop_front() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0) {
                            continue;
                        }
                        let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if m.get(ny, nx) && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = next;
                            queue.push_back((ny, nx));
                        }
                    }
                }
            }
        }
    }
    labels
}

/// Component areas from a flood-fill labeling, indexed by `label - 1`.
pub fn flood_fill_areas(labels: &[u32]) -> Vec<usize> {
    let n = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut areas = vec![0; n];
    for &l in labels.iter().filter(|&&l| l > 0) {
        areas[l as usize - 1] += 1;
    }
    areas
}

/// Dice and IoU by explicit set sizes over a pixel loop.
pub fn brute_force_scores(pred: &BinaryMask, gt: &BinaryMask) -> (f64, f64) {
    let (mut a, mut b, mut inter, mut union) = (0u64, 0u64, 0u64, 0u64);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let in_a = gt.get(y, x);
            let in_b = pred.get(y, x);
            a += in_a as u64;
            b += in_b as u64;
            inter += (in_a && in_b) as u64;
            union += (in_a || in_b) as u64;
        }
    }
    if union == 0 {
        return (1.0, 1.0);
    }
    ((2 * inter) as f64 / (a + b) as f64, inter as f64 / union as f64)
}

/// Straight nested-loop same-padded stride-1 convolution.
pub fn direct_conv(x: &Tensor, k: &KernelBank) -> Vec<f64> {
    let (c, h, w) = x.shape();
    let [o_n, i_n, kh, kw] = k.dims();
    assert_eq!(c, i_n);
    let (py, px) = ((kh / 2) as i64, (kw / 2) as i64);
    let mut out = vec![0.0; o_n * h * w];
    for o in 0..o_n {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = k.bias()[o];
                for i in 0..i_n {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = y as i64 + ky as i64 - py;
                            let ix = xx as i64 + kx as i64 - px;
                            if iy >= 0 && ix >= 0 && iy < h as i64 && ix < w as i64 {
                                acc += k.weight(o, i, ky, kx) * x.get(i, iy as usize, ix as usize);
                            }
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.random_bool(density))
}

pub fn random_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn random_kernel(rng: &mut impl Rng, o: usize, i: usize, kh: usize, kw: usize, with_bias: bool) -> KernelBank {
    let weights = (0..o * i * kh * kw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..o)
        .map(|_| if with_bias { rng.random_range(-1.0..1.0) } else { 0.0 })
        .collect();
    KernelBank::new(o, i, kh, kw, weights, bias).unwrap()
}

/// Norm-wise relative error `max|a - b| / max|b|`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}
