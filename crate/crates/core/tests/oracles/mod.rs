//! Independent reference implementations used by the integration tests.
//! Each one follows the defining formula directly, with no shortcuts.
#![allow(dead_code)]

use randset::ndistance::{ComponentCount, DistanceMatrix, FeatureMode, SamplingPolicy};
use randset::raster::BinaryRaster;

/// Functional kernel by enumerating every coordinate subset of size 1..=depth.
pub fn functional_kernel(f: &[f64], g: &[f64], depth: usize) -> f64 {
    let n = f.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > depth {
            continue;
        }
        let sq: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| (f[k] - g[k]).powi(2)).sum();
        total += sq.sqrt();
    }
    total
}

/// N̂ written out term by term, diagonal included.
pub fn nhat(xs: &[Vec<f64>], ys: &[Vec<f64>], kernel: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let (m1, m2) = (xs.len() as f64, ys.len() as f64);
    let mut cross = 0.0;
    for x in xs {
        for y in ys {
            cross += kernel(x, y);
        }
    }
    let mut within_x = 0.0;
    for a in xs {
        for b in xs {
            within_x += kernel(a, b);
        }
    }
    let mut within_y = 0.0;
    for a in ys {
        for b in ys {
            within_y += kernel(a, b);
        }
    }
    2.0 / (m1 * m2) * cross - within_x / (m1 * m1) - within_y / (m2 * m2)
}

pub fn scalar(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]).abs()
}

/// Ward distance between two groups of leaves computed from the original
/// distances alone: the increase in within-group sum of squares, scaled so
/// singletons give back their distance.
pub fn ward_closed_form(d: &[Vec<f64>], p: &[usize], q: &[usize]) -> f64 {
    let s = |a: &[usize], b: &[usize]| -> f64 { a.iter().flat_map(|&i| b.iter().map(move |&j| d[i][j].powi(2))).sum() };
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let w2 = 2.0 * np * nq / (np + nq)
        * (s(p, q) / (np * nq) - s(p, p) / (2.0 * np * np) - s(q, q) / (2.0 * nq * nq));
    w2.max(0.0).sqrt()
}

/// Merge sequence `(id_a, id_b, height)` from scratch: at every step all
/// inter-cluster distances are recomputed from the closed form. Clusters
/// are compared by their smallest member; leaves are `0..n` and the
/// cluster made at step `s` is `n + s`.
pub fn ward_merges(d: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = d.len();
    let mut clusters: Vec<(Vec<usize>, usize)> = (0..n).map(|i| (vec![i], i)).collect();
    let mut out = Vec::new();
    for step in 0..n.saturating_sub(1) {
        clusters.sort_by_key(|(members, _)| members[0]);
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let w = ward_closed_form(d, &clusters[a].0, &clusters[b].0);
                if w < best.2 {
                    best = (a, b, w);
                }
            }
        }
        let (a, b, h) = best;
        let (mb, idb) = clusters.remove(b);
        let (ma, ida) = clusters.remove(a);
        out.push((ida, idb, h));
        let mut merged = [ma, mb].concat();
        merged.sort_unstable();
        clusters.push((merged, n + step));
    }
    out
}

/// 8-connected components by repeated label propagation until stable.
/// Returns one label per pixel (`usize::MAX` for background).
pub fn component_labels(r: &BinaryRaster) -> Vec<usize> {
    let (w, h) = (r.width(), r.height());
    let mut label: Vec<usize> = (0..w * h).map(|i| if r.bits()[i] { i } else { usize::MAX }).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if label[i] == usize::MAX {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if label[j] < label[i] {
                            label[i] = label[j];
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return label;
        }
    }
}

/// Foreground pixel with a background or out-of-window 4-neighbour.
pub fn is_boundary(r: &BinaryRaster, x: usize, y: usize) -> bool {
    let (x, y) = (x as i64, y as i64);
    r.is_foreground(x, y)
        && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| !r.is_foreground(x + dx, y + dy))
}

/// Foreground pixels within Euclidean distance `radius` of `(x, y)`.
pub fn disc_hits(r: &BinaryRaster, x: usize, y: usize, radius: i64) -> usize {
    let mut hits = 0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius && r.is_foreground(x as i64 + dx, y as i64 + dy) {
                hits += 1;
            }
        }
    }
    hits
}

/// Distance matrix with dummy metadata from a closure.
pub fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DistanceMatrix {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i * n + j] = f(i.min(j), i.max(j));
            }
        }
    }
    DistanceMatrix::from_values(
        (0..n).map(|i| format!("r{i}")).collect(),
        values,
        FeatureMode::Ratio,
        SamplingPolicy { count: ComponentCount::All, seed: 0 },
        3,
    )
    .expect("valid matrix")
}

/// Three blocks of `per_block` points: 0.1 within, 10 across.
pub fn block_matrix(per_block: usize) -> (DistanceMatrix, Vec<usize>) {
    let labels: Vec<usize> = (0..3 * per_block).map(|i| i / per_block).collect();
    let m = matrix(labels.len(), |i, j| if labels[i] == labels[j] { 0.1 } else { 10.0 });
    (m, labels)
}

/// Euclidean distance matrix of points.
pub fn euclidean(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()).collect())
        .collect()
}

pub fn matrix_from_rows(d: &[Vec<f64>]) -> DistanceMatrix {
    matrix(d.len(), |i, j| d[i][j])
}
