//! Empirical N-distances between realisations.
//!
//! A realisation is a sample of component feature points. Two samples are
//! compared with the V-statistic
//!
//! ```text
//! N̂ = 2/(m₁m₂) ΣΣ L(xᵢ,yⱼ) − 1/m₁² ΣΣ L(xᵢ,xⱼ) − 1/m₂² ΣΣ L(yᵢ,yⱼ)
//! ```
//!
//! under either the scalar kernel `|x − y|` (perimeter/area ratios) or the
//! functional kernel of depth `D` (C-function vectors).

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{common_radius, RealisationFeatures};
use crate::morphology::DiscMask;
use crate::seed;

/// Tolerance below zero that is attributed to rounding and clamped.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_DEPTH: usize = 2;

/// Which component features enter the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureMode {
    /// Perimeter/area ratio only, scalar kernel.
    Ratio,
    /// C-function only, functional kernel.
    Curvature { depth: usize },
    /// C-function with the ratio appended as one extra coordinate.
    Both { depth: usize },
    /// `alpha · N̂_ratio + (1 − alpha) · N̂_curvature` on the same subsample.
    Combined { alpha: f64, depth: usize },
}

impl FeatureMode {
    pub fn depth(&self) -> Option<usize> {
        match *self {
            FeatureMode::Ratio => None,
            FeatureMode::Curvature { depth } | FeatureMode::Both { depth } | FeatureMode::Combined { depth, .. } => {
                Some(depth)
            }
        }
    }

    /// Replaces the depth of functional modes.
    pub fn with_depth(self, depth: usize) -> Self {
        match self {
            FeatureMode::Ratio => FeatureMode::Ratio,
            FeatureMode::Curvature { .. } => FeatureMode::Curvature { depth },
            FeatureMode::Both { .. } => FeatureMode::Both { depth },
            FeatureMode::Combined { alpha, .. } => FeatureMode::Combined { alpha, depth },
        }
    }

    fn validate(&self, l: usize) -> Result<()> {
        if let FeatureMode::Combined { alpha, .. } = *self {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(invalid(format!("combined weight {alpha} outside [0, 1]")));
            }
        }
        if let Some(depth) = self.depth() {
            let len = if matches!(self, FeatureMode::Both { .. }) { l + 1 } else { l };
            if depth < 1 || depth > len {
                return Err(invalid(format!("depth {depth} outside 1..={len}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::Ratio => f.write_str("ratio"),
            FeatureMode::Curvature { .. } => f.write_str("curvature"),
            FeatureMode::Both { .. } => f.write_str("both"),
            FeatureMode::Combined { alpha, .. } => write!(f, "combined:{alpha}"),
        }
    }
}

/// Parses `ratio`, `curvature`, `both` or `combined:α`, with the default depth.
impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let depth = DEFAULT_DEPTH;
        match s.to_ascii_lowercase().as_str() {
            "ratio" => Ok(FeatureMode::Ratio),
            "curvature" => Ok(FeatureMode::Curvature { depth }),
            "both" => Ok(FeatureMode::Both { depth }),
            other => match other.strip_prefix("combined:") {
                Some(a) => {
                    let alpha: f64 = a.parse().map_err(|_| invalid(format!("bad combined weight '{a}'")))?;
                    if !(0.0..=1.0).contains(&alpha) {
                        return Err(invalid(format!("combined weight {alpha} outside [0, 1]")));
                    }
                    Ok(FeatureMode::Combined { alpha, depth })
                }
                None => Err(invalid(format!("unknown mode '{s}'"))),
            },
        }
    }
}

/// How many components to draw from each realisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentCount {
    Fixed(usize),
    /// The component count of the smaller realisation.
    All,
}

impl fmt::Display for ComponentCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentCount::Fixed(n) => write!(f, "{n}"),
            ComponentCount::All => f.write_str("all"),
        }
    }
}

impl FromStr for ComponentCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ComponentCount::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(invalid(format!("component count must be a positive integer or 'all', got '{s}'"))),
            Ok(n) => Ok(ComponentCount::Fixed(n)),
        }
    }
}

impl Serialize for ComponentCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ComponentCount::Fixed(n) => s.serialize_u64(*n as u64),
            ComponentCount::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for ComponentCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("component count must be positive")),
            Raw::N(n) => Ok(ComponentCount::Fixed(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPolicy {
    pub count: ComponentCount,
    pub seed: u64,
}

impl SamplingPolicy {
    pub fn all(seed: u64) -> Self {
        Self { count: ComponentCount::All, seed }
    }
}

/// `|x − y|`.
#[inline]
pub fn kernel_scalar(x: f64, y: f64) -> f64 {
    (x - y).abs()
}

/// Depth-`D` functional kernel: the sum over all coordinate subsets of size
/// `1..=D` of the Euclidean norm of `f − g` restricted to the subset.
pub fn kernel_functional(f: &[f64], g: &[f64], depth: usize) -> Result<f64> {
    if f.len() != g.len() {
        return Err(invalid(format!("vector lengths differ: {} vs {}", f.len(), g.len())));
    }
    if depth < 1 || depth > f.len() {
        return Err(invalid(format!("depth {depth} outside 1..={}", f.len())));
    }
    let mut scratch = Vec::new();
    Ok(functional_unchecked(f, g, depth, &mut scratch))
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Sum of `sqrt(Σ_{k∈A} sq[k])` over all `size`-subsets `A` of `sq`.
fn subset_root_sum(sq: &[f64], size: usize) -> f64 {
    fn recurse(sq: &[f64], start: usize, left: usize, partial: f64) -> f64 {
        if left == 0 {
            return partial.sqrt();
        }
        (start..=sq.len() - left)
            .map(|i| recurse(sq, i + 1, left - 1, partial + sq[i]))
            .sum()
    }
    match size {
        2 => {
            let mut total = 0.0;
            for i in 0..sq.len() {
                for j in i + 1..sq.len() {
                    total += (sq[i] + sq[j]).sqrt();
                }
            }
            total
        }
        _ => recurse(sq, 0, size, 0.0),
    }
}

/// Coordinates where `f` and `g` agree contribute nothing to a subset's
/// norm, so a subset with `a` differing and `m − a` agreeing coordinates
/// equals the norm over its differing part. Summing over the `a`-subsets of
/// the differing coordinates, each weighted by `C(n − s, m − a)`, gives the
/// same value as enumerating all `m`-subsets of `1..n`.
fn functional_unchecked(f: &[f64], g: &[f64], depth: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    let mut abs_sum = 0.0;
    for (a, b) in f.iter().zip(g) {
        let d = a - b;
        if d != 0.0 {
            abs_sum += d.abs();
            scratch.push(d * d);
        }
    }
    let s = scratch.len();
    if s == 0 {
        return 0.0;
    }
    let zeros = f.len() - s;
    let mut total = 0.0;
    for a in 1..=depth.min(s) {
        let weight: f64 = (a..=depth).map(|m| binomial(zeros, m - a)).sum();
        if weight == 0.0 {
            continue;
        }
        let part = if a == 1 { abs_sum } else { subset_root_sum(scratch, a) };
        total += weight * part;
    }
    total
}

/// Kernel applied to feature points stored as coordinate slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKernel {
    /// `|x₀ − y₀|` on one-coordinate points.
    Scalar,
    Functional { depth: usize },
}

impl PointKernel {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match *self {
            PointKernel::Scalar => kernel_scalar(a[0], b[0]),
            PointKernel::Functional { depth } => functional_unchecked(a, b, depth, scratch),
        }
    }

    fn check(&self, p: &[f64], dim: usize) -> Result<()> {
        if p.len() != dim {
            return Err(invalid(format!("point dimension {} differs from {dim}", p.len())));
        }
        match *self {
            PointKernel::Scalar if dim != 1 => Err(invalid("scalar kernel needs one-coordinate points")),
            PointKernel::Functional { depth } if depth < 1 || depth > dim => {
                Err(invalid(format!("depth {depth} outside 1..={dim}")))
            }
            _ => Ok(()),
        }
    }
}

fn cmp_samples<P: AsRef<[f64]>>(xs: &[P], ys: &[P]) -> Ordering {
    xs.len().cmp(&ys.len()).then_with(|| {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let (x, y) = (x.as_ref(), y.as_ref());
                x.iter()
                    .zip(y)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or_else(|| x.len().cmp(&y.len()))
            })
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn within_sum(m: usize, mut w: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..m {
        diag += w(i, i);
        for j in i + 1..m {
            off += w(i, j);
        }
    }
    diag + 2.0 * off
}

/// Evaluates N̂ from kernel lookups in sample-local indices. The caller
/// orients the samples canonically so that swapping arguments reproduces
/// the result bit for bit.
fn nhat_oriented(
    m1: usize,
    m2: usize,
    mut cross: impl FnMut(usize, usize) -> f64,
    wx: impl FnMut(usize, usize) -> f64,
    wy: impl FnMut(usize, usize) -> f64,
) -> Result<f64> {
    let mut sxy = 0.0;
    for i in 0..m1 {
        for j in 0..m2 {
            sxy += cross(i, j);
        }
    }
    let (f1, f2) = (m1 as f64, m2 as f64);
    let sxx = within_sum(m1, wx);
    let syy = within_sum(m2, wy);
    let value = 2.0 * sxy / (f1 * f2) - (sxx / (f1 * f1) + syy / (f2 * f2));
    settle(value)
}

fn settle(value: f64) -> Result<f64> {
    if value.is_nan() || value < -NEGATIVE_TOLERANCE {
        Err(Error::NegativeDistance(value))
    } else {
        Ok(value.max(0.0))
    }
}

/// Empirical N-distance between two samples of feature points.
pub fn n_distance<P: AsRef<[f64]>>(xs: &[P], ys: &[P], kernel: PointKernel) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(invalid("N-distance needs two nonempty samples"));
    }
    let dim = xs[0].as_ref().len();
    for p in xs.iter().chain(ys) {
        kernel.check(p.as_ref(), dim)?;
    }
    let (xs, ys) = if cmp_samples(xs, ys) == Ordering::Greater { (ys, xs) } else { (xs, ys) };
    let (mut s1, mut s2, mut s3) = (Vec::new(), Vec::new(), Vec::new());
    nhat_oriented(
        xs.len(),
        ys.len(),
        |i, j| kernel.eval(xs[i].as_ref(), ys[j].as_ref(), &mut s1),
        |i, j| kernel.eval(xs[i].as_ref(), xs[j].as_ref(), &mut s2),
        |i, j| kernel.eval(ys[i].as_ref(), ys[j].as_ref(), &mut s3),
    )
}

/// N̂ between two samples of real numbers under `|x − y|`.
pub fn n_distance_scalar(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let wrap = |v: &[f64]| v.iter().map(|&x| [x]).collect::<Vec<_>>();
    n_distance(&wrap(xs), &wrap(ys), PointKernel::Scalar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointKind {
    Ratio,
    Curvature,
    Both,
}

#[derive(Debug, Clone, Copy)]
struct Channel {
    weight: f64,
    kind: PointKind,
    kernel: PointKernel,
}

fn channels(mode: FeatureMode) -> Vec<Channel> {
    let single = |kind, kernel| vec![Channel { weight: 1.0, kind, kernel }];
    match mode {
        FeatureMode::Ratio => single(PointKind::Ratio, PointKernel::Scalar),
        FeatureMode::Curvature { depth } => single(PointKind::Curvature, PointKernel::Functional { depth }),
        FeatureMode::Both { depth } => single(PointKind::Both, PointKernel::Functional { depth }),
        FeatureMode::Combined { alpha, depth } => vec![
            Channel { weight: alpha, kind: PointKind::Ratio, kernel: PointKernel::Scalar },
            Channel { weight: 1.0 - alpha, kind: PointKind::Curvature, kernel: PointKernel::Functional { depth } },
        ],
    }
}

fn points_of(f: &RealisationFeatures, kind: PointKind) -> Vec<Vec<f64>> {
    f.components
        .iter()
        .map(|c| match kind {
            PointKind::Ratio => vec![c.pa_ratio],
            PointKind::Curvature => c.c_function.clone(),
            PointKind::Both => {
                let mut v = Vec::with_capacity(c.c_function.len() + 1);
                v.extend_from_slice(&c.c_function);
                v.push(c.pa_ratio);
                v
            }
        })
        .collect()
}

/// Number of components drawn from each side.
pub fn effective_count(count: ComponentCount, na: usize, nb: usize) -> Result<usize> {
    let smaller = na.min(nb);
    match count {
        ComponentCount::All => Ok(smaller),
        ComponentCount::Fixed(0) => Err(invalid("component count must be positive")),
        ComponentCount::Fixed(c) => {
            if c > na && c > nb {
                log::warn!("component count {c} exceeds both realisations ({na}, {nb}); using all");
            }
            Ok(c.min(smaller))
        }
    }
}

/// Draws `k` of `n` indices without replacement, sorted ascending.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

fn draw(policy: &SamplingPolicy, na: usize, nb: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = effective_count(policy.count, na, nb)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let ia = sample_indices(&mut rng, na, k);
    let ib = sample_indices(&mut rng, nb, k);
    Ok((ia, ib))
}

fn cmp_realisations(a: &RealisationFeatures, b: &RealisationFeatures) -> Ordering {
    let key = |c: &crate::features::ComponentFeatures| {
        std::iter::once(c.pa_ratio).chain(c.c_function.iter().copied()).collect::<Vec<_>>()
    };
    a.source_id.cmp(&b.source_id).then_with(|| a.len().cmp(&b.len())).then_with(|| {
        a.components
            .iter()
            .zip(&b.components)
            .map(|(x, y)| cmp_samples(&[key(x)], &[key(y)]))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Draws subsamples for the pair, the canonically smaller realisation
/// first, so the result does not depend on argument order.
fn draw_pair(
    policy: &SamplingPolicy,
    a: &RealisationFeatures,
    b: &RealisationFeatures,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if cmp_realisations(a, b) == Ordering::Greater {
        let (ib, ia) = draw(policy, b.len(), a.len())?;
        Ok((ia, ib))
    } else {
        draw(policy, a.len(), b.len())
    }
}

fn check_pair(a: &RealisationFeatures, b: &RealisationFeatures, mode: FeatureMode) -> Result<()> {
    if a.radius_r != b.radius_r {
        return Err(Error::RadiusMismatch(a.radius_r, b.radius_r));
    }
    if a.is_empty() || b.is_empty() {
        return Err(invalid("realisation without components"));
    }
    mode.validate(DiscMask::new(a.radius_r)?.size_l())
}

/// N-distance between two realisations after subsampling components.
pub fn realisation_distance(
    a: &RealisationFeatures,
    b: &RealisationFeatures,
    mode: FeatureMode,
    policy: SamplingPolicy,
) -> Result<f64> {
    check_pair(a, b, mode)?;
    let (ia, ib) = draw_pair(&policy, a, b)?;
    let mut total = None;
    for ch in channels(mode) {
        let pa = points_of(a, ch.kind);
        let pb = points_of(b, ch.kind);
        let xs: Vec<&[f64]> = ia.iter().map(|&i| pa[i].as_slice()).collect();
        let ys: Vec<&[f64]> = ib.iter().map(|&i| pb[i].as_slice()).collect();
        let v = n_distance(&xs, &ys, ch.kernel)?;
        total = Some(accumulate(total, ch.weight, v));
    }
    Ok(total.expect("at least one channel"))
}

fn accumulate(total: Option<f64>, weight: f64, v: f64) -> f64 {
    match total {
        None if weight == 1.0 => v,
        None => weight * v,
        Some(t) => t + weight * v,
    }
}

/// Symmetric matrix of N-distances with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    pub mode: FeatureMode,
    pub policy: SamplingPolicy,
    pub r: u32,
}

/// Sidecar metadata written next to a matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub mode: String,
    #[serde(rename = "D")]
    pub depth: Option<usize>,
    pub count: ComponentCount,
    pub seed: u64,
    pub r: u32,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, checking symmetry, zero
    /// diagonal and nonnegativity.
    pub fn from_values(
        ids: Vec<String>,
        values: Vec<f64>,
        mode: FeatureMode,
        policy: SamplingPolicy,
        r: u32,
    ) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(invalid(format!("{n} ids need {} values, got {}", n * n, values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(format!("entry ({i},{j}) = {v} is not a finite nonnegative number")));
                }
                if v != values[j * n + i] {
                    return Err(invalid(format!("asymmetric entries at ({i},{j})")));
                }
            }
        }
        Ok(Self { ids, values, mode, policy, r })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> MatrixMeta {
        MatrixMeta {
            mode: self.mode.to_string(),
            depth: self.mode.depth(),
            count: self.policy.count,
            seed: self.policy.seed,
            r: self.r,
        }
    }

    /// `id,<id_1>,…` header then one row per realisation. Values use the
    /// shortest decimal form that parses back to the same `f64`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_owned()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf8 csv"))
    }

    pub fn from_csv(text: &str, meta: &MatrixMeta) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut rows = rd.records();
        let header = rows.next().ok_or_else(|| Error::Format("empty matrix csv".into()))?.map_err(csv_err)?;
        if header.get(0) != Some("id") {
            return Err(Error::Format("matrix csv must start with 'id'".into()));
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut values = Vec::with_capacity(ids.len() * ids.len());
        for (i, row) in rows.enumerate() {
            let row = row.map_err(csv_err)?;
            if row.get(0) != ids.get(i).map(String::as_str) {
                return Err(Error::Format(format!("row {i} id does not match header")));
            }
            if row.len() != ids.len() + 1 {
                return Err(Error::Format(format!("row {i} has {} fields", row.len())));
            }
            for field in row.iter().skip(1) {
                values.push(field.parse::<f64>().map_err(|_| Error::Format(format!("row {i}: bad number '{field}'")))?);
            }
        }
        let mut mode: FeatureMode = meta.mode.parse()?;
        if let Some(d) = meta.depth {
            mode = mode.with_depth(d);
        }
        let policy = SamplingPolicy { count: meta.count, seed: meta.seed };
        Self::from_values(ids, values, mode, policy, meta.r)
    }

    /// Writes the CSV and its `.meta.json` sidecar.
    pub fn write(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        std::fs::write(csv_path, self.to_csv()?)?;
        let meta = serde_json::to_string_pretty(&self.meta())? + "\n";
        std::fs::write(sidecar_path(csv_path), meta)?;
        Ok(())
    }

    pub fn read(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let meta: MatrixMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
        Self::from_csv(&std::fs::read_to_string(csv_path)?, &meta)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// `dist.csv` → `dist.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

/// Within-realisation Gram matrices are kept when the component count is
/// at most this.
const WITHIN_CACHE_LIMIT: usize = 1024;
/// Cross-kernel memo per pair is kept up to this many entries.
const CROSS_CACHE_LIMIT: usize = 1 << 20;

struct ChannelData {
    channel: Channel,
    points: Vec<Vec<Vec<f64>>>,
    within: Vec<Option<Vec<f64>>>,
}

/// Precomputed kernel state for computing many distance matrices over the
/// same realisations, e.g. one per sampling policy.
///
/// Every matrix entry is bitwise identical to [`realisation_distance`]
/// called with the per-cell seed from [`cell_seed`].
pub struct PairwiseEngine<'a> {
    fs: &'a [RealisationFeatures],
    mode: FeatureMode,
    r: u32,
    data: Vec<ChannelData>,
}

/// Seed used for cell `(i, j)` of a matrix built with `policy_seed`.
pub fn cell_seed(policy_seed: u64, i: usize, j: usize) -> u64 {
    seed::derive(policy_seed, &[i.min(j) as u64, i.max(j) as u64])
}

impl<'a> PairwiseEngine<'a> {
    pub fn new(fs: &'a [RealisationFeatures], mode: FeatureMode) -> Result<Self> {
        let r = common_radius(fs)?;
        if let Some(f) = fs.iter().find(|f| f.is_empty()) {
            return Err(invalid(format!("realisation '{}' has no components", f.source_id)));
        }
        mode.validate(DiscMask::new(r)?.size_l())?;
        let data = channels(mode)
            .into_iter()
            .map(|channel| {
                let points: Vec<_> = fs.iter().map(|f| points_of(f, channel.kind)).collect();
                let within = points
                    .par_iter()
                    .map(|p| (p.len() <= WITHIN_CACHE_LIMIT).then(|| gram(p, channel.kernel)))
                    .collect();
                ChannelData { channel, points, within }
            })
            .collect();
        Ok(Self { fs, mode, r, data })
    }

    pub fn matrix(&self, policy: SamplingPolicy) -> Result<DistanceMatrix> {
        Ok(self.matrices(&[policy])?.pop().expect("one policy"))
    }

    /// One matrix per policy. Cells are computed in parallel; each pair's
    /// cross-kernel values are shared by all policies.
    pub fn matrices(&self, policies: &[SamplingPolicy]) -> Result<Vec<DistanceMatrix>> {
        let n = self.fs.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let cells: Vec<Vec<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| self.cell(i, j, policies))
            .collect::<Result<_>>()?;

        let ids: Vec<String> = self.fs.iter().map(|f| f.source_id.clone()).collect();
        Ok(policies
            .iter()
            .enumerate()
            .map(|(p, policy)| {
                let mut values = vec![0.0; n * n];
                for (&(i, j), cell) in pairs.iter().zip(&cells) {
                    values[i * n + j] = cell[p];
                    values[j * n + i] = cell[p];
                }
                DistanceMatrix { ids: ids.clone(), values, mode: self.mode, policy: *policy, r: self.r }
            })
            .collect())
    }

    fn cell(&self, i: usize, j: usize, policies: &[SamplingPolicy]) -> Result<Vec<f64>> {
        let (na, nb) = (self.fs[i].len(), self.fs[j].len());
        let draws = policies
            .iter()
            .map(|p| draw_pair(&SamplingPolicy { count: p.count, seed: cell_seed(p.seed, i, j) }, &self.fs[i], &self.fs[j]))
            .collect::<Result<Vec<_>>>()?;
        let mut totals: Vec<Option<f64>> = vec![None; policies.len()];
        let mut scratch = Vec::new();
        for ch in &self.data {
            let (pa, pb) = (&ch.points[i], &ch.points[j]);
            let kernel = ch.channel.kernel;
            let mut memo = (na * nb <= CROSS_CACHE_LIMIT).then(|| vec![f64::NAN; na * nb]);
            let mut cross_ab = |x: usize, y: usize, scratch: &mut Vec<f64>| match memo.as_mut() {
                Some(m) => {
                    let slot = &mut m[x * nb + y];
                    if slot.is_nan() {
                        *slot = kernel.eval(&pa[x], &pb[y], scratch);
                    }
                    *slot
                }
                None => kernel.eval(&pa[x], &pb[y], scratch),
            };
            for ((ia, ib), total) in draws.iter().zip(totals.iter_mut()) {
                let xs: Vec<&[f64]> = ia.iter().map(|&k| pa[k].as_slice()).collect();
                let ys: Vec<&[f64]> = ib.iter().map(|&k| pb[k].as_slice()).collect();
                let swap = cmp_samples(&xs, &ys) == Ordering::Greater;
                let wa = self.within_lookup(ch, i, ia);
                let wb = self.within_lookup(ch, j, ib);
                let v = if swap {
                    nhat_oriented(ib.len(), ia.len(), |x, y| cross_ab(ia[y], ib[x], &mut scratch), wb, wa)?
                } else {
                    nhat_oriented(ia.len(), ib.len(), |x, y| cross_ab(ia[x], ib[y], &mut scratch), wa, wb)?
                };
                *total = Some(accumulate(*total, ch.channel.weight, v));
            }
        }
        Ok(totals.into_iter().map(|t| t.expect("at least one channel")).collect())
    }

    fn within_lookup<'s>(
        &'s self,
        ch: &'s ChannelData,
        r: usize,
        idx: &'s [usize],
    ) -> impl FnMut(usize, usize) -> f64 + 's {
        let pts = &ch.points[r];
        let cached = ch.within[r].as_deref();
        let m = pts.len();
        let kernel = ch.channel.kernel;
        let mut scratch = Vec::new();
        move |x, y| match cached {
            Some(g) => g[idx[x] * m + idx[y]],
            None => kernel.eval(&pts[idx[x]], &pts[idx[y]], &mut scratch),
        }
    }
}

fn gram(points: &[Vec<f64>], kernel: PointKernel) -> Vec<f64> {
    let m = points.len();
    let mut g = vec![0.0; m * m];
    let mut scratch = Vec::new();
    for i in 0..m {
        g[i * m + i] = kernel.eval(&points[i], &points[i], &mut scratch);
        for j in i + 1..m {
            let v = kernel.eval(&points[i], &points[j], &mut scratch);
            g[i * m + j] = v;
            g[j * m + i] = v;
        }
    }
    g
}

/// Full pairwise matrix; cell `(i, j)` uses the seed [`cell_seed`]`(policy.seed, i, j)`.
pub fn pairwise_matrix(
    fs: &[RealisationFeatures],
    mode: FeatureMode,
    policy: SamplingPolicy,
) -> Result<DistanceMatrix> {
    PairwiseEngine::new(fs, mode)?.matrix(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ComponentFeatures;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn scalar_kernel_values() {
        assert_eq!(kernel_scalar(0.0, 1.0), 1.0);
        assert_eq!(kernel_scalar(0.25, 0.25), 0.0);
        assert!(close(kernel_scalar(0.3, 0.7), 0.4));
    }

    #[test]
    fn functional_kernel_values() {
        assert_eq!(kernel_functional(&[0.0, 0.0], &[1.0, 1.0], 1).unwrap(), 2.0);
        assert!(close(kernel_functional(&[0.0, 0.0], &[1.0, 1.0], 2).unwrap(), 2.0 + 2f64.sqrt()));
        assert_eq!(kernel_functional(&[0.3, 0.1, 0.6], &[0.3, 0.1, 0.6], 3).unwrap(), 0.0);
        assert!(kernel_functional(&[0.0], &[1.0, 2.0], 1).is_err());
        assert!(kernel_functional(&[0.0, 1.0], &[1.0, 2.0], 3).is_err());
        assert!(kernel_functional(&[0.0, 1.0], &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn agreeing_coordinates_weighting() {
        // one differing coordinate among four, depth 3: the term |d| appears
        // in 1 + C(3,1) + C(3,2) = 7 subsets
        let v = kernel_functional(&[0.0, 0.5, 0.5, 0.5], &[0.2, 0.5, 0.5, 0.5], 3).unwrap();
        assert!(close(v, 7.0 * 0.2));
    }

    #[test]
    fn nhat_hand_values() {
        assert!(close(n_distance_scalar(&[0.0], &[1.0]).unwrap(), 2.0));
        assert!(close(n_distance_scalar(&[0.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0));
        assert_eq!(n_distance_scalar(&[0.1, 0.4, 0.4], &[0.4, 0.1, 0.4]).unwrap(), 0.0);
        assert!(n_distance_scalar(&[], &[1.0]).is_err());
    }

    #[test]
    fn scalar_kernel_rejects_vectors() {
        assert!(n_distance(&[vec![0.0, 1.0]], &[vec![1.0, 1.0]], PointKernel::Scalar).is_err());
        assert!(n_distance(&[vec![0.0, 1.0]], &[vec![1.0]], PointKernel::Functional { depth: 1 }).is_err());
    }

    #[test]
    fn negative_values_are_errors() {
        assert_eq!(settle(-1e-12).unwrap(), 0.0);
        assert!(matches!(settle(-1e-6), Err(Error::NegativeDistance(_))));
    }

    #[test]
    fn mode_and_count_parsing() {
        assert_eq!("both".parse::<FeatureMode>().unwrap(), FeatureMode::Both { depth: DEFAULT_DEPTH });
        assert_eq!(
            "combined:0.25".parse::<FeatureMode>().unwrap(),
            FeatureMode::Combined { alpha: 0.25, depth: DEFAULT_DEPTH }
        );
        assert!("combined:2".parse::<FeatureMode>().is_err());
        assert!("nope".parse::<FeatureMode>().is_err());
        assert_eq!("ALL".parse::<ComponentCount>().unwrap(), ComponentCount::All);
        assert_eq!("10".parse::<ComponentCount>().unwrap(), ComponentCount::Fixed(10));
        assert!("0".parse::<ComponentCount>().is_err());
        let json = serde_json::to_string(&[ComponentCount::Fixed(10), ComponentCount::All]).unwrap();
        assert_eq!(json, r#"[10,"all"]"#);
        let back: Vec<ComponentCount> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, [ComponentCount::Fixed(10), ComponentCount::All]);
    }

    fn realisation(id: &str, ratios: &[f64]) -> RealisationFeatures {
        let l = DiscMask::new(1).unwrap().size_l();
        RealisationFeatures {
            components: ratios
                .iter()
                .map(|&pa| {
                    let mut t = vec![0.0; l];
                    t[((pa * 4.0) as usize).min(l - 1)] = 1.0;
                    ComponentFeatures { c_function: t, pa_ratio: pa, n_boundary: 1, area: 1 }
                })
                .collect(),
            radius_r: 1,
            source_id: id.into(),
            class_label: None,
        }
    }

    #[test]
    fn singleton_ratio_distance() {
        let a = realisation("a", &[0.5]);
        let b = realisation("b", &[0.9]);
        let d = realisation_distance(&a, &b, FeatureMode::Ratio, SamplingPolicy::all(1)).unwrap();
        assert!(close(d, 0.8));
    }

    #[test]
    fn same_object_is_zero() {
        let a = realisation("a", &[0.5, 0.7, 0.2, 1.0]);
        for mode in [
            FeatureMode::Ratio,
            FeatureMode::Curvature { depth: 2 },
            FeatureMode::Both { depth: 2 },
            FeatureMode::Combined { alpha: 0.3, depth: 1 },
        ] {
            assert_eq!(realisation_distance(&a, &a, mode, SamplingPolicy::all(9)).unwrap(), 0.0);
        }
    }

    #[test]
    fn radius_and_depth_checks() {
        let a = realisation("a", &[0.5]);
        let mut b = realisation("b", &[0.5]);
        b.radius_r = 3;
        assert!(matches!(
            realisation_distance(&a, &b, FeatureMode::Ratio, SamplingPolicy::all(0)),
            Err(Error::RadiusMismatch(1, 3))
        ));
        // r = 1 gives 5 C-function points; Both has 6
        let a2 = realisation("a2", &[0.1]);
        assert!(realisation_distance(&a, &a2, FeatureMode::Curvature { depth: 6 }, SamplingPolicy::all(0)).is_err());
        assert!(realisation_distance(&a, &a2, FeatureMode::Both { depth: 6 }, SamplingPolicy::all(0)).is_ok());
    }

    #[test]
    fn count_clamping() {
        assert_eq!(effective_count(ComponentCount::Fixed(10), 4, 30).unwrap(), 4);
        assert_eq!(effective_count(ComponentCount::Fixed(50), 4, 30).unwrap(), 4);
        assert_eq!(effective_count(ComponentCount::All, 4, 30).unwrap(), 4);
        assert!(effective_count(ComponentCount::Fixed(0), 4, 30).is_err());
    }

    #[test]
    fn matrix_shapes() {
        let a = realisation("a", &[0.5, 0.25]);
        let m = pairwise_matrix(std::slice::from_ref(&a), FeatureMode::Ratio, SamplingPolicy::all(0)).unwrap();
        assert_eq!(m.values(), &[0.0]);
        let dup = vec![a.clone(), a.clone()];
        let m = pairwise_matrix(&dup, FeatureMode::Both { depth: 2 }, SamplingPolicy::all(0)).unwrap();
        assert_eq!(m.values(), &[0.0; 4]);
    }

    #[test]
    fn csv_round_trip() {
        let fs = vec![realisation("a,1", &[0.5, 0.25]), realisation("b", &[0.1, 0.3, 0.9]), realisation("c", &[1.0])];
        let m = pairwise_matrix(&fs, FeatureMode::Combined { alpha: 0.5, depth: 2 }, SamplingPolicy::all(3)).unwrap();
        let text = m.to_csv().unwrap();
        assert!(text.starts_with("id,\"a,1\",b,c\n"));
        let back = DistanceMatrix::from_csv(&text, &m.meta()).unwrap();
        assert_eq!(back, m);
        let bad = text.replace("\nb,", "\nx,");
        assert!(DistanceMatrix::from_csv(&bad, &m.meta()).is_err());
    }

    #[test]
    fn from_values_validates() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let p = SamplingPolicy::all(0);
        assert!(DistanceMatrix::from_values(ids.clone(), vec![0.0, 1.0, 2.0, 0.0], FeatureMode::Ratio, p, 3).is_err());
        assert!(DistanceMatrix::from_values(ids.clone(), vec![0.0, -1.0, -1.0, 0.0], FeatureMode::Ratio, p, 3).is_err());
        assert!(DistanceMatrix::from_values(ids, vec![0.0, 1.0, 1.0, 0.0], FeatureMode::Ratio, p, 3).is_ok());
    }
}
