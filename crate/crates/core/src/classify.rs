//! Supervised and unsupervised classification over a distance matrix.
//!
//! Class labels are `0..k`; "smallest class index" in tie rules refers to
//! this numbering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ndistance::DistanceMatrix;

/// A training realisation: its row in the distance matrix and its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledIndex {
    pub index: usize,
    pub label: usize,
}

/// Kernel `𝒦` supported on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingKernel {
    #[default]
    Uniform,
    Epanechnikov,
}

impl SmoothingKernel {
    /// Weight at `t = d / h`; zero outside `[0, 1)`.
    pub fn weight(self, t: f64) -> f64 {
        if !(0.0..1.0).contains(&t) {
            return 0.0;
        }
        match self {
            SmoothingKernel::Uniform => 1.0,
            SmoothingKernel::Epanechnikov => 1.5 * (1.0 - t * t),
        }
    }
}

impl std::str::FromStr for SmoothingKernel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "epanechnikov" => Ok(Self::Epanechnikov),
            _ => Err(invalid(format!("unknown kernel '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorVector {
    pub probs: Vec<f64>,
}

impl PosteriorVector {
    /// Most probable class; ties go to the smallest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }
}

/// Bandwidth admitting exactly the `m` nearest distances (plus any ties
/// with the `m`-th) strictly inside.
pub fn bandwidth(sorted: &[f64], m: usize) -> f64 {
    let dm = sorted[m - 1];
    match sorted.get(m) {
        Some(&next) if next > dm => 0.5 * (dm + next),
        _ => dm + (1e-9 * dm).max(1e-12),
    }
}

/// Kernel posterior estimate for one realisation from its distances to the
/// training set (`dists[i]` belongs to `train[i]`).
pub fn knn_posterior(
    train: &[LabeledIndex],
    dists: &[f64],
    m: usize,
    kernel: SmoothingKernel,
    n_classes: usize,
) -> Result<PosteriorVector> {
    if train.len() != dists.len() {
        return Err(invalid(format!("{} training points but {} distances", train.len(), dists.len())));
    }
    if m < 1 || m > train.len() {
        return Err(invalid(format!("neighbour count {m} outside 1..={}", train.len())));
    }
    if dists.iter().any(|&d| !(d >= 0.0)) {
        return Err(invalid("distances must be nonnegative"));
    }
    if let Some(t) = train.iter().find(|t| t.label >= n_classes) {
        return Err(invalid(format!("label {} outside 0..{n_classes}", t.label)));
    }
    let mut sorted = dists.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = bandwidth(&sorted, m);

    let mut probs = vec![0.0; n_classes];
    let mut norm = 0.0;
    for (t, &d) in train.iter().zip(dists) {
        let w = kernel.weight(d / h);
        probs[t.label] += w;
        norm += w;
    }
    if norm <= 0.0 {
        return Err(invalid("empty neighbourhood"));
    }
    probs.iter_mut().for_each(|p| *p /= norm);
    Ok(PosteriorVector { probs })
}

fn loss(posterior: &PosteriorVector, truth: usize) -> f64 {
    posterior
        .probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let e = if c == truth { 1.0 } else { 0.0 } - p;
            e * e
        })
        .sum()
}

fn class_count(train: &[LabeledIndex]) -> usize {
    train.iter().map(|t| t.label + 1).max().unwrap_or(0)
}

/// Leave-one-out choice of the neighbour count for training point
/// `train[i0]`: the `m` in `m_range` minimising the squared posterior loss
/// with `i0` removed. Ties go to the smallest `m`.
pub fn select_m(
    train: &[LabeledIndex],
    matrix: &DistanceMatrix,
    i0: usize,
    m_range: impl IntoIterator<Item = usize>,
    kernel: SmoothingKernel,
) -> Result<usize> {
    let held = *train.get(i0).ok_or_else(|| invalid(format!("held-out position {i0} out of range")))?;
    let rest: Vec<LabeledIndex> = train.iter().enumerate().filter(|&(i, _)| i != i0).map(|(_, t)| *t).collect();
    let dists: Vec<f64> = rest.iter().map(|t| matrix.get(held.index, t.index)).collect();
    let k = class_count(train);

    let mut best: Option<(usize, f64)> = None;
    for m in m_range {
        let p = knn_posterior(&rest, &dists, m, kernel, k)?;
        let l = loss(&p, held.label);
        if best.is_none_or(|(_, b)| l < b - 1e-12) {
            best = Some((m, l));
        }
    }
    best.map(|(m, _)| m).ok_or_else(|| invalid("empty neighbour range"))
}

/// Result of [`knn_classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnnOutcome {
    pub labels: Vec<usize>,
    pub posteriors: Vec<PosteriorVector>,
    /// Neighbour count used for every test point.
    pub m: usize,
    /// Leave-one-out optimum for each training point.
    pub m_per_train: Vec<usize>,
}

/// Classifies test points given their distance rows to the training set.
/// The neighbour count is the (lower) median of the training points'
/// leave-one-out optima.
pub fn knn_classify(
    train: &[LabeledIndex],
    matrix: &DistanceMatrix,
    test_dists: &[Vec<f64>],
    kernel: SmoothingKernel,
) -> Result<KnnOutcome> {
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    let k = class_count(train);
    let m_per_train: Vec<usize> = if train.len() < 2 {
        vec![1; train.len()]
    } else {
        (0..train.len())
            .map(|i0| select_m(train, matrix, i0, 1..train.len(), kernel))
            .collect::<Result<_>>()?
    };
    let mut sorted = m_per_train.clone();
    sorted.sort_unstable();
    let m = sorted[(sorted.len() - 1) / 2];

    let posteriors: Vec<PosteriorVector> = test_dists
        .iter()
        .map(|d| knn_posterior(train, d, m, kernel, k))
        .collect::<Result<_>>()?;
    Ok(KnnOutcome { labels: posteriors.iter().map(PosteriorVector::argmax).collect(), posteriors, m, m_per_train })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoidsOutcome {
    /// Cluster of each point, in `0..k` by medoid position.
    pub assignment: Vec<usize>,
    pub medoids: Vec<usize>,
    pub iterations: usize,
    /// Sum of point-to-medoid distances after each assignment step.
    pub costs: Vec<f64>,
}

fn assign(matrix: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    (0..matrix.n())
        .map(|i| {
            let mut best = 0;
            for (c, &m) in medoids.iter().enumerate() {
                if matrix.get(i, m) < matrix.get(i, medoids[best]) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn cost(matrix: &DistanceMatrix, medoids: &[usize], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &c)| matrix.get(i, medoids[c])).sum()
}

/// k-medoids: seeded distinct initial medoids, nearest-medoid assignment,
/// in-cluster 1-median update, repeated until no point changes cluster.
pub fn k_medoids(matrix: &DistanceMatrix, k: usize, seed: u64, max_iter: usize) -> Result<KMedoidsOutcome> {
    let n = matrix.n();
    if k < 1 || k > n {
        return Err(invalid(format!("cluster count {k} outside 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = rand::seq::index::sample(&mut rng, n, k).into_vec();
    medoids.sort_unstable();
    let mut assignment = assign(matrix, &medoids);
    repair_empty(matrix, &mut medoids, &mut assignment);
    let mut costs = vec![cost(matrix, &medoids, &assignment)];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            let mut best = (*medoid, f64::INFINITY);
            for &cand in &members {
                let s: f64 = members.iter().map(|&j| matrix.get(cand, j)).sum();
                if s < best.1 {
                    best = (cand, s);
                }
            }
            *medoid = best.0;
        }
        let mut next = assign(matrix, &medoids);
        repair_empty(matrix, &mut medoids, &mut next);
        costs.push(cost(matrix, &medoids, &next));
        let settled = next == assignment;
        assignment = next;
        if settled {
            break;
        }
    }
    Ok(KMedoidsOutcome { assignment, medoids, iterations, costs })
}

/// Gives every empty cluster the point farthest from its current medoid,
/// taken from a cluster that keeps at least one member. Medoids of other
/// clusters are never taken.
fn repair_empty(matrix: &DistanceMatrix, medoids: &mut [usize], assignment: &mut [usize]) {
    let k = medoids.len();
    for c in 0..k {
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&a| sizes[a] += 1);
        if sizes[c] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for i in 0..assignment.len() {
            if sizes[assignment[i]] < 2 || medoids.contains(&i) {
                continue;
            }
            let d = matrix.get(i, medoids[assignment[i]]);
            if far.is_none_or(|(_, bd)| d > bd) {
                far = Some((i, d));
            }
        }
        match far {
            Some((i, _)) => {
                assignment[i] = c;
                medoids[c] = i;
            }
            None => {
                // only medoids are movable: send this cluster's own medoid home
                let m = medoids[c];
                if sizes[assignment[m]] > 1 {
                    assignment[m] = c;
                }
            }
        }
    }
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step
/// `s` gets id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub new_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Flat clustering with `k` clusters: the state `k` merges before the
    /// end. Clusters are numbered by their smallest member.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n;
        if k < 1 || k > n {
            return Err(invalid(format!("cluster count {k} outside 1..={n}")));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut leaf_of: Vec<usize> = (0..n).collect();
        for m in &self.merges[..n - k] {
            let (a, b) = (find(&mut parent, leaf_of[m.cluster_a]), find(&mut parent, leaf_of[m.cluster_b]));
            let root = a.min(b);
            parent[a.max(b)] = root;
            leaf_of.push(root);
        }
        let mut label_of_root = vec![usize::MAX; n];
        let mut next = 0;
        Ok((0..n)
            .map(|i| {
                let r = find(&mut parent, i);
                if label_of_root[r] == usize::MAX {
                    label_of_root[r] = next;
                    next += 1;
                }
                label_of_root[r]
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WardOptions {
    /// Use the plain average of the two distances when forming the very
    /// first cluster, instead of the Ward update.
    pub paper_literal_first_merge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardOutcome {
    pub dendrogram: Dendrogram,
    pub assignment: Vec<usize>,
    /// Number of updates whose radicand was negative and clamped to zero.
    pub clamped: usize,
}

/// Ward update of the distance from `A ∪ B` to `C` given sizes and distances.
pub fn ward_update(d_ac: f64, d_bc: f64, d_ab: f64, m_a: usize, m_b: usize, m_c: usize) -> (f64, bool) {
    let m = (m_a + m_b + m_c) as f64;
    let radicand = (m_a + m_c) as f64 / m * d_ac * d_ac + (m_b + m_c) as f64 / m * d_bc * d_bc
        - m_c as f64 / m * d_ab * d_ab;
    if radicand < 0.0 {
        (0.0, true)
    } else {
        (radicand.sqrt(), false)
    }
}

/// Full Ward agglomeration. At each step the closest pair merges; ties go to
/// the lexicographically smallest pair of clusters, each cluster identified
/// by its smallest member.
pub fn ward_dendrogram(matrix: &DistanceMatrix, options: &WardOptions) -> (Dendrogram, usize) {
    let n = matrix.n();
    // Slot i holds the cluster whose smallest member is i.
    let mut dist: Vec<f64> = matrix.values().to_vec();
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut clamped = 0;

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let d = dist[i * n + j];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (a, b, height) = best.expect("two active clusters");
        let literal = options.paper_literal_first_merge && step == 0;
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let (dac, dbc) = (dist[a * n + c], dist[b * n + c]);
            let v = if literal {
                0.5 * (dac + dbc)
            } else {
                let (v, neg) = ward_update(dac, dbc, height, size[a], size[b], size[c]);
                if neg {
                    clamped += 1;
                }
                v
            };
            dist[a * n + c] = v;
            dist[c * n + a] = v;
        }
        merges.push(Merge { cluster_a: id[a], cluster_b: id[b], height, new_size: size[a] + size[b] });
        size[a] += size[b];
        id[a] = n + step;
        active[b] = false;
    }
    if clamped > 0 {
        log::warn!("ward: {clamped} negative radicands clamped to zero");
    }
    (Dendrogram { n, merges }, clamped)
}

pub fn ward_cluster(matrix: &DistanceMatrix, k: usize, options: &WardOptions) -> Result<WardOutcome> {
    let n = matrix.n();
    if k < 1 || k > n {
        return Err(invalid(format!("cluster count {k} outside 1..={n}")));
    }
    let (dendrogram, clamped) = ward_dendrogram(matrix, options);
    let assignment = dendrogram.cut(k)?;
    Ok(WardOutcome { dendrogram, assignment, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Fixed,
    BestPermutation,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Relabeling `perm` of predicted labels (`p ↦ perm[p]`) with the fewest
/// mismatches against `truth`; ties go to the first permutation in
/// generation order. At most 6 labels.
pub fn best_permutation(pred: &[usize], truth: &[usize]) -> Result<Vec<usize>> {
    if pred.len() != truth.len() {
        return Err(invalid(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    let k = pred.iter().chain(truth).max().map_or(0, |&m| m + 1);
    if k > 6 {
        return Err(invalid(format!("best-permutation alignment supports at most 6 labels, got {k}")));
    }
    let mismatches = |perm: &[usize]| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] != t).count();
    let mut best: Option<(Vec<usize>, usize)> = None;
    for perm in permutations(k) {
        let m = mismatches(&perm);
        if best.as_ref().is_none_or(|(_, b)| m < *b) {
            best = Some((perm, m));
        }
    }
    Ok(best.map(|(p, _)| p).unwrap_or_default())
}

/// Fraction of mismatched labels, optionally minimised over relabelings of
/// `pred` (at most 6 labels).
pub fn misclassification(pred: &[usize], truth: &[usize], align: Alignment) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(invalid(format!("{} predictions for {} truths", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let perm = match align {
        Alignment::Fixed => (0..=pred.iter().max().copied().unwrap_or(0)).collect(),
        Alignment::BestPermutation => best_permutation(pred, truth)?,
    };
    let wrong = pred.iter().zip(truth).filter(|(&p, &t)| perm[p] != t).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Confusion counts `[truth][pred]`.
pub fn confusion(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}
