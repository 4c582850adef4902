//! Role discovery: kmeans++ clustering, elbow analysis, and the robustness
//! battery (silhouette, Ward agglomerative cross-check, Jaccard matching, VIF).
//!
//! All distances are Euclidean. Inputs are row-major point sets
//! (`&[Vec<f64>]`), normally standardized feature vectors.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Standardizer;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} vectors cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(dim)
}

/// Cluster labels for a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Sum of squared distances to assigned centroids (0 when not computed).
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Attaches ids to labels, e.g. account ids in input order.
    pub fn keyed<K: Ord + Clone>(&self, ids: &[K]) -> BTreeMap<K, usize> {
        ids.iter()
            .cloned()
            .zip(self.labels.iter().copied())
            .collect()
    }
}

/// Fitted clustering: centroids in standardized space plus the statistics
/// that produced that space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
    /// Optional human-assigned names keyed by cluster index.
    #[serde(default)]
    pub labels: BTreeMap<usize, String>,
}

impl RoleModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Checks `k >= 2`, consistent shapes and pairwise-distinct centroids.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.centroids.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "role model needs k >= 2 matching centroids (k={}, centroids={})",
                self.k,
                self.centroids.len()
            )));
        }
        let dim = self.dim();
        for c in &self.centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        for i in 0..self.k {
            for j in i + 1..self.k {
                if self.centroids[i] == self.centroids[j] {
                    return Err(Error::InvalidInput(format!(
                        "centroids {i} and {j} coincide"
                    )));
                }
            }
        }
        if let Some(s) = &self.standardizer {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn role_name(&self, cluster: usize) -> String {
        self.labels
            .get(&cluster)
            .cloned()
            .unwrap_or_else(|| format!("role_{cluster}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when no centroid moves farther than this.
    pub tol: f64,
    /// Independent kmeans++ restarts; the lowest inertia wins.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 300,
            tol: 1e-6,
            n_init: 1,
        }
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init.max(1);
        self
    }
}

/// Details of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydTrace {
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

/// kmeans++ seeding: first centre uniform, the rest by D² sampling.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd iterations from the given centroids.
///
/// An empty cluster takes the point farthest from its current centroid among
/// clusters with more than one member. Returns final centroids, labels of
/// the nearest final centroid, and the trace.
pub fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iters: usize,
    tol: f64,
) -> (Vec<Vec<f64>>, Vec<usize>, LloydTrace) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    let mut dists = vec![0.0; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            let (l, d) = nearest(p, &centroids);
            labels[i] = l;
            dists[i] = d;
        }
        repair_empty(&mut labels, &mut dists, k);
        history.push(dists.iter().sum());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < tol {
            converged = true;
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, &centroids).0;
    }
    (
        centroids,
        labels,
        LloydTrace {
            iterations,
            converged,
            inertia_history: history,
        },
    )
}

fn repair_empty(labels: &mut [usize], dists: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        if let Some(i) = donor {
            counts[labels[i]] -= 1;
            counts[empty] += 1;
            labels[i] = empty;
            dists[i] = 0.0;
        }
    }
}

fn inertia_of(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// Relabels clusters by descending size (ties by old index).
fn canonicalize(centroids: Vec<Vec<f64>>, labels: Vec<usize>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut remap = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let centroids = order.iter().map(|&o| centroids[o].clone()).collect();
    let labels = labels.into_iter().map(|l| remap[l]).collect();
    (centroids, labels)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// kmeans++ seeded Lloyd clustering; deterministic for a given config.
pub fn kmeans_fit(
    points: &[Vec<f64>],
    config: &KMeansConfig,
) -> Result<(RoleModel, ClusterAssignment)> {
    kmeans_fit_traced(points, config).map(|(m, a, _)| (m, a))
}

/// Centroids, labels, trace and inertia of one restart.
type Candidate = (Vec<Vec<f64>>, Vec<usize>, LloydTrace, f64);

pub fn kmeans_fit_traced(
    points: &[Vec<f64>],
    config: &KMeansConfig,
) -> Result<(RoleModel, ClusterAssignment, LloydTrace)> {
    check_points(points, config.k)?;
    let mut best: Option<Candidate> = None;
    for restart in 0..config.n_init.max(1) {
        let mut rng = restart_rng(config.seed, restart);
        let init = kmeans_plus_plus(points, config.k, &mut rng);
        let (c, l, trace) = lloyd(points, init, config.max_iters, config.tol);
        let inertia = inertia_of(points, &c, &l);
        if best.as_ref().is_none_or(|b| inertia < b.3) {
            best = Some((c, l, trace, inertia));
        }
    }
    let (centroids, labels, trace, inertia) = best.expect("at least one restart");
    let (centroids, labels) = canonicalize(centroids, labels);
    Ok((
        RoleModel {
            k: config.k,
            seed: config.seed,
            centroids,
            standardizer: None,
            labels: BTreeMap::new(),
        },
        ClusterAssignment {
            labels,
            k: config.k,
            inertia,
        },
        trace,
    ))
}

/// Nearest-centroid assignment; ties go to the lowest centroid index.
pub fn assign_to_model(points: &[Vec<f64>], model: &RoleModel) -> Result<ClusterAssignment> {
    let dim = model.dim();
    let mut labels = Vec::with_capacity(points.len());
    let mut inertia = 0.0;
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        let (l, d) = nearest(p, &model.centroids);
        labels.push(l);
        inertia += d;
    }
    Ok(ClusterAssignment {
        labels,
        k: model.k,
        inertia,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    /// Mean squared distance to the assigned centroid.
    pub distortion: f64,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub points: Vec<ElbowPoint>,
    /// Argmax of the discrete second difference of distortion. Advisory.
    pub suggested_k: usize,
}

/// Fits every k in `k_min..=k_max` and suggests an elbow.
///
/// Each k keeps the best of `n_init` kmeans++ restarts and a warm start from
/// the k-1 solution plus its worst-fit point, so inertia never increases
/// with k.
pub fn elbow_scan(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    n_init: usize,
) -> Result<ElbowCurve> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidInput(format!(
            "bad k range {k_min}..={k_max}"
        )));
    }
    check_points(points, k_max)?;
    let n = points.len() as f64;
    let mut out = Vec::new();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for k in k_min..=k_max {
        let config = KMeansConfig::new(k, seed).with_n_init(n_init);
        let (model, assignment) = kmeans_fit(points, &config)?;
        let mut best_centroids = model.centroids;
        let mut best_inertia = assignment.inertia;
        if let Some(prev) = prev.take() {
            let (worst, _) = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, nearest(p, &prev).1))
                .fold(
                    (0, -1.0),
                    |acc, (i, d)| if d > acc.1 { (i, d) } else { acc },
                );
            let mut init = prev;
            init.push(points[worst].clone());
            let (c, l, _) = lloyd(points, init, config.max_iters, config.tol);
            let inertia = inertia_of(points, &c, &l);
            if inertia < best_inertia {
                best_inertia = inertia;
                best_centroids = c;
            }
        }
        out.push(ElbowPoint {
            k,
            distortion: best_inertia / n,
            inertia: best_inertia,
        });
        prev = Some(best_centroids);
    }
    let suggested_k = suggest_elbow(&out);
    Ok(ElbowCurve {
        points: out,
        suggested_k,
    })
}

fn suggest_elbow(points: &[ElbowPoint]) -> usize {
    if points.len() < 3 {
        return points.first().map_or(0, |p| p.k);
    }
    let mut best = (points[1].k, f64::NEG_INFINITY);
    for w in points.windows(3) {
        let d2 = w[0].distortion - 2.0 * w[1].distortion + w[2].distortion;
        if d2 > best.1 {
            best = (w[1].k, d2);
        }
    }
    best.0
}

/// Mean silhouette coefficient. Points in singleton clusters score 0, as do
/// points with `a == b == 0`.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() < 2 || points.len() != labels.len() {
        return Err(Error::InsufficientData(
            "silhouette needs at least two labelled points".into(),
        ));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InsufficientData(
            "silhouette needs at least two non-empty clusters".into(),
        ));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += sq_dist(p, q).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

/// Condensed upper-triangular distance storage.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// One merge of the Ward dendrogram: slots `a < b` joined at squared-distance
/// height `height`; the merged cluster lives on in slot `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Ward-linkage dendrogram via the nearest-neighbour chain, with
/// Lance–Williams updates on squared Euclidean distances. Merges are
/// returned in non-decreasing height order.
pub fn ward_dendrogram(points: &[Vec<f64>]) -> Vec<Merge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut dist = Condensed {
        n,
        d: vec![0.0; n * (n - 1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            dist.set(i, j, sq_dist(&points[i], &points[j]));
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::new();

    while merges.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("active cluster"));
        }
        let a = *chain.last().expect("non-empty chain");
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);
        let mut best = prev.map(|p| (p, dist.get(a, p)));
        for c in 0..n {
            if c == a || !active[c] {
                continue;
            }
            let d = dist.get(a, c);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        let (b, height) = best.expect("at least two active clusters");
        if Some(b) == prev {
            chain.pop();
            chain.pop();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (nl, nh) = (size[lo] as f64, size[hi] as f64);
            for c in 0..n {
                if !active[c] || c == lo || c == hi {
                    continue;
                }
                let nc = size[c] as f64;
                let updated = ((nl + nc) * dist.get(c, lo) + (nh + nc) * dist.get(c, hi)
                    - nc * height)
                    / (nl + nh + nc);
                dist.set(c, lo, updated);
            }
            size[lo] += size[hi];
            active[hi] = false;
            merges.push(Merge {
                a: lo,
                b: hi,
                height,
            });
        } else {
            chain.push(b);
        }
    }
    // stable: a child merge always precedes its parent at equal height
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Ward agglomerative clustering cut at `k` clusters. Labels are ordered by
/// descending cluster size, ties by smallest member index.
pub fn agglomerative_fit(points: &[Vec<f64>], k: usize) -> Result<ClusterAssignment> {
    check_points(points, k)?;
    let n = points.len();
    let merges = ward_dendrogram(points);
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n - k) {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &r) in roots.iter().enumerate() {
        groups.entry(r).or_default().push(i);
    }
    let mut order: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut labels = vec![0; n];
    let mut centroids = Vec::with_capacity(k);
    for (label, (_, members)) in order.iter().enumerate() {
        let dim = points[0].len();
        let mut c = vec![0.0; dim];
        for &m in members {
            labels[m] = label;
            for (s, v) in c.iter_mut().zip(&points[m]) {
                *s += v;
            }
        }
        c.iter_mut().for_each(|s| *s /= members.len() as f64);
        centroids.push(c);
    }
    let inertia = inertia_of(points, &centroids, &labels);
    Ok(ClusterAssignment { labels, k, inertia })
}

/// Minimum-cost assignment on a square cost matrix (Hungarian method).
/// Returns `assign[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Result of matching the clusters of two assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardMatch {
    /// Jaccard score per cluster of the first assignment (0 if unmatched).
    pub scores: BTreeMap<usize, f64>,
    /// Matched cluster of the second assignment, per cluster of the first.
    pub matched: BTreeMap<usize, usize>,
}

impl JaccardMatch {
    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            0.0
        } else {
            self.scores.values().sum::<f64>() / self.scores.len() as f64
        }
    }
}

/// One-to-one cluster matching maximizing total Jaccard similarity between
/// two labelings of the same account set.
pub fn jaccard_overlap<K: Ord>(
    a: &BTreeMap<K, usize>,
    b: &BTreeMap<K, usize>,
) -> Result<JaccardMatch> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::InvalidInput(
            "assignments cover different account sets".into(),
        ));
    }
    let la: Vec<usize> = a.values().copied().collect();
    let lb: Vec<usize> = b.values().copied().collect();
    Ok(jaccard_overlap_labels(&la, &lb))
}

/// [`jaccard_overlap`] for two label vectors over the same positions.
pub fn jaccard_overlap_labels(a: &[usize], b: &[usize]) -> JaccardMatch {
    assert_eq!(a.len(), b.len(), "label vectors must align");
    let ka: BTreeSet<usize> = a.iter().copied().collect();
    let kb: BTreeSet<usize> = b.iter().copied().collect();
    let ka: Vec<usize> = ka.into_iter().collect();
    let kb: Vec<usize> = kb.into_iter().collect();
    let n = ka.len().max(kb.len());
    let mut inter = vec![vec![0usize; kb.len()]; ka.len()];
    let mut size_a = vec![0usize; ka.len()];
    let mut size_b = vec![0usize; kb.len()];
    for (&x, &y) in a.iter().zip(b) {
        let i = ka.binary_search(&x).expect("label present");
        let j = kb.binary_search(&y).expect("label present");
        inter[i][j] += 1;
        size_a[i] += 1;
        size_b[j] += 1;
    }
    let jac = |i: usize, j: usize| -> f64 {
        if i >= ka.len() || j >= kb.len() {
            return 0.0;
        }
        let union = size_a[i] + size_b[j] - inter[i][j];
        inter[i][j] as f64 / union as f64
    };
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -jac(i, j)).collect())
        .collect();
    let assign = hungarian(&cost);
    let mut scores = BTreeMap::new();
    let mut matched = BTreeMap::new();
    for (i, &cluster) in ka.iter().enumerate() {
        let j = assign[i];
        scores.insert(cluster, jac(i, j));
        if j < kb.len() {
            matched.insert(cluster, kb[j]);
        }
    }
    JaccardMatch { scores, matched }
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors must align");
    let n = a.len();
    let comb2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ra: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sa: f64 = ra.values().map(|&c| comb2(c)).sum();
    let sb: f64 = rb.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Variance inflation factor of every column: regress it on all other
/// columns with an intercept and report `1 / (1 - R²)`. Perfect collinearity
/// yields `f64::INFINITY`.
pub fn vif(rows: &[Vec<f64>], names: &[&str]) -> Result<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    if dim < 2 {
        return Err(Error::InvalidInput("VIF needs at least two columns".into()));
    }
    if rows.len() < dim + 2 {
        return Err(Error::InsufficientData(format!(
            "VIF over {dim} columns needs at least {} rows, got {}",
            dim + 2,
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let n = rows.len();
    let name = |j: usize| {
        names
            .get(j)
            .map_or_else(|| format!("column {j}"), |s| s.to_string())
    };
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let y = DVector::from_iterator(n, rows.iter().map(|r| r[j]));
        let my = y.mean();
        let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
        if sst <= f64::EPSILON * my.abs().max(1.0) * n as f64 {
            return Err(Error::ConstantDimension(name(j)));
        }
        let x = DMatrix::from_fn(n, dim, |i, c| {
            if c == 0 {
                1.0
            } else {
                let col = if c <= j { c - 1 } else { c };
                rows[i][col]
            }
        });
        let svd = x.clone().svd(true, true);
        let beta = svd.solve(&y, 1e-12).map_err(|e| Error::Numerical {
            iteration: 0,
            message: format!("VIF regression for {}: {e}", name(j)),
        })?;
        let resid = &y - &x * beta;
        let ssr = resid.norm_squared();
        let one_minus_r2 = (ssr / sst).min(1.0);
        out.push(if one_minus_r2 <= 1e-10 {
            f64::INFINITY
        } else {
            1.0 / one_minus_r2
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![100.0, 100.0],
            vec![100.0, 101.0],
        ]
    }

    #[test]
    fn k1_centroid_is_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let (model, a) = kmeans_fit(&pts, &KMeansConfig::new(1, 7)).unwrap();
        assert!((model.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((model.centroids[0][1] - 3.0).abs() < 1e-12);
        assert!(a.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn separated_pairs_split() {
        for seed in 0..10 {
            let (_, a) = kmeans_fit(&pairs(), &KMeansConfig::new(2, seed)).unwrap();
            assert_eq!(a.labels[0], a.labels[1]);
            assert_eq!(a.labels[2], a.labels[3]);
            assert_ne!(a.labels[0], a.labels[2]);
        }
        let h = agglomerative_fit(&pairs(), 2).unwrap();
        assert_eq!(h.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans_fit(&pairs(), &KMeansConfig::new(5, 1)).is_err());
        assert!(agglomerative_fit(&pairs(), 5).is_err());
    }

    #[test]
    fn agglomerative_singletons() {
        let a = agglomerative_fit(&pairs(), 4).unwrap();
        let mut l = a.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
        assert_eq!(a.inertia, 0.0);
    }

    #[test]
    fn canonical_order_is_by_size() {
        let pts = vec![vec![10.0], vec![0.0], vec![0.1], vec![0.2]];
        let (_, a) = kmeans_fit(&pts, &KMeansConfig::new(2, 3).with_n_init(4)).unwrap();
        assert_eq!(a.labels, vec![1, 0, 0, 0]);
    }

    #[test]
    fn duplicate_points_seed_without_panic() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let (model, a) = kmeans_fit(&pts, &KMeansConfig::new(3, 0)).unwrap();
        assert_eq!(model.centroids.len(), 3);
        assert_eq!(a.inertia, 0.0);
    }

    #[test]
    fn assign_ties_and_dims() {
        let model = RoleModel {
            k: 4,
            seed: 0,
            centroids: vec![
                vec![-1.0, 0.0],
                vec![0.0, 5.0],
                vec![3.0, 3.0],
                vec![1.0, 0.0],
            ],
            standardizer: None,
            labels: BTreeMap::new(),
        };
        let a = assign_to_model(&[vec![3.0, 3.0], vec![0.0, 0.0]], &model).unwrap();
        assert_eq!(a.labels, vec![2, 0]);
        assert!(assign_to_model(&[vec![1.0]], &model).is_err());
    }

    #[test]
    fn model_validation() {
        let mut m = RoleModel {
            k: 2,
            seed: 0,
            centroids: vec![vec![0.0], vec![1.0]],
            standardizer: None,
            labels: BTreeMap::new(),
        };
        assert!(m.validate().is_ok());
        m.centroids[1] = vec![0.0];
        assert!(m.validate().is_err());
        m.k = 1;
        m.centroids.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn silhouette_identical_points_is_zero() {
        let pts = vec![vec![1.0, 1.0]; 4];
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        assert_eq!(s, 0.0);
        assert!(silhouette_score(&pts[..1], &[0]).is_err());
        assert!(silhouette_score(&pts, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn jaccard_identity_and_swap() {
        let a = [0, 0, 1, 1];
        let m = jaccard_overlap_labels(&a, &a);
        assert!(m.scores.values().all(|&s| s == 1.0));
        // disjoint halves swapped: every pair shares one of three accounts
        let b = [0, 1, 0, 1];
        let m = jaccard_overlap_labels(&a, &b);
        for s in m.scores.values() {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jaccard_follows_relabeling() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [2, 2, 0, 0, 1, 1];
        let m = jaccard_overlap_labels(&a, &b);
        assert_eq!(m.matched[&0], 2);
        assert_eq!(m.matched[&1], 0);
        assert_eq!(m.mean(), 1.0);
    }

    #[test]
    fn jaccard_keyed_requires_same_accounts() {
        let a: BTreeMap<&str, usize> = [("x", 0), ("y", 1)].into_iter().collect();
        let b: BTreeMap<&str, usize> = [("x", 0), ("z", 1)].into_iter().collect();
        assert!(jaccard_overlap(&a, &b).is_err());
        assert!(jaccard_overlap(&a, &a).is_ok());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(r < 0.0);
    }

    #[test]
    fn vif_rejects_constant_column() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, 1.0, (i * i) as f64])
            .collect();
        match vif(&rows, &["a", "b", "c"]) {
            Err(Error::ConstantDimension(name)) => assert_eq!(name, "b"),
            other => panic!("expected constant-dimension error, got {other:?}"),
        }
    }

    #[test]
    fn vif_duplicate_is_infinite() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                vec![x, x, (i as f64 * 1.3).cos()]
            })
            .collect();
        let v = vif(&rows, &[]).unwrap();
        assert!(v[0].is_infinite() && v[1].is_infinite());
        assert!(v[2].is_finite() && v[2] >= 1.0);
    }
}
