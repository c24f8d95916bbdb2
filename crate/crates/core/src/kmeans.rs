//! Deterministic k-means: k-means++ seeding, Lloyd iterations and a
//! brute-force partition oracle for tiny instances.
//!
//! Work is split into fixed-size chunks of points regardless of how many
//! rayon workers are available, and per-chunk partial results are merged in
//! chunk order. Results are therefore bit-identical for any thread count.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{AsgError, Result};

/// Points per work unit in parallel passes.
const CHUNK: usize = 1024;

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Borrowed row-major `n × d` point collection.
#[derive(Debug, Clone, Copy)]
pub struct PointSet<'a> {
    data: &'a [f32],
    d: usize,
}

impl<'a> PointSet<'a> {
    pub fn new(data: &'a [f32], d: usize) -> Result<Self> {
        if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(AsgError::Shape(format!(
                "point buffer of {} values is not a non-empty multiple of d={d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AsgError::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self { data, d })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &'a [f32] {
        self.data
    }
}

/// `k × d` centroid table.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    k: usize,
    d: usize,
    data: Vec<f32>,
}

impl Centroids {
    pub fn new(k: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if k == 0 || d == 0 || data.len() != k * d {
            return Err(AsgError::Shape(format!(
                "centroid table {k}x{d} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { k, d, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Nearest-centroid labels and the resulting sum of squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignments {
    pub labels: Vec<usize>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative objective decrease of an iteration drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(AsgError::InvalidArgument("k must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(AsgError::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(AsgError::InvalidArgument(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Result of k-means++ seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct Seeding {
    pub centroids: Centroids,
    /// Set when fewer than `k` distinct points existed and some centroids
    /// had to be duplicated by uniform choice.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansRun {
    pub centroids: Centroids,
    pub assignments: Assignments,
    /// Objective after each Lloyd iteration.
    pub trace: Vec<f64>,
    pub degenerate: bool,
}

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let diff = x as f64 - y as f64;
            diff * diff
        })
        .sum()
}

#[inline]
fn nearest(p: &[f32], centroids: &Centroids) -> (usize, f64) {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (j, c) in centroids.data.chunks_exact(centroids.d).enumerate() {
        let dist = squared_distance(p, c);
        if dist < best_dist {
            best = j;
            best_dist = dist;
        }
    }
    (best, best_dist)
}

fn check_dims(points: &PointSet<'_>, centroids: &Centroids) -> Result<()> {
    if points.dim() != centroids.dim() {
        return Err(AsgError::DimensionMismatch(format!(
            "points have d={}, centroids have d={}",
            points.dim(),
            centroids.dim()
        )));
    }
    Ok(())
}

/// Labels and per-point squared distances, objective summed in chunk order.
fn assign_with_distances(points: &PointSet<'_>, centroids: &Centroids) -> (Assignments, Vec<f64>) {
    let d = points.dim();
    let parts: Vec<(Vec<usize>, Vec<f64>, f64)> = points
        .data()
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut labels = Vec::with_capacity(chunk.len() / d);
            let mut dists = Vec::with_capacity(chunk.len() / d);
            let mut sum = 0.0;
            for p in chunk.chunks_exact(d) {
                let (j, dist) = nearest(p, centroids);
                labels.push(j);
                dists.push(dist);
                sum += dist;
            }
            (labels, dists, sum)
        })
        .collect();

    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    let mut objective = 0.0;
    for (l, ds, s) in parts {
        labels.extend(l);
        dists.extend(ds);
        objective += s;
    }
    (Assignments { labels, objective }, dists)
}

/// Maps every point to its nearest centroid (ties go to the lowest index).
pub fn assign(points: &PointSet<'_>, centroids: &Centroids) -> Result<Assignments> {
    check_dims(points, centroids)?;
    Ok(assign_with_distances(points, centroids).0)
}

/// k-means++ seeding driven by a ChaCha8 stream seeded from `seed`.
pub fn kmeans_pp_init(points: &PointSet<'_>, k: usize, seed: u64) -> Result<Seeding> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(AsgError::InvalidArgument(format!(
            "k-means++ needs 1 <= k <= n (k={k}, n={n})"
        )));
    }
    let d = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k * d);
    let mut degenerate = false;

    let first = rng.random_range(0..n);
    chosen.extend_from_slice(points.point(first));
    let mut min_dist: Vec<f64> = points
        .data()
        .par_chunks_exact(d)
        .map(|p| squared_distance(p, points.point(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = min_dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &w) in min_dist.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    last_positive = i;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            degenerate = true;
            rng.random_range(0..n)
        };
        let c = points.point(pick);
        chosen.extend_from_slice(c);
        min_dist
            .par_chunks_mut(CHUNK)
            .zip(points.data().par_chunks(CHUNK * d))
            .for_each(|(md, chunk)| {
                for (m, p) in md.iter_mut().zip(chunk.chunks_exact(d)) {
                    let dist = squared_distance(p, c);
                    if dist < *m {
                        *m = dist;
                    }
                }
            });
    }

    if degenerate {
        warn!("k-means++: fewer than k={k} distinct points among n={n}; duplicated centroids");
    }
    Ok(Seeding {
        centroids: Centroids::new(k, d, chosen)?,
        degenerate,
    })
}

/// Per-cluster coordinate sums and counts, merged in chunk order.
fn accumulate(points: &PointSet<'_>, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let d = points.dim();
    let parts: Vec<(Vec<f64>, Vec<usize>)> = points
        .data()
        .par_chunks(CHUNK * d)
        .zip(labels.par_chunks(CHUNK))
        .map(|(chunk, labs)| {
            let mut sums = vec![0f64; k * d];
            let mut counts = vec![0usize; k];
            for (p, &j) in chunk.chunks_exact(d).zip(labs) {
                counts[j] += 1;
                for (s, &x) in sums[j * d..(j + 1) * d].iter_mut().zip(p) {
                    *s += x as f64;
                }
            }
            (sums, counts)
        })
        .collect();

    let mut sums = vec![0f64; k * d];
    let mut counts = vec![0usize; k];
    for (s, c) in parts {
        for (acc, v) in sums.iter_mut().zip(s) {
            *acc += v;
        }
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
    }
    (sums, counts)
}

/// Lloyd iterations from `init`. The cluster count comes from `init`; only
/// `max_iters` and `tol` are read from `params`.
///
/// Each iteration recomputes centroids as cluster means, re-seeds empty
/// clusters at the points farthest from their assigned centroid, then
/// reassigns. Iteration stops when the labels stop changing, the objective
/// reaches zero, the relative decrease falls below `tol`, or `max_iters` is
/// reached.
pub fn lloyd(points: &PointSet<'_>, init: Centroids, params: &KmeansParams) -> Result<KmeansRun> {
    check_dims(points, &init)?;
    params.validate()?;
    let (k, d) = (init.k(), init.dim());
    let mut centroids = init;
    let (mut assignments, mut dists) = assign_with_distances(points, &centroids);
    let mut trace = Vec::new();

    for _ in 0..params.max_iters {
        let (sums, counts) = accumulate(points, &assignments.labels, k);
        for j in 0..k {
            if counts[j] > 0 {
                let inv = counts[j] as f64;
                for (c, s) in centroids.data[j * d..(j + 1) * d]
                    .iter_mut()
                    .zip(&sums[j * d..(j + 1) * d])
                {
                    *c = (s / inv) as f32;
                }
            }
        }
        for j in (0..k).filter(|&j| counts[j] == 0) {
            // Lowest index among maxima; taken points are excluded.
            let mut far = 0;
            let mut far_dist = f64::NEG_INFINITY;
            for (i, &dist) in dists.iter().enumerate() {
                if dist > far_dist {
                    far = i;
                    far_dist = dist;
                }
            }
            dists[far] = f64::NEG_INFINITY;
            centroids.data[j * d..(j + 1) * d].copy_from_slice(points.point(far));
        }

        let prev = assignments.objective;
        let (next, next_dists) = assign_with_distances(points, &centroids);
        let unchanged = next.labels == assignments.labels;
        assignments = next;
        dists = next_dists;
        trace.push(assignments.objective);

        let obj = assignments.objective;
        if unchanged || obj == 0.0 || prev <= 0.0 || (prev - obj) / prev < params.tol {
            break;
        }
    }

    Ok(KmeansRun {
        centroids,
        assignments,
        trace,
        degenerate: false,
    })
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(points: &PointSet<'_>, params: &KmeansParams) -> Result<KmeansRun> {
    params.validate()?;
    let seeding = kmeans_pp_init(points, params.k, params.seed)?;
    let mut run = lloyd(points, seeding.centroids, params)?;
    run.degenerate = seeding.degenerate;
    Ok(run)
}

pub const EXACT_MAX_POINTS: usize = 12;
pub const EXACT_MAX_K: usize = 4;

/// Globally optimal clustering by enumerating every partition of the points
/// into at most `k` non-empty groups. Only feasible for tiny inputs.
///
/// Centroids are listed in order of each group's first member. The returned
/// objective is evaluated against the exact (f64) group means.
pub fn exact_kmeans_small(points: &PointSet<'_>, k: usize) -> Result<(Centroids, Assignments)> {
    let n = points.len();
    if n > EXACT_MAX_POINTS || k == 0 || k > EXACT_MAX_K {
        return Err(AsgError::InvalidArgument(format!(
            "exact k-means supports n <= {EXACT_MAX_POINTS}, 1 <= k <= {EXACT_MAX_K} (n={n}, k={k})"
        )));
    }
    let d = points.dim();

    let cost = |labels: &[usize], groups: usize| -> (f64, Vec<f64>) {
        let mut sums = vec![0f64; groups * d];
        let mut counts = vec![0usize; groups];
        for (i, &g) in labels.iter().enumerate() {
            counts[g] += 1;
            for (s, &x) in sums[g * d..(g + 1) * d].iter_mut().zip(points.point(i)) {
                *s += x as f64;
            }
        }
        for g in 0..groups {
            for s in &mut sums[g * d..(g + 1) * d] {
                *s /= counts[g] as f64;
            }
        }
        let total = labels
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                points
                    .point(i)
                    .iter()
                    .zip(&sums[g * d..(g + 1) * d])
                    .map(|(&x, &m)| (x as f64 - m).powi(2))
                    .sum::<f64>()
            })
            .sum();
        (total, sums)
    };

    // Restricted growth strings: labels[0] = 0, labels[i] <= 1 + max(labels[..i]).
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    loop {
        let groups = labels.iter().max().unwrap() + 1;
        let (obj, _) = cost(&labels, groups);
        if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
            best = Some((obj, labels.clone(), groups));
        }
        // Advance to the next restricted growth string with at most k blocks.
        let mut i = n;
        loop {
            if i <= 1 {
                let (obj, labels, groups) = best.unwrap();
                let (_, means) = cost(&labels, groups);
                let centroids =
                    Centroids::new(groups, d, means.into_iter().map(|m| m as f32).collect())?;
                return Ok((
                    centroids,
                    Assignments {
                        labels,
                        objective: obj,
                    },
                ));
            }
            i -= 1;
            let prefix_max = labels[..i].iter().copied().max().unwrap();
            if labels[i] <= prefix_max && labels[i] + 1 < k {
                labels[i] += 1;
                for l in &mut labels[i + 1..] {
                    *l = 0;
                }
                break;
            }
        }
    }
}
