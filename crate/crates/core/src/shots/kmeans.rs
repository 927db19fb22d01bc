//! Lloyd's k-means with seeded greedy k-means++ initialization.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, ShotError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances for the final assignment.
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the initial centroids.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (j, d) = nearest(p, centroids);
        labels.push(j);
        dists.push(d);
    }
    let inertia = dists.iter().sum();
    (labels, dists, inertia)
}

/// Greedy k-means++: each new center is the best of several D²-weighted draws.
fn init_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = vec![points[rng.gen_range(0..n)].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let weights = WeightedIndex::new(&closest).expect("positive total weight");
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let candidate = weights.sample(rng);
                let potential: f64 = points
                    .iter()
                    .zip(&closest)
                    .map(|(p, d)| d.min(squared_distance(p, &points[candidate])))
                    .sum();
                if best.is_none_or(|(_, b)| potential < b) {
                    best = Some((candidate, potential));
                }
            }
            best.expect("at least one trial").0
        } else {
            // Every point coincides with a chosen center.
            rng.gen_range(0..n)
        };
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &points[pick]));
        }
        centers.push(points[pick].clone());
    }
    centers
}

/// Means of assigned points; an empty cluster is re-seeded with the point
/// farthest from its own centroid.
fn update(points: &[Vec<f64>], labels: &[usize], dists: &[f64], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = previous.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.iter().zip(labels) {
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut used = vec![false; points.len()];
    let mut centroids = Vec::with_capacity(k);
    for j in 0..k {
        if counts[j] > 0 {
            let c = counts[j] as f64;
            centroids.push(sums[j].iter().map(|s| s / c).collect());
        } else {
            let far = (0..points.len())
                .filter(|&i| !used[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            used[far] = true;
            centroids.push(points[far].clone());
        }
    }
    centroids
}

pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansFit> {
    let n = points.len();
    if n == 0 {
        return Err(ShotError::EmptyInput);
    }
    if params.k == 0 || params.k > n {
        return Err(ShotError::InvalidK { k: params.k, n });
    }
    if params.max_iter == 0 {
        return Err(ShotError::InvalidParams("max_iter must be at least 1".into()));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(ShotError::InvalidParams("tol must be >= 0".into()));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(ShotError::RaggedVectors);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = init_centroids(points, params.k, &mut rng);
    let (mut labels, mut dists, mut inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        iterations += 1;
        let next = update(points, &labels, &dists, &centroids);
        let shift = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let (new_labels, new_dists, new_inertia) = assign(points, &centroids);
        history.push(new_inertia);
        let stable = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        inertia = new_inertia;
        if shift < params.tol || stable {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignments: labels,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    })
}
