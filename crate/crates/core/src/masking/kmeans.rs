use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MaskingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k * dim` row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of times an empty cluster was re-seeded.
    pub repairs: usize,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(p: &[f64], centroids: &[f64], dim: usize) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.chunks_exact(dim).enumerate() {
        let d = dist2(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn objective(points: &[f64], dim: usize, centroids: &[f64], assign: &[usize]) -> f64 {
    points
        .chunks_exact(dim)
        .zip(assign)
        .map(|(p, &a)| dist2(p, &centroids[a * dim..(a + 1) * dim]))
        .sum()
}

/// Moves the point farthest from its centroid (among clusters with at
/// least two members) into each empty cluster. Returns the repair count.
fn repair(points: &[f64], dim: usize, k: usize, assign: &mut [usize], centroids: &mut [f64]) -> usize {
    let mut repairs = 0;
    loop {
        let mut sizes = vec![0usize; k];
        assign.iter().for_each(|&a| sizes[a] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repairs;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let a = assign[i];
            if sizes[a] > 1 {
                let d = dist2(p, &centroids[a * dim..(a + 1) * dim]);
                if d > far_d {
                    (far, far_d) = (Some(i), d);
                }
            }
        }
        let far = far.expect("n >= k leaves a cluster with two points");
        assign[far] = empty;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
        repairs += 1;
    }
}

/// Lloyd's algorithm from a seeded farthest-point start.
///
/// The first centroid is a uniformly drawn point; each further centroid is
/// the point farthest from its nearest chosen centroid (lowest index on
/// ties). An empty cluster after assignment takes the point farthest from
/// its own centroid.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel, MaskingError> {
    if dim == 0 || points.is_empty() {
        return Err(MaskingError::Empty);
    }
    if points.len() % dim != 0 {
        return Err(MaskingError::Shape(format!("{} values not divisible into dimension {dim}", points.len())));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(MaskingError::NonFinite);
    }
    let n = points.len() / dim;
    if k == 0 || n < k {
        return Err(MaskingError::TooFewPoints { have: n, need: k.max(1) });
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(pt(rng.random_range(0..n)));
    let mut near: Vec<f64> = (0..n).map(|i| dist2(pt(i), &centroids[..dim])).collect();
    for _ in 1..k {
        let far = (0..n).fold(0, |b, i| if near[i] > near[b] { i } else { b });
        let c = pt(far).to_vec();
        for (i, d) in near.iter_mut().enumerate() {
            *d = d.min(dist2(pt(i), &c));
        }
        centroids.extend_from_slice(&c);
    }

    let mut assign: Vec<usize> = (0..n).map(|i| nearest(pt(i), &centroids, dim)).collect();
    let mut repairs = repair(points, dim, k, &mut assign, &mut centroids);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(pt(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            for j in 0..dim {
                centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
            }
        }
        history.push(objective(points, dim, &centroids, &assign));
        let mut next: Vec<usize> = (0..n).map(|i| nearest(pt(i), &centroids, dim)).collect();
        repairs += repair(points, dim, k, &mut next, &mut centroids);
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    let objective = objective(points, dim, &centroids, &assign);
    Ok(ClusterModel {
        k,
        dim,
        centroids,
        assignments: assign,
        objective_history: history,
        objective,
        iterations,
        converged,
        repairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let off = if c == 0 { -10.0 } else { 10.0 };
            pts.push(off + rng.random::<f64>());
            pts.push(rng.random::<f64>());
            truth.push(c);
        }
        let m = kmeans(&pts, 2, 2, 7, 100).unwrap();
        assert!(m.converged);
        let same = m.assignments.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(same == 200 || same == 0);
        for (i, &a) in m.assignments.iter().enumerate() {
            assert_eq!(a, nearest(&pts[2 * i..2 * i + 2], &m.centroids, 2));
        }
    }

    #[test]
    fn k_equals_n_gives_zero_objective() {
        let pts = [0.0, 1.0, 5.0, 2.0, -3.0, 4.0];
        let m = kmeans(&pts, 2, 3, 1, 10).unwrap();
        assert_eq!(m.objective, 0.0);
        let mut a = m.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2]);
    }

    #[test]
    fn duplicates_trigger_repair() {
        let pts = [2.0; 10];
        let m = kmeans(&pts, 1, 2, 4, 10).unwrap();
        assert!(m.repairs > 0);
        assert!(m.converged);
        assert_eq!(m.sizes().iter().filter(|&&s| s > 0).count(), 2);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(kmeans(&[1.0], 1, 2, 0, 5), Err(MaskingError::TooFewPoints { have: 1, need: 2 })));
    }
}
