use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MaskingError;

/// Column means and scales used by [`standardize`]. Population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.means[j]) / self.scales[j];
        }
    }
}

/// Zero-mean, unit-variance columns of a row-major `rows x cols` matrix.
/// Zero-variance columns are centered and keep scale 1.
pub fn standardize(x: &[f64], cols: usize) -> Result<(Vec<f64>, Standardization), MaskingError> {
    if x.is_empty() || cols == 0 {
        return Err(MaskingError::Empty);
    }
    if x.len() % cols != 0 {
        return Err(MaskingError::Shape(format!("{} values not divisible into {cols} columns", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MaskingError::NonFinite);
    }
    let rows = x.len() / cols;
    let mut means = vec![0.0; cols];
    for r in x.chunks_exact(cols) {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in x.chunks_exact(cols) {
        for j in 0..cols {
            var[j] += (r[j] - means[j]).powi(2);
        }
    }
    let flat: Vec<bool> = var
        .iter()
        .zip(&means)
        .map(|(v, m)| (v / rows as f64).sqrt() <= 1e-12 * m.abs().max(1.0))
        .collect();
    let scales = var
        .iter()
        .zip(&flat)
        .map(|(v, &f)| if f { 1.0 } else { (v / rows as f64).sqrt() })
        .collect();
    let st = Standardization { means, scales };
    let mut out = vec![0.0; x.len()];
    for (r, o) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        st.apply(r, o);
        for (v, &f) in o.iter_mut().zip(&flat) {
            if f {
                *v = 0.0;
            }
        }
    }
    Ok((out, st))
}

/// Principal axes of centered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// Row `i` is component `i` (unit length), sorted by explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub retained: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn total_variance(&self) -> f64 {
        self.explained_variance.iter().sum()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        let t = self.total_variance();
        self.explained_variance.iter().map(|v| v / t).collect()
    }

    /// Scores on the first `k` components for each row.
    pub fn project_k(&self, x: &[f64], k: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(x.len() / d * k);
        for r in x.chunks_exact(d) {
            for c in &self.components[..k] {
                out.push(c.iter().zip(r).zip(&self.means).map(|((w, v), m)| w * (v - m)).sum());
            }
        }
        out
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.project_k(x, self.retained)
    }

    /// Inverse of [`project_k`] for `k` scores per row.
    pub fn reconstruct(&self, scores: &[f64], k: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(scores.len() / k * d);
        for s in scores.chunks_exact(k) {
            for j in 0..d {
                out.push(self.means[j] + (0..k).map(|i| s[i] * self.components[i][j]).sum::<f64>());
            }
        }
        out
    }
}

/// Eigendecomposition of the population covariance. `retained` is the
/// smallest count whose cumulative explained ratio reaches `variance_target`.
pub fn fit_pca(x: &[f64], cols: usize, variance_target: f64) -> Result<PcaModel, MaskingError> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(MaskingError::VarianceTarget(variance_target));
    }
    if x.is_empty() || cols == 0 {
        return Err(MaskingError::Empty);
    }
    if x.len() % cols != 0 {
        return Err(MaskingError::Shape(format!("{} values not divisible into {cols} columns", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MaskingError::NonFinite);
    }
    let rows = x.len() / cols;
    if rows < cols {
        return Err(MaskingError::TooFewPoints { have: rows, need: cols });
    }
    let mut means = vec![0.0; cols];
    for r in x.chunks_exact(cols) {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= rows as f64);
    let mut cov = DMatrix::<f64>::zeros(cols, cols);
    for r in x.chunks_exact(cols) {
        for i in 0..cols {
            let di = r[i] - means[i];
            for j in i..cols {
                cov[(i, j)] += di * (r[j] - means[j]);
            }
        }
    }
    for i in 0..cols {
        for j in i..cols {
            let v = cov[(i, j)] / rows as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let total: f64 = (0..cols).map(|i| cov[(i, i)]).sum();
    if !(total > 0.0) {
        return Err(MaskingError::Degenerate);
    }
    let eig = SymmetricEigen::try_new(cov, 1e-14, 0).ok_or(MaskingError::Eigen)?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(cols);
    let mut explained = Vec::with_capacity(cols);
    for &i in &order {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // sign convention: largest-magnitude entry positive
        let big = c.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if big < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        explained.push(eig.eigenvalues[i].max(0.0));
    }
    let sum: f64 = explained.iter().sum();
    let mut cum = 0.0;
    let mut retained = cols;
    for (i, v) in explained.iter().enumerate() {
        cum += v;
        if cum / sum >= variance_target - 1e-12 {
            retained = i + 1;
            break;
        }
    }
    Ok(PcaModel {
        means,
        components,
        explained_variance: explained,
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_column() {
        let (z, st) = standardize(&[0.0, 5.0, 2.0, 5.0], 2).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(st.scales, vec![1.0, 1.0]);
        assert_eq!(st.means, vec![1.0, 5.0]);
    }

    #[test]
    fn standardized_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500 * 5).map(|i| rng.random::<f64>() * (i % 5 + 1) as f64 + 3.0).collect();
        let (z, _) = standardize(&x, 5).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = z.iter().skip(j).step_by(5).copied().collect();
            let m = col.iter().sum::<f64>() / 500.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 500.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_data() {
        let dir = [1.0, -2.0, 0.5, 3.0, 1.5];
        let x: Vec<f64> = (0..40).flat_map(|i| dir.map(|d| d * (i as f64 - 7.0))).collect();
        let p = fit_pca(&x, 5, 0.95).unwrap();
        assert_eq!(p.retained, 1);
        assert!((p.explained_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_reconstruction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..200 * 5).map(|_| rng.random::<f64>()).collect();
        let p = fit_pca(&x, 5, 0.95).unwrap();
        let back = p.reconstruct(&p.project_k(&x, 5), 5);
        for (a, b) in x.iter().zip(back) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(matches!(fit_pca(&[0.0; 40], 5, 0.9), Err(MaskingError::Degenerate)));
        assert!(matches!(fit_pca(&[1.0; 10], 5, 0.9), Err(MaskingError::TooFewPoints { .. })));
    }
}
