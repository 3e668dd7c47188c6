//! Gaussian kernel density curves with Silverman's bandwidth.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub feature: String,
    pub class: String,
    pub bandwidth: f64,
    /// `(value, density)` pairs on an evenly spaced grid.
    pub points: Vec<(f64, f64)>,
}

impl DensityCurve {
    pub fn trapezoid_integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum()
    }

    pub fn argmax(&self) -> f64 {
        self.points
            .iter()
            .fold((f64::NAN, f64::NEG_INFINITY), |best, &(x, d)| if d > best.1 { (x, d) } else { best })
            .0
    }
}

/// `1.06 * sd * n^(-1/5)` with the sample standard deviation.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Density of `values` on `grid_size` points spanning `[min - 3h, max + 3h]`.
///
/// The raw kernel sum leaves up to ~0.3% of the mass outside that span, so
/// the curve is rescaled to unit trapezoidal area over the grid.
pub fn kde(
    feature: &str,
    class: &str,
    values: &[f64],
    grid_size: usize,
) -> Result<DensityCurve, AnalysisError> {
    if values.len() < 2 {
        return Err(AnalysisError::TooFewValues(values.len()));
    }
    if grid_size < 2 {
        return Err(AnalysisError::Grid(grid_size));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let h = silverman_bandwidth(values);
    if !(h > 0.0) {
        return Err(AnalysisError::DegenerateSpike);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let points: Vec<(f64, f64)> = (0..grid_size)
        .map(|i| {
            let x = lo + step * i as f64;
            let d: f64 = values
                .iter()
                .map(|v| {
                    let u = (x - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            (x, d * norm)
        })
        .collect();
    let mut curve = DensityCurve {
        feature: feature.to_string(),
        class: class.to_string(),
        bandwidth: h,
        points,
    };
    let area = curve.trapezoid_integral();
    if area > 0.0 {
        curve.points.iter_mut().for_each(|p| p.1 /= area);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_area() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 17) as f64 * 0.3).collect();
        let c = kde("x", "clean", &v, 256).unwrap();
        assert!((c.trapezoid_integral() - 1.0).abs() < 1e-3);
        assert!(c.points.iter().all(|p| p.1 >= 0.0));
    }

    #[test]
    fn tight_cluster_peaks_at_cluster() {
        let v: Vec<f64> = (0..40).map(|i| 5.0 + (i as f64 - 20.0) * 1e-6).collect();
        let c = kde("x", "clean", &v, 401).unwrap();
        assert!((c.argmax() - 5.0).abs() < 1e-5, "{}", c.argmax());
        assert!((c.trapezoid_integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn symmetric_data_gives_symmetric_curve() {
        let v = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];
        let c = kde("x", "infested", &v, 201).unwrap();
        let n = c.points.len();
        for i in 0..n {
            assert!((c.points[i].1 - c.points[n - 1 - i].1).abs() < 1e-6);
        }
    }

    #[test]
    fn silverman_reference() {
        // sample sd of [1,2,3,4,5] is sqrt(2.5)
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((h - 1.06 * 2.5f64.sqrt() * 5f64.powf(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn identical_values_are_degenerate() {
        assert!(matches!(kde("x", "c", &[2.0; 10], 64), Err(AnalysisError::DegenerateSpike)));
        assert!(matches!(kde("x", "c", &[2.0], 64), Err(AnalysisError::TooFewValues(1))));
    }
}
