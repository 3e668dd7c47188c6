use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Binary confusion counts with `infested` (label 1) as the positive class.
///
/// The normalized form is row-normalized by true class, with rows and
/// columns both ordered `[infested, clean]`. A predictor that always says
/// "infested" therefore has normalized rows `(1, 0)` and `(1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Rows `[infested, clean]`; `None` for a row with no samples.
    pub fn normalized(&self) -> [Option<[f64; 2]>; 2] {
        let row = |a: usize, b: usize| {
            let n = a + b;
            (n > 0).then(|| [a as f64 / n as f64, b as f64 / n as f64])
        };
        [row(self.tp, self.fn_), row(self.fp, self.tn)]
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix, AnalysisError> {
    if labels.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if labels.len() != predictions.len() {
        return Err(AnalysisError::Length {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    let mut m = ConfusionMatrix {
        tp: 0,
        fn_: 0,
        fp: 0,
        tn: 0,
    };
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (1, 1) => m.tp += 1,
            (1, 0) => m.fn_ += 1,
            (0, 1) => m.fp += 1,
            (0, 0) => m.tn += 1,
            _ => return Err(AnalysisError::NonBinary),
        }
    }
    Ok(m)
}

/// Classification ratios. A ratio whose denominator is zero is `None`
/// rather than 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn metrics(c: &ConfusionMatrix) -> MetricSet {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet {
        accuracy: (c.tp + c.tn) as f64 / c.total().max(1) as f64,
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_empty_off_diagonal() {
        let y = [1, 0, 1, 1, 0];
        let c = confusion(&y, &y).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(metrics(&c).accuracy, 1.0);
    }

    #[test]
    fn all_positive_predictor() {
        let y = [1, 1, 0, 0];
        let c = confusion(&y, &[1, 1, 1, 1]).unwrap();
        assert_eq!(c.fp, 2);
        assert_eq!(c.normalized(), [Some([1.0, 0.0]), Some([1.0, 0.0])]);
    }

    #[test]
    fn constructed_matrix_reproduces_reported_ratios() {
        let c = ConfusionMatrix {
            tp: 92,
            fn_: 8,
            fp: 15,
            tn: 85,
        };
        let m = metrics(&c);
        assert!((m.recall.unwrap() - 0.92).abs() < 1e-15);
        assert!((m.precision.unwrap() - 92.0 / 107.0).abs() < 1e-15);
        assert!((m.f1.unwrap() - 184.0 / 207.0).abs() < 1e-15);
        assert!((m.accuracy - 0.885).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_undefined() {
        let c = ConfusionMatrix {
            tp: 0,
            fn_: 3,
            fp: 0,
            tn: 5,
        };
        let m = metrics(&c);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(confusion(&[], &[]), Err(AnalysisError::Empty)));
        assert!(matches!(confusion(&[1], &[1, 0]), Err(AnalysisError::Length { .. })));
        assert!(matches!(confusion(&[2], &[1]), Err(AnalysisError::NonBinary)));
    }

    #[test]
    fn matches_pair_counting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let y: Vec<u8> = (0..500).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<u8> = (0..500).map(|_| rng.random_range(0..2)).collect();
        let c = confusion(&y, &p).unwrap();
        let count = |a, b| y.iter().zip(&p).filter(|(&u, &v)| u == a && v == b).count();
        assert_eq!(c.tp, count(1, 1));
        assert_eq!(c.fn_, count(1, 0));
        assert_eq!(c.fp, count(0, 1));
        assert_eq!(c.tn, count(0, 0));
        assert_eq!(c.total(), 500);
        for row in c.normalized().iter().flatten() {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}
