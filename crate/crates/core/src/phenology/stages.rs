use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::gdd::GddCurve;
use super::PhenologyError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    /// Fraction of seasonal amplitude marking the end of the pre-season floor.
    pub theta_low: f64,
    /// Fraction of seasonal amplitude marking the post-peak decline.
    pub theta_high: f64,
    /// Centered moving-average window, in observations.
    pub window: usize,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            theta_low: 0.2,
            theta_high: 0.5,
            window: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEstimate {
    pub transplant_date: NaiveDate,
    pub peak_date: NaiveDate,
    pub harvest_date: NaiveDate,
}

impl StageEstimate {
    /// Cumulative GDD at each stage, when the curve covers all three dates.
    pub fn gdd(&self, curve: &GddCurve) -> Option<[f64; 3]> {
        Some([
            curve.at(self.transplant_date)?,
            curve.at(self.peak_date)?,
            curve.at(self.harvest_date)?,
        ])
    }
}

/// Centered moving average; windows are truncated at the edges.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Transplant, peak, and harvest dates from a chronological CCC series.
pub fn detect_stages(series: &[(NaiveDate, f64)], params: &StageParams) -> Result<StageEstimate, PhenologyError> {
    if series.len() < 5 {
        return Err(PhenologyError::TooFewObservations {
            have: series.len(),
            need: 5,
        });
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(PhenologyError::Season("observation dates not increasing".into()));
    }
    let raw: Vec<f64> = series.iter().map(|p| p.1).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(PhenologyError::Season("non-finite CCC value".into()));
    }
    let s = smooth(&raw, params.window.max(1));
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut peak, mut hi) = (0, f64::NEG_INFINITY);
    for (i, &v) in s.iter().enumerate() {
        if v > hi {
            (peak, hi) = (i, v);
        }
    }
    let amp = hi - lo;
    if !(amp > 1e-12 * hi.abs().max(1.0)) {
        return Err(PhenologyError::Degenerate);
    }
    let rise = lo + params.theta_low * amp;
    let first = s.iter().position(|&v| v > rise).expect("peak exceeds rise threshold");
    if first == 0 {
        return Err(PhenologyError::Season("curve already above floor at first observation".into()));
    }
    let fall = lo + params.theta_high * amp;
    let harvest = (peak + 1..s.len())
        .find(|&i| s[i] < fall)
        .ok_or_else(|| PhenologyError::Season("no decline after peak".into()))?;
    Ok(StageEstimate {
        transplant_date: series[first - 1].0,
        peak_date: series[peak].0,
        harvest_date: series[harvest].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2023, 4, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Duration::days(5 * i as i64)).collect()
    }

    #[test]
    fn smoothing_truncates_edges() {
        assert_eq!(smooth(&[3.0, 6.0, 9.0, 0.0], 3), vec![4.5, 6.0, 5.0, 4.5]);
    }

    #[test]
    fn trapezoid_breakpoints() {
        // floor to obs 4, rise over 5..8, plateau 8..14, fall to floor by 16
        let v = [
            10.0, 10.0, 10.0, 10.0, 10.0, 100.0, 200.0, 300.0, 400.0, 410.0, 420.0, 430.0, 420.0, 410.0, 400.0,
            150.0, 10.0, 10.0, 10.0,
        ];
        let d = dates(v.len());
        let series: Vec<_> = d.iter().copied().zip(v).collect();
        let st = detect_stages(&series, &StageParams::default()).unwrap();
        assert!((st.transplant_date - d[4]).num_days().abs() <= 5);
        assert_eq!(st.peak_date, d[11]);
        assert!((st.harvest_date - d[15]).num_days().abs() <= 5);
        assert!(st.transplant_date < st.peak_date && st.peak_date < st.harvest_date);
    }

    #[test]
    fn increasing_curve_has_no_harvest() {
        let d = dates(8);
        let series: Vec<_> = d.iter().copied().zip((0..8).map(|i| (i * i) as f64)).collect();
        assert!(matches!(detect_stages(&series, &StageParams::default()), Err(PhenologyError::Season(_))));
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let d = dates(8);
        let series: Vec<_> = d.iter().copied().map(|x| (x, 5.0)).collect();
        assert!(matches!(detect_stages(&series, &StageParams::default()), Err(PhenologyError::Degenerate)));
    }

    #[test]
    fn too_few_observations() {
        let d = dates(4);
        let series: Vec<_> = d.iter().copied().map(|x| (x, 5.0)).collect();
        assert!(matches!(
            detect_stages(&series, &StageParams::default()),
            Err(PhenologyError::TooFewObservations { have: 4, need: 5 })
        ));
    }
}
