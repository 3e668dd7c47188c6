use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::weather::WeatherSeries;
use super::PhenologyError;

pub const DEFAULT_T_BASE: f64 = 10.0;

/// `max(0, (t_max + t_min) / 2 - t_base)`.
pub fn daily_gdd(t_max: f64, t_min: f64, t_base: f64) -> Result<f64, PhenologyError> {
    if t_min > t_max {
        return Err(PhenologyError::TempOrder { t_min, t_max });
    }
    Ok(((t_max + t_min) / 2.0 - t_base).max(0.0))
}

/// Cumulative GDD per day, 0 on the transplant date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GddCurve {
    pub t_base: f64,
    pub points: Vec<(NaiveDate, f64)>,
}

impl GddCurve {
    pub fn at(&self, date: NaiveDate) -> Option<f64> {
        let first = self.points.first()?.0;
        let i = (date - first).num_days();
        if i < 0 {
            return None;
        }
        self.points.get(i as usize).map(|p| p.1)
    }

    pub fn total(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

/// Running sum of daily GDD from `transplant` to `harvest` inclusive. Each
/// day after transplanting adds that day's degree-days.
pub fn cumulative_gdd(
    weather: &WeatherSeries,
    transplant: NaiveDate,
    harvest: NaiveDate,
    t_base: f64,
) -> Result<GddCurve, PhenologyError> {
    let mut points = Vec::new();
    let mut total = 0.0;
    for date in transplant.iter_days().take_while(|d| *d <= harvest) {
        let day = weather.day(date).ok_or(PhenologyError::Coverage(date))?;
        if date > transplant {
            total += daily_gdd(day.t_max, day.t_min, t_base)?;
        }
        points.push((date, total));
    }
    Ok(GddCurve { t_base, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phenology::weather::DailyTemp;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 5, day).unwrap()
    }

    fn constant(days: u32, t_max: f64, t_min: f64) -> WeatherSeries {
        WeatherSeries::new(
            (1..=days)
                .map(|i| DailyTemp {
                    date: d(i),
                    t_min,
                    t_max,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn daily_values() {
        assert_eq!(daily_gdd(30.0, 20.0, 10.0).unwrap(), 15.0);
        assert_eq!(daily_gdd(10.0, 10.0, 10.0).unwrap(), 0.0);
        assert_eq!(daily_gdd(8.0, 2.0, 10.0).unwrap(), 0.0);
        assert!(daily_gdd(1.0, 2.0, 10.0).is_err());
    }

    #[test]
    fn arithmetic_series() {
        let w = constant(5, 30.0, 20.0);
        let c = cumulative_gdd(&w, d(1), d(5), 10.0).unwrap();
        assert_eq!(c.values(), vec![0.0, 15.0, 30.0, 45.0, 60.0]);
        assert_eq!(c.at(d(3)), Some(30.0));
        assert_eq!(c.at(d(6)), None);
    }

    #[test]
    fn base_temperature_days_are_zero() {
        let w = constant(4, 10.0, 10.0);
        let c = cumulative_gdd(&w, d(1), d(4), 10.0).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coverage_required() {
        let w = constant(4, 30.0, 20.0);
        assert!(matches!(
            cumulative_gdd(&w, d(2), d(6), 10.0),
            Err(PhenologyError::Coverage(x)) if x == d(5)
        ));
    }
}
