//! Daily temperature series from CSV files or the Open-Meteo archive API.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::PhenologyError;

pub const ARCHIVE_URL: &str = "https://archive-api.open-meteo.com/v1/archive";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyTemp {
    pub date: NaiveDate,
    pub t_min: f64,
    pub t_max: f64,
}

/// Consecutive days with `t_min <= t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    days: Vec<DailyTemp>,
}

impl WeatherSeries {
    pub fn new(days: Vec<DailyTemp>) -> Result<Self, PhenologyError> {
        for w in days.windows(2) {
            if w[1].date.signed_duration_since(w[0].date).num_days() != 1 {
                return Err(PhenologyError::Gap(w[0].date));
            }
        }
        for d in &days {
            if !(d.t_min.is_finite() && d.t_max.is_finite()) {
                return Err(PhenologyError::Malformed(format!("non-finite temperature on {}", d.date)));
            }
            if d.t_min > d.t_max {
                return Err(PhenologyError::TempOrder {
                    t_min: d.t_min,
                    t_max: d.t_max,
                });
            }
        }
        Ok(WeatherSeries { days })
    }

    pub fn days(&self) -> &[DailyTemp] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn day(&self, date: NaiveDate) -> Option<&DailyTemp> {
        let first = self.days.first()?.date;
        let i = (date - first).num_days();
        if i < 0 {
            return None;
        }
        self.days.get(i as usize)
    }
}

/// Reads a `date,t_min,t_max` CSV with ISO dates.
pub fn read_weather_csv(path: &Path) -> Result<WeatherSeries, PhenologyError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PhenologyError::Malformed(e.to_string()))?;
    let headers = r.headers().map_err(|e| PhenologyError::Malformed(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["date", "t_min", "t_max"] {
        return Err(PhenologyError::Malformed(format!(
            "{}: header must be date,t_min,t_max",
            path.display()
        )));
    }
    let days = r
        .deserialize::<DailyTemp>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PhenologyError::Malformed(format!("{}: {e}", path.display())))?;
    WeatherSeries::new(days)
}

pub fn write_weather_csv(series: &WeatherSeries, path: &Path) -> Result<(), PhenologyError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PhenologyError::Malformed(e.to_string()))?;
    for d in &series.days {
        w.serialize(d).map_err(|e| PhenologyError::Malformed(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Blocking HTTP GET returning the response body.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, PhenologyError>;
}

pub struct UreqTransport;

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<String, PhenologyError> {
        ureq::get(url)
            .call()
            .map_err(|e| PhenologyError::Network(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| PhenologyError::Network(e.to_string()))
    }
}

#[derive(Deserialize)]
struct ArchiveResponse {
    daily: ArchiveDaily,
}

#[derive(Deserialize)]
struct ArchiveDaily {
    time: Vec<NaiveDate>,
    temperature_2m_max: Vec<Option<f64>>,
    temperature_2m_min: Vec<Option<f64>>,
}

/// Parses an archive response and checks it covers `start..=end` day by day.
pub fn parse_archive_response(
    body: &str,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<WeatherSeries, PhenologyError> {
    let r: ArchiveResponse = serde_json::from_str(body).map_err(|e| PhenologyError::Malformed(e.to_string()))?;
    let d = r.daily;
    if d.time.len() != d.temperature_2m_max.len() || d.time.len() != d.temperature_2m_min.len() {
        return Err(PhenologyError::Malformed("daily arrays differ in length".into()));
    }
    let mut days = Vec::with_capacity(d.time.len());
    let mut expected = start;
    for ((date, hi), lo) in d.time.iter().zip(&d.temperature_2m_max).zip(&d.temperature_2m_min) {
        if *date != expected {
            return Err(PhenologyError::Gap(expected.pred_opt().unwrap_or(expected)));
        }
        let (Some(t_max), Some(t_min)) = (hi, lo) else {
            return Err(PhenologyError::Malformed(format!("missing temperature on {date}")));
        };
        days.push(DailyTemp {
            date: *date,
            t_min: *t_min,
            t_max: *t_max,
        });
        expected = date.succ_opt().expect("date in range");
    }
    if days.last().map(|d| d.date) != Some(end) {
        return Err(PhenologyError::Gap(days.last().map_or(start, |d| d.date)));
    }
    WeatherSeries::new(days)
}

fn key_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    map.entry(path.to_path_buf()).or_default().clone()
}

/// Archive client with an on-disk cache of raw responses.
pub struct OpenMeteoClient<T: Transport = UreqTransport> {
    pub transport: T,
    pub cache_dir: PathBuf,
    pub base_url: String,
}

impl OpenMeteoClient<UreqTransport> {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self::with_transport(UreqTransport, cache_dir)
    }
}

impl<T: Transport> OpenMeteoClient<T> {
    pub fn with_transport(transport: T, cache_dir: impl Into<PathBuf>) -> Self {
        OpenMeteoClient {
            transport,
            cache_dir: cache_dir.into(),
            base_url: ARCHIVE_URL.to_string(),
        }
    }

    pub fn cache_path(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> PathBuf {
        self.cache_dir.join(format!("{lat:.4}_{lon:.4}_{start}_{end}.json"))
    }

    pub fn url(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> String {
        format!(
            "{}?latitude={lat:.4}&longitude={lon:.4}&start_date={start}&end_date={end}\
             &daily=temperature_2m_max,temperature_2m_min&timezone=UTC",
            self.base_url
        )
    }

    /// Serves from cache when present; otherwise fetches, validates, and
    /// caches the raw body. Only well-formed responses are cached.
    pub fn fetch(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> Result<WeatherSeries, PhenologyError> {
        let path = self.cache_path(lat, lon, start, end);
        let lock = key_lock(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Ok(body) = fs::read_to_string(&path) {
            match parse_archive_response(&body, start, end) {
                Ok(s) => return Ok(s),
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let body = self.transport.get(&self.url(lat, lon, start, end))?;
        let series = parse_archive_response(&body, start, end)?;
        fs::create_dir_all(&self.cache_dir)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, &body)?;
        fs::rename(&tmp, &path)?;
        Ok(series)
    }
}

pub fn fetch_weather(
    latitude: f64,
    longitude: f64,
    start: NaiveDate,
    end: NaiveDate,
    cache_dir: &Path,
) -> Result<WeatherSeries, PhenologyError> {
    OpenMeteoClient::new(cache_dir).fetch(latitude, longitude, start, end)
}
