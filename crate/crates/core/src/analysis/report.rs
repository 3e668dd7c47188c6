//! CSV and SVG emission for evaluation artifacts.
//!
//! CSV schemas:
//!
//! | file | columns |
//! |------|---------|
//! | `metrics.csv` | `metric,value,defined` (value empty when undefined) |
//! | `confusion.csv` | `true_class,pred_infested,pred_clean,norm_infested,norm_clean` |
//! | `history.csv` | `epoch,train_loss,train_accuracy,val_loss,val_accuracy` |
//! | `importance.csv` | `rank,feature,index,mean_drop,std_drop` |
//! | `density.csv` | `feature,class,bandwidth,value,density` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::density::DensityCurve;
use super::importance::ImportanceReport;
use super::metrics::{ConfusionMatrix, MetricSet};
use super::svg;
use super::AnalysisError;
use crate::lstm::EpochStats;

pub struct ReportInputs<'a> {
    pub metrics: &'a MetricSet,
    pub confusion: &'a ConfusionMatrix,
    pub history: &'a [EpochStats],
    pub importance: Option<&'a ImportanceReport>,
    pub densities: &'a [DensityCurve],
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, AnalysisError> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn csv_err(e: csv::Error) -> AnalysisError {
    AnalysisError::Io(std::io::Error::other(e.to_string()))
}

pub fn write_metrics_csv(path: &Path, m: &MetricSet) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value", "defined"]).map_err(csv_err)?;
    let rows = [
        ("accuracy", Some(m.accuracy)),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ];
    for (name, v) in rows {
        w.write_record([name, &opt(v), if v.is_some() { "true" } else { "false" }])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<MetricSet, AnalysisError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut found: BTreeMap<String, Option<f64>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let bad = || AnalysisError::Parse(format!("bad metrics row {rec:?}"));
        let name = rec.get(0).ok_or_else(bad)?.to_string();
        let value = match rec.get(2).ok_or_else(bad)? {
            "true" => Some(rec.get(1).ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?),
            "false" => None,
            _ => return Err(bad()),
        };
        found.insert(name, value);
    }
    let get = |k: &str| {
        found
            .get(k)
            .copied()
            .ok_or_else(|| AnalysisError::Parse(format!("metrics CSV lacks {k}")))
    };
    Ok(MetricSet {
        accuracy: get("accuracy")?.ok_or_else(|| AnalysisError::Parse("accuracy undefined".into()))?,
        precision: get("precision")?,
        recall: get("recall")?,
        f1: get("f1")?,
    })
}

pub fn write_confusion_csv(path: &Path, c: &ConfusionMatrix) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(["true_class", "pred_infested", "pred_clean", "norm_infested", "norm_clean"])
        .map_err(csv_err)?;
    let norm = c.normalized();
    let counts = [("infested", c.tp, c.fn_), ("clean", c.fp, c.tn)];
    for (i, (name, a, b)) in counts.into_iter().enumerate() {
        let (na, nb) = match norm[i] {
            Some([x, y]) => (x.to_string(), y.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([name, &a.to_string(), &b.to_string(), &na, &nb])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
        .map_err(csv_err)?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.train_loss.to_string(),
            h.train_accuracy.to_string(),
            opt(h.val_loss),
            opt(h.val_accuracy),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_importance_csv(path: &Path, rep: &ImportanceReport) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(["rank", "feature", "index", "mean_drop", "std_drop"])
        .map_err(csv_err)?;
    for e in &rep.ranking {
        w.write_record([
            e.rank.to_string(),
            e.feature.clone(),
            e.index.to_string(),
            e.mean_drop.to_string(),
            e.std_drop.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density_csv(path: &Path, curves: &[DensityCurve]) -> Result<(), AnalysisError> {
    let mut w = csv_writer(path)?;
    w.write_record(["feature", "class", "bandwidth", "value", "density"])
        .map_err(csv_err)?;
    for c in curves {
        let bw = c.bandwidth.to_string();
        for &(x, d) in &c.points {
            w.write_record([c.feature.as_str(), &c.class, &bw, &x.to_string(), &d.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write(path: PathBuf, body: String, out: &mut Vec<PathBuf>) -> Result<(), AnalysisError> {
    fs::write(&path, body)?;
    out.push(path);
    Ok(())
}

fn file_stem(feature: &str) -> String {
    feature
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Writes every CSV and chart into `out_dir` (created if missing) and
/// returns the written paths in a fixed order.
pub fn emit_report(inputs: &ReportInputs<'_>, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();

    let p = out_dir.join("metrics.csv");
    write_metrics_csv(&p, inputs.metrics)?;
    out.push(p);
    let p = out_dir.join("confusion.csv");
    write_confusion_csv(&p, inputs.confusion)?;
    out.push(p);
    let p = out_dir.join("history.csv");
    write_history_csv(&p, inputs.history)?;
    out.push(p);

    let norm = inputs.confusion.normalized();
    let cells: Vec<Vec<Option<f64>>> = norm
        .iter()
        .map(|r| match r {
            Some([a, b]) => vec![Some(*a), Some(*b)],
            None => vec![None, None],
        })
        .collect();
    write(
        out_dir.join("confusion.svg"),
        svg::matrix_chart(
            "Normalized confusion matrix (test)",
            &["true infested", "true clean"],
            &["pred infested", "pred clean"],
            &cells,
        ),
        &mut out,
    )?;

    let m = inputs.metrics;
    let bars: Vec<(String, f64, Option<f64>)> = [
        ("accuracy", Some(m.accuracy)),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ]
    .into_iter()
    .filter_map(|(n, v)| v.map(|v| (n.to_string(), v, None)))
    .collect();
    write(out_dir.join("metrics.svg"), svg::bar_chart("Test metrics", "value", &bars), &mut out)?;

    let series = |f: &dyn Fn(&EpochStats) -> Option<f64>| -> Vec<(f64, f64)> {
        inputs
            .history
            .iter()
            .filter_map(|h| f(h).map(|v| (h.epoch as f64, v)))
            .collect()
    };
    write(
        out_dir.join("history_accuracy.svg"),
        svg::line_chart(
            "Accuracy per epoch",
            "epoch",
            "accuracy",
            &[
                ("train".to_string(), series(&|h| Some(h.train_accuracy))),
                ("validation".to_string(), series(&|h| h.val_accuracy)),
            ],
        ),
        &mut out,
    )?;
    write(
        out_dir.join("history_loss.svg"),
        svg::line_chart(
            "Loss per epoch",
            "epoch",
            "binary cross-entropy",
            &[
                ("train".to_string(), series(&|h| Some(h.train_loss))),
                ("validation".to_string(), series(&|h| h.val_loss)),
            ],
        ),
        &mut out,
    )?;

    if let Some(rep) = inputs.importance {
        let p = out_dir.join("importance.csv");
        write_importance_csv(&p, rep)?;
        out.push(p);
        let bars: Vec<_> = rep
            .ranking
            .iter()
            .map(|e| (e.feature.clone(), e.mean_drop, Some(e.std_drop)))
            .collect();
        write(
            out_dir.join("importance.svg"),
            svg::bar_chart("Permutation importance", "mean accuracy drop", &bars),
            &mut out,
        )?;
    }

    if !inputs.densities.is_empty() {
        let p = out_dir.join("density.csv");
        write_density_csv(&p, inputs.densities)?;
        out.push(p);
        let mut features: Vec<&str> = Vec::new();
        for c in inputs.densities {
            if !features.contains(&c.feature.as_str()) {
                features.push(&c.feature);
            }
        }
        for f in features {
            let series: Vec<(String, Vec<(f64, f64)>)> = inputs
                .densities
                .iter()
                .filter(|c| c.feature == f)
                .map(|c| (c.class.clone(), c.points.clone()))
                .collect();
            write(
                out_dir.join(format!("density_{}.svg", file_stem(f))),
                svg::line_chart(&format!("{f} at peak stage"), f, "density", &series),
                &mut out,
            )?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_with_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = MetricSet {
            accuracy: 0.1 + 0.2,
            precision: None,
            recall: Some(1.0 / 3.0),
            f1: None,
        };
        write_metrics_csv(&p, &m).unwrap();
        assert_eq!(read_metrics_csv(&p).unwrap(), m);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("CHL_RED-EDGE"), "chl_red_edge");
    }
}
