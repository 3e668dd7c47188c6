//! Per-scene feature rasters as CSV: `x,y,<feature...>`, one row per pixel
//! in row-major order, `NaN` where a value is invalid.

use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTable {
    pub width: usize,
    pub height: usize,
    pub names: Vec<String>,
    /// `planes[feature][y * width + x]`.
    pub planes: Vec<Vec<f64>>,
}

pub fn write_planes(path: &Path, width: usize, names: &[&str], planes: &[&[f64]]) -> Result<(), CliError> {
    let n = planes.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x", "y"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(names.len() + 2);
    for i in 0..n {
        row.clear();
        row.push((i % width).to_string());
        row.push((i / width).to_string());
        row.extend(planes.iter().map(|p| p[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_planes(path: &Path) -> Result<PlaneTable, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "x" || header[1] != "y" {
        return Err(CliError::Data(format!("{}: expected x,y,<features> header", path.display())));
    }
    let names = header[2..].to_vec();
    let mut planes = vec![Vec::new(); names.len()];
    let (mut width, mut height) = (0, 0);
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let coord = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(format!("row {i}: {e}")));
        let (x, y) = (coord(0)?, coord(1)?);
        if y == 0 {
            width = width.max(x + 1);
        }
        if width == 0 || x + y * width != i {
            return Err(bad(format!("row {i} is out of raster order")));
        }
        height = y + 1;
        for (p, field) in planes.iter_mut().zip(rec.iter().skip(2)) {
            p.push(field.parse::<f64>().map_err(|e| bad(format!("row {i}: {e}")))?);
        }
    }
    if planes.iter().any(|p| p.len() != width * height) {
        return Err(bad("raster is not rectangular".into()));
    }
    Ok(PlaneTable {
        width,
        height,
        names,
        planes,
    })
}
