use super::PhenologyError;

/// `n_steps` evenly spaced values from 0 to `harvest_gdd`, both included.
pub fn gdd_grid(harvest_gdd: f64, n_steps: usize) -> Vec<f64> {
    if n_steps == 1 {
        return vec![0.0];
    }
    (0..n_steps)
        .map(|i| {
            if i == n_steps - 1 {
                harvest_gdd
            } else {
                harvest_gdd * i as f64 / (n_steps - 1) as f64
            }
        })
        .collect()
}

/// Piecewise-linear interpolation of `(x, y)` observations onto `grid`.
///
/// Observations with a non-finite coordinate are skipped. Repeated `x`
/// values are averaged. Grid points outside the observed range take the
/// nearest endpoint value.
pub fn resample(series: &[(f64, f64)], grid: &[f64]) -> Result<Vec<f64>, PhenologyError> {
    let mut pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        let mut sum = 0.0;
        while j < pts.len() && pts[j].0 == pts[i].0 {
            sum += pts[j].1;
            j += 1;
        }
        merged.push((pts[i].0, sum / (j - i) as f64));
        i = j;
    }
    if pts.len() < 2 {
        return Err(PhenologyError::TooFewObservations {
            have: pts.len(),
            need: 2,
        });
    }
    let (first, last) = (merged[0], merged[merged.len() - 1]);
    let mut seg = 0;
    let mut out = Vec::with_capacity(grid.len());
    for (k, &g) in grid.iter().enumerate() {
        if k > 0 && g < grid[k - 1] {
            seg = 0;
        }
        let v = if g <= first.0 {
            first.1
        } else if g >= last.0 {
            last.1
        } else {
            while merged[seg + 1].0 < g {
                seg += 1;
            }
            let (x0, y0) = merged[seg];
            let (x1, y1) = merged[seg + 1];
            if g == x1 {
                y1
            } else {
                y0 + (y1 - y0) * (g - x0) / (x1 - x0)
            }
        };
        out.push(v);
    }
    Ok(out)
}

pub fn resample_to_gdd_grid(series: &[(f64, f64)], harvest_gdd: f64, n_steps: usize) -> Result<Vec<f64>, PhenologyError> {
    resample(series, &gdd_grid(harvest_gdd, n_steps))
}
