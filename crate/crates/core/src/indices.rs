//! The 20 spectral vegetation indices, per pixel with validity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scene_store::{BandId, Scene};

/// Denominator guard in reflectance units.
pub const EPS: f64 = 1e-6;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexKind {
    NDVI,
    ARI,
    mARI,
    ARVI,
    CHL_RED_EDGE,
    REPO,
    EVI,
    EVI2,
    GNDVI,
    MCRI,
    MI,
    NDMI,
    NDWI,
    NDMIMS,
    NDCI,
    PSSRb1,
    SAVI,
    SIPI,
    PSRI,
    NDYI,
}

impl IndexKind {
    pub const ALL: [IndexKind; 20] = [
        IndexKind::NDVI,
        IndexKind::ARI,
        IndexKind::mARI,
        IndexKind::ARVI,
        IndexKind::CHL_RED_EDGE,
        IndexKind::REPO,
        IndexKind::EVI,
        IndexKind::EVI2,
        IndexKind::GNDVI,
        IndexKind::MCRI,
        IndexKind::MI,
        IndexKind::NDMI,
        IndexKind::NDWI,
        IndexKind::NDMIMS,
        IndexKind::NDCI,
        IndexKind::PSSRb1,
        IndexKind::SAVI,
        IndexKind::SIPI,
        IndexKind::PSRI,
        IndexKind::NDYI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::NDVI => "NDVI",
            IndexKind::ARI => "ARI",
            IndexKind::mARI => "mARI",
            IndexKind::ARVI => "ARVI",
            IndexKind::CHL_RED_EDGE => "CHL_RED_EDGE",
            IndexKind::REPO => "REPO",
            IndexKind::EVI => "EVI",
            IndexKind::EVI2 => "EVI2",
            IndexKind::GNDVI => "GNDVI",
            IndexKind::MCRI => "MCRI",
            IndexKind::MI => "MI",
            IndexKind::NDMI => "NDMI",
            IndexKind::NDWI => "NDWI",
            IndexKind::NDMIMS => "NDMIMS",
            IndexKind::NDCI => "NDCI",
            IndexKind::PSSRb1 => "PSSRb1",
            IndexKind::SAVI => "SAVI",
            IndexKind::SIPI => "SIPI",
            IndexKind::PSRI => "PSRI",
            IndexKind::NDYI => "NDYI",
        }
    }

    pub fn from_name(s: &str) -> Option<IndexKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Operand bands `(a, b)` for indices of the form `(a - b) / (a + b)`.
    pub fn normalized_difference(self) -> Option<(BandId, BandId)> {
        use BandId::*;
        Some(match self {
            IndexKind::NDVI => (B8, B4),
            IndexKind::GNDVI => (B8, B3),
            IndexKind::NDMI => (B8, B11),
            IndexKind::NDWI => (B3, B8),
            IndexKind::NDMIMS => (B8, B12),
            IndexKind::NDCI => (B5, B4),
            IndexKind::NDYI => (B3, B2),
            IndexKind::MI => (B8A, B11),
            _ => return None,
        })
    }
}

fn div(num: f64, den: f64) -> Option<f64> {
    (den.abs() >= EPS).then(|| num / den)
}

fn recip(x: f64) -> Option<f64> {
    div(1.0, x)
}

/// Evaluates one index on a 12-band spectrum ordered by [`BandId`].
/// `None` when a guarded denominator is below [`EPS`].
pub fn evaluate(kind: IndexKind, s: &[f64; 12]) -> Option<f64> {
    if let Some((a, b)) = kind.normalized_difference() {
        let (a, b) = (s[a.index()], s[b.index()]);
        return div(a - b, a + b);
    }
    let b = |id: BandId| s[id.index()];
    use BandId::*;
    match kind {
        IndexKind::ARI => Some(recip(b(B3))? - recip(b(B5))?),
        IndexKind::mARI => Some((recip(b(B3))? - recip(b(B5))?) * b(B7)),
        IndexKind::ARVI => {
            let rb = 2.0 * b(B4) - b(B2);
            div(b(B8) - rb, b(B8) + rb)
        }
        IndexKind::CHL_RED_EDGE => Some(div(b(B7), b(B5))? - 1.0),
        IndexKind::REPO => Some(705.0 + 35.0 * div((b(B4) + b(B7)) / 2.0 - b(B5), b(B6) - b(B5))?),
        IndexKind::EVI => div(2.5 * (b(B8) - b(B4)), b(B8) + 6.0 * b(B4) - 7.5 * b(B2) + 1.0),
        IndexKind::EVI2 => div(2.5 * (b(B8) - b(B4)), b(B8) + 2.4 * b(B4) + 1.0),
        IndexKind::MCRI => Some(((b(B5) - b(B4)) - 0.2 * (b(B5) - b(B3))) * div(b(B5), b(B4))?),
        IndexKind::PSSRb1 => div(b(B8), b(B4)),
        IndexKind::SAVI => div(1.5 * (b(B8) - b(B4)), b(B8) + b(B4) + 0.5),
        IndexKind::SIPI => div(b(B8) - b(B1), b(B8) - b(B4)),
        IndexKind::PSRI => div(b(B4) - b(B2), b(B6)),
        _ => unreachable!("normalized differences handled above"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexPlane {
    pub kind: IndexKind,
    pub width: usize,
    pub height: usize,
    /// NaN where invalid.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn compute_index(scene: &Scene, kind: IndexKind) -> IndexPlane {
    let n = scene.meta.pixels();
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut s = [0.0; 12];
    for i in 0..n {
        let v = if scene.pixel_valid(i) {
            for (b, x) in s.iter_mut().enumerate() {
                *x = scene.planes[b][i];
            }
            evaluate(kind, &s).filter(|v| v.is_finite())
        } else {
            None
        };
        values.push(v.unwrap_or(f64::NAN));
        valid.push(v.is_some());
    }
    IndexPlane {
        kind,
        width: scene.width(),
        height: scene.height(),
        values,
        valid,
    }
}

/// All 20 planes in [`IndexKind::ALL`] order.
pub fn compute_all(scene: &Scene) -> Vec<IndexPlane> {
    IndexKind::ALL.iter().map(|&k| compute_index(scene, k)).collect()
}

/// One row per pixel valid in every plane: `x,y` then the 20 index values.
pub fn write_csv<W: Write>(planes: &[IndexPlane], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(planes.iter().map(|p| p.kind.name().to_string()));
    w.write_record(&header)?;
    let Some(first) = planes.first() else {
        return w.flush().map_err(Into::into);
    };
    for i in 0..first.values.len() {
        if planes.iter().all(|p| p.valid[i]) {
            let mut row = vec![(i % first.width).to_string(), (i / first.width).to_string()];
            row.extend(planes.iter().map(|p| p.values[i].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(pairs: &[(BandId, f64)]) -> [f64; 12] {
        let mut s = [0.2; 12];
        for &(b, v) in pairs {
            s[b.index()] = v;
        }
        s
    }

    #[test]
    fn twenty_kinds_unique_names() {
        let mut names: Vec<_> = IndexKind::ALL.iter().map(|k| k.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 20);
        assert_eq!(IndexKind::from_name("mARI"), Some(IndexKind::mARI));
    }

    #[test]
    fn ndvi_values() {
        use BandId::*;
        assert_eq!(evaluate(IndexKind::NDVI, &spectrum(&[(B8, 0.3), (B4, 0.3)])), Some(0.0));
        let v = evaluate(IndexKind::NDVI, &spectrum(&[(B8, 0.5), (B4, 0.1)])).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn evi_hand_value() {
        use BandId::*;
        let v = evaluate(IndexKind::EVI, &spectrum(&[(B8, 0.4), (B4, 0.1), (B2, 0.05)])).unwrap();
        assert!((v - 0.75 / 1.625).abs() < 1e-15);
    }

    #[test]
    fn singular_denominators() {
        use BandId::*;
        assert_eq!(evaluate(IndexKind::SIPI, &spectrum(&[(B8, 0.3), (B4, 0.3)])), None);
        assert_eq!(evaluate(IndexKind::ARI, &spectrum(&[(B3, 0.0)])), None);
        assert_eq!(evaluate(IndexKind::mARI, &spectrum(&[(B5, 5e-7)])), None);
        assert_eq!(evaluate(IndexKind::NDVI, &spectrum(&[(B8, 0.0), (B4, 0.0)])), None);
    }

    #[test]
    fn remaining_formulas_by_hand() {
        let s: [f64; 12] = std::array::from_fn(|i| 0.05 + 0.03 * i as f64);
        let b = |id: BandId| s[id.index()];
        use BandId::*;
        let cases = [
            (IndexKind::ARI, 1.0 / b(B3) - 1.0 / b(B5)),
            (IndexKind::mARI, (1.0 / b(B3) - 1.0 / b(B5)) * b(B7)),
            (IndexKind::CHL_RED_EDGE, b(B7) / b(B5) - 1.0),
            (IndexKind::PSSRb1, b(B8) / b(B4)),
            (IndexKind::PSRI, (b(B4) - b(B2)) / b(B6)),
            (IndexKind::EVI2, 2.5 * (b(B8) - b(B4)) / (b(B8) + 2.4 * b(B4) + 1.0)),
            (IndexKind::SAVI, 1.5 * (b(B8) - b(B4)) / (b(B8) + b(B4) + 0.5)),
            (IndexKind::SIPI, (b(B8) - b(B1)) / (b(B8) - b(B4))),
            (
                IndexKind::REPO,
                705.0 + 35.0 * (((b(B4) + b(B7)) / 2.0 - b(B5)) / (b(B6) - b(B5))),
            ),
            (
                IndexKind::MCRI,
                ((b(B5) - b(B4)) - 0.2 * (b(B5) - b(B3))) * (b(B5) / b(B4)),
            ),
            (
                IndexKind::ARVI,
                (b(B8) - (2.0 * b(B4) - b(B2))) / (b(B8) + (2.0 * b(B4) - b(B2))),
            ),
        ];
        for (k, want) in cases {
            let got = evaluate(k, &s).unwrap();
            assert!((got - want).abs() < 1e-12, "{k:?}: {got} vs {want}");
        }
    }
}
