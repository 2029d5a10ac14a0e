//! Photometric features of rendered stimuli (luminance center of mass and
//! total luminosity relative to the background) and their binning into
//! position, luminosity and combined class labels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::csv::{fmt_float, CsvBuf, Table};
use crate::dataio::LabelVector;
use crate::error::{Error, Result};
use crate::stimgen::{Canvas, StimulusImage, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometricFeatures {
    /// Column coordinate of the center of mass, in pixels.
    pub com_x: f64,
    /// Row coordinate of the center of mass, in pixels.
    pub com_y: f64,
    pub l_tot: f64,
}

/// `Σ_ij (I(i,j) − 128)`, computed exactly in integers.
pub fn total_luminosity(img: &StimulusImage) -> i64 {
    img.pixels.iter().map(|&v| v as i64 - BACKGROUND as i64).sum()
}

/// Center of mass weighted by `|I(i,j) − 128|`, as `(column, row)`.
pub fn center_of_mass(img: &StimulusImage) -> Result<(f64, f64)> {
    let (mut w, mut sx, mut sy) = (0u64, 0u64, 0u64);
    for i in 0..img.height {
        for j in 0..img.width {
            let d = (img.get(i, j) as i64 - BACKGROUND as i64).unsigned_abs();
            w += d;
            sx += d * j as u64;
            sy += d * i as u64;
        }
    }
    if w == 0 {
        return Err(Error::UndefinedCenterOfMass);
    }
    Ok((sx as f64 / w as f64, sy as f64 / w as f64))
}

pub fn extract_features(img: &StimulusImage) -> Result<PhotometricFeatures> {
    let (com_x, com_y) = center_of_mass(img)?;
    Ok(PhotometricFeatures {
        com_x,
        com_y,
        l_tot: total_luminosity(img) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Position,
    Luminosity,
    PositionLuminosity,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::Position,
        SchemeKind::Luminosity,
        SchemeKind::PositionLuminosity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Position => "position",
            SchemeKind::Luminosity => "luminosity",
            SchemeKind::PositionLuminosity => "position_luminosity",
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            SchemeKind::Position => 3,
            SchemeKind::Luminosity => 2,
            SchemeKind::PositionLuminosity => 6,
        }
    }

    fn n_cuts(self) -> usize {
        match self {
            SchemeKind::Position => 2,
            SchemeKind::Luminosity => 1,
            SchemeKind::PositionLuminosity => 3,
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown class scheme '{s}'")))
    }
}

/// Cut points for one scheme. For the combined scheme the thresholds are the
/// two position cuts followed by the luminosity cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScheme {
    pub kind: SchemeKind,
    pub thresholds: Vec<f64>,
}

impl ClassScheme {
    pub fn new(kind: SchemeKind, thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() != kind.n_cuts() {
            return Err(Error::InvalidParameter(format!(
                "{} scheme needs {} thresholds, got {}",
                kind.name(),
                kind.n_cuts(),
                thresholds.len()
            )));
        }
        let pos = if kind == SchemeKind::Luminosity {
            &thresholds[..0]
        } else {
            &thresholds[..2]
        };
        if pos.len() == 2 && pos[0] >= pos[1] {
            return Err(Error::InvalidParameter(
                "position cuts must be strictly increasing".into(),
            ));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        Ok(Self { kind, thresholds })
    }

    pub fn position(cuts: [f64; 2]) -> Result<Self> {
        Self::new(SchemeKind::Position, cuts.to_vec())
    }

    pub fn luminosity(cut: f64) -> Result<Self> {
        Self::new(SchemeKind::Luminosity, vec![cut])
    }

    pub fn combined(cuts: [f64; 2], lum_cut: f64) -> Result<Self> {
        Self::new(SchemeKind::PositionLuminosity, vec![cuts[0], cuts[1], lum_cut])
    }

    pub fn label(&self, f: &PhotometricFeatures) -> usize {
        match self.kind {
            SchemeKind::Position => bin(f.com_x, &self.thresholds),
            SchemeKind::Luminosity => bin(f.l_tot, &self.thresholds),
            SchemeKind::PositionLuminosity => {
                3 * bin(f.l_tot, &self.thresholds[2..]) + bin(f.com_x, &self.thresholds[..2])
            }
        }
    }
}

/// Number of cuts strictly below `v`: a value equal to a cut lands in the lower bin.
fn bin(v: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| c < v).count()
}

pub fn bin_labels(features: &[PhotometricFeatures], scheme: &ClassScheme) -> LabelVector {
    LabelVector {
        labels: features.iter().map(|f| scheme.label(f)).collect(),
        n_classes: scheme.kind.n_classes(),
    }
}

/// Position cuts halfway between the generator positions (±7.5°), in pixels.
pub fn default_position_cuts(canvas: Canvas) -> [f64; 2] {
    [canvas.deg_to_column(-7.5), canvas.deg_to_column(7.5)]
}

/// Luminosity cut leaving the top `1 − quantile` fraction of stimuli in the
/// high class (ties with the cut go low).
pub fn quantile_cut(l_tot: &[f64], quantile: f64) -> Result<f64> {
    if l_tot.is_empty() || !(0.0..1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!(
            "quantile {quantile} needs a non-empty sample and must lie in [0,1)"
        )));
    }
    let mut v = l_tot.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite luminosity"));
    let idx = ((quantile * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    Ok(v[idx])
}

pub const FEATURES_HEADER: [&str; 4] = ["stimulus_id", "com_x", "com_y", "l_tot"];

pub fn write_features(path: &Path, ids: &[String], f: &[PhotometricFeatures], comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &FEATURES_HEADER);
    for (id, f) in ids.iter().zip(f) {
        out.row([id.clone(), fmt_float(f.com_x), fmt_float(f.com_y), fmt_float(f.l_tot)]);
    }
    out.write(path)
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<PhotometricFeatures>)> {
    let t = Table::read(path)?;
    t.expect_header(&FEATURES_HEADER)?;
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for r in 0..t.rows.len() {
        ids.push(t.text(r, 0).to_string());
        out.push(PhotometricFeatures {
            com_x: t.finite(r, 1)?,
            com_y: t.finite(r, 2)?,
            l_tot: t.finite(r, 3)?,
        });
    }
    Ok((ids, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stimgen::{generate_stimulus_set, render};
    use proptest::prelude::*;
    use rand::Rng;

    fn canvas(w: usize, h: usize) -> Canvas {
        Canvas {
            width: w,
            height: h,
            deg_per_px: 1.0,
        }
    }

    #[test]
    fn luminosity_examples() {
        let mut img = StimulusImage::blank(canvas(8, 8));
        assert_eq!(total_luminosity(&img), 0);
        img.set(2, 3, 255);
        assert_eq!(total_luminosity(&img), 127);

        let mut rng = seeded(4);
        let img = StimulusImage {
            width: 8,
            height: 8,
            deg_per_px: 1.0,
            pixels: (0..64).map(|_| rng.random()).collect(),
        };
        let mut naive = 0i64;
        for i in 0..8 {
            for j in 0..8 {
                naive += img.get(i, j) as i64 - 128;
            }
        }
        assert_eq!(total_luminosity(&img), naive);
    }

    #[test]
    fn com_examples() {
        let mut img = StimulusImage::blank(canvas(12, 8));
        assert!(matches!(center_of_mass(&img), Err(Error::UndefinedCenterOfMass)));
        img.set(5, 3, 40);
        assert_eq!(center_of_mass(&img).unwrap(), (3.0, 5.0));

        let mut img = StimulusImage::blank(canvas(12, 8));
        img.set(2, 0, 200);
        img.set(2, 10, 56); // same |deviation| = 72, darker than background
        assert_eq!(center_of_mass(&img).unwrap().0, 5.0);
    }

    #[test]
    fn com_matches_weighted_mean_oracle() {
        let mut rng = seeded(8);
        for _ in 0..20 {
            let mut img = StimulusImage::blank(canvas(16, 10));
            for _ in 0..6 {
                let (i, j) = (rng.random_range(0..10), rng.random_range(0..16));
                img.set(i, j, rng.random());
            }
            if total_abs(&img) == 0.0 {
                continue;
            }
            let mut ws = 0.0;
            let (mut x, mut y) = (0.0, 0.0);
            for i in 0..10 {
                for j in 0..16 {
                    let w = (img.get(i, j) as f64 - 128.0).abs();
                    ws += w;
                    x += w * j as f64;
                    y += w * i as f64;
                }
            }
            let (cx, cy) = center_of_mass(&img).unwrap();
            assert!((cx - x / ws).abs() < 1e-12 && (cy - y / ws).abs() < 1e-12);
        }
    }

    fn total_abs(img: &StimulusImage) -> f64 {
        img.pixels.iter().map(|&v| (v as f64 - 128.0).abs()).sum()
    }

    #[test]
    fn binning_rules() {
        let s = ClassScheme::position([10.0, 20.0]).unwrap();
        let f = |x: f64, l: f64| PhotometricFeatures {
            com_x: x,
            com_y: 0.0,
            l_tot: l,
        };
        assert_eq!(s.label(&f(5.0, 0.0)), 0);
        assert_eq!(s.label(&f(10.0, 0.0)), 0); // tie goes low
        assert_eq!(s.label(&f(15.0, 0.0)), 1);
        assert_eq!(s.label(&f(25.0, 0.0)), 2);
        let c = ClassScheme::combined([10.0, 20.0], 100.0).unwrap();
        assert_eq!(c.label(&f(25.0, 101.0)), 5);
        assert_eq!(c.label(&f(5.0, 100.0)), 0);
        assert!(ClassScheme::position([20.0, 10.0]).is_err());
        assert!(ClassScheme::new(SchemeKind::Luminosity, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn quantile_cut_leaves_upper_tail() {
        let v: Vec<f64> = (0..1440).map(|i| i as f64).collect();
        let cut = quantile_cut(&v, 0.85).unwrap();
        assert_eq!(v.iter().filter(|&&x| x > cut).count(), 216);
    }

    #[test]
    fn combined_scheme_fills_six_classes_on_generated_set() {
        let c = Canvas::default();
        let feats: Vec<_> = generate_stimulus_set(1)
            .iter()
            .map(|p| extract_features(&render(p, c).unwrap()).unwrap())
            .collect();
        let lum: Vec<f64> = feats.iter().map(|f| f.l_tot).collect();
        let scheme = ClassScheme::combined(default_position_cuts(c), quantile_cut(&lum, 0.85).unwrap()).unwrap();
        let counts = bin_labels(&feats, &scheme).class_counts();
        assert!(counts.iter().all(|&n| n > 0), "{counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 1440);
    }

    proptest! {
        #[test]
        fn com_translation_equivariant(
            pts in proptest::collection::vec((0usize..10, 0usize..10, 0u8..=255), 1..8),
            dx in 0usize..6, dy in 0usize..6,
        ) {
            let mut a = StimulusImage::blank(canvas(16, 16));
            let mut b = StimulusImage::blank(canvas(16, 16));
            for (i, j, v) in pts {
                a.set(i, j, v);
                b.set(i + dy, j + dx, v);
            }
            prop_assume!(total_abs(&a) > 0.0);
            let (ax, ay) = center_of_mass(&a).unwrap();
            let (bx, by) = center_of_mass(&b).unwrap();
            prop_assert!((bx - ax - dx as f64).abs() < 1e-9);
            prop_assert!((by - ay - dy as f64).abs() < 1e-9);
        }

        #[test]
        fn luminosity_additive_on_disjoint_support(
            left in proptest::collection::vec(0u8..=255, 8),
            right in proptest::collection::vec(0u8..=255, 8),
        ) {
            let mut a = StimulusImage::blank(canvas(16, 1));
            let mut b = StimulusImage::blank(canvas(16, 1));
            let mut ab = StimulusImage::blank(canvas(16, 1));
            for j in 0..8 {
                a.set(0, j, left[j]);
                ab.set(0, j, left[j]);
                b.set(0, j + 8, right[j]);
                ab.set(0, j + 8, right[j]);
            }
            let bg = StimulusImage::blank(canvas(16, 1));
            prop_assert_eq!(total_luminosity(&a) + total_luminosity(&b) - total_luminosity(&bg), total_luminosity(&ab));
        }

        #[test]
        fn binning_monotone(x in -100.0f64..100.0, dx in 0.0f64..50.0, c1 in -50.0f64..0.0, c2 in 0.0f64..50.0) {
            prop_assume!(c1 < c2);
            let s = ClassScheme::position([c1, c2]).unwrap();
            let f = |x| PhotometricFeatures { com_x: x, com_y: 0.0, l_tot: 0.0 };
            prop_assert!(s.label(&f(x + dx)) >= s.label(&f(x)));
        }
    }
}
