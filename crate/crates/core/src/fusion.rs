//! Late fusion of text and image class distributions and the validation
//! sweep over the modality weight.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::{Corpus, Document};
use crate::emoji::ClassIndex;
use crate::metrics::{msap, EvalBatch};
use crate::scores::{ScoreVector, Scorer};
use crate::{Error, Result};

/// Weight of the text distribution; the image distribution gets `1 - alpha`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("fusion weight {alpha} outside [0, 1]")));
        }
        Ok(FusionWeight(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `alpha * p_txt + (1 - alpha) * p_img`
pub fn fuse(p_txt: &ScoreVector, p_img: &ScoreVector, alpha: FusionWeight) -> Result<ScoreVector> {
    if p_txt.len() != p_img.len() {
        return Err(Error::ShapeMismatch {
            what: "fused score vectors",
            expected: p_txt.len(),
            found: p_img.len(),
        });
    }
    let a = alpha.0;
    Ok(ScoreVector::new(
        p_txt
            .values()
            .iter()
            .zip(p_img.values())
            .map(|(t, i)| a * t + (1.0 - a) * i)
            .collect(),
    ))
}

/// An ordered list of fusion weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaGrid(Vec<FusionWeight>);

impl AlphaGrid {
    pub fn new(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Empty("alpha grid"));
        }
        alphas
            .iter()
            .map(|&a| FusionWeight::new(a))
            .collect::<Result<Vec<_>>>()
            .map(AlphaGrid)
    }

    /// `start, start + step, ...` up to and including `end`. Points are
    /// rounded to 1e-9 so that `0:1:0.05` yields exactly 0.15 and not
    /// 0.15000000000000002.
    pub fn range(start: f64, end: f64, step: f64) -> Result<Self> {
        let in_unit = |a: f64| (0.0..=1.0).contains(&a);
        if !(step.is_finite() && step > 0.0) || !(in_unit(start) && in_unit(end) && start <= end) {
            return Err(Error::invalid(format!("bad alpha range {start}:{end}:{step}")));
        }
        let count = ((end - start) / step + 1e-9).floor() + 1.0;
        if count > MAX_GRID_POINTS as f64 {
            return Err(Error::invalid(format!("alpha range {start}:{end}:{step} has more than {MAX_GRID_POINTS} points")));
        }
        let count = count as usize;
        let alphas: Vec<f64> = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect();
        Self::new(&alphas)
    }

    pub fn alphas(&self) -> impl Iterator<Item = FusionWeight> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Upper bound on the points an alpha range may expand to.
pub const MAX_GRID_POINTS: usize = 100_001;

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid::range(0.0, 1.0, 0.05).unwrap()
    }
}

impl FromStr for AlphaGrid {
    type Err = Error;

    /// `start:end:step` or a comma-separated list of weights.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad alpha value {t:?}")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [start, end, step] => AlphaGrid::range(num(start)?, num(end)?, num(step)?),
            [list] => AlphaGrid::new(&list.split(',').map(num).collect::<Result<Vec<_>>>()?),
            _ => Err(Error::invalid(format!("bad alpha grid {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub best_alpha: f64,
    pub best_msap: f64,
    /// `(alpha, msAP)` in grid order.
    pub curve: Vec<(f64, f64)>,
}

impl SweepResult {
    /// Two tab-separated columns with a header line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("alpha\tmsap\n");
        for (a, m) in &self.curve {
            let _ = writeln!(out, "{a:.4}\t{m:.6}");
        }
        out
    }
}

/// Evaluates msAP at every grid point on precomputed score vectors. The best
/// alpha is the smallest one attaining the maximum.
pub fn sweep_alpha_scores(
    text: &[ScoreVector],
    image: &[ScoreVector],
    labels: &[Vec<ClassIndex>],
    classes: usize,
    grid: &AlphaGrid,
) -> Result<SweepResult> {
    if text.len() != image.len() || text.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "sweep inputs",
            expected: text.len(),
            found: image.len().min(labels.len()),
        });
    }
    if text.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut curve = Vec::with_capacity(grid.len());
    for alpha in grid.alphas() {
        let fused = text
            .iter()
            .zip(image)
            .map(|(t, i)| fuse(t, i, alpha))
            .collect::<Result<Vec<_>>>()?;
        curve.push((alpha.value(), msap(&EvalBatch::from_labels(&fused, labels, classes)?)?));
    }
    let (best_alpha, best_msap) = curve
        .iter()
        .copied()
        .reduce(|best, p| {
            if p.1 > best.1 || (p.1 == best.1 && p.0 < best.0) {
                p
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(SweepResult {
        best_alpha,
        best_msap,
        curve,
    })
}

/// Scores `val` with both models and sweeps the grid. Every document needs
/// both modalities.
pub fn sweep_alpha(
    val: &Corpus,
    text_model: &dyn Scorer,
    image_model: &dyn Scorer,
    grid: &AlphaGrid,
) -> Result<SweepResult> {
    let score_all = |m: &dyn Scorer| {
        val.documents()
            .iter()
            .map(|d| m.score(d))
            .collect::<Result<Vec<_>>>()
    };
    let text = score_all(text_model)?;
    let image = score_all(image_model)?;
    sweep_alpha_scores(&text, &image, &val.labels(), val.num_classes(), grid)
}

pub struct FusedScorer<T, I> {
    pub text: T,
    pub image: I,
    pub alpha: FusionWeight,
}

impl<T: Scorer, I: Scorer> Scorer for FusedScorer<T, I> {
    fn tag(&self) -> String {
        format!("fused(alpha={},{},{})", self.alpha.value(), self.text.tag(), self.image.tag())
    }

    fn num_classes(&self) -> usize {
        self.text.num_classes()
    }

    fn score(&self, doc: &Document) -> Result<ScoreVector> {
        fuse(&self.text.score(doc)?, &self.image.score(doc)?, self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec())
    }

    #[test]
    fn hand_arithmetic() {
        let f = fuse(&sv(&[0.5, 0.3, 0.2]), &sv(&[0.1, 0.8, 0.1]), FusionWeight::new(0.6).unwrap()).unwrap();
        for (a, b) in f.values().iter().zip([0.34, 0.50, 0.16]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_are_exact() {
        let t = sv(&[0.1, 0.2, 0.7]);
        let i = sv(&[0.3, 0.3, 0.4]);
        assert_eq!(fuse(&t, &i, FusionWeight::new(1.0).unwrap()).unwrap(), t);
        assert_eq!(fuse(&t, &i, FusionWeight::new(0.0).unwrap()).unwrap(), i);
    }

    #[test]
    fn errors() {
        assert!(FusionWeight::new(1.01).is_err());
        assert!(FusionWeight::new(f64::NAN).is_err());
        assert!(fuse(&sv(&[1.0]), &sv(&[0.5, 0.5]), FusionWeight::new(0.5).unwrap()).is_err());
    }

    #[test]
    fn grid_parsing() {
        let g: AlphaGrid = "0:1:0.05".parse().unwrap();
        let a: Vec<f64> = g.alphas().map(FusionWeight::value).collect();
        assert_eq!(a.len(), 21);
        assert_eq!(a[3], 0.15);
        assert_eq!(a[20], 1.0);
        assert_eq!(g, AlphaGrid::default());
        let g: AlphaGrid = "0, 0.6,1".parse().unwrap();
        assert_eq!(g.len(), 3);
        for bad in ["", "0:1", "0:1:0", "1:0:0.1", "0,2", "a:b:c", "0:1:0.1:3", "0:1:1e-300", "-1e300:1:0.5", "nan:1:0.1"] {
            assert!(bad.parse::<AlphaGrid>().is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_prefers_better_modality_and_smaller_ties() {
        let labels = vec![vec![0], vec![1]];
        let good = vec![sv(&[0.9, 0.1]), sv(&[0.2, 0.8])];
        let bad = vec![sv(&[0.1, 0.9]), sv(&[0.8, 0.2])];
        let grid = AlphaGrid::new(&[0.0, 1.0]).unwrap();
        let r = sweep_alpha_scores(&good, &bad, &labels, 2, &grid).unwrap();
        assert_eq!(r.best_alpha, 1.0);
        let r = sweep_alpha_scores(&good, &good, &labels, 2, &grid).unwrap();
        assert_eq!(r.best_alpha, 0.0);
        let grid = AlphaGrid::new(&[1.0, 0.0]).unwrap();
        let r = sweep_alpha_scores(&good, &good, &labels, 2, &grid).unwrap();
        assert_eq!(r.best_alpha, 0.0);
        assert_eq!(r.to_table(), "alpha\tmsap\n1.0000\t1.000000\n0.0000\t1.000000\n");
    }
}
