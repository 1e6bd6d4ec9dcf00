use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Binary ground truth; `true` marks forged pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMask {
    width: usize,
    height: usize,
    forged: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(width: usize, height: usize, forged: Vec<bool>) -> Result<Self> {
        if forged.len() != width * height {
            return Err(Error::invalid(format!(
                "mask has {} pixels, expected {width}x{height}",
                forged.len()
            )));
        }
        Ok(GroundTruthMask { width, height, forged })
    }

    /// Any nonzero sample counts as forged.
    pub fn from_image(img: &GrayImage) -> Self {
        GroundTruthMask {
            width: img.width(),
            height: img.height(),
            forged: img.samples().iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&GrayImage::load(path)?))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn forged(&self) -> &[bool] {
        &self.forged
    }

    pub fn positives(&self) -> usize {
        self.forged.iter().filter(|&&f| f).count()
    }

    pub fn inverted(&self) -> Self {
        GroundTruthMask {
            forged: self.forged.iter().map(|f| !f).collect(),
            ..self.clone()
        }
    }

    /// Both classes present.
    pub fn is_degenerate(&self) -> bool {
        let p = self.positives();
        p == 0 || p == self.forged.len()
    }
}

fn check_dims(heatmap: &GrayImage, mask: &GroundTruthMask) -> Result<()> {
    if heatmap.dims() != mask.dims() {
        return Err(Error::invalid(format!(
            "heatmap is {}x{} but mask is {}x{}",
            heatmap.width(),
            heatmap.height(),
            mask.width,
            mask.height
        )));
    }
    Ok(())
}

/// `2 TP / (2 TP + FN + FP)`, 0 when the denominator is 0.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fn_ + fp;
    if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// F1 of the binarization `heatmap >= t` against `mask`.
pub fn f1_at_threshold(heatmap: &GrayImage, mask: &GroundTruthMask, t: f64) -> Result<f64> {
    check_dims(heatmap, mask)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&h, &m) in heatmap.samples().iter().zip(&mask.forged) {
        match (h >= t, m) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_score(tp, fp, fn_))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Compared against the mask as given.
    Regular,
    /// Compared against the complement of the mask.
    Inverted,
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Orientation::Regular => "regular",
            Orientation::Inverted => "inverted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxF1 {
    pub f1: f64,
    pub threshold: f64,
    pub orientation: Orientation,
}

/// Number of evenly spaced thresholds between the heatmap extremes, used
/// for plotting sweeps.
pub const UNIFORM_LEVELS: usize = 256;

/// `UNIFORM_LEVELS` thresholds evenly spaced over `[min, max]`.
pub fn uniform_thresholds(heatmap: &GrayImage) -> Vec<f64> {
    let (lo, hi) = heatmap.min_max();
    (0..UNIFORM_LEVELS)
        .map(|i| lo + (hi - lo) * i as f64 / (UNIFORM_LEVELS - 1) as f64)
        .collect()
}

/// Maximum F1 over every threshold and both mask orientations.
///
/// Every distinct heatmap value is tried as a threshold, which covers every
/// binarization a threshold can produce. Returns `None` when the mask holds
/// a single class.
pub fn max_f1(heatmap: &GrayImage, mask: &GroundTruthMask) -> Result<Option<MaxF1>> {
    check_dims(heatmap, mask)?;
    if mask.is_degenerate() {
        return Ok(None);
    }
    if heatmap.samples().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("heatmap has non-finite scores"));
    }
    let mut order: Vec<(f64, bool)> = heatmap
        .samples()
        .iter()
        .copied()
        .zip(mask.forged.iter().copied())
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = mask.positives();
    let neg = order.len() - pos;
    let mut best = MaxF1 {
        f1: -1.0,
        threshold: order[0].0,
        orientation: Orientation::Regular,
    };
    let (mut above_pos, mut above_neg) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                above_pos += 1;
            } else {
                above_neg += 1;
            }
            i += 1;
        }
        let regular = f1_score(above_pos, above_neg, pos - above_pos);
        let inverted = f1_score(above_neg, above_pos, neg - above_neg);
        for (f1, orientation) in [(regular, Orientation::Regular), (inverted, Orientation::Inverted)] {
            if f1 > best.f1 {
                best = MaxF1 {
                    f1,
                    threshold: t,
                    orientation,
                };
            }
        }
    }
    Ok(Some(best))
}

/// Nearest-rank 99.5th percentile: the value at ascending index
/// `ceil(0.995 N) - 1`.
pub fn detection_statistic(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("empty heatmap"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (995 * n).div_ceil(1000);
    Ok(sorted[rank.max(1) - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub auc: f64,
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score.
    pub points: Vec<(f64, f64)>,
}

/// Probability that a fake score exceeds a real one, ties counting one half,
/// and the ROC curve with "score >= t" predicting fake.
pub fn roc_auc(fake: &[f64], real: &[f64]) -> Result<RocCurve> {
    if fake.is_empty() || real.is_empty() {
        return Err(Error::invalid(format!(
            "AUC needs both classes; got {} fake and {} real scores",
            fake.len(),
            real.len()
        )));
    }
    if fake.iter().chain(real).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite detection score"));
    }
    let mut all: Vec<(f64, bool)> = fake
        .iter()
        .map(|&s| (s, true))
        .chain(real.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (nf, nr) = (fake.len() as f64, real.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // trapezoid; within a tie group this counts each fake/real pair as 1/2
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / nr, tp as f64 / nf));
    }
    Ok(RocCurve {
        auc: area / (nf * nr),
        points,
    })
}
