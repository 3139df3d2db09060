//! Depth, segmentation and loss metrics.

use serde::{Deserialize, Serialize};

use crate::geometry::InstanceMask;
use crate::gtgen::VisibleDepthGt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no pixel is valid in both maps")]
    NoOverlap,
    #[error("depth maps are {a:?} and {b:?}")]
    SizeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("label {label} at {index} is not below {classes}")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("binary label {0} is not 0 or 1")]
    NotBinary(f64),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("depth {0} cannot be stored")]
    BadDepth(f64),
}

/// One named scalar and how many elements it aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub support: usize,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, support: usize) -> Self {
        MetricReport {
            name: name.into(),
            value,
            support,
        }
    }

    /// Single-line JSON record.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Dense per-pixel depth in metres, row-major; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn empty(width: u32, height: u32) -> DepthMap {
        DepthMap {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.data[self.index(u, v)];
        (d > 0.0 && d.is_finite()).then_some(d)
    }

    pub fn set(&mut self, u: u32, v: u32, depth: f64) -> Result<(), MetricsError> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(MetricsError::BadDepth(depth));
        }
        let i = self.index(u, v);
        self.data[i] = depth;
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0 && d.is_finite()).count()
    }

    /// Writes every pixel of `gt` into the map, keeping the nearer depth
    /// where objects overlap.
    pub fn paint(&mut self, gt: &VisibleDepthGt) -> Result<(), MetricsError> {
        for ((u, v), d) in gt.iter() {
            if u >= self.width || v >= self.height {
                continue;
            }
            let keep = self.get(u, v).is_none_or(|e| d < e);
            if keep {
                self.set(u, v, d)?;
            }
        }
        Ok(())
    }
}

fn squared_errors(pred: &DepthMap, gt: &DepthMap, mask: Option<&InstanceMask>) -> Result<(f64, usize), MetricsError> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(MetricsError::SizeMismatch {
            a: (pred.width, pred.height),
            b: (gt.width, gt.height),
        });
    }
    let mut se = 0.0;
    let mut n = 0;
    let mut add = |u: u32, v: u32| {
        if let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) {
            se += (p - g) * (p - g);
            n += 1;
        }
    };
    match mask {
        Some(m) => m
            .pixels
            .iter()
            .filter(|&(u, v)| u < gt.width && v < gt.height)
            .for_each(|(u, v)| add(u, v)),
        None => (0..gt.height).for_each(|v| (0..gt.width).for_each(|u| add(u, v))),
    }
    Ok((se, n))
}

/// Root mean squared difference over pixels valid in both maps, restricted
/// to `mask` when given. `support` is the number of pixels compared.
pub fn depth_rmse(pred: &DepthMap, gt: &DepthMap, mask: Option<&InstanceMask>) -> Result<MetricReport, MetricsError> {
    let (se, n) = squared_errors(pred, gt, mask)?;
    if n == 0 {
        return Err(MetricsError::NoOverlap);
    }
    let name = if mask.is_some() { "rmse_masked" } else { "rmse" };
    Ok(MetricReport::new(name, (se / n as f64).sqrt(), n))
}

/// Foreground RMSE over the union of `masks`, pooled per pixel or averaged
/// per object. Objects without overlapping pixels are left out; `support` is
/// the pixel count (per pixel) or the object count (per object).
pub fn foreground_rmse(
    pred: &DepthMap,
    gt: &DepthMap,
    masks: &[InstanceMask],
    per_object: bool,
) -> Result<MetricReport, MetricsError> {
    if per_object {
        let mut sum = 0.0;
        let mut k = 0;
        for m in masks {
            let (se, n) = squared_errors(pred, gt, Some(m))?;
            if n > 0 {
                sum += (se / n as f64).sqrt();
                k += 1;
            }
        }
        if k == 0 {
            return Err(MetricsError::NoOverlap);
        }
        return Ok(MetricReport::new("rmse_foreground_per_object", sum / k as f64, k));
    }
    let mut pixels: Vec<(u32, u32)> = masks.iter().flat_map(|m| m.pixels.iter()).collect();
    pixels.sort_unstable();
    pixels.dedup();
    let mut se = 0.0;
    let mut n = 0;
    for (u, v) in pixels {
        if u >= gt.width || v >= gt.height {
            continue;
        }
        if let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) {
            se += (p - g) * (p - g);
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoOverlap);
    }
    Ok(MetricReport::new("rmse_foreground", (se / n as f64).sqrt(), n))
}

/// Per-class intersection over union and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub mean: f64,
    /// `None` for classes absent from both labelings.
    pub per_class: Vec<Option<f64>>,
    /// Classes left out of the mean.
    pub skipped: Vec<usize>,
}

/// `mean_c TP_c / (TP_c + FP_c + FN_c)` over classes present in either
/// labeling.
pub fn mean_iou(pred: &[usize], gt: &[usize], classes: usize) -> Result<IouReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        for label in [p, g] {
            if label >= classes {
                return Err(MetricsError::LabelOutOfRange { index: i, label, classes });
            }
        }
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let den = tp[c] + fp[c] + fn_[c];
            (den > 0).then(|| tp[c] as f64 / den as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(IouReport {
        mean: present.iter().sum::<f64>() / present.len() as f64,
        skipped: (0..classes).filter(|&c| per_class[c].is_none()).collect(),
        per_class,
    })
}

/// Mean binary cross-entropy of logits against 0/1 labels,
/// `max(x, 0) − x·y + ln(1 + e^(−|x|))` per element.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    if logits.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for (&x, &y) in logits.iter().zip(labels) {
        if y != 0.0 && y != 1.0 {
            return Err(MetricsError::NotBinary(y));
        }
        sum += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
    }
    Ok(sum / logits.len() as f64)
}

/// `L_seg + λ_m · L_mesh`.
pub fn total_loss(seg: f64, mesh: f64, lambda_mesh: f64) -> f64 {
    seg + lambda_mesh * mesh
}

/// Visible-part pixels per full-shape point: `Σ vp / Σ fs`.
pub fn vp_point_ratio_counts(vp: &[usize], fs: &[usize]) -> Result<f64, MetricsError> {
    if vp.len() != fs.len() {
        return Err(MetricsError::LengthMismatch(vp.len(), fs.len()));
    }
    let den: usize = fs.iter().sum();
    if den == 0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(vp.iter().sum::<usize>() as f64 / den as f64)
}

pub fn vp_point_ratio(vp: &[VisibleDepthGt], fs: &[usize]) -> Result<f64, MetricsError> {
    let counts: Vec<usize> = vp.iter().map(|g| g.depths.len()).collect();
    vp_point_ratio_counts(&counts, fs)
}
