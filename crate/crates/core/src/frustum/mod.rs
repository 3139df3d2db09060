//! Points inside a 2D instance mask, density-adaptive depth bins over them,
//! position embeddings, and a rule-based foreground filter.

mod bins;
mod embed;

use serde::{Deserialize, Serialize};

use crate::config::FrustumConfig;
use crate::geometry::{project_points, CameraCalib, InstanceMask, PointCloud};

pub use bins::{
    adaptive_bins, density_scores, kde_density, silverman_bandwidth, split_bins, DepthBins, EMPTY_BIN_WIDTH,
    MIN_BANDWIDTH,
};
pub use embed::{boundary_distance, sinusoidal_embed};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FrustumError {
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("density {0} is not positive")]
    NonPositiveDensity(usize),
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("empty input")]
    Empty,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid frustum: {0}")]
    Invalid(String),
}

/// Lidar points whose projection falls inside one instance mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    /// Indices into the frame cloud.
    pub point_indices: Vec<usize>,
    pub mask: InstanceMask,
    /// Forward depth (m) of each point.
    pub depths: Vec<f64>,
    /// Rounded pixel of each point.
    pub pixels: Vec<(u32, u32)>,
    /// Mask bounding-box `(width, height)` in pixels.
    pub mask_size: (u32, u32),
}

impl Frustum {
    pub fn new(
        point_indices: Vec<usize>,
        mask: InstanceMask,
        depths: Vec<f64>,
        pixels: Vec<(u32, u32)>,
    ) -> Result<Self, FrustumError> {
        let n = point_indices.len();
        for len in [depths.len(), pixels.len()] {
            if len != n {
                return Err(FrustumError::LengthMismatch { expected: n, got: len });
            }
        }
        if let Some(i) = depths.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(FrustumError::Invalid(format!("point {i} has depth {}", depths[i])));
        }
        if let Some(p) = pixels.iter().find(|p| !mask.pixels.contains(**p)) {
            return Err(FrustumError::Invalid(format!("pixel {p:?} outside the mask")));
        }
        let mask_size = mask.extent();
        Ok(Frustum {
            point_indices,
            mask,
            depths,
            pixels,
            mask_size,
        })
    }

    /// Gathers the sensor-frame points of `cloud` that project into `mask`.
    pub fn from_cloud(cloud: &PointCloud, mask: &InstanceMask, calib: &CameraCalib) -> Frustum {
        let mut idx = Vec::new();
        let mut depths = Vec::new();
        let mut pixels = Vec::new();
        for (i, proj) in project_points(cloud, calib).iter().enumerate() {
            let Some((u, v)) = proj.pixel() else { continue };
            if u < 0 || v < 0 || u > u32::MAX as i64 || v > u32::MAX as i64 {
                continue;
            }
            let px = (u as u32, v as u32);
            if mask.pixels.contains(px) {
                idx.push(i);
                depths.push(proj.depth);
                pixels.push(px);
            }
        }
        Frustum::new(idx, mask.clone(), depths, pixels).expect("filtered points satisfy the invariants")
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Adaptive bins over the sorted depths plus the sort order
    /// (`order[k]` is the point at sorted position `k`).
    pub fn depth_bins(&self, cfg: &FrustumConfig) -> Result<(DepthBins, Vec<usize>), FrustumError> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.depths[a].total_cmp(&self.depths[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| self.depths[i]).collect();
        Ok((adaptive_bins(&sorted, cfg.bandwidth, cfg.bins)?, order))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub foreground: Vec<bool>,
    pub scores: Vec<f64>,
}

impl SegmentationResult {
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Self {
        let foreground = scores.iter().map(|s| *s >= threshold).collect();
        SegmentationResult { foreground, scores }
    }

    pub fn foreground_indices(&self) -> Vec<usize> {
        (0..self.scores.len()).filter(|&i| self.foreground[i]).collect()
    }
}

/// Per-point factors of the foreground score.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundTerms {
    /// Population of the point's depth group relative to the largest group.
    pub population: Vec<f64>,
    /// Distance to the mask edge relative to the mask half-extent.
    pub boundary: Vec<f64>,
    /// Agreement between the mask width and the class prior at the point's depth.
    pub perspective: Vec<f64>,
}

/// Group id per sorted depth. Consecutive depths more than `gap` apart start
/// a new group. Cutting the adaptive bins at such gaps and joining
/// neighbouring bins across smaller ones gives the same groups.
fn depth_groups(sorted: &[f64], gap: f64) -> Vec<usize> {
    let mut group = vec![0; sorted.len()];
    for k in 1..sorted.len() {
        group[k] = group[k - 1] + (sorted[k] - sorted[k - 1] > gap) as usize;
    }
    group
}

pub fn foreground_terms(frustum: &Frustum, calib: &CameraCalib, cfg: &FrustumConfig) -> Result<ForegroundTerms, FrustumError> {
    if frustum.is_empty() {
        return Err(FrustumError::Empty);
    }
    let n = frustum.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| frustum.depths[a].total_cmp(&frustum.depths[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| frustum.depths[i]).collect();
    let groups = depth_groups(&sorted, cfg.group_gap);
    let mut pop = vec![0usize; groups.last().map_or(0, |g| g + 1)];
    for &g in &groups {
        pop[g] += 1;
    }
    let top = *pop.iter().max().expect("non-empty") as f64;
    let mut population = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        population[i] = pop[groups[k]] as f64 / top;
    }

    let dist = boundary_distance(&frustum.mask);
    let (w, h) = frustum.mask_size;
    let half = 0.5 * w.min(h) as f64;
    let boundary = frustum
        .pixels
        .iter()
        .map(|&p| {
            let d = dist[frustum.mask.pixels.index_of(p).expect("pixel in mask")] as f64;
            (cfg.boundary_gain * d / half).min(1.0)
        })
        .collect();

    let prior = cfg.prior_width(frustum.mask.class);
    let (lo, hi) = cfg.perspective_band;
    let perspective = frustum
        .depths
        .iter()
        .map(|&d| {
            let ratio = w as f64 * d / calib.fx() / prior;
            if ratio < lo {
                ratio / lo
            } else if ratio > hi {
                hi / ratio
            } else {
                1.0
            }
        })
        .collect();
    Ok(ForegroundTerms {
        population,
        boundary,
        perspective,
    })
}

/// Rule-based foreground scoring: the product of the three
/// [`ForegroundTerms`], clipped to `[0, 1]` and thresholded.
pub fn foreground_filter(frustum: &Frustum, calib: &CameraCalib, cfg: &FrustumConfig) -> Result<SegmentationResult, FrustumError> {
    let t = foreground_terms(frustum, calib, cfg)?;
    let scores = (0..frustum.len())
        .map(|i| (t.population[i] * t.boundary[i] * t.perspective[i]).clamp(0.0, 1.0))
        .collect();
    Ok(SegmentationResult::from_scores(scores, cfg.threshold))
}
