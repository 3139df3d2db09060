use serde::{Deserialize, Serialize};

use super::FrustumError;

/// Smallest bandwidth (m) returned by [`silverman_bandwidth`].
pub const MIN_BANDWIDTH: f64 = 1e-2;

/// Spacing (m) of the boundaries of empty trailing bins past the last depth.
pub const EMPTY_BIN_WIDTH: f64 = 1e-3;

/// Scores within this of 1 count as a completed bin.
const BIN_MASS_TOLERANCE: f64 = 1e-9;

/// Gaussian kernel density at every sample:
/// `f(p_i) = 1/(n h) Σ_j φ((p_i − p_j)/h)`.
pub fn kde_density(depths: &[f64], h: f64) -> Result<Vec<f64>, FrustumError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(FrustumError::NonPositiveBandwidth(h));
    }
    if depths.is_empty() {
        return Err(FrustumError::Empty);
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * depths.len() as f64 * h);
    let inv = 1.0 / (2.0 * h * h);
    Ok(depths
        .iter()
        .map(|&x| depths.iter().map(|&y| (-(x - y) * (x - y) * inv).exp()).sum::<f64>() * norm)
        .collect())
}

/// Silverman's rule `1.06 σ n^(−1/5)`, floored at [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(depths: &[f64]) -> f64 {
    let n = depths.len() as f64;
    if depths.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = depths.iter().sum::<f64>() / n;
    let var = depths.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    (1.06 * var.sqrt() * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

/// `H · softmax(f^(−1/2))`: sparse samples get the larger share.
pub fn density_scores(densities: &[f64], bins: usize) -> Result<Vec<f64>, FrustumError> {
    if bins == 0 {
        return Err(FrustumError::ZeroBins);
    }
    if densities.is_empty() {
        return Err(FrustumError::Empty);
    }
    if let Some(i) = densities.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(FrustumError::NonPositiveDensity(i));
    }
    let g: Vec<f64> = densities.iter().map(|d| d.powf(-0.5)).collect();
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = g.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.iter().map(|x| bins as f64 * x / total).collect())
}

/// Contiguous depth bins over a sorted sample.
///
/// Bin 0 is `[b₀, b₁]`, bin `k > 0` is `(b_k, b_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBins {
    pub boundaries: Vec<f64>,
    /// Bin of each input sample, non-decreasing.
    pub assignment: Vec<usize>,
    /// Trailing bins that received no sample.
    pub empty_bins: usize,
}

impl DepthBins {
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, bin: usize, depth: f64) -> bool {
        let (lo, hi) = (self.boundaries[bin], self.boundaries[bin + 1]);
        depth <= hi && (depth > lo || (bin == 0 && depth == lo))
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.boundaries[bin + 1] - self.boundaries[bin]
    }

    /// Samples per bin.
    pub fn populations(&self) -> Vec<usize> {
        let mut pop = vec![0; self.len()];
        for &b in &self.assignment {
            pop[b] += 1;
        }
        pop
    }
}

/// Accumulates `scores` in depth order and closes a bin each time the
/// running mass reaches 1, carrying the excess into the next bin. The closing
/// depth becomes the boundary. A bin never closes between equal depths, and
/// the last bin takes whatever remains. With fewer distinct depths than bins
/// every depth gets its own bin and the rest stay empty.
pub fn split_bins(depths: &[f64], scores: &[f64], bins: usize) -> Result<DepthBins, FrustumError> {
    if bins == 0 {
        return Err(FrustumError::ZeroBins);
    }
    if depths.is_empty() {
        return Err(FrustumError::Empty);
    }
    if scores.len() != depths.len() {
        return Err(FrustumError::LengthMismatch {
            expected: depths.len(),
            got: scores.len(),
        });
    }
    if let Some(i) = depths.iter().position(|d| !d.is_finite()) {
        return Err(FrustumError::Invalid(format!("depth {i} is not finite")));
    }
    if depths.windows(2).any(|w| w[1] < w[0]) {
        return Err(FrustumError::Invalid("depths must be sorted".into()));
    }
    let n = depths.len();
    let one_per_bin = n < bins;
    let mut boundaries = vec![depths[0]];
    let mut assignment = Vec::with_capacity(n);
    let mut bin = 0;
    let mut mass = 0.0;
    for i in 0..n {
        assignment.push(bin);
        mass += scores[i];
        let can_close = bin + 1 < bins && i + 1 < n && depths[i + 1] > depths[i];
        if can_close && (one_per_bin || mass >= 1.0 - BIN_MASS_TOLERANCE) {
            boundaries.push(depths[i]);
            mass = (mass - 1.0).max(0.0);
            bin += 1;
        }
    }
    let last = depths[n - 1];
    boundaries.push(last);
    let filled = boundaries.len() - 1;
    // first bin closed on its first depth
    if boundaries[1] <= boundaries[0] {
        boundaries[0] -= EMPTY_BIN_WIDTH;
    }
    let top = boundaries[filled];
    for k in 1..=bins - filled {
        boundaries.push(top + k as f64 * EMPTY_BIN_WIDTH);
    }
    Ok(DepthBins {
        boundaries,
        assignment,
        empty_bins: bins - filled,
    })
}

/// Kernel density, scores and bins in one call. `depths` must be sorted.
pub fn adaptive_bins(depths: &[f64], bandwidth: Option<f64>, bins: usize) -> Result<DepthBins, FrustumError> {
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(depths));
    let scores = density_scores(&kde_density(depths, h)?, bins)?;
    split_bins(depths, &scores, bins)
}
