//! Pipeline settings. Every key has a default; a TOML file only needs the keys
//! it overrides.
//!
//! ```toml
//! [gt]
//! alpha_threshold_px = 2000
//! alpha_small = 1.2
//! alpha_large = 1.05
//!
//! [densify]
//! omega_edge = 2.0
//! omega_normal = 2.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::ObjectClass;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// Sign convention for the mask-IOU term of the match score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouTerm {
    /// `ε·(1 − IOU)`: better overlap lowers the score.
    Complement,
    /// `ε·IOU`: better overlap raises the score.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtConfig {
    /// Masks with fewer pixels than this use `alpha_small`.
    pub alpha_threshold_px: usize,
    pub alpha_small: f64,
    pub alpha_large: f64,
    /// Expansion applied per retry when some pixel ray misses the hull.
    pub retry_factor: f64,
    pub max_retries: u32,
    pub iou_term: IouTerm,
    /// The IOU term is active only when the query object has at most this
    /// many points.
    pub iou_max_points: usize,
    /// Alpha-shape radius as a multiple of the median nearest-neighbour spacing.
    pub alpha_radius_factor: f64,
    /// Clouds smaller than this are reconstructed by their convex hull.
    pub hull_below_points: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        GtConfig {
            alpha_threshold_px: 2000,
            alpha_small: 1.2,
            alpha_large: 1.05,
            retry_factor: 1.1,
            max_retries: 5,
            iou_term: IouTerm::Complement,
            iou_max_points: 10,
            alpha_radius_factor: 2.0,
            hull_below_points: 30,
        }
    }
}

impl GtConfig {
    /// Initial mesh expansion for a mask of `pixels` pixels.
    pub fn initial_alpha(&self, pixels: usize) -> f64 {
        if pixels < self.alpha_threshold_px {
            self.alpha_small
        } else {
            self.alpha_large
        }
    }
}

/// Minimum point counts for pool admission; a sample needs strictly more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub car_min_points: usize,
    pub pedestrian_min_points: usize,
    /// Optional admission filter on label/prediction mask agreement.
    pub mask_iou_min: Option<f64>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            car_min_points: 20,
            pedestrian_min_points: 10,
            mask_iou_min: None,
        }
    }
}

impl PoolConfig {
    pub fn min_points(&self, class: ObjectClass) -> usize {
        match class {
            ObjectClass::Car => self.car_min_points,
            ObjectClass::Pedestrian => self.pedestrian_min_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrustumConfig {
    /// Number of depth bins `H`.
    pub bins: usize,
    /// KDE bandwidth in meters; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    /// Sinusoidal embedding levels `L`.
    pub embed_levels: usize,
    pub threshold: f64,
    /// Bins separated by more than this depth gap (m) form separate groups.
    pub group_gap: f64,
    pub car_width: f64,
    pub pedestrian_width: f64,
    /// Accepted ratio band between observed and expected mask width.
    pub perspective_band: (f64, f64),
    /// Edge distance, as a fraction of the mask half-extent, is multiplied
    /// by this before clipping to 1.
    pub boundary_gain: f64,
}

impl Default for FrustumConfig {
    fn default() -> Self {
        FrustumConfig {
            bins: 8,
            bandwidth: None,
            embed_levels: 10,
            threshold: 0.5,
            group_gap: 2.0,
            car_width: 1.8,
            pedestrian_width: 0.6,
            perspective_band: (0.3, 3.0),
            boundary_gain: 2.0,
        }
    }
}

impl FrustumConfig {
    pub fn prior_width(&self, class: ObjectClass) -> f64 {
        match class {
            ObjectClass::Car => self.car_width,
            ObjectClass::Pedestrian => self.pedestrian_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    /// Per-stage MSE weights, coarse to fine.
    pub stage_weights: [f64; 3],
    /// Edge-length weight `ω₁`.
    pub omega_edge: f64,
    /// Normal-consistency weight `ω₂`.
    pub omega_normal: f64,
    /// Weight of the mesh loss in the total loss.
    pub lambda_mesh: f64,
    /// Anchor chunks `η`.
    pub chunks: usize,
    /// Feature channels `c`.
    pub channels: usize,
    pub max_iters: usize,
    /// Initial step (m) of the largest depth update.
    pub step: f64,
    pub max_halvings: u32,
    /// Stop when the relative loss decrease of an accepted step is below this.
    pub tolerance: f64,
    /// Fractions kept at the middle and coarse stage.
    pub stage_ratios: (f64, f64),
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            stage_weights: [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0],
            omega_edge: 2.0,
            omega_normal: 2.0,
            lambda_mesh: 1.0,
            chunks: 4,
            channels: 32,
            max_iters: 2000,
            step: 0.1,
            max_halvings: 20,
            tolerance: 1e-10,
            stage_ratios: (0.5, 0.2),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Average foreground RMSE per object instead of per pixel.
    pub per_object: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gt: GtConfig,
    pub pool: PoolConfig,
    pub frustum: FrustumConfig,
    pub densify: DensifyConfig,
    pub eval: EvalConfig,
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            key,
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn non_negative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            key,
            reason: format!("must be non-negative, got {v}"),
        })
    }
}

fn at_least_one(key: &'static str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            key,
            reason: "must be at least 1".into(),
        })
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.gt;
        at_least_one("gt.alpha_threshold_px", g.alpha_threshold_px)?;
        positive("gt.alpha_small", g.alpha_small)?;
        positive("gt.alpha_large", g.alpha_large)?;
        if !(g.retry_factor > 1.0 && g.retry_factor.is_finite()) {
            return Err(ConfigError::Invalid {
                key: "gt.retry_factor",
                reason: format!("must exceed 1, got {}", g.retry_factor),
            });
        }
        positive("gt.alpha_radius_factor", g.alpha_radius_factor)?;

        if let Some(m) = self.pool.mask_iou_min {
            if !(0.0..=1.0).contains(&m) {
                return Err(ConfigError::Invalid {
                    key: "pool.mask_iou_min",
                    reason: format!("must lie in [0, 1], got {m}"),
                });
            }
        }

        let f = &self.frustum;
        at_least_one("frustum.bins", f.bins)?;
        at_least_one("frustum.embed_levels", f.embed_levels)?;
        if let Some(h) = f.bandwidth {
            positive("frustum.bandwidth", h)?;
        }
        if !(0.0..=1.0).contains(&f.threshold) {
            return Err(ConfigError::Invalid {
                key: "frustum.threshold",
                reason: format!("must lie in [0, 1], got {}", f.threshold),
            });
        }
        positive("frustum.group_gap", f.group_gap)?;
        positive("frustum.car_width", f.car_width)?;
        positive("frustum.pedestrian_width", f.pedestrian_width)?;
        positive("frustum.boundary_gain", f.boundary_gain)?;
        let (lo, hi) = f.perspective_band;
        positive("frustum.perspective_band", lo)?;
        if hi < lo || !hi.is_finite() {
            return Err(ConfigError::Invalid {
                key: "frustum.perspective_band",
                reason: format!("upper bound {hi} below lower bound {lo}"),
            });
        }

        let d = &self.densify;
        for w in d.stage_weights {
            non_negative("densify.stage_weights", w)?;
        }
        non_negative("densify.omega_edge", d.omega_edge)?;
        non_negative("densify.omega_normal", d.omega_normal)?;
        non_negative("densify.lambda_mesh", d.lambda_mesh)?;
        at_least_one("densify.chunks", d.chunks)?;
        at_least_one("densify.channels", d.channels)?;
        at_least_one("densify.max_iters", d.max_iters)?;
        positive("densify.step", d.step)?;
        non_negative("densify.tolerance", d.tolerance)?;
        let (mid, coarse) = d.stage_ratios;
        if !(coarse > 0.0 && coarse <= mid && mid <= 1.0) {
            return Err(ConfigError::Invalid {
                key: "densify.stage_ratios",
                reason: format!("need 0 < coarse <= mid <= 1, got ({mid}, {coarse})"),
            });
        }
        Ok(())
    }
}
