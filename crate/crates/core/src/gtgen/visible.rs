use serde::{Deserialize, Serialize};

use super::{best_match, merge_clouds, mirror_object, reconstruct_surface_with, GtGenError, ObjectPool, ObjectSample};
use super::{SurfaceMethod, SurfaceParams};
use crate::config::GtConfig;
use crate::geometry::{pixel_ray, ray_mesh_depth, scale_mesh, CameraCalib, InstanceMask, PixelSet, PointCloud};
use crate::geometry::TriangleMesh;

/// One positive depth per mask pixel, in the mask's row-major pixel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleDepthGt {
    pub mask: InstanceMask,
    pub depths: Vec<f64>,
}

impl VisibleDepthGt {
    pub fn new(mask: InstanceMask, depths: Vec<f64>) -> Result<Self, GtGenError> {
        if depths.len() != mask.len() {
            return Err(GtGenError::InvalidSample(format!(
                "{} depths for {} mask pixels",
                depths.len(),
                mask.len()
            )));
        }
        if let Some(i) = depths.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(GtGenError::InvalidSample(format!("depth {} at pixel {i} is not positive", depths[i])));
        }
        Ok(VisibleDepthGt { mask, depths })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.mask.pixels.iter().zip(self.depths.iter().copied())
    }
}

/// Ground truth for one object plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleDepth {
    pub gt: VisibleDepthGt,
    /// Expansion factor of the final, successful ray cast.
    pub alpha_used: f64,
    pub retries: u32,
    pub surface: SurfaceMethod,
    /// Id of the borrowed pool sample.
    pub matched: String,
    /// Points of the mirrored and merged full-shape cloud.
    pub full_shape_points: usize,
}

/// Mirrored query points merged with the mirrored best match rescaled into
/// the query's box; camera frame. Returns the match id too.
pub fn full_shape_cloud(
    sample: &ObjectSample,
    pool: &ObjectPool,
    calib: &CameraCalib,
    cfg: &GtConfig,
) -> Result<(PointCloud, String), GtGenError> {
    let (_, b) = best_match(sample, pool, calib, cfg)?;
    let own = mirror_object(sample);
    let borrowed = mirror_object(b).map_points(|q| q.component_div(&b.bbox.size).component_mul(&sample.bbox.size));
    let merged = merge_clouds(&own, &borrowed);
    Ok((merged.map_points(|q| sample.bbox.from_local(q)), b.id.clone()))
}

/// Forward depth of the nearest hit for each pixel ray, `None` on a miss.
pub fn cast_depths(mesh: &TriangleMesh, pixels: &PixelSet, calib: &CameraCalib) -> Result<Vec<Option<f64>>, GtGenError> {
    pixels
        .iter()
        .map(|(u, v)| {
            let ray = pixel_ray((u as f64, v as f64), calib)?;
            Ok(ray_mesh_depth(&ray, mesh)
                .map(|t| calib.forward_depth(&ray.at(t)))
                .filter(|d| *d > 0.0))
        })
        .collect()
}

/// Full pipeline for one object: borrow, merge, reconstruct, expand by the
/// pixel-count rule and ray-cast every mask pixel, expanding further while
/// any ray misses.
pub fn generate_visible_depth(
    sample: &ObjectSample,
    pool: &ObjectPool,
    calib: &CameraCalib,
    cfg: &GtConfig,
) -> Result<VisibleDepth, GtGenError> {
    let (cloud, matched) = full_shape_cloud(sample, pool, calib, cfg)?;
    let params = SurfaceParams {
        radius_factor: cfg.alpha_radius_factor,
        hull_below: cfg.hull_below_points,
    };
    let surface = reconstruct_surface_with(&cloud, &params)?;
    let mut alpha = cfg.initial_alpha(sample.mask.len());
    let mut retries = 0;
    loop {
        let mesh = scale_mesh(&surface.mesh, alpha)?;
        let hits = cast_depths(&mesh, &sample.mask.pixels, calib)?;
        let missing: Vec<(u32, u32)> = sample
            .mask
            .pixels
            .iter()
            .zip(&hits)
            .filter(|(_, h)| h.is_none())
            .map(|(p, _)| p)
            .collect();
        if missing.is_empty() {
            let depths = hits.into_iter().map(|h| h.expect("checked")).collect();
            return Ok(VisibleDepth {
                gt: VisibleDepthGt::new(sample.mask.clone(), depths)?,
                alpha_used: alpha,
                retries,
                surface: surface.method,
                matched,
                full_shape_points: cloud.len(),
            });
        }
        if retries >= cfg.max_retries {
            return Err(GtGenError::BijectionFailed { missing, alpha });
        }
        retries += 1;
        alpha *= cfg.retry_factor;
    }
}
