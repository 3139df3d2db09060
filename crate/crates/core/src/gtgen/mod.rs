//! Dense visible-part depth ground truth per object: mirror the object's
//! points, borrow the best-matching shape from a pool, reconstruct a surface
//! and ray-cast every mask pixel against it.

mod matching;
mod pool;
pub mod surface;
mod visible;

pub use matching::{best_match, chamfer_distance, match_score, pixel_mask_iou, projected_pixels};
pub use pool::{merge_clouds, mirror_object, AdmissionReport, ObjectPool, ObjectSample};
pub use surface::{reconstruct_surface, reconstruct_surface_with, Surface, SurfaceMethod, SurfaceParams};
pub use visible::{cast_depths, generate_visible_depth, full_shape_cloud, VisibleDepth, VisibleDepthGt};

use crate::geometry::{GeometryError, ObjectClass};

#[derive(Debug, thiserror::Error)]
pub enum GtGenError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("both pixel sets are empty")]
    EmptyPixelSets,
    #[error("no pool candidate of class {0} besides the query")]
    EmptyPool(ObjectClass),
    #[error("no point of the candidate projects in front of the camera")]
    ProjectionFailed,
    #[error("surface reconstruction needs at least 3 distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("points are collinear")]
    Collinear,
    #[error("{} pixel(s) missed the surface at expansion {alpha:.4}: {:?}", missing.len(), &missing[..missing.len().min(8)])]
    BijectionFailed { missing: Vec<(u32, u32)>, alpha: f64 },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
