//! Dense visible-part depth for lidar objects.
//!
//! * [`geometry`]: point clouds, calibration, boxes, masks, meshes, rays.
//! * [`gtgen`]: mirroring, shape borrowing, surface reconstruction and ray
//!   casting of per-pixel ground-truth depth.
//! * [`frustum`]: density-adaptive depth bins, sinusoidal embedding and the
//!   rule-based foreground filter.
//! * [`densify`]: pixel meshes, the coarse-to-fine hierarchy, reference
//!   network forwards and the mesh-deformation densifier.
//! * [`metrics`]: RMSE, mIOU, BCE and point-budget statistics.
//! * [`io`] and [`config`]: KITTI-format files, depth PNGs and settings.

pub mod config;
pub mod densify;
pub mod frustum;
pub mod geometry;
pub mod gtgen;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod shapes;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
mod spatial;

pub use geometry::{
    pixel_ray, points_in_box3d, points_in_mask, project_points, ray_mesh_depth, ray_triangle_intersect,
    scale_mesh, Aabb, Box3D, CameraCalib, GeometryError, InstanceMask, ObjectClass, PixelSet, PointCloud,
    Projection, Ray, TriangleMesh, Vec3,
};
