//! Geometric types shared by every stage of the pipeline, together with the
//! projection and ray-intersection primitives.
//!
//! All 3D quantities live in one of two frames:
//!
//! * the **sensor frame** of the lidar (what `.bin` files store), and
//! * the **camera frame**: the rectified reference camera frame, right-handed,
//!   `x` right, `y` down, `z` forward along the principal axis.
//!
//! [`CameraCalib`] converts between the two. Meshes, boxes and rays are always
//! expressed in the camera frame.

mod calib;
mod cloud;
mod mask;
mod mesh;
mod ray;

pub use calib::{project_points, CameraCalib, Projection, KITTI_IMAGE_SIZE};
pub use cloud::{points_in_box3d, Aabb, Box3D, PointCloud};
pub use mask::{points_in_mask, points_in_pixels, InstanceMask, ObjectClass, PixelSet};
pub use mesh::{scale_mesh, TriangleMesh};
pub use ray::{pixel_ray, ray_mesh_depth, ray_triangle_intersect, Ray};

/// 3-vector in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Minimum triangle area (m²) below which a face counts as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in point {0}")]
    NonFinitePoint(usize),
    #[error("intensity count {got} does not match point count {expected}")]
    IntensityLength { expected: usize, got: usize },
    #[error("invalid calibration: {0}")]
    InvalidCalib(String),
    #[error("pixel ({u}, {v}) outside image {width}x{height}")]
    PixelOutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("triangle {0} references a missing vertex")]
    BadTriangleIndex(usize),
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}
