use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud, Vec3};

/// Default KITTI colour image size, used when a calibration file does not
/// carry one.
pub const KITTI_IMAGE_SIZE: (u32, u32) = (1242, 375);

/// Camera model of one frame: `pixel ~ intrinsic · [rect · lidar_to_cam · p; 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalib {
    /// 3×4 projection matrix of the image camera (KITTI `P2`).
    pub intrinsic: Matrix3x4<f64>,
    /// 3×3 rectifying rotation (KITTI `R0_rect`).
    pub rect: Matrix3<f64>,
    /// 4×4 rigid transform from the sensor frame into the unrectified camera
    /// frame (KITTI `Tr_velo_to_cam`).
    pub lidar_to_cam: Matrix4<f64>,
    /// Image `(width, height)` in pixels.
    pub image_size: (u32, u32),
    #[serde(skip)]
    cache: Option<CalibCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct CalibCache {
    m_inv: Matrix3<f64>,
    center: Vec3,
    sensor_to_camera: Matrix4<f64>,
    camera_to_sensor: Matrix4<f64>,
}

/// Projection of one point: sub-pixel coordinates plus the forward depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Forward distance along the principal axis from the optical centre.
    /// Points with `depth <= 0` are behind the camera.
    pub depth: f64,
}

impl Projection {
    pub fn is_valid(&self) -> bool {
        self.depth > 0.0 && self.u.is_finite() && self.v.is_finite()
    }

    /// Nearest integer pixel; `None` for points behind the camera.
    pub fn pixel(&self) -> Option<(i64, i64)> {
        if !self.is_valid() {
            return None;
        }
        Some((self.u.round() as i64, self.v.round() as i64))
    }
}

impl CameraCalib {
    pub fn new(
        intrinsic: Matrix3x4<f64>,
        rect: Matrix3<f64>,
        lidar_to_cam: Matrix4<f64>,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let mut calib = CameraCalib {
            intrinsic,
            rect,
            lidar_to_cam,
            image_size,
            cache: None,
        };
        calib.validate()?;
        calib.cache = Some(calib.build_cache()?);
        Ok(calib)
    }

    /// Pinhole camera with identity extrinsics, handy for synthetic scenes.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, image_size: (u32, u32)) -> Self {
        #[rustfmt::skip]
        let p = Matrix3x4::new(
            fx, 0.0, cx, 0.0,
            0.0, fy, cy, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        Self::new(p, Matrix3::identity(), Matrix4::identity(), image_size)
            .expect("pinhole parameters must be positive")
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let all_finite = self.intrinsic.iter().all(|x| x.is_finite())
            && self.rect.iter().all(|x| x.is_finite())
            && self.lidar_to_cam.iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(GeometryError::InvalidCalib("non-finite entry".into()));
        }
        if self.intrinsic[(0, 0)] <= 0.0 || self.intrinsic[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidCalib("focal entries must be positive".into()));
        }
        let r = self.lidar_to_cam.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (r.transpose() * r - Matrix3::identity()).norm();
        if err >= 1e-6 {
            return Err(GeometryError::InvalidCalib(format!(
                "lidar_to_cam rotation not orthonormal (|RᵀR - I| = {err:.3e})"
            )));
        }
        let last = self.lidar_to_cam.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(GeometryError::InvalidCalib(
                "lidar_to_cam last row must be [0 0 0 1]".into(),
            ));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(GeometryError::InvalidCalib("empty image size".into()));
        }
        Ok(())
    }

    fn build_cache(&self) -> Result<CalibCache, GeometryError> {
        let m = self.intrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| GeometryError::InvalidCalib("singular projection matrix".into()))?;
        let p4: Vector3<f64> = self.intrinsic.column(3).into_owned();
        let center = -(m_inv * p4);
        let mut rect4 = Matrix4::identity();
        rect4.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rect);
        let sensor_to_camera = rect4 * self.lidar_to_cam;
        let camera_to_sensor = sensor_to_camera
            .try_inverse()
            .ok_or_else(|| GeometryError::InvalidCalib("singular extrinsic".into()))?;
        Ok(CalibCache {
            m_inv,
            center,
            sensor_to_camera,
            camera_to_sensor,
        })
    }

    fn cache(&self) -> std::borrow::Cow<'_, CalibCache> {
        match &self.cache {
            Some(c) => std::borrow::Cow::Borrowed(c),
            // Deserialized values skip the cache; rebuild on demand.
            None => std::borrow::Cow::Owned(self.build_cache().expect("validated calibration")),
        }
    }

    /// Re-validates and rebuilds derived quantities after deserialization or
    /// direct field edits.
    pub fn refresh(&mut self) -> Result<(), GeometryError> {
        self.validate()?;
        self.cache = Some(self.build_cache()?);
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        self.intrinsic[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsic[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.intrinsic[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.intrinsic[(1, 2)]
    }

    /// Optical centre of the image camera, in the camera frame.
    pub fn optical_center(&self) -> Vec3 {
        self.cache().center
    }

    pub fn sensor_to_camera(&self, p: &Vec3) -> Vec3 {
        let h = self.cache().sensor_to_camera * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x, h.y, h.z)
    }

    pub fn camera_to_sensor(&self, p: &Vec3) -> Vec3 {
        let h = self.cache().camera_to_sensor * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x, h.y, h.z)
    }

    /// Moves a whole sensor-frame cloud into the camera frame.
    pub fn cloud_to_camera(&self, cloud: &PointCloud) -> PointCloud {
        let cache = self.cache();
        let points = cloud
            .points
            .iter()
            .map(|p| {
                let h = cache.sensor_to_camera * Vector4::new(p.x, p.y, p.z, 1.0);
                Vec3::new(h.x, h.y, h.z)
            })
            .collect();
        PointCloud {
            points,
            intensity: cloud.intensity.clone(),
        }
    }

    /// Projects a camera-frame point.
    pub fn project_camera(&self, p: &Vec3) -> Projection {
        let h = self.intrinsic * Vector4::new(p.x, p.y, p.z, 1.0);
        let depth = h.z;
        if depth == 0.0 {
            return Projection {
                u: f64::NAN,
                v: f64::NAN,
                depth,
            };
        }
        Projection {
            u: h.x / depth,
            v: h.y / depth,
            depth,
        }
    }

    /// Forward depth of a camera-frame point (third homogeneous coordinate).
    pub fn forward_depth(&self, p: &Vec3) -> f64 {
        let r = self.intrinsic.row(2);
        r[0] * p.x + r[1] * p.y + r[2] * p.z + r[3]
    }

    /// Direction `w` with `forward_depth(center + d·w) == d` for the pixel
    /// `(u, v)`. Unprojection of a pixel at depth `d` is `center + d·w`.
    pub fn depth_ray(&self, u: f64, v: f64) -> Vec3 {
        self.cache().m_inv * Vec3::new(u, v, 1.0)
    }

    /// Camera-frame point on the ray of pixel `(u, v)` at forward depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let cache = self.cache();
        cache.center + (cache.m_inv * Vec3::new(u, v, 1.0)) * depth
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        let (w, h) = self.image_size;
        u >= -0.5 && v >= -0.5 && u < w as f64 - 0.5 && v < h as f64 - 0.5
    }
}

/// Projects every sensor-frame point of `cloud` into the image. One output per
/// input point; points behind the camera carry `depth <= 0`.
pub fn project_points(cloud: &PointCloud, calib: &CameraCalib) -> Vec<Projection> {
    let cache = calib.cache();
    let full = calib.intrinsic * cache.sensor_to_camera;
    cloud
        .points
        .iter()
        .map(|p| {
            let h = full * Vector4::new(p.x, p.y, p.z, 1.0);
            if h.z == 0.0 {
                Projection {
                    u: f64::NAN,
                    v: f64::NAN,
                    depth: 0.0,
                }
            } else {
                Projection {
                    u: h.x / h.z,
                    v: h.y / h.z,
                    depth: h.z,
                }
            }
        })
        .collect()
}
