use serde::{Deserialize, Serialize};

use super::{GeometryError, Ray, Vec3};

/// Unordered 3D points with optional per-point intensity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinitePoint(i));
        }
        Ok(PointCloud {
            points,
            intensity: None,
        })
    }

    pub fn with_intensity(points: Vec<Vec3>, intensity: Vec<f64>) -> Result<Self, GeometryError> {
        if intensity.len() != points.len() {
            return Err(GeometryError::IntensityLength {
                expected: points.len(),
                got: intensity.len(),
            });
        }
        let mut cloud = Self::new(points)?;
        cloud.intensity = Some(intensity);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-cloud at the given indices, intensity carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|int| indices.iter().map(|&i| int[i]).collect()),
        }
    }

    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            intensity: self.intensity.clone(),
        }
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Slab test. Returns the parametric interval `[t_enter, t_exit]` clipped
    /// to `t >= 0`, or `None` when the ray misses.
    pub fn ray_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            let o = ray.origin[k];
            let d = ray.direction[k];
            if d.abs() < 1e-300 {
                if o < self.min[k] || o > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((self.min[k] - o) * inv, (self.max[k] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    /// Grows the box by `pad` on every side.
    pub fn padded(&self, pad: f64) -> Aabb {
        let p = Vec3::repeat(pad);
        Aabb {
            min: self.min - p,
            max: self.max + p,
        }
    }
}

/// Oriented 3D box in the camera frame. The vertical axis is camera `-y`
/// (up) and `heading` rotates about it, matching KITTI's `rotation_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    /// Geometric centre (not the KITTI bottom centre).
    pub center: Vec3,
    /// `(length, width, height)`.
    pub size: Vec3,
    pub heading: f64,
}

impl Box3D {
    pub fn new(center: Vec3, size: Vec3, heading: f64) -> Result<Self, GeometryError> {
        if !(size.x > 0.0 && size.y > 0.0 && size.z > 0.0) {
            return Err(GeometryError::InvalidBox(format!("size must be positive, got {size:?}")));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite centre".into()));
        }
        if !(heading > -std::f64::consts::PI && heading <= std::f64::consts::PI) {
            return Err(GeometryError::InvalidBox(format!("heading {heading} outside (-pi, pi]")));
        }
        Ok(Box3D {
            center,
            size,
            heading,
        })
    }

    /// Longitudinal, lateral and up unit axes expressed in the camera frame.
    pub fn axes(&self) -> [Vec3; 3] {
        let (s, c) = self.heading.sin_cos();
        [Vec3::new(c, 0.0, -s), Vec3::new(s, 0.0, c), Vec3::new(0.0, -1.0, 0.0)]
    }

    /// Camera-frame point to box-local `(longitudinal, lateral, up)` meters.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.center;
        let [ex, ey, ez] = self.axes();
        Vec3::new(d.dot(&ex), d.dot(&ey), d.dot(&ez))
    }

    pub fn from_local(&self, q: &Vec3) -> Vec3 {
        let [ex, ey, ez] = self.axes();
        self.center + ex * q.x + ey * q.y + ez * q.z
    }

    /// Box-local point scaled per axis into the unit cube `[-0.5, 0.5]³`.
    pub fn to_normalized(&self, p: &Vec3) -> Vec3 {
        self.to_local(p).component_div(&self.size)
    }

    pub fn from_normalized(&self, q: &Vec3) -> Vec3 {
        self.from_local(&q.component_mul(&self.size))
    }

    /// Strict interior test in box-local coordinates.
    pub fn contains_local(&self, q: &Vec3) -> bool {
        q.x.abs() < 0.5 * self.size.x && q.y.abs() < 0.5 * self.size.y && q.z.abs() < 0.5 * self.size.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.contains_local(&self.to_local(p))
    }
}

/// Indices of points strictly inside the oriented box. Cloud and box must be
/// in the same frame.
pub fn points_in_box3d(cloud: &PointCloud, bx: &Box3D) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| bx.contains(p))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(heading: f64) -> Box3D {
        Box3D::new(Vec3::new(1.0, 2.0, 10.0), Vec3::new(4.0, 2.0, 1.5), heading).unwrap()
    }

    #[test]
    fn centre_inside_and_just_outside_excluded() {
        let bx = unit_box(0.3);
        let c = bx.center;
        let outside = bx.from_local(&Vec3::new(1.001 * 2.0, 0.0, 0.0));
        let inside = bx.from_local(&Vec3::new(0.999 * 2.0, 0.0, 0.0));
        let cloud = PointCloud::new(vec![c, outside, inside]).unwrap();
        assert_eq!(points_in_box3d(&cloud, &bx), vec![0, 2]);
    }

    #[test]
    fn heading_zero_matches_axis_comparison() {
        let bx = unit_box(0.0);
        let pts: Vec<Vec3> = (0..400)
            .map(|i| {
                let f = i as f64;
                bx.center + Vec3::new((f * 0.731).sin() * 3.0, (f * 1.17).cos() * 1.5, (f * 0.29).sin() * 2.0)
            })
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let got = points_in_box3d(&cloud, &bx);
        // heading 0: longitudinal = +x, lateral = +z, up = -y
        let want: Vec<usize> = pts
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let d = *p - bx.center;
                d.x.abs() < 2.0 && d.z.abs() < 1.0 && d.y.abs() < 0.75
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(got, want);
        assert!(!got.is_empty());
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(Box3D::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0), 0.0).is_err());
        assert!(Box3D::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), -std::f64::consts::PI).is_err());
        assert!(Box3D::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), std::f64::consts::PI).is_ok());
    }

    #[test]
    fn axes_are_right_handed() {
        let [ex, ey, ez] = unit_box(1.1).axes();
        assert!((ex.cross(&ey) - ez).norm() < 1e-12);
    }

    #[test]
    fn non_finite_points_rejected() {
        assert_eq!(
            PointCloud::new(vec![Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0)]),
            Err(GeometryError::NonFinitePoint(1))
        );
    }

    proptest! {
        #[test]
        fn box_membership_invariant_under_rigid_motion(
            yaw in -3.0f64..3.0, tx in -20.0f64..20.0, ty in -2.0f64..2.0, tz in -20.0f64..20.0,
            heading in -3.0f64..3.0, seed in 0u64..1000,
        ) {
            let bx = unit_box(heading);
            let pts: Vec<Vec3> = (0..64).map(|i| {
                let f = (i as f64 + seed as f64 * 0.123) * 0.977;
                bx.center + Vec3::new(f.sin() * 3.0, (1.7 * f).cos() * 1.2, (0.61 * f).sin() * 2.0)
            }).collect();
            let cloud = PointCloud::new(pts).unwrap();
            // rotation about the vertical axis plus translation
            let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::y_axis(), yaw);
            let t = Vec3::new(tx, ty, tz);
            let moved = cloud.map_points(|p| rot * p + t);
            let mut h = bx.heading + yaw;
            if h > std::f64::consts::PI { h -= 2.0 * std::f64::consts::PI; }
            if h <= -std::f64::consts::PI { h += 2.0 * std::f64::consts::PI; }
            let moved_box = Box3D::new(rot * bx.center + t, bx.size, h).unwrap();
            prop_assert_eq!(points_in_box3d(&cloud, &bx), points_in_box3d(&moved, &moved_box));
        }
    }
}
