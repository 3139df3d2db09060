use super::{CameraCalib, GeometryError, TriangleMesh, Vec3};

/// Barycentric slack so rays through a shared edge hit both triangles.
const EDGE_EPS: f64 = 1e-12;

/// Half-line `origin + t·direction`, `t >= 0`, camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; panics on a zero vector.
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        let n = direction.norm();
        assert!(n > 0.0 && n.is_finite(), "ray direction must be non-zero");
        Ray {
            origin,
            direction: direction / n,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Ray from the optical centre through pixel `(u, v)`.
pub fn pixel_ray(pixel: (f64, f64), calib: &CameraCalib) -> Result<Ray, GeometryError> {
    let (u, v) = pixel;
    if !calib.contains_pixel(u, v) {
        return Err(GeometryError::PixelOutOfBounds {
            u,
            v,
            width: calib.image_size.0,
            height: calib.image_size.1,
        });
    }
    Ok(Ray::new(calib.optical_center(), calib.depth_ray(u, v)))
}

/// Möller–Trumbore. Returns the hit parameter `t >= 0`, edges inclusive.
pub fn ray_triangle_intersect(ray: &Ray, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    // relative parallelism test: |det| = |d · (e1 × e2)|
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = ray.origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t >= 0.0).then_some(t)
}

/// Nearest hit of `ray` over all triangles of `mesh`.
pub fn ray_mesh_depth(ray: &Ray, mesh: &TriangleMesh) -> Option<f64> {
    let bb = mesh.bounds()?;
    let scale = (bb.max - bb.min).amax().max(1.0);
    bb.padded(1e-9 * scale).ray_interval(ray)?;
    mesh.triangles
        .iter()
        .filter_map(|t| {
            ray_triangle_intersect(ray, &mesh.vertices[t[0]], &mesh.vertices[t[1]], &mesh.vertices[t[2]])
        })
        .min_by(|a, b| a.total_cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{cube_mesh, icosphere};

    #[test]
    fn ray_into_triangle_plane() {
        let ray = Ray::new(Vec3::new(0.2, 0.2, 0.0), Vec3::z());
        let t = ray_triangle_intersect(
            &ray,
            &Vec3::new(0.0, 0.0, 5.0),
            &Vec3::new(1.0, 0.0, 5.0),
            &Vec3::new(0.0, 1.0, 5.0),
        );
        assert_eq!(t, Some(5.0));
    }

    #[test]
    fn parallel_ray_misses() {
        let ray = Ray::new(Vec3::new(0.2, 0.2, 5.0), Vec3::x());
        let t = ray_triangle_intersect(
            &ray,
            &Vec3::new(0.0, 0.0, 5.0),
            &Vec3::new(1.0, 0.0, 5.0),
            &Vec3::new(0.0, 1.0, 5.0),
        );
        assert_eq!(t, None);
    }

    #[test]
    fn shared_edge_hits_both_triangles() {
        let (a, b, c, d) = (
            Vec3::new(0.0, 0.0, 3.0),
            Vec3::new(1.0, 0.0, 3.0),
            Vec3::new(1.0, 1.0, 3.0),
            Vec3::new(0.0, 1.0, 3.0),
        );
        let ray = Ray::new(Vec3::new(0.5, 0.5, 0.0), Vec3::z());
        assert_eq!(ray_triangle_intersect(&ray, &a, &b, &c), Some(3.0));
        assert_eq!(ray_triangle_intersect(&ray, &a, &c, &d), Some(3.0));
    }

    #[test]
    fn behind_origin_is_not_a_hit() {
        let ray = Ray::new(Vec3::new(0.2, 0.2, 10.0), Vec3::z());
        let t = ray_triangle_intersect(
            &ray,
            &Vec3::new(0.0, 0.0, 5.0),
            &Vec3::new(1.0, 0.0, 5.0),
            &Vec3::new(0.0, 1.0, 5.0),
        );
        assert_eq!(t, None);
    }

    #[test]
    fn cube_front_face() {
        let cube = cube_mesh(Vec3::new(0.0, 0.0, 10.0));
        let ray = Ray::new(Vec3::zeros(), Vec3::z());
        let t = ray_mesh_depth(&ray, &cube).unwrap();
        assert!((t - 9.5).abs() < 1e-12);
        let miss = Ray::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(ray_mesh_depth(&miss, &cube), None);
    }

    #[test]
    fn principal_pixel_looks_forward_and_45_degrees() {
        let calib = CameraCalib::pinhole(500.0, 500.0, 320.0, 240.0, (640, 480));
        let r = pixel_ray((320.0, 240.0), &calib).unwrap();
        assert!((r.direction - Vec3::z()).norm() < 1e-15);
        // pixel (cx + fx, cy) lies outside a 640-wide image
        assert!(pixel_ray((820.0, 240.0), &calib).is_err());
        let wide = CameraCalib::pinhole(500.0, 500.0, 320.0, 240.0, (1000, 480));
        let r = pixel_ray((820.0, 240.0), &wide).unwrap();
        let azimuth = r.direction.x.atan2(r.direction.z);
        assert!((azimuth - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn pixel_ray_reprojects_to_pixel() {
        let calib = CameraCalib::pinhole(721.5, 721.5, 609.6, 172.9, (1242, 375));
        for &(u, v) in &[(0.0, 0.0), (100.25, 300.5), (1241.0, 374.0)] {
            let ray = pixel_ray((u, v), &calib).unwrap();
            for &t in &[0.5, 3.0, 80.0] {
                let p = calib.project_camera(&ray.at(t));
                assert!((p.u - u).abs() < 1e-6 && (p.v - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sphere_depth_within_chord_bound() {
        let center = Vec3::new(0.3, -0.2, 12.0);
        let radius = 1.5;
        let mesh = icosphere(center, radius, 3);
        assert_eq!(mesh.triangles.len(), 1280);
        // every face plane lies within `sagitta` of the sphere
        let sagitta = mesh
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
                let n = (b - a).cross(&(c - a)).normalize();
                radius - n.dot(&(a - center)).abs()
            })
            .fold(0.0f64, f64::max);
        let calib = CameraCalib::pinhole(700.0, 700.0, 600.0, 180.0, (1200, 360));
        let mut checked = 0;
        for v in (100..260).step_by(3) {
            for u in (480..720).step_by(3) {
                let ray = pixel_ray((u as f64, v as f64), &calib).unwrap();
                // analytic ray-sphere
                let oc = ray.origin - center;
                let b = oc.dot(&ray.direction);
                let disc = b * b - (oc.norm_squared() - radius * radius);
                let mesh_t = ray_mesh_depth(&ray, &mesh);
                if disc < 0.0 {
                    continue;
                }
                let t_true = -b - disc.sqrt();
                // rays grazing the rim may miss the inscribed polytope
                if let Some(t) = mesh_t {
                    let cos = (ray.at(t_true) - center).normalize().dot(&-ray.direction);
                    if cos > 0.3 {
                        assert!(t >= t_true - 1e-9);
                        assert!(t - t_true <= sagitta / cos + 1e-9, "t={t} true={t_true}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 300);
    }
}
