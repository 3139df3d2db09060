//! Synthetic objects with analytic surfaces for the ray-cast bijection
//! check: oriented boxes, spheres and blobs made of overlapping spheres.

use rand::Rng;

use crate::geometry::{Box3D, CameraCalib, InstanceMask, ObjectClass, PixelSet, PointCloud, Ray, Vec3};
use crate::gtgen::ObjectSample;
use crate::shapes::{box_surface_samples, fibonacci_sphere};

pub use super::deform::kitti_calib;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Box,
    Sphere,
    Blob,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Analytic {
    Box(Box3D),
    /// Union of spheres `(centre, radius)`.
    Spheres(Vec<(Vec3, f64)>),
}

impl Analytic {
    /// Nearest ray parameter at which `ray` meets the surface.
    pub fn hit(&self, ray: &Ray) -> Option<f64> {
        match self {
            Analytic::Box(b) => ray_box(ray, b),
            Analytic::Spheres(s) => s
                .iter()
                .filter_map(|(c, r)| ray_sphere(ray, c, *r))
                .min_by(f64::total_cmp),
        }
    }
}

/// Slab test; entry distance into the closed box.
pub fn ray_box(ray: &Ray, bx: &Box3D) -> Option<f64> {
    let o = bx.to_local(&ray.origin);
    let [ex, ey, ez] = bx.axes();
    let d = Vec3::new(ray.direction.dot(&ex), ray.direction.dot(&ey), ray.direction.dot(&ez));
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        let h = 0.5 * bx.size[k];
        if d[k].abs() < 1e-15 {
            if o[k].abs() > h {
                return None;
            }
            continue;
        }
        let (a, b) = ((-h - o[k]) / d[k], (h - o[k]) / d[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some(t0)
}

pub fn ray_sphere(ray: &Ray, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = ray.origin - center;
    let a = ray.direction.norm_squared();
    let b = oc.dot(&ray.direction);
    let disc = b * b - a * (oc.norm_squared() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t >= 0.0).then_some(t)
}

/// One object: its pool sample (box-local points, label box, mask) and the
/// exact surface.
#[derive(Debug, Clone)]
pub struct ShapeObject {
    pub kind: ShapeKind,
    pub sample: ObjectSample,
    pub analytic: Analytic,
}

impl ShapeObject {
    /// Forward depth of the analytic surface along pixel `(u, v)`.
    pub fn depth(&self, calib: &CameraCalib, u: u32, v: u32) -> Option<f64> {
        let ray = Ray::new(calib.optical_center(), calib.depth_ray(u as f64, v as f64));
        self.analytic.hit(&ray).map(|t| calib.forward_depth(&ray.at(t)))
    }

    /// Mask pixels whose neighbours `margin` pixels away in all four
    /// directions are also in the mask.
    pub fn inner_pixels(&self, margin: u32) -> Vec<(u32, u32)> {
        let px = &self.sample.mask.pixels;
        px.iter()
            .filter(|&(u, v)| {
                u >= margin
                    && v >= margin
                    && [(u - margin, v), (u + margin, v), (u, v - margin), (u, v + margin)]
                        .iter()
                        .all(|p| px.contains(*p))
            })
            .collect()
    }
}

fn silhouette(calib: &CameraCalib, surface: &Analytic, corners: &[Vec3]) -> Vec<(u32, u32)> {
    let (w, h) = calib.image_size;
    let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for c in corners {
        let p = calib.project_camera(c);
        u0 = u0.min(p.u);
        v0 = v0.min(p.v);
        u1 = u1.max(p.u);
        v1 = v1.max(p.v);
    }
    let clamp = |x: f64, hi: u32| x.max(0.0).min((hi - 1) as f64) as u32;
    let mut out = Vec::new();
    for v in clamp(v0.floor(), h)..=clamp(v1.ceil(), h) {
        for u in clamp(u0.floor(), w)..=clamp(u1.ceil(), w) {
            let ray = Ray::new(calib.optical_center(), calib.depth_ray(u as f64, v as f64));
            if surface.hit(&ray).is_some() {
                out.push((u, v));
            }
        }
    }
    out
}

fn bounding_corners(center: &Vec3, half: f64) -> Vec<Vec3> {
    let mut out = Vec::new();
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out.push(center + Vec3::new(sx, sy, sz) * half);
            }
        }
    }
    out
}

/// Builds one object of `kind` whose mask has between `min_px` and `max_px`
/// pixels. The object is pushed back or forward until the silhouette fits.
pub fn random_shape<R: Rng>(rng: &mut R, calib: &CameraCalib, kind: ShapeKind, id: &str, min_px: usize, max_px: usize) -> ShapeObject {
    let target = rng.random_range(min_px as f64 * 1.2..max_px as f64 * 0.9);
    let heading = std::f64::consts::PI - rng.random_range(0.0..std::f64::consts::TAU);
    let bearing = rng.random_range(-0.3..0.3f64);
    let lift = rng.random_range(-0.05..0.1f64);
    // shape in a unit frame, placed at distance `dist`
    let local: Analytic = match kind {
        ShapeKind::Box => Analytic::Box(
            Box3D::new(
                Vec3::zeros(),
                Vec3::new(rng.random_range(3.0..4.5), rng.random_range(1.4..1.9), rng.random_range(1.3..1.7)),
                heading,
            )
            .expect("positive size"),
        ),
        ShapeKind::Sphere => Analytic::Spheres(vec![(Vec3::zeros(), rng.random_range(0.8..2.0))]),
        ShapeKind::Blob => {
            let r0 = rng.random_range(0.6..1.2);
            let mut s = vec![(Vec3::zeros(), r0)];
            for _ in 0..rng.random_range(1..3) {
                let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0))
                    .normalize();
                s.push((dir * r0 * rng.random_range(0.5..0.9), r0 * rng.random_range(0.5..0.9)));
            }
            Analytic::Spheres(s)
        }
    };
    let extent = match &local {
        Analytic::Box(b) => 0.5 * b.size.norm(),
        Analytic::Spheres(s) => s.iter().map(|(c, r)| c.norm() + r).fold(0.0, f64::max),
    };
    let mut dist = extent * calib.fx() * (std::f64::consts::PI / target).sqrt();
    for _ in 0..60 {
        let center = Vec3::new(dist * bearing.tan(), dist * lift, dist);
        let placed = match &local {
            Analytic::Box(b) => Analytic::Box(Box3D::new(center, b.size, b.heading).expect("valid")),
            Analytic::Spheres(s) => Analytic::Spheres(s.iter().map(|(c, r)| (c + center, *r)).collect()),
        };
        let px = silhouette(calib, &placed, &bounding_corners(&center, extent));
        if px.len() < min_px || px.len() > max_px {
            dist *= (px.len().max(1) as f64 / target).sqrt().clamp(0.7, 1.4);
            continue;
        }
        return finish(rng, calib, kind, id, placed, px, heading);
    }
    panic!("could not fit a {kind:?} mask into [{min_px}, {max_px}] pixels");
}

fn finish<R: Rng>(
    rng: &mut R,
    calib: &CameraCalib,
    kind: ShapeKind,
    id: &str,
    surface: Analytic,
    px: Vec<(u32, u32)>,
    heading: f64,
) -> ShapeObject {
    let (bbox, points) = match &surface {
        Analytic::Box(b) => (*b, box_surface_samples(b, rng.random_range(7..11))),
        Analytic::Spheres(s) => {
            let mut pts = Vec::new();
            for (k, (c, r)) in s.iter().enumerate() {
                let n = (rng.random_range(250.0..450.0) * r * r) as usize;
                pts.extend(fibonacci_sphere(*c, *r, n.max(60)).into_iter().filter(|p| {
                    s.iter().enumerate().all(|(j, (cj, rj))| j == k || (p - cj).norm() >= *rj)
                }));
            }
            let (c, r) = s[0];
            let bx = if s.len() == 1 {
                Box3D::new(c, Vec3::repeat(2.0 * r), heading).expect("valid")
            } else {
                let (mut lo, mut hi) = (Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN));
                for (cj, rj) in s {
                    lo = lo.inf(&(cj - Vec3::repeat(*rj)));
                    hi = hi.sup(&(cj + Vec3::repeat(*rj)));
                }
                let size = hi - lo;
                // heading 0: local axes are camera (x, z, -y)
                Box3D::new(0.5 * (lo + hi), Vec3::new(size.x, size.z, size.y) * (1.0 + 1e-9), 0.0).expect("valid")
            };
            (bx, pts)
        }
    };
    let class = if kind == ShapeKind::Blob { ObjectClass::Pedestrian } else { ObjectClass::Car };
    let mask = InstanceMask::new(px, calib.image_size, class).expect("pixels inside the image");
    let local: Vec<Vec3> = points.iter().map(|p| bbox.to_local(p)).collect();
    let sample = ObjectSample::new(id, PointCloud::new(local).expect("finite"), bbox, mask).expect("points inside the box");
    ShapeObject {
        kind,
        sample,
        analytic: surface,
    }
}

/// Keeps only `pixels` of the object's mask.
pub fn with_mask(obj: &ShapeObject, pixels: Vec<(u32, u32)>) -> ObjectSample {
    let mut s = obj.sample.clone();
    s.mask.pixels = PixelSet::from_pixels(pixels);
    s
}
