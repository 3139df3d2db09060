//! Analytic surfaces for checking the densifier: depth maps of planes and
//! sphere caps seen through a pinhole camera.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::densify::{build_pixel_mesh, PixelMesh};
use crate::geometry::{CameraCalib, InstanceMask, ObjectClass, Vec3};

/// A densification problem with known answer.
#[derive(Debug, Clone)]
pub struct DeformCase {
    pub mesh: PixelMesh,
    pub calib: CameraCalib,
    /// True depth of every vertex.
    pub truth: Vec<f64>,
    /// Non-anchor vertices.
    pub held_out: Vec<usize>,
    /// Mean anchor spacing at the surface, `sqrt(pixels / anchors) · depth / f`.
    pub spacing: f64,
    /// Sphere radius; `None` for planes.
    pub radius: Option<f64>,
}

impl DeformCase {
    /// Sagitta of a chord of one anchor spacing, `s² / 8R`; zero for planes.
    pub fn chord_bound(&self) -> f64 {
        self.radius.map_or(0.0, |r| self.spacing * self.spacing / (8.0 * r))
    }

    pub fn held_out_rmse(&self, depths: &[f64]) -> f64 {
        let se: f64 = self.held_out.iter().map(|&i| (depths[i] - self.truth[i]).powi(2)).sum();
        (se / self.held_out.len().max(1) as f64).sqrt()
    }
}

pub fn kitti_calib() -> CameraCalib {
    CameraCalib::pinhole(721.5, 721.5, 609.6, 172.9, (1242, 375))
}

/// Forward depth along pixel `(u, v)` to the near side of a sphere.
pub fn sphere_depth(calib: &CameraCalib, center: &Vec3, radius: f64, u: f64, v: f64) -> Option<f64> {
    let w = calib.depth_ray(u, v);
    let oc = calib.optical_center() - center;
    let (a, b, c) = (w.norm_squared(), 2.0 * w.dot(&oc), oc.norm_squared() - radius * radius);
    let disc = b * b - 4.0 * a * c;
    (disc >= 0.0).then(|| (-b - disc.sqrt()) / (2.0 * a)).filter(|d| *d > 0.0)
}

/// Forward depth along pixel `(u, v)` to the plane `n·x = k`.
pub fn plane_depth(calib: &CameraCalib, normal: &Vec3, k: f64, u: f64, v: f64) -> Option<f64> {
    let w = calib.depth_ray(u, v);
    let den = normal.dot(&w);
    (den.abs() > 1e-12).then(|| (k - normal.dot(&calib.optical_center())) / den).filter(|d| *d > 0.0)
}

fn disc_pixels(center: (f64, f64), radius: f64) -> Vec<(u32, u32)> {
    let r = radius.ceil() as i64;
    let (cu, cv) = (center.0.round() as i64, center.1.round() as i64);
    let mut px = Vec::new();
    for v in cv - r..=cv + r {
        for u in cu - r..=cu + r {
            let (du, dv) = (u as f64 - center.0, v as f64 - center.1);
            if du * du + dv * dv <= radius * radius {
                px.push((u as u32, v as u32));
            }
        }
    }
    px
}

fn assemble<R: Rng>(
    rng: &mut R,
    calib: CameraCalib,
    pixels: Vec<(u32, u32)>,
    depth: impl Fn(f64, f64) -> Option<f64>,
    anchor_fraction: f64,
    radius: Option<f64>,
) -> DeformCase {
    let mask = InstanceMask::new(pixels, calib.image_size, ObjectClass::Car).expect("disc inside the image");
    let truth: Vec<f64> = mask
        .pixels
        .iter()
        .map(|(u, v)| depth(u as f64, v as f64).expect("pixel sees the surface"))
        .collect();
    let n = truth.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let count = ((anchor_fraction * n as f64).round() as usize).clamp(1, n);
    let px: Vec<(u32, u32)> = mask.pixels.iter().collect();
    let anchors: Vec<((u32, u32), f64)> = order[..count].iter().map(|&i| (px[i], truth[i])).collect();
    let mesh = build_pixel_mesh(&mask, &anchors, &calib).expect("valid anchors");
    let held_out = (0..n).filter(|&i| !mesh.is_anchor[i]).collect();
    let mean_depth = truth.iter().sum::<f64>() / n as f64;
    let spacing = (n as f64 / count as f64).sqrt() * mean_depth / calib.fx();
    DeformCase {
        mesh,
        calib,
        truth,
        held_out,
        spacing,
        radius,
    }
}

/// Disc mask of radius `pixel_radius` on a tilted plane at 8–30 m.
pub fn plane_case<R: Rng>(rng: &mut R, pixel_radius: f64, anchor_fraction: f64) -> DeformCase {
    let calib = kitti_calib();
    let center = (rng.random_range(400.0..800.0), rng.random_range(120.0..250.0));
    let depth0 = rng.random_range(8.0..30.0);
    let p0 = calib.unproject(center.0, center.1, depth0);
    let normal = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), -1.0).normalize();
    let k = normal.dot(&p0);
    let pixels = disc_pixels(center, pixel_radius);
    assemble(rng, calib.clone(), pixels, |u, v| plane_depth(&calib, &normal, k, u, v), anchor_fraction, None)
}

/// Disc mask over the near cap of a sphere of radius 1.5–4 m at 8–30 m.
/// The disc covers at most 70 % of the silhouette radius.
pub fn sphere_cap_case<R: Rng>(rng: &mut R, pixel_radius: f64, anchor_fraction: f64) -> DeformCase {
    let calib = kitti_calib();
    let radius = rng.random_range(1.5..4.0);
    let center_px = (rng.random_range(400.0..800.0), rng.random_range(120.0..250.0));
    let dist = rng.random_range(8.0..30.0);
    let center = calib.unproject(center_px.0, center_px.1, dist);
    let silhouette = radius * calib.fx() / dist;
    let disc = pixel_radius.min(0.7 * silhouette);
    let pixels = disc_pixels(center_px, disc);
    assemble(
        rng,
        calib.clone(),
        pixels,
        |u, v| sphere_depth(&calib, &center, radius, u, v),
        anchor_fraction,
        Some(radius),
    )
}
