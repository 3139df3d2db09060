//! Synthetic KITTI-style scenes: boxes standing on a ground plane, scanned by
//! a simulated 64-beam lidar, with instance masks rendered by per-pixel ray
//! casting. Written with the same layout as the real dataset.

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_frame, write_split, FrameBundle, IoError, Label, MaskEntry};
use crate::geometry::{Box3D, CameraCalib, InstanceMask, ObjectClass, PointCloud, Ray, Vec3, KITTI_IMAGE_SIZE};

/// Height of the lidar above the ground, metres.
pub const LIDAR_HEIGHT: f64 = 1.73;
/// Label boxes are the physical box grown by this much on every side but
/// the bottom.
pub const LABEL_MARGIN: f64 = 0.1;
/// The label box bottom sits this far above the ground so ground returns
/// stay outside it.
pub const GROUND_CLEARANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cars: (usize, usize),
    pub pedestrians: (usize, usize),
    /// Forward distance range of object centres, metres.
    pub distance: (f64, f64),
    pub beams: usize,
    /// Elevation range of the beams, degrees.
    pub elevation: (f64, f64),
    pub azimuth_step: f64,
    pub azimuth_half_fov: f64,
    pub max_range: f64,
    /// Uniform range noise half-width, metres.
    pub range_noise: f64,
    /// Masks with fewer pixels are dropped.
    pub min_mask_pixels: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            cars: (2, 4),
            pedestrians: (1, 2),
            distance: (8.0, 35.0),
            beams: 64,
            elevation: (-24.8, 2.0),
            azimuth_step: 0.18,
            azimuth_half_fov: 50.0,
            max_range: 80.0,
            range_noise: 0.01,
            min_mask_pixels: 30,
        }
    }
}

/// KITTI calibration of a typical frame.
pub fn kitti_calib() -> CameraCalib {
    #[rustfmt::skip]
    let p2 = Matrix3x4::new(
        721.5377, 0.0, 609.5593, 44.85728,
        0.0, 721.5377, 172.854, 0.2163791,
        0.0, 0.0, 1.0, 0.002745884,
    );
    #[rustfmt::skip]
    let velo = Matrix4::new(
        0.0, -1.0, 0.0, 0.0,
        0.0, 0.0, -1.0, -0.08,
        1.0, 0.0, 0.0, -0.27,
        0.0, 0.0, 0.0, 1.0,
    );
    CameraCalib::new(p2, Matrix3::identity(), velo, KITTI_IMAGE_SIZE).expect("valid calibration")
}

/// Entry distance of `ray` into the closed box, if any.
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

struct SceneObject {
    class: ObjectClass,
    body: Box3D,
    label: Box3D,
}

fn label_box(body: &Box3D) -> Box3D {
    let bottom = body.center.y + 0.5 * body.size.z - GROUND_CLEARANCE;
    let top = body.center.y - 0.5 * body.size.z - LABEL_MARGIN;
    let size = Vec3::new(body.size.x + 2.0 * LABEL_MARGIN, body.size.y + 2.0 * LABEL_MARGIN, bottom - top);
    let center = Vec3::new(body.center.x, 0.5 * (top + bottom), body.center.z);
    Box3D::new(center, size, body.heading).expect("grown box is valid")
}

fn place_objects(rng: &mut ChaCha8Rng, cfg: &SynthConfig, ground_y: f64, calib: &CameraCalib) -> Vec<SceneObject> {
    let cars = rng.random_range(cfg.cars.0..=cfg.cars.1);
    let peds = rng.random_range(cfg.pedestrians.0..=cfg.pedestrians.1);
    let tan_half = (calib.cx() / calib.fx()) * 0.8;
    let mut out: Vec<SceneObject> = Vec::new();
    for class in std::iter::repeat_n(ObjectClass::Car, cars).chain(std::iter::repeat_n(ObjectClass::Pedestrian, peds)) {
        for _ in 0..100 {
            let size = match class {
                ObjectClass::Car => Vec3::new(rng.random_range(3.5..4.6), rng.random_range(1.5..1.85), rng.random_range(1.4..1.65)),
                ObjectClass::Pedestrian => Vec3::new(rng.random_range(0.5..0.9), rng.random_range(0.5..0.75), rng.random_range(1.6..1.9)),
            };
            let z = rng.random_range(cfg.distance.0..cfg.distance.1);
            let x = rng.random_range(-1.0..1.0) * (z * tan_half - 2.5).max(0.0);
            let heading = std::f64::consts::PI - rng.random_range(0.0..std::f64::consts::TAU);
            let body = Box3D::new(Vec3::new(x, ground_y - 0.5 * size.z, z), size, heading).expect("positive size");
            let radius = 0.5 * (size.x.hypot(size.y)) + LABEL_MARGIN;
            let clear = out.iter().all(|o| {
                let r = 0.5 * o.body.size.x.hypot(o.body.size.y) + LABEL_MARGIN;
                (o.body.center.x - x).hypot(o.body.center.z - z) > radius + r + 0.5
            });
            if clear {
                out.push(SceneObject {
                    class,
                    label: label_box(&body),
                    body,
                });
                break;
            }
        }
    }
    out
}

fn nearest_hit(ray: &Ray, objects: &[SceneObject]) -> Option<(usize, f64)> {
    objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| ray_box(ray, &o.body).map(|t| (i, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn scan(rng: &mut ChaCha8Rng, cfg: &SynthConfig, calib: &CameraCalib, ground_y: f64, objects: &[SceneObject]) -> PointCloud {
    let origin = calib.sensor_to_camera(&Vec3::zeros());
    let steps = (2.0 * cfg.azimuth_half_fov / cfg.azimuth_step).round() as usize;
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    for b in 0..cfg.beams {
        let el = if cfg.beams == 1 {
            cfg.elevation.0
        } else {
            cfg.elevation.0 + (cfg.elevation.1 - cfg.elevation.0) * b as f64 / (cfg.beams - 1) as f64
        }
        .to_radians();
        for a in 0..=steps {
            let az = (-cfg.azimuth_half_fov + a as f64 * cfg.azimuth_step).to_radians();
            let dir_s = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir = calib.sensor_to_camera(&dir_s) - origin;
            let ray = Ray::new(origin, dir);
            let ground = (ray.direction.y > 1e-9).then(|| (ground_y - origin.y) / ray.direction.y);
            let hit = match (nearest_hit(&ray, objects), ground) {
                (Some((_, t)), Some(g)) if g < t => Some((g, 0.1)),
                (Some((_, t)), _) => Some((t, 0.4)),
                (None, Some(g)) => Some((g, 0.1)),
                (None, None) => None,
            };
            if let Some((t, it)) = hit {
                if t > cfg.max_range {
                    continue;
                }
                let t = t + rng.random_range(-cfg.range_noise..=cfg.range_noise);
                points.push(calib.camera_to_sensor(&ray.at(t)));
                intensity.push(it);
            }
        }
    }
    PointCloud::with_intensity(points, intensity).expect("matching lengths")
}

/// Visible pixels of each object and the size of its unoccluded silhouette.
fn render_masks(calib: &CameraCalib, objects: &[SceneObject]) -> Vec<(Vec<(u32, u32)>, usize)> {
    let (w, h) = calib.image_size;
    let mut pixels = vec![(Vec::new(), 0usize); objects.len()];
    let mut u0 = w;
    let (mut v0, mut u1, mut v1) = (h, 0, 0);
    for o in objects {
        let local = [-0.5, 0.5];
        for sx in local {
            for sy in local {
                for sz in local {
                    let p = o.body.from_local(&Vec3::new(sx, sy, sz).component_mul(&o.body.size));
                    let pr = calib.project_camera(&p);
                    if pr.depth > 0.0 {
                        u0 = u0.min(pr.u.floor().max(0.0) as u32);
                        v0 = v0.min(pr.v.floor().max(0.0) as u32);
                        u1 = u1.max((pr.u.ceil().max(0.0) as u32).min(w - 1));
                        v1 = v1.max((pr.v.ceil().max(0.0) as u32).min(h - 1));
                    }
                }
            }
        }
    }
    let center = calib.optical_center();
    for v in v0..=v1.min(h - 1) {
        for u in u0..=u1.min(w - 1) {
            let ray = Ray::new(center, calib.depth_ray(u as f64, v as f64));
            let mut best: Option<(usize, f64)> = None;
            for (i, o) in objects.iter().enumerate() {
                if let Some(t) = ray_box(&ray, &o.body) {
                    pixels[i].1 += 1;
                    if best.is_none_or(|b| t < b.1) {
                        best = Some((i, t));
                    }
                }
            }
            if let Some((i, _)) = best {
                pixels[i].0.push((u, v));
            }
        }
    }
    pixels
}

fn bbox2d(px: &[(u32, u32)]) -> [f64; 4] {
    let (mut a, mut b, mut c, mut d) = (u32::MAX, u32::MAX, 0, 0);
    for &(u, v) in px {
        a = a.min(u);
        b = b.min(v);
        c = c.max(u);
        d = d.max(v);
    }
    [a as f64, b as f64, c as f64, d as f64]
}

/// One synthetic frame. Objects whose mask would be smaller than
/// `min_mask_pixels` are left out of the labels and masks but still occlude.
pub fn generate_frame(frame: &str, seed: u64, cfg: &SynthConfig) -> FrameBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calib = kitti_calib();
    let ground_y = calib.sensor_to_camera(&Vec3::zeros()).y + LIDAR_HEIGHT;
    let objects = place_objects(&mut rng, cfg, ground_y, &calib);
    let cloud = scan(&mut rng, cfg, &calib, ground_y, &objects);
    let masks = render_masks(&calib, &objects);
    let mut labels = Vec::new();
    let mut entries = Vec::new();
    for (o, (px, silhouette)) in objects.iter().zip(masks) {
        if px.len() < cfg.min_mask_pixels {
            continue;
        }
        let visible = px.len() as f64 / silhouette as f64;
        let l = &o.label;
        let location = l.center + Vec3::new(0.0, 0.5 * l.size.z, 0.0);
        labels.push(Label {
            type_name: match o.class {
                ObjectClass::Car => "Car",
                ObjectClass::Pedestrian => "Pedestrian",
            }
            .into(),
            object_class: Some(o.class),
            truncation: 0.0,
            occlusion: if visible >= 0.8 {
                0
            } else if visible >= 0.4 {
                1
            } else {
                2
            },
            alpha: l.heading - location.x.atan2(location.z),
            bbox2d: bbox2d(&px),
            height: l.size.z,
            width: l.size.y,
            length: l.size.x,
            location,
            rotation_y: l.heading,
            score: None,
        });
        let mask = InstanceMask::new(px, calib.image_size, o.class).expect("pixels inside the image");
        entries.push(MaskEntry {
            id: labels.len() as u16,
            mask,
        });
    }
    FrameBundle {
        frame: frame.to_string(),
        cloud,
        calib,
        labels,
        masks: entries,
        predicted: None,
    }
}

/// Writes `frames` frames named `000000`, `000001`, ... and the split file.
/// Frame `k` uses seed `seed + k`.
pub fn generate_split(root: &Path, split: &str, frames: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<String>, IoError> {
    let ids: Vec<String> = (0..frames).map(|k| format!("{k:06}")).collect();
    for (k, id) in ids.iter().enumerate() {
        write_frame(root, &generate_frame(id, seed.wrapping_add(k as u64), cfg))?;
    }
    write_split(root, split, &ids)?;
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::points_in_box3d;

    fn small() -> SynthConfig {
        SynthConfig {
            azimuth_step: 0.36,
            beams: 32,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn lidar_origin_sits_at_lidar_height() {
        let c = kitti_calib();
        let o = c.sensor_to_camera(&Vec3::zeros());
        assert!((o - Vec3::new(0.0, -0.08, -0.27)).norm() < 1e-12);
        let fwd = c.sensor_to_camera(&Vec3::x()) - o;
        assert!((fwd - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn object_points_sit_strictly_inside_labels() {
        let f = generate_frame("0", 3, &small());
        assert!(!f.labels.is_empty());
        let cam = f.camera_cloud();
        let mut inside = vec![0usize; cam.len()];
        let mut with_points = 0;
        for l in &f.labels {
            let bx = l.box3d().unwrap();
            let idx = points_in_box3d(&cam, &bx);
            if l.occlusion == 0 {
                assert!(!idx.is_empty(), "{l:?} has no points");
            }
            with_points += usize::from(!idx.is_empty());
            for i in idx {
                inside[i] += 1;
                assert_eq!(f.cloud.intensity.as_ref().unwrap()[i], 0.4);
            }
        }
        assert!(with_points > 0);
        assert!(inside.iter().all(|c| *c <= 1));
        let object_hits = f.cloud.intensity.as_ref().unwrap().iter().filter(|i| **i == 0.4).count();
        let labelled: usize = inside.iter().sum();
        assert!(labelled <= object_hits);
    }

    #[test]
    fn masks_are_disjoint_and_match_labels() {
        let f = generate_frame("0", 5, &small());
        assert_eq!(f.masks.len(), f.labels.len());
        for (k, m) in f.masks.iter().enumerate() {
            assert_eq!(m.id as usize, k + 1);
            assert_eq!(Some(m.mask.class), f.labels[k].object_class);
            assert!(m.mask.len() >= 30);
            for o in &f.masks[k + 1..] {
                assert_eq!(m.mask.pixels.intersection_len(&o.mask.pixels), 0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ids = generate_split(dir.path(), "val", 2, 11, &small()).unwrap();
        let a = super::super::load_frame(dir.path(), &ids[1]).unwrap();
        let b = generate_frame(&ids[1], 12, &small());
        assert_eq!(a.labels.len(), b.labels.len());
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.cloud.len(), b.cloud.len());
        for (p, q) in a.cloud.points.iter().zip(&b.cloud.points) {
            assert!((p - q).norm() < 1e-4);
        }
    }
}
