use serde::{Deserialize, Serialize};

use super::GtGenError;
use crate::config::PoolConfig;
use crate::geometry::{points_in_box3d, Box3D, InstanceMask, ObjectClass, PixelSet, PointCloud, Vec3};

/// One annotated object: its lidar points, 3D box and 2D mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSample {
    pub id: String,
    /// Points in box-local metric coordinates `(longitudinal, lateral, up)`,
    /// origin at the box centre.
    pub cloud: PointCloud,
    pub bbox: Box3D,
    pub mask: InstanceMask,
}

impl ObjectSample {
    /// Takes box-local points; every point must lie in the (closed) box.
    pub fn new(id: impl Into<String>, cloud: PointCloud, bbox: Box3D, mask: InstanceMask) -> Result<Self, GtGenError> {
        let half = bbox.size * (0.5 + 1e-9);
        if let Some(i) = cloud
            .points
            .iter()
            .position(|q| q.x.abs() > half.x || q.y.abs() > half.y || q.z.abs() > half.z)
        {
            return Err(GtGenError::InvalidSample(format!("point {i} lies outside the box")));
        }
        Ok(ObjectSample {
            id: id.into(),
            cloud,
            bbox,
            mask,
        })
    }

    /// Gathers the camera-frame points strictly inside `bbox`.
    pub fn from_camera_cloud(id: impl Into<String>, camera_cloud: &PointCloud, bbox: Box3D, mask: InstanceMask) -> Self {
        let idx = points_in_box3d(camera_cloud, &bbox);
        let cloud = camera_cloud.select(&idx).map_points(|p| bbox.to_local(p));
        ObjectSample {
            id: id.into(),
            cloud,
            bbox,
            mask,
        }
    }

    pub fn class(&self) -> ObjectClass {
        self.mask.class
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Points in the unit-cube frame of the box.
    pub fn normalized(&self) -> Vec<Vec3> {
        self.cloud.points.iter().map(|q| q.component_div(&self.bbox.size)).collect()
    }

    pub fn camera_points(&self) -> Vec<Vec3> {
        self.cloud.points.iter().map(|q| self.bbox.from_local(q)).collect()
    }
}

/// Original points followed by their reflection across the box's vertical
/// longitudinal plane (lateral coordinate negated). Box-local frame.
pub fn mirror_object(sample: &ObjectSample) -> PointCloud {
    let c = &sample.cloud;
    let mut points = c.points.clone();
    points.extend(c.points.iter().map(|q| Vec3::new(q.x, -q.y, q.z)));
    let intensity = c.intensity.as_ref().map(|i| {
        let mut v = i.clone();
        v.extend_from_slice(i);
        v
    });
    PointCloud { points, intensity }
}

/// Concatenation of two clouds expressed in the same frame.
pub fn merge_clouds(a: &PointCloud, b: &PointCloud) -> PointCloud {
    let mut points = a.points.clone();
    points.extend_from_slice(&b.points);
    let intensity = match (&a.intensity, &b.intensity) {
        (Some(x), Some(y)) => Some(x.iter().chain(y).copied().collect()),
        _ => None,
    };
    PointCloud { points, intensity }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionReport {
    pub admitted: usize,
    pub too_sparse: usize,
    pub mask_disagreement: usize,
}

/// Shapes available for borrowing. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct ObjectPool {
    samples: Vec<ObjectSample>,
}

impl ObjectPool {
    /// Whether `sample` has strictly more points than its class minimum.
    pub fn admits(cfg: &PoolConfig, sample: &ObjectSample) -> bool {
        sample.len() > cfg.min_points(sample.class())
    }

    pub fn build(candidates: impl IntoIterator<Item = ObjectSample>, cfg: &PoolConfig) -> (ObjectPool, AdmissionReport) {
        let mut report = AdmissionReport::default();
        let mut samples = Vec::new();
        for s in candidates {
            if Self::admits(cfg, &s) {
                report.admitted += 1;
                samples.push(s);
            } else {
                report.too_sparse += 1;
            }
        }
        (ObjectPool { samples }, report)
    }

    /// Like [`ObjectPool::build`] with the optional label/prediction mask
    /// agreement filter: candidates carry a second (predicted) pixel set and
    /// are kept only when its IOU with the label mask reaches
    /// `cfg.mask_iou_min`.
    pub fn build_with_predictions(
        candidates: impl IntoIterator<Item = (ObjectSample, Option<PixelSet>)>,
        cfg: &PoolConfig,
    ) -> (ObjectPool, AdmissionReport) {
        let mut report = AdmissionReport::default();
        let mut kept = Vec::new();
        for (s, pred) in candidates {
            if let (Some(min), Some(pred)) = (cfg.mask_iou_min, pred.as_ref()) {
                let iou = super::pixel_mask_iou(&s.mask.pixels, pred).unwrap_or(0.0);
                if iou <= min {
                    report.mask_disagreement += 1;
                    continue;
                }
            }
            kept.push(s);
        }
        let (pool, r) = Self::build(kept, cfg);
        report.admitted = r.admitted;
        report.too_sparse = r.too_sparse;
        (pool, report)
    }

    pub fn samples(&self) -> &[ObjectSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtgen::chamfer_distance;

    fn sample(id: &str, class: ObjectClass, n: usize) -> ObjectSample {
        let bx = Box3D::new(Vec3::new(0.0, 0.0, 10.0), Vec3::new(4.0, 2.0, 1.5), 0.0).unwrap();
        let pts = (0..n)
            .map(|i| {
                let f = i as f64;
                Vec3::new((f * 0.37).sin() * 1.9, (f * 0.91).cos() * 0.9, (f * 0.13).sin() * 0.7)
            })
            .collect();
        let mask = InstanceMask::rectangle(0, 0, 4, 4, (100, 100), class).unwrap();
        ObjectSample::new(id, PointCloud::new(pts).unwrap(), bx, mask).unwrap()
    }

    #[test]
    fn mirror_reflects_lateral_offset() {
        let mut s = sample("a", ObjectClass::Car, 0);
        s.cloud = PointCloud::new(vec![Vec3::new(0.3, 0.5, 0.1), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let m = mirror_object(&s);
        assert_eq!(m.len(), 4);
        assert_eq!(m.points[2], Vec3::new(0.3, -0.5, 0.1));
        // a point on the symmetry plane is duplicated in place
        assert_eq!(m.points[3], m.points[1]);
    }

    #[test]
    fn mirrored_cloud_is_its_own_reflection() {
        let s = sample("a", ObjectClass::Car, 57);
        let m = mirror_object(&s);
        let reflected = m.map_points(|q| Vec3::new(q.x, -q.y, q.z));
        assert_eq!(chamfer_distance(&m, &reflected).unwrap(), 0.0);
        for (q, o) in m.points.iter().zip(&s.cloud.points) {
            assert_eq!((q.x, q.z), (o.x, o.z));
        }
    }

    #[test]
    fn merge_counts_and_bounds() {
        let a = sample("a", ObjectClass::Car, 30).cloud;
        let b = sample("b", ObjectClass::Car, 50).cloud.map_points(|p| p * 0.5 + Vec3::new(3.0, 0.0, 0.0));
        let m = merge_clouds(&a, &b);
        assert_eq!(m.len(), 80);
        assert_eq!(m.bounds(), Some(a.bounds().unwrap().union(&b.bounds().unwrap())));
        assert_eq!(merge_clouds(&a, &PointCloud::default()), a);
    }

    #[test]
    fn admission_thresholds_are_strict() {
        let cfg = PoolConfig::default();
        assert!(!ObjectPool::admits(&cfg, &sample("c20", ObjectClass::Car, 20)));
        assert!(ObjectPool::admits(&cfg, &sample("c21", ObjectClass::Car, 21)));
        assert!(!ObjectPool::admits(&cfg, &sample("p10", ObjectClass::Pedestrian, 10)));
        assert!(ObjectPool::admits(&cfg, &sample("p11", ObjectClass::Pedestrian, 11)));
        let (pool, rep) = ObjectPool::build(
            vec![sample("c20", ObjectClass::Car, 20), sample("c21", ObjectClass::Car, 21)],
            &cfg,
        );
        assert_eq!(pool.len(), 1);
        assert_eq!(rep, AdmissionReport { admitted: 1, too_sparse: 1, mask_disagreement: 0 });
    }

    #[test]
    fn outside_points_rejected() {
        let s = sample("a", ObjectClass::Car, 3);
        let bad = PointCloud::new(vec![Vec3::new(2.1, 0.0, 0.0)]).unwrap();
        assert!(ObjectSample::new("x", bad, s.bbox, s.mask.clone()).is_err());
    }

    #[test]
    fn mask_filter_drops_disagreeing_predictions() {
        let cfg = PoolConfig {
            mask_iou_min: Some(0.7),
            ..PoolConfig::default()
        };
        let s = sample("a", ObjectClass::Car, 40);
        let same = s.mask.pixels.clone();
        let shifted = PixelSet::from_pixels(s.mask.pixels.iter().map(|(u, v)| (u + 2, v)).collect());
        let (pool, rep) = ObjectPool::build_with_predictions(
            vec![(s.clone(), Some(same)), (s.clone(), Some(shifted)), (s, None)],
            &cfg,
        );
        assert_eq!(pool.len(), 2);
        assert_eq!(rep.mask_disagreement, 1);
    }
}
