use super::{mirror_object, GtGenError, ObjectPool, ObjectSample};
use crate::config::{GtConfig, IouTerm};
use crate::geometry::{CameraCalib, PixelSet, PointCloud, Vec3};
use crate::spatial::SortedSweep;

fn mean_nearest(from: &[Vec3], to: &SortedSweep<'_>) -> f64 {
    from.iter().map(|p| to.nearest(p, None).expect("non-empty").1).sum::<f64>() / from.len() as f64
}

pub(crate) fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> f64 {
    let sa = SortedSweep::new(a);
    let sb = SortedSweep::new(b);
    0.5 * (mean_nearest(a, &sb) + mean_nearest(b, &sa))
}

/// Symmetric Chamfer distance: the average of the two directed mean
/// nearest-neighbour distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, GtGenError> {
    if a.is_empty() || b.is_empty() {
        return Err(GtGenError::EmptyCloud);
    }
    Ok(chamfer_points(&a.points, &b.points))
}

/// `|A ∩ B| / |A ∪ B|`.
pub fn pixel_mask_iou(a: &PixelSet, b: &PixelSet) -> Result<f64, GtGenError> {
    if a.is_empty() && b.is_empty() {
        return Err(GtGenError::EmptyPixelSets);
    }
    let inter = a.intersection_len(b);
    Ok(inter as f64 / (a.len() + b.len() - inter) as f64)
}

/// Rounded in-image pixels of camera-frame points in front of the camera;
/// `None` when no point is in front.
pub fn projected_pixels(points: &[Vec3], calib: &CameraCalib) -> Option<PixelSet> {
    let (w, h) = calib.image_size;
    let mut any_front = false;
    let mut px = Vec::new();
    for p in points {
        let proj = calib.project_camera(p);
        if let Some((u, v)) = proj.pixel() {
            any_front = true;
            if u >= 0 && v >= 0 && u < w as i64 && v < h as i64 {
                px.push((u as u32, v as u32));
            }
        }
    }
    any_front.then(|| PixelSet::from_pixels(px))
}

fn normalized_mirror(s: &ObjectSample) -> Vec<Vec3> {
    mirror_object(s)
        .points
        .iter()
        .map(|q| q.component_div(&s.bbox.size))
        .collect()
}

/// Match score of candidate `b` for query `a` (lower is better): Chamfer
/// distance between the mirrored, box-normalised clouds plus the mask term
/// for sparse queries.
pub fn match_score(a: &ObjectSample, b: &ObjectSample, calib: &CameraCalib, cfg: &GtConfig) -> Result<f64, GtGenError> {
    if a.is_empty() || b.is_empty() {
        return Err(GtGenError::EmptyCloud);
    }
    let na = normalized_mirror(a);
    let nb = normalized_mirror(b);
    let shape = chamfer_points(&na, &nb);
    if a.len() > cfg.iou_max_points {
        return Ok(shape);
    }
    // place the candidate in the query's box and compare silhouettes
    let placed: Vec<Vec3> = nb.iter().map(|q| a.bbox.from_normalized(q)).collect();
    let pixels = projected_pixels(&placed, calib).ok_or(GtGenError::ProjectionFailed)?;
    let iou = pixel_mask_iou(&a.mask.pixels, &pixels)?;
    Ok(shape
        + match cfg.iou_term {
            IouTerm::Complement => 1.0 - iou,
            IouTerm::Literal => iou,
        })
}

/// Pool index and sample minimising [`match_score`] among samples of `a`'s
/// class with a different id. Ties go to the lower index.
pub fn best_match<'p>(
    a: &ObjectSample,
    pool: &'p ObjectPool,
    calib: &CameraCalib,
    cfg: &GtConfig,
) -> Result<(usize, &'p ObjectSample), GtGenError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in pool.samples().iter().enumerate() {
        if b.class() != a.class() || b.id == a.id {
            continue;
        }
        let s = match match_score(a, b, calib, cfg) {
            Ok(s) => s,
            Err(GtGenError::ProjectionFailed) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, bs)| s < bs) {
            best = Some((i, s));
        }
    }
    let (i, _) = best.ok_or(GtGenError::EmptyPool(a.class()))?;
    Ok((i, &pool.samples()[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PoolConfig;
    use crate::geometry::{Box3D, InstanceMask, ObjectClass};
    use rand::{Rng, SeedableRng};

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let dir = |x: &[Vec3], y: &[Vec3]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        0.5 * (dir(a, b) + dir(b, a))
    }

    fn cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-0.7..0.7)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let a = PointCloud::new(vec![Vec3::zeros()]).unwrap();
        let b = PointCloud::new(vec![Vec3::x()]).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        assert!(chamfer_distance(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..120);
            let m = rng.random_range(1..120);
            let a = cloud(&mut rng, n);
            let b = cloud(&mut rng, m);
            let got = chamfer_distance(&a, &b).unwrap();
            assert!((got - brute_chamfer(&a.points, &b.points)).abs() < 1e-9);
        }
    }

    #[test]
    fn iou_counting() {
        let a = PixelSet::from_pixels((0..10).map(|u| (u, 0)).collect());
        let b = PixelSet::from_pixels((5..15).map(|u| (u, 0)).collect());
        let c = PixelSet::from_pixels((20..25).map(|u| (u, 0)).collect());
        assert_eq!(pixel_mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(pixel_mask_iou(&a, &c).unwrap(), 0.0);
        assert!((pixel_mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(pixel_mask_iou(&PixelSet::default(), &PixelSet::default()).is_err());
    }

    fn calib() -> CameraCalib {
        CameraCalib::pinhole(700.0, 700.0, 600.0, 180.0, (1200, 360))
    }

    fn object(id: &str, n: usize, seed: u64) -> ObjectSample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bx = Box3D::new(Vec3::new(0.5, 0.8, 15.0), Vec3::new(4.0, 1.8, 1.5), 0.3).unwrap();
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.9..1.9), rng.random_range(-0.85..0.85), rng.random_range(-0.7..0.7)))
            .collect();
        let cam: Vec<Vec3> = pts.iter().map(|q| bx.from_local(q)).collect();
        let px = projected_pixels(&cam, &calib()).unwrap();
        let mask = InstanceMask::new(px.as_slice().to_vec(), (1200, 360), ObjectClass::Car).unwrap();
        ObjectSample::new(id, PointCloud::new(pts).unwrap(), bx, mask).unwrap()
    }

    #[test]
    fn dense_query_scores_shape_only() {
        let cfg = GtConfig::default();
        let a = object("a", 11, 1);
        let b = object("b", 40, 2);
        let s = match_score(&a, &b, &calib(), &cfg).unwrap();
        let want = chamfer_points(&normalized_mirror(&a), &normalized_mirror(&b));
        assert_eq!(s, want);
    }

    #[test]
    fn sparse_query_adds_mask_term() {
        let b = object("b", 40, 2);
        let mut a = object("a", 5, 1);
        // A's mask is exactly B's silhouette placed in A's box
        let placed: Vec<Vec3> = normalized_mirror(&b).iter().map(|q| a.bbox.from_normalized(q)).collect();
        let px = projected_pixels(&placed, &calib()).unwrap();
        a.mask = InstanceMask::new(px.as_slice().to_vec(), (1200, 360), ObjectClass::Car).unwrap();
        let shape = chamfer_points(&normalized_mirror(&a), &normalized_mirror(&b));
        let literal = GtConfig {
            iou_term: IouTerm::Literal,
            ..GtConfig::default()
        };
        assert!((match_score(&a, &b, &calib(), &literal).unwrap() - (shape + 1.0)).abs() < 1e-12);
        assert!((match_score(&a, &b, &calib(), &GtConfig::default()).unwrap() - shape).abs() < 1e-12);
    }

    #[test]
    fn jittered_copy_is_best_match_and_self_excluded() {
        let cfg = GtConfig::default();
        let a = object("a", 60, 5);
        let mut copy = a.clone();
        copy.id = "copy".into();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for q in copy.cloud.points.iter_mut() {
            let j = *q + Vec3::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3), 0.0);
            *q = Vec3::new(j.x.clamp(-2.0, 2.0), j.y.clamp(-0.9, 0.9), j.z);
        }
        let mut cands = vec![a.clone()];
        for k in 0..6 {
            cands.push(object(&format!("o{k}"), 60, 100 + k));
        }
        cands.insert(4, copy);
        let (pool, _) = ObjectPool::build(cands, &PoolConfig::default());
        let (i, m) = best_match(&a, &pool, &calib(), &cfg).unwrap();
        assert_eq!(m.id, "copy");
        assert_eq!(i, 4);
    }

    #[test]
    fn ties_resolve_to_lower_index_and_empty_pool_errors() {
        let cfg = GtConfig::default();
        let a = object("a", 30, 5);
        let mut b1 = object("b", 30, 6);
        b1.id = "b1".into();
        let mut b2 = b1.clone();
        b2.id = "b2".into();
        let (pool, _) = ObjectPool::build(vec![a.clone(), b1, b2], &PoolConfig::default());
        assert_eq!(best_match(&a, &pool, &calib(), &cfg).unwrap().0, 1);
        let (solo, _) = ObjectPool::build(vec![a.clone()], &PoolConfig::default());
        assert!(matches!(best_match(&a, &solo, &calib(), &cfg), Err(GtGenError::EmptyPool(_))));
    }
}
