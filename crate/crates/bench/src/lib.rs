//! Seeded inputs for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vpdense_core::config::PoolConfig;
use vpdense_core::gtgen::ObjectPool;
use vpdense_core::oracle::scenes::{kitti_calib, random_shape, ShapeKind, ShapeObject};
use vpdense_core::CameraCalib;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sorted depths of two clusters and a sparse far field.
pub fn depth_set(n: usize) -> Vec<f64> {
    let mut d: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            match i % 4 {
                0 => 12.0 + 1.5 * x,
                1 | 2 => 20.0 + 0.8 * x,
                _ => 30.0 + 40.0 * x,
            }
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// A query car, a pool of eight box-shaped cars and the camera.
pub fn box_scene() -> (ShapeObject, ObjectPool, CameraCalib) {
    let mut r = rng(11);
    let calib = kitti_calib();
    let objects: Vec<ShapeObject> = (0..8)
        .map(|k| random_shape(&mut r, &calib, ShapeKind::Box, &format!("car{k}"), 800, 1500))
        .collect();
    let (pool, _) = ObjectPool::build(objects.iter().map(|o| o.sample.clone()), &PoolConfig::default());
    (objects[0].clone(), pool, calib)
}
