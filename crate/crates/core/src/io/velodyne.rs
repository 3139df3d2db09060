use std::path::Path;

use super::{read_file, write_file, IoError};
use crate::geometry::{PointCloud, Vec3};

const RECORD: usize = 16;

/// Little-endian `f32` records `(x, y, z, intensity)`.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let bytes = read_file(path)?;
    if bytes.len() % RECORD != 0 {
        return Err(IoError::malformed(
            path,
            format!("{} bytes is not a multiple of {RECORD}", bytes.len()),
        ));
    }
    let f = |r: &[u8], k: usize| f32::from_le_bytes(r[4 * k..4 * k + 4].try_into().expect("4 bytes")) as f64;
    let mut points = Vec::with_capacity(bytes.len() / RECORD);
    let mut intensity = Vec::with_capacity(bytes.len() / RECORD);
    for r in bytes.chunks_exact(RECORD) {
        points.push(Vec3::new(f(r, 0), f(r, 1), f(r, 2)));
        intensity.push(f(r, 3));
    }
    PointCloud::with_intensity(points, intensity).map_err(|e| IoError::malformed(path, e.to_string()))
}

/// Writes `f32` records; missing intensity is written as 0.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(cloud.len() * RECORD);
    for (i, p) in cloud.points.iter().enumerate() {
        let it = cloud.intensity.as_ref().map_or(0.0, |v| v[i]);
        for x in [p.x, p.y, p.z, it] {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn golden_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.bin");
        let mut bytes = Vec::new();
        for x in [1.5f32, -2.0, 0.25, 0.5, 10.0, 3.0, -1.75, 0.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let c = read_point_cloud(&path).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.5, -2.0, 0.25), Vec3::new(10.0, 3.0, -1.75)]);
        assert_eq!(c.intensity, Some(vec![0.5, 0.0]));
    }

    #[test]
    fn empty_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.bin");
        std::fs::write(&empty, []).unwrap();
        assert!(read_point_cloud(&empty).unwrap().is_empty());
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, [0u8; 20]).unwrap();
        assert!(matches!(read_point_cloud(&bad), Err(IoError::Malformed { .. })));
        assert!(matches!(read_point_cloud(&dir.path().join("none.bin")), Err(IoError::Io { .. })));
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                let mut f = || rng.random_range(-80.0f32..80.0) as f64;
                Vec3::new(f(), f(), f())
            })
            .collect();
        let it: Vec<f64> = (0..500).map(|_| rng.random::<f32>() as f64).collect();
        let cloud = PointCloud::with_intensity(pts, it).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_point_cloud(&path, &cloud).unwrap();
        let back = read_point_cloud(&path).unwrap();
        assert_eq!(back, cloud);
        write_point_cloud(&dir.path().join("d.bin"), &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("d.bin")).unwrap());
    }
}
