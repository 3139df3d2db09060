use std::path::Path;

use image::{ImageBuffer, Luma};

use super::{write_file, IoError};
use crate::metrics::DepthMap;

/// Stored value per metre.
pub const DEPTH_SCALE: f64 = 256.0;

/// `round(d · 256)`; fails unless the result lies in `[1, 65535]`.
pub fn encode_depth(depth: f64) -> Result<u16, IoError> {
    let s = (depth * DEPTH_SCALE).round();
    if !(depth > 0.0 && (1.0..=65535.0).contains(&s)) {
        return Err(IoError::DepthRange(depth));
    }
    Ok(s as u16)
}

/// `None` for the invalid value 0.
pub fn decode_depth(stored: u16) -> Option<f64> {
    (stored != 0).then(|| stored as f64 / DEPTH_SCALE)
}

/// Writes a 16-bit PNG; invalid pixels are stored as 0.
pub fn write_depth(path: &Path, map: &DepthMap) -> Result<(), IoError> {
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(map.width, map.height);
    for (u, v, p) in img.enumerate_pixels_mut() {
        if let Some(d) = map.get(u, v) {
            p[0] = encode_depth(d)?;
        }
    }
    let mut png = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| IoError::image(path, e))?;
    write_file(path, &png)
}

pub fn read_depth(path: &Path) -> Result<DepthMap, IoError> {
    let img = image::open(path).map_err(|e| IoError::image(path, e))?;
    if img.color() != image::ColorType::L16 {
        return Err(IoError::malformed(path, format!("expected a 16-bit single-channel image, got {:?}", img.color())));
    }
    let img = img.into_luma16();
    let (w, h) = img.dimensions();
    let mut map = DepthMap::empty(w, h);
    for (u, v, p) in img.enumerate_pixels() {
        if let Some(d) = decode_depth(p[0]) {
            map.data[(v * w + u) as usize] = d;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn codec_values() {
        assert_eq!(encode_depth(1.0).unwrap(), 256);
        assert_eq!(decode_depth(256), Some(1.0));
        assert_eq!(decode_depth(0), None);
        assert_eq!(encode_depth(255.0).unwrap(), 65280);
        assert!(encode_depth(0.0).is_err());
        assert!(encode_depth(1e-3).is_err());
        assert!(encode_depth(300.0).is_err());
        assert!(encode_depth(f64::NAN).is_err());
    }

    #[test]
    fn random_maps_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        for _ in 0..5 {
            let mut map = DepthMap::empty(rng.random_range(5..60), rng.random_range(5..40));
            for d in map.data.iter_mut() {
                if rng.random_bool(0.7) {
                    *d = rng.random_range(0.01..255.0);
                }
            }
            write_depth(&path, &map).unwrap();
            let back = read_depth(&path).unwrap();
            assert_eq!((back.width, back.height), (map.width, map.height));
            for (a, b) in map.data.iter().zip(&back.data) {
                if *a == 0.0 {
                    assert_eq!(*b, 0.0);
                } else {
                    assert!((a - b).abs() <= 1.0 / 512.0);
                }
            }
        }
    }

    #[test]
    fn out_of_range_map_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = DepthMap::empty(2, 2);
        map.data[3] = 400.0;
        assert!(matches!(write_depth(&dir.path().join("x.png"), &map), Err(IoError::DepthRange(_))));
    }

    proptest! {
        #[test]
        fn codec_error_bound(d in (1.0 / 512.0)..255.99f64) {
            let back = decode_depth(encode_depth(d).unwrap()).unwrap();
            prop_assert!((back - d).abs() <= 1.0 / 512.0);
        }
    }
}
