use std::f64::consts::PI;

use crate::geometry::InstanceMask;

/// Per input coordinate `[sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx)]`,
/// stacked over coordinates: `2·L·x.len()` values.
pub fn sinusoidal_embed(x: &[f64], levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels * x.len());
    for &xi in x {
        let mut freq = PI;
        for _ in 0..levels {
            let (s, c) = (freq * xi).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
    out
}

/// Chebyshev distance from each mask pixel (in mask order) to the nearest
/// pixel outside the mask. Pixels beyond the image border count as outside,
/// so an edge pixel has distance 1.
pub fn boundary_distance(mask: &InstanceMask) -> Vec<u32> {
    let Some((u0, v0, u1, v1)) = mask.pixels.bbox() else {
        return Vec::new();
    };
    // one-pixel frame of outside pixels around the bounding box
    let w = (u1 - u0 + 3) as usize;
    let h = (v1 - v0 + 3) as usize;
    let at = |u: u32, v: u32| (v - v0 + 1) as usize * w + (u - u0 + 1) as usize;
    let mut dist = vec![0u32; w * h];
    for (u, v) in mask.pixels.iter() {
        dist[at(u, v)] = u32::MAX;
    }
    // two-pass chamfer transform; unit weights on all eight neighbours give
    // the exact Chebyshev distance
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if dist[i] == 0 {
                continue;
            }
            let m = [i - 1, i - w - 1, i - w, i - w + 1].iter().map(|&j| dist[j]).min().unwrap();
            dist[i] = dist[i].min(m.saturating_add(1));
        }
    }
    for y in (1..h - 1).rev() {
        for x in (1..w - 1).rev() {
            let i = y * w + x;
            if dist[i] == 0 {
                continue;
            }
            let m = [i + 1, i + w - 1, i + w, i + w + 1].iter().map(|&j| dist[j]).min().unwrap();
            dist[i] = dist[i].min(m.saturating_add(1));
        }
    }
    mask.pixels.iter().map(|(u, v)| dist[at(u, v)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObjectClass;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn embed_values() {
        let z = sinusoidal_embed(&[0.0], 4);
        assert_eq!(z, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let one = sinusoidal_embed(&[1.0], 1);
        assert!(one[0].abs() < 1e-15);
        assert_eq!(one[1], -1.0);
        assert_eq!(sinusoidal_embed(&[0.1, 0.2, 0.3], 10).len(), 60);
        let two = sinusoidal_embed(&[0.25, 0.75], 2);
        assert!((two[4] - (0.75 * PI).sin()).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let one = InstanceMask::rectangle(3, 3, 1, 1, (10, 10), ObjectClass::Car).unwrap();
        assert_eq!(boundary_distance(&one), vec![1]);
        let sq = InstanceMask::rectangle(2, 2, 5, 5, (10, 10), ObjectClass::Car).unwrap();
        let d = boundary_distance(&sq);
        assert_eq!(d[sq.pixels.index_of((4, 4)).unwrap()], 3);
        assert_eq!(d[sq.pixels.index_of((2, 4)).unwrap()], 1);
        assert_eq!(d[sq.pixels.index_of((3, 3)).unwrap()], 2);
        let corner = InstanceMask::rectangle(0, 0, 3, 3, (3, 3), ObjectClass::Car).unwrap();
        assert_eq!(boundary_distance(&corner)[corner.pixels.index_of((1, 1)).unwrap()], 2);
    }

    fn brute(mask: &InstanceMask) -> Vec<u32> {
        let (u0, v0, u1, v1) = mask.pixels.bbox().unwrap();
        let outside: Vec<(i64, i64)> = (v0 as i64 - 1..=v1 as i64 + 1)
            .flat_map(|v| (u0 as i64 - 1..=u1 as i64 + 1).map(move |u| (u, v)))
            .filter(|&(u, v)| u < 0 || v < 0 || !mask.pixels.contains((u as u32, v as u32)))
            .collect();
        mask.pixels
            .iter()
            .map(|(u, v)| {
                outside
                    .iter()
                    .map(|&(a, b)| (a - u as i64).abs().max((b - v as i64).abs()) as u32)
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn random_blobs_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let (cx, cy) = (rng.random_range(5.0..25.0), rng.random_range(5.0..25.0));
            let (rx, ry) = (rng.random_range(1.0..9.0), rng.random_range(1.0..9.0));
            let px: Vec<(u32, u32)> = (0..30u32)
                .flat_map(|v| (0..30u32).map(move |u| (u, v)))
                .filter(|&(u, v)| {
                    let (x, y) = ((u as f64 - cx) / rx, (v as f64 - cy) / ry);
                    x * x + y * y + 0.3 * (3.0 * x).sin() * (2.0 * y).cos() < 1.0
                })
                .collect();
            if px.is_empty() {
                continue;
            }
            let m = InstanceMask::new(px, (30, 30), ObjectClass::Car).unwrap();
            assert_eq!(boundary_distance(&m), brute(&m));
        }
    }

    proptest! {
        #[test]
        fn embedding_bounded_and_distinct(a in prop::collection::vec(0.0f64..1.0, 3), b in prop::collection::vec(0.0f64..1.0, 3), levels in 1usize..12) {
            let (ea, eb) = (sinusoidal_embed(&a, levels), sinusoidal_embed(&b, levels));
            prop_assert!(ea.iter().all(|x| (-1.0..=1.0).contains(x)));
            let apart = a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6);
            if apart {
                prop_assert!(ea.iter().zip(&eb).any(|(x, y)| x != y));
            }
        }
    }
}
