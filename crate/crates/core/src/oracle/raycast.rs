//! Ray/triangle intersection through the plane equation and barycentric
//! area ratios, independent of the Möller–Trumbore code path.

use rand::Rng;

use crate::geometry::{Ray, Vec3};

/// Result of the plane-and-barycentric test: `t` along the ray and the
/// smallest barycentric weight of the plane hit. `None` when the ray is
/// parallel to the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneHit {
    pub t: f64,
    pub min_weight: f64,
}

impl PlaneHit {
    pub fn is_hit(&self) -> bool {
        self.t >= 0.0 && self.min_weight >= 0.0
    }
}

pub fn plane_hit(ray: &Ray, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<PlaneHit> {
    let n = (b - a).cross(&(c - a));
    let den = n.dot(&ray.direction);
    if den.abs() < 1e-12 * n.norm() * ray.direction.norm() {
        return None;
    }
    let t = n.dot(&(a - ray.origin)) / den;
    let p = ray.at(t);
    let area = n.norm_squared();
    let wa = (c - b).cross(&(p - b)).dot(&n) / area;
    let wb = (a - c).cross(&(p - c)).dot(&n) / area;
    let wc = (b - a).cross(&(p - a)).dot(&n) / area;
    Some(PlaneHit {
        t,
        min_weight: wa.min(wb).min(wc),
    })
}

/// A random triangle and a ray aimed at a point of its plane: inside the
/// triangle for half of the pairs, otherwise with barycentric weights in
/// `[-0.5, 1.5]`. One ray in ten points away from the plane.
pub fn random_pair<R: Rng>(rng: &mut R) -> (Ray, [Vec3; 3]) {
    let mut v = || Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let tri = [v(), v(), v()];
    let origin = v() * 4.0;
    let (wa, wb) = if rng.random_bool(0.5) {
        let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        if x + y > 1.0 {
            (1.0 - x, 1.0 - y)
        } else {
            (x, y)
        }
    } else {
        (rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))
    };
    let target = tri[0] * wa + tri[1] * wb + tri[2] * (1.0 - wa - wb);
    let dir = if rng.random_bool(0.1) { origin - target } else { target - origin };
    (Ray::new(origin, dir), tri)
}
