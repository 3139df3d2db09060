use serde::{Deserialize, Serialize};

use super::{Aabb, GeometryError, Vec3, MIN_TRIANGLE_AREA};

/// Indexed triangle set. Watertightness is not required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

pub(crate) fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= vertices.len()) {
                return Err(GeometryError::BadTriangleIndex(i));
            }
            if triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) <= MIN_TRIANGLE_AREA {
                return Err(GeometryError::DegenerateTriangle(i));
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    /// Like [`TriangleMesh::new`] but silently drops degenerate faces and
    /// unreferenced vertices. Used by reconstruction, whose slivers may
    /// collapse below the area threshold.
    pub fn from_raw(vertices: &[Vec3], triangles: impl IntoIterator<Item = [usize; 3]>) -> TriangleMesh {
        let mut remap = vec![usize::MAX; vertices.len()];
        let mut out_v = Vec::new();
        let mut out_t = Vec::new();
        for t in triangles {
            if triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) <= MIN_TRIANGLE_AREA {
                continue;
            }
            let mut nt = [0usize; 3];
            for (k, &vi) in t.iter().enumerate() {
                if remap[vi] == usize::MAX {
                    remap[vi] = out_v.len();
                    out_v.push(vertices[vi]);
                }
                nt[k] = remap[vi];
            }
            out_t.push(nt);
        }
        TriangleMesh {
            vertices: out_v,
            triangles: out_t,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    /// Unsigned distance from `p` to the closest point of the surface.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region classification).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Scales every vertex about the vertex centroid by `alpha`.
pub fn scale_mesh(mesh: &TriangleMesh, alpha: f64) -> Result<TriangleMesh, GeometryError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(GeometryError::NonPositiveScale(alpha));
    }
    let c = mesh.centroid();
    Ok(mesh.map_vertices(|v| c + (v - c) * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::cube_mesh as unit_cube_mesh;

    #[test]
    fn alpha_one_is_identity() {
        let m = unit_cube_mesh(Vec3::new(0.0, 0.0, 10.0));
        assert_eq!(scale_mesh(&m, 1.0).unwrap(), m);
    }

    #[test]
    fn alpha_two_doubles_edges_and_keeps_centroid() {
        let m = unit_cube_mesh(Vec3::new(1.0, -2.0, 10.0));
        let s = scale_mesh(&m, 2.0).unwrap();
        assert!((s.centroid() - m.centroid()).norm() < 1e-12);
        for t in &m.triangles {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let l0 = (m.vertices[i] - m.vertices[j]).norm();
                let l1 = (s.vertices[i] - s.vertices[j]).norm();
                assert!((l1 - 2.0 * l0).abs() < 1e-12);
            }
        }
        assert_eq!(s.triangles, m.triangles);
    }

    #[test]
    fn pairwise_distances_scale_exactly() {
        let m = unit_cube_mesh(Vec3::new(0.3, 0.2, 7.0));
        let s = scale_mesh(&m, 1.2).unwrap();
        for i in 0..m.vertices.len() {
            for j in 0..m.vertices.len() {
                let d0 = (m.vertices[i] - m.vertices[j]).norm();
                let d1 = (s.vertices[i] - s.vertices[j]).norm();
                assert!((d1 - 1.2 * d0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_roundtrip_and_errors() {
        let m = unit_cube_mesh(Vec3::new(3.0, 1.0, 20.0));
        let back = scale_mesh(&scale_mesh(&m, 1.7).unwrap(), 1.0 / 1.7).unwrap();
        for (a, b) in m.vertices.iter().zip(&back.vertices) {
            assert!((a - b).amax() < 1e-9);
        }
        assert_eq!(scale_mesh(&m, 0.0), Err(GeometryError::NonPositiveScale(0.0)));
        assert!(scale_mesh(&m, -1.0).is_err());
    }

    #[test]
    fn invalid_meshes_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert_eq!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]), Err(GeometryError::BadTriangleIndex(0)));
        let col = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert_eq!(TriangleMesh::new(col, vec![[0, 1, 2]]), Err(GeometryError::DegenerateTriangle(0)));
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let q = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 1.0), &a, &b, &c);
        assert!((q - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.5, -1.0, 0.0), &a, &b, &c), Vec3::new(0.5, 0.0, 0.0));
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }
}
