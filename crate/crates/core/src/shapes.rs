//! Closed-form test shapes: boxes, icospheres and point samplers. Used by the
//! synthetic scene generator, the benches and the test suites.

use std::collections::HashMap;

use crate::geometry::{Box3D, TriangleMesh, Vec3};

/// Axis-aligned unit cube centred at `center`, 12 outward-facing triangles.
pub fn cube_mesh(center: Vec3) -> TriangleMesh {
    let bx = Box3D {
        center,
        size: Vec3::new(1.0, 1.0, 1.0),
        heading: 0.0,
    };
    box_mesh(&bx)
}

/// Surface of an oriented box as 12 triangles.
pub fn box_mesh(bx: &Box3D) -> TriangleMesh {
    let corners: Vec<Vec3> = (0..8)
        .map(|i| {
            let q = Vec3::new(
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            );
            bx.from_normalized(&q)
        })
        .collect();
    // outward orientation in the right-handed local frame
    let faces = [
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    let triangles = faces
        .iter()
        .flat_map(|f| [[f[0], f[1], f[2]], [f[0], f[2], f[3]]])
        .collect();
    TriangleMesh {
        vertices: corners,
        triangles,
    }
}

/// Geodesic sphere from a subdivided icosahedron: `20·4^subdivisions`
/// triangles, every vertex on the sphere.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    TriangleMesh {
        vertices: verts.iter().map(|v| center + v * radius).collect(),
        triangles: tris,
    }
}

/// `n` near-uniform points on a sphere (golden-angle spiral).
pub fn fibonacci_sphere(center: Vec3, radius: f64, n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            center + Vec3::new(r * phi.cos(), y, r * phi.sin()) * radius
        })
        .collect()
}

/// Regular grid samples over the six faces of a box, `per_edge` samples along
/// each face edge (corners and edges shared between faces are deduplicated).
pub fn box_surface_samples(bx: &Box3D, per_edge: usize) -> Vec<Vec3> {
    assert!(per_edge >= 2);
    let mut out = Vec::new();
    let step = 1.0 / (per_edge - 1) as f64;
    for i in 0..per_edge {
        for j in 0..per_edge {
            for k in 0..per_edge {
                let on_face = [i, j, k].iter().any(|&c| c == 0 || c == per_edge - 1);
                if on_face {
                    let q = Vec3::new(i as f64 * step - 0.5, j as f64 * step - 0.5, k as f64 * step - 0.5);
                    out.push(bx.from_normalized(&q));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &TriangleMesh) -> f64 {
        m.triangles
            .iter()
            .map(|t| m.vertices[t[0]].dot(&m.vertices[t[1]].cross(&m.vertices[t[2]])) / 6.0)
            .sum()
    }

    #[test]
    fn cube_is_closed_and_outward() {
        let m = cube_mesh(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(m.triangles.len(), 12);
        assert!((signed_volume(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_box_volume() {
        let bx = Box3D::new(Vec3::new(0.0, 1.0, 15.0), Vec3::new(4.0, 1.8, 1.5), 0.7).unwrap();
        let m = box_mesh(&bx);
        assert!((signed_volume(&m) - 4.0 * 1.8 * 1.5).abs() < 1e-9);
        assert!(TriangleMesh::new(m.vertices.clone(), m.triangles.clone()).is_ok());
    }

    #[test]
    fn icosphere_counts_and_radius() {
        let m = icosphere(Vec3::new(0.0, 0.0, 5.0), 2.0, 3);
        assert_eq!(m.triangles.len(), 1280);
        assert_eq!(m.vertices.len(), 642);
        for v in &m.vertices {
            assert!(((v - Vec3::new(0.0, 0.0, 5.0)).norm() - 2.0).abs() < 1e-12);
        }
        assert!(signed_volume(&m) > 0.0);
    }

    #[test]
    fn box_samples_on_surface() {
        let bx = Box3D::new(Vec3::new(0.0, 0.0, 10.0), Vec3::new(2.0, 1.0, 1.0), 0.2).unwrap();
        let s = box_surface_samples(&bx, 5);
        assert_eq!(s.len(), 125 - 27);
        for p in &s {
            let q = bx.to_normalized(p);
            assert!((q.amax() - 0.5).abs() < 1e-12);
        }
    }
}
