//! Triangle-surface reconstruction from an unorganised object cloud: alpha
//! shape for dense clouds, convex hull for sparse ones, a thin slab for
//! planar input.

mod delaunay;
mod hull;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::GtGenError;
use crate::geometry::{PointCloud, TriangleMesh, Vec3};
use crate::spatial::{nearest_neighbor_spacing, Grid};

pub(crate) use delaunay::Delaunay3;
pub(crate) use hull::convex_hull;

/// An alpha surface with holes is retried with the ball radius multiplied by
/// this factor, at most [`RADIUS_GROWTH_STEPS`] times, before falling back to
/// the convex hull.
pub const RADIUS_GROWTH: f64 = 1.25;
pub const RADIUS_GROWTH_STEPS: usize = 10;

/// Half thickness (m) of the slab built for planar input.
pub const PLANAR_HALF_THICKNESS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMethod {
    AlphaShape,
    ConvexHull,
    /// Coplanar input extruded into a thin slab.
    PlanarPatch,
}

#[derive(Debug, Clone)]
pub struct Surface {
    pub mesh: TriangleMesh,
    pub method: SurfaceMethod,
    /// Ball radius used by the alpha shape (after any growth).
    pub alpha_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceParams {
    /// Alpha radius as a multiple of the median nearest-neighbour spacing.
    pub radius_factor: f64,
    /// Below this many distinct points the convex hull is used.
    pub hull_below: usize,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            radius_factor: 2.0,
            hull_below: 30,
        }
    }
}

/// Reconstruction with default parameters.
pub fn reconstruct_surface(cloud: &PointCloud) -> Result<Surface, GtGenError> {
    reconstruct_surface_with(cloud, &SurfaceParams::default())
}

pub fn reconstruct_surface_with(cloud: &PointCloud, params: &SurfaceParams) -> Result<Surface, GtGenError> {
    if cloud.len() < 3 {
        return Err(GtGenError::TooFewPoints(cloud.len()));
    }
    let bb = cloud.bounds().expect("non-empty");
    let scale = (bb.max - bb.min).norm();
    let origin = (bb.max + bb.min) * 0.5;
    let pts = dedup(&cloud.points.iter().map(|p| p - origin).collect::<Vec<_>>(), 1e-9 * scale);
    if pts.len() < 3 {
        return Err(GtGenError::TooFewPoints(pts.len()));
    }

    let frame = principal_frame(&pts);
    let spread = |axis: &Vec3| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = p.dot(axis);
            (lo.min(s), hi.max(s))
        });
        hi - lo
    };
    if spread(&frame[1]) <= 1e-9 * scale {
        return Err(GtGenError::Collinear);
    }
    let shift = |m: TriangleMesh| m.map_vertices(|v| v + origin);
    if spread(&frame[2]) <= 1e-7 * scale {
        return Ok(Surface {
            mesh: shift(planar_patch(&pts, &frame)),
            method: SurfaceMethod::PlanarPatch,
            alpha_radius: None,
        });
    }

    let perturbed = perturb(&pts, scale);
    if pts.len() >= params.hull_below {
        let spacing = {
            let mut nn = nearest_neighbor_spacing(&pts);
            nn.sort_by(f64::total_cmp);
            nn[nn.len() / 2]
        };
        let dt = Delaunay3::build(&perturbed);
        let candidates = dt.real_faces();
        let mut radius = params.radius_factor * spacing;
        for _ in 0..=RADIUS_GROWTH_STEPS {
            let mesh = TriangleMesh::from_raw(&pts, alpha_exposed(&pts, &candidates, radius));
            if !mesh.is_empty() && boundary_edges(&mesh) == 0 {
                return Ok(Surface {
                    mesh: shift(mesh),
                    method: SurfaceMethod::AlphaShape,
                    alpha_radius: Some(radius),
                });
            }
            radius *= RADIUS_GROWTH;
        }
    }
    let faces = convex_hull(&perturbed).ok_or(GtGenError::Collinear)?;
    Ok(Surface {
        mesh: shift(TriangleMesh::from_raw(&pts, faces)),
        method: SurfaceMethod::ConvexHull,
        alpha_radius: None,
    })
}

/// Edges used by exactly one triangle.
pub(crate) fn boundary_edges(mesh: &TriangleMesh) -> usize {
    let mut count: std::collections::HashMap<(usize, usize), u32> = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    count.values().filter(|&&c| c == 1).count()
}

/// Drops points closer than `tol` to an earlier point.
fn dedup(points: &[Vec3], tol: f64) -> Vec<Vec3> {
    let cell = tol.max(1e-12);
    let mut kept: Vec<Vec3> = Vec::with_capacity(points.len());
    let mut cells: std::collections::HashMap<[i64; 3], Vec<usize>> = std::collections::HashMap::new();
    let key = |p: &Vec3| [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64];
    'outer: for p in points {
        let k = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if bucket.iter().any(|&j| (kept[j] - p).norm() <= tol) {
                            continue 'outer;
                        }
                    }
                }
            }
        }
        cells.entry(k).or_default().push(kept.len());
        kept.push(*p);
    }
    kept
}

/// Orthonormal principal axes sorted by decreasing variance.
fn principal_frame(pts: &[Vec3]) -> [Vec3; 3] {
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let cov = pts.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let e0: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let e1: Vec3 = eig.eigenvectors.column(order[1]).into_owned();
    [e0, e1, e0.cross(&e1)]
}

/// Deterministic jitter of relative size 1e-9 that puts the input in general
/// position for the exact predicates.
fn perturb(pts: &[Vec3], scale: f64) -> Vec<[f64; 3]> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_a1fa);
    let eps = 1e-9 * scale.max(1e-6);
    pts.iter()
        .map(|p| {
            [
                p.x + eps * rng.random_range(-1.0..1.0),
                p.y + eps * rng.random_range(-1.0..1.0),
                p.z + eps * rng.random_range(-1.0..1.0),
            ]
        })
        .collect()
}

/// Circumcentre, circumradius and unit normal of a triangle.
fn circumcircle(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(Vec3, f64, Vec3)> {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let n2 = n.norm_squared();
    if n2 <= 0.0 {
        return None;
    }
    let off = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / (2.0 * n2);
    Some((a + off, off.norm(), n / n2.sqrt()))
}

/// Delaunay faces with an empty ball of radius `radius` through their three
/// vertices. Points within a relative 1e-6 of the ball surface count as
/// outside, so co-circular samples do not punch holes.
fn alpha_exposed(pts: &[Vec3], faces: &[[usize; 3]], radius: f64) -> Vec<[usize; 3]> {
    let grid = Grid::new(pts, radius);
    let inner = radius * (1.0 - 1e-6);
    faces
        .iter()
        .filter(|f| {
            let Some((cc, r, n)) = circumcircle(&pts[f[0]], &pts[f[1]], &pts[f[2]]) else {
                return false;
            };
            if r >= radius {
                return false;
            }
            let h = (radius * radius - r * r).sqrt();
            [cc + n * h, cc - n * h].iter().any(|centre| !grid.any_within(centre, inner, |i| !f.contains(&i)))
        })
        .copied()
        .collect()
}

/// 2D convex hull of coplanar points extruded by ±[`PLANAR_HALF_THICKNESS`].
fn planar_patch(pts: &[Vec3], frame: &[Vec3; 3]) -> TriangleMesh {
    let uv: Vec<(f64, f64)> = pts.iter().map(|p| (p.dot(&frame[0]), p.dot(&frame[1]))).collect();
    let offset: f64 = pts.iter().map(|p| p.dot(&frame[2])).sum::<f64>() / pts.len() as f64;
    let ring = hull_2d(&uv);
    let k = ring.len();
    let lift = |(u, v): (f64, f64), s: f64| frame[0] * u + frame[1] * v + frame[2] * (offset + s);
    let mut vertices: Vec<Vec3> = ring.iter().map(|&i| lift(uv[i], PLANAR_HALF_THICKNESS)).collect();
    vertices.extend(ring.iter().map(|&i| lift(uv[i], -PLANAR_HALF_THICKNESS)));
    let mut triangles = Vec::new();
    for i in 1..k - 1 {
        triangles.push([0, i, i + 1]);
        triangles.push([k, k + i + 1, k + i]);
    }
    for i in 0..k {
        let j = (i + 1) % k;
        triangles.push([i, k + i, k + j]);
        triangles.push([i, k + j, j]);
    }
    TriangleMesh::from_raw(&vertices, triangles)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn hull_2d(p: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].0.total_cmp(&p[b].0).then(p[a].1.total_cmp(&p[b].1)));
    let cross = |o: usize, a: usize, b: usize| {
        robust::orient2d(
            robust::Coord { x: p[o].0, y: p[o].1 },
            robust::Coord { x: p[a].0, y: p[a].1 },
            robust::Coord { x: p[b].0, y: p[b].1 },
        )
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;
    use crate::shapes::{box_surface_samples, fibonacci_sphere};

    #[test]
    fn cube_corners_lie_on_hull() {
        let corners: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64 + 10.0))
            .collect();
        let s = reconstruct_surface(&PointCloud::new(corners.clone()).unwrap()).unwrap();
        assert_eq!(s.method, SurfaceMethod::ConvexHull);
        assert_eq!(s.mesh.triangles.len(), 12);
        for c in &corners {
            assert!(s.mesh.distance_to(c) < 1e-12);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(
            reconstruct_surface(&PointCloud::new(pts).unwrap()),
            Err(GtGenError::Collinear)
        ));
        let two = vec![Vec3::zeros(), Vec3::x()];
        assert!(matches!(
            reconstruct_surface(&PointCloud::new(two).unwrap()),
            Err(GtGenError::TooFewPoints(2))
        ));
    }

    #[test]
    fn planar_input_becomes_slab() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new((i % 5) as f64, (i / 5) as f64, 10.0)).collect();
        let s = reconstruct_surface(&PointCloud::new(pts.clone()).unwrap()).unwrap();
        assert_eq!(s.method, SurfaceMethod::PlanarPatch);
        for p in &pts {
            assert!(s.mesh.distance_to(p) <= PLANAR_HALF_THICKNESS + 1e-12);
        }
    }

    #[test]
    fn sphere_samples_within_chord_bound() {
        let c = Vec3::new(0.5, -0.3, 15.0);
        let pts = fibonacci_sphere(c, 1.0, 500);
        let s = reconstruct_surface(&PointCloud::new(pts.clone()).unwrap()).unwrap();
        assert_eq!(s.method, SurfaceMethod::AlphaShape);
        for p in &pts {
            assert!(s.mesh.distance_to(p) < 1e-9);
        }
        // faces are chords of circumradius below the ball radius, so they sit
        // within that chord's sagitta of the sphere
        let r = s.alpha_radius.unwrap();
        let sagitta = 1.0 - (1.0 - r * r).sqrt();
        for i in 0..s.mesh.triangles.len() {
            let [a, b, cc] = s.mesh.triangle(i);
            let centroid = (a + b + cc) / 3.0;
            assert!(1.0 - (centroid - c).norm() <= sagitta + 1e-12);
        }
    }

    #[test]
    fn box_shell_is_covered() {
        let bx = Box3D::new(Vec3::new(0.0, 0.0, 12.0), Vec3::new(2.0, 1.6, 1.2), 0.4).unwrap();
        let pts = box_surface_samples(&bx, 9);
        let s = reconstruct_surface(&PointCloud::new(pts).unwrap()).unwrap();
        assert_eq!(s.method, SurfaceMethod::AlphaShape);
        let area: f64 = (0..s.mesh.triangles.len())
            .map(|i| {
                let [a, b, c] = s.mesh.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum();
        let want = 2.0 * (2.0 * 1.6 + 2.0 * 1.2 + 1.6 * 1.2);
        assert!(area >= want - 1e-9, "area {area} < {want}");
    }
}
