use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::DensifyError;
use crate::geometry::{CameraCalib, InstanceMask, Vec3};

/// Connectivity of a planar vertex set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Undirected edges `[i, j]` with `i < j`, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Triangles with positive signed area in `(u, v)` coordinates.
    pub triangles: Vec<[usize; 3]>,
    /// Pairs of triangles sharing an edge.
    pub face_pairs: Vec<[usize; 2]>,
    /// Set when the input was collinear (or had fewer than three points) and
    /// the vertices were joined into a chain.
    pub chain: bool,
}

fn cross2(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn chain(points: &[(f64, f64)]) -> Topology {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1))
    });
    let mut edges: Vec<[usize; 2]> = order.windows(2).map(|w| [w[0].min(w[1]), w[0].max(w[1])]).collect();
    edges.sort_unstable();
    Topology {
        edges,
        triangles: Vec::new(),
        face_pairs: Vec::new(),
        chain: true,
    }
}

/// Delaunay triangulation of distinct 2D points; a chain along the line for
/// collinear input or fewer than three points.
pub fn triangulate(points: &[(f64, f64)]) -> Topology {
    if points.len() < 3 || points.iter().all(|p| cross2(points[0], points[1], *p) == 0.0) {
        return chain(points);
    }
    let verts: Vec<Point2<f64>> = points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(verts).expect("finite distinct points");
    assert_eq!(dt.num_vertices(), points.len(), "duplicate points");
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices().map(|v| v.fix().index());
            if cross2(points[a], points[b], points[c]) > 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            }
        })
        .collect();
    triangles.sort_unstable();
    let mut edges: Vec<[usize; 2]> = dt
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices().map(|v| v.fix().index());
            [a.min(b), a.max(b)]
        })
        .collect();
    edges.sort_unstable();
    let face_pairs = face_pairs(&triangles);
    Topology {
        edges,
        triangles,
        face_pairs,
        chain: false,
    }
}

fn face_pairs(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut by_edge: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
    for (f, t) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            by_edge.entry([a.min(b), a.max(b)]).or_default().push(f);
        }
    }
    let mut pairs: Vec<[usize; 2]> = by_edge
        .values()
        .filter(|fs| fs.len() == 2)
        .map(|fs| [fs[0].min(fs[1]), fs[0].max(fs[1])])
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Number of connected components of the edge graph over `n` vertices.
pub fn component_count(n: usize, edges: &[[usize; 2]]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut count = n;
    for &[a, b] in edges {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            count -= 1;
        }
    }
    count
}

/// Mask pixels as mesh vertices whose depth can move along the pixel ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMesh {
    pub mask: InstanceMask,
    /// Vertex `i` sits on mask pixel `i` (row-major mask order).
    pub pixels: Vec<(u32, u32)>,
    pub depths: Vec<f64>,
    pub topology: Topology,
    /// Sorted vertex indices with a lidar depth.
    pub anchors: Vec<usize>,
    pub is_anchor: Vec<bool>,
    /// Optical centre; a vertex lies at `origin + depth · rays[i]`.
    pub origin: Vec3,
    pub rays: Vec<Vec3>,
    pub components: usize,
}

impl PixelMesh {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.origin + self.rays[i] * self.depths[i]
    }

    pub fn anchor_depths(&self) -> Vec<f64> {
        self.anchors.iter().map(|&i| self.depths[i]).collect()
    }

    pub fn pixel_f64(&self, i: usize) -> (f64, f64) {
        (self.pixels[i].0 as f64, self.pixels[i].1 as f64)
    }
}

/// Triangulates the mask pixels and pins the anchors. Several anchors on one
/// pixel keep the nearest depth. Free vertices start at the mean anchor depth
/// (1 m without anchors).
pub fn build_pixel_mesh(
    mask: &InstanceMask,
    anchors: &[((u32, u32), f64)],
    calib: &CameraCalib,
) -> Result<PixelMesh, DensifyError> {
    let pixels: Vec<(u32, u32)> = mask.pixels.iter().collect();
    let n = pixels.len();
    if n == 0 {
        return Err(DensifyError::EmptyMask);
    }
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    for &(px, d) in anchors {
        if !(d > 0.0 && d.is_finite()) {
            return Err(DensifyError::BadAnchor(format!("depth {d} at {px:?}")));
        }
        let i = mask
            .pixels
            .index_of(px)
            .ok_or_else(|| DensifyError::BadAnchor(format!("pixel {px:?} outside the mask")))?;
        pinned[i] = Some(pinned[i].map_or(d, |e: f64| e.min(d)));
    }
    let anchor_idx: Vec<usize> = (0..n).filter(|&i| pinned[i].is_some()).collect();
    let init = if anchor_idx.is_empty() {
        1.0
    } else {
        anchor_idx.iter().map(|&i| pinned[i].unwrap()).sum::<f64>() / anchor_idx.len() as f64
    };
    let depths = pinned.iter().map(|p| p.unwrap_or(init)).collect();
    let pts: Vec<(f64, f64)> = pixels.iter().map(|&(u, v)| (u as f64, v as f64)).collect();
    let topology = triangulate(&pts);
    let rays = pts.iter().map(|&(u, v)| calib.depth_ray(u, v)).collect();
    let components = component_count(n, &topology.edges);
    Ok(PixelMesh {
        mask: mask.clone(),
        pixels,
        depths,
        topology,
        is_anchor: pinned.iter().map(Option::is_some).collect(),
        anchors: anchor_idx,
        origin: calib.optical_center(),
        rays,
        components,
    })
}
