use serde::{Deserialize, Serialize};

use super::hierarchy::StageHierarchy;
use super::mesh::{PixelMesh, Topology};
use super::DensifyError;
use crate::config::DensifyConfig;
use crate::geometry::{Vec3, MIN_TRIANGLE_AREA};

/// Below this length an edge contributes no gradient.
const MIN_EDGE_LENGTH: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// `λ` per stage, coarse to fine.
    pub stage: [f64; 3],
    /// `ω₁`
    pub omega_edge: f64,
    /// `ω₂`
    pub omega_normal: f64,
}

impl From<&DensifyConfig> for LossWeights {
    fn from(c: &DensifyConfig) -> Self {
        LossWeights {
            stage: c.stage_weights,
            omega_edge: c.omega_edge,
            omega_normal: c.omega_normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    /// Weighted sum of the per-stage MSE terms.
    pub mse: f64,
    /// Mean 3D edge length.
    pub edge: f64,
    /// Mean `1 − cos` over adjacent face pairs.
    pub normal: f64,
    pub total: f64,
    /// Faces below the minimum area, left out of the normal term.
    pub degenerate_faces: usize,
}

/// `weight · mean((d_i − t_i)²)` over `vertices` (local indices).
#[derive(Debug, Clone, PartialEq)]
pub struct MseTerm {
    pub weight: f64,
    pub vertices: Vec<usize>,
    pub targets: Vec<f64>,
}

/// A vertex subset with its own triangulation; vertex `k` sits at
/// `origin + depth_k · rays[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMesh {
    /// Mesh-vertex index of each local vertex.
    pub vertices: Vec<usize>,
    pub origin: Vec3,
    pub rays: Vec<Vec3>,
    pub topology: Topology,
    /// Anchors: held fixed, zero gradient.
    pub fixed: Vec<bool>,
}

impl StageMesh {
    pub fn full(mesh: &PixelMesh) -> StageMesh {
        StageMesh {
            vertices: (0..mesh.len()).collect(),
            origin: mesh.origin,
            rays: mesh.rays.clone(),
            topology: mesh.topology.clone(),
            fixed: mesh.is_anchor.clone(),
        }
    }

    pub fn stage(mesh: &PixelMesh, hierarchy: &StageHierarchy, s: usize) -> StageMesh {
        let ids = &hierarchy.stages[s];
        StageMesh {
            vertices: ids.clone(),
            origin: mesh.origin,
            rays: ids.iter().map(|&i| mesh.rays[i]).collect(),
            topology: hierarchy.topologies[s].clone(),
            fixed: ids.iter().map(|&i| mesh.is_anchor[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn positions(&self, depths: &[f64]) -> Vec<Vec3> {
        self.rays.iter().zip(depths).map(|(w, d)| self.origin + w * *d).collect()
    }
}

struct FaceNormals {
    /// Unnormalised normal `(b − a) × (c − a)`.
    raw: Vec<Vec3>,
    valid: Vec<bool>,
}

fn face_normals(topology: &Topology, x: &[Vec3]) -> FaceNormals {
    let raw: Vec<Vec3> = topology
        .triangles
        .iter()
        .map(|t| (x[t[1]] - x[t[0]]).cross(&(x[t[2]] - x[t[0]])))
        .collect();
    let valid = raw.iter().map(|n| 0.5 * n.norm() >= MIN_TRIANGLE_AREA).collect();
    FaceNormals { raw, valid }
}

fn check(view: &StageMesh, depths: &[f64], mse: &[MseTerm]) -> Result<(), DensifyError> {
    if depths.len() != view.len() {
        return Err(DensifyError::Shape(format!("{} depths for {} vertices", depths.len(), view.len())));
    }
    for term in mse {
        if term.vertices.len() != term.targets.len() || term.vertices.iter().any(|&v| v >= view.len()) {
            return Err(DensifyError::Shape("malformed MSE term".into()));
        }
    }
    Ok(())
}

/// Loss of one stage mesh at `depths`.
pub fn evaluate_stage(
    view: &StageMesh,
    depths: &[f64],
    mse: &[MseTerm],
    omega_edge: f64,
    omega_normal: f64,
) -> Result<LossComponents, DensifyError> {
    check(view, depths, mse)?;
    let x = view.positions(depths);
    let mse_sum: f64 = mse
        .iter()
        .filter(|t| !t.vertices.is_empty())
        .map(|t| {
            let s: f64 = t.vertices.iter().zip(&t.targets).map(|(&v, y)| (depths[v] - y).powi(2)).sum();
            t.weight * s / t.vertices.len() as f64
        })
        .sum();
    let edges = &view.topology.edges;
    let edge = if edges.is_empty() {
        0.0
    } else {
        edges.iter().map(|&[i, j]| (x[i] - x[j]).norm()).sum::<f64>() / edges.len() as f64
    };
    let fnorm = face_normals(&view.topology, &x);
    let mut pairs = 0usize;
    let mut con = 0.0;
    for &[f, g] in &view.topology.face_pairs {
        if fnorm.valid[f] && fnorm.valid[g] {
            con += 1.0 - fnorm.raw[f].normalize().dot(&fnorm.raw[g].normalize());
            pairs += 1;
        }
    }
    let normal = if pairs == 0 { 0.0 } else { con / pairs as f64 };
    Ok(LossComponents {
        mse: mse_sum,
        edge,
        normal,
        total: mse_sum + omega_edge * edge + omega_normal * normal,
        degenerate_faces: fnorm.valid.iter().filter(|v| !**v).count(),
    })
}

/// Exact gradient of [`evaluate_stage`]'s total with respect to the depths;
/// zero on fixed vertices.
pub fn stage_gradient(
    view: &StageMesh,
    depths: &[f64],
    mse: &[MseTerm],
    omega_edge: f64,
    omega_normal: f64,
) -> Result<Vec<f64>, DensifyError> {
    check(view, depths, mse)?;
    let n = view.len();
    let x = view.positions(depths);
    let mut g = vec![0.0; n];
    for t in mse.iter().filter(|t| !t.vertices.is_empty()) {
        let c = 2.0 * t.weight / t.vertices.len() as f64;
        for (&v, y) in t.vertices.iter().zip(&t.targets) {
            g[v] += c * (depths[v] - y);
        }
    }
    // position gradients, projected onto the rays at the end
    let mut gx = vec![Vec3::zeros(); n];
    let edges = &view.topology.edges;
    if !edges.is_empty() && omega_edge != 0.0 {
        let c = omega_edge / edges.len() as f64;
        for &[i, j] in edges {
            let d = x[i] - x[j];
            let len = d.norm();
            if len < MIN_EDGE_LENGTH {
                continue;
            }
            let u = d * (c / len);
            gx[i] += u;
            gx[j] -= u;
        }
    }
    if omega_normal != 0.0 {
        let tris = &view.topology.triangles;
        let fnorm = face_normals(&view.topology, &x);
        let valid_pairs: Vec<[usize; 2]> = view
            .topology
            .face_pairs
            .iter()
            .copied()
            .filter(|&[f, g]| fnorm.valid[f] && fnorm.valid[g])
            .collect();
        if !valid_pairs.is_empty() {
            let c = omega_normal / valid_pairs.len() as f64;
            let unit: Vec<Vec3> = fnorm.raw.iter().map(|r| r.normalize()).collect();
            // gradient with respect to each raw normal
            let mut gn = vec![Vec3::zeros(); tris.len()];
            for &[f, h] in &valid_pairs {
                let (nf, nh) = (unit[f], unit[h]);
                gn[f] -= (nh - nf * nf.dot(&nh)) * (c / fnorm.raw[f].norm());
                gn[h] -= (nf - nh * nh.dot(&nf)) * (c / fnorm.raw[h].norm());
            }
            for (t, q) in tris.iter().zip(&gn) {
                if *q == Vec3::zeros() {
                    continue;
                }
                let [a, b, cc] = [x[t[0]], x[t[1]], x[t[2]]];
                gx[t[0]] += q.cross(&(cc - b));
                gx[t[1]] += q.cross(&(a - cc));
                gx[t[2]] += q.cross(&(b - a));
            }
        }
    }
    for k in 0..n {
        g[k] += gx[k].dot(&view.rays[k]);
        if view.fixed[k] {
            g[k] = 0.0;
        }
    }
    Ok(g)
}

fn stage_mse(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    stage_preds: [&[f64]; 3],
    targets: Option<&[f64]>,
    weights: &LossWeights,
) -> Result<f64, DensifyError> {
    let Some(t) = targets else { return Ok(0.0) };
    if t.len() != mesh.len() {
        return Err(DensifyError::Shape(format!("{} targets for {} vertices", t.len(), mesh.len())));
    }
    let mut total = 0.0;
    for s in 0..3 {
        let ids = &hierarchy.stages[s];
        if stage_preds[s].len() != ids.len() {
            return Err(DensifyError::Shape(format!("stage {s}: {} predictions for {} vertices", stage_preds[s].len(), ids.len())));
        }
        let sq: f64 = ids.iter().zip(stage_preds[s]).map(|(&i, p)| (p - t[i]).powi(2)).sum();
        total += weights.stage[s] * sq / ids.len() as f64;
    }
    Ok(total)
}

/// `Σ λ_s MSE_s + ω₁ L_edge + ω₂ L_con`. The MSE of stage `s` compares its
/// predictions with `targets` (one per mesh vertex) on that stage's
/// vertices; the shape terms use the finest predictions on the full mesh.
/// Without targets the MSE part is zero.
pub fn mesh_losses(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    stage_preds: [&[f64]; 3],
    targets: Option<&[f64]>,
    weights: &LossWeights,
) -> Result<LossComponents, DensifyError> {
    let mse = stage_mse(mesh, hierarchy, stage_preds, targets, weights)?;
    let mut c = evaluate_stage(&StageMesh::full(mesh), stage_preds[2], &[], weights.omega_edge, weights.omega_normal)?;
    c.mse = mse;
    c.total += mse;
    Ok(c)
}

/// Gradient of [`mesh_losses`] when every stage predicts the same per-vertex
/// `depths`. Anchors get zero.
pub fn mesh_loss_gradient(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    depths: &[f64],
    targets: Option<&[f64]>,
    weights: &LossWeights,
) -> Result<Vec<f64>, DensifyError> {
    let mse: Vec<MseTerm> = match targets {
        Some(t) => {
            if t.len() != mesh.len() {
                return Err(DensifyError::Shape(format!("{} targets for {} vertices", t.len(), mesh.len())));
            }
            (0..3)
                .map(|s| MseTerm {
                    weight: weights.stage[s],
                    vertices: hierarchy.stages[s].clone(),
                    targets: hierarchy.stages[s].iter().map(|&i| t[i]).collect(),
                })
                .collect()
        }
        None => Vec::new(),
    };
    stage_gradient(&StageMesh::full(mesh), depths, &mse, weights.omega_edge, weights.omega_normal)
}

/// Restriction of per-vertex depths to each stage.
pub fn stage_restrictions(hierarchy: &StageHierarchy, depths: &[f64]) -> [Vec<f64>; 3] {
    std::array::from_fn(|s| hierarchy.stages[s].iter().map(|&i| depths[i]).collect())
}
