use serde::{Deserialize, Serialize};

use super::mesh::{triangulate, PixelMesh, Topology};
use super::DensifyError;

/// Number of parents each finer vertex interpolates from.
pub const PARENTS: usize = 3;

/// Three nested vertex sets, coarse to fine: `stages[0] ⊂ stages[1] ⊂ stages[2]`
/// where `stages[2]` is every mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHierarchy {
    /// Sorted mesh-vertex indices per stage.
    pub stages: [Vec<usize>; 3],
    /// Triangulation of each stage's pixels, indexed locally.
    pub topologies: [Topology; 3],
    /// `parents[s][k]`: `(coarse local index, weight)` pairs for vertex `k`
    /// of stage `s + 1`, interpolating from stage `s`. Weights sum to 1.
    pub parents: [Vec<Vec<(usize, f64)>>; 2],
}

fn stage_size(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Farthest-point sampling of `k` of `candidates` (mesh indices). Priority
/// vertices are taken first when they all fit, otherwise the sampling runs
/// over them alone. The first pick without priority vertices is the lowest
/// index; ties go to the lower index. Returns sorted indices.
fn farthest_points(mesh: &PixelMesh, candidates: &[usize], priority: &[usize], k: usize) -> Vec<usize> {
    let (pool, mut chosen): (&[usize], Vec<usize>) = if priority.len() <= k {
        (candidates, priority.to_vec())
    } else {
        (priority, Vec::new())
    };
    let pts: Vec<(f64, f64)> = pool.iter().map(|&i| mesh.pixel_f64(i)).collect();
    let mut taken = vec![false; pool.len()];
    let mut near = vec![f64::INFINITY; pool.len()];
    let update = |near: &mut [f64], p: (f64, f64)| {
        for (n, q) in near.iter_mut().zip(&pts) {
            *n = n.min(dist2(p, *q));
        }
    };
    for &c in &chosen {
        if let Ok(j) = pool.binary_search(&c) {
            taken[j] = true;
        }
        update(&mut near, mesh.pixel_f64(c));
    }
    while chosen.len() < k {
        let mut best: Option<usize> = None;
        for j in 0..pool.len() {
            if !taken[j] && best.is_none_or(|b| near[j] > near[b]) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        taken[j] = true;
        chosen.push(pool[j]);
        update(&mut near, pts[j]);
    }
    chosen.sort_unstable();
    chosen
}

/// Up to [`PARENTS`] nearest coarse vertices with inverse-distance weights;
/// a vertex present in the coarse stage maps to itself with weight 1.
fn parent_map(mesh: &PixelMesh, coarse: &[usize], fine: &[usize]) -> Vec<Vec<(usize, f64)>> {
    let cpts: Vec<(f64, f64)> = coarse.iter().map(|&i| mesh.pixel_f64(i)).collect();
    fine.iter()
        .map(|&f| {
            if let Ok(j) = coarse.binary_search(&f) {
                return vec![(j, 1.0)];
            }
            let p = mesh.pixel_f64(f);
            let mut near: Vec<(f64, usize)> = cpts.iter().enumerate().map(|(j, q)| (dist2(p, *q), j)).collect();
            let k = PARENTS.min(near.len());
            near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k);
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let inv: Vec<f64> = near.iter().map(|(d2, _)| 1.0 / d2.sqrt()).collect();
            let total: f64 = inv.iter().sum();
            near.iter().zip(&inv).map(|(&(_, j), w)| (j, w / total)).collect()
        })
        .collect()
}

/// Farthest-point hierarchy with `ratios = (mid, coarse)` of the vertex
/// count, anchors retained first.
pub fn build_stage_hierarchy(mesh: &PixelMesh, ratios: (f64, f64)) -> Result<StageHierarchy, DensifyError> {
    let n = mesh.len();
    if n == 0 {
        return Err(DensifyError::EmptyMask);
    }
    let all: Vec<usize> = (0..n).collect();
    let mid = farthest_points(mesh, &all, &mesh.anchors, stage_size(ratios.0, n));
    let mid_anchors: Vec<usize> = mid.iter().copied().filter(|&i| mesh.is_anchor[i]).collect();
    let coarse = farthest_points(mesh, &mid, &mid_anchors, stage_size(ratios.1, n).min(mid.len()));
    let topo = |ids: &[usize]| triangulate(&ids.iter().map(|&i| mesh.pixel_f64(i)).collect::<Vec<_>>());
    Ok(StageHierarchy {
        topologies: [topo(&coarse), topo(&mid), mesh.topology.clone()],
        parents: [parent_map(mesh, &coarse, &mid), parent_map(mesh, &mid, &all)],
        stages: [coarse, mid, all],
    })
}

/// Depths of stage `stage` (1 or 2) interpolated from the solved stage below;
/// anchors keep their lidar depth.
pub fn upsample_stage(
    coarse: &[f64],
    hierarchy: &StageHierarchy,
    stage: usize,
    mesh: &PixelMesh,
) -> Result<Vec<f64>, DensifyError> {
    if !(1..=2).contains(&stage) {
        return Err(DensifyError::Shape(format!("cannot upsample into stage {stage}")));
    }
    if coarse.len() != hierarchy.stages[stage - 1].len() {
        return Err(DensifyError::Shape(format!(
            "{} coarse depths for {} coarse vertices",
            coarse.len(),
            hierarchy.stages[stage - 1].len()
        )));
    }
    hierarchy.stages[stage]
        .iter()
        .zip(&hierarchy.parents[stage - 1])
        .map(|(&v, parents)| {
            if mesh.is_anchor[v] {
                return Ok(mesh.depths[v]);
            }
            if parents.is_empty() {
                return Err(DensifyError::MissingParents(v));
            }
            Ok(parents.iter().map(|&(j, w)| w * coarse[j]).sum())
        })
        .collect()
}

/// Anchors of `mesh` sorted by pixel distance to each query vertex and split
/// into `chunks` contiguous groups whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Query mesh-vertex indices.
    pub queries: Vec<usize>,
    /// Per query: positions in `mesh.anchors`, nearest first (ties by position).
    pub order: Vec<Vec<usize>>,
    /// Per query: sorted distances matching `order`.
    pub distances: Vec<Vec<f64>>,
    /// `chunks + 1` offsets into each `order` row.
    pub bounds: Vec<usize>,
}

impl ClusterAssignment {
    pub fn build(mesh: &PixelMesh, queries: &[usize], chunks: usize) -> Result<Self, DensifyError> {
        if chunks == 0 {
            return Err(DensifyError::Shape("at least one chunk".into()));
        }
        let t = mesh.anchors.len();
        let mut order = Vec::with_capacity(queries.len());
        let mut distances = Vec::with_capacity(queries.len());
        for &q in queries {
            let p = mesh.pixel_f64(q);
            let mut d: Vec<(f64, usize)> = mesh
                .anchors
                .iter()
                .enumerate()
                .map(|(k, &a)| (dist2(p, mesh.pixel_f64(a)).sqrt(), k))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order.push(d.iter().map(|x| x.1).collect());
            distances.push(d.iter().map(|x| x.0).collect());
        }
        let (base, extra) = (t / chunks, t % chunks);
        let mut bounds = vec![0];
        for c in 0..chunks {
            bounds.push(bounds[c] + base + usize::from(c < extra));
        }
        Ok(ClusterAssignment {
            queries: queries.to_vec(),
            order,
            distances,
            bounds,
        })
    }

    pub fn chunks(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Anchor positions of chunk `c` for query row `q`.
    pub fn chunk(&self, q: usize, c: usize) -> &[usize] {
        &self.order[q][self.bounds[c]..self.bounds[c + 1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densify::build_pixel_mesh;
    use crate::geometry::{CameraCalib, InstanceMask, ObjectClass};
    use proptest::prelude::*;

    fn calib() -> CameraCalib {
        CameraCalib::pinhole(700.0, 700.0, 600.0, 180.0, (1200, 360))
    }

    fn mesh(w: u32, h: u32, anchors: &[((u32, u32), f64)]) -> PixelMesh {
        let m = InstanceMask::rectangle(100, 100, w, h, (1200, 360), ObjectClass::Car).unwrap();
        build_pixel_mesh(&m, anchors, &calib()).unwrap()
    }

    fn is_subset(a: &[usize], b: &[usize]) -> bool {
        a.iter().all(|x| b.binary_search(x).is_ok())
    }

    #[test]
    fn ten_vertices_split_into_two_and_five() {
        let h = build_stage_hierarchy(&mesh(10, 1, &[]), (0.5, 0.2)).unwrap();
        assert_eq!(h.stages[0].len(), 2);
        assert_eq!(h.stages[1].len(), 5);
        assert_eq!(h.stages[2].len(), 10);
        // farthest points along a line: the two ends
        assert_eq!(h.stages[0], vec![0, 9]);
    }

    #[test]
    fn anchors_are_kept_first() {
        let anchors: Vec<((u32, u32), f64)> = (0..3).map(|i| ((100 + 2 * i, 101), 10.0)).collect();
        let h = build_stage_hierarchy(&mesh(5, 4, &anchors), (0.5, 0.2)).unwrap();
        let m = mesh(5, 4, &anchors);
        for a in &m.anchors {
            assert!(h.stages[0].contains(a), "{:?}", h.stages[0]);
        }
        // 30% anchors cannot all fit into the coarse 20%
        let many: Vec<((u32, u32), f64)> = (0..6).map(|i| ((100 + i % 5, 100 + 2 * (i / 5)), 10.0)).collect();
        let m = mesh(5, 4, &many);
        let h = build_stage_hierarchy(&m, (0.5, 0.2)).unwrap();
        assert_eq!(h.stages[0].len(), 4);
        assert!(h.stages[0].iter().all(|&i| m.is_anchor[i]));
        assert!(m.anchors.iter().all(|a| h.stages[1].contains(a)));
    }

    #[test]
    fn coincident_and_equidistant_parents() {
        let m = mesh(12, 9, &[((104, 104), 10.0)]);
        let h = build_stage_hierarchy(&m, (0.5, 0.2)).unwrap();
        for (k, &v) in h.stages[1].iter().enumerate() {
            if let Ok(j) = h.stages[0].binary_search(&v) {
                assert_eq!(h.parents[0][k], vec![(j, 1.0)]);
            }
        }
        let mut manual = h.clone();
        manual.stages = [vec![0, 1], vec![0, 1, 2], (0..m.len()).collect()];
        manual.parents[0] = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5), (0, 0.0)]];
        let d = upsample_stage(&[10.0, 12.0], &manual, 1, &mesh(12, 9, &[])).unwrap();
        assert_eq!(d, vec![10.0, 12.0, 11.0]);
    }

    #[test]
    fn chunks_cover_sorted_anchors() {
        let anchors: Vec<((u32, u32), f64)> = (0..7).map(|i| ((100 + i, 100 + i % 3), 10.0 + i as f64)).collect();
        let m = mesh(8, 4, &anchors);
        let c = ClusterAssignment::build(&m, &[0, 5, 31], 3).unwrap();
        assert_eq!(c.bounds, vec![0, 3, 5, 7]);
        for q in 0..3 {
            assert!(c.distances[q].windows(2).all(|w| w[0] <= w[1]));
            let mut all: Vec<usize> = (0..3).flat_map(|k| c.chunk(q, k).to_vec()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..7).collect::<Vec<_>>());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn hierarchy_invariants(w in 1u32..14, h in 1u32..14, picks in prop::collection::vec((0u32..14, 0u32..14, 2.0f64..40.0), 0..20)) {
            let anchors: Vec<((u32, u32), f64)> = picks.iter().filter(|p| p.0 < w && p.1 < h).map(|p| ((100 + p.0, 100 + p.1), p.2)).collect();
            let m = mesh(w, h, &anchors);
            let hier = build_stage_hierarchy(&m, (0.5, 0.2)).unwrap();
            let n = m.len() as f64;
            prop_assert!((hier.stages[1].len() as f64 - 0.5 * n).abs() <= 1.0 || hier.stages[1].len() == 1);
            prop_assert!((hier.stages[0].len() as f64 - 0.2 * n).abs() <= 1.0 || hier.stages[0].len() == 1);
            prop_assert!(is_subset(&hier.stages[0], &hier.stages[1]));
            prop_assert!(is_subset(&hier.stages[1], &hier.stages[2]));
            for s in 0..2 {
                prop_assert_eq!(hier.parents[s].len(), hier.stages[s + 1].len());
                for p in &hier.parents[s] {
                    prop_assert!(!p.is_empty());
                    prop_assert!((p.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            let coarse: Vec<f64> = (0..hier.stages[0].len()).map(|k| 5.0 + (k * 7 % 11) as f64).collect();
            let mid = upsample_stage(&coarse, &hier, 1, &m).unwrap();
            for (k, &v) in hier.stages[1].iter().enumerate() {
                if m.is_anchor[v] {
                    prop_assert_eq!(mid[k], m.depths[v]);
                    continue;
                }
                let ds: Vec<f64> = hier.parents[0][k].iter().map(|&(j, _)| coarse[j]).collect();
                let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(mid[k] >= lo - 1e-9 && mid[k] <= hi + 1e-9);
            }
        }
    }
}
