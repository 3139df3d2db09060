use serde::{Deserialize, Serialize};

use super::hierarchy::{upsample_stage, StageHierarchy};
use super::loss::{evaluate_stage, stage_gradient, LossComponents, MseTerm, StageMesh};
use super::mesh::PixelMesh;
use super::DensifyError;
use crate::config::DensifyConfig;

/// Loss history of one stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTrace {
    pub vertices: usize,
    pub iterations: usize,
    /// Loss before the first step, then after each accepted step.
    pub losses: Vec<f64>,
    pub final_components: LossComponents,
    /// Stopped on the tolerance or a zero gradient, not on the iteration cap
    /// or an exhausted line search.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyOutput {
    /// Depth per mesh vertex (mask pixel order).
    pub depths: Vec<f64>,
    pub stages: [StageTrace; 3],
}

/// Normalised gradient descent on the free depths of one stage. The largest
/// update starts at `cfg.step` metres each iteration and is halved until the
/// loss does not increase.
fn optimize_stage(
    view: &StageMesh,
    depths: &mut [f64],
    mse: &[MseTerm],
    cfg: &DensifyConfig,
    stage: usize,
) -> Result<StageTrace, DensifyError> {
    let eval = |d: &[f64]| evaluate_stage(view, d, mse, cfg.omega_edge, cfg.omega_normal);
    let mut current = eval(depths)?;
    let mut trace = StageTrace {
        vertices: view.len(),
        losses: vec![current.total],
        ..StageTrace::default()
    };
    if !current.total.is_finite() {
        return Err(DensifyError::Diverged { stage, iteration: 0 });
    }
    if view.fixed.iter().all(|f| *f) {
        trace.converged = true;
        trace.final_components = current;
        return Ok(trace);
    }
    let mut trial = depths.to_vec();
    for it in 0..cfg.max_iters {
        let g = stage_gradient(view, depths, mse, cfg.omega_edge, cfg.omega_normal)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(DensifyError::Diverged { stage, iteration: it });
        }
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gmax == 0.0 {
            trace.converged = true;
            break;
        }
        let mut step = cfg.step / gmax;
        let mut accepted: Option<LossComponents> = None;
        for _ in 0..=cfg.max_halvings {
            for k in 0..depths.len() {
                trial[k] = depths[k] - step * g[k];
            }
            let c = eval(&trial)?;
            if c.total.is_finite() && c.total <= current.total {
                accepted = Some(c);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        trace.iterations = it + 1;
        let drop = current.total - next.total;
        depths.copy_from_slice(&trial);
        current = next;
        trace.losses.push(current.total);
        if drop <= cfg.tolerance * current.total.abs().max(f64::MIN_POSITIVE) {
            trace.converged = true;
            break;
        }
    }
    trace.final_components = current;
    Ok(trace)
}

/// Coarse-to-fine densification: optimise the coarse stage, interpolate into
/// the next stage, optimise again, and so on up to the full mesh. `targets`
/// (one depth per vertex) enable the per-stage MSE term; otherwise only the
/// anchors and the shape terms drive the depths.
pub fn deform_optimize(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    targets: Option<&[f64]>,
    cfg: &DensifyConfig,
) -> Result<DensifyOutput, DensifyError> {
    if mesh.anchors.is_empty() {
        return Err(DensifyError::NoAnchors);
    }
    if cfg.max_iters == 0 {
        return Err(DensifyError::Shape("max_iters must be at least 1".into()));
    }
    if let Some(t) = targets {
        if t.len() != mesh.len() {
            return Err(DensifyError::Shape(format!("{} targets for {} vertices", t.len(), mesh.len())));
        }
    }
    let mut traces: [StageTrace; 3] = Default::default();
    let mut depths: Vec<f64> = hierarchy.stages[0].iter().map(|&i| mesh.depths[i]).collect();
    for s in 0..3 {
        if s > 0 {
            depths = upsample_stage(&depths, hierarchy, s, mesh)?;
        }
        let view = StageMesh::stage(mesh, hierarchy, s);
        let mse: Vec<MseTerm> = targets
            .map(|t| MseTerm {
                weight: cfg.stage_weights[s],
                vertices: (0..view.len()).collect(),
                targets: view.vertices.iter().map(|&i| t[i]).collect(),
            })
            .into_iter()
            .collect();
        traces[s] = optimize_stage(&view, &mut depths, &mse, cfg, s)?;
    }
    Ok(DensifyOutput { depths, stages: traces })
}
