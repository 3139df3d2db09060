//! Finite-difference checks of the mesh-loss gradient.

use crate::densify::{mesh_loss_gradient, mesh_losses, stage_restrictions, DensifyError, LossWeights, PixelMesh, StageHierarchy};

/// Base step of the central differences, in metres.
pub const FD_STEP: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst per-component relative errors of the analytic gradient at the
/// mesh's current depths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Against Richardson-extrapolated central differences at `h` and `h/2`.
    pub extrapolated: f64,
    /// Against plain central differences at `h`.
    pub central: f64,
    pub components: usize,
}

/// Full mesh loss as a function of all vertex depths.
pub fn total_loss(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    depths: &[f64],
    targets: Option<&[f64]>,
    weights: &LossWeights,
) -> Result<f64, DensifyError> {
    let p = stage_restrictions(hierarchy, depths);
    Ok(mesh_losses(mesh, hierarchy, [&p[0], &p[1], &p[2]], targets, weights)?.total)
}

/// Compares [`mesh_loss_gradient`] with finite differences of [`total_loss`]
/// over every free vertex. Anchors must receive an exactly zero gradient.
pub fn check_gradient(
    mesh: &PixelMesh,
    hierarchy: &StageHierarchy,
    targets: Option<&[f64]>,
    weights: &LossWeights,
    step: f64,
) -> Result<GradientCheck, DensifyError> {
    let g = mesh_loss_gradient(mesh, hierarchy, &mesh.depths, targets, weights)?;
    let mut depths = mesh.depths.clone();
    let mut central = |i: usize, h: f64| -> Result<f64, DensifyError> {
        let d0 = depths[i];
        depths[i] = d0 + h;
        let up = total_loss(mesh, hierarchy, &depths, targets, weights)?;
        depths[i] = d0 - h;
        let down = total_loss(mesh, hierarchy, &depths, targets, weights)?;
        depths[i] = d0;
        Ok((up - down) / (2.0 * h))
    };
    let mut out = GradientCheck {
        extrapolated: 0.0,
        central: 0.0,
        components: 0,
    };
    for i in 0..mesh.len() {
        if mesh.is_anchor[i] {
            if g[i] != 0.0 {
                out.extrapolated = f64::INFINITY;
                out.central = f64::INFINITY;
            }
            continue;
        }
        let full = central(i, step)?;
        let half = central(i, 0.5 * step)?;
        let rich = (4.0 * half - full) / 3.0;
        out.extrapolated = out.extrapolated.max(relative_error(rich, g[i]));
        out.central = out.central.max(relative_error(full, g[i]));
        out.components += 1;
    }
    Ok(out)
}

/// A random pixel mesh with anchors, its hierarchy and MSE targets.
#[derive(Debug, Clone)]
pub struct GradientInstance {
    pub mesh: PixelMesh,
    pub hierarchy: StageHierarchy,
    pub targets: Vec<f64>,
}

/// KITTI-like camera, a random blob of `n` pixels, a tilted and curved depth
/// field at 5–40 m with ±0.3 m per-vertex noise and roughly 30 % anchors.
pub fn random_instance<R: rand::Rng>(rng: &mut R, n: usize) -> GradientInstance {
    use crate::geometry::{CameraCalib, InstanceMask, ObjectClass};
    use std::collections::BTreeSet;

    let calib = CameraCalib::pinhole(721.5, 721.5, 609.6, 172.9, (1242, 375));
    let (u0, v0) = (rng.random_range(300..900u32), rng.random_range(100..200u32));
    let side = ((n as f64).sqrt() * 1.5) as u32 + 2;
    let mut px = BTreeSet::new();
    while px.len() < n {
        px.insert((u0 + rng.random_range(0..side), v0 + rng.random_range(0..side)));
    }
    let mask = InstanceMask::new(px.into_iter().collect(), calib.image_size, ObjectClass::Car).expect("in image");
    let mut mesh = crate::densify::build_pixel_mesh(&mask, &[], &calib).expect("non-empty mask");
    let base = rng.random_range(5.0..40.0);
    let (a, b, c) = (
        rng.random_range(-0.02..0.02),
        rng.random_range(-0.02..0.02),
        rng.random_range(-2e-4..2e-4),
    );
    for (i, d) in mesh.depths.iter_mut().enumerate() {
        let (u, v) = mask.pixels.as_slice()[i];
        let (x, y) = (u as f64 - u0 as f64, v as f64 - v0 as f64);
        *d = base + a * x + b * y + c * (x * x + y * y) + rng.random_range(-0.3..0.3);
    }
    for i in 0..n {
        mesh.is_anchor[i] = rng.random_bool(0.3);
    }
    mesh.anchors = (0..n).filter(|&i| mesh.is_anchor[i]).collect();
    let hierarchy = crate::densify::build_stage_hierarchy(&mesh, (0.5, 0.2)).expect("valid ratios");
    let targets = mesh.depths.iter().map(|d| d + rng.random_range(-0.2..0.2)).collect();
    GradientInstance { mesh, hierarchy, targets }
}
