//! Depth completion on a pixel mesh: mask pixels become vertices that slide
//! along their camera rays, lidar points pin some of them, and the rest are
//! solved coarse to fine by minimising the mesh losses. Reference forwards of
//! the aggregation and graph-convolution blocks live in [`forward`].

pub mod forward;
mod hierarchy;
mod loss;
mod mesh;
mod optimize;

pub use hierarchy::{build_stage_hierarchy, upsample_stage, ClusterAssignment, StageHierarchy, PARENTS};
pub use loss::{
    evaluate_stage, mesh_loss_gradient, mesh_losses, stage_gradient, stage_restrictions, LossComponents,
    LossWeights, MseTerm, StageMesh,
};
pub use mesh::{build_pixel_mesh, component_count, triangulate, PixelMesh, Topology};
pub use optimize::{deform_optimize, DensifyOutput, StageTrace};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DensifyError {
    #[error("empty mask")]
    EmptyMask,
    #[error("invalid anchor: {0}")]
    BadAnchor(String),
    #[error("no anchor vertices")]
    NoAnchors,
    #[error("vertex {0} has no parent in the coarser stage")]
    MissingParents(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss or gradient at stage {stage}, iteration {iteration}")]
    Diverged { stage: usize, iteration: usize },
    #[error("malformed parameters: {0}")]
    Params(String),
}
