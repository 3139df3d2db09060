//! Independent reference implementations used to check the optimized code
//! paths. Compiled for tests and under the `oracle` feature.

pub mod acceptance;
pub mod deform;
pub mod forward;
pub mod gradient;
pub mod metrics;
pub mod raycast;
pub mod scenes;
