//! Core library for progressive Gaussian-splat scene generation:
//! point-cloud assembly from posed RGB+depth frames, a CPU differentiable
//! splat renderer with depth-prior regularization, and an entropy-coded
//! compression codec for anchor-based splat scenes.

pub mod autodiff;
pub mod dpr;
pub mod geometry;
pub mod render;
pub mod scc;
pub mod scene;
