//! Shared domain types and coordinate conventions.
//!
//! Conventions used everywhere: right-handed coordinates, camera looks
//! down +z with x right and y down, image origin top-left, and pixel
//! (u, v) maps to the ray `K^-1 (u+0.5, v+0.5, 1)`. Depth always means
//! z-depth (distance along the camera axis). All internal arithmetic is
//! f64; file formats may narrow to f32 or u8 as documented per format.

mod camera;
mod cloud;
mod gaussian;
mod image;
pub mod io;
mod rng;

pub use camera::Camera;
pub use cloud::PointCloud;
pub use gaussian::{covariance_from_factors, Gaussian3D};
pub use image::{ColorImage, DepthMap, Mask};
pub use rng::{Rng, RngSnapshot};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{format} format error: {detail}")]
    Format { format: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SceneError {
    pub fn format(format: &'static str, detail: impl Into<String>) -> Self {
        SceneError::Format { format, detail: detail.into() }
    }
}
