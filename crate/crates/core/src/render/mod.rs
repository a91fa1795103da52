//! CPU differentiable Gaussian splatting: front-to-back alpha blending of
//! perspective-projected anisotropic splats, producing color, unnormalized
//! z-depth, and accumulated alpha per pixel.

mod photometric;
mod splat;

pub use photometric::{photometric_loss, photometric_loss_generic, SSIM_WINDOW};
pub use splat::{render, render_generic, GaussianParams, RenderBuffers, RenderConfig};

use thiserror::Error;

use crate::scene::{ColorImage, DepthMap, Gaussian3D};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Renderable set of Gaussians plus a background color composited into
/// the residual transmittance of the color channel only.
#[derive(Debug, Clone)]
pub struct SplatScene {
    pub gaussians: Vec<Gaussian3D>,
    pub background: [f64; 3],
}

impl SplatScene {
    pub fn new(gaussians: Vec<Gaussian3D>, background: [f64; 3]) -> Self {
        Self { gaussians, background }
    }
}

/// Per-pixel render result.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ColorImage,
    pub depth: DepthMap,
    /// Accumulated alpha per pixel, row-major.
    pub alpha: Vec<f64>,
}

impl RenderOutput {
    pub fn alpha_at(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.color.width() + x]
    }
}
