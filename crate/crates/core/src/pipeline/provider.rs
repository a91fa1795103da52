use thiserror::Error;

use crate::scene::{Camera, ColorImage, DepthMap, Mask};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("unknown synthetic scene '{0}'")]
    UnknownScene(String),
    #[error("provider timed out after {waited_ms} ms waiting for {path}")]
    Timeout { path: String, waited_ms: u64 },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider response modified {changed} preserved pixels (first at {first:?})")]
    MaskViolation { changed: usize, first: (usize, usize) },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source of frames for the progressive loop: initial image synthesis,
/// mask-guided completion, and monocular depth. The active camera is
/// passed for context; file-bridged providers may ignore it.
pub trait FrameProvider {
    fn initial_image(
        &mut self,
        prompt: &str,
        camera: &Camera,
    ) -> Result<ColorImage, ProviderError>;

    /// Fills mask=0 pixels; mask=1 pixels must come back unchanged.
    fn complete_image(
        &mut self,
        partial: &ColorImage,
        mask: &Mask,
        camera: &Camera,
        prompt: &str,
    ) -> Result<ColorImage, ProviderError>;

    fn estimate_depth(
        &mut self,
        image: &ColorImage,
        camera: &Camera,
    ) -> Result<DepthMap, ProviderError>;
}

/// Verifies that a completion left every mask=1 pixel untouched.
/// Comparison is at 8-bit precision, the transport precision of
/// file-bridged providers.
pub fn check_mask_preservation(
    partial: &ColorImage,
    mask: &Mask,
    response: &ColorImage,
) -> Result<(), ProviderError> {
    if !response.same_shape(partial) {
        return Err(ProviderError::Malformed(format!(
            "completion is {}x{}, expected {}x{}",
            response.width(),
            response.height(),
            partial.width(),
            partial.height()
        )));
    }
    let quant = |v: f64| (v * 255.0).round() as i32;
    let mut changed = 0usize;
    let mut first = None;
    for y in 0..partial.height() {
        for x in 0..partial.width() {
            if !mask.get(x, y) {
                continue;
            }
            let a = partial.get(x, y);
            let b = response.get(x, y);
            if (0..3).any(|c| quant(a[c]) != quant(b[c])) {
                changed += 1;
                first.get_or_insert((x, y));
            }
        }
    }
    match first {
        Some(first) => Err(ProviderError::MaskViolation { changed, first }),
        None => Ok(()),
    }
}
