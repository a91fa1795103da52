//! Depth prior-based regularization: a gradient-aware Huber pixel loss,
//! a central-moment-discrepancy distribution loss, and a bilateral
//! smoothness loss, combined with fixed weights.

use thiserror::Error;

use crate::autodiff::Scalar;
use crate::scene::{ColorImage, DepthMap, Mask};

/// Huber threshold fraction of the max residual (fixed by the loss
/// definition, not configurable).
pub const HUBER_DELTA_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum DprError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DprConfig {
    pub lambda_pixel: f64,
    pub lambda_dist: f64,
    pub lambda_smooth: f64,
    /// Highest central-moment order in the CMD loss.
    pub cmd_order: usize,
    pub sigma_spatial: f64,
    pub sigma_color: f64,
    /// Bilateral window side, odd and >= 3.
    pub window: usize,
    /// Keep the k=1 CMD term identically zero, reading the formula
    /// literally instead of substituting the mean difference.
    pub strict_paper_cmd: bool,
}

impl Default for DprConfig {
    fn default() -> Self {
        Self {
            lambda_pixel: 0.7,
            lambda_dist: 0.1,
            lambda_smooth: 1.0,
            cmd_order: 5,
            sigma_spatial: 2.0,
            sigma_color: 0.1,
            window: 5,
            strict_paper_cmd: false,
        }
    }
}

impl DprConfig {
    pub fn validate(&self) -> Result<(), DprError> {
        if self.cmd_order == 0 {
            return Err(DprError::InvalidArgument("cmd_order must be positive".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(DprError::InvalidArgument(format!(
                "bilateral window {} must be odd and >= 3",
                self.window
            )));
        }
        if self.sigma_spatial <= 0.0 || self.sigma_color <= 0.0 {
            return Err(DprError::InvalidArgument("bilateral sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term values (plain numbers, for logging) of one DPR evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct DprBreakdown {
    pub pixel: f64,
    pub dist: f64,
    pub smooth: f64,
    /// Set when a term degenerated (empty mask / too few valid pixels).
    pub warned: bool,
}

/// Per-pixel edge-awareness weights `g = exp(-|grad luma|)` via central
/// differences with replicated borders. Weights lie in (0, 1] and are
/// constants w.r.t. the rendered depth.
pub fn gradient_weight(image: &ColorImage) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![1.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = image.luma(x.saturating_sub(1), y);
            let xp = image.luma((x + 1).min(w - 1), y);
            let ym = image.luma(x, y.saturating_sub(1));
            let yp = image.luma(x, (y + 1).min(h - 1));
            let gx = 0.5 * (xp - xm);
            let gy = 0.5 * (yp - ym);
            out[y * w + x] = libm::exp(-(gx * gx + gy * gy).sqrt());
        }
    }
    out
}

fn check_shapes<R: Scalar>(
    prior: &DepthMap,
    dhat: &[R],
    valid: &Mask,
) -> Result<(usize, usize), DprError> {
    let (w, h) = (prior.width(), prior.height());
    if dhat.len() != w * h || valid.width() != w || valid.height() != h {
        return Err(DprError::ShapeMismatch(format!(
            "prior {w}x{h}, rendered {} px, mask {}x{}",
            dhat.len(),
            valid.width(),
            valid.height()
        )));
    }
    Ok((w, h))
}

/// Gradient-aware Huber depth loss. The threshold is
/// `delta = 0.2 * max |D - Dhat|` over supervised pixels; each pixel uses
/// the plain absolute branch above the threshold and the smoothed
/// quadratic `(r^2 + delta^2) / (2 delta)` below it, weighted by `g` and
/// averaged. Returns `(0, warned)` when no pixel is supervised or every
/// residual is zero.
pub fn pixel_depth_loss<R: Scalar>(
    prior: &DepthMap,
    dhat: &[R],
    weights: &[f64],
    valid: &Mask,
) -> Result<(R, bool), DprError> {
    let (w, h) = check_shapes(prior, dhat, valid)?;
    if weights.len() != w * h {
        return Err(DprError::ShapeMismatch("weight map shape".into()));
    }
    let zero = dhat[0].constant_like(0.0);

    let mut residuals = Vec::new();
    let mut gs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !valid.get(x, y) {
                continue;
            }
            let Some(d) = prior.get(x, y) else { continue };
            let r = -dhat[y * w + x] + zero.constant_like(d);
            residuals.push(r);
            gs.push(weights[y * w + x]);
        }
    }
    if residuals.is_empty() {
        return Ok((zero, true));
    }

    let mut max_abs = residuals[0].abs();
    for r in &residuals[1..] {
        max_abs = max_abs.vmax(r.abs());
    }
    if max_abs.value() == 0.0 {
        return Ok((zero, false));
    }
    let delta = max_abs.scale(HUBER_DELTA_FRACTION);

    let mut terms = Vec::with_capacity(residuals.len());
    for (r, g) in residuals.iter().zip(&gs) {
        let rho = if r.value().abs() > delta.value() {
            r.abs()
        } else {
            (r.square() + delta.square()) / delta.scale(2.0)
        };
        terms.push(rho.scale(*g));
    }
    Ok((R::sum_of(&terms).scale(1.0 / terms.len() as f64), false))
}

/// k-th central moment `mean((x - mean(x))^k)`.
pub fn central_moment<R: Scalar>(samples: &[R], k: usize) -> Result<R, DprError> {
    if samples.is_empty() {
        return Err(DprError::InvalidArgument("central_moment of empty sample set".into()));
    }
    if k == 0 {
        return Err(DprError::InvalidArgument("moment order must be positive".into()));
    }
    let inv_n = 1.0 / samples.len() as f64;
    let mean = R::sum_of(samples).scale(inv_n);
    let powed: Vec<R> = samples.iter().map(|x| (*x - mean).powi_c(k as i32)).collect();
    Ok(R::sum_of(&powed).scale(inv_n))
}

/// Central moment discrepancy up to order `order`, on jointly min-max
/// normalized samples. The k=1 term uses the mean difference (first
/// central moments vanish identically); `strict_k1_zero` drops it.
pub fn cmd_distance<R: Scalar>(
    p: &[R],
    q: &[R],
    order: usize,
    strict_k1_zero: bool,
) -> Result<R, DprError> {
    if p.is_empty() || q.is_empty() {
        return Err(DprError::InvalidArgument("cmd_distance of empty sample set".into()));
    }
    if order == 0 {
        return Err(DprError::InvalidArgument("cmd order must be positive".into()));
    }
    let zero = p[0].constant_like(0.0);

    let mut lo = p[0];
    let mut hi = p[0];
    for v in p.iter().chain(q.iter()) {
        lo = lo.vmin(*v);
        hi = hi.vmax(*v);
    }
    let range = hi - lo;
    if range.value() == 0.0 {
        return Ok(zero); // every sample identical: all moments agree
    }
    let inv_range = range.recip();
    let pn: Vec<R> = p.iter().map(|v| (*v - lo) * inv_range).collect();
    let qn: Vec<R> = q.iter().map(|v| (*v - lo) * inv_range).collect();

    let mut total = zero;
    if !strict_k1_zero {
        let mp = R::sum_of(&pn).scale(1.0 / pn.len() as f64);
        let mq = R::sum_of(&qn).scale(1.0 / qn.len() as f64);
        total = total + (mp - mq).abs();
    }
    for k in 2..=order {
        let a = central_moment(&pn, k)?;
        let b = central_moment(&qn, k)?;
        total = total + (a - b).abs();
    }
    Ok(total)
}

/// CMD between the supervised depth values of the prior and the render.
/// Returns `(0, warned)` with fewer than two supervised pixels.
pub fn dist_depth_loss<R: Scalar>(
    prior: &DepthMap,
    dhat: &[R],
    valid: &Mask,
    order: usize,
    strict_k1_zero: bool,
) -> Result<(R, bool), DprError> {
    let (w, h) = check_shapes(prior, dhat, valid)?;
    let zero = dhat[0].constant_like(0.0);
    let mut p = Vec::new();
    let mut q = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !valid.get(x, y) {
                continue;
            }
            let Some(d) = prior.get(x, y) else { continue };
            p.push(zero.constant_like(d));
            q.push(dhat[y * w + x]);
        }
    }
    if p.len() < 2 {
        return Ok((zero, true));
    }
    Ok((cmd_distance(&p, &q, order, strict_k1_zero)?, false))
}

/// Bilateral smoothness: mean over valid pixels of the spatially- and
/// value-weighted squared depth differences inside the window, with the
/// neighborhood restricted to valid pixels and excluding the center.
/// Pixels with empty neighborhoods contribute zero.
pub fn smooth_depth_loss<R: Scalar>(
    dhat: &[R],
    width: usize,
    height: usize,
    valid: &Mask,
    config: &DprConfig,
) -> Result<R, DprError> {
    config.validate()?;
    if dhat.len() != width * height || valid.width() != width || valid.height() != height {
        return Err(DprError::ShapeMismatch("smooth loss shapes".into()));
    }
    let zero = dhat[0].constant_like(0.0);
    let half = (config.window / 2) as isize;
    let inv_2ss = 1.0 / (2.0 * config.sigma_spatial * config.sigma_spatial);
    let inv_2sc = 1.0 / (2.0 * config.sigma_color * config.sigma_color);

    let mut center_count = 0usize;
    let mut pixel_terms: Vec<R> = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if !valid.get(x, y) {
                continue;
            }
            center_count += 1;
            let dp = dhat[y * width + x];
            let mut terms = Vec::new();
            for dj in -half..=half {
                for di in -half..=half {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let qx = x as isize + di;
                    let qy = y as isize + dj;
                    if qx < 0 || qy < 0 || qx >= width as isize || qy >= height as isize {
                        continue;
                    }
                    if !valid.get(qx as usize, qy as usize) {
                        continue;
                    }
                    let g_s = libm::exp(-((di * di + dj * dj) as f64) * inv_2ss);
                    let diff = dp - dhat[qy as usize * width + qx as usize];
                    let g_c = (diff.square().scale(-inv_2sc)).exp();
                    terms.push((g_c * diff.square()).scale(g_s));
                }
            }
            if !terms.is_empty() {
                let n = terms.len() as f64;
                pixel_terms.push(R::sum_of(&terms).scale(1.0 / n));
            }
        }
    }
    if center_count == 0 || pixel_terms.is_empty() {
        return Ok(zero);
    }
    Ok(R::sum_of(&pixel_terms).scale(1.0 / center_count as f64))
}

/// Weighted sum of the three terms.
pub fn combine_terms(pixel: f64, dist: f64, smooth: f64, config: &DprConfig) -> f64 {
    config.lambda_pixel * pixel + config.lambda_dist * dist + config.lambda_smooth * smooth
}

/// Full DPR loss with the per-term breakdown for logging.
pub fn dpr_loss<R: Scalar>(
    prior: &DepthMap,
    dhat: &[R],
    image: &ColorImage,
    valid: &Mask,
    config: &DprConfig,
) -> Result<(R, DprBreakdown), DprError> {
    config.validate()?;
    let weights = gradient_weight(image);
    let (pixel, warn_p) = pixel_depth_loss(prior, dhat, &weights, valid)?;
    let (dist, warn_d) =
        dist_depth_loss(prior, dhat, valid, config.cmd_order, config.strict_paper_cmd)?;
    let smooth = smooth_depth_loss(dhat, prior.width(), prior.height(), valid, config)?;
    let total = pixel.scale(config.lambda_pixel)
        + dist.scale(config.lambda_dist)
        + smooth.scale(config.lambda_smooth);
    let breakdown = DprBreakdown {
        pixel: pixel.value(),
        dist: dist.value(),
        smooth: smooth.value(),
        warned: warn_p || warn_d,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests;
