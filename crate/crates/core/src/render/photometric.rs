use super::RenderError;
use crate::autodiff::Scalar;
use crate::scene::{ColorImage, Mask};

/// SSIM window side (Gaussian-weighted, sigma 1.5, replicate borders).
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub(crate) fn ssim_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
        sum += *t;
    }
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with replicated borders.
fn blur<R: Scalar>(src: &[R], w: usize, h: usize) -> Vec<R> {
    let taps = ssim_taps();
    let half = SSIM_WINDOW / 2;
    let mut tmp = Vec::with_capacity(w * h);
    let mut window = [src[0]; SSIM_WINDOW];
    for y in 0..h {
        for x in 0..w {
            for (k, slot) in window.iter_mut().enumerate() {
                let xi = (x + k).saturating_sub(half).min(w - 1);
                *slot = src[y * w + xi];
            }
            tmp.push(R::lincomb_of(&window, &taps));
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            for (k, slot) in window.iter_mut().enumerate() {
                let yi = (y + k).saturating_sub(half).min(h - 1);
                *slot = tmp[yi * w + x];
            }
            out.push(R::lincomb_of(&window, &taps));
        }
    }
    out
}

/// Photometric training loss over valid pixels:
/// `(1 - lambda) * L1 + lambda * (1 - SSIM)`, the 3DGS objective with
/// `lambda = 0.2`. Returns 0 for an empty mask.
pub fn photometric_loss_generic<R: Scalar>(
    rendered: &[[R; 3]],
    width: usize,
    height: usize,
    target: &ColorImage,
    valid: &Mask,
    lambda_ssim: f64,
) -> Result<R, RenderError> {
    if rendered.len() != width * height
        || target.width() != width
        || target.height() != height
        || valid.width() != width
        || valid.height() != height
    {
        return Err(RenderError::ShapeMismatch(format!(
            "rendered {} px, target {}x{}, mask {}x{}, expected {width}x{height}",
            rendered.len(),
            target.width(),
            target.height(),
            valid.width(),
            valid.height(),
        )));
    }
    let zero = rendered[0][0].constant_like(0.0);
    let n_valid = valid.count_true();
    if n_valid == 0 {
        return Ok(zero);
    }

    // L1 over valid pixels, averaged over pixels and channels
    let mut l1_terms = Vec::with_capacity(3 * n_valid);
    for y in 0..height {
        for x in 0..width {
            if !valid.get(x, y) {
                continue;
            }
            let t = target.get(x, y);
            let r = rendered[y * width + x];
            for c in 0..3 {
                l1_terms.push(r[c].shift(-t[c]).abs());
            }
        }
    }
    let l1 = R::sum_of(&l1_terms).scale(1.0 / (3 * n_valid) as f64);

    // SSIM per channel, averaged over valid pixels and channels
    let mut ssim_terms = Vec::with_capacity(3 * n_valid);
    for c in 0..3 {
        let xs: Vec<R> = rendered.iter().map(|p| p[c]).collect();
        let ts: Vec<f64> = target.pixels().iter().map(|p| p[c]).collect();
        let xx: Vec<R> = xs.iter().map(|v| v.square()).collect();
        let xt: Vec<R> = xs.iter().zip(&ts).map(|(v, t)| v.scale(*t)).collect();

        let mu_x = blur(&xs, width, height);
        let mu_y = blur(&ts, width, height);
        let e_xx = blur(&xx, width, height);
        let e_tt = blur(&ts.iter().map(|t| t * t).collect::<Vec<_>>(), width, height);
        let e_xt = blur(&xt, width, height);

        for y in 0..height {
            for x in 0..width {
                if !valid.get(x, y) {
                    continue;
                }
                let i = y * width + x;
                let sigma_x2 = e_xx[i] - mu_x[i].square();
                let sigma_y2 = e_tt[i] - mu_y[i] * mu_y[i];
                let sigma_xy = e_xt[i] - mu_x[i].scale(mu_y[i]);
                let num = mu_x[i].scale(2.0 * mu_y[i]).shift(C1) * sigma_xy.scale(2.0).shift(C2);
                let den =
                    mu_x[i].square().shift(mu_y[i] * mu_y[i] + C1) * sigma_x2.shift(sigma_y2 + C2);
                ssim_terms.push(num / den);
            }
        }
    }
    let mean_ssim = R::sum_of(&ssim_terms).scale(1.0 / (3 * n_valid) as f64);
    let dssim = -mean_ssim + zero.shift(1.0);
    Ok(l1.scale(1.0 - lambda_ssim) + dssim.scale(lambda_ssim))
}

/// Concrete-image front-end with the standard weight `lambda = 0.2`.
pub fn photometric_loss(
    rendered: &ColorImage,
    target: &ColorImage,
    valid: &Mask,
) -> Result<f64, RenderError> {
    photometric_loss_generic(
        rendered.pixels(),
        rendered.width(),
        rendered.height(),
        target,
        valid,
        0.2,
    )
}
