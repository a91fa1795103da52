use super::GeometryError;
use crate::scene::{DepthMap, Mask};

/// Minimum usable overlap pixels before alignment refuses to run.
pub const MIN_OVERLAP_DEFAULT: usize = 16;

const SCALE_CLAMP: (f64, f64) = (1e-3, 1e3);

/// Outcome of affine depth alignment.
#[derive(Debug, Clone)]
pub struct AlignedDepth {
    pub depth: DepthMap,
    pub scale: f64,
    pub shift: f64,
    pub overlap_count: usize,
    /// Set when the overlap was depth-constant and only a shift was fitted.
    pub shift_only: bool,
}

/// Fits `s * new + t ~= reference` by least squares over the overlap and
/// applies the map to every pixel of `new_depth`. The overlap counts only
/// pixels valid in both maps; a constant `new_depth` over the overlap
/// falls back to shift-only alignment. `s` is clamped to [1e-3, 1e3].
/// Pixels whose mapped value is no longer positive become invalid.
pub fn align_depth(
    new_depth: &DepthMap,
    reference_depth: &DepthMap,
    overlap: &Mask,
    min_overlap: usize,
) -> Result<AlignedDepth, GeometryError> {
    if !new_depth.same_shape(reference_depth)
        || overlap.width() != new_depth.width()
        || overlap.height() != new_depth.height()
    {
        return Err(GeometryError::ShapeMismatch("depth/overlap shapes differ".into()));
    }
    let (w, h) = (new_depth.width(), new_depth.height());

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !overlap.get(x, y) {
                continue;
            }
            if let (Some(a), Some(b)) = (new_depth.get(x, y), reference_depth.get(x, y)) {
                xs.push(a);
                ys.push(b);
            }
        }
    }
    let n = xs.len();
    if n < min_overlap.max(1) {
        return Err(GeometryError::AlignmentFailed { overlap: n, required: min_overlap });
    }

    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }

    // constant new depth over the overlap: scale is unidentifiable
    let degenerate = sxx <= 1e-12 * nf * mean_x.abs().max(1.0).powi(2);
    let (scale, shift_only) = if degenerate {
        (1.0, true)
    } else {
        ((sxy / sxx).clamp(SCALE_CLAMP.0, SCALE_CLAMP.1), false)
    };
    let shift = mean_y - scale * mean_x;

    let mut out = DepthMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            if let Some(v) = new_depth.get(x, y) {
                let mapped = scale * v + shift;
                if mapped > 0.0 && mapped.is_finite() {
                    out.set(x, y, mapped);
                }
            }
        }
    }
    Ok(AlignedDepth { depth: out, scale, shift, overlap_count: n, shift_only })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Rng;
    use proptest::prelude::*;

    fn random_depth(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> DepthMap {
        let mut rng = Rng::seed_from(seed);
        let vals = (0..w * h).map(|_| rng.uniform_in(lo, hi)).collect();
        DepthMap::dense(w, h, vals).unwrap()
    }

    #[test]
    fn identical_maps_align_to_identity() {
        let d = random_depth(16, 16, 1, 2.0, 8.0);
        let out = align_depth(&d, &d, &Mask::filled(16, 16, true), 16).unwrap();
        assert!((out.scale - 1.0).abs() < 1e-12);
        assert!(out.shift.abs() < 1e-12);
        for (a, b) in out.depth.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!out.shift_only);
    }

    #[test]
    fn recovers_inverse_affine_map() {
        // new = 2 * reference + 0.5 -> s = 0.5, t = -0.25
        let reference = random_depth(16, 16, 2, 2.0, 8.0);
        let new_vals: Vec<f64> = reference.values().iter().map(|v| 2.0 * v + 0.5).collect();
        let new = DepthMap::dense(16, 16, new_vals).unwrap();
        let out = align_depth(&new, &reference, &Mask::filled(16, 16, true), 16).unwrap();
        assert!((out.scale - 0.5).abs() < 1e-9, "scale {}", out.scale);
        assert!((out.shift + 0.25).abs() < 1e-9, "shift {}", out.shift);

        // normal-equations oracle: solve the 2x2 system explicitly
        let xs: Vec<f64> = new.values().to_vec();
        let ys: Vec<f64> = reference.values().to_vec();
        let n = xs.len() as f64;
        let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let det = n * sxx - sx * sx;
        let s_oracle = (n * sxy - sx * sy) / det;
        let t_oracle = (sy * sxx - sx * sxy) / det;
        assert!((out.scale - s_oracle).abs() < 1e-9);
        assert!((out.shift - t_oracle).abs() < 1e-9);
    }

    #[test]
    fn empty_overlap_fails_with_count() {
        let d = random_depth(8, 8, 3, 2.0, 8.0);
        let err = align_depth(&d, &d, &Mask::filled(8, 8, false), 16).unwrap_err();
        match err {
            GeometryError::AlignmentFailed { overlap, required } => {
                assert_eq!(overlap, 0);
                assert_eq!(required, 16);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn constant_depth_falls_back_to_shift_only() {
        let new = DepthMap::dense(8, 8, vec![3.0; 64]).unwrap();
        let reference = DepthMap::dense(8, 8, vec![5.0; 64]).unwrap();
        let out = align_depth(&new, &reference, &Mask::filled(8, 8, true), 16).unwrap();
        assert!(out.shift_only);
        assert_eq!(out.scale, 1.0);
        assert!((out.shift - 2.0).abs() < 1e-12);
        assert!(out.depth.values().iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn pixels_outside_overlap_are_still_mapped() {
        let reference = random_depth(8, 8, 4, 2.0, 8.0);
        let new_vals: Vec<f64> = reference.values().iter().map(|v| 1.5 * v + 0.2).collect();
        let new = DepthMap::dense(8, 8, new_vals).unwrap();
        let mut overlap = Mask::filled(8, 8, false);
        for i in 0..32 {
            overlap.set(i % 8, i / 8, true);
        }
        let out = align_depth(&new, &reference, &overlap, 16).unwrap();
        // whole map transformed, including pixels the fit never saw
        for (mapped, want) in out.depth.values().iter().zip(reference.values()) {
            assert!((mapped - want).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn affine_perturbations_recover_inverse(
            a in 0.5f64..2.0,
            b in -1.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let reference = random_depth(12, 12, seed, 3.0, 10.0);
            let new_vals: Vec<f64> = reference.values().iter().map(|v| a * v + b).collect();
            let new = DepthMap::dense(12, 12, new_vals).unwrap();
            let out = align_depth(&new, &reference, &Mask::filled(12, 12, true), 16).unwrap();
            let s_true = 1.0 / a;
            let t_true = -b / a;
            prop_assert!((out.scale - s_true).abs() / s_true.abs() < 1e-9);
            prop_assert!((out.shift - t_true).abs() / t_true.abs().max(1e-3) < 1e-9);
        }
    }
}
