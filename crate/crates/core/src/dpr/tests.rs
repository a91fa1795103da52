use super::*;
use crate::autodiff::grad_check;
use crate::scene::Rng;
use proptest::prelude::*;

fn constant_image(w: usize, h: usize, c: [f64; 3]) -> ColorImage {
    ColorImage::new(w, h, c)
}

fn random_depth(w: usize, h: usize, seed: u64) -> DepthMap {
    let mut rng = Rng::seed_from(seed);
    DepthMap::dense(w, h, (0..w * h).map(|_| rng.uniform_in(1.0, 9.0)).collect()).unwrap()
}

#[test]
fn gradient_weight_is_one_for_constant_images() {
    let img = constant_image(8, 8, [0.3, 0.6, 0.2]);
    let w = gradient_weight(&img);
    assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-15));
}

#[test]
fn gradient_weight_step_edge_matches_central_difference() {
    // luma 0 on the left half, 1 on the right half of each row
    let mut img = constant_image(8, 4, [0.0; 3]);
    for y in 0..4 {
        for x in 4..8 {
            img.set(x, y, [1.0, 1.0, 1.0]);
        }
    }
    let w = gradient_weight(&img);
    let expect = libm::exp(-0.5);
    for y in 0..4 {
        assert!((w[y * 8 + 3] - expect).abs() < 1e-12);
        assert!((w[y * 8 + 4] - expect).abs() < 1e-12);
        assert!((w[y * 8 + 1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gradient_weight_never_exceeds_one() {
    let mut rng = Rng::seed_from(5);
    let mut img = constant_image(16, 16, [0.0; 3]);
    for y in 0..16 {
        for x in 0..16 {
            img.set(x, y, [rng.uniform(), rng.uniform(), rng.uniform()]);
        }
    }
    assert!(gradient_weight(&img).iter().all(|&v| v <= 1.0 && v > 0.0));
}

#[test]
fn pixel_loss_zero_for_identical_maps() {
    let d = random_depth(8, 8, 1);
    let weights = vec![1.0; 64];
    let (loss, warned) =
        pixel_depth_loss(&d, d.values(), &weights, &Mask::filled(8, 8, true)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(!warned);
}

#[test]
fn pixel_loss_matches_hand_branch_evaluation() {
    // residuals {1.0, 0.1}, g = 1: delta = 0.2,
    // loss = (1.0 + (0.01 + 0.04) / 0.4) / 2 = 0.5625
    let prior = DepthMap::dense(2, 1, vec![2.0, 2.0]).unwrap();
    let dhat = [1.0, 1.9];
    let (loss, _) =
        pixel_depth_loss(&prior, &dhat, &[1.0, 1.0], &Mask::filled(2, 1, true)).unwrap();
    assert!((loss - 0.5625).abs() < 1e-12, "{loss}");
}

#[test]
fn pixel_loss_empty_mask_warns() {
    let d = random_depth(4, 4, 2);
    let (loss, warned) =
        pixel_depth_loss(&d, d.values(), &vec![1.0; 16], &Mask::filled(4, 4, false)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(warned);
}

#[test]
fn pixel_loss_is_continuous_at_branch_boundary() {
    // residuals {1.0, 0.2}: the second sits exactly at delta = 0.2 where
    // both branches evaluate to delta
    let quad = (0.2f64 * 0.2 + 0.2 * 0.2) / (2.0 * 0.2);
    assert!((quad - 0.2).abs() < 1e-15);
    let prior = DepthMap::dense(2, 1, vec![3.0, 3.0]).unwrap();
    let (loss, _) =
        pixel_depth_loss(&prior, &[2.0, 2.8], &[1.0, 1.0], &Mask::filled(2, 1, true)).unwrap();
    assert!((loss - (1.0 + 0.2) / 2.0).abs() < 1e-12);
}

#[test]
fn central_moment_examples() {
    assert!(central_moment(&[0.4, 1.7, 3.1], 1).unwrap().abs() < 1e-15);
    assert_eq!(central_moment(&[0.0, 2.0], 2).unwrap(), 1.0);
    assert_eq!(central_moment(&[5.5, 5.5, 5.5, 5.5], 4).unwrap(), 0.0);
    assert!(central_moment::<f64>(&[], 2).is_err());
}

#[test]
fn cmd_matches_brute_force_oracle() {
    let p = [0.0, 0.0, 1.0, 1.0];
    let q = [0.5, 0.5, 0.5, 0.5];
    let got = cmd_distance(&p, &q, 3, false).unwrap();

    // oracle: explicit moment summation, written independently
    let all: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| (v - lo) / (hi - lo)).collect() };
    let (pn, qn) = (norm(&p), norm(&q));
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let moment = |s: &[f64], k: u32| {
        let m = mean(s);
        s.iter().map(|v| (v - m).powi(k as i32)).sum::<f64>() / s.len() as f64
    };
    let mut oracle = (mean(&pn) - mean(&qn)).abs();
    for k in 2..=3 {
        oracle += (moment(&pn, k) - moment(&qn, k)).abs();
    }
    assert!((got - oracle).abs() < 1e-15);
    assert!((got - 0.25).abs() < 1e-15);
}

#[test]
fn cmd_is_zero_on_identical_and_symmetric() {
    let mut rng = Rng::seed_from(3);
    let p: Vec<f64> = (0..40).map(|_| rng.uniform_in(0.0, 5.0)).collect();
    let q: Vec<f64> = (0..40).map(|_| rng.uniform_in(0.0, 5.0)).collect();
    assert_eq!(cmd_distance(&p, &p, 5, false).unwrap(), 0.0);
    let ab = cmd_distance(&p, &q, 5, false).unwrap();
    let ba = cmd_distance(&q, &p, 5, false).unwrap();
    assert_eq!(ab, ba);
}

#[test]
fn strict_mode_drops_only_the_mean_term() {
    let p = [0.0, 0.0, 1.0, 1.0];
    let q = [0.2, 0.4, 0.6, 0.8];
    let full = cmd_distance(&p, &q, 4, false).unwrap();
    let strict = cmd_distance(&p, &q, 4, true).unwrap();
    let mean_p = 0.5;
    let mean_q = 0.5;
    assert!((full - strict - (mean_p - mean_q as f64).abs()).abs() < 1e-15);
}

#[test]
fn dist_loss_shift_leaves_only_mean_term() {
    let prior = random_depth(8, 8, 4);
    let shift = 0.75;
    let dhat: Vec<f64> = prior.values().iter().map(|v| v + shift).collect();
    let (loss, warned) =
        dist_depth_loss(&prior, &dhat, &Mask::filled(8, 8, true), 5, false).unwrap();
    assert!(!warned);
    let lo = prior.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = prior.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max) + shift;
    assert!((loss - shift / (hi - lo)).abs() < 1e-12, "{loss}");
}

#[test]
fn dist_loss_ignores_masked_pixels() {
    let prior = random_depth(8, 8, 5);
    let mut dhat: Vec<f64> = prior.values().to_vec();
    let mut mask = Mask::filled(8, 8, true);
    mask.set(3, 3, false);
    mask.set(7, 0, false);
    dhat[3 * 8 + 3] = 500.0;
    dhat[7] = 777.0;
    let (loss, _) = dist_depth_loss(&prior, &dhat, &mask, 5, false).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn dist_loss_needs_two_pixels() {
    let prior = random_depth(4, 4, 6);
    let mut mask = Mask::filled(4, 4, false);
    mask.set(0, 0, true);
    let (loss, warned) =
        dist_depth_loss(&prior, prior.values(), &mask, 5, false).unwrap();
    assert_eq!(loss, 0.0);
    assert!(warned);
}

#[test]
fn smooth_loss_zero_for_constant_depth() {
    let cfg = DprConfig::default();
    let dhat = vec![4.0; 64];
    let loss = smooth_depth_loss(&dhat, 8, 8, &Mask::filled(8, 8, true), &cfg).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn smooth_loss_zero_for_single_valid_pixel() {
    let cfg = DprConfig::default();
    let dhat = vec![4.0; 64];
    let mut mask = Mask::filled(8, 8, false);
    mask.set(2, 2, true);
    let loss = smooth_depth_loss(&dhat, 8, 8, &mask, &cfg).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn smooth_loss_matches_hand_double_sum_on_3x3_patch() {
    let cfg = DprConfig {
        sigma_spatial: 1.0,
        sigma_color: 1.0,
        window: 3,
        ..Default::default()
    };
    let dhat = vec![1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0];
    let loss = smooth_depth_loss(&dhat, 3, 3, &Mask::filled(3, 3, true), &cfg).unwrap();

    // oracle: direct double sum over the 9 centers
    let mut total = 0.0;
    for cy in 0..3i64 {
        for cx in 0..3i64 {
            let dp = dhat[(cy * 3 + cx) as usize];
            let mut acc = 0.0;
            let mut n = 0usize;
            for qy in (cy - 1).max(0)..=(cy + 1).min(2) {
                for qx in (cx - 1).max(0)..=(cx + 1).min(2) {
                    if qx == cx && qy == cy {
                        continue;
                    }
                    let dq = dhat[(qy * 3 + qx) as usize];
                    let g_s =
                        (-(((cx - qx).pow(2) + (cy - qy).pow(2)) as f64) / 2.0).exp();
                    let g_c = (-(dp - dq) * (dp - dq) / 2.0).exp();
                    acc += g_s * g_c * (dp - dq) * (dp - dq);
                    n += 1;
                }
            }
            total += acc / n as f64;
        }
    }
    let oracle = total / 9.0;
    assert!((loss - oracle).abs() < 1e-12, "{loss} vs {oracle}");
}

#[test]
fn smooth_loss_is_shift_invariant() {
    let cfg = DprConfig::default();
    let d = random_depth(8, 8, 7);
    let shifted: Vec<f64> = d.values().iter().map(|v| v + 3.0).collect();
    let a = smooth_depth_loss(d.values(), 8, 8, &Mask::filled(8, 8, true), &cfg).unwrap();
    let b = smooth_depth_loss(&shifted, 8, 8, &Mask::filled(8, 8, true), &cfg).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn combined_loss_is_the_weighted_sum() {
    let cfg = DprConfig::default();
    assert_eq!(cfg.lambda_pixel, 0.7);
    assert_eq!(cfg.lambda_dist, 0.1);
    assert_eq!(cfg.lambda_smooth, 1.0);
    let total = combine_terms(0.5625, 0.2, 0.1, &cfg);
    assert!((total - 0.513_750).abs() < 1e-12);
    assert_eq!(combine_terms(0.0, 0.0, 0.0, &cfg), 0.0);
}

#[test]
fn dpr_loss_reports_breakdown_consistent_with_total() {
    let cfg = DprConfig::default();
    let prior = random_depth(8, 8, 8);
    let mut rng = Rng::seed_from(9);
    let dhat: Vec<f64> = prior.values().iter().map(|v| v + rng.uniform_in(-0.3, 0.3)).collect();
    let mut img = constant_image(8, 8, [0.0; 3]);
    for y in 0..8 {
        for x in 0..8 {
            img.set(x, y, [rng.uniform(), rng.uniform(), rng.uniform()]);
        }
    }
    let (total, bd) = dpr_loss(&prior, &dhat, &img, &Mask::filled(8, 8, true), &cfg).unwrap();
    assert!((total - combine_terms(bd.pixel, bd.dist, bd.smooth, &cfg)).abs() < 1e-12);
    assert!(bd.pixel >= 0.0 && bd.dist >= 0.0 && bd.smooth >= 0.0);
    assert!(!bd.warned);
}

#[test]
fn gradients_match_finite_differences_on_8x8() {
    let prior = random_depth(8, 8, 10);
    let mut rng = Rng::seed_from(11);
    let point: Vec<f64> = prior.values().iter().map(|v| v + rng.uniform_in(-0.5, 0.5)).collect();
    let mask = Mask::filled(8, 8, true);
    let weights = {
        let mut img = constant_image(8, 8, [0.0; 3]);
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, [rng.uniform(), rng.uniform(), rng.uniform()]);
            }
        }
        gradient_weight(&img)
    };
    let cfg = DprConfig::default();

    let r = grad_check(
        |_, vars| pixel_depth_loss(&prior, vars, &weights, &mask).unwrap().0,
        |xs| pixel_depth_loss(&prior, xs, &weights, &mask).unwrap().0,
        &point,
        1e-4,
    );
    assert!(r.pass, "pixel loss: max rel err {}", r.max_rel_err);

    let r = grad_check(
        |_, vars| dist_depth_loss(&prior, vars, &mask, 5, false).unwrap().0,
        |xs| dist_depth_loss(&prior, xs, &mask, 5, false).unwrap().0,
        &point,
        1e-4,
    );
    assert!(r.pass, "dist loss: max rel err {}", r.max_rel_err);

    let r = grad_check(
        |_, vars| smooth_depth_loss(vars, 8, 8, &mask, &cfg).unwrap(),
        |xs| smooth_depth_loss(xs, 8, 8, &mask, &cfg).unwrap(),
        &point,
        1e-4,
    );
    assert!(r.pass, "smooth loss: max rel err {}", r.max_rel_err);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn losses_are_nonnegative(seed in 0u64..500, shift in -1.0f64..1.0) {
        let prior = random_depth(6, 6, seed);
        let mut rng = Rng::seed_from(seed ^ 0xabcd);
        let dhat: Vec<f64> = prior
            .values()
            .iter()
            .map(|v| (v + shift + rng.uniform_in(-0.4, 0.4)).max(0.05))
            .collect();
        let img = {
            let mut i = constant_image(6, 6, [0.0; 3]);
            for y in 0..6 {
                for x in 0..6 {
                    i.set(x, y, [rng.uniform(), rng.uniform(), rng.uniform()]);
                }
            }
            i
        };
        let cfg = DprConfig::default();
        let (total, bd) = dpr_loss(&prior, &dhat, &img, &Mask::filled(6, 6, true), &cfg).unwrap();
        prop_assert!(bd.pixel >= 0.0);
        prop_assert!(bd.dist >= 0.0);
        prop_assert!(bd.smooth >= 0.0);
        prop_assert!(total >= 0.0);
    }
}
