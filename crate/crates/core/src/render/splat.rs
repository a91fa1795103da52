use super::{RenderOutput, SplatScene};
use crate::autodiff::Scalar;
use crate::scene::{Camera, ColorImage, DepthMap};

/// Alpha contributions are capped here so transmittance stays strictly
/// positive and the blended depth remains well-defined.
pub const ALPHA_CAP: f64 = 0.999;

#[derive(Debug, Clone, Copy)]
pub struct RenderConfig {
    /// Footprint truncation radius in standard deviations. `None`
    /// evaluates every Gaussian on the full image (used by gradient
    /// checks, which need the output smooth in the inputs).
    pub sigma_cutoff: Option<f64>,
    /// Hard cap on the truncation radius in pixels (cost guard).
    pub max_radius_px: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { sigma_cutoff: Some(3.0), max_radius_px: 1e9 }
    }
}

/// One Gaussian in generic scalar form. The quaternion is normalized
/// inside the graph, so raw 4-vectors are fine.
#[derive(Debug, Clone)]
pub struct GaussianParams<R: Scalar> {
    pub mean: [R; 3],
    pub scale: [R; 3],
    pub rotation: [R; 4],
    pub opacity: R,
    pub color: [R; 3],
}

/// Raw render buffers, row-major.
#[derive(Debug, Clone)]
pub struct RenderBuffers<R: Scalar> {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[R; 3]>,
    pub depth: Vec<R>,
    pub alpha: Vec<R>,
    /// Per-pixel coverage flag (any splat contributed).
    pub covered: Vec<bool>,
}

#[derive(Clone, Copy)]
struct PixState<R: Scalar> {
    color: [R; 3],
    depth: R,
    alpha_acc: R,
    transmittance: R,
}

struct Footprint<R: Scalar> {
    center_x: f64,
    center_y: f64,
    radius: f64,
    inv_a: R,
    inv_b: R,
    inv_c: R,
    px: R,
    py: R,
    z: R,
    alpha_base: R,
    color: [R; 3],
}

/// Projects one Gaussian to its screen-space footprint: EWA-style
/// perspective projection of the covariance with the first-order Jacobian.
fn project_gaussian<R: Scalar>(
    g: &GaussianParams<R>,
    camera: &Camera,
    cfg: &RenderConfig,
) -> Option<Footprint<R>> {
    let rot = camera.rotation();
    let t = camera.translation();

    // camera-frame mean
    let mut p_cam = [g.mean[0]; 3];
    for (i, pc) in p_cam.iter_mut().enumerate() {
        let row = [rot[(i, 0)], rot[(i, 1)], rot[(i, 2)]];
        *pc = R::lincomb_of(&g.mean, &row).shift(t[i]);
    }
    let z = p_cam[2];
    if z.value() <= 1e-9 {
        return None; // behind the camera
    }

    // normalized quaternion -> rotation matrix
    let q_norm2 = g.rotation[0].square()
        + g.rotation[1].square()
        + g.rotation[2].square()
        + g.rotation[3].square();
    let inv_norm = q_norm2.sqrt().recip();
    let w = g.rotation[0] * inv_norm;
    let x = g.rotation[1] * inv_norm;
    let y = g.rotation[2] * inv_norm;
    let zq = g.rotation[3] * inv_norm;
    let two = 2.0;
    let rq = [
        [
            (y.square() + zq.square()).scale(-two).shift(1.0),
            (x * y - w * zq).scale(two),
            (x * zq + w * y).scale(two),
        ],
        [
            (x * y + w * zq).scale(two),
            (x.square() + zq.square()).scale(-two).shift(1.0),
            (y * zq - w * x).scale(two),
        ],
        [
            (x * zq - w * y).scale(two),
            (y * zq + w * x).scale(two),
            (x.square() + y.square()).scale(-two).shift(1.0),
        ],
    ];

    // M = R_cam * R_q * diag(scale); camera-frame covariance is M M^T
    let mut m = [[z; 3]; 3];
    #[allow(clippy::needless_range_loop)]
    for i in 0..3 {
        for j in 0..3 {
            let col = [rq[0][j], rq[1][j], rq[2][j]];
            let row = [rot[(i, 0)], rot[(i, 1)], rot[(i, 2)]];
            m[i][j] = R::lincomb_of(&col, &row) * g.scale[j];
        }
    }

    // perspective Jacobian rows (fx/z, 0, -fx x/z^2) and (0, fy/z, -fy y/z^2)
    let (fx, fy) = (camera.fx(), camera.fy());
    let inv_z = z.recip();
    let j00 = inv_z.scale(fx);
    let j02 = p_cam[0] * inv_z.square().scale(-fx);
    let j11 = inv_z.scale(fy);
    let j12 = p_cam[1] * inv_z.square().scale(-fy);

    // rows of J * M (2x3), then cov2 = (JM)(JM)^T
    let mut jm = [[z; 3]; 2];
    for c in 0..3 {
        let col = [m[0][c], m[1][c], m[2][c]];
        jm[0][c] = j00 * col[0] + j02 * col[2];
        jm[1][c] = j11 * col[1] + j12 * col[2];
    }
    let a = jm[0][0].square() + jm[0][1].square() + jm[0][2].square();
    let b = jm[0][0] * jm[1][0] + jm[0][1] * jm[1][1] + jm[0][2] * jm[1][2];
    let c = jm[1][0].square() + jm[1][1].square() + jm[1][2].square();

    let det = a * c - b.square();
    if !(det.value() > 1e-300) {
        return None; // numerically degenerate footprint
    }
    let inv_det = det.recip();
    let inv_a = c * inv_det;
    let inv_b = -(b * inv_det);
    let inv_c = a * inv_det;

    let px = p_cam[0] * inv_z.scale(fx) + z.constant_like(camera.cx());
    let py = p_cam[1] * inv_z.scale(fy) + z.constant_like(camera.cy());

    let radius = match cfg.sigma_cutoff {
        Some(k) => {
            let (av, bv, cv) = (a.value(), b.value(), c.value());
            let lam_max = 0.5 * (av + cv) + (0.25 * (av - cv).powi(2) + bv * bv).sqrt();
            (k * lam_max.max(0.0).sqrt()).min(cfg.max_radius_px)
        }
        None => f64::INFINITY,
    };

    Some(Footprint {
        center_x: px.value(),
        center_y: py.value(),
        radius,
        inv_a,
        inv_b,
        inv_c,
        px,
        py,
        z,
        alpha_base: g.opacity,
        color: g.color,
    })
}

/// Renders generic-scalar Gaussians. Gaussians are blended in
/// front-to-back order of the camera-z of their means (ties broken by
/// storage index); per pixel `C = sum c_i a_i T_i`, `D = sum z_i a_i T_i`
/// with `T_i = prod_{j<i} (1 - a_j)` and `a_i = min(0.999, opacity * G2D)`.
/// The background enters the color only, weighted by the residual
/// transmittance.
pub fn render_generic<R: Scalar>(
    gaussians: &[GaussianParams<R>],
    background: [f64; 3],
    camera: &Camera,
    cfg: &RenderConfig,
) -> RenderBuffers<R> {
    let (w, h) = (camera.width(), camera.height());

    let mut footprints: Vec<Footprint<R>> = gaussians
        .iter()
        .filter_map(|g| project_gaussian(g, camera, cfg))
        .collect();
    // global front-to-back depth sort, stable in the original index
    footprints.sort_by(|p, q| p.z.value().total_cmp(&q.z.value()));

    let mut states: Vec<Option<PixState<R>>> = vec![None; w * h];
    for fp in &footprints {
        let x_lo = ((fp.center_x - fp.radius).floor().max(0.0)) as usize;
        let x_hi = ((fp.center_x + fp.radius).ceil().min(w as f64)).max(0.0) as usize;
        let y_lo = ((fp.center_y - fp.radius).floor().max(0.0)) as usize;
        let y_hi = ((fp.center_y + fp.radius).ceil().min(h as f64)).max(0.0) as usize;
        if fp.radius.is_infinite() {
            // no cutoff: evaluate everywhere
        } else if x_lo >= x_hi || y_lo >= y_hi {
            continue;
        }
        let (x_lo, x_hi, y_lo, y_hi) = if fp.radius.is_infinite() {
            (0, w, 0, h)
        } else {
            (x_lo, x_hi, y_lo, y_hi)
        };

        for py_i in y_lo..y_hi {
            for px_i in x_lo..x_hi {
                // sign of the offset is irrelevant inside the quadratic form
                let dx = fp.px.shift(-(px_i as f64 + 0.5));
                let dy = fp.py.shift(-(py_i as f64 + 0.5));
                // G = exp(-0.5 d^T Sigma2^-1 d)
                let quad = fp.inv_a * dx.square()
                    + (fp.inv_b * dx * dy).scale(2.0)
                    + fp.inv_c * dy.square();
                let alpha = (fp.alpha_base * quad.scale(-0.5).exp()).min_c(ALPHA_CAP);

                let idx = py_i * w + px_i;
                let st = &mut states[idx];
                match st {
                    None => {
                        let weight = alpha; // transmittance starts at 1
                        *st = Some(PixState {
                            color: [
                                fp.color[0] * weight,
                                fp.color[1] * weight,
                                fp.color[2] * weight,
                            ],
                            depth: fp.z * weight,
                            alpha_acc: weight,
                            transmittance: alpha.scale(-1.0).shift(1.0),
                        });
                    }
                    Some(s) => {
                        let weight = alpha * s.transmittance;
                        for c in 0..3 {
                            s.color[c] = s.color[c] + fp.color[c] * weight;
                        }
                        s.depth = s.depth + fp.z * weight;
                        s.alpha_acc = s.alpha_acc + weight;
                        s.transmittance = s.transmittance * alpha.scale(-1.0).shift(1.0);
                    }
                }
            }
        }
    }

    let mut color = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut alpha = Vec::with_capacity(w * h);
    let mut covered = Vec::with_capacity(w * h);
    let zero: R = gaussians
        .first()
        .map(|g| g.opacity.constant_like(0.0))
        .expect("render_generic needs at least one gaussian; render() handles empty scenes");
    for st in states {
        match st {
            Some(s) => {
                color.push([
                    s.color[0] + s.transmittance.scale(background[0]),
                    s.color[1] + s.transmittance.scale(background[1]),
                    s.color[2] + s.transmittance.scale(background[2]),
                ]);
                depth.push(s.depth);
                alpha.push(s.alpha_acc);
                covered.push(true);
            }
            None => {
                color.push([
                    zero.shift(background[0]),
                    zero.shift(background[1]),
                    zero.shift(background[2]),
                ]);
                depth.push(zero);
                alpha.push(zero);
                covered.push(false);
            }
        }
    }
    RenderBuffers { width: w, height: h, color, depth, alpha, covered }
}

fn render_empty(scene: &SplatScene, camera: &Camera) -> RenderOutput {
    let (w, h) = (camera.width(), camera.height());
    RenderOutput {
        color: ColorImage::new(w, h, scene.background.map(|c| c.clamp(0.0, 1.0))),
        depth: DepthMap::invalid(w, h),
        alpha: vec![0.0; w * h],
    }
}

/// Plain f64 rendering of a concrete scene.
pub fn render(scene: &SplatScene, camera: &Camera, cfg: &RenderConfig) -> RenderOutput {
    let params: Vec<GaussianParams<f64>> = scene
        .gaussians
        .iter()
        .map(|g| GaussianParams {
            mean: [g.mean.x, g.mean.y, g.mean.z],
            scale: [g.scale.x, g.scale.y, g.scale.z],
            rotation: [g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k],
            opacity: g.opacity,
            color: g.color,
        })
        .collect();
    if params.is_empty() {
        return render_empty(scene, camera);
    }
    let buf = render_generic(&params, scene.background, camera, cfg);
    buffers_to_output(&buf)
}

/// Converts f64 buffers into the concrete output types. Depth is valid
/// wherever at least one splat contributed.
pub fn buffers_to_output(buf: &RenderBuffers<f64>) -> RenderOutput {
    let (w, h) = (buf.width, buf.height);
    let mut color = ColorImage::new(w, h, [0.0; 3]);
    let mut depth = DepthMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            color.set(x, y, buf.color[i].map(|c| c.clamp(0.0, 1.0)));
            if buf.covered[i] && buf.depth[i] > 0.0 {
                depth.set(x, y, buf.depth[i]);
            }
        }
    }
    RenderOutput { color, depth, alpha: buf.alpha.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::scene::{Gaussian3D, Mask, Rng};
    use nalgebra::{Matrix3, UnitQuaternion, Vector3};

    fn camera(w: usize, h: usize) -> Camera {
        Camera::from_params(
            40.0,
            40.0,
            w as f64 / 2.0,
            h as f64 / 2.0,
            Matrix3::identity(),
            Vector3::zeros(),
            w,
            h,
        )
        .unwrap()
    }

    /// Places a Gaussian whose projected center is exactly the center of
    /// pixel (px, py) and whose density there is exactly 1.
    fn pixel_gaussian(cam: &Camera, px: usize, py: usize, z: f64, opacity: f64, color: [f64; 3]) -> Gaussian3D {
        let ray = cam.pixel_ray(px, py);
        Gaussian3D::new(
            z * ray,
            Vector3::new(0.05, 0.05, 0.05),
            UnitQuaternion::identity(),
            opacity,
            color,
        )
        .unwrap()
    }

    #[test]
    fn empty_scene_renders_background() {
        let cam = camera(8, 8);
        let scene = SplatScene::new(vec![], [0.1, 0.2, 0.3]);
        let out = render(&scene, &cam, &RenderConfig::default());
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.color.get(x, y), [0.1, 0.2, 0.3]);
                assert_eq!(out.depth.get(x, y), None);
                assert_eq!(out.alpha_at(x, y), 0.0);
            }
        }
    }

    #[test]
    fn single_capped_splat_dominates_its_pixel() {
        let cam = camera(16, 16);
        let g = pixel_gaussian(&cam, 8, 8, 2.0, 0.9999, [1.0, 0.0, 0.0]);
        let scene = SplatScene::new(vec![g], [0.0, 0.0, 0.0]);
        let out = render(&scene, &cam, &RenderConfig::default());
        let c = out.color.get(8, 8);
        // density is exactly 1 at the center, so alpha hits the 0.999 cap
        assert!((c[0] - 0.999).abs() < 1e-12);
        assert_eq!(c[1], 0.0);
        let d = out.depth.get(8, 8).unwrap();
        assert!((d - 0.999 * 2.0).abs() < 1e-12);
        assert!((d - 2.0).abs() <= 0.001 * 2.0 + 1e-12);
    }

    #[test]
    fn two_splat_blend_matches_direct_formula() {
        // front: alpha_eff 0.5, red, z = 1; back: alpha_eff 0.999, blue, z = 2
        let cam = camera(16, 16);
        let front = pixel_gaussian(&cam, 8, 8, 1.0, 0.5, [1.0, 0.0, 0.0]);
        let back = pixel_gaussian(&cam, 8, 8, 2.0, 0.9999, [0.0, 0.0, 1.0]);
        // storage order is back-to-front; the renderer must sort
        let scene = SplatScene::new(vec![back, front], [0.0, 0.0, 0.0]);
        let out = render(&scene, &cam, &RenderConfig::default());
        let c = out.color.get(8, 8);
        assert!((c[0] - 0.5).abs() < 1e-9, "r = {}", c[0]);
        assert!((c[2] - 0.5 * 0.999).abs() < 1e-9, "b = {}", c[2]);
        let d = out.depth.get(8, 8).unwrap();
        assert!((d - (0.5 * 1.0 + 0.4995 * 2.0)).abs() < 1e-9);
        assert!((out.alpha_at(8, 8) - (0.5 + 0.4995)).abs() < 1e-9);
    }

    #[test]
    fn storage_order_permutation_leaves_output_unchanged() {
        let cam = camera(16, 16);
        let mut rng = Rng::seed_from(11);
        let mut gs = Vec::new();
        for _ in 0..6 {
            gs.push(
                Gaussian3D::new(
                    Vector3::new(rng.uniform_in(-0.3, 0.3), rng.uniform_in(-0.3, 0.3), rng.uniform_in(1.5, 4.0)),
                    Vector3::new(0.1, 0.15, 0.08),
                    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), rng.uniform_in(-1.0, 1.0)),
                    rng.uniform_in(0.2, 0.9),
                    [rng.uniform(), rng.uniform(), rng.uniform()],
                )
                .unwrap(),
            );
        }
        let a = render(&SplatScene::new(gs.clone(), [0.0; 3]), &cam, &RenderConfig::default());
        gs.reverse();
        gs.swap(0, 2);
        let b = render(&SplatScene::new(gs, [0.0; 3]), &cam, &RenderConfig::default());
        for y in 0..16 {
            for x in 0..16 {
                let (ca, cb) = (a.color.get(x, y), b.color.get(x, y));
                for k in 0..3 {
                    assert!((ca[k] - cb[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transmittance_telescopes_to_one() {
        let cam = camera(12, 12);
        let mut rng = Rng::seed_from(5);
        let gs: Vec<Gaussian3D> = (0..8)
            .map(|_| {
                Gaussian3D::new(
                    Vector3::new(rng.uniform_in(-0.4, 0.4), rng.uniform_in(-0.4, 0.4), rng.uniform_in(1.0, 5.0)),
                    Vector3::new(0.2, 0.2, 0.2),
                    UnitQuaternion::identity(),
                    rng.uniform_in(0.1, 0.95),
                    [0.5, 0.5, 0.5],
                )
                .unwrap()
            })
            .collect();
        let params: Vec<GaussianParams<f64>> = gs
            .iter()
            .map(|g| GaussianParams {
                mean: [g.mean.x, g.mean.y, g.mean.z],
                scale: [g.scale.x, g.scale.y, g.scale.z],
                rotation: [g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k],
                opacity: g.opacity,
                color: g.color,
            })
            .collect();
        let buf = render_generic(&params, [0.0; 3], &cam, &RenderConfig::default());
        // alpha accumulation + residual transmittance = 1; recompute the
        // residual via 1 - alpha_acc only where splats contributed
        for (i, cov) in buf.covered.iter().enumerate() {
            if *cov {
                assert!(buf.alpha[i] <= 1.0 + 1e-9);
                // telescoping: sum a_i T_i = 1 - prod (1 - a_i)
            }
        }
        // direct check on one pixel with a manual product
        let g_list = {
            let mut f: Vec<&Gaussian3D> = gs.iter().collect();
            f.sort_by(|a, b| a.mean.z.total_cmp(&b.mean.z));
            f
        };
        let (cx, cy) = (6usize, 6usize);
        let mut t = 1.0;
        let mut acc = 0.0;
        for g in g_list {
            let fp = project_gaussian(
                &GaussianParams::<f64> {
                    mean: [g.mean.x, g.mean.y, g.mean.z],
                    scale: [g.scale.x, g.scale.y, g.scale.z],
                    rotation: [g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k],
                    opacity: g.opacity,
                    color: g.color,
                },
                &cam,
                &RenderConfig { sigma_cutoff: None, max_radius_px: 1e9 },
            )
            .unwrap();
            let dx = cx as f64 + 0.5 - fp.px;
            let dy = cy as f64 + 0.5 - fp.py;
            let quad = fp.inv_a * dx * dx + 2.0 * fp.inv_b * dx * dy + fp.inv_c * dy * dy;
            let a = (fp.alpha_base * (-0.5 * quad).exp()).min(ALPHA_CAP);
            acc += a * t;
            t *= 1.0 - a;
        }
        assert!((acc + t - 1.0).abs() < 1e-9);
        let full = render_generic(
            &params,
            [0.0; 3],
            &cam,
            &RenderConfig { sigma_cutoff: None, max_radius_px: 1e9 },
        );
        assert!((full.alpha[cy * 12 + cx] - acc).abs() < 1e-9);
    }

    #[test]
    fn opacity_increase_never_darkens_own_center_contribution() {
        let cam = camera(16, 16);
        let mut base = pixel_gaussian(&cam, 8, 8, 2.0, 0.3, [1.0, 0.0, 0.0]);
        let occluder = pixel_gaussian(&cam, 8, 8, 1.0, 0.4, [0.0, 1.0, 0.0]);
        let mut prev = -1.0;
        for op in [0.1, 0.3, 0.5, 0.7, 0.9] {
            base.opacity = op;
            let scene = SplatScene::new(vec![occluder.clone(), base.clone()], [0.0; 3]);
            let out = render(&scene, &cam, &RenderConfig::default());
            let red = out.color.get(8, 8)[0];
            assert!(red >= prev - 1e-12, "opacity {op} decreased red: {red} < {prev}");
            prev = red;
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        // <= 8 gaussians at 8x8, full photometric loss, no footprint cutoff
        let cam = camera(8, 8);
        let mut rng = Rng::seed_from(17);
        let n = 4;
        let mut point = Vec::new();
        for _ in 0..n {
            point.extend([
                rng.uniform_in(-0.3, 0.3),
                rng.uniform_in(-0.3, 0.3),
                rng.uniform_in(1.5, 3.5),
            ]); // mean
            point.extend([
                rng.uniform_in(0.08, 0.25),
                rng.uniform_in(0.08, 0.25),
                rng.uniform_in(0.08, 0.25),
            ]); // scale
            point.extend([
                1.0,
                rng.uniform_in(-0.3, 0.3),
                rng.uniform_in(-0.3, 0.3),
                rng.uniform_in(-0.3, 0.3),
            ]); // quaternion (raw)
            point.push(rng.uniform_in(0.25, 0.75)); // opacity
            point.extend([rng.uniform(), rng.uniform(), rng.uniform()]); // color
        }
        let mut target = ColorImage::new(8, 8, [0.0; 3]);
        for y in 0..8 {
            for x in 0..8 {
                target.set(x, y, [rng.uniform(), rng.uniform(), rng.uniform()]);
            }
        }
        let cfg = RenderConfig { sigma_cutoff: None, max_radius_px: 1e9 };
        let full = Mask::filled(8, 8, true);

        fn unpack<R: Scalar>(p: &[R]) -> Vec<GaussianParams<R>> {
            p.chunks_exact(14)
                .map(|c| GaussianParams {
                    mean: [c[0], c[1], c[2]],
                    scale: [c[3], c[4], c[5]],
                    rotation: [c[6], c[7], c[8], c[9]],
                    opacity: c[10],
                    color: [c[11], c[12], c[13]],
                })
                .collect()
        }
        let loss_of = |bufs: RenderBuffers<f64>| -> f64 {
            crate::render::photometric_loss_generic(&bufs.color, bufs.width, bufs.height, &target, &full, 0.2)
                .unwrap()
        };

        let report = grad_check(
            |_, vars| {
                let gs = unpack(vars);
                let bufs = render_generic(&gs, [0.1, 0.1, 0.1], &cam, &cfg);
                crate::render::photometric_loss_generic(
                    &bufs.color, bufs.width, bufs.height, &target, &full, 0.2,
                )
                .unwrap()
            },
            |xs| {
                let gs = unpack(xs);
                loss_of(render_generic(&gs, [0.1, 0.1, 0.1], &cam, &cfg))
            },
            &point,
            1e-4,
        );
        assert!(
            report.pass,
            "max rel err {} at {} (analytic {}, numeric {})",
            report.max_rel_err, report.worst_index, report.analytic_at_worst, report.numeric_at_worst
        );
    }
}
