use super::anchor::{AnchorSet, SCALING_DIM};
use super::grid::HashGrid;
use super::SccError;
use crate::autodiff::Scalar;
use crate::render::GaussianParams;
use crate::scene::{Gaussian3D, Rng};

use nalgebra::{UnitQuaternion, Vector3};

/// Quantization step bases per attribute group (feature, scaling, offset).
pub const ETA_DEFAULT: [f64; 3] = [2.5e-1, 2.5e-4, 5e-2];
/// Loss weights of Eq-style SCC objective.
pub const LAMBDA_VOL_DEFAULT: f64 = 1e-2;
pub const LAMBDA_ENTROPY_DEFAULT: f64 = 2e-3;
/// Semi-soft rounding softness default.
pub const TAU_DEFAULT: f64 = 1.0;

const SIGMA_FLOOR: f64 = 1e-6;
const PROB_FLOOR: f64 = 1e-12;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrGroup {
    Feature,
    Scaling,
    Offset,
}

impl AttrGroup {
    pub fn index(self) -> usize {
        match self {
            AttrGroup::Feature => 0,
            AttrGroup::Scaling => 1,
            AttrGroup::Offset => 2,
        }
    }
}

fn xavier_fill(rng: &mut Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.uniform_in(-a, a);
    }
}

/// Generic two-matrix MLP forward: `y = W2 tanh(W1 x + b1) + b2` with all
/// weights supplied as one flat slice (W1 row-major, b1, W2 row-major, b2).
fn mlp_forward<R: Scalar>(
    params: &[R],
    input: &[R],
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
) -> Vec<R> {
    debug_assert_eq!(params.len(), mlp_param_count(input_dim, hidden_dim, output_dim));
    debug_assert_eq!(input.len(), input_dim);
    let (w1, rest) = params.split_at(hidden_dim * input_dim);
    let (b1, rest) = rest.split_at(hidden_dim);
    let (w2, b2) = rest.split_at(output_dim * hidden_dim);

    let mut hidden = Vec::with_capacity(hidden_dim);
    for i in 0..hidden_dim {
        let row = &w1[i * input_dim..(i + 1) * input_dim];
        hidden.push((R::dot_of(input, row) + b1[i]).tanh());
    }
    let mut out = Vec::with_capacity(output_dim);
    for i in 0..output_dim {
        let row = &w2[i * hidden_dim..(i + 1) * hidden_dim];
        out.push(R::dot_of(&hidden, row) + b2[i]);
    }
    out
}

pub(crate) fn mlp_param_count(input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
    hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim
}

/// Context model: a shared tanh trunk over the hash feature with two
/// heads, one emitting the three per-group quantization modifiers and one
/// emitting (mu, raw sigma) for every attribute dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub offsets_per_anchor: usize,
    pub eta: [f64; 3],
    /// Flat parameters: trunk W (hidden x input), trunk b, quant head W
    /// (3 x hidden), quant head b, gauss head W (2A x hidden), gauss
    /// head b; A = D^a + 6 + 3K.
    pub params: Vec<f64>,
}

impl ContextModel {
    pub fn attr_dims(&self) -> usize {
        self.feature_dim + SCALING_DIM + 3 * self.offsets_per_anchor
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize, attr_dims: usize) -> usize {
        hidden_dim * input_dim + hidden_dim            // trunk
            + 3 * hidden_dim + 3                       // quant head
            + 2 * attr_dims * hidden_dim + 2 * attr_dims // gauss head
    }

    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        feature_dim: usize,
        offsets_per_anchor: usize,
        rng: &mut Rng,
    ) -> Self {
        let attr = feature_dim + SCALING_DIM + 3 * offsets_per_anchor;
        let mut params = vec![0.0; Self::param_count(input_dim, hidden_dim, attr)];
        let (trunk_w, rest) = params.split_at_mut(hidden_dim * input_dim);
        xavier_fill(rng, trunk_w, input_dim, hidden_dim);
        let (_trunk_b, rest) = rest.split_at_mut(hidden_dim);
        let (quant_w, rest) = rest.split_at_mut(3 * hidden_dim);
        xavier_fill(rng, quant_w, hidden_dim, 3);
        let (_quant_b, rest) = rest.split_at_mut(3);
        let (gauss_w, _gauss_b) = rest.split_at_mut(2 * attr * hidden_dim);
        xavier_fill(rng, gauss_w, hidden_dim, 2 * attr);
        Self { input_dim, hidden_dim, feature_dim, offsets_per_anchor, eta: ETA_DEFAULT, params }
    }

    /// Forward pass with caller-provided parameter values (the
    /// differentiable path). Returns the raw quant-head outputs and the
    /// per-dimension Gaussian statistics, sigma already softplus-floored.
    pub fn forward<R: Scalar>(&self, params: &[R], hash_feature: &[R]) -> ContextOut<R> {
        let attr = self.attr_dims();
        debug_assert_eq!(params.len(), self.params.len());
        assert_eq!(hash_feature.len(), self.input_dim);

        let (trunk_w, rest) = params.split_at(self.hidden_dim * self.input_dim);
        let (trunk_b, rest) = rest.split_at(self.hidden_dim);
        let (quant_w, rest) = rest.split_at(3 * self.hidden_dim);
        let (quant_b, rest) = rest.split_at(3);
        let (gauss_w, gauss_b) = rest.split_at(2 * attr * self.hidden_dim);

        let mut hidden = Vec::with_capacity(self.hidden_dim);
        for i in 0..self.hidden_dim {
            let row = &trunk_w[i * self.input_dim..(i + 1) * self.input_dim];
            hidden.push((R::dot_of(hash_feature, row) + trunk_b[i]).tanh());
        }
        let mut quant_raw = [hidden[0]; 3];
        for (i, q) in quant_raw.iter_mut().enumerate() {
            let row = &quant_w[i * self.hidden_dim..(i + 1) * self.hidden_dim];
            *q = R::dot_of(&hidden, row) + quant_b[i];
        }
        let mut mu = Vec::with_capacity(attr);
        let mut sigma = Vec::with_capacity(attr);
        for i in 0..attr {
            let row = &gauss_w[i * self.hidden_dim..(i + 1) * self.hidden_dim];
            mu.push(R::dot_of(&hidden, row) + gauss_b[i]);
        }
        for i in attr..2 * attr {
            let row = &gauss_w[i * self.hidden_dim..(i + 1) * self.hidden_dim];
            let raw = R::dot_of(&hidden, row) + gauss_b[i];
            sigma.push(raw.softplus().shift(SIGMA_FLOOR));
        }
        ContextOut { quant_raw, mu, sigma }
    }

    /// Quantization step for one attribute group from a concrete hash
    /// feature: `eta_g (1 + tanh(F_q(f^h)[g]))`, strictly in (0, 2 eta).
    pub fn quant_step(&self, hash_feature: &[f64], group: AttrGroup) -> f64 {
        let out = self.forward(&self.params, hash_feature);
        quant_step_from_raw(out.quant_raw[group.index()], self.eta[group.index()])
    }
}

/// Raw context-model outputs for one anchor.
pub struct ContextOut<R: Scalar> {
    pub quant_raw: [R; 3],
    pub mu: Vec<R>,
    pub sigma: Vec<R>,
}

/// `omega = eta * (1 + tanh(raw))`, floored away from exact zero where
/// tanh saturates in floating point.
pub fn quant_step_from_raw<R: Scalar>(raw: R, eta: f64) -> R {
    raw.tanh().shift(1.0).scale(eta).max_c(eta * 1e-9)
}

/// Fully evaluated per-anchor context: quantization steps per group and
/// Gaussian statistics per attribute dimension.
pub struct AnchorContext<R: Scalar> {
    pub omega: [R; 3],
    pub mu: Vec<R>,
    pub sigma: Vec<R>,
}

pub fn anchor_context<R: Scalar>(
    grid: &HashGrid,
    tables: &[&[R]],
    model: &ContextModel,
    model_params: &[R],
    location: [f64; 3],
) -> AnchorContext<R> {
    let feat = grid.interpolate(tables, location);
    let out = model.forward(model_params, &feat);
    let omega = [
        quant_step_from_raw(out.quant_raw[0], model.eta[0]),
        quant_step_from_raw(out.quant_raw[1], model.eta[1]),
        quant_step_from_raw(out.quant_raw[2], model.eta[2]),
    ];
    AnchorContext { omega, mu: out.mu, sigma: out.sigma }
}

/// Training-phase quantization: additive Gaussian noise with the step as
/// its standard deviation. The draw is a constant per step, so gradients
/// flow through the value and, via the step, into the context model.
pub fn quantize_train<R: Scalar>(value: R, omega: R, rng: &mut Rng) -> R {
    let eps = rng.normal();
    value + omega.scale(eps)
}

/// Inference-phase semi-soft rounding: `k w + tanh(tau (f - k w)) w` with
/// `k = round(f / w)`. At the shipped default `tau = 1` this is the
/// dynamic-quantization rounding rule; as `tau -> 0` it snaps hard to the
/// lattice.
pub fn quantize_infer<R: Scalar>(value: R, omega: R, tau: f64) -> R {
    let k = (value.value() / omega.value()).round();
    let lattice = omega.scale(k);
    let residual = value - lattice;
    lattice + residual.scale(tau).tanh() * omega
}

/// Interval probability of a quantized value under the per-dimension
/// Gaussian, floored at 1e-12.
pub fn feature_probability<R: Scalar>(f_hat: R, omega: R, mu: R, sigma: R) -> R {
    let inv_sigma = sigma.recip();
    let half = omega.scale(0.5);
    let upper = ((f_hat + half - mu) * inv_sigma).normal_cdf();
    let lower = ((f_hat - half - mu) * inv_sigma).normal_cdf();
    (upper - lower).max_c(PROB_FLOOR)
}

/// Bit consumption per parameter:
/// `beta * sum over attributes, anchors, dims of -log2 p(f_ij)` with
/// `beta = 1 / (N (D^a + 6 + 3K))`.
pub fn entropy_loss<R: Scalar>(
    contexts: &[AnchorContext<R>],
    features: &[R],
    scalings: &[R],
    offsets: &[R],
    feature_dim: usize,
    offsets_per_anchor: usize,
) -> R {
    let n = contexts.len();
    assert!(n > 0, "entropy_loss needs at least one anchor");
    let attr = feature_dim + SCALING_DIM + 3 * offsets_per_anchor;
    assert_eq!(features.len(), n * feature_dim);
    assert_eq!(scalings.len(), n * SCALING_DIM);
    assert_eq!(offsets.len(), n * 3 * offsets_per_anchor);

    let mut bits = Vec::with_capacity(n * attr);
    for (i, ctx) in contexts.iter().enumerate() {
        let groups: [(&[R], R, usize); 3] = [
            (&features[i * feature_dim..(i + 1) * feature_dim], ctx.omega[0], 0),
            (&scalings[i * SCALING_DIM..(i + 1) * SCALING_DIM], ctx.omega[1], feature_dim),
            (
                &offsets[i * 3 * offsets_per_anchor..(i + 1) * 3 * offsets_per_anchor],
                ctx.omega[2],
                feature_dim + SCALING_DIM,
            ),
        ];
        for (values, omega, dim_base) in groups {
            for (j, v) in values.iter().enumerate() {
                let d = dim_base + j;
                let p = feature_probability(*v, omega, ctx.mu[d], ctx.sigma[d]);
                bits.push(p.ln().scale(-1.0 / LN_2));
            }
        }
    }
    let beta = 1.0 / (n * attr) as f64;
    R::sum_of(&bits).scale(beta)
}

/// Convenience wrapper evaluating the entropy of a concrete quantized
/// anchor set under the grid and context model.
pub fn entropy_loss_f64(
    anchors: &AnchorSet,
    grid: &HashGrid,
    model: &ContextModel,
) -> Result<f64, SccError> {
    anchors.validate()?;
    if anchors.feature_dim != model.feature_dim
        || anchors.offsets_per_anchor != model.offsets_per_anchor
        || grid.feature_dim() != model.input_dim
    {
        return Err(SccError::InvalidArgument("anchor/grid/model dimensions disagree".into()));
    }
    if anchors.is_empty() {
        return Ok(0.0);
    }
    let tables: Vec<&[f64]> = grid.levels.iter().map(|l| l.table.as_slice()).collect();
    let contexts: Vec<AnchorContext<f64>> = anchors
        .locations
        .iter()
        .map(|&loc| anchor_context(grid, &tables, model, &model.params, loc))
        .collect();
    Ok(entropy_loss(
        &contexts,
        &anchors.features,
        &anchors.scalings,
        &anchors.offsets,
        anchors.feature_dim,
        anchors.offsets_per_anchor,
    ))
}

/// SCC loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccWeights {
    pub lambda_vol: f64,
    pub lambda_entropy: f64,
}

impl Default for SccWeights {
    fn default() -> Self {
        Self { lambda_vol: LAMBDA_VOL_DEFAULT, lambda_entropy: LAMBDA_ENTROPY_DEFAULT }
    }
}

/// Volume regularizer: mean over derived Gaussians of the product of the
/// three scale magnitudes.
pub fn volume_loss<R: Scalar>(scales: &[[R; 3]]) -> R {
    assert!(!scales.is_empty(), "volume_loss needs at least one gaussian");
    let products: Vec<R> = scales.iter().map(|s| s[0] * s[1] * s[2]).collect();
    R::sum_of(&products).scale(1.0 / products.len() as f64)
}

/// `lambda_vol * L_vol + lambda_entropy * L_entropy`.
pub fn scc_loss<R: Scalar>(volume: R, entropy: R, weights: &SccWeights) -> R {
    volume.scale(weights.lambda_vol) + entropy.scale(weights.lambda_entropy)
}

/// Neural map from anchor features to per-offset Gaussian attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDecoder {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub offsets_per_anchor: usize,
    /// Flat 2-layer MLP parameters; output is K x 11 raw values per
    /// anchor: [opacity, color x3, quaternion x4, scale x3] per offset.
    pub params: Vec<f64>,
}

const DECODER_OUT_PER_OFFSET: usize = 11;

impl GaussianDecoder {
    pub fn output_dim(&self) -> usize {
        self.offsets_per_anchor * DECODER_OUT_PER_OFFSET
    }

    pub fn param_count(feature_dim: usize, hidden_dim: usize, offsets_per_anchor: usize) -> usize {
        mlp_param_count(feature_dim, hidden_dim, offsets_per_anchor * DECODER_OUT_PER_OFFSET)
    }

    pub fn init(feature_dim: usize, hidden_dim: usize, offsets_per_anchor: usize, rng: &mut Rng) -> Self {
        let out_dim = offsets_per_anchor * DECODER_OUT_PER_OFFSET;
        let mut params = vec![0.0; mlp_param_count(feature_dim, hidden_dim, out_dim)];
        let (w1, rest) = params.split_at_mut(hidden_dim * feature_dim);
        xavier_fill(rng, w1, feature_dim, hidden_dim);
        let (_b1, rest) = rest.split_at_mut(hidden_dim);
        let (w2, b2) = rest.split_at_mut(out_dim * hidden_dim);
        xavier_fill(rng, w2, hidden_dim, out_dim);
        // start visible: opacity bias puts sigmoid near 0.8
        for k in 0..offsets_per_anchor {
            b2[k * DECODER_OUT_PER_OFFSET] = 1.386_294_361_119_890_6;
        }
        Self { feature_dim, hidden_dim, offsets_per_anchor, params }
    }

    pub fn forward<R: Scalar>(&self, params: &[R], feature: &[R]) -> Vec<R> {
        mlp_forward(params, feature, self.feature_dim, self.hidden_dim, self.output_dim())
    }
}

/// Decodes one anchor into its K Gaussians. Positions are
/// `x^a + o_k * l[0..3]` (component-wise); scales are
/// `softplus(raw) * |l[3..6]| + 1e-8`; opacity and color go through a
/// sigmoid and the quaternion (biased toward identity) is normalized by
/// the renderer.
pub fn decode_anchor<R: Scalar>(
    location: [f64; 3],
    feature: &[R],
    scaling: &[R],
    offsets: &[R],
    decoder: &GaussianDecoder,
    decoder_params: &[R],
) -> Vec<GaussianParams<R>> {
    let raw = decoder.forward(decoder_params, feature);
    let k_count = decoder.offsets_per_anchor;
    let mut out = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let r = &raw[k * DECODER_OUT_PER_OFFSET..(k + 1) * DECODER_OUT_PER_OFFSET];
        let mean = [
            (offsets[3 * k] * scaling[0]).shift(location[0]),
            (offsets[3 * k + 1] * scaling[1]).shift(location[1]),
            (offsets[3 * k + 2] * scaling[2]).shift(location[2]),
        ];
        let scale = [
            (r[8].softplus() * scaling[3].abs()).shift(1e-8),
            (r[9].softplus() * scaling[4].abs()).shift(1e-8),
            (r[10].softplus() * scaling[5].abs()).shift(1e-8),
        ];
        out.push(GaussianParams {
            mean,
            scale,
            rotation: [r[4].shift(1.0), r[5], r[6], r[7]],
            opacity: r[0].sigmoid(),
            color: [r[1].sigmoid(), r[2].sigmoid(), r[3].sigmoid()],
        });
    }
    out
}

/// Decodes a whole anchor set into generic Gaussians, anchor-major.
pub fn anchors_to_gaussians<R: Scalar>(
    locations: &[[f64; 3]],
    features: &[R],
    scalings: &[R],
    offsets: &[R],
    decoder: &GaussianDecoder,
    decoder_params: &[R],
) -> Result<Vec<GaussianParams<R>>, SccError> {
    let n = locations.len();
    let fd = decoder.feature_dim;
    let k3 = 3 * decoder.offsets_per_anchor;
    if features.len() != n * fd || scalings.len() != n * SCALING_DIM || offsets.len() != n * k3 {
        return Err(SccError::InvalidArgument(format!(
            "anchor arrays do not match decoder dims (N={n}, D^a={fd}, 3K={k3})"
        )));
    }
    let mut out = Vec::with_capacity(n * decoder.offsets_per_anchor);
    for i in 0..n {
        out.extend(decode_anchor(
            locations[i],
            &features[i * fd..(i + 1) * fd],
            &scalings[i * SCALING_DIM..(i + 1) * SCALING_DIM],
            &offsets[i * k3..(i + 1) * k3],
            decoder,
            decoder_params,
        ));
    }
    Ok(out)
}

/// Concrete scene from a concrete anchor set.
pub fn anchors_to_scene(
    anchors: &AnchorSet,
    decoder: &GaussianDecoder,
    background: [f64; 3],
) -> Result<crate::render::SplatScene, SccError> {
    anchors.validate()?;
    let params = anchors_to_gaussians(
        &anchors.locations,
        &anchors.features,
        &anchors.scalings,
        &anchors.offsets,
        decoder,
        &decoder.params,
    )?;
    let gaussians = params
        .into_iter()
        .map(|g| {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                g.rotation[0],
                g.rotation[1],
                g.rotation[2],
                g.rotation[3],
            ));
            Gaussian3D::new(
                Vector3::from(g.mean),
                Vector3::from(g.scale),
                q,
                g.opacity,
                g.color,
            )
            .map_err(|e| SccError::InvalidArgument(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(crate::render::SplatScene::new(gaussians, background))
}
