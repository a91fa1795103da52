//! Entropy-coded container for anchor scenes.
//!
//! Layout (little-endian): magic "BLMS", version u16, flags u16, anchor
//! count u32, D^a u16, K u16, grid level count u8 with per-level
//! (resolution u16, T u32, F u8), weight blob length u32 + raw f32s,
//! location blob (N x 3 f32), payload length u64 + range-coded bytes.
//!
//! The weight blob is self-describing: [context hidden, decoder hidden,
//! eta x3, bbox min x3, bbox max x3, background x3, grid tables, context
//! params, decoder params], all f32. Quantized attributes are coded as
//! lattice symbols k = round(f / omega) under per-dimension Gaussian
//! frequency tables; decoding reconstructs k * omega exactly. All
//! probabilities are computed from the f32-rounded state so encoder and
//! decoder derive identical tables.

use super::anchor::{AnchorSet, SCALING_DIM};
use super::grid::{GridLevel, HashGrid};
use super::model::{
    anchor_context, feature_probability, AnchorContext, ContextModel, GaussianDecoder,
};
use super::SccError;

pub const MAGIC: [u8; 4] = *b"BLMS";
pub const VERSION: u16 = 1;

/// Symbols live in [-2^15, 2^15).
const SYMBOL_MIN: i64 = -(1 << 15);
const SYMBOL_MAX: i64 = (1 << 15) - 1;
const CDF_TOTAL: u32 = 1 << 16;
const LN_2: f64 = std::f64::consts::LN_2;

/// Everything the decoder needs to re-render a compressed scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SccState {
    pub anchors: AnchorSet,
    pub grid: HashGrid,
    pub model: ContextModel,
    pub decoder: GaussianDecoder,
    pub background: [f64; 3],
}

fn f32r(v: f64) -> f64 {
    f64::from(v as f32)
}

impl SccState {
    /// Rounds every serialized quantity (locations, tables, weights,
    /// box, background) through f32, the storage precision of the
    /// container. Anchor attributes are left alone; they are replaced by
    /// lattice values during encoding.
    pub fn rounded_to_f32(&self) -> SccState {
        let mut out = self.clone();
        for p in &mut out.anchors.locations {
            *p = p.map(f32r);
        }
        for level in &mut out.grid.levels {
            for v in &mut level.table {
                *v = f32r(*v);
            }
        }
        out.grid.bbox_min = out.grid.bbox_min.map(f32r);
        out.grid.bbox_max = out.grid.bbox_max.map(f32r);
        for v in &mut out.model.params {
            *v = f32r(*v);
        }
        out.model.eta = out.model.eta.map(f32r);
        for v in &mut out.decoder.params {
            *v = f32r(*v);
        }
        out.background = out.background.map(f32r);
        out
    }
}

/// Byte sizes of each container region.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SizeReport {
    pub header_bytes: usize,
    pub weights_bytes: usize,
    pub locations_bytes: usize,
    pub payload_bytes: usize,
    pub total_bytes: usize,
    /// Model-estimated payload size in bits (sum of -log2 p).
    pub entropy_estimate_bits: f64,
}

// ---------------------------------------------------------------------
// range coder (carry-propagating, byte renormalization)

struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    fn new() -> Self {
        Self { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total);
        let r = self.range / total;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        while self.range < (1 << 24) {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
    scale: u32,
}

impl<'a> RangeDecoder<'a> {
    fn new(input: &'a [u8]) -> Result<Self, SccError> {
        let mut d = Self { code: 0, range: u32::MAX, input, pos: 1, scale: 0 };
        if input.is_empty() {
            return Err(SccError::Truncated);
        }
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte()?);
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8, SccError> {
        let b = *self.input.get(self.pos).ok_or(SccError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn decode_freq(&mut self, total: u32) -> u32 {
        self.scale = self.range / total;
        (self.code / self.scale).min(total - 1)
    }

    fn decode_update(&mut self, cum: u32, freq: u32) -> Result<(), SccError> {
        self.code -= cum * self.scale;
        self.range = self.scale * freq;
        while self.range < (1 << 24) {
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
            self.range <<= 8;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// per-dimension symbol model

struct DimModel {
    /// First coarse window symbol.
    c_lo: i64,
    /// Residual bit count; each coarse symbol spans `1 << m_shift` fine
    /// lattice steps, the residual being coded uniformly. Wide
    /// distributions (sigma >> omega) keep the window small this way at
    /// a sub-percent rate cost.
    m_shift: u32,
    /// Cumulative frequencies; index i covers coarse window symbol i,
    /// the last slot is the escape. Last entry = CDF_TOTAL.
    cum: Vec<u32>,
}

fn normal_cdf(t: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf((t - mu) / (sigma * std::f64::consts::SQRT_2)))
}

const WINDOW_HALF_MAX: f64 = 512.0;

fn build_dim_model(mu: f64, sigma: f64, omega: f64) -> DimModel {
    let mut m_shift = 0u32;
    while 6.0 * sigma / (omega * (1u64 << m_shift) as f64) > WINDOW_HALF_MAX && m_shift < 16 {
        m_shift += 1;
    }
    let m = (1u64 << m_shift) as i64;
    let omega_c = omega * m as f64;

    let c_min = SYMBOL_MIN.div_euclid(m);
    let c_max = SYMBOL_MAX.div_euclid(m);
    let cc = (mu / omega_c).round().clamp(c_min as f64, c_max as f64) as i64;
    let half = ((6.0 * sigma / omega_c).ceil().min(WINDOW_HALF_MAX) as i64 + 2).max(8);
    let c_lo = (cc - half).max(c_min);
    let c_hi = (cc + half).min(c_max);
    let n_window = (c_hi - c_lo + 1) as usize;

    // raw interval masses plus an escape slot for out-of-window symbols;
    // coarse symbol c covers fine symbols [c m, (c+1) m - 1]
    let mut probs = Vec::with_capacity(n_window + 1);
    let mut boundary_lo = normal_cdf(((c_lo * m) as f64 - 0.5) * omega, mu, sigma);
    let mut window_mass = 0.0;
    for i in 0..n_window {
        let upper = ((c_lo + i as i64 + 1) * m) as f64 - 0.5;
        let boundary_hi = normal_cdf(upper * omega, mu, sigma);
        let p = (boundary_hi - boundary_lo).max(0.0);
        probs.push(p);
        window_mass += p;
        boundary_lo = boundary_hi;
    }
    probs.push((1.0 - window_mass).max(0.0) + 1e-10);

    // deterministic quantization to CDF_TOTAL with every slot >= 1:
    // round the cumulative curve over the reduced budget, then add the
    // slot index so the table is strictly increasing.
    let total_mass: f64 = probs.iter().sum();
    let budget = (CDF_TOTAL - (n_window as u32 + 1)) as f64;
    let mut cum = Vec::with_capacity(n_window + 2);
    cum.push(0u32);
    let mut running = 0.0;
    for (i, p) in probs.iter().enumerate() {
        running += p;
        cum.push((running / total_mass * budget).round() as u32 + (i as u32 + 1));
    }
    debug_assert_eq!(*cum.last().unwrap(), CDF_TOTAL);
    DimModel { c_lo, m_shift, cum }
}

impl DimModel {
    fn window_len(&self) -> usize {
        self.cum.len() - 2
    }

    fn slot(&self, idx: usize) -> (u32, u32) {
        (self.cum[idx], self.cum[idx + 1] - self.cum[idx])
    }

    fn encode_symbol(&self, enc: &mut RangeEncoder, k: i64) {
        let m = 1i64 << self.m_shift;
        let c = k.div_euclid(m);
        let idx = (c - self.c_lo) as usize;
        if c >= self.c_lo && idx < self.window_len() {
            let (cum, freq) = self.slot(idx);
            enc.encode(cum, freq, CDF_TOTAL);
            if self.m_shift > 0 {
                enc.encode(k.rem_euclid(m) as u32, 1, m as u32);
            }
        } else {
            let (cum, freq) = self.slot(self.window_len());
            enc.encode(cum, freq, CDF_TOTAL);
            let raw = (k as i16) as u16;
            enc.encode(u32::from(raw >> 8), 1, 256);
            enc.encode(u32::from(raw & 0xFF), 1, 256);
        }
    }

    fn decode_symbol(&self, dec: &mut RangeDecoder) -> Result<i64, SccError> {
        let f = dec.decode_freq(CDF_TOTAL);
        let idx = self.cum.partition_point(|&c| c <= f) - 1;
        let (cum, freq) = self.slot(idx);
        dec.decode_update(cum, freq)?;
        if idx < self.window_len() {
            let m = 1i64 << self.m_shift;
            let mut k = (self.c_lo + idx as i64) * m;
            if self.m_shift > 0 {
                let r = dec.decode_freq(m as u32);
                dec.decode_update(r, 1)?;
                k += i64::from(r);
            }
            Ok(k)
        } else {
            let hi = dec.decode_freq(256);
            dec.decode_update(hi, 1)?;
            let lo = dec.decode_freq(256);
            dec.decode_update(lo, 1)?;
            Ok(i64::from(((hi << 8) | lo) as u16 as i16))
        }
    }
}

// ---------------------------------------------------------------------
// symbol extraction

/// Per-anchor symbols in attribute order (features, scalings, offsets).
struct Symbols {
    per_anchor: Vec<Vec<i64>>,
}

/// Computes per-anchor contexts from an f32-rounded state.
fn contexts_of(state: &SccState) -> Vec<AnchorContext<f64>> {
    let tables: Vec<&[f64]> = state.grid.levels.iter().map(|l| l.table.as_slice()).collect();
    state
        .anchors
        .locations
        .iter()
        .map(|&loc| anchor_context(&state.grid, &tables, &state.model, &state.model.params, loc))
        .collect()
}

fn extract_symbols(
    state: &SccState,
    contexts: &[AnchorContext<f64>],
) -> Result<Symbols, SccError> {
    let a = &state.anchors;
    let fd = a.feature_dim;
    let k3 = 3 * a.offsets_per_anchor;
    let mut per_anchor = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let ctx = &contexts[i];
        let mut row = Vec::with_capacity(a.attr_dims());
        let groups: [(&[f64], f64); 3] = [
            (a.feature(i), ctx.omega[0]),
            (a.scaling(i), ctx.omega[1]),
            (a.offsets_of(i), ctx.omega[2]),
        ];
        let mut dim = 0usize;
        for (values, omega) in groups {
            for v in values {
                let k = (v / omega).round();
                if !(k >= SYMBOL_MIN as f64 && k <= SYMBOL_MAX as f64) {
                    return Err(SccError::SymbolOutOfRange { anchor: i, dim, value: *v });
                }
                row.push(k as i64);
                dim += 1;
            }
        }
        debug_assert_eq!(row.len(), fd + SCALING_DIM + k3);
        per_anchor.push(row);
    }
    Ok(Symbols { per_anchor })
}

fn omega_for_dim(ctx: &AnchorContext<f64>, dim: usize, feature_dim: usize) -> f64 {
    if dim < feature_dim {
        ctx.omega[0]
    } else if dim < feature_dim + SCALING_DIM {
        ctx.omega[1]
    } else {
        ctx.omega[2]
    }
}

/// Replaces anchor attributes by their reconstruction lattice values
/// `k * omega` under the f32-rounded state. This is exactly what
/// `decode(encode(state))` yields.
pub fn quantize_state(state: &SccState) -> Result<SccState, SccError> {
    let mut snap = state.rounded_to_f32();
    let contexts = contexts_of(&snap);
    let symbols = extract_symbols(&snap, &contexts)?;
    apply_symbols(&mut snap, &contexts, &symbols);
    Ok(snap)
}

fn apply_symbols(state: &mut SccState, contexts: &[AnchorContext<f64>], symbols: &Symbols) {
    let fd = state.anchors.feature_dim;
    let k3 = 3 * state.anchors.offsets_per_anchor;
    for (i, row) in symbols.per_anchor.iter().enumerate() {
        let ctx = &contexts[i];
        for (dim, &k) in row.iter().enumerate() {
            let omega = omega_for_dim(ctx, dim, fd);
            let value = k as f64 * omega;
            if dim < fd {
                state.anchors.features[i * fd + dim] = value;
            } else if dim < fd + SCALING_DIM {
                state.anchors.scalings[i * SCALING_DIM + dim - fd] = value;
            } else {
                state.anchors.offsets[i * k3 + dim - fd - SCALING_DIM] = value;
            }
        }
    }
}

// ---------------------------------------------------------------------
// container serialization

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SccError> {
        let end = self.pos.checked_add(n).ok_or(SccError::Truncated)?;
        if end > self.buf.len() {
            return Err(SccError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SccError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, SccError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, SccError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SccError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f64, SccError> {
        Ok(f64::from(f32::from_le_bytes(self.take(4)?.try_into().unwrap())))
    }
}

fn weight_blob_f32_count(state: &SccState) -> usize {
    2 + 3 + 6 + 3 + state.grid.param_count() + state.model.params.len() + state.decoder.params.len()
}

/// Encodes the state, returning the container bytes and a size report.
pub fn encode(state: &SccState) -> Result<(Vec<u8>, SizeReport), SccError> {
    state.anchors.validate()?;
    if state.anchors.feature_dim != state.model.feature_dim
        || state.anchors.offsets_per_anchor != state.model.offsets_per_anchor
        || state.grid.feature_dim() != state.model.input_dim
        || state.decoder.feature_dim != state.anchors.feature_dim
        || state.decoder.offsets_per_anchor != state.anchors.offsets_per_anchor
    {
        return Err(SccError::InvalidArgument("state dimensions disagree".into()));
    }
    let snap = state.rounded_to_f32();
    let contexts = contexts_of(&snap);
    let symbols = extract_symbols(&snap, &contexts)?;

    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u16(0); // flags
    w.u32(snap.anchors.len() as u32);
    w.u16(snap.anchors.feature_dim as u16);
    w.u16(snap.anchors.offsets_per_anchor as u16);
    w.u8(snap.grid.levels.len() as u8);
    for level in &snap.grid.levels {
        w.u16(level.resolution as u16);
        w.u32(level.table_size as u32);
        w.u8(level.features_per_entry as u8);
    }
    let header_bytes = w.buf.len();

    // weight blob
    let blob_f32s = weight_blob_f32_count(&snap);
    w.u32((blob_f32s * 4) as u32);
    w.f32(snap.model.hidden_dim as f64);
    w.f32(snap.decoder.hidden_dim as f64);
    for v in snap.model.eta {
        w.f32(v);
    }
    for v in snap.grid.bbox_min.iter().chain(snap.grid.bbox_max.iter()) {
        w.f32(*v);
    }
    for v in snap.background {
        w.f32(v);
    }
    for level in &snap.grid.levels {
        for v in &level.table {
            w.f32(*v);
        }
    }
    for v in &snap.model.params {
        w.f32(*v);
    }
    for v in &snap.decoder.params {
        w.f32(*v);
    }
    let weights_bytes = w.buf.len() - header_bytes;

    for p in &snap.anchors.locations {
        for v in p {
            w.f32(*v);
        }
    }
    let locations_bytes = snap.anchors.len() * 12;

    // payload
    let fd = snap.anchors.feature_dim;
    let mut enc = RangeEncoder::new();
    let mut estimate_bits = 0.0;
    for (i, row) in symbols.per_anchor.iter().enumerate() {
        let ctx = &contexts[i];
        for (dim, &k) in row.iter().enumerate() {
            let omega = omega_for_dim(ctx, dim, fd);
            let dm = build_dim_model(ctx.mu[dim], ctx.sigma[dim], omega);
            dm.encode_symbol(&mut enc, k);
            let p =
                feature_probability(k as f64 * omega, omega, ctx.mu[dim], ctx.sigma[dim]);
            estimate_bits += -p.ln() / LN_2;
        }
    }
    let payload = enc.finish();
    w.u64(payload.len() as u64);
    w.buf.extend_from_slice(&payload);
    let payload_bytes = payload.len();

    let total_bytes = w.buf.len();
    Ok((
        w.buf,
        SizeReport {
            header_bytes,
            weights_bytes,
            locations_bytes,
            payload_bytes: payload_bytes + 8,
            total_bytes,
            entropy_estimate_bits: estimate_bits,
        },
    ))
}

/// Decodes a container back into a renderable state. The anchor
/// attributes come back on their quantization lattices, bit-exactly
/// matching [`quantize_state`] of the encoded state.
pub fn decode(bytes: &[u8]) -> Result<SccState, SccError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SccError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(SccError::UnsupportedVersion(version));
    }
    let _flags = r.u16()?;
    let n = r.u32()? as usize;
    let feature_dim = r.u16()? as usize;
    let offsets_per_anchor = r.u16()? as usize;
    let level_count = r.u8()? as usize;
    let mut level_specs = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let resolution = u32::from(r.u16()?);
        let table_size = r.u32()? as usize;
        let features = r.u8()? as usize;
        level_specs.push((resolution, table_size, features));
    }
    if level_specs.is_empty() {
        return Err(SccError::Malformed("grid has no levels".into()));
    }

    let blob_len = r.u32()? as usize;
    let blob_start = r.pos;
    let ctx_hidden = r.f32()? as usize;
    let dec_hidden = r.f32()? as usize;
    if ctx_hidden == 0 || dec_hidden == 0 {
        return Err(SccError::Malformed("zero hidden width".into()));
    }
    let eta = [r.f32()?, r.f32()?, r.f32()?];
    let bbox_min = [r.f32()?, r.f32()?, r.f32()?];
    let bbox_max = [r.f32()?, r.f32()?, r.f32()?];
    let background = [r.f32()?, r.f32()?, r.f32()?];

    let mut levels = Vec::with_capacity(level_count);
    for &(resolution, table_size, features_per_entry) in &level_specs {
        let mut table = Vec::with_capacity(table_size * features_per_entry);
        for _ in 0..table_size * features_per_entry {
            table.push(r.f32()?);
        }
        levels.push(GridLevel { resolution, table_size, features_per_entry, table });
    }
    let grid = HashGrid { levels, bbox_min, bbox_max };
    let input_dim = grid.feature_dim();

    let attr = feature_dim + SCALING_DIM + 3 * offsets_per_anchor;
    let ctx_count = ContextModel::param_count(input_dim, ctx_hidden, attr);
    let mut ctx_params = Vec::with_capacity(ctx_count);
    for _ in 0..ctx_count {
        ctx_params.push(r.f32()?);
    }
    let model = ContextModel {
        input_dim,
        hidden_dim: ctx_hidden,
        feature_dim,
        offsets_per_anchor,
        eta,
        params: ctx_params,
    };
    let dec_count = GaussianDecoder::param_count(feature_dim, dec_hidden, offsets_per_anchor);
    let mut dec_params = Vec::with_capacity(dec_count);
    for _ in 0..dec_count {
        dec_params.push(r.f32()?);
    }
    let decoder = GaussianDecoder {
        feature_dim,
        hidden_dim: dec_hidden,
        offsets_per_anchor,
        params: dec_params,
    };
    if r.pos - blob_start != blob_len {
        return Err(SccError::Malformed(format!(
            "weight blob length {} does not match architecture ({} read)",
            blob_len,
            r.pos - blob_start
        )));
    }

    let mut locations = Vec::with_capacity(n);
    for _ in 0..n {
        locations.push([r.f32()?, r.f32()?, r.f32()?]);
    }
    let anchors = AnchorSet {
        feature_dim,
        offsets_per_anchor,
        locations,
        features: vec![0.0; n * feature_dim],
        scalings: vec![0.0; n * SCALING_DIM],
        offsets: vec![0.0; n * 3 * offsets_per_anchor],
    };

    let payload_len = r.u64()? as usize;
    let payload = r.take(payload_len)?;

    let mut state = SccState { anchors, grid, model, decoder, background };
    let contexts = contexts_of(&state);
    let mut dec = RangeDecoder::new(payload)?;
    let fd = state.anchors.feature_dim;
    let mut symbols = Symbols { per_anchor: Vec::with_capacity(n) };
    for ctx in contexts.iter().take(n) {
        let mut row = Vec::with_capacity(attr);
        for dim in 0..attr {
            let omega = omega_for_dim(ctx, dim, fd);
            let dm = build_dim_model(ctx.mu[dim], ctx.sigma[dim], omega);
            row.push(dm.decode_symbol(&mut dec)?);
        }
        symbols.per_anchor.push(row);
    }
    apply_symbols(&mut state, &contexts, &symbols);
    Ok(state)
}
