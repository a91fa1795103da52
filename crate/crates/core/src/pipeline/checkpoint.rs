//! Binary training checkpoints: full f64 state, optimizer moments, and
//! the random-stream position, so a resumed run reproduces an
//! uninterrupted one exactly.

use std::path::Path;

use super::PipelineError;
use crate::autodiff::{AdamHyper, AdamState};
use crate::scc::{AnchorSet, ContextModel, GaussianDecoder, GridLevel, HashGrid, SccState};
use crate::scene::{Rng, RngSnapshot};

const MAGIC: [u8; 4] = *b"BLCK";
const VERSION: u16 = 1;

pub struct TrainerCheckpoint {
    pub state: SccState,
    pub adam: Vec<AdamState>,
    pub rng: RngSnapshot,
    pub iteration: u64,
    pub initial_total_loss: f64,
    pub initial_holdout_psnr: f64,
}

struct W {
    buf: Vec<u8>,
}

impl W {
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.f64(*v);
        }
    }
}

struct R<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        if self.pos + n > self.buf.len() {
            return Err(PipelineError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, PipelineError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, PipelineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, PipelineError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128, PipelineError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, PipelineError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, PipelineError> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

pub fn save(ckpt: &TrainerCheckpoint, path: &Path) -> Result<(), PipelineError> {
    let mut w = W { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u64(ckpt.iteration);
    w.f64(ckpt.initial_total_loss);
    w.f64(ckpt.initial_holdout_psnr);

    w.u64(ckpt.rng.seed);
    w.u128(ckpt.rng.word_pos);
    w.buf.push(u8::from(ckpt.rng.spare_normal.is_some()));
    w.f64(ckpt.rng.spare_normal.unwrap_or(0.0));

    let s = &ckpt.state;
    w.u32(s.anchors.len() as u32);
    w.u32(s.anchors.feature_dim as u32);
    w.u32(s.anchors.offsets_per_anchor as u32);
    let mut locs = Vec::with_capacity(s.anchors.len() * 3);
    for p in &s.anchors.locations {
        locs.extend_from_slice(p);
    }
    w.f64s(&locs);
    w.f64s(&s.anchors.features);
    w.f64s(&s.anchors.scalings);
    w.f64s(&s.anchors.offsets);

    w.u32(s.grid.levels.len() as u32);
    for l in &s.grid.levels {
        w.u32(l.resolution);
        w.u64(l.table_size as u64);
        w.u32(l.features_per_entry as u32);
        w.f64s(&l.table);
    }
    for v in s.grid.bbox_min.iter().chain(s.grid.bbox_max.iter()) {
        w.f64(*v);
    }

    w.u32(s.model.hidden_dim as u32);
    for v in s.model.eta {
        w.f64(v);
    }
    w.f64s(&s.model.params);
    w.u32(s.decoder.hidden_dim as u32);
    w.f64s(&s.decoder.params);
    for v in s.background {
        w.f64(v);
    }

    w.u32(ckpt.adam.len() as u32);
    for a in &ckpt.adam {
        let (m, v, step) = a.moments();
        w.u64(step);
        w.f64(a.hyper.beta1);
        w.f64(a.hyper.beta2);
        w.f64(a.hyper.eps);
        w.f64s(m);
        w.f64s(v);
    }

    std::fs::write(path, w.buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainerCheckpoint, PipelineError> {
    let bytes = std::fs::read(path)?;
    let mut r = R { buf: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(PipelineError::Format("not a checkpoint file".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(PipelineError::Format(format!("unsupported checkpoint version {version}")));
    }
    let iteration = r.u64()?;
    let initial_total_loss = r.f64()?;
    let initial_holdout_psnr = r.f64()?;

    let seed = r.u64()?;
    let word_pos = r.u128()?;
    let has_spare = r.take(1)?[0] != 0;
    let spare = r.f64()?;
    let rng = RngSnapshot { seed, word_pos, spare_normal: has_spare.then_some(spare) };

    let n = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let offsets_per_anchor = r.u32()? as usize;
    let locs = r.f64s()?;
    if locs.len() != 3 * n {
        return Err(PipelineError::Format("checkpoint location count mismatch".into()));
    }
    let locations = locs.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let features = r.f64s()?;
    let scalings = r.f64s()?;
    let offsets = r.f64s()?;
    let anchors =
        AnchorSet { feature_dim, offsets_per_anchor, locations, features, scalings, offsets };

    let level_count = r.u32()? as usize;
    let mut levels = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let resolution = r.u32()?;
        let table_size = r.u64()? as usize;
        let features_per_entry = r.u32()? as usize;
        let table = r.f64s()?;
        levels.push(GridLevel { resolution, table_size, features_per_entry, table });
    }
    let bbox_min = [r.f64()?, r.f64()?, r.f64()?];
    let bbox_max = [r.f64()?, r.f64()?, r.f64()?];
    let grid = HashGrid { levels, bbox_min, bbox_max };

    let ctx_hidden = r.u32()? as usize;
    let eta = [r.f64()?, r.f64()?, r.f64()?];
    let ctx_params = r.f64s()?;
    let model = ContextModel {
        input_dim: grid.feature_dim(),
        hidden_dim: ctx_hidden,
        feature_dim,
        offsets_per_anchor,
        eta,
        params: ctx_params,
    };
    let dec_hidden = r.u32()? as usize;
    let dec_params = r.f64s()?;
    let decoder = GaussianDecoder {
        feature_dim,
        hidden_dim: dec_hidden,
        offsets_per_anchor,
        params: dec_params,
    };
    let background = [r.f64()?, r.f64()?, r.f64()?];

    let adam_count = r.u32()? as usize;
    let mut adam = Vec::with_capacity(adam_count);
    for _ in 0..adam_count {
        let step = r.u64()?;
        let hyper = AdamHyper { beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let m = r.f64s()?;
        let v = r.f64s()?;
        adam.push(AdamState::restore(m, v, step, hyper));
    }

    Ok(TrainerCheckpoint {
        state: SccState { anchors, grid, model, decoder, background },
        adam,
        rng,
        iteration,
        initial_total_loss,
        initial_holdout_psnr,
    })
}

pub fn restore_rng(snapshot: &RngSnapshot) -> Rng {
    Rng::restore(snapshot)
}
