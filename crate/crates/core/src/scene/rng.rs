use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic random source: ChaCha12 keyed by a 64-bit seed, with
/// uniforms taken as 53-bit mantissas and normals via Box-Muller (libm
/// transcendentals). The same seed yields the identical stream on every
/// platform. Single-owner; never shared across threads.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha12Rng,
    spare_normal: Option<f64>,
}

/// Serializable snapshot of the generator position (for checkpoint resume).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RngSnapshot {
    pub seed: u64,
    pub word_pos: u128,
    pub spare_normal: Option<f64>,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Self { inner: ChaCha12Rng::seed_from_u64(seed), spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in [0, n). Uses the low-bias 128-bit multiply trick.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Box-Muller; the paired draw is cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1] keeps the log finite
        let u2 = self.uniform();
        let r = (-2.0 * libm::log(u1)).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn snapshot(&self, seed: u64) -> RngSnapshot {
        RngSnapshot { seed, word_pos: self.inner.get_word_pos(), spare_normal: self.spare_normal }
    }

    pub fn restore(snap: &RngSnapshot) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(snap.seed);
        inner.set_word_pos(snap.word_pos);
        Self { inner, spare_normal: snap.spare_normal }
    }
}
