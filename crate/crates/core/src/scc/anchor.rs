use super::SccError;

/// Default anchor feature dimension.
pub const FEATURE_DIM_DEFAULT: usize = 50;
/// Default number of offsets (derived Gaussians) per anchor.
pub const OFFSETS_DEFAULT: usize = 10;
/// Scaling vector length per anchor (fixed by the representation).
pub const SCALING_DIM: usize = 6;

/// Structured compressible scene representation: per anchor a location,
/// a feature vector, a 6-vector of scalings, and 3K offsets, stored flat
/// and row-major per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub feature_dim: usize,
    pub offsets_per_anchor: usize,
    pub locations: Vec<[f64; 3]>,
    pub features: Vec<f64>,
    pub scalings: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl AnchorSet {
    pub fn empty(feature_dim: usize, offsets_per_anchor: usize) -> Self {
        Self {
            feature_dim,
            offsets_per_anchor,
            locations: Vec::new(),
            features: Vec::new(),
            scalings: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Attribute dimensions per anchor: D^a + 6 + 3K.
    pub fn attr_dims(&self) -> usize {
        self.feature_dim + SCALING_DIM + 3 * self.offsets_per_anchor
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn scaling(&self, i: usize) -> &[f64] {
        &self.scalings[i * SCALING_DIM..(i + 1) * SCALING_DIM]
    }

    pub fn offsets_of(&self, i: usize) -> &[f64] {
        let w = 3 * self.offsets_per_anchor;
        &self.offsets[i * w..(i + 1) * w]
    }

    pub fn validate(&self) -> Result<(), SccError> {
        let n = self.len();
        if self.features.len() != n * self.feature_dim
            || self.scalings.len() != n * SCALING_DIM
            || self.offsets.len() != n * 3 * self.offsets_per_anchor
        {
            return Err(SccError::InvalidArgument(format!(
                "anchor array lengths inconsistent with {n} anchors (D^a={}, K={})",
                self.feature_dim, self.offsets_per_anchor
            )));
        }
        let all_finite = self.locations.iter().flatten().all(|v| v.is_finite())
            && self.features.iter().all(|v| v.is_finite())
            && self.scalings.iter().all(|v| v.is_finite())
            && self.offsets.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(SccError::InvalidArgument("non-finite anchor attribute".into()));
        }
        Ok(())
    }

    /// Axis-aligned bounding box of the anchor locations.
    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.locations[0];
        let mut hi = self.locations[0];
        for p in &self.locations[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}
