use nalgebra::Vector3;

use super::SceneError;

/// Colored point cloud accumulated progressively. `source_frames` records
/// which generation step produced each point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vector3<f64>>,
    colors: Vec<[f64; 3]>,
    source_frames: Vec<u32>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        positions: Vec<Vector3<f64>>,
        colors: Vec<[f64; 3]>,
        source_frames: Vec<u32>,
    ) -> Result<Self, SceneError> {
        if positions.len() != colors.len() || positions.len() != source_frames.len() {
            return Err(SceneError::InvalidArgument(
                "point cloud arrays must share one length".into(),
            ));
        }
        for p in &positions {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(SceneError::InvalidArgument("non-finite point position".into()));
            }
        }
        for c in &colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(SceneError::InvalidArgument("point color out of [0,1]".into()));
            }
        }
        Ok(Self { positions, colors, source_frames })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }
    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }
    pub fn source_frames(&self) -> &[u32] {
        &self.source_frames
    }

    pub fn push(&mut self, position: Vector3<f64>, color: [f64; 3], source_frame: u32) {
        self.positions.push(position);
        self.colors.push(color);
        self.source_frames.push(source_frame);
    }

    /// Appends all of `other`, leaving existing points untouched.
    pub fn extend_from(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
        self.source_frames.extend_from_slice(&other.source_frames);
    }

    /// Axis-aligned bounding box of the positions.
    pub fn bounding_box(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo, hi))
    }
}
