use super::SccError;
use crate::autodiff::Scalar;
use crate::scene::Rng;

/// Multi-resolution hash feature grid over an axis-aligned box.
///
/// Lattice corners are looked up with the coordinate-prime XOR hash
/// `(x ^ y*P1 ^ z*P2) mod T`; queries trilinearly interpolate the eight
/// surrounding corners per level and concatenate the levels.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    pub levels: Vec<GridLevel>,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel {
    /// Cells per axis (lattice has resolution + 1 corners).
    pub resolution: u32,
    pub table_size: usize,
    pub features_per_entry: usize,
    /// T x F row-major feature table.
    pub table: Vec<f64>,
}

const HASH_P1: u64 = 2_654_435_761;
const HASH_P2: u64 = 805_459_861;

pub(crate) fn spatial_hash(x: u64, y: u64, z: u64, table_size: usize) -> usize {
    ((x ^ y.wrapping_mul(HASH_P1) ^ z.wrapping_mul(HASH_P2)) % table_size as u64) as usize
}

impl HashGrid {
    /// Builds a grid with zeroed tables.
    pub fn new(
        resolutions: &[u32],
        table_size: usize,
        features_per_entry: usize,
        bbox_min: [f64; 3],
        bbox_max: [f64; 3],
    ) -> Result<Self, SccError> {
        if resolutions.is_empty() {
            return Err(SccError::InvalidArgument("grid needs at least one level".into()));
        }
        if !resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(SccError::InvalidArgument(
                "grid resolutions must be strictly increasing".into(),
            ));
        }
        if table_size == 0 || features_per_entry == 0 {
            return Err(SccError::InvalidArgument("empty grid table".into()));
        }
        for a in 0..3 {
            if !(bbox_min[a] < bbox_max[a]) {
                return Err(SccError::InvalidArgument(format!(
                    "degenerate bounding box on axis {a}"
                )));
            }
        }
        let levels = resolutions
            .iter()
            .map(|&resolution| GridLevel {
                resolution,
                table_size,
                features_per_entry,
                table: vec![0.0; table_size * features_per_entry],
            })
            .collect();
        Ok(Self { levels, bbox_min, bbox_max })
    }

    /// Small random table initialization, symmetric around zero.
    pub fn randomize(&mut self, rng: &mut Rng, amplitude: f64) {
        for level in &mut self.levels {
            for v in &mut level.table {
                *v = rng.uniform_in(-amplitude, amplitude);
            }
        }
    }

    /// Concatenated feature width D^h.
    pub fn feature_dim(&self) -> usize {
        self.levels.iter().map(|l| l.features_per_entry).sum()
    }

    pub fn param_count(&self) -> usize {
        self.levels.iter().map(|l| l.table.len()).sum()
    }

    /// The eight corner table indices and trilinear weights for a query
    /// position at one level. Positions are clamped into the box.
    pub fn corner_lookups(&self, level: usize, position: [f64; 3]) -> ([usize; 8], [f64; 8]) {
        let lv = &self.levels[level];
        let res = lv.resolution as f64;
        let mut cell = [0u64; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let t = ((position[a] - self.bbox_min[a]) / (self.bbox_max[a] - self.bbox_min[a]))
                .clamp(0.0, 1.0);
            let scaled = t * res;
            let c = scaled.floor().min(res - 1.0).max(0.0);
            cell[a] = c as u64;
            frac[a] = scaled - c;
        }
        let mut indices = [0usize; 8];
        let mut weights = [0.0f64; 8];
        for corner in 0..8 {
            let dx = (corner & 1) as u64;
            let dy = ((corner >> 1) & 1) as u64;
            let dz = ((corner >> 2) & 1) as u64;
            indices[corner] =
                spatial_hash(cell[0] + dx, cell[1] + dy, cell[2] + dz, lv.table_size);
            let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
            weights[corner] = wx * wy * wz;
        }
        (indices, weights)
    }

    /// Interpolated feature with caller-provided table values (one slice
    /// per level, laid out like [`GridLevel::table`]). This is the
    /// differentiable path; table entries may be tape variables.
    pub fn interpolate<R: Scalar>(&self, tables: &[&[R]], position: [f64; 3]) -> Vec<R> {
        assert_eq!(tables.len(), self.levels.len());
        let mut out = Vec::with_capacity(self.feature_dim());
        for (li, level) in self.levels.iter().enumerate() {
            let (indices, weights) = self.corner_lookups(li, position);
            let table = tables[li];
            debug_assert_eq!(table.len(), level.table_size * level.features_per_entry);
            for f in 0..level.features_per_entry {
                let corners: Vec<R> = indices
                    .iter()
                    .map(|&idx| table[idx * level.features_per_entry + f])
                    .collect();
                out.push(R::lincomb_of(&corners, &weights));
            }
        }
        out
    }

    /// Interpolated feature from the grid's own tables.
    pub fn hash_feature(&self, position: [f64; 3]) -> Vec<f64> {
        let tables: Vec<&[f64]> = self.levels.iter().map(|l| l.table.as_slice()).collect();
        self.interpolate(&tables, position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> HashGrid {
        HashGrid::new(&[4, 8], 257, 2, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_tables_give_zero_features() {
        let g = grid();
        let f = g.hash_feature([0.37, 0.91, 0.11]);
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lattice_corner_returns_the_corner_entry() {
        let mut g = grid();
        for level in &mut g.levels {
            for (i, v) in level.table.iter_mut().enumerate() {
                *v = i as f64 * 0.01 - 1.0;
            }
        }
        // (0.5, 0.25, 0.75) is a lattice corner of the 4-resolution level:
        // cell coords (2, 1, 3)
        let f = g.hash_feature([0.5, 0.25, 0.75]);
        let idx = spatial_hash(2, 1, 3, 257);
        for k in 0..2 {
            assert!((f[k] - g.levels[0].table[idx * 2 + k]).abs() < 1e-12);
        }
        // and of the 8-resolution level at (4, 2, 6)
        let idx = spatial_hash(4, 2, 6, 257);
        for k in 0..2 {
            assert!((f[2 + k] - g.levels[1].table[idx * 2 + k]).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_center_averages_the_eight_corners() {
        let mut g = HashGrid::new(&[4], 509, 3, [0.0; 3], [1.0; 3]).unwrap();
        for (i, v) in g.levels[0].table.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        // center of cell (1, 2, 0): position ((1.5)/4, (2.5)/4, (0.5)/4)
        let f = g.hash_feature([1.5 / 4.0, 2.5 / 4.0, 0.5 / 4.0]);

        // direct trilinear oracle: equal 1/8 weights at the center
        let mut expect = [0.0f64; 3];
        for dz in 0..2u64 {
            for dy in 0..2u64 {
                for dx in 0..2u64 {
                    let idx = spatial_hash(1 + dx, 2 + dy, dz, 509);
                    for k in 0..3 {
                        expect[k] += g.levels[0].table[idx * 3 + k] / 8.0;
                    }
                }
            }
        }
        for k in 0..3 {
            assert!((f[k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn positions_outside_the_box_are_clamped() {
        let mut g = grid();
        let mut rng = Rng::seed_from(1);
        g.randomize(&mut rng, 0.5);
        let inside = g.hash_feature([0.0, 0.0, 1.0]);
        let outside = g.hash_feature([-3.0, -0.5, 7.0]);
        assert_eq!(inside, outside);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(HashGrid::new(&[], 16, 2, [0.0; 3], [1.0; 3]).is_err());
        assert!(HashGrid::new(&[8, 8], 16, 2, [0.0; 3], [1.0; 3]).is_err());
        assert!(HashGrid::new(&[4, 8], 16, 2, [0.0; 3], [0.0, 1.0, 1.0]).is_err());
    }
}
