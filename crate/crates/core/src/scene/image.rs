use super::SceneError;

/// H x W RGB image with channels in [0, 1]. Row-major, index `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, fill: [f64; 3]) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self, SceneError> {
        if data.len() != width * height {
            return Err(SceneError::InvalidArgument(format!(
                "image data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (i, px) in data.iter().enumerate() {
            for c in px {
                if !(0.0..=1.0).contains(c) {
                    return Err(SceneError::InvalidArgument(format!(
                        "channel value {c} out of [0,1] at pixel {i}"
                    )));
                }
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        self.data[y * self.width + x] = c;
    }

    /// Rec. 601 luma.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.get(x, y);
        0.299 * r + 0.587 * g + 0.114 * b
    }

    pub fn same_shape(&self, other: &ColorImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// H x W z-depth map with a validity mask. Valid entries are finite and > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// All-invalid map.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, SceneError> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(SceneError::InvalidArgument("depth map shape mismatch".into()));
        }
        for (i, (&v, &ok)) in values.iter().zip(&valid).enumerate() {
            if ok && !(v.is_finite() && v > 0.0) {
                return Err(SceneError::InvalidArgument(format!(
                    "valid depth entry {v} at index {i} is not finite and positive"
                )));
            }
        }
        Ok(Self { width, height, values, valid })
    }

    /// Fully valid map from positive values.
    pub fn dense(width: usize, height: usize, values: Vec<f64>) -> Result<Self, SceneError> {
        let valid = vec![true; values.len()];
        Self::from_values(width, height, values, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn validity(&self) -> &[bool] {
        &self.valid
    }
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = y * self.width + x;
        self.values[i] = v;
        self.valid[i] = true;
    }
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.values[i] = 0.0;
        self.valid[i] = false;
    }
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean of valid entries, if any.
    pub fn mean_valid(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (v, ok) in self.values.iter().zip(&self.valid) {
            if *ok {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// H x W boolean mask. `true` means covered-by-projection; `false` marks
/// pixels still to be inpainted.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Result<Self, SceneError> {
        if data.len() != width * height {
            return Err(SceneError::InvalidArgument("mask shape mismatch".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
    pub fn same_shape_as_image(&self, img: &ColorImage) -> bool {
        self.width == img.width() && self.height == img.height()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_image_rejects_out_of_range() {
        let err = ColorImage::from_data(1, 1, vec![[1.5, 0.0, 0.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn depth_map_rejects_nonpositive_valid_entries() {
        assert!(DepthMap::dense(1, 1, vec![0.0]).is_err());
        assert!(DepthMap::dense(1, 1, vec![f64::NAN]).is_err());
        assert!(DepthMap::dense(1, 1, vec![2.0]).is_ok());
    }

    #[test]
    fn depth_invalid_entries_are_masked() {
        let d = DepthMap::from_values(2, 1, vec![0.0, 3.0], vec![false, true]).unwrap();
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), Some(3.0));
        assert_eq!(d.valid_count(), 1);
    }
}
