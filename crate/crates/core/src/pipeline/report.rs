//! Machine-readable `report.json` accumulated across pipeline commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub generate: Option<GenerateReport>,
    pub train: Option<TrainReport>,
    pub compression: Option<CompressionReport>,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateReport {
    pub seed: u64,
    pub num_cameras: usize,
    pub point_count: usize,
    pub points_per_step: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub iterations: usize,
    pub anchor_count: usize,
    pub dpr_enabled: bool,
    pub initial_total_loss: f64,
    pub final_total_loss: f64,
    pub initial_holdout_psnr: f64,
    pub depth_supervision_error: f64,
    pub final_breakdown: LossBreakdownReport,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct LossBreakdownReport {
    pub l_rgb: f64,
    pub l_pixel: f64,
    pub l_dist: f64,
    pub l_smooth: f64,
    pub l_entropy: f64,
    pub l_vol: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompressionReport {
    pub anchor_count: usize,
    pub header_bytes: usize,
    pub weights_bytes: usize,
    pub locations_bytes: usize,
    pub payload_bytes: usize,
    pub total_bytes: usize,
    /// 32-bit serialization of the quantized anchor set itself
    /// (locations + attributes), the compression baseline.
    pub raw_anchor_bytes: usize,
    pub compressed_fraction: f64,
    pub bits_per_anchor: f64,
    pub entropy_estimate_bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub views: Vec<EvalView>,
    pub mean_psnr: f64,
    pub mean_masked_psnr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalView {
    pub yaw: f64,
    pub psnr: f64,
    pub masked_psnr: f64,
}

impl Report {
    pub fn path(out_dir: &Path) -> std::path::PathBuf {
        out_dir.join("report.json")
    }

    /// Loads the existing report, or an empty one if absent.
    pub fn load(out_dir: &Path) -> Result<Self, PipelineError> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Format(format!("report.json: {e}")))
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Format(format!("report.json: {e}")))?;
        text.push('\n');
        std::fs::write(Self::path(out_dir), text)?;
        Ok(())
    }
}
