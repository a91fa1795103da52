//! Plain-text `key = value` run configuration with `[sections]`.
//! Unknown sections or keys are rejected; `dump` prints the full
//! effective configuration in parseable form.

use super::PipelineError;
use crate::dpr::DprConfig;
use crate::geometry::TrajectoryConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prompt: String,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub seed: u64,
    pub iterations: usize,
    pub trajectory: TrajectoryConfig,
    pub dpr: DprSection,
    pub scc: SccSection,
    pub optimizer: OptSection,
    pub render: RenderSection,
    pub anchors: AnchorSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DprSection {
    pub enabled: bool,
    pub config: DprConfig,
    /// Pixels with accumulated alpha below this carry no depth supervision.
    pub alpha_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SccSection {
    pub feature_dim: usize,
    pub offsets_per_anchor: usize,
    pub grid_levels: Vec<u32>,
    pub grid_table_size: usize,
    pub grid_features: usize,
    pub context_hidden: usize,
    pub decoder_hidden: usize,
    pub eta: [f64; 3],
    pub tau: f64,
    pub lambda_vol: f64,
    pub lambda_entropy: f64,
    /// Render training views from noise-quantized anchors (straight
    /// through); disable to train on raw attributes.
    pub quantize_train_renders: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptSection {
    pub lr_anchor: f64,
    pub lr_feature: f64,
    pub lr_grid: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub checkpoint_interval: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSection {
    pub sigma_cutoff: f64,
    pub max_radius_px: f64,
    pub background: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSection {
    /// Voxel spacing as a fraction of the cloud bounding-box diagonal.
    pub voxel_fraction: f64,
    pub max_anchors: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prompt: "a desk-scale room".to_string(),
            width: 64,
            height: 64,
            fov_deg: 75.0,
            seed: 1,
            iterations: 1200,
            trajectory: TrajectoryConfig::default(),
            dpr: DprSection { enabled: true, config: DprConfig::default(), alpha_min: 0.5 },
            scc: SccSection {
                feature_dim: crate::scc::FEATURE_DIM_DEFAULT,
                offsets_per_anchor: crate::scc::OFFSETS_DEFAULT,
                grid_levels: vec![16, 32, 64, 128],
                grid_table_size: 1 << 13,
                grid_features: 4,
                context_hidden: 32,
                decoder_hidden: 32,
                eta: crate::scc::ETA_DEFAULT,
                tau: crate::scc::TAU_DEFAULT,
                lambda_vol: crate::scc::LAMBDA_VOL_DEFAULT,
                lambda_entropy: crate::scc::LAMBDA_ENTROPY_DEFAULT,
                quantize_train_renders: true,
            },
            optimizer: OptSection {
                lr_anchor: 1e-2,
                lr_feature: 5e-3,
                lr_grid: 5e-3,
                lr_mlp: 2e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                checkpoint_interval: 250,
            },
            render: RenderSection {
                sigma_cutoff: 3.0,
                max_radius_px: 24.0,
                background: [0.5, 0.5, 0.5],
            },
            anchors: AnchorSection { voxel_fraction: 0.01, max_anchors: 4000 },
        }
    }
}

fn cfg_err(line: usize, msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(format!("line {line}: {}", msg.into()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(ln, "unterminated section header"))?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "run" | "trajectory" | "dpr" | "scc" | "optimizer" | "render" | "anchors"
                ) {
                    return Err(cfg_err(ln, format!("unknown section '{section}'")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(ln, "expected 'key = value'"))?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)
                .map_err(|msg| cfg_err(ln, msg))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value '{value}' for {key}"))
        }
        match (section, key) {
            ("run", "prompt") => self.prompt = value.to_string(),
            ("run", "width") => self.width = num(value, key)?,
            ("run", "height") => self.height = num(value, key)?,
            ("run", "fov_deg") => self.fov_deg = num(value, key)?,
            ("run", "seed") => self.seed = num(value, key)?,
            ("run", "iterations") => self.iterations = num(value, key)?,

            ("trajectory", "num_cameras") => self.trajectory.num_cameras = num(value, key)?,
            ("trajectory", "rotation_step") => self.trajectory.rotation_step = num(value, key)?,
            ("trajectory", "support_count") => self.trajectory.support_count = num(value, key)?,
            ("trajectory", "support_shift_deg") => {
                self.trajectory.support_shift_deg = num(value, key)?
            }

            ("dpr", "enabled") => self.dpr.enabled = num(value, key)?,
            ("dpr", "lambda_pixel") => self.dpr.config.lambda_pixel = num(value, key)?,
            ("dpr", "lambda_dist") => self.dpr.config.lambda_dist = num(value, key)?,
            ("dpr", "lambda_smooth") => self.dpr.config.lambda_smooth = num(value, key)?,
            ("dpr", "cmd_order") => self.dpr.config.cmd_order = num(value, key)?,
            ("dpr", "sigma_spatial") => self.dpr.config.sigma_spatial = num(value, key)?,
            ("dpr", "sigma_color") => self.dpr.config.sigma_color = num(value, key)?,
            ("dpr", "window") => self.dpr.config.window = num(value, key)?,
            ("dpr", "strict_paper_cmd") => self.dpr.config.strict_paper_cmd = num(value, key)?,
            ("dpr", "alpha_min") => self.dpr.alpha_min = num(value, key)?,

            ("scc", "feature_dim") => self.scc.feature_dim = num(value, key)?,
            ("scc", "offsets_per_anchor") => self.scc.offsets_per_anchor = num(value, key)?,
            ("scc", "grid_levels") => {
                self.scc.grid_levels = value
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| format!("bad grid level '{v}'")))
                    .collect::<Result<_, _>>()?
            }
            ("scc", "grid_table_size") => self.scc.grid_table_size = num(value, key)?,
            ("scc", "grid_features") => self.scc.grid_features = num(value, key)?,
            ("scc", "context_hidden") => self.scc.context_hidden = num(value, key)?,
            ("scc", "decoder_hidden") => self.scc.decoder_hidden = num(value, key)?,
            ("scc", "eta_feature") => self.scc.eta[0] = num(value, key)?,
            ("scc", "eta_scaling") => self.scc.eta[1] = num(value, key)?,
            ("scc", "eta_offset") => self.scc.eta[2] = num(value, key)?,
            ("scc", "tau") => self.scc.tau = num(value, key)?,
            ("scc", "lambda_vol") => self.scc.lambda_vol = num(value, key)?,
            ("scc", "lambda_entropy") => self.scc.lambda_entropy = num(value, key)?,
            ("scc", "quantize_train_renders") => {
                self.scc.quantize_train_renders = num(value, key)?
            }

            ("optimizer", "lr_anchor") => self.optimizer.lr_anchor = num(value, key)?,
            ("optimizer", "lr_feature") => self.optimizer.lr_feature = num(value, key)?,
            ("optimizer", "lr_grid") => self.optimizer.lr_grid = num(value, key)?,
            ("optimizer", "lr_mlp") => self.optimizer.lr_mlp = num(value, key)?,
            ("optimizer", "beta1") => self.optimizer.beta1 = num(value, key)?,
            ("optimizer", "beta2") => self.optimizer.beta2 = num(value, key)?,
            ("optimizer", "eps") => self.optimizer.eps = num(value, key)?,
            ("optimizer", "checkpoint_interval") => {
                self.optimizer.checkpoint_interval = num(value, key)?
            }

            ("render", "sigma_cutoff") => self.render.sigma_cutoff = num(value, key)?,
            ("render", "max_radius_px") => self.render.max_radius_px = num(value, key)?,
            ("render", "background_r") => self.render.background[0] = num(value, key)?,
            ("render", "background_g") => self.render.background[1] = num(value, key)?,
            ("render", "background_b") => self.render.background[2] = num(value, key)?,

            ("anchors", "voxel_fraction") => self.anchors.voxel_fraction = num(value, key)?,
            ("anchors", "max_anchors") => self.anchors.max_anchors = num(value, key)?,

            _ => return Err(format!("unknown key '{key}' in section '[{section}]'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.width < 8 || self.height < 8 {
            return bad(format!("resolution {}x{} too small", self.width, self.height));
        }
        if !(10.0..170.0).contains(&self.fov_deg) {
            return bad(format!("fov_deg {} out of range", self.fov_deg));
        }
        self.trajectory
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.trajectory.support_count % 2 != 0 {
            return bad("support_count must be even (two views per base camera)".into());
        }
        if self.trajectory.support_count / 2 > self.trajectory.num_cameras {
            return bad("support_count exceeds 2 * num_cameras".into());
        }
        self.dpr
            .config
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.dpr.alpha_min) {
            return bad("alpha_min must lie in [0, 1]".into());
        }
        if self.scc.feature_dim == 0
            || self.scc.offsets_per_anchor == 0
            || self.scc.context_hidden == 0
            || self.scc.decoder_hidden == 0
        {
            return bad("scc dimensions must be positive".into());
        }
        if self.scc.eta.iter().any(|e| *e <= 0.0) || self.scc.tau <= 0.0 {
            return bad("scc eta and tau must be positive".into());
        }
        if self.anchors.voxel_fraction <= 0.0 || self.anchors.voxel_fraction > 0.5 {
            return bad(format!("voxel_fraction {} out of (0, 0.5]", self.anchors.voxel_fraction));
        }
        if self.anchors.max_anchors == 0 {
            return bad("max_anchors must be positive".into());
        }
        if self.render.sigma_cutoff <= 0.0 || self.render.max_radius_px <= 0.0 {
            return bad("render cutoffs must be positive".into());
        }
        Ok(())
    }

    /// Prints the full effective configuration; the output parses back
    /// to an identical config.
    pub fn dump(&self) -> String {
        let levels = self
            .scc
            .grid_levels
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "[run]\n\
             prompt = {}\n\
             width = {}\nheight = {}\nfov_deg = {}\nseed = {}\niterations = {}\n\
             \n[trajectory]\n\
             num_cameras = {}\nrotation_step = {}\nsupport_count = {}\nsupport_shift_deg = {}\n\
             \n[dpr]\n\
             enabled = {}\nlambda_pixel = {}\nlambda_dist = {}\nlambda_smooth = {}\n\
             cmd_order = {}\nsigma_spatial = {}\nsigma_color = {}\nwindow = {}\n\
             strict_paper_cmd = {}\nalpha_min = {}\n\
             \n[scc]\n\
             feature_dim = {}\noffsets_per_anchor = {}\ngrid_levels = {}\n\
             grid_table_size = {}\ngrid_features = {}\ncontext_hidden = {}\ndecoder_hidden = {}\n\
             eta_feature = {}\neta_scaling = {}\neta_offset = {}\ntau = {}\n\
             lambda_vol = {}\nlambda_entropy = {}\nquantize_train_renders = {}\n\
             \n[optimizer]\n\
             lr_anchor = {}\nlr_feature = {}\nlr_grid = {}\nlr_mlp = {}\n\
             beta1 = {}\nbeta2 = {}\neps = {}\ncheckpoint_interval = {}\n\
             \n[render]\n\
             sigma_cutoff = {}\nmax_radius_px = {}\n\
             background_r = {}\nbackground_g = {}\nbackground_b = {}\n\
             \n[anchors]\n\
             voxel_fraction = {}\nmax_anchors = {}\n",
            self.prompt,
            self.width,
            self.height,
            self.fov_deg,
            self.seed,
            self.iterations,
            self.trajectory.num_cameras,
            self.trajectory.rotation_step,
            self.trajectory.support_count,
            self.trajectory.support_shift_deg,
            self.dpr.enabled,
            self.dpr.config.lambda_pixel,
            self.dpr.config.lambda_dist,
            self.dpr.config.lambda_smooth,
            self.dpr.config.cmd_order,
            self.dpr.config.sigma_spatial,
            self.dpr.config.sigma_color,
            self.dpr.config.window,
            self.dpr.config.strict_paper_cmd,
            self.dpr.alpha_min,
            self.scc.feature_dim,
            self.scc.offsets_per_anchor,
            levels,
            self.scc.grid_table_size,
            self.scc.grid_features,
            self.scc.context_hidden,
            self.scc.decoder_hidden,
            self.scc.eta[0],
            self.scc.eta[1],
            self.scc.eta[2],
            self.scc.tau,
            self.scc.lambda_vol,
            self.scc.lambda_entropy,
            self.scc.quantize_train_renders,
            self.optimizer.lr_anchor,
            self.optimizer.lr_feature,
            self.optimizer.lr_grid,
            self.optimizer.lr_mlp,
            self.optimizer.beta1,
            self.optimizer.beta2,
            self.optimizer.eps,
            self.optimizer.checkpoint_interval,
            self.render.sigma_cutoff,
            self.render.max_radius_px,
            self.render.background[0],
            self.render.background[1],
            self.render.background[2],
            self.anchors.voxel_fraction,
            self.anchors.max_anchors,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_dump_and_parse() {
        let cfg = RunConfig::default();
        let parsed = RunConfig::parse(&cfg.dump()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("[run]\nwobble = 3\n");
        assert!(matches!(err, Err(PipelineError::Config(_))));
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = RunConfig::parse("[shenanigans]\nseed = 3\n");
        assert!(matches!(err, Err(PipelineError::Config(_))));
    }

    #[test]
    fn values_and_comments_parse() {
        let cfg = RunConfig::parse(
            "[run]\nseed = 42 # reproducibility\nwidth = 32\nheight=32\n\n[scc]\ngrid_levels = 8 16\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.width, 32);
        assert_eq!(cfg.scc.grid_levels, vec![8, 16]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse("[run]\nwidth = 2\n").is_err());
        assert!(RunConfig::parse("[trajectory]\nrotation_step = 9\n").is_err());
        assert!(RunConfig::parse("[trajectory]\nsupport_count = 3\n").is_err());
        assert!(RunConfig::parse("[run]\nseed = banana\n").is_err());
    }
}
