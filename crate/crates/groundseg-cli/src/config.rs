//! Run configuration: flat JSON file keys, overridden by CLI flags, on top
//! of library defaults. Precedence: flag > file > default.

use std::path::Path;

use groundseg::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

/// Flat key-value view of every tunable. All keys optional; unknown keys are
/// rejected so typos fail loudly before any work starts.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub segments: Option<u32>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub bin_growth: Option<f64>,
    pub first_bin_width: Option<f64>,
    pub min_candidates: Option<usize>,
    pub tau_fit: Option<f64>,
    pub tau_slope: Option<f64>,
    pub tau_gap: Option<f64>,
    /// Degrees in the file for readability; radians internally.
    pub tau_angle_deg: Option<f64>,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub t_d: Option<f64>,
    pub t_v: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(groundseg::Error),
}

impl FileConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.segments {
            cfg.grid.num_segments = v;
        }
        if let Some(v) = self.r_min {
            cfg.grid.r_min = v;
        }
        if let Some(v) = self.r_max {
            cfg.grid.r_max = v;
        }
        if let Some(v) = self.bin_growth {
            cfg.grid.bin_growth = v;
        }
        if let Some(v) = self.first_bin_width {
            cfg.grid.first_bin_width = v;
        }
        if let Some(v) = self.min_candidates {
            cfg.grid.min_candidates_per_segment = v;
        }
        if let Some(v) = self.tau_fit {
            cfg.lines.tau_fit = v;
        }
        if let Some(v) = self.tau_slope {
            cfg.lines.tau_slope = v;
        }
        if let Some(v) = self.tau_gap {
            cfg.lines.tau_gap = v;
        }
        if let Some(v) = self.tau_angle_deg {
            cfg.lines.tau_angle = v.to_radians();
        }
        if let Some(v) = self.l_min {
            cfg.lines.l_min = v;
        }
        if let Some(v) = self.l_max {
            cfg.lines.l_max = v;
        }
        if let Some(v) = self.t_d {
            cfg.thresholds.t_d = v;
        }
        if let Some(v) = self.t_v {
            cfg.thresholds.t_v = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.scg.max_iterations = v;
        }
        if let Some(v) = self.gradient_tolerance {
            cfg.scg.gradient_tolerance = v;
        }
    }
}

/// Overrides exposed as CLI flags; applied after the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlagOverrides {
    pub segments: Option<u32>,
    pub t_d: Option<f64>,
    pub t_v: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// Worker cap for per-segment parallelism; 0 means one per core.
    pub jobs: usize,
    pub seed: u64,
}

pub fn resolve(
    file: Option<&Path>,
    flags: &FlagOverrides,
    jobs_flag: Option<usize>,
    seed_flag: Option<u64>,
) -> Result<RunConfig, ConfigError> {
    let mut pipeline = PipelineConfig::default();
    let mut jobs = 0usize;
    let mut seed = 0u64;
    if let Some(path) = file {
        let fc = FileConfig::from_path(path)?;
        fc.apply(&mut pipeline);
        if let Some(v) = fc.jobs {
            jobs = v;
        }
        if let Some(v) = fc.seed {
            seed = v;
        }
    }
    if let Some(v) = flags.segments {
        pipeline.grid.num_segments = v;
    }
    if let Some(v) = flags.t_d {
        pipeline.thresholds.t_d = v;
    }
    if let Some(v) = flags.t_v {
        pipeline.thresholds.t_v = v;
    }
    if let Some(v) = flags.r_min {
        pipeline.grid.r_min = v;
    }
    if let Some(v) = flags.r_max {
        pipeline.grid.r_max = v;
    }
    if let Some(v) = jobs_flag {
        jobs = v;
    }
    if let Some(v) = seed_flag {
        seed = v;
    }
    pipeline.validate().map_err(ConfigError::Invalid)?;
    Ok(RunConfig {
        pipeline,
        jobs,
        seed,
    })
}
