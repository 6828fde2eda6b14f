//! JSON config file mirroring the CLI flags. Each subcommand reads its own
//! section; values from the file fill in flags the user did not pass.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default, rename = "trial_study")]
    pub trial_study: TrialStudySection,
    #[serde(default, rename = "noise_analysis")]
    pub noise_analysis: NoiseAnalysisSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub groups: Option<usize>,
    pub trials_per_group: Option<usize>,
    pub noise_scale: Option<f64>,
    pub seed: Option<u64>,
    pub lambda_hkl: Option<f64>,
    pub window_half_width: Option<f64>,
    pub points: Option<usize>,
    pub strain_half_range_micro: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub format: Option<String>,
    pub method: Option<String>,
    pub edge_model: Option<String>,
    pub lambda0: Option<f64>,
    pub zeta0: Option<f64>,
    pub windows: Option<Vec<f64>>,
    pub tremsin_window: Option<Vec<f64>>,
    pub sg_window: Option<usize>,
    pub sg_order: Option<usize>,
    pub noise_a: Option<f64>,
    pub noise_b: Option<f64>,
    pub gp_samples: Option<usize>,
    pub gp_density: Option<usize>,
    pub kernels: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialStudySection {
    pub methods: Option<String>,
    pub groups: Option<usize>,
    pub trials_per_group: Option<usize>,
    pub noise_scale: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub histogram_bins: Option<usize>,
    pub sg_window: Option<usize>,
    pub sg_order: Option<usize>,
    pub gp_samples: Option<usize>,
    pub gp_density: Option<usize>,
    pub kernels: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseAnalysisSection {
    pub format: Option<String>,
    pub bins: Option<usize>,
    pub left_fraction: Option<f64>,
    pub right_fraction: Option<f64>,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

/// Flag value, else config-file value, else default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag value, else config-file value.
pub fn pick_opt<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
