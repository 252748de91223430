//! The experiment description: everything a run depends on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disruption::DisruptionConfig;
use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::simsensor::SimConfig;
use crate::train::TrainConfig;

/// What feeds the network's depth channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    #[default]
    Radar,
    /// The single-frame LiDAR sweep thinned to radar-like density.
    SparseLidar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub depth_source: DepthSource,
    /// Thinning factor for [`DepthSource::SparseLidar`].
    pub lidar_downsample: usize,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            depth_source: DepthSource::Radar,
            lidar_downsample: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of held-out benchmark scenes.
    pub n_scenes: usize,
    /// First benchmark scene seed; training seeds never reach this range.
    pub seed_base: u64,
    /// Scenes for which depth images are written.
    pub viz_scenes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_scenes: 64,
            seed_base: 1 << 40,
            viz_scenes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub sim: SimConfig,
    pub input: InputConfig,
    pub disruption: DisruptionConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            sim: SimConfig::default(),
            input: InputConfig::default(),
            disruption: DisruptionConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn uses_depth_input(&self) -> bool {
        self.network.input_channels == 2
    }

    /// Checks every section and the contradictions between them.
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.disruption.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if self.name.is_empty() || self.name.contains([',', '\n', '/']) {
            return Err(Error::config(format!("name {:?} must be non-empty without commas, slashes or newlines", self.name)));
        }
        if self.network.input_channels > 2 {
            return Err(Error::config("network.input_channels must be 1 (image) or 2 (image and depth)"));
        }
        let radar_in = self.uses_depth_input() && self.input.depth_source == DepthSource::Radar;
        if self.disruption.enable_3d && !radar_in {
            return Err(Error::config(
                "disruption.enable_3d needs radar input (network.input_channels = 2 with input.depth_source = radar)",
            ));
        }
        if self.network.use_injection && !radar_in {
            return Err(Error::config("network.use_injection needs radar input (network.input_channels = 2 with input.depth_source = radar)"));
        }
        if self.input.lidar_downsample == 0 {
            return Err(Error::config("input.lidar_downsample must be at least 1"));
        }
        let m = self.network.size_multiple();
        let h = self.disruption.crop_h.filter(|_| self.disruption.enable_2d).unwrap_or(self.sim.height);
        let w = self.disruption.crop_w.filter(|_| self.disruption.enable_2d).unwrap_or(self.sim.width);
        if h % m != 0 || w % m != 0 || self.sim.height % m != 0 || self.sim.width % m != 0 {
            return Err(Error::config(format!(
                "raster {}x{} (training crop {h}x{w}) is not divisible by {m} as the network depth requires",
                self.sim.height, self.sim.width
            )));
        }
        if self.eval.n_scenes == 0 {
            return Err(Error::config("eval.n_scenes must be at least 1"));
        }
        Ok(())
    }

    /// Parses and validates a config; a parse error names the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
