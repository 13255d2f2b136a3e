//! Pipeline configuration, read from a single TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use sccalib_core::calib::{InitNoise, OptimizerConfig};
use sccalib_core::imagefeat::FeatureConfig;
use sccalib_core::synth::VideoConfig;
use serde::{Deserialize, Serialize};

/// Where point tracks come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrackerSpec {
    /// Ground-truth tracks derived from the synthetic scene in `gt/`.
    Synthetic,
    /// Precomputed tracks, one `%05d.json` file per seed frame.
    File(PathBuf),
}

impl FromStr for TrackerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(format!("tracker must be `synthetic` or `file:<dir>`, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for TrackerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic => f.write_str("synthetic"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for TrackerSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrackerSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Starting focal length; the image width when unset.
    pub focal: Option<f64>,
    pub rotation_sigma_deg: f64,
    pub translation_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        let noise = InitNoise::default();
        Self {
            focal: None,
            rotation_sigma_deg: noise.rotation_sigma_deg,
            translation_sigma: noise.translation_sigma,
        }
    }
}

impl InitConfig {
    pub fn noise(&self) -> InitNoise {
        InitNoise {
            rotation_sigma_deg: self.rotation_sigma_deg,
            translation_sigma: self.translation_sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Render every `stride`-th frame.
    pub stride: usize,
    /// Screen-space standard deviation of each splat, in pixels.
    pub splat_px: f64,
    pub opacity: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            stride: 5,
            splat_px: 1.5,
            opacity: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Write an overlay image for every `overlay_stride`-th frame.
    pub overlay_stride: usize,
    /// Frame offset used for relative pose error.
    pub rpe_delta: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            overlay_stride: 10,
            rpe_delta: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub tau: usize,
    pub window: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    pub tracker: TrackerSpec,
    /// Seeds the synthetic scene, structural point sampling, initialization
    /// and the optimizer.
    pub seed: u64,
    pub deterministic: bool,
    pub optimizer: OptimizerConfig,
    pub init: InitConfig,
    pub synth: VideoConfig,
    pub render: RenderConfig,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let features = FeatureConfig::default();
        Self {
            dataset_dir: PathBuf::from("dataset"),
            output_dir: PathBuf::from("output"),
            tau: 100,
            window: features.window,
            canny_low: features.canny_low,
            canny_high: features.canny_high,
            tracker: TrackerSpec::Synthetic,
            seed: 0,
            deterministic: false,
            optimizer: OptimizerConfig::default(),
            init: InitConfig::default(),
            synth: VideoConfig::default(),
            render: RenderConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file. Relative paths are taken relative to the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset_dir = base.join(&cfg.dataset_dir);
        cfg.output_dir = base.join(&cfg.output_dir);
        if let TrackerSpec::File(dir) = &cfg.tracker {
            cfg.tracker = TrackerSpec::File(base.join(dir));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(mut self, seed: Option<u64>, deterministic: bool) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.deterministic |= deterministic;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 4 {
            bail!("tau must be at least 4, got {}", self.tau);
        }
        if self.window == 0 {
            bail!("window must be positive");
        }
        if !(0.0 <= self.canny_low && self.canny_low <= self.canny_high) {
            bail!(
                "need 0 <= canny_low <= canny_high, got {} and {}",
                self.canny_low,
                self.canny_high
            );
        }
        if self.render.stride == 0 || self.report.overlay_stride == 0 || self.report.rpe_delta == 0 {
            bail!("strides and rpe_delta must be positive");
        }
        if !(self.render.splat_px > 0.0) || !(0.0..=1.0).contains(&self.render.opacity) {
            bail!("render.splat_px must be positive and render.opacity in [0, 1]");
        }
        if let Some(f) = self.init.focal {
            if !(f > 0.0) {
                bail!("init.focal must be positive, got {f}");
            }
        }
        self.optimizer.validate()?;
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            window: self.window,
            canny_low: self.canny_low,
            canny_high: self.canny_high,
        }
    }

    /// Optimizer settings with the pipeline seed and determinism applied.
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            deterministic: self.deterministic,
            ..self.optimizer.clone()
        }
    }

    /// Video settings with the pipeline seed applied.
    pub fn video(&self) -> VideoConfig {
        let mut v = self.synth.clone();
        v.scene.seed = self.seed;
        v
    }
}
