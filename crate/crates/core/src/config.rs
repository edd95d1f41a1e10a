//! Experiment configuration files (TOML).
//!
//! See `configs/experiment.toml` at the repository root for an annotated
//! example covering every key. Unknown keys are rejected. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlator::NormalizeMode;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io;
use crate::optics::{DetectorNoise, MaskParams, Psf, Scene, SpectralChannel};
use crate::spectral::ColorImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    #[serde(default = "default_corr")]
    pub correlation_length_px: f64,
    #[serde(default = "default_range")]
    pub amplitude_range: (f64, f64),
}

fn default_corr() -> f64 {
    1.5
}

fn default_range() -> (f64, f64) {
    (0.0, 1.0)
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            correlation_length_px: default_corr(),
            amplitude_range: default_range(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsfConfig {
    #[default]
    Identity,
    Box {
        size: usize,
    },
    Gaussian {
        sigma: f64,
    },
}

impl PsfConfig {
    pub fn build(&self) -> Result<Psf> {
        match *self {
            PsfConfig::Identity => Ok(Psf::Identity),
            PsfConfig::Box { size } => Psf::box_blur(size),
            PsfConfig::Gaussian { sigma } => Psf::gaussian(sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub probe_wavelength_nm: f64,
    pub display_wavelength_nm: f64,
    /// Grayscale reflectance map for this probe band.
    pub reflectance: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonScene {
    pub name: String,
    /// Visible-light RGB rendering of the scene.
    pub visible: PathBuf,
    /// One reflectance map per entry of the channel table, in the same order.
    pub reflectance: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Frames simulated by `simulate` and by each comparison scene.
    #[serde(default = "default_frames")]
    pub n_frames: u64,
    /// Snapshot points of the convergence study.
    #[serde(default)]
    pub frame_budgets: Vec<u64>,
    #[serde(default)]
    pub normalize: NormalizeMode,
    /// Apply the sRGB transfer function when writing PNGs.
    #[serde(default)]
    pub srgb: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub noise: DetectorNoise,
    #[serde(default)]
    pub psf: PsfConfig,
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub comparison: Vec<ComparisonScene>,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_frames() -> u64 {
    50_000
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses the right-hand side of a `key=value` override as a TOML value,
/// falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one dotted `key=value` override to a parsed config table.
pub fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {entry:?} is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

impl ExperimentConfig {
    /// Parses config text; `base_dir` anchors relative paths.
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: ExperimentConfig =
            ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(config_err)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config(
                "at least one [[channels]] entry is required".into(),
            ));
        }
        for c in &self.channels {
            SpectralChannel::new(c.probe_wavelength_nm, c.display_wavelength_nm)
                .map_err(config_err)?;
        }
        if self.n_frames < 1 {
            return Err(Error::Config("n_frames must be >= 1".into()));
        }
        if self.frame_budgets.iter().any(|&b| b < 2) {
            return Err(Error::Config("frame budgets must all be >= 2".into()));
        }
        if self.frame_budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "frame budgets must be strictly increasing".into(),
            ));
        }
        for s in &self.comparison {
            if s.reflectance.len() != self.channels.len() {
                return Err(Error::Config(format!(
                    "comparison scene {:?} lists {} reflectance maps for {} channels",
                    s.name,
                    s.reflectance.len(),
                    self.channels.len()
                )));
            }
        }
        self.noise.validate().map_err(config_err)?;
        self.psf.build().map_err(config_err)?;
        let probe = MaskParams {
            width: 1,
            height: 1,
            correlation_length_px: self.mask.correlation_length_px,
            seed: self.seed,
            amplitude_range: self.mask.amplitude_range,
        };
        probe.validate().map_err(config_err)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn spectral_channels(&self) -> Vec<SpectralChannel> {
        self.channels
            .iter()
            .map(|c| SpectralChannel {
                probe_wavelength_nm: c.probe_wavelength_nm,
                display_wavelength_nm: c.display_wavelength_nm,
            })
            .collect()
    }

    fn load_maps<'a>(&self, paths: impl Iterator<Item = &'a PathBuf>) -> Result<Vec<Grid>> {
        paths.map(|p| io::load_gray(&self.resolve(p))).collect()
    }

    /// Loads the scene described by the channel table.
    pub fn load_scene(&self) -> Result<Scene> {
        let maps = self.load_maps(self.channels.iter().map(|c| &c.reflectance))?;
        Scene::new(self.spectral_channels(), maps)
    }

    /// Loads one comparison scene and its visible rendering.
    pub fn load_comparison(&self, scene: &ComparisonScene) -> Result<(Scene, ColorImage)> {
        let maps = self.load_maps(scene.reflectance.iter())?;
        let visible = io::load_rgb(&self.resolve(&scene.visible))?;
        Ok((Scene::new(self.spectral_channels(), maps)?, visible))
    }

    pub fn mask_params(&self, width: usize, height: usize) -> MaskParams {
        MaskParams {
            width,
            height,
            correlation_length_px: self.mask.correlation_length_px,
            seed: self.seed,
            amplitude_range: self.mask.amplitude_range,
        }
    }
}
