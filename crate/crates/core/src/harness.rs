//! End-to-end experiments: per-channel reconstructions, convergence studies
//! over frame budgets and colorfulness comparisons.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ExperimentConfig, MaskConfig};
use crate::correlator::{ChannelReconstruction, CorrelationAccumulator, NormalizeMode};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{self, RawImage};
use crate::metrics;
use crate::optics::{ChannelSimulator, DetectorNoise, MaskParams, Psf, Scene};
use crate::pipeline;
use crate::spectral::{self, ChannelLayer, ColorImage};

/// A scene plus everything that determines its frame streams.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scene: Scene,
    pub mask: MaskConfig,
    pub seed: u64,
    pub noise: DetectorNoise,
    pub psf: Psf,
    pub normalize: NormalizeMode,
}

impl Experiment {
    pub fn new(scene: Scene, seed: u64) -> Self {
        Experiment {
            scene,
            mask: MaskConfig::default(),
            seed,
            noise: DetectorNoise::NONE,
            psf: Psf::Identity,
            normalize: NormalizeMode::default(),
        }
    }

    /// Uses the config's optics settings with an already loaded scene.
    pub fn with_scene(config: &ExperimentConfig, scene: Scene) -> Result<Self> {
        Ok(Experiment {
            scene,
            mask: config.mask.clone(),
            seed: config.seed,
            noise: config.noise,
            psf: config.psf.build()?,
            normalize: config.normalize,
        })
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Self::with_scene(config, config.load_scene()?)
    }

    pub fn mask_params(&self) -> MaskParams {
        let (w, h) = self.scene.dims();
        MaskParams {
            width: w,
            height: h,
            correlation_length_px: self.mask.correlation_length_px,
            seed: self.seed,
            amplitude_range: self.mask.amplitude_range,
        }
    }

    pub fn simulator(&self, channel_index: usize) -> Result<ChannelSimulator<'_>> {
        ChannelSimulator::new(
            &self.scene,
            channel_index,
            self.mask_params(),
            &self.psf,
            self.noise,
        )
    }

    /// Accumulates frames `range` of one channel.
    pub fn accumulate(
        &self,
        channel_index: usize,
        range: std::ops::Range<u64>,
    ) -> Result<CorrelationAccumulator> {
        let channel = *self.scene.channel(channel_index)?;
        pipeline::accumulate_range(&self.simulator(channel_index)?, channel, range)
    }

    /// Reconstruction of one channel from its first `n_frames` frames.
    pub fn run_channel(
        &self,
        channel_index: usize,
        n_frames: u64,
    ) -> Result<ChannelReconstruction> {
        if n_frames < 2 {
            return Err(Error::InvalidParam(format!(
                "need at least 2 frames, got {n_frames}"
            )));
        }
        self.accumulate(channel_index, 0..n_frames)?.finalize()
    }

    /// Runs every channel once over `0..max(budgets)` and snapshots the
    /// accumulators at each budget.
    pub fn run_convergence(&self, budgets: &[u64]) -> Result<Convergence> {
        if budgets.is_empty()
            || budgets.iter().any(|&b| b < 2)
            || budgets.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParam(format!(
                "frame budgets {budgets:?} must be non-empty, >= 2 and strictly increasing"
            )));
        }
        let last = *budgets.last().unwrap();
        let mut per_channel = Vec::new();
        for (i, ch) in self.scene.channels().iter().enumerate() {
            let snaps = pipeline::accumulate_snapshots(&self.simulator(i)?, *ch, 0..last, budgets)?;
            per_channel.push(snaps);
        }
        let mut snapshots = Vec::with_capacity(budgets.len());
        let mut rows = Vec::with_capacity(budgets.len());
        for (k, &n) in budgets.iter().enumerate() {
            let recs = per_channel
                .iter()
                .map(|s| s[k].finalize())
                .collect::<Result<Vec<_>>>()?;
            let snap = Snapshot::build(self, n, recs)?;
            rows.push(snap.row.clone());
            snapshots.push(snap);
        }
        Ok(Convergence { rows, snapshots })
    }

    /// Ground-truth color rendering: the reflectance maps composed like a
    /// reconstruction would be.
    pub fn truth_color(&self) -> Result<ColorImage> {
        let layers: Vec<_> = self
            .scene
            .channels()
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                Ok(ChannelLayer {
                    map: self.scene.reflectance(i)?,
                    display_wavelength_nm: ch.display_wavelength_nm,
                })
            })
            .collect::<Result<_>>()?;
        spectral::compose(&layers)
    }

    /// Reconstructs all channels with `n_frames` frames and composes them.
    pub fn reconstruct_color(&self, n_frames: u64) -> Result<(Vec<Grid>, ColorImage)> {
        let maps = (0..self.scene.channels().len())
            .map(|i| self.run_channel(i, n_frames)?.normalize(self.normalize))
            .collect::<Result<Vec<_>>>()?;
        let color = compose_maps(&self.scene, &maps)?;
        Ok((maps, color))
    }
}

fn compose_maps(scene: &Scene, maps: &[Grid]) -> Result<ColorImage> {
    let layers: Vec<_> = maps
        .iter()
        .zip(scene.channels())
        .map(|(m, ch)| ChannelLayer {
            map: m,
            display_wavelength_nm: ch.display_wavelength_nm,
        })
        .collect();
    spectral::compose(&layers)
}

/// Quality of one channel at one budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelScore {
    pub display_wavelength_nm: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_frames: u64,
    pub channels: Vec<ChannelScore>,
    pub cci: f64,
}

/// Everything produced at one frame budget.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub reconstructions: Vec<ChannelReconstruction>,
    pub normalized: Vec<Grid>,
    pub color: ColorImage,
    pub row: ConvergenceRow,
}

impl Snapshot {
    fn build(
        exp: &Experiment,
        n_frames: u64,
        reconstructions: Vec<ChannelReconstruction>,
    ) -> Result<Self> {
        let normalized = reconstructions
            .iter()
            .map(|r| r.normalize(exp.normalize))
            .collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::new();
        for (i, (map, ch)) in normalized.iter().zip(exp.scene.channels()).enumerate() {
            let truth = exp.scene.reflectance(i)?;
            channels.push(ChannelScore {
                display_wavelength_nm: ch.display_wavelength_nm,
                psnr_db: metrics::psnr(truth, map)?,
                ssim: metrics::ssim(truth, map)?,
            });
        }
        let color = compose_maps(&exp.scene, &normalized)?;
        let row = ConvergenceRow {
            n_frames,
            channels,
            cci: metrics::cci(&color),
        };
        Ok(Snapshot {
            reconstructions,
            normalized,
            color,
            row,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Convergence {
    pub rows: Vec<ConvergenceRow>,
    pub snapshots: Vec<Snapshot>,
}

fn fmt_nm(nm: f64) -> String {
    format!("{nm}nm")
}

/// Formats convergence rows as CSV:
/// `n_frames,psnr_db_<λ>,ssim_<λ>,…,cci` with one column pair per channel.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("n_frames");
    if let Some(first) = rows.first() {
        for c in &first.channels {
            let l = fmt_nm(c.display_wavelength_nm);
            write!(out, ",psnr_db_{l},ssim_{l}").unwrap();
        }
    }
    out.push_str(",cci\n");
    for r in rows {
        write!(out, "{}", r.n_frames).unwrap();
        for c in &r.channels {
            write!(out, ",{},{}", c.psnr_db, c.ssim).unwrap();
        }
        writeln!(out, ",{}", r.cci).unwrap();
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// File name of the raw covariance dump of channel `i` at a budget.
pub fn raw_g_name(n_frames: u64, channel_index: usize, display_nm: f64) -> String {
    format!("g_{n_frames}_ch{channel_index}_{}.raw", fmt_nm(display_nm))
}

impl Convergence {
    /// Writes `convergence.csv`, a color PNG per budget and raw float dumps of
    /// every covariance image, normalized map and color image.
    pub fn write(&self, dir: &Path, srgb: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let csv = dir.join("convergence.csv");
        write_text(&csv, &convergence_csv(&self.rows))?;
        written.push(csv);
        for snap in &self.snapshots {
            let n = snap.row.n_frames;
            let png = dir.join(format!("color_{n}.png"));
            io::save_rgb_png(&snap.color, &png, srgb)?;
            written.push(png);
            let raw = dir.join(format!("color_{n}.raw"));
            io::save_raw(&RawImage::Color(snap.color.clone()), &raw)?;
            written.push(raw);
            for (i, (rec, map)) in snap
                .reconstructions
                .iter()
                .zip(&snap.normalized)
                .enumerate()
            {
                let nm = rec.display_wavelength_nm.unwrap_or(0.0);
                let g = dir.join(raw_g_name(n, i, nm));
                io::save_raw(&RawImage::Gray(rec.g.clone()), &g)?;
                written.push(g);
                let norm = dir.join(format!("norm_{n}_ch{i}_{}.raw", fmt_nm(nm)));
                io::save_raw(&RawImage::Gray(map.clone()), &norm)?;
                written.push(norm);
            }
        }
        Ok(written)
    }
}

/// Colorfulness of one scene: visible rendering vs reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scene: String,
    pub n_frames: u64,
    pub cci_visible: f64,
    pub cci_reconstructed: f64,
}

/// Reconstructs `exp`'s scene with `n_frames` frames and compares its
/// colorfulness against the visible reference.
pub fn run_comparison(
    exp: &Experiment,
    name: &str,
    visible: &ColorImage,
    n_frames: u64,
) -> Result<(ComparisonRow, ColorImage)> {
    let (_, color) = exp.reconstruct_color(n_frames)?;
    let row = ComparisonRow {
        scene: name.to_string(),
        n_frames,
        cci_visible: metrics::cci(visible),
        cci_reconstructed: metrics::cci(&color),
    };
    Ok((row, color))
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("scene,n_frames,cci_visible,cci_reconstructed\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.scene, r.n_frames, r.cci_visible, r.cci_reconstructed
        )
        .unwrap();
    }
    out
}

/// Runs every comparison scene listed in the config.
pub fn run_config_comparison(config: &ExperimentConfig, dir: &Path) -> Result<Vec<ComparisonRow>> {
    if config.comparison.is_empty() {
        return Err(Error::Config("no [[comparison]] scenes configured".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::new();
    for s in &config.comparison {
        let (scene, visible) = config.load_comparison(s)?;
        let exp = Experiment::with_scene(config, scene)?;
        let (row, color) = run_comparison(&exp, &s.name, &visible, config.n_frames)?;
        io::save_rgb_png(
            &color,
            &dir.join(format!("compare_{}.png", s.name)),
            config.srgb,
        )?;
        io::save_raw(
            &RawImage::Color(color),
            &dir.join(format!("compare_{}.raw", s.name)),
        )?;
        rows.push(row);
    }
    write_text(&dir.join("comparison.csv"), &comparison_csv(&rows))?;
    Ok(rows)
}

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub config: Option<&'a ExperimentConfig>,
    pub outputs: Vec<String>,
}

impl Manifest<'_> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(&path, &text)?;
        Ok(path)
    }
}

/// Wall-clock stopwatch for manifests.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
