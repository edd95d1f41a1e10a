//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage and
//! configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::correlator::{CorrelationAccumulator, NormalizeMode};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::harness::{self, Experiment, Manifest, Stopwatch};
use crate::io::{self, RawImage};
use crate::metrics::{self, MetricReport};
use crate::pipeline;
use crate::scenes;
use crate::spectral::{self, ChannelLayer, ColorImage};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GHOSTCOLOR_OUT";
const DEFAULT_OUT_DIR: &str = "ghostcolor-out";

#[derive(Debug, Parser)]
#[command(
    name = "ghostcolor",
    version,
    about = "Color correlated-imaging simulation and reconstruction"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory [default: config `output_dir`, then $GHOSTCOLOR_OUT, then ./ghostcolor-out]
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,

    /// More diagnostics on standard error.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (TOML).
    #[arg(long, short)]
    pub config: PathBuf,

    /// Config override, `key=value` with dotted keys (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every channel and write accumulator checkpoints.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Frame count (overrides `n_frames`).
        #[arg(long)]
        frames: Option<u64>,
        /// Only simulate shard INDEX of COUNT contiguous frame ranges.
        #[arg(long, value_name = "INDEX/COUNT", value_parser = parse_shard)]
        shard: Option<(u64, u64)>,
    },
    /// Finalize checkpoints into channel images and a composed color image.
    Reconstruct {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value = "minmax")]
        normalize: NormalizeMode,
        /// Apply the sRGB transfer function to PNG output.
        #[arg(long)]
        srgb: bool,
    },
    /// Compose normalized channel maps into a color image.
    Compose {
        /// Channel map and its display wavelength, `PATH:NM` (repeatable).
        #[arg(long = "channel", required = true, value_name = "PATH:NM", value_parser = parse_layer)]
        channels: Vec<(PathBuf, f64)>,
        #[arg(long)]
        srgb: bool,
    },
    /// Score a test image against a reference (PSNR, SSIM, CCI).
    Metrics { reference: PathBuf, test: PathBuf },
    /// PSNR/SSIM/CCI over increasing frame budgets from one accumulation pass.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated budgets (overrides `frame_budgets`).
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,
    },
    /// Colorfulness of reconstructions vs visible references.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        frames: Option<u64>,
    },
    /// Sum shard checkpoints into one.
    MergeCheckpoints {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Output checkpoint path [default: <out>/merged.gca]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the bundled synthetic scenes as PNG files.
    Scenes {
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
}

fn parse_shard(s: &str) -> std::result::Result<(u64, u64), String> {
    let (i, k) = s.split_once('/').ok_or("expected INDEX/COUNT")?;
    let i: u64 = i.parse().map_err(|e| format!("shard index: {e}"))?;
    let k: u64 = k.parse().map_err(|e| format!("shard count: {e}"))?;
    if k == 0 || i >= k {
        return Err(format!("need 0 <= INDEX < COUNT, got {i}/{k}"));
    }
    Ok((i, k))
}

fn parse_layer(s: &str) -> std::result::Result<(PathBuf, f64), String> {
    let (p, nm) = s.rsplit_once(':').ok_or("expected PATH:NM")?;
    let nm: f64 = nm.parse().map_err(|e| format!("wavelength: {e}"))?;
    Ok((PathBuf::from(p), nm))
}

struct Context<'a> {
    cli: &'a Cli,
    command_line: String,
    clock: Stopwatch,
}

impl Context<'_> {
    fn out_dir(&self, config: Option<&ExperimentConfig>) -> PathBuf {
        self.cli
            .out
            .clone()
            .or_else(|| config.and_then(|c| c.output_dir.as_ref().map(|p| c.resolve(p))))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn prepare_out(&self, config: Option<&ExperimentConfig>) -> Result<PathBuf> {
        let dir = self.out_dir(config);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn load_config(&self, args: &ConfigArgs) -> Result<ExperimentConfig> {
        let mut overrides = args.overrides.clone();
        if let Some(seed) = self.cli.seed {
            overrides.push(format!("seed={seed}"));
        }
        ExperimentConfig::load(&args.config, &overrides)
    }

    fn manifest(
        &self,
        dir: &Path,
        config: Option<&ExperimentConfig>,
        outputs: &[PathBuf],
    ) -> Result<()> {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command_line,
            seed: config.map(|c| c.seed).or(self.cli.seed).unwrap_or(0),
            threads: rayon::current_num_threads(),
            wall_time_s: self.clock.seconds(),
            config,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        }
        .write(dir)?;
        Ok(())
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.cli.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn checkpoint_name(i: usize, probe: f64, display: f64, shard: Option<(u64, u64)>) -> String {
    match shard {
        Some((k, n)) => format!("ch{i}_{probe}-{display}nm_shard{k}of{n}.gca"),
        None => format!("ch{i}_{probe}-{display}nm.gca"),
    }
}

fn cmd_simulate(
    ctx: &Context,
    args: &ConfigArgs,
    frames: Option<u64>,
    shard: Option<(u64, u64)>,
) -> Result<()> {
    let mut cfg = ctx.load_config(args)?;
    if let Some(n) = frames {
        cfg.n_frames = n;
        cfg.validate()?;
    }
    let exp = Experiment::from_config(&cfg)?;
    let dir = ctx.prepare_out(Some(&cfg))?;
    let range = match shard {
        Some((k, n)) => pipeline::shard_range(cfg.n_frames, k, n)?,
        None => 0..cfg.n_frames,
    };
    let mut outputs = Vec::new();
    for (i, ch) in exp.scene.channels().iter().enumerate() {
        ctx.note(format!(
            "channel {i}: frames {}..{}",
            range.start, range.end
        ));
        let acc = exp.accumulate(i, range.clone())?;
        let path = dir.join(checkpoint_name(
            i,
            ch.probe_wavelength_nm,
            ch.display_wavelength_nm,
            shard,
        ));
        checkpoint::save(&acc, &path)?;
        outputs.push(path);
    }
    ctx.manifest(&dir, Some(&cfg), &outputs)?;
    println!(
        "simulated {} frames x {} channels in {:.2} s -> {}",
        range.end - range.start,
        outputs.len(),
        ctx.clock.seconds(),
        dir.display()
    );
    Ok(())
}

fn cmd_reconstruct(
    ctx: &Context,
    paths: &[PathBuf],
    mode: NormalizeMode,
    srgb: bool,
) -> Result<()> {
    let accs = paths
        .iter()
        .map(|p| checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let dims = accs[0].dims();
    for (p, a) in paths.iter().zip(&accs) {
        if a.dims() != dims {
            return Err(Error::Incompatible(format!(
                "{} is {}x{}, {} is {}x{}",
                p.display(),
                a.dims().0,
                a.dims().1,
                paths[0].display(),
                dims.0,
                dims.1
            )));
        }
    }
    let dir = ctx.prepare_out(None)?;
    let mut outputs = Vec::new();
    let mut maps = Vec::new();
    let mut wavelengths = Vec::new();
    for (i, (p, acc)) in paths.iter().zip(&accs).enumerate() {
        let rec = acc.finalize()?;
        let nm = rec.display_wavelength_nm.ok_or_else(|| {
            Error::format(
                p,
                "checkpoint carries no channel wavelengths; cannot colorize",
            )
        })?;
        let map = rec.normalize(mode)?;
        let stem = format!("channel{i}_{nm}nm");
        let g_path = dir.join(format!("{stem}_g.raw"));
        io::save_raw(&RawImage::Gray(rec.g.clone()), &g_path)?;
        let raw_path = dir.join(format!("{stem}.raw"));
        io::save_raw(&RawImage::Gray(map.clone()), &raw_path)?;
        let tinted = spectral::compose(&[ChannelLayer {
            map: &map,
            display_wavelength_nm: nm,
        }])?;
        let png = dir.join(format!("{stem}.png"));
        io::save_rgb_png(&tinted, &png, srgb)?;
        outputs.extend([g_path, raw_path, png]);
        maps.push(map);
        wavelengths.push(nm);
    }
    if maps.len() > 1 {
        let layers: Vec<_> = maps
            .iter()
            .zip(&wavelengths)
            .map(|(m, &nm)| ChannelLayer {
                map: m,
                display_wavelength_nm: nm,
            })
            .collect();
        let color = spectral::compose(&layers)?;
        let png = dir.join("color.png");
        io::save_rgb_png(&color, &png, srgb)?;
        let raw = dir.join("color.raw");
        io::save_raw(&RawImage::Color(color), &raw)?;
        outputs.extend([png, raw]);
    }
    ctx.manifest(&dir, None, &outputs)?;
    println!(
        "reconstructed {} channel(s) from {} frames -> {}",
        maps.len(),
        accs[0].n(),
        dir.display()
    );
    Ok(())
}

fn cmd_compose(ctx: &Context, channels: &[(PathBuf, f64)], srgb: bool) -> Result<()> {
    let maps = channels
        .iter()
        .map(|(p, _)| io::load_map(p))
        .collect::<Result<Vec<_>>>()?;
    let layers: Vec<_> = maps
        .iter()
        .zip(channels)
        .map(|(m, (_, nm))| ChannelLayer {
            map: m,
            display_wavelength_nm: *nm,
        })
        .collect();
    let color = spectral::compose(&layers)?;
    let dir = ctx.prepare_out(None)?;
    let png = dir.join("color.png");
    io::save_rgb_png(&color, &png, srgb)?;
    let raw = dir.join("color.raw");
    io::save_raw(&RawImage::Color(color.clone()), &raw)?;
    ctx.manifest(&dir, None, &[png, raw])?;
    println!(
        "composed {} channel(s), cci={:.6}",
        maps.len(),
        metrics::cci(&color)
    );
    Ok(())
}

fn as_color(img: &RawImage) -> Result<ColorImage> {
    match img {
        RawImage::Gray(g) => ColorImage::from_gray(g),
        RawImage::Color(c) => Ok(c.clone()),
    }
}

fn component(img: &ColorImage, c: usize) -> Grid {
    let (w, h) = img.dims();
    Grid::from_vec(w, h, img.pixels().iter().map(|p| p[c]).collect()).expect("sized from image")
}

fn cmd_metrics(ctx: &Context, reference: &Path, test: &Path) -> Result<()> {
    let r = io::load_any(reference)?;
    let t = io::load_any(test)?;
    let report = match (&r, &t) {
        (RawImage::Gray(a), RawImage::Gray(b)) => MetricReport {
            label: "gray".into(),
            n_frames: 0,
            psnr_db: metrics::psnr(a, b)?,
            ssim: metrics::ssim(a, b)?,
            cci: 0.0,
        },
        _ => {
            let (a, b) = (as_color(&r)?, as_color(&t)?);
            let psnr_db = metrics::psnr_color(&a, &b)?;
            // Color SSIM: mean over the three components.
            let mut ssim = 0.0;
            for c in 0..3 {
                ssim += metrics::ssim(&component(&a, c), &component(&b, c))? / 3.0;
            }
            MetricReport {
                label: "color".into(),
                n_frames: 0,
                psnr_db,
                ssim,
                cci: metrics::cci(&b),
            }
        }
    };
    let dir = ctx.prepare_out(None)?;
    let csv = dir.join("metrics.csv");
    metrics::write_csv(std::slice::from_ref(&report), &csv)?;
    ctx.manifest(&dir, None, &[csv])?;
    let psnr = if report.psnr_db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:.6}", report.psnr_db)
    };
    println!(
        "psnr_db={psnr} ssim={:.6} cci={:.6}",
        report.ssim, report.cci
    );
    Ok(())
}

fn cmd_convergence(ctx: &Context, args: &ConfigArgs, budgets: Option<&[u64]>) -> Result<()> {
    let mut cfg = ctx.load_config(args)?;
    if let Some(b) = budgets {
        cfg.frame_budgets = b.to_vec();
        cfg.validate()?;
    }
    if cfg.frame_budgets.is_empty() {
        return Err(Error::Config("no frame_budgets configured".into()));
    }
    let exp = Experiment::from_config(&cfg)?;
    let conv = exp.run_convergence(&cfg.frame_budgets)?;
    let dir = ctx.prepare_out(Some(&cfg))?;
    let outputs = conv.write(&dir, cfg.srgb)?;
    ctx.manifest(&dir, Some(&cfg), &outputs)?;
    let last = conv.rows.last().expect("budgets non-empty");
    let scores: Vec<String> = last
        .channels
        .iter()
        .map(|c| {
            format!(
                "{}nm psnr_db={:.3} ssim={:.4}",
                c.display_wavelength_nm, c.psnr_db, c.ssim
            )
        })
        .collect();
    println!(
        "convergence: {} budgets; at {} frames: {}; cci={:.3}",
        conv.rows.len(),
        last.n_frames,
        scores.join(", "),
        last.cci
    );
    Ok(())
}

fn cmd_compare(ctx: &Context, args: &ConfigArgs, frames: Option<u64>) -> Result<()> {
    let mut cfg = ctx.load_config(args)?;
    if let Some(n) = frames {
        cfg.n_frames = n;
        cfg.validate()?;
    }
    let dir = ctx.prepare_out(Some(&cfg))?;
    let rows = harness::run_config_comparison(&cfg, &dir)?;
    ctx.manifest(&dir, Some(&cfg), &[dir.join("comparison.csv")])?;
    for r in &rows {
        println!(
            "{}: cci_visible={:.3} cci_reconstructed={:.3}",
            r.scene, r.cci_visible, r.cci_reconstructed
        );
    }
    Ok(())
}

fn cmd_merge(ctx: &Context, paths: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let mut merged: Option<CorrelationAccumulator> = None;
    for p in paths {
        let acc = checkpoint::load(p)?;
        merged = Some(match merged {
            None => acc,
            Some(m) => m.merge(&acc).map_err(|e| match e {
                Error::DimensionMismatch { expected, actual } => Error::Incompatible(format!(
                    "{} is {}x{}, expected {}x{}",
                    p.display(),
                    actual.0,
                    actual.1,
                    expected.0,
                    expected.1
                )),
                other => other,
            })?,
        });
    }
    let merged = merged.expect("at least one checkpoint");
    let (dir, path) = match output {
        Some(p) => (
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
            p.to_path_buf(),
        ),
        None => {
            let d = ctx.prepare_out(None)?;
            let p = d.join("merged.gca");
            (d, p)
        }
    };
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    checkpoint::save(&merged, &path)?;
    println!(
        "merged {} checkpoints ({} frames) -> {}",
        paths.len(),
        merged.n(),
        path.display()
    );
    Ok(())
}

fn cmd_scenes(ctx: &Context, size: usize) -> Result<()> {
    if size < 11 {
        return Err(Error::InvalidParam(
            "scene size must be at least 11 (SSIM window)".into(),
        ));
    }
    let dir = ctx.prepare_out(None)?;
    let written = scenes::write_bundled(&dir, size)?;
    println!(
        "wrote {} bundled scenes ({size}x{size}) -> {}",
        written.len(),
        dir.display()
    );
    Ok(())
}

fn dispatch(ctx: &Context) -> Result<()> {
    match &ctx.cli.command {
        Command::Simulate {
            config,
            frames,
            shard,
        } => cmd_simulate(ctx, config, *frames, *shard),
        Command::Reconstruct {
            checkpoints,
            normalize,
            srgb,
        } => cmd_reconstruct(ctx, checkpoints, *normalize, *srgb),
        Command::Compose { channels, srgb } => cmd_compose(ctx, channels, *srgb),
        Command::Metrics { reference, test } => cmd_metrics(ctx, reference, test),
        Command::Convergence { config, budgets } => {
            cmd_convergence(ctx, config, budgets.as_deref())
        }
        Command::Compare { config, frames } => cmd_compare(ctx, config, *frames),
        Command::MergeCheckpoints {
            checkpoints,
            output,
        } => cmd_merge(ctx, checkpoints, output.as_deref()),
        Command::Scenes { size } => cmd_scenes(ctx, *size),
    }
}

/// Exit code for an error: 2 for usage/config problems, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

/// Runs a parsed invocation and maps the outcome to a process exit code.
pub fn run(cli: Cli) -> ExitCode {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    let ctx = Context {
        cli: &cli,
        command_line: std::env::args().collect::<Vec<_>>().join(" "),
        clock: Stopwatch::start(),
    };
    match pool.install(|| dispatch(&ctx)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn main() -> ExitCode {
    run(Cli::parse())
}
