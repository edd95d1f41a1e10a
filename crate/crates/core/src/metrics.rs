//! Full-reference quality metrics (PSNR, SSIM) and the colorfulness index.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{check_dims, Grid};
use crate::spectral::ColorImage;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the Gaussian SSIM window weights.
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_unit_range(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::OutOfRange(format!(
            "{what} contains {v}, outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

/// PSNR in dB over two equally long sample sets with unit peak.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr_samples(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::InvalidParam(format!(
            "psnr needs equally sized non-empty inputs, got {} and {} samples",
            reference.len(),
            test.len()
        )));
    }
    check_unit_range(reference, "reference")?;
    check_unit_range(test, "test image")?;
    let mse = reference
        .iter()
        .zip(test)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub fn psnr(reference: &Grid, test: &Grid) -> Result<f64> {
    check_dims(reference.dims(), test.dims())?;
    psnr_samples(reference.as_slice(), test.as_slice())
}

/// Color PSNR; the MSE averages over all three components.
pub fn psnr_color(reference: &ColorImage, test: &ColorImage) -> Result<f64> {
    check_dims(reference.dims(), test.dims())?;
    psnr_samples(&reference.flat(), &test.flat())
}

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable valid-region filtering of a row-major `w × h` buffer.
fn filter_valid(data: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all window positions fully inside the image, with an
/// 11×11 Gaussian window (σ = 1.5), K₁ = 0.01, K₂ = 0.03 and unit dynamic range.
pub fn ssim(reference: &Grid, test: &Grid) -> Result<f64> {
    check_dims(reference.dims(), test.dims())?;
    let (w, h) = reference.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidParam(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    check_unit_range(reference.as_slice(), "reference")?;
    check_unit_range(test.as_slice(), "test image")?;

    let taps = ssim_window();
    let a = reference.as_slice();
    let b = test.as_slice();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    };
    let (mu_a, _, _) = filter_valid(a, w, h, &taps);
    let (mu_b, _, _) = filter_valid(b, w, h, &taps);
    let (e_aa, _, _) = filter_valid(&prod(&|x, _| x * x), w, h, &taps);
    let (e_bb, _, _) = filter_valid(&prod(&|_, y| y * y), w, h, &taps);
    let (e_ab, _, _) = filter_valid(&prod(&|x, y| x * y), w, h, &taps);

    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Colorfulness index: the Hasler–Süsstrunk statistic on 8-bit-scaled
/// opponent components `rg = R − G`, `yb = (R + G)/2 − B`:
/// `sqrt(σ²_rg + σ²_yb) + 0.3·sqrt(μ²_rg + μ²_yb)` with population moments.
pub fn cci(image: &ColorImage) -> f64 {
    let px = image.pixels();
    let n = px.len() as f64;
    let opp = |p: &[f64; 3]| {
        let (r, g, b) = (255.0 * p[0], 255.0 * p[1], 255.0 * p[2]);
        (r - g, 0.5 * (r + g) - b)
    };
    let (srg, syb) = px
        .iter()
        .map(opp)
        .fold((0.0, 0.0), |(a, b), (rg, yb)| (a + rg, b + yb));
    let (mrg, myb) = (srg / n, syb / n);
    let (vrg, vyb) = px.iter().map(opp).fold((0.0, 0.0), |(a, b), (rg, yb)| {
        (a + (rg - mrg).powi(2), b + (yb - myb).powi(2))
    });
    let (vrg, vyb) = (vrg / n, vyb / n);
    (vrg + vyb).sqrt() + 0.3 * (mrg * mrg + myb * myb).sqrt()
}

/// Quality of one reconstruction at a given frame budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub label: String,
    pub n_frames: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub cci: f64,
}

#[derive(Serialize)]
struct MetricRow {
    n_frames: u64,
    psnr_db: f64,
    ssim: f64,
    cci: f64,
}

/// Writes reports as CSV with columns `n_frames,psnr_db,ssim,cci`.
/// An infinite PSNR is written as `inf`.
pub fn write_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(MetricRow {
            n_frames: r.n_frames,
            psnr_db: r.psnr_db,
            ssim: r.ssim,
            cci: r.cci,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
