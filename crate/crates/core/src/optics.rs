//! Forward model of the two detector arms.
//!
//! One speckle mask per frame modulates both beams of a channel pair. The
//! visible beam lands on the spatially resolving reference camera; the
//! infrared beam is reflected by the scene and integrated by the bucket
//! detector. Everything here works on time-integrated intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlator::FrameRecord;
use crate::error::{Error, Result};
use crate::grid::{check_dims, Grid};

/// Half-width, in standard deviations, of the Gaussian field range mapped onto
/// the amplitude range. Values beyond are clamped.
pub const CLAMP_SIGMAS: f64 = 3.0;

/// One infrared probe wavelength bound to the visible wavelength that carries
/// its reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralChannel {
    pub probe_wavelength_nm: f64,
    pub display_wavelength_nm: f64,
}

impl SpectralChannel {
    pub fn new(probe_wavelength_nm: f64, display_wavelength_nm: f64) -> Result<Self> {
        let ch = SpectralChannel {
            probe_wavelength_nm,
            display_wavelength_nm,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, d) = (self.probe_wavelength_nm, self.display_wavelength_nm);
        if !(p.is_finite() && p > 0.0 && d.is_finite() && d > 0.0) {
            return Err(Error::InvalidParam(format!(
                "wavelengths must be positive, got probe {p} nm / display {d} nm"
            )));
        }
        if p == d {
            return Err(Error::InvalidParam(format!(
                "probe and display wavelength must differ (both {p} nm)"
            )));
        }
        Ok(())
    }
}

/// Per-channel reflectance maps of the imaged object.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    channels: Vec<SpectralChannel>,
    reflectance: Vec<Grid>,
}

impl Scene {
    pub fn new(channels: Vec<SpectralChannel>, reflectance: Vec<Grid>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidParam(
                "a scene needs at least one channel".into(),
            ));
        }
        if channels.len() != reflectance.len() {
            return Err(Error::InvalidParam(format!(
                "{} channels but {} reflectance maps",
                channels.len(),
                reflectance.len()
            )));
        }
        for ch in &channels {
            ch.validate()?;
        }
        let dims = reflectance[0].dims();
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::InvalidParam("scene has zero size".into()));
        }
        for (i, map) in reflectance.iter().enumerate() {
            check_dims(dims, map.dims())?;
            if let Some(v) = map.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutOfRange(format!(
                    "reflectance of channel {i} contains {v}, outside [0, 1]"
                )));
            }
        }
        Ok(Scene {
            channels,
            reflectance,
        })
    }

    pub fn width(&self) -> usize {
        self.reflectance[0].width()
    }

    pub fn height(&self) -> usize {
        self.reflectance[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.reflectance[0].dims()
    }

    pub fn channels(&self) -> &[SpectralChannel] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> Result<&SpectralChannel> {
        self.channels.get(index).ok_or_else(|| {
            Error::InvalidParam(format!(
                "channel {index} requested, scene has {}",
                self.channels.len()
            ))
        })
    }

    pub fn reflectance(&self, index: usize) -> Result<&Grid> {
        self.channel(index)?;
        Ok(&self.reflectance[index])
    }
}

/// Geometry and statistics of the random amplitude masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub width: usize,
    pub height: usize,
    /// Standard deviation, in pixels, of the Gaussian spatial autocorrelation
    /// of the mask. Zero gives a spatially white mask.
    pub correlation_length_px: f64,
    pub seed: u64,
    pub amplitude_range: (f64, f64),
}

impl MaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam(format!(
                "mask dimensions must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.correlation_length_px.is_finite() && self.correlation_length_px >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "correlation length must be finite and >= 0, got {}",
                self.correlation_length_px
            )));
        }
        let (lo, hi) = self.amplitude_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "amplitude range must satisfy 0 <= low < high <= 1, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// One realization of the amplitude modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleMask {
    pub index: u64,
    pub amplitude: Grid,
}

/// Additive zero-mean Gaussian detector noise. A zero sigma disables the term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    pub bucket_noise_sigma: f64,
    pub reference_noise_sigma: f64,
}

impl DetectorNoise {
    pub const NONE: DetectorNoise = DetectorNoise {
        bucket_noise_sigma: 0.0,
        reference_noise_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("bucket", self.bucket_noise_sigma),
            ("reference", self.reference_noise_sigma),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} noise sigma must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Point-spread function applied to the illumination before detection.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Psf {
    #[default]
    Identity,
    Kernel(Grid),
}

impl Psf {
    /// Wraps a square kernel. It must be odd-sized, non-negative and sum to 1
    /// within 1e-12.
    pub fn kernel(kernel: Grid) -> Result<Self> {
        let (w, h) = kernel.dims();
        if w != h || w % 2 == 0 {
            return Err(Error::InvalidParam(format!(
                "psf kernel must be square and odd-sized, got {w}x{h}"
            )));
        }
        if kernel
            .as_slice()
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidParam(
                "psf kernel has negative entries".into(),
            ));
        }
        let total = kernel.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "psf kernel must sum to 1, sums to {total}"
            )));
        }
        Ok(Psf::Kernel(kernel))
    }

    /// Uniform `size × size` averaging kernel.
    pub fn box_blur(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParam("box psf size must be >= 1".into()));
        }
        let w = 1.0 / (size * size) as f64;
        Psf::kernel(Grid::filled(size, size, w))
    }

    /// Truncated isotropic Gaussian of the given standard deviation, radius
    /// `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "gaussian psf sigma must be > 0, got {sigma}"
            )));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let taps = gaussian_taps(sigma, radius);
        let size = 2 * radius + 1;
        let mut k = Grid::from_fn(size, size, |x, y| taps[x] * taps[y]);
        let total = k.sum();
        k.as_mut_slice().iter_mut().for_each(|v| *v /= total);
        Psf::kernel(k)
    }

    /// Convolves `field` with the kernel. Energy that would leave the map is
    /// folded back in by mirror reflection at the border, so the total is
    /// preserved for any normalized kernel.
    pub fn apply(&self, field: &Grid) -> Grid {
        let kernel = match self {
            Psf::Identity => return field.clone(),
            Psf::Kernel(k) => k,
        };
        let (w, h) = field.dims();
        let r = (kernel.width() / 2) as isize;
        let mut out = Grid::zeros(w, h);
        for sy in 0..h {
            for sx in 0..w {
                let v = field.get(sx, sy);
                if v == 0.0 {
                    continue;
                }
                for dy in -r..=r {
                    let ty = mirror(sy as isize + dy, h);
                    for dx in -r..=r {
                        let tx = mirror(sx as isize + dx, w);
                        let k = kernel.get((dx + r) as usize, (dy + r) as usize);
                        let cur = out.get(tx, ty);
                        out.set(tx, ty, cur + v * k);
                    }
                }
            }
        }
        out
    }
}

/// Half-sample symmetric reflection of index `i` into `0..n`.
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// RNG driving the mask of frame `frame_index`. One independent ChaCha stream
/// per frame, so frames can be generated in any order or in parallel.
fn mask_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// RNG driving detector noise of one frame of one channel. Keyed separately
/// from the mask stream so noise never perturbs the shared mask.
pub fn noise_rng(seed: u64, channel_index: usize, frame_index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ 0x6e6f_6973_655f_7273 ^ splitmix64(channel_index as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(frame_index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standardized (zero mean, unit variance over the field) correlated Gaussian
/// field underlying mask `frame_index`, before clamping and range mapping.
pub fn gaussian_field(params: &MaskParams, frame_index: u64) -> Result<Grid> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let mut rng = mask_rng(params.seed, frame_index);

    let mut field = if params.correlation_length_px == 0.0 {
        Grid::from_vec(w, h, draw_normals(&mut rng, w * h))?
    } else {
        // White noise blurred with a Gaussian of std s has a Gaussian
        // autocorrelation of std s*sqrt(2).
        let sigma = params.correlation_length_px / std::f64::consts::SQRT_2;
        let radius = (4.0 * sigma).ceil().max(1.0) as usize;
        let taps = gaussian_taps(sigma, radius);
        let (pw, ph) = (w + 2 * radius, h + 2 * radius);
        let white = draw_normals(&mut rng, pw * ph);
        // Valid-region separable convolution: rows first, then columns.
        let mut rows = vec![0.0; w * ph];
        for y in 0..ph {
            let src = &white[y * pw..(y + 1) * pw];
            for x in 0..w {
                rows[y * w + x] = taps.iter().zip(&src[x..]).map(|(t, v)| t * v).sum();
            }
        }
        Grid::from_fn(w, h, |x, y| {
            taps.iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * w + x])
                .sum()
        })
    };

    let n = field.len() as f64;
    let mean = field.sum() / n;
    let var = field
        .as_slice()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    for v in field.as_mut_slice() {
        *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
    }
    Ok(field)
}

fn draw_normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

/// Generates mask `frame_index`: a Gaussian-correlated field whose `±3σ` range
/// is mapped affinely onto the amplitude range, clamping outliers.
///
/// The mask is a pure function of `(params, frame_index)`.
pub fn generate_mask(params: &MaskParams, frame_index: u64) -> Result<SpeckleMask> {
    let field = gaussian_field(params, frame_index)?;
    let (lo, hi) = params.amplitude_range;
    let amplitude = field.map(|z| {
        let t = (z + CLAMP_SIGMAS) / (2.0 * CLAMP_SIGMAS);
        (lo + t * (hi - lo)).clamp(lo, hi)
    });
    Ok(SpeckleMask {
        index: frame_index,
        amplitude,
    })
}

/// Intensity pattern `psf ⊛ amplitude²` produced by a mask.
pub fn illumination(mask: &SpeckleMask, psf: &Psf) -> Grid {
    psf.apply(&mask.amplitude.map(|a| a * a))
}

fn add_noise<R: Rng + ?Sized>(grid: &mut Grid, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        for v in grid.as_mut_slice() {
            *v += normal.sample(rng);
        }
    }
}

fn bucket_noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .expect("sigma validated")
            .sample(rng)
    } else {
        0.0
    }
}

/// Intensity recorded by the reference camera for one mask.
pub fn reference_intensity<R: Rng + ?Sized>(
    mask: &SpeckleMask,
    psf: &Psf,
    noise: &DetectorNoise,
    rng: &mut R,
) -> Grid {
    let mut out = illumination(mask, psf);
    add_noise(&mut out, noise.reference_noise_sigma, rng);
    out
}

fn integrate(illum: &Grid, reflectance: &Grid) -> f64 {
    illum
        .as_slice()
        .iter()
        .zip(reflectance.as_slice())
        .map(|(i, r)| i * r)
        .sum()
}

/// Total power reflected by channel `channel_index` of the scene and
/// collected by the bucket detector.
pub fn bucket_value<R: Rng + ?Sized>(
    mask: &SpeckleMask,
    scene: &Scene,
    channel_index: usize,
    psf: &Psf,
    noise: &DetectorNoise,
    rng: &mut R,
) -> Result<f64> {
    let reflectance = scene.reflectance(channel_index)?;
    check_dims(reflectance.dims(), mask.amplitude.dims())?;
    let illum = illumination(mask, psf);
    Ok(integrate(&illum, reflectance) + bucket_noise(noise.bucket_noise_sigma, rng))
}

/// Everything needed to produce the frame stream of one channel.
#[derive(Debug, Clone)]
pub struct ChannelSimulator<'a> {
    scene: &'a Scene,
    channel_index: usize,
    params: MaskParams,
    psf: &'a Psf,
    noise: DetectorNoise,
}

impl<'a> ChannelSimulator<'a> {
    pub fn new(
        scene: &'a Scene,
        channel_index: usize,
        params: MaskParams,
        psf: &'a Psf,
        noise: DetectorNoise,
    ) -> Result<Self> {
        params.validate()?;
        noise.validate()?;
        scene.channel(channel_index)?;
        check_dims(scene.dims(), (params.width, params.height))?;
        Ok(ChannelSimulator {
            scene,
            channel_index,
            params,
            psf,
            noise,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.scene.dims()
    }

    /// Simulates frame `frame_index`. The single mask instance feeds both the
    /// reference arm and the bucket arm.
    pub fn frame(&self, frame_index: u64) -> Result<FrameRecord> {
        let mask = generate_mask(&self.params, frame_index)?;
        let illum = illumination(&mask, self.psf);
        let reflectance = self.scene.reflectance(self.channel_index)?;
        let mut rng = noise_rng(self.params.seed, self.channel_index, frame_index);
        let bucket =
            integrate(&illum, reflectance) + bucket_noise(self.noise.bucket_noise_sigma, &mut rng);
        let mut reference = illum;
        add_noise(&mut reference, self.noise.reference_noise_sigma, &mut rng);
        Ok(FrameRecord {
            frame_index: mask.index,
            reference,
            bucket,
        })
    }

    pub fn frames(
        &self,
        range: std::ops::Range<u64>,
    ) -> impl Iterator<Item = Result<FrameRecord>> + '_ {
        range.map(move |i| self.frame(i))
    }
}

/// Streams `n_frames` records of one channel, frame `i` built from mask `i`.
pub fn simulate_frames<'a>(
    scene: &'a Scene,
    channel_index: usize,
    params: MaskParams,
    psf: &'a Psf,
    noise: DetectorNoise,
    n_frames: u64,
) -> Result<impl Iterator<Item = Result<FrameRecord>> + 'a> {
    if n_frames < 1 {
        return Err(Error::InvalidParam("n_frames must be >= 1".into()));
    }
    let sim = ChannelSimulator::new(scene, channel_index, params, psf, noise)?;
    Ok((0..n_frames).map(move |i| sim.frame(i)))
}
