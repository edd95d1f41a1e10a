//! C ABI over the `ghostcolor` library.
//!
//! Conventions:
//! * Every fallible function returns a [`GcStatus`]; `GC_STATUS_OK` is zero.
//!   The message of the most recent failure on the calling thread is
//!   available from [`gc_last_error_message`].
//! * Accumulators and simulations are opaque handles created by `*_new` /
//!   `*_load` functions and released with the matching `*_free`.
//! * 2D maps are row-major `double` buffers of `width * height` values; RGB
//!   images interleave `r, g, b` per pixel.
//! * Panics never cross the boundary; they surface as `GC_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ghostcolor::harness::Experiment;
use ghostcolor::{
    checkpoint, correlator, metrics, optics, spectral, ColorImage, CorrelationAccumulator,
    DetectorNoise, Error, FrameRecord, Grid, MaskParams, NormalizeMode, Psf, Scene,
    SpectralChannel,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    TooFewFrames = 4,
    Degenerate = 5,
    OutOfRange = 6,
    Io = 7,
    Format = 8,
    Incompatible = 9,
    Panic = 10,
}

/// Normalization applied by [`gc_normalize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcNormalize {
    Minmax = 0,
    ZscoreClip = 1,
}

/// Mask statistics. `width`/`height` are ignored where the scene fixes them.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GcMaskParams {
    pub width: u32,
    pub height: u32,
    pub correlation_length_px: f64,
    pub seed: u64,
    pub amplitude_low: f64,
    pub amplitude_high: f64,
}

/// Additive Gaussian detector noise; zero disables a term.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GcNoise {
    pub bucket_noise_sigma: f64,
    pub reference_noise_sigma: f64,
}

/// Opaque covariance accumulator.
pub struct GcAccumulator(CorrelationAccumulator);

/// Opaque single-channel simulation: scene, mask statistics, noise and PSF.
pub struct GcSimulation(Experiment);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> GcStatus {
    match err {
        Error::InvalidParam(_) | Error::Config(_) => GcStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => GcStatus::DimensionMismatch,
        Error::TooFewFrames { .. } => GcStatus::TooFewFrames,
        Error::Degenerate(_) => GcStatus::Degenerate,
        Error::OutOfRange(_) => GcStatus::OutOfRange,
        Error::Io { .. } => GcStatus::Io,
        Error::Format { .. } | Error::Image { .. } | Error::Csv(_) => GcStatus::Format,
        Error::Incompatible(_) => GcStatus::Incompatible,
    }
}

struct Fail(GcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GcStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            GcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GcStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `ptr` points to `len` readable doubles.
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `ptr` points to `len` writable doubles.
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    // SAFETY: caller guarantees a NUL-terminated string.
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

fn area(width: u32, height: u32) -> Result<usize, Fail> {
    if width == 0 || height == 0 {
        return Err(invalid("width and height must be >= 1"));
    }
    Ok(width as usize * height as usize)
}

fn mask_params(p: &GcMaskParams) -> MaskParams {
    MaskParams {
        width: p.width as usize,
        height: p.height as usize,
        correlation_length_px: p.correlation_length_px,
        seed: p.seed,
        amplitude_range: (p.amplitude_low, p.amplitude_high),
    }
}

unsafe fn out_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: `out` is non-null and writable per caller contract.
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: non-null handles were produced by this library.
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: non-null handles were produced by this library.
    ptr.as_mut().ok_or_else(|| null(what))
}

/// Message describing the last failure on this thread, or an empty string.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn gc_status_description(status: GcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GcStatus::Ok => c"ok",
        GcStatus::NullPointer => c"null pointer argument",
        GcStatus::InvalidArgument => c"invalid argument",
        GcStatus::DimensionMismatch => c"dimension mismatch",
        GcStatus::TooFewFrames => c"too few frames",
        GcStatus::Degenerate => c"degenerate input",
        GcStatus::OutOfRange => c"value out of range",
        GcStatus::Io => c"i/o error",
        GcStatus::Format => c"malformed file",
        GcStatus::Incompatible => c"incompatible inputs",
        GcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes mask `frame_index` (`width * height` amplitudes) into `out`.
#[no_mangle]
pub unsafe extern "C" fn gc_generate_mask(
    params: *const GcMaskParams,
    frame_index: u64,
    out: *mut f64,
    out_len: usize,
) -> GcStatus {
    guard(|| {
        let p = mask_params(handle(params, "params")?);
        let n = area(p.width as u32, p.height as u32)?;
        if out_len != n {
            return Err(invalid(format!(
                "output holds {out_len} values, mask has {n}"
            )));
        }
        let mask = optics::generate_mask(&p, frame_index)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(mask.amplitude.as_slice());
        Ok(())
    })
}

/// Creates an empty accumulator without channel information.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_new(
    width: u32,
    height: u32,
    out: *mut *mut GcAccumulator,
) -> GcStatus {
    guard(|| {
        area(width, height)?;
        out_handle(
            out,
            GcAccumulator(CorrelationAccumulator::new(width as usize, height as usize)),
        )
    })
}

/// Creates an empty accumulator tagged with a probe/display wavelength pair.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_new_for_channel(
    width: u32,
    height: u32,
    probe_wavelength_nm: f64,
    display_wavelength_nm: f64,
    out: *mut *mut GcAccumulator,
) -> GcStatus {
    guard(|| {
        area(width, height)?;
        let ch = SpectralChannel::new(probe_wavelength_nm, display_wavelength_nm)?;
        out_handle(
            out,
            GcAccumulator(CorrelationAccumulator::for_channel(
                width as usize,
                height as usize,
                ch,
            )),
        )
    })
}

/// Releases an accumulator. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_free(acc: *mut GcAccumulator) {
    if !acc.is_null() {
        // SAFETY: produced by Box::into_raw in this library, freed once.
        drop(Box::from_raw(acc));
    }
}

/// Adds one frame: a `width * height` reference image and its bucket value.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_push(
    acc: *mut GcAccumulator,
    reference: *const f64,
    len: usize,
    bucket: f64,
) -> GcStatus {
    guard(|| {
        let acc = &mut handle_mut(acc, "accumulator")?.0;
        let (w, h) = acc.dims();
        if len != w * h {
            return Err(Fail(
                GcStatus::DimensionMismatch,
                format!("reference holds {len} values, accumulator is {w}x{h}"),
            ));
        }
        let reference = Grid::from_vec(w, h, slice(reference, len, "reference")?.to_vec())?;
        acc.accumulate(&FrameRecord {
            frame_index: acc.n(),
            reference,
            bucket,
        })?;
        Ok(())
    })
}

/// Adds the sums of `src` into `dst`.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_merge(
    dst: *mut GcAccumulator,
    src: *const GcAccumulator,
) -> GcStatus {
    guard(|| {
        let src = handle(src, "src")?.0.clone();
        handle_mut(dst, "dst")?.0.merge_from(&src)?;
        Ok(())
    })
}

/// Number of frames accumulated so far.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_frames(
    acc: *const GcAccumulator,
    out_n: *mut u64,
) -> GcStatus {
    guard(|| {
        let n = handle(acc, "accumulator")?.0.n();
        *handle_mut(out_n, "out_n")? = n;
        Ok(())
    })
}

/// Writes the covariance image (`width * height` values) into `out`.
/// Requires at least two frames.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_finalize(
    acc: *const GcAccumulator,
    out: *mut f64,
    out_len: usize,
) -> GcStatus {
    guard(|| {
        let acc = &handle(acc, "accumulator")?.0;
        let (w, h) = acc.dims();
        if out_len != w * h {
            return Err(Fail(
                GcStatus::DimensionMismatch,
                format!("output holds {out_len} values, accumulator is {w}x{h}"),
            ));
        }
        let rec = acc.finalize()?;
        slice_mut(out, out_len, "out")?.copy_from_slice(rec.g.as_slice());
        Ok(())
    })
}

/// Writes the accumulator as a binary checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_save(
    acc: *const GcAccumulator,
    path: *const c_char,
) -> GcStatus {
    guard(|| {
        checkpoint::save(&handle(acc, "accumulator")?.0, path_arg(path)?)?;
        Ok(())
    })
}

/// Loads a checkpoint file into a new accumulator.
#[no_mangle]
pub unsafe extern "C" fn gc_accumulator_load(
    path: *const c_char,
    out: *mut *mut GcAccumulator,
) -> GcStatus {
    guard(|| {
        let acc = checkpoint::load(path_arg(path)?)?;
        out_handle(out, GcAccumulator(acc))
    })
}

/// Creates a single-channel simulation over a `width * height` reflectance
/// map with values in `[0, 1]`. `psf_sigma` of 0 disables blur; a positive
/// value selects a Gaussian PSF. `noise` may be null for noiseless detectors.
#[no_mangle]
pub unsafe extern "C" fn gc_simulation_new(
    reflectance: *const f64,
    width: u32,
    height: u32,
    probe_wavelength_nm: f64,
    display_wavelength_nm: f64,
    mask: *const GcMaskParams,
    noise: *const GcNoise,
    psf_sigma: f64,
    out: *mut *mut GcSimulation,
) -> GcStatus {
    guard(|| {
        let n = area(width, height)?;
        let refl = Grid::from_vec(
            width as usize,
            height as usize,
            slice(reflectance, n, "reflectance")?.to_vec(),
        )?;
        let ch = SpectralChannel::new(probe_wavelength_nm, display_wavelength_nm)?;
        let scene = Scene::new(vec![ch], vec![refl])?;
        let m = handle(mask, "mask")?;
        let mut exp = Experiment::new(scene, m.seed);
        exp.mask.correlation_length_px = m.correlation_length_px;
        exp.mask.amplitude_range = (m.amplitude_low, m.amplitude_high);
        exp.mask_params().validate()?;
        if let Some(nz) = noise.as_ref() {
            exp.noise = DetectorNoise {
                bucket_noise_sigma: nz.bucket_noise_sigma,
                reference_noise_sigma: nz.reference_noise_sigma,
            };
            exp.noise.validate()?;
        }
        exp.psf = if psf_sigma == 0.0 {
            Psf::Identity
        } else {
            Psf::gaussian(psf_sigma)?
        };
        out_handle(out, GcSimulation(exp))
    })
}

/// Releases a simulation. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gc_simulation_free(sim: *mut GcSimulation) {
    if !sim.is_null() {
        // SAFETY: produced by Box::into_raw in this library, freed once.
        drop(Box::from_raw(sim));
    }
}

/// Simulates frames `[frame_start, frame_end)` into a new accumulator.
#[no_mangle]
pub unsafe extern "C" fn gc_simulation_accumulate(
    sim: *const GcSimulation,
    frame_start: u64,
    frame_end: u64,
    out: *mut *mut GcAccumulator,
) -> GcStatus {
    guard(|| {
        if frame_start > frame_end {
            return Err(invalid("frame_start must not exceed frame_end"));
        }
        let acc = handle(sim, "simulation")?
            .0
            .accumulate(0, frame_start..frame_end)?;
        out_handle(out, GcAccumulator(acc))
    })
}

/// Maps a `width * height` covariance image into `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn gc_normalize(
    g: *const f64,
    width: u32,
    height: u32,
    mode: GcNormalize,
    out: *mut f64,
) -> GcStatus {
    guard(|| {
        let n = area(width, height)?;
        let grid = Grid::from_vec(width as usize, height as usize, slice(g, n, "g")?.to_vec())?;
        let mode = match mode {
            GcNormalize::Minmax => NormalizeMode::Minmax,
            GcNormalize::ZscoreClip => NormalizeMode::ZscoreClip,
        };
        let norm = correlator::normalize(&grid, mode)?;
        slice_mut(out, n, "out")?.copy_from_slice(norm.as_slice());
        Ok(())
    })
}

/// Writes the RGB primary of a wavelength in `[380, 780]` nm to `out_rgb[0..3]`.
#[no_mangle]
pub unsafe extern "C" fn gc_wavelength_to_rgb(wavelength_nm: f64, out_rgb: *mut f64) -> GcStatus {
    guard(|| {
        let rgb = spectral::wavelength_to_rgb(wavelength_nm)?;
        slice_mut(out_rgb, 3, "out_rgb")?.copy_from_slice(&rgb);
        Ok(())
    })
}

/// Composes `n_channels` normalized maps, each tinted by its display
/// wavelength, into an interleaved RGB image of `3 * width * height` values.
#[no_mangle]
pub unsafe extern "C" fn gc_compose(
    maps: *const *const f64,
    wavelengths_nm: *const f64,
    n_channels: usize,
    width: u32,
    height: u32,
    out_rgb: *mut f64,
) -> GcStatus {
    guard(|| {
        let n = area(width, height)?;
        if maps.is_null() {
            return Err(null("maps"));
        }
        // SAFETY: caller guarantees `n_channels` map pointers.
        let ptrs = std::slice::from_raw_parts(maps, n_channels);
        let wl = slice(wavelengths_nm, n_channels, "wavelengths_nm")?;
        let grids = ptrs
            .iter()
            .map(|&p| {
                Ok(Grid::from_vec(
                    width as usize,
                    height as usize,
                    slice(p, n, "map")?.to_vec(),
                )?)
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let layers: Vec<_> = grids
            .iter()
            .zip(wl)
            .map(|(m, &l)| spectral::ChannelLayer {
                map: m,
                display_wavelength_nm: l,
            })
            .collect();
        let img = spectral::compose(&layers)?;
        slice_mut(out_rgb, 3 * n, "out_rgb")?.copy_from_slice(&img.flat());
        Ok(())
    })
}

/// PSNR in dB of `len` samples in `[0, 1]`; identical inputs give +infinity.
#[no_mangle]
pub unsafe extern "C" fn gc_psnr(
    reference: *const f64,
    test: *const f64,
    len: usize,
    out_db: *mut f64,
) -> GcStatus {
    guard(|| {
        let v = metrics::psnr_samples(
            slice(reference, len, "reference")?,
            slice(test, len, "test")?,
        )?;
        *handle_mut(out_db, "out_db")? = v;
        Ok(())
    })
}

/// Mean SSIM of two `width * height` maps (both sides at least 11).
#[no_mangle]
pub unsafe extern "C" fn gc_ssim(
    reference: *const f64,
    test: *const f64,
    width: u32,
    height: u32,
    out: *mut f64,
) -> GcStatus {
    guard(|| {
        let n = area(width, height)?;
        let (w, h) = (width as usize, height as usize);
        let a = Grid::from_vec(w, h, slice(reference, n, "reference")?.to_vec())?;
        let b = Grid::from_vec(w, h, slice(test, n, "test")?.to_vec())?;
        *handle_mut(out, "out")? = metrics::ssim(&a, &b)?;
        Ok(())
    })
}

/// Colorfulness index of an interleaved RGB image of `n_pixels` pixels.
#[no_mangle]
pub unsafe extern "C" fn gc_cci(rgb: *const f64, n_pixels: usize, out: *mut f64) -> GcStatus {
    guard(|| {
        if n_pixels == 0 {
            return Err(invalid("image has no pixels"));
        }
        let px = slice(rgb, 3 * n_pixels, "rgb")?
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let img = ColorImage::new(n_pixels, 1, px)?;
        *handle_mut(out, "out")? = metrics::cci(&img);
        Ok(())
    })
}
