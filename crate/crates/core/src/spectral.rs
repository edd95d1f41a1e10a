//! Turning monochrome channel reconstructions into a color image.
//!
//! Each channel is painted with the linear-RGB primary of its visible display
//! wavelength and the channels are summed, then clamped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::grid::{check_dims, Grid};

/// Visible range accepted by [`wavelength_to_rgb`], in nm.
pub const VISIBLE_RANGE_NM: (f64, f64) = (380.0, 780.0);

/// Breakpoints of the piecewise-linear spectrum approximation: wavelength in
/// nm and the RGB triplet at that wavelength. Values between breakpoints are
/// linearly interpolated.
pub const SPECTRUM_BREAKPOINTS: [(f64, [f64; 3]); 7] = [
    (380.0, [1.0, 0.0, 1.0]),
    (440.0, [0.0, 0.0, 1.0]),
    (490.0, [0.0, 1.0, 1.0]),
    (510.0, [0.0, 1.0, 0.0]),
    (580.0, [1.0, 1.0, 0.0]),
    (645.0, [1.0, 0.0, 0.0]),
    (780.0, [1.0, 0.0, 0.0]),
];

/// RGB primary of a visible wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthPrimary {
    pub wavelength_nm: f64,
    pub rgb: [f64; 3],
}

impl WavelengthPrimary {
    pub fn new(wavelength_nm: f64) -> Result<Self> {
        Ok(WavelengthPrimary {
            wavelength_nm,
            rgb: wavelength_to_rgb(wavelength_nm)?,
        })
    }
}

pub fn wavelength_to_rgb(wavelength_nm: f64) -> Result<[f64; 3]> {
    let (lo, hi) = VISIBLE_RANGE_NM;
    if !(lo..=hi).contains(&wavelength_nm) {
        return Err(Error::OutOfRange(format!(
            "wavelength {wavelength_nm} nm outside visible range [{lo}, {hi}] nm"
        )));
    }
    let seg = SPECTRUM_BREAKPOINTS
        .windows(2)
        .find(|w| wavelength_nm <= w[1].0)
        .expect("range checked");
    let ((l0, c0), (l1, c1)) = (seg[0], seg[1]);
    let t = (wavelength_nm - l0) / (l1 - l0);
    Ok(std::array::from_fn(|i| c0[i] + t * (c1[i] - c0[i])))
}

/// Linear-RGB image with components in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    rgb: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, rgb: Vec<[f64; 3]>) -> Result<Self> {
        if rgb.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "{} pixels cannot fill a {width}x{height} image",
                rgb.len()
            )));
        }
        if rgb.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(
                "color components must lie in [0, 1]".into(),
            ));
        }
        Ok(ColorImage { width, height, rgb })
    }

    /// Gray image with `R = G = B = value`.
    pub fn from_gray(gray: &Grid) -> Result<Self> {
        let (w, h) = gray.dims();
        ColorImage::new(w, h, gray.as_slice().iter().map(|&v| [v; 3]).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.rgb[y * self.width + x]
    }

    /// Components flattened as `r, g, b, r, g, b, …`.
    pub fn flat(&self) -> Vec<f64> {
        self.rgb.iter().flatten().copied().collect()
    }
}

/// One normalized channel map and its display wavelength.
#[derive(Debug, Clone, Copy)]
pub struct ChannelLayer<'a> {
    pub map: &'a Grid,
    pub display_wavelength_nm: f64,
}

/// Additive blend of channel maps tinted by their display wavelengths.
pub fn compose(channels: &[ChannelLayer<'_>]) -> Result<ColorImage> {
    let first = channels
        .first()
        .ok_or_else(|| Error::InvalidParam("compose needs at least one channel".into()))?;
    let dims = first.map.dims();
    let mut acc = vec![[0.0f64; 3]; dims.0 * dims.1];
    for layer in channels {
        check_dims(dims, layer.map.dims())?;
        let primary = wavelength_to_rgb(layer.display_wavelength_nm)?;
        for (px, &v) in acc.iter_mut().zip(layer.map.as_slice()) {
            for c in 0..3 {
                px[c] += v * primary[c];
            }
        }
    }
    for px in &mut acc {
        for c in px.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
    }
    ColorImage::new(dims.0, dims.1, acc)
}

/// sRGB transfer function applied to a linear component.
pub fn srgb_encode(linear: f64) -> f64 {
    let v = linear.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}
