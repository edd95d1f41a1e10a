//! Image and raw-float file I/O.
//!
//! Raw float files hold one map or one RGB image at full `f64` precision:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `GCRAWF64`                        |
//! | 8      | 4    | format version, `u32` (currently 1)     |
//! | 12     | 4    | width, `u32`                            |
//! | 16     | 4    | height, `u32`                           |
//! | 20     | 4    | components per pixel, `u32` (1 or 3)    |
//! | 24     | …    | row-major `f64` samples, interleaved    |
//!
//! All fields are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};

use crate::checkpoint::{read_f64s, write_f64s};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::{srgb_encode, ColorImage};

pub const RAW_MAGIC: [u8; 8] = *b"GCRAWF64";
pub const RAW_VERSION: u32 = 1;

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
}

/// Loads an 8- or 16-bit grayscale PNG or PGM, scaled to `[0, 1]`.
pub fn load_gray(path: &Path) -> Result<Grid> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => {
            return Err(Error::format(
                path,
                format!("expected a grayscale image, found {:?}", other.color()),
            ))
        }
    };
    Grid::from_vec(w, h, data)
}

/// Loads an RGB (or grayscale) image as linear components in `[0, 1]`.
/// No transfer function is undone.
pub fn load_rgb(path: &Path) -> Result<ColorImage> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .into_rgb16()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 65535.0))
            .collect(),
        _ => img
            .into_rgb8()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 255.0))
            .collect(),
    };
    ColorImage::new(w, h, px)
}

fn quantize(v: f64, srgb: bool) -> u8 {
    let v = if srgb {
        srgb_encode(v)
    } else {
        v.clamp(0.0, 1.0)
    };
    (v * 255.0).round() as u8
}

fn save_dynamic(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
}

/// Writes a `[0, 1]` map as an 8-bit grayscale PNG.
pub fn save_gray_png(map: &Grid, path: &Path, srgb: bool) -> Result<()> {
    let (w, h) = map.dims();
    let buf = ImageBuffer::<Luma<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(map.get(x as usize, y as usize), srgb)])
    });
    save_dynamic(DynamicImage::ImageLuma8(buf), path)
}

/// Writes a color image as an 8-bit RGB PNG, optionally sRGB-encoded.
pub fn save_rgb_png(image: &ColorImage, path: &Path, srgb: bool) -> Result<()> {
    let (w, h) = image.dims();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(w as u32, h as u32, |x, y| {
        Rgb(image
            .pixel(x as usize, y as usize)
            .map(|v| quantize(v, srgb)))
    });
    save_dynamic(DynamicImage::ImageRgb8(buf), path)
}

/// Contents of a raw float file.
#[derive(Debug, Clone, PartialEq)]
pub enum RawImage {
    Gray(Grid),
    Color(ColorImage),
}

fn write_raw_parts<W: Write>(
    mut w: W,
    width: usize,
    height: usize,
    comps: u32,
    data: &[f64],
) -> std::io::Result<()> {
    w.write_all(&RAW_MAGIC)?;
    w.write_all(&RAW_VERSION.to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&comps.to_le_bytes())?;
    write_f64s(&mut w, data)?;
    w.flush()
}

pub fn write_raw<W: Write>(image: &RawImage, w: W) -> std::io::Result<()> {
    match image {
        RawImage::Gray(g) => write_raw_parts(w, g.width(), g.height(), 1, g.as_slice()),
        RawImage::Color(c) => write_raw_parts(w, c.width(), c.height(), 3, &c.flat()),
    }
}

pub fn read_raw<R: Read>(mut r: R, origin: &Path) -> Result<RawImage> {
    let io = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(origin, "truncated raw image")
        } else {
            Error::io(origin, e)
        }
    };
    let mut header = [0u8; 24];
    r.read_exact(&mut header).map_err(io)?;
    if header[..8] != RAW_MAGIC {
        return Err(Error::format(origin, "not a raw float image (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(8) != RAW_VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported raw version {}", word(8)),
        ));
    }
    let (w, h, comps) = (word(12) as usize, word(16) as usize, word(20));
    let data = match comps {
        1 | 3 => read_f64s(&mut r, w * h * comps as usize).map_err(io)?,
        _ => {
            return Err(Error::format(
                origin,
                format!("unsupported component count {comps}"),
            ))
        }
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(Error::format(origin, "trailing bytes after raw image"));
    }
    if comps == 1 {
        Ok(RawImage::Gray(Grid::from_vec(w, h, data)?))
    } else {
        let px = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(RawImage::Color(
            ColorImage::new(w, h, px).map_err(|e| Error::format(origin, e.to_string()))?,
        ))
    }
}

pub fn save_raw(image: &RawImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_raw(image, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_raw(path: &Path) -> Result<RawImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw(BufReader::new(file), path)
}

/// Loads a grayscale map from a raw float file or any supported image format.
pub fn load_map(path: &Path) -> Result<Grid> {
    if has_raw_magic(path)? {
        match load_raw(path)? {
            RawImage::Gray(g) => Ok(g),
            RawImage::Color(_) => Err(Error::format(path, "expected a single-component raw image")),
        }
    } else {
        load_gray(path)
    }
}

/// Loads either a raw float file or an image file, keeping its component count.
pub fn load_any(path: &Path) -> Result<RawImage> {
    if has_raw_magic(path)? {
        return load_raw(path);
    }
    match open_image(path)?.color().channel_count() {
        1 => Ok(RawImage::Gray(load_gray(path)?)),
        _ => Ok(RawImage::Color(load_rgb(path)?)),
    }
}

fn has_raw_magic(path: &Path) -> Result<bool> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    match f.read_exact(&mut magic) {
        Ok(()) => Ok(magic == RAW_MAGIC),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_png_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        ImageBuffer::<Luma<u8>, _>::from_fn(3, 2, |x, y| Luma([(x * 100 + y) as u8]))
            .save(&p8)
            .unwrap();
        let g = load_gray(&p8).unwrap();
        assert_eq!(g.dims(), (3, 2));
        assert_eq!(g.get(2, 1), 201.0 / 255.0);

        let p16 = dir.path().join("b.png");
        ImageBuffer::<Luma<u16>, _>::from_fn(2, 2, |x, _| Luma([if x == 0 { 0 } else { 65535 }]))
            .save(&p16)
            .unwrap();
        let g = load_gray(&p16).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pgm_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        std::fs::write(&p, b"P2\n2 1\n255\n0 255\n").unwrap();
        assert_eq!(load_gray(&p).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn color_rejected_as_scene_and_missing_file_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        ImageBuffer::<Rgb<u8>, _>::from_pixel(2, 2, Rgb([1, 2, 3]))
            .save(&p)
            .unwrap();
        assert!(load_gray(&p).is_err());
        let missing = dir.path().join("nope.png");
        let err = load_gray(&missing).unwrap_err().to_string();
        assert!(err.contains("nope.png"), "{err}");
    }

    #[test]
    fn png_roundtrip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let img = ColorImage::new(2, 1, vec![[1.0, 0.0, 0.5], [0.2, 0.4, 0.6]]).unwrap();
        save_rgb_png(&img, &p, false).unwrap();
        let back = load_rgb(&p).unwrap();
        for (a, b) in back.flat().iter().zip(img.flat()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn raw_roundtrip_and_header() {
        let g = Grid::from_fn(3, 2, |x, y| x as f64 - 0.1 * y as f64);
        let mut buf = Vec::new();
        write_raw(&RawImage::Gray(g.clone()), &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 6 * 8);
        assert_eq!(&buf[..8], b"GCRAWF64");
        assert_eq!(
            read_raw(&buf[..], Path::new("m")).unwrap(),
            RawImage::Gray(g)
        );

        let c = ColorImage::new(1, 2, vec![[0.1, 0.2, 0.3], [1.0, 0.0, 0.5]]).unwrap();
        let mut buf = Vec::new();
        write_raw(&RawImage::Color(c.clone()), &mut buf).unwrap();
        assert_eq!(
            read_raw(&buf[..], Path::new("m")).unwrap(),
            RawImage::Color(c)
        );
        assert!(read_raw(&buf[..buf.len() - 1], Path::new("m")).is_err());
    }
}
