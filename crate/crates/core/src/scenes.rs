//! Bundled synthetic two-band test scenes.
//!
//! Every reflectance level is an integer multiple of 1/255 so that the maps
//! survive an 8-bit PNG round trip bit-exactly.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io;
use crate::optics::{Scene, SpectralChannel};
use crate::spectral::ColorImage;

/// 785 nm probe carried by 532 nm.
pub const GREEN_PAIR: SpectralChannel = SpectralChannel {
    probe_wavelength_nm: 785.0,
    display_wavelength_nm: 532.0,
};

/// 830 nm probe carried by 635 nm.
pub const RED_PAIR: SpectralChannel = SpectralChannel {
    probe_wavelength_nm: 830.0,
    display_wavelength_nm: 635.0,
};

fn level(v: u8) -> f64 {
    v as f64 / 255.0
}

fn rgb(c: [u8; 3]) -> [f64; 3] {
    c.map(level)
}

/// A two-band scene together with what a visible-light camera would see.
#[derive(Debug, Clone)]
pub struct BundledScene {
    pub name: &'static str,
    pub scene: Scene,
    pub visible: ColorImage,
}

/// Binary `size × size` target: a "T" and a square block on a dark background.
pub fn binary_target(size: usize) -> Grid {
    let s = size as f64;
    Grid::from_fn(size, size, |x, y| {
        let (u, v) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
        let bar = (0.15..0.85).contains(&u) && (0.15..0.3).contains(&v);
        let stem = (0.42..0.58).contains(&u) && (0.3..0.85).contains(&v);
        let block = (0.7..0.85).contains(&u) && (0.6..0.85).contains(&v);
        if bar || stem || block {
            1.0
        } else {
            0.0
        }
    })
}

/// Single-channel scene around [`binary_target`].
pub fn binary_scene(size: usize) -> Scene {
    Scene::new(vec![GREEN_PAIR], vec![binary_target(size)]).expect("valid by construction")
}

fn disc(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64) -> bool {
    move |u, v| (u - cx).powi(2) + (v - cy).powi(2) <= r * r
}

struct Region {
    inside: Box<dyn Fn(f64, f64) -> bool>,
    green_band: u8,
    red_band: u8,
    visible: [u8; 3],
}

fn paint(
    name: &'static str,
    size: usize,
    background: (u8, u8, [u8; 3]),
    regions: Vec<Region>,
) -> BundledScene {
    let s = size as f64;
    let pick = |x: usize, y: usize| -> (u8, u8, [u8; 3]) {
        let (u, v) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
        regions
            .iter()
            .rev()
            .find(|r| (r.inside)(u, v))
            .map_or(background, |r| (r.green_band, r.red_band, r.visible))
    };
    let green = Grid::from_fn(size, size, |x, y| level(pick(x, y).0));
    let red = Grid::from_fn(size, size, |x, y| level(pick(x, y).1));
    let mut px = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            px.push(rgb(pick(x, y).2));
        }
    }
    BundledScene {
        name,
        scene: Scene::new(vec![GREEN_PAIR, RED_PAIR], vec![green, red])
            .expect("valid by construction"),
        visible: ColorImage::new(size, size, px).expect("valid by construction"),
    }
}

/// Two discs that look identical in visible light but reflect the two
/// infrared bands very differently, plus a bar bright in both bands.
pub fn metamer(size: usize) -> BundledScene {
    let same_visible = [120, 112, 96];
    paint(
        "metamer",
        size,
        (20, 20, [70, 70, 66]),
        vec![
            Region {
                inside: Box::new(disc(0.3, 0.38, 0.2)),
                green_band: 230,
                red_band: 40,
                visible: same_visible,
            },
            Region {
                inside: Box::new(disc(0.7, 0.38, 0.2)),
                green_band: 40,
                red_band: 230,
                visible: same_visible,
            },
            Region {
                inside: Box::new(|u, v| (0.2..0.8).contains(&u) && (0.72..0.86).contains(&v)),
                green_band: 200,
                red_band: 200,
                visible: [150, 150, 145],
            },
        ],
    )
}

/// Vertical bands of vegetation-like material whose infrared response drifts
/// between the bands while the visible look stays a muted olive.
pub fn foliage(size: usize) -> BundledScene {
    let bands: [(u8, u8, [u8; 3]); 4] = [
        (210, 90, [92, 104, 70]),
        (90, 210, [96, 104, 72]),
        (160, 160, [90, 100, 70]),
        (230, 50, [94, 102, 74]),
    ];
    let regions = bands
        .iter()
        .enumerate()
        .map(|(i, &(g, r, vis))| {
            let lo = 0.1 + 0.2 * i as f64;
            Region {
                inside: Box::new(move |u, v| {
                    (lo..lo + 0.16).contains(&u) && (0.1..0.9).contains(&v)
                }),
                green_band: g,
                red_band: r,
                visible: vis,
            }
        })
        .collect();
    paint("foliage", size, (30, 30, [60, 62, 58]), regions)
}

/// Gray checkerboard in visible light whose squares alternate between the two
/// infrared bands.
pub fn checker(size: usize) -> BundledScene {
    let cells = 4.0;
    let regions = vec![
        Region {
            inside: Box::new(move |u, v| ((u * cells) as i64 + (v * cells) as i64) % 2 == 0),
            green_band: 220,
            red_band: 60,
            visible: [128, 128, 128],
        },
        Region {
            inside: Box::new(move |u, v| ((u * cells) as i64 + (v * cells) as i64) % 2 == 1),
            green_band: 60,
            red_band: 220,
            visible: [128, 128, 128],
        },
    ];
    paint("checker", size, (0, 0, [128, 128, 128]), regions)
}

/// All bundled two-band scenes at the given size.
pub fn bundled(size: usize) -> Vec<BundledScene> {
    vec![metamer(size), foliage(size), checker(size)]
}

/// Paths written by [`write_bundled`] for one scene.
#[derive(Debug, Clone)]
pub struct ScenePaths {
    pub name: String,
    pub reflectance: Vec<PathBuf>,
    pub visible: PathBuf,
}

/// Writes each bundled scene as `<name>_785nm.png`, `<name>_830nm.png` and
/// `<name>_visible.png`, plus `binary_target.png`.
pub fn write_bundled(dir: &Path, size: usize) -> Result<Vec<ScenePaths>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for b in bundled(size) {
        let mut reflectance = Vec::new();
        for (i, ch) in b.scene.channels().iter().enumerate() {
            let p = dir.join(format!("{}_{}nm.png", b.name, ch.probe_wavelength_nm));
            io::save_gray_png(b.scene.reflectance(i)?, &p, false)?;
            reflectance.push(p);
        }
        let visible = dir.join(format!("{}_visible.png", b.name));
        io::save_rgb_png(&b.visible, &visible, false)?;
        out.push(ScenePaths {
            name: b.name.to_string(),
            reflectance,
            visible,
        });
    }
    io::save_gray_png(&binary_target(size), &dir.join("binary_target.png"), false)?;
    Ok(out)
}
