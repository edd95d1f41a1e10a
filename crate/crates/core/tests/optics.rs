use ghostcolor::optics::{
    bucket_value, gaussian_field, generate_mask, illumination, noise_rng, reference_intensity,
    ChannelSimulator,
};
use ghostcolor::{scenes, DetectorNoise, Grid, MaskParams, Psf, Scene, SpeckleMask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn params(w: usize, h: usize, corr: f64, seed: u64) -> MaskParams {
    MaskParams {
        width: w,
        height: h,
        correlation_length_px: corr,
        seed,
        amplitude_range: (0.0, 1.0),
    }
}

fn random_grid(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid {
    Grid::from_fn(w, h, |_, _| rng.random::<f64>())
}

fn random_mask(w: usize, h: usize, seed: u64) -> SpeckleMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpeckleMask {
        index: 0,
        amplitude: random_grid(w, h, &mut rng),
    }
}

/// Gather convolution over an explicitly padded copy, mirroring
/// `..., 1, 0 | 0, 1, ... | n-1, n-2, ...` at each border.
fn brute_force_convolve(field: &Grid, kernel: &Grid) -> Grid {
    let (w, h) = field.dims();
    let r = (kernel.dims().0 / 2) as isize;
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };
    Grid::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for ky in -r..=r {
            for kx in -r..=r {
                let sx = reflect(x as isize - kx, w);
                let sy = reflect(y as isize - ky, h);
                acc += kernel.get((kx + r) as usize, (ky + r) as usize) * field.get(sx, sy);
            }
        }
        acc
    })
}

#[test]
fn box_psf_matches_brute_force_convolution() {
    let mask = random_mask(8, 8, 3);
    let psf = Psf::box_blur(3).unwrap();
    let got = reference_intensity(&mask, &psf, &DetectorNoise::NONE, &mut noise_rng(0, 0, 0));
    let squared = mask.amplitude.map(|a| a * a);
    let expected = brute_force_convolve(&squared, &Grid::filled(3, 3, 1.0 / 9.0));
    for (g, e) in got.as_slice().iter().zip(expected.as_slice()) {
        assert!((g - e).abs() <= 1e-12 * e.abs().max(1e-300), "{g} vs {e}");
    }
}

#[test]
fn asymmetric_kernel_matches_brute_force_in_the_interior() {
    let mask = random_mask(9, 7, 4);
    let k = Grid::from_vec(3, 3, vec![0.0, 0.1, 0.0, 0.05, 0.5, 0.2, 0.0, 0.15, 0.0]).unwrap();
    let psf = Psf::kernel(k.clone()).unwrap();
    let squared = mask.amplitude.map(|a| a * a);
    let got = illumination(&mask, &psf);
    let expected = brute_force_convolve(&squared, &k);
    for y in 1..6 {
        for x in 1..8 {
            assert!((got.get(x, y) - expected.get(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn bucket_matches_multiply_and_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mask = SpeckleMask {
        index: 5,
        amplitude: random_grid(16, 16, &mut rng),
    };
    let refl = random_grid(16, 16, &mut rng);
    let scene = Scene::new(vec![scenes::GREEN_PAIR], vec![refl.clone()]).unwrap();
    for psf in [
        Psf::Identity,
        Psf::box_blur(3).unwrap(),
        Psf::gaussian(1.2).unwrap(),
    ] {
        let b = bucket_value(
            &mask,
            &scene,
            0,
            &psf,
            &DetectorNoise::NONE,
            &mut noise_rng(0, 0, 0),
        )
        .unwrap();
        let illum = match &psf {
            Psf::Identity => mask.amplitude.map(|a| a * a),
            Psf::Kernel(k) => brute_force_convolve(&mask.amplitude.map(|a| a * a), k),
        };
        let mut expected = 0.0;
        for y in 0..16 {
            for x in 0..16 {
                expected += illum.get(x, y) * refl.get(x, y);
            }
        }
        assert!(
            (b - expected).abs() <= 1e-12 * expected,
            "{b} vs {expected}"
        );
    }
}

#[test]
fn autocorrelation_width_tracks_correlation_length() {
    let corr = 2.0;
    let p = params(32, 32, corr, 1);
    let max_lag = 8;
    let per_frame: Vec<Vec<f64>> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let a = generate_mask(&p, i).unwrap().amplitude;
            let mean = a.sum() / 1024.0;
            let c = a.map(|v| v - mean);
            (0..=max_lag)
                .map(|d| {
                    let mut s = 0.0;
                    let mut n = 0.0;
                    for y in 0..32 {
                        for x in 0..32 - d {
                            s += c.get(x, y) * c.get(x + d, y) + c.get(y, x) * c.get(y, x + d);
                            n += 2.0;
                        }
                    }
                    s / n
                })
                .collect()
        })
        .collect();
    let mut acf = vec![0.0; max_lag + 1];
    for f in &per_frame {
        for (a, v) in acf.iter_mut().zip(f) {
            *a += v;
        }
    }
    let acf: Vec<f64> = acf.iter().map(|v| v / acf[0]).collect();
    let d = acf
        .iter()
        .position(|&v| v < 0.5)
        .expect("correlation decays below half");
    let half = (d - 1) as f64 + (acf[d - 1] - 0.5) / (acf[d - 1] - acf[d]);
    let fwhm = 2.0 * half;
    let target = 2.355 * corr;
    assert!(
        (fwhm - target).abs() <= 0.25 * target,
        "fwhm {fwhm}, expected {target} +/- 25%"
    );
}

#[test]
fn pre_clamp_field_is_standard_normal_per_pixel() {
    let n = 10_000u64;
    let p = params(32, 32, 1.5, 2);
    let fields: Vec<Grid> = (0..n)
        .into_par_iter()
        .map(|i| gaussian_field(&p, i).unwrap())
        .collect();
    let nf = n as f64;
    let se_mean = 1.0 / nf.sqrt();
    let se_var = (2.0 / nf).sqrt();
    let mut mean_of_vars = 0.0;
    for k in 0..1024 {
        let vals: Vec<f64> = fields.iter().map(|f| f.as_slice()[k]).collect();
        let m = vals.iter().sum::<f64>() / nf;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
        mean_of_vars += v / 1024.0;
        assert!(m.abs() <= 5.0 * se_mean, "pixel {k}: mean {m}");
        assert!((v - 1.0).abs() <= 5.0 * se_var, "pixel {k}: variance {v}");
    }
    assert!((mean_of_vars - 1.0).abs() < 1e-3, "{mean_of_vars}");
}

#[test]
fn frame_uses_one_mask_for_both_arms() {
    let scene = scenes::metamer(16).scene;
    let psf = Psf::gaussian(0.8).unwrap();
    let p = params(16, 16, 1.5, 6);
    let sim = ChannelSimulator::new(&scene, 1, p, &psf, DetectorNoise::NONE).unwrap();
    for i in [0u64, 1, 77, 4096] {
        let rec = sim.frame(i).unwrap();
        let mask = generate_mask(&p, i).unwrap();
        assert_eq!(rec.frame_index, mask.index);
        let mut rng = noise_rng(6, 1, i);
        assert_eq!(
            rec.reference,
            reference_intensity(&mask, &psf, &DetectorNoise::NONE, &mut rng)
        );
        assert_eq!(
            rec.bucket,
            bucket_value(&mask, &scene, 1, &psf, &DetectorNoise::NONE, &mut rng).unwrap()
        );
    }
}

#[test]
fn parallel_generation_matches_sequential() {
    let scene = scenes::binary_scene(16);
    let noise = DetectorNoise {
        bucket_noise_sigma: 0.3,
        reference_noise_sigma: 0.01,
    };
    let psf = Psf::Identity;
    let sim = ChannelSimulator::new(&scene, 0, params(16, 16, 1.5, 9), &psf, noise).unwrap();
    let seq: Vec<_> = (0..300).map(|i| sim.frame(i).unwrap()).collect();
    let par: Vec<_> = (0..300usize)
        .into_par_iter()
        .rev()
        .map(|i| sim.frame(i as u64).unwrap())
        .collect();
    let par: Vec<_> = par.into_iter().rev().collect();
    assert_eq!(seq, par);
}

fn scene_of(g: Grid) -> Scene {
    Scene::new(vec![scenes::GREEN_PAIR], vec![g]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bucket_is_linear_in_reflectance(seed in any::<u64>(), alpha in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_grid(12, 10, &mut rng);
        let b = random_grid(12, 10, &mut rng);
        let beta = 1.0 - alpha;
        let mix = Grid::from_fn(12, 10, |x, y| (alpha * a.get(x, y) + beta * b.get(x, y)).min(1.0));
        let mask = generate_mask(&params(12, 10, 1.0, seed), 3).unwrap();
        let psf = Psf::box_blur(3).unwrap();
        let bucket = |g: &Grid| {
            bucket_value(&mask, &scene_of(g.clone()), 0, &psf, &DetectorNoise::NONE, &mut noise_rng(0, 0, 0)).unwrap()
        };
        let lhs = bucket(&mix);
        let rhs = alpha * bucket(&a) + beta * bucket(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn psf_preserves_total_intensity(seed in any::<u64>(), w in 1usize..20, h in 1usize..20, sigma in 0.3f64..3.0, size in 0usize..4) {
        let mask = random_mask(w, h, seed);
        let psf = if size == 0 { Psf::gaussian(sigma).unwrap() } else { Psf::box_blur(2 * size + 1).unwrap() };
        let out = reference_intensity(&mask, &psf, &DetectorNoise::NONE, &mut noise_rng(0, 0, 0));
        let expected: f64 = mask.amplitude.as_slice().iter().map(|a| a * a).sum();
        prop_assert!((out.sum() - expected).abs() <= 1e-9 * expected.max(1e-300));
    }

    #[test]
    fn masks_are_deterministic_and_bounded(seed in any::<u64>(), frame in any::<u64>(), corr in 0.0f64..4.0, lo in 0.0f64..0.5, span in 0.01f64..0.5) {
        let p = MaskParams { amplitude_range: (lo, lo + span), ..params(9, 6, corr, seed) };
        let a = generate_mask(&p, frame).unwrap();
        prop_assert_eq!(&a, &generate_mask(&p, frame).unwrap());
        prop_assert!(a.amplitude.as_slice().iter().all(|&v| v >= lo && v <= lo + span));
    }

    #[test]
    fn noiseless_reference_is_nonnegative_and_bucket_nonnegative(seed in any::<u64>(), frame in 0u64..1000) {
        let scene = scenes::foliage(12).scene;
        let psf = Psf::gaussian(1.0).unwrap();
        let sim = ChannelSimulator::new(&scene, 0, params(12, 12, 1.5, seed), &psf, DetectorNoise::NONE).unwrap();
        let rec = sim.frame(frame).unwrap();
        prop_assert!(rec.bucket >= 0.0);
        prop_assert!(rec.reference.as_slice().iter().all(|&v| v >= 0.0));
    }
}
