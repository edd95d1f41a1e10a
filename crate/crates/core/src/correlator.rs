//! Background-subtracted intensity cross-correlation.
//!
//! The accumulator keeps raw moment sums so that partial accumulators built
//! over disjoint frame sets merge by plain addition. The covariance
//! `⟨R(x)·B⟩ − ⟨R(x)⟩⟨B⟩` is only formed in [`CorrelationAccumulator::finalize`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_dims, Grid};
use crate::optics::SpectralChannel;

/// One frame: the reference camera image and the bucket detector reading.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub reference: Grid,
    pub bucket: f64,
}

/// Mergeable running sums for the covariance estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    pub(crate) n: u64,
    pub(crate) sum_ref: Grid,
    pub(crate) sum_bucket: f64,
    pub(crate) sum_ref_bucket: Grid,
    pub(crate) channel: Option<SpectralChannel>,
}

impl CorrelationAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        CorrelationAccumulator {
            n: 0,
            sum_ref: Grid::zeros(width, height),
            sum_bucket: 0.0,
            sum_ref_bucket: Grid::zeros(width, height),
            channel: None,
        }
    }

    /// Empty accumulator tagged with the channel it belongs to.
    pub fn for_channel(width: usize, height: usize, channel: SpectralChannel) -> Self {
        CorrelationAccumulator {
            channel: Some(channel),
            ..Self::new(width, height)
        }
    }

    /// Rebuilds an accumulator from its raw sums, e.g. when decoding a checkpoint.
    pub fn from_parts(
        n: u64,
        sum_ref: Grid,
        sum_bucket: f64,
        sum_ref_bucket: Grid,
        channel: Option<SpectralChannel>,
    ) -> Result<Self> {
        sum_ref.check_same_dims(&sum_ref_bucket)?;
        let finite = sum_bucket.is_finite()
            && sum_ref.as_slice().iter().all(|v| v.is_finite())
            && sum_ref_bucket.as_slice().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::OutOfRange("accumulator sums must be finite".into()));
        }
        Ok(CorrelationAccumulator {
            n,
            sum_ref,
            sum_bucket,
            sum_ref_bucket,
            channel,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dims(&self) -> (usize, usize) {
        self.sum_ref.dims()
    }

    pub fn sum_ref(&self) -> &Grid {
        &self.sum_ref
    }

    pub fn sum_bucket(&self) -> f64 {
        self.sum_bucket
    }

    pub fn sum_ref_bucket(&self) -> &Grid {
        &self.sum_ref_bucket
    }

    pub fn channel(&self) -> Option<SpectralChannel> {
        self.channel
    }

    pub fn set_channel(&mut self, channel: Option<SpectralChannel>) {
        self.channel = channel;
    }

    /// Adds one frame.
    pub fn accumulate(&mut self, frame: &FrameRecord) -> Result<()> {
        check_dims(self.dims(), frame.reference.dims())?;
        let b = frame.bucket;
        for ((sr, srb), &r) in self
            .sum_ref
            .as_mut_slice()
            .iter_mut()
            .zip(self.sum_ref_bucket.as_mut_slice())
            .zip(frame.reference.as_slice())
        {
            *sr += r;
            *srb += r * b;
        }
        self.sum_bucket += b;
        self.n += 1;
        Ok(())
    }

    /// Fieldwise sum of two accumulators.
    pub fn merge(&self, other: &CorrelationAccumulator) -> Result<CorrelationAccumulator> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    /// In-place form of [`merge`](Self::merge).
    pub fn merge_from(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        check_dims(self.dims(), other.dims())?;
        let channel = match (self.channel, other.channel) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Incompatible(format!(
                    "cannot merge accumulators of different channels ({} nm -> {} nm vs {} nm -> {} nm)",
                    a.probe_wavelength_nm,
                    a.display_wavelength_nm,
                    b.probe_wavelength_nm,
                    b.display_wavelength_nm
                )))
            }
            (a, b) => a.or(b),
        };
        for (x, y) in self
            .sum_ref
            .as_mut_slice()
            .iter_mut()
            .zip(other.sum_ref.as_slice())
        {
            *x += y;
        }
        for (x, y) in self
            .sum_ref_bucket
            .as_mut_slice()
            .iter_mut()
            .zip(other.sum_ref_bucket.as_slice())
        {
            *x += y;
        }
        self.sum_bucket += other.sum_bucket;
        self.n += other.n;
        self.channel = channel;
        Ok(())
    }

    /// Biased (1/n) covariance between every reference pixel and the bucket.
    pub fn finalize(&self) -> Result<ChannelReconstruction> {
        if self.n < 2 {
            return Err(Error::TooFewFrames {
                required: 2,
                actual: self.n,
            });
        }
        let n = self.n as f64;
        let mean_bucket = self.sum_bucket / n;
        let (w, h) = self.dims();
        let g: Vec<f64> = self
            .sum_ref_bucket
            .as_slice()
            .iter()
            .zip(self.sum_ref.as_slice())
            .map(|(srb, sr)| srb / n - (sr / n) * mean_bucket)
            .collect();
        Ok(ChannelReconstruction {
            g: Grid::from_vec(w, h, g)?,
            n_frames: self.n,
            display_wavelength_nm: self.channel.map(|c| c.display_wavelength_nm),
        })
    }
}

/// Unnormalized covariance image of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReconstruction {
    pub g: Grid,
    pub n_frames: u64,
    pub display_wavelength_nm: Option<f64>,
}

/// How a covariance image is brought into `[0, 1]` for display and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeMode {
    /// Affine map of `[min, max]` onto `[0, 1]`.
    #[default]
    Minmax,
    /// Affine map of `mean ± 3σ` onto `[0, 1]`, clamped.
    ZscoreClip,
}

impl std::str::FromStr for NormalizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(NormalizeMode::Minmax),
            "zscore-clip" => Ok(NormalizeMode::ZscoreClip),
            other => Err(Error::InvalidParam(format!(
                "unknown normalization mode {other:?} (expected minmax or zscore-clip)"
            ))),
        }
    }
}

impl std::fmt::Display for NormalizeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizeMode::Minmax => "minmax",
            NormalizeMode::ZscoreClip => "zscore-clip",
        })
    }
}

impl ChannelReconstruction {
    pub fn normalize(&self, mode: NormalizeMode) -> Result<Grid> {
        normalize(&self.g, mode)
    }
}

/// Maps a covariance image into `[0, 1]`.
pub fn normalize(g: &Grid, mode: NormalizeMode) -> Result<Grid> {
    match mode {
        NormalizeMode::Minmax => {
            let (lo, hi) = g.min_max();
            if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Degenerate(
                    "reconstruction is constant; min-max normalization undefined".into(),
                ));
            }
            let span = hi - lo;
            Ok(g.map(|v| ((v - lo) / span).clamp(0.0, 1.0)))
        }
        NormalizeMode::ZscoreClip => {
            let n = g.len() as f64;
            let mean = g.sum() / n;
            let sd = (g.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd == 0.0 {
                return Ok(g.map(|_| 0.5));
            }
            let lo = mean - 3.0 * sd;
            Ok(g.map(|v| ((v - lo) / (6.0 * sd)).clamp(0.0, 1.0)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(i: u64, reference: Grid, bucket: f64) -> FrameRecord {
        FrameRecord {
            frame_index: i,
            reference,
            bucket,
        }
    }

    fn random_frames(n: usize, w: usize, h: usize, seed: u64) -> Vec<FrameRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let r = Grid::from_fn(w, h, |_, _| rng.random::<f64>());
                let b = r.as_slice()[..w].iter().sum::<f64>() + rng.random::<f64>();
                frame(i as u64, r, b)
            })
            .collect()
    }

    fn accumulate_all(frames: &[FrameRecord]) -> CorrelationAccumulator {
        let (w, h) = frames[0].reference.dims();
        let mut acc = CorrelationAccumulator::new(w, h);
        for f in frames {
            acc.accumulate(f).unwrap();
        }
        acc
    }

    #[test]
    fn single_frame_sums() {
        let r = Grid::from_fn(3, 2, |x, y| (x + 2 * y) as f64);
        let mut acc = CorrelationAccumulator::new(3, 2);
        acc.accumulate(&frame(0, r.clone(), 2.5)).unwrap();
        assert_eq!(acc.n(), 1);
        assert_eq!(acc.sum_ref(), &r);
        assert_eq!(acc.sum_ref_bucket(), &r.map(|v| v * 2.5));
        assert_eq!(acc.sum_bucket(), 2.5);
    }

    #[test]
    fn zero_bucket_leaves_cross_sum() {
        let mut acc = accumulate_all(&random_frames(3, 4, 4, 1));
        let before = acc.sum_ref_bucket().clone();
        acc.accumulate(&frame(9, Grid::filled(4, 4, 0.7), 0.0))
            .unwrap();
        assert_eq!(acc.sum_ref_bucket(), &before);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut acc = CorrelationAccumulator::new(4, 4);
        assert!(acc.accumulate(&frame(0, Grid::zeros(4, 3), 1.0)).is_err());
        assert!(acc.merge(&CorrelationAccumulator::new(3, 4)).is_err());
    }

    #[test]
    fn halves_merge_to_sequential() {
        let frames = random_frames(100, 8, 8, 2);
        let seq = accumulate_all(&frames).finalize().unwrap();
        let merged = accumulate_all(&frames[..50])
            .merge(&accumulate_all(&frames[50..]))
            .unwrap()
            .finalize()
            .unwrap();
        assert_eq!(merged.n_frames, 100);
        assert!(crate::grid::relative_max_error(merged.g.as_slice(), seq.g.as_slice()) < 1e-12);
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let a = accumulate_all(&random_frames(10, 5, 5, 3));
        let b = accumulate_all(&random_frames(12, 5, 5, 4));
        assert_eq!(a.merge(&CorrelationAccumulator::new(5, 5)).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
    }

    #[test]
    fn merge_rejects_channel_conflict() {
        let c1 = SpectralChannel::new(785.0, 532.0).unwrap();
        let c2 = SpectralChannel::new(830.0, 635.0).unwrap();
        let a = CorrelationAccumulator::for_channel(2, 2, c1);
        let b = CorrelationAccumulator::for_channel(2, 2, c2);
        assert!(a.merge(&b).is_err());
        let m = a.merge(&CorrelationAccumulator::new(2, 2)).unwrap();
        assert_eq!(m.channel(), Some(c1));
    }

    #[test]
    fn finalize_needs_two_frames() {
        let frames = random_frames(2, 3, 3, 5);
        let mut acc = CorrelationAccumulator::new(3, 3);
        assert!(matches!(acc.finalize(), Err(Error::TooFewFrames { .. })));
        acc.accumulate(&frames[0]).unwrap();
        assert!(acc.finalize().is_err());
        acc.accumulate(&frames[1]).unwrap();
        assert!(acc.finalize().is_ok());
    }

    #[test]
    fn constant_bucket_gives_zero() {
        let mut frames = random_frames(50, 6, 6, 6);
        frames.iter_mut().for_each(|f| f.bucket = 3.0);
        let g = accumulate_all(&frames).finalize().unwrap().g;
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn spatially_constant_reference_gives_constant_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frames: Vec<_> = (0..40)
            .map(|i| {
                let v = rng.random::<f64>();
                frame(i, Grid::filled(5, 4, v), 10.0 * v + rng.random::<f64>())
            })
            .collect();
        let g = accumulate_all(&frames).finalize().unwrap().g;
        let (lo, hi) = g.min_max();
        assert_eq!(lo, hi);
        assert!(lo > 0.0);
    }

    #[test]
    fn minmax_is_affine() {
        let g = Grid::from_vec(3, 1, vec![-2.0, 2.0, 6.0]).unwrap();
        let n = normalize(&g, NormalizeMode::Minmax).unwrap();
        assert_eq!(n.as_slice(), &[0.0, 0.5, 1.0]);
        assert!(matches!(
            normalize(&Grid::filled(2, 2, 1.0), NormalizeMode::Minmax),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zscore_clip_maps_three_sigma() {
        // mean 0, population sd 1
        let g = Grid::from_vec(4, 1, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let n = normalize(&g, NormalizeMode::ZscoreClip).unwrap();
        for (v, e) in n
            .as_slice()
            .iter()
            .zip([1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0])
        {
            assert!((v - e).abs() < 1e-15);
        }
        let spiky = Grid::from_vec(5, 1, vec![0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
        let n = normalize(&spiky, NormalizeMode::ZscoreClip).unwrap();
        assert!(n.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(
            normalize(&Grid::filled(2, 2, 4.0), NormalizeMode::ZscoreClip)
                .unwrap()
                .as_slice(),
            &[0.5; 4]
        );
    }

    #[test]
    fn normalize_mode_parses() {
        assert_eq!(
            "minmax".parse::<NormalizeMode>().unwrap(),
            NormalizeMode::Minmax
        );
        assert_eq!(
            "zscore-clip".parse::<NormalizeMode>().unwrap(),
            NormalizeMode::ZscoreClip
        );
        assert!("gamma".parse::<NormalizeMode>().is_err());
    }
}
