//! Synthetic acoustic plant: band-pass path responses, band-limited noise
//! sources and reference-sensor measurement noise.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::adaptive::SystemDims;
use crate::dsp::{FilterBank, FirFilter};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

/// Fraction of the tap budget reserved for the per-path delay jitter.
const JITTER_DIVISOR: usize = 16;
/// Lowest random gain applied to a path (≈ −1.9 dB).
const MIN_PATH_GAIN: f64 = 0.8;
const RESPONSE_GRID: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    /// Pass band `(f_low, f_high)` in Hz.
    pub band: (f64, f64),
    pub sample_rate: f64,
    pub seed: u64,
    /// Reference-sensor SNR in dB; `None` means clean references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Length of the band-shaping filter.
    #[serde(default = "default_noise_taps")]
    pub filter_taps: usize,
}

fn default_noise_taps() -> usize {
    512
}

impl NoiseSpec {
    pub fn new(
        distribution: NoiseDistribution,
        band: (f64, f64),
        sample_rate: f64,
        seed: u64,
    ) -> Self {
        Self {
            distribution,
            band,
            sample_rate,
            seed,
            snr_db: None,
            filter_taps: default_noise_taps(),
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_band(self.band.0, self.band.1, self.sample_rate)?;
        if self.filter_taps < 8 {
            return Err(Error::config("noise band filter needs at least 8 taps"));
        }
        Ok(())
    }
}

pub fn validate_band(f_low: f64, f_high: f64, sample_rate: f64) -> Result<()> {
    let ok = f_low.is_finite()
        && f_high.is_finite()
        && sample_rate.is_finite()
        && 0.0 < f_low
        && f_low < f_high
        && f_high < sample_rate / 2.0;
    if !ok {
        return Err(Error::config(format!(
            "invalid band {f_low}..{f_high} Hz at sample rate {sample_rate} Hz"
        )));
    }
    Ok(())
}

/// Band-pass FIR for a synthetic acoustic path.
///
/// Hamming-windowed sinc band-pass, scaled so its peak gain is one, then
/// given a seeded random gain in `[0.8, 1]` and a seeded integer delay of up
/// to `n_taps / 16` samples. The delay is a pure phase change, so distinct
/// seeds give distinct paths with the same magnitude mask.
pub fn design_bandpass_fir(
    f_low: f64,
    f_high: f64,
    sample_rate: f64,
    n_taps: usize,
    seed: u64,
) -> Result<FirFilter> {
    validate_band(f_low, f_high, sample_rate)?;
    if n_taps < 8 {
        return Err(Error::config(format!(
            "band-pass design needs at least 8 taps, got {n_taps}"
        )));
    }
    let span = n_taps / JITTER_DIVISOR;
    let proto_len = n_taps - span;
    let mut r = rng(seed);
    let offset = r.random_range(0..=span);
    let gain = r.random_range(MIN_PATH_GAIN..=1.0);

    let proto = windowed_sinc_bandpass(f_low / sample_rate, f_high / sample_rate, proto_len);
    let peak = (0..RESPONSE_GRID)
        .map(|i| proto.magnitude_at(std::f64::consts::PI * i as f64 / (RESPONSE_GRID - 1) as f64))
        .fold(0.0, f64::max);
    let mut taps = vec![0.0; n_taps];
    for (i, t) in proto.taps().iter().enumerate() {
        taps[offset + i] = gain * t / peak;
    }
    FirFilter::new(taps)
}

/// Linear-phase Hamming-windowed band-pass; cut-offs in cycles/sample.
fn windowed_sinc_bandpass(lo: f64, hi: f64, len: usize) -> FirFilter {
    use std::f64::consts::PI;
    let centre = (len - 1) as f64 / 2.0;
    let lowpass = |fc: f64, t: f64| {
        if t == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * t).sin() / (PI * t)
        }
    };
    let taps = (0..len)
        .map(|i| {
            let t = i as f64 - centre;
            let window = if len > 1 {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos()
            } else {
                1.0
            };
            window * (lowpass(hi, t) - lowpass(lo, t))
        })
        .collect();
    FirFilter::new(taps).expect("windowed sinc taps are finite")
}

/// Zero-mean, unit-variance white noise.
pub fn white_noise(distribution: NoiseDistribution, n_samples: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    match distribution {
        NoiseDistribution::Gaussian => (0..n_samples).map(|_| r.sample(StandardNormal)).collect(),
        NoiseDistribution::Uniform => {
            let bound = 3f64.sqrt();
            let dist = Uniform::new(-bound, bound).expect("bounds are ordered");
            (0..n_samples).map(|_| dist.sample(&mut r)).collect()
        }
    }
}

/// Band-limited noise: white noise through a unit-energy band-pass filter.
///
/// The filter is primed with `filter_taps - 1` extra samples so the output
/// is stationary from the first returned sample.
pub fn generate_noise(spec: &NoiseSpec, n_samples: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::config("noise length must be at least one sample"));
    }
    let shaping = design_bandpass_fir(
        spec.band.0,
        spec.band.1,
        spec.sample_rate,
        spec.filter_taps,
        derive_seed(spec.seed, "band", 0),
    )?;
    let norm = shaping.energy().sqrt();
    let taps: Vec<f64> = shaping.taps().iter().map(|t| t / norm).collect();
    let white = white_noise(
        spec.distribution,
        n_samples + taps.len() - 1,
        derive_seed(spec.seed, "white", 0),
    );
    let out = (0..n_samples)
        .map(|n| {
            let newest = n + taps.len() - 1;
            taps.iter()
                .enumerate()
                .map(|(lag, t)| t * white[newest - lag])
                .sum()
        })
        .collect();
    Ok(out)
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Adds white Gaussian noise scaled so the measured SNR over the whole
/// vector equals `snr_db`. An infinite SNR returns the input unchanged.
pub fn add_measurement_noise(clean: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(clean.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::config(format!(
            "SNR must be finite or +inf, got {snr_db}"
        )));
    }
    let p_clean = mean_power(clean);
    if p_clean <= 0.0 {
        return Err(Error::config("SNR is undefined for a zero-power signal"));
    }
    let w = white_noise(NoiseDistribution::Gaussian, clean.len(), seed);
    let p_w = mean_power(&w);
    let scale = (p_clean / (p_w * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(clean.iter().zip(&w).map(|(c, n)| c + scale * n).collect())
}

/// How the primary paths relate to the secondary paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimaryModel {
    /// Primary path (error q, reference j) = Σ_k s_qk * g_kj for seeded
    /// band-pass filters g. An exact controller exists at every sensor set.
    Coherent,
    /// Every primary path is its own seeded band-pass filter.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Path pass band in Hz.
    pub band: (f64, f64),
    pub sample_rate: f64,
    pub primary_taps: usize,
    /// Secondary path length (the estimate length L).
    pub secondary_taps: usize,
    pub seed: u64,
    pub model: PrimaryModel,
    /// Gain on the physical-sensor primary field relative to the virtual one
    /// (coherent model only).
    pub physical_primary_gain: f64,
    /// Standard deviation in dB of multiplicative tap noise applied to the
    /// secondary-path estimates. `None` (or 0) gives exact estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_perturbation_db: Option<f64>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            band: (500.0, 5000.0),
            sample_rate: 16_000.0,
            primary_taps: 128,
            secondary_taps: 32,
            seed: 1,
            model: PrimaryModel::Coherent,
            physical_primary_gain: 0.5,
            estimate_perturbation_db: None,
        }
    }
}

/// Every acoustic path of the plant plus the controller's estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub dims: SystemDims,
    /// M×J
    pub primary_physical: FilterBank,
    /// Q×J
    pub primary_virtual: FilterBank,
    /// M×K
    pub secondary_physical: FilterBank,
    pub secondary_physical_est: FilterBank,
    /// Q×K
    pub secondary_virtual: FilterBank,
    pub secondary_virtual_est: FilterBank,
}

impl PathSet {
    pub fn secondary_len(&self) -> usize {
        self.secondary_physical.tap_len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        d.validate()?;
        let check = |name: &str, b: &FilterBank, rows: usize, cols: usize| {
            if b.rows() != rows || b.cols() != cols {
                return Err(Error::config(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    b.rows(),
                    b.cols()
                )));
            }
            if !b.is_finite() {
                return Err(Error::config(format!("{name} has non-finite taps")));
            }
            Ok(())
        };
        check("primary_physical", &self.primary_physical, d.m, d.j)?;
        check("primary_virtual", &self.primary_virtual, d.q, d.j)?;
        check("secondary_physical", &self.secondary_physical, d.m, d.k)?;
        check(
            "secondary_physical_est",
            &self.secondary_physical_est,
            d.m,
            d.k,
        )?;
        check("secondary_virtual", &self.secondary_virtual, d.q, d.k)?;
        check(
            "secondary_virtual_est",
            &self.secondary_virtual_est,
            d.q,
            d.k,
        )?;
        let l = self.secondary_physical.tap_len();
        for (name, b) in [
            ("secondary_physical_est", &self.secondary_physical_est),
            ("secondary_virtual", &self.secondary_virtual),
            ("secondary_virtual_est", &self.secondary_virtual_est),
        ] {
            if b.tap_len() != l {
                return Err(Error::config(format!(
                    "{name} has {} taps, expected {l}",
                    b.tap_len()
                )));
            }
        }
        if self.primary_physical.tap_len() != self.primary_virtual.tap_len() {
            return Err(Error::config(
                "physical and virtual primary paths differ in length",
            ));
        }
        Ok(())
    }
}

/// Generates a full plant for `dims`. Pure function of `(dims, cfg)`.
pub fn synth_pathset(dims: SystemDims, cfg: &PlantConfig) -> Result<PathSet> {
    dims.validate()?;
    let (lo, hi) = cfg.band;
    let fs = cfg.sample_rate;
    let l = cfg.secondary_taps;
    let seed = cfg.seed;
    let bank = |tag: &str, rows: usize, cols: usize, taps: usize, gain: f64| {
        let mut filters = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let s = derive_seed(seed, tag, (r * cols + c) as u64);
                let f = design_bandpass_fir(lo, hi, fs, taps, s)?;
                let taps = f.into_taps().into_iter().map(|t| gain * t).collect();
                filters.push(FirFilter::new(taps)?);
            }
        }
        FilterBank::from_filters(rows, cols, filters)
    };

    let secondary_virtual = bank("secondary_virtual", dims.q, dims.k, l, 1.0)?;
    let secondary_physical = bank("secondary_physical", dims.m, dims.k, l, 1.0)?;

    let (primary_virtual, primary_physical) = match cfg.model {
        PrimaryModel::Independent => (
            bank("primary_virtual", dims.q, dims.j, cfg.primary_taps, 1.0)?,
            bank(
                "primary_physical",
                dims.m,
                dims.j,
                cfg.primary_taps,
                cfg.physical_primary_gain,
            )?,
        ),
        PrimaryModel::Coherent => {
            if cfg.primary_taps < l + 7 {
                return Err(Error::config(format!(
                    "coherent plant needs primary_taps >= secondary_taps + 7 ({}), got {}",
                    l + 7,
                    cfg.primary_taps
                )));
            }
            let g_len = cfg.primary_taps - l + 1;
            let g_virtual = bank("field_virtual", dims.k, dims.j, g_len, 1.0)?;
            let g_physical = bank(
                "field_physical",
                dims.k,
                dims.j,
                g_len,
                cfg.physical_primary_gain,
            )?;
            (
                compose(&secondary_virtual, &g_virtual)?,
                compose(&secondary_physical, &g_physical)?,
            )
        }
    };

    let perturb = |tag: &str, truth: &FilterBank| -> Result<FilterBank> {
        match cfg.estimate_perturbation_db {
            None | Some(0.0) => Ok(truth.clone()),
            Some(db) => {
                let mut r = rng(derive_seed(seed, tag, 0));
                let mut out = truth.clone();
                for row in 0..truth.rows() {
                    for col in 0..truth.cols() {
                        for t in out.get_mut(row, col).taps_mut() {
                            let g: f64 = r.sample(StandardNormal);
                            *t *= 10f64.powf(db * g / 20.0);
                        }
                    }
                }
                Ok(out)
            }
        }
    };

    let paths = PathSet {
        dims,
        secondary_physical_est: perturb("estimate_physical", &secondary_physical)?,
        secondary_virtual_est: perturb("estimate_virtual", &secondary_virtual)?,
        primary_physical,
        primary_virtual,
        secondary_physical,
        secondary_virtual,
    };
    paths.validate()?;
    Ok(paths)
}

/// `(A ∘ B)[r][c] = Σ_i A[r][i] * B[i][c]` with `*` linear convolution.
fn compose(a: &FilterBank, b: &FilterBank) -> Result<FilterBank> {
    assert_eq!(a.cols(), b.rows());
    let len = a.tap_len() + b.tap_len() - 1;
    FilterBank::from_fn(a.rows(), b.cols(), |r, c| {
        let mut acc = vec![0.0; len];
        for i in 0..a.cols() {
            let conv = a.get(r, i).convolve(b.get(i, c));
            for (dst, v) in acc.iter_mut().zip(conv.taps()) {
                *dst += v;
            }
        }
        FirFilter::new(acc).expect("composition of finite filters is finite")
    })
}
