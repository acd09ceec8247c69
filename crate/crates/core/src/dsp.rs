//! FIR building blocks: filters, tapped delay lines and filter banks.
//!
//! Tap vectors are indexed by lag (`taps[0]` multiplies the newest sample),
//! and [`TapBuffer`] hands out its history newest-first, so the forward
//! filter is a plain dot product. The time-reversed kernel used by the
//! adjoint update takes its error window oldest-first; the one place that
//! converts between the two orders is [`TapBuffer::time_reversed_output`].

use crate::error::{Error, Result};

/// A finite impulse response with at least one tap.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::config("FIR filter needs at least one tap"));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(Error::config(format!("FIR tap {i} is not finite")));
        }
        Ok(Self { taps })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "FIR filter needs at least one tap");
        Self {
            taps: vec![0.0; len],
        }
    }

    /// Unit impulse at lag `at`.
    pub fn impulse(len: usize, at: usize) -> Self {
        let mut f = Self::zeros(len);
        f.taps[at] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    pub fn into_taps(self) -> Vec<f64> {
        self.taps
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.taps.iter().all(|t| t.is_finite())
    }

    /// Full linear convolution with another filter.
    pub fn convolve(&self, other: &FirFilter) -> FirFilter {
        let mut out = vec![0.0; self.len() + other.len() - 1];
        for (i, a) in self.taps.iter().enumerate() {
            for (j, b) in other.taps.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        FirFilter { taps: out }
    }

    /// Magnitude response in dB on `n_points` frequencies evenly spaced from
    /// DC to Nyquist inclusive. Zero magnitude is floored at [`DB_FLOOR`].
    pub fn magnitude_response_db(&self, n_points: usize) -> Vec<f64> {
        let n_points = n_points.max(2);
        (0..n_points)
            .map(|i| {
                let omega = std::f64::consts::PI * i as f64 / (n_points - 1) as f64;
                amplitude_to_db(self.magnitude_at(omega))
            })
            .collect()
    }

    /// Magnitude in dB at `hz` for a filter running at `sample_rate`.
    pub fn gain_db_at(&self, hz: f64, sample_rate: f64) -> f64 {
        amplitude_to_db(self.magnitude_at(2.0 * std::f64::consts::PI * hz / sample_rate))
    }

    /// Mean dB magnitude over `[lo, hi]` Hz, sampled every hertz.
    pub fn band_mean_db(&self, lo: f64, hi: f64, sample_rate: f64) -> f64 {
        let grid = band_grid(lo, hi);
        grid.iter()
            .map(|&f| self.gain_db_at(f, sample_rate))
            .sum::<f64>()
            / grid.len() as f64
    }

    /// Mean absolute dB difference between two responses over `[lo, hi]` Hz.
    pub fn mean_abs_diff_db(&self, other: &FirFilter, lo: f64, hi: f64, sample_rate: f64) -> f64 {
        let grid = band_grid(lo, hi);
        grid.iter()
            .map(|&f| (self.gain_db_at(f, sample_rate) - other.gain_db_at(f, sample_rate)).abs())
            .sum::<f64>()
            / grid.len() as f64
    }

    /// |H(e^{jω})| at normalised angular frequency `omega` (rad/sample).
    pub fn magnitude_at(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, t) in self.taps.iter().enumerate() {
            let phase = omega * n as f64;
            re += t * phase.cos();
            im -= t * phase.sin();
        }
        re.hypot(im)
    }
}

fn band_grid(lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo <= hi, "band [{lo}, {hi}] is reversed");
    let steps = (hi - lo).floor() as usize;
    (0..=steps).map(|i| lo + i as f64).collect()
}

/// Floor used wherever a magnitude of zero would otherwise give −∞ dB.
pub const DB_FLOOR: f64 = -120.0;

pub fn amplitude_to_db(a: f64) -> f64 {
    if a > 0.0 {
        (20.0 * a.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Sliding window over the most recent samples of one signal.
///
/// Backed by a mirrored ring of twice the capacity so every lag range is a
/// contiguous newest-first slice. Samples before the first push read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TapBuffer {
    data: Vec<f64>,
    head: usize,
    capacity: usize,
    filled: usize,
}

impl TapBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("tap buffer capacity must be positive"));
        }
        Ok(Self {
            data: vec![0.0; 2 * capacity],
            head: 0,
            capacity,
            filled: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of real (non pre-stream) samples currently held.
    pub fn fill_count(&self) -> usize {
        self.filled
    }

    pub fn push(&mut self, sample: f64) {
        self.head = if self.head == 0 {
            self.capacity - 1
        } else {
            self.head - 1
        };
        self.data[self.head] = sample;
        self.data[self.head + self.capacity] = sample;
        self.filled = (self.filled + 1).min(self.capacity);
    }

    /// Sample `lag` steps in the past; `lag == 0` is the newest.
    pub fn get(&self, lag: usize) -> f64 {
        assert!(
            lag < self.capacity,
            "lag {lag} beyond capacity {}",
            self.capacity
        );
        self.data[self.head + lag]
    }

    /// Newest-first slice `[u(n), u(n-1), ..., u(n-len+1)]`.
    pub fn recent(&self, len: usize) -> &[f64] {
        self.lags(0, len)
    }

    /// Newest-first slice starting `delay` samples back.
    pub fn lags(&self, delay: usize, len: usize) -> &[f64] {
        assert!(
            delay + len <= self.capacity,
            "requested lags {delay}..{} exceed capacity {}",
            delay + len,
            self.capacity
        );
        &self.data[self.head + delay..self.head + delay + len]
    }

    /// Runs the time-reversed filter over the newest `path.len()` samples,
    /// treating them as the oldest-first error window of
    /// [`time_reversed_filter`].
    pub fn time_reversed_output(&self, path: &FirFilter) -> f64 {
        let window = self.recent(path.len());
        // window[0] is e(n); oldest-first index i maps to window[L-1-i]
        path.taps()
            .iter()
            .zip(window.iter().rev())
            .map(|(s, e)| s * e)
            .sum()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.head = 0;
        self.filled = 0;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Streaming FIR output: dot product of the taps with lags `0..len`.
pub fn convolve_stream(buffer: &TapBuffer, filter: &FirFilter) -> f64 {
    dot(filter.taps(), buffer.recent(filter.len()))
}

/// `[u(n-delay), ..., u(n-delay-n_taps+1)]`.
pub fn delayed_reference(buffer: &TapBuffer, delay: usize, n_taps: usize) -> Vec<f64> {
    buffer.lags(delay, n_taps).to_vec()
}

/// Σ_i window[i]·taps[i] where `window` is ordered oldest-first,
/// i.e. `[e(n-L+1), ..., e(n)]`.
pub fn time_reversed_filter(error_window: &[f64], path: &FirFilter) -> f64 {
    assert_eq!(
        error_window.len(),
        path.len(),
        "error window length must equal the path length"
    );
    dot(error_window, path.taps())
}

/// Checks that a buffer can serve a filter; used when wiring up state.
pub fn require_capacity(buffer: &TapBuffer, needed: usize, what: &str) -> Result<()> {
    if buffer.capacity() < needed {
        return Err(Error::config(format!(
            "{what}: tap buffer holds {} samples but {needed} are needed",
            buffer.capacity()
        )));
    }
    Ok(())
}

/// Grid of equally long FIR filters indexed `(destination, source)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    rows: usize,
    cols: usize,
    taps: usize,
    filters: Vec<FirFilter>,
}

impl FilterBank {
    pub fn zeros(rows: usize, cols: usize, taps: usize) -> Self {
        assert!(rows >= 1 && cols >= 1 && taps >= 1);
        Self {
            rows,
            cols,
            taps,
            filters: vec![FirFilter::zeros(taps); rows * cols],
        }
    }

    /// Builds a bank from filters in row-major order.
    pub fn from_filters(rows: usize, cols: usize, filters: Vec<FirFilter>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("filter bank dimensions must be positive"));
        }
        if filters.len() != rows * cols {
            return Err(Error::config(format!(
                "filter bank {rows}x{cols} needs {} filters, got {}",
                rows * cols,
                filters.len()
            )));
        }
        let taps = filters[0].len();
        if let Some(i) = filters.iter().position(|f| f.len() != taps) {
            return Err(Error::config(format!(
                "filter ({}, {}) has {} taps, expected {taps}",
                i / cols,
                i % cols,
                filters[i].len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            taps,
            filters,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> FirFilter,
    ) -> Result<Self> {
        let mut filters = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                filters.push(f(r, c));
            }
        }
        Self::from_filters(rows, cols, filters)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tap_len(&self) -> usize {
        self.taps
    }

    pub fn get(&self, row: usize, col: usize) -> &FirFilter {
        assert!(row < self.rows && col < self.cols);
        &self.filters[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut FirFilter {
        assert!(row < self.rows && col < self.cols);
        &mut self.filters[row * self.cols + col]
    }

    pub fn filters(&self) -> &[FirFilter] {
        &self.filters
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &FirFilter)> {
        let cols = self.cols;
        self.filters
            .iter()
            .enumerate()
            .map(move |(i, f)| ((i / cols, i % cols), f))
    }

    /// Sum of squared taps over every filter.
    pub fn frobenius_sq(&self) -> f64 {
        self.filters.iter().map(FirFilter::energy).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.filters
            .iter()
            .flat_map(|f| f.taps().iter())
            .fold(0.0, |m, t| m.max(t.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.filters.iter().all(FirFilter::is_finite)
    }

    pub fn same_shape(&self, other: &FilterBank) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.taps == other.taps
    }
}
