//! Sample-by-sample adaptive updates: the adjoint (filtered-error) LMS, the
//! filtered-reference LMS baseline and the auxiliary-filter LMS.
//!
//! Sign convention: the plant superposes anti-noise onto the disturbance,
//! `e(n) = d(n) + Σ_k (s * y_k)(n)`, so both control updates subtract
//! `μ · reference · error`. The auxiliary filter is an ordinary LMS
//! identifier and adds its correction.

use serde::{Deserialize, Serialize};

use crate::dsp::{axpy, convolve_stream, dot, FilterBank, TapBuffer};
use crate::error::{Error, NonFinite, Result};

/// Channel counts: J references, K secondary sources, M physical and Q
/// virtual error sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub j: usize,
    pub k: usize,
    pub m: usize,
    pub q: usize,
}

impl SystemDims {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.k == 0 || self.m == 0 || self.q == 0 {
            return Err(Error::config(format!(
                "all channel counts must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// μ1 (tuning controller), μ2 (auxiliary filter), μ3 (control stage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu1", self.mu1), ("mu2", self.mu2), ("mu3", self.mu3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for StepSizes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mu1={:e} mu2={:e} mu3={:e}",
            self.mu1, self.mu2, self.mu3
        )
    }
}

/// Control step size from a pre-run power estimate:
/// `mu_scale / (J · N_x · P_x · ‖Ŝ‖²)` with `‖Ŝ‖²` the summed squared taps of
/// the estimated secondary-path bank the update filters through. The
/// denominator is the trace of the filtered-reference correlation.
pub fn control_step_size(
    mu_scale: f64,
    j: usize,
    n_x: usize,
    ref_power: f64,
    estimate: &FilterBank,
) -> f64 {
    mu_scale / (j as f64 * n_x as f64 * ref_power * estimate.frobenius_sq())
}

/// Auxiliary step size, normalised by the trace of the stacked input
/// correlation: `mu_scale / (J · N_h · P_x)`.
pub fn aux_step_size(mu_scale: f64, j: usize, n_h: usize, ref_power: f64) -> f64 {
    mu_scale / (j as f64 * n_h as f64 * ref_power)
}

/// Control filters W (K×J, `N_x` taps) with their reference and error history.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub w: FilterBank,
    refs: Vec<TapBuffer>,
    errors: Vec<TapBuffer>,
    path_len: usize,
}

impl ControlState {
    /// Zero-initialised controller for `k` sources, `j` references,
    /// `n_err` error channels and secondary-path estimates of `path_len` taps.
    pub fn new(k: usize, j: usize, n_x: usize, path_len: usize, n_err: usize) -> Result<Self> {
        if k == 0 || j == 0 || n_x == 0 || path_len == 0 || n_err == 0 {
            return Err(Error::config(
                "controller dimensions and lengths must be >= 1",
            ));
        }
        Ok(Self {
            w: FilterBank::zeros(k, j, n_x),
            refs: (0..j)
                .map(|_| TapBuffer::new(n_x + path_len - 1))
                .collect::<Result<_>>()?,
            errors: (0..n_err)
                .map(|_| TapBuffer::new(path_len))
                .collect::<Result<_>>()?,
            path_len,
        })
    }

    pub fn with_filters(mut self, w: FilterBank) -> Result<Self> {
        if !w.same_shape(&self.w) {
            return Err(Error::config("control filter bank shape mismatch"));
        }
        self.w = w;
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.w.tap_len()
    }

    pub fn path_len(&self) -> usize {
        self.path_len
    }

    pub fn error_channels(&self) -> usize {
        self.errors.len()
    }

    pub fn reference(&self, j: usize) -> &TapBuffer {
        &self.refs[j]
    }

    pub fn error_window(&self, ch: usize) -> &TapBuffer {
        &self.errors[ch]
    }

    pub fn push_references(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.refs.len());
        for (buf, &v) in self.refs.iter_mut().zip(x) {
            buf.push(v);
        }
    }

    pub fn push_errors(&mut self, e: &[f64]) {
        assert_eq!(e.len(), self.errors.len());
        for (buf, &v) in self.errors.iter_mut().zip(e) {
            buf.push(v);
        }
    }

    /// `Σ_ch e'_{k,ch}(n)` for every source k: each error window run through
    /// the time-reversed estimate `paths[ch][k]`.
    pub fn filtered_error_sums(&self, paths: &FilterBank) -> Vec<f64> {
        assert_eq!(paths.rows(), self.errors.len());
        assert_eq!(paths.cols(), self.w.rows());
        assert_eq!(paths.tap_len(), self.path_len);
        (0..self.w.rows())
            .map(|k| {
                self.errors
                    .iter()
                    .enumerate()
                    .map(|(ch, buf)| buf.time_reversed_output(paths.get(ch, k)))
                    .sum()
            })
            .collect()
    }
}

/// `y_k(n) = Σ_j w_kjᵀ x_j(n)`.
pub fn control_output(state: &ControlState) -> Vec<f64> {
    (0..state.w.rows())
        .map(|k| {
            (0..state.w.cols())
                .map(|j| convolve_stream(&state.refs[j], state.w.get(k, j)))
                .sum()
        })
        .collect()
}

/// Adjoint LMS update: `w_kj ← w_kj − μ · x_j(n−L+1) · sums[k]`.
pub fn mcalms_step(
    state: &mut ControlState,
    filtered_error_sums: &[f64],
    mu: f64,
) -> Result<(), NonFinite> {
    assert_eq!(filtered_error_sums.len(), state.w.rows());
    if filtered_error_sums.iter().any(|v| !v.is_finite()) {
        return Err(NonFinite("filtered error"));
    }
    let n_x = state.w.tap_len();
    let delay = state.path_len - 1;
    for (k, &e) in filtered_error_sums.iter().enumerate() {
        let scale = -mu * e;
        for j in 0..state.w.cols() {
            let x = state.refs[j].lags(delay, n_x);
            axpy(scale, x, state.w.get_mut(k, j).taps_mut());
        }
    }
    Ok(())
}

/// Filtered references `x'_{j,k,ch}(n) = (ŝ_{ch,k} * x_j)(n)`, one
/// `N_x`-sample history per (error channel, source, reference) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredReferences {
    bufs: Vec<TapBuffer>,
    n_err: usize,
    k: usize,
    j: usize,
}

impl FilteredReferences {
    pub fn new(n_err: usize, k: usize, j: usize, n_x: usize) -> Result<Self> {
        Ok(Self {
            bufs: (0..n_err * k * j)
                .map(|_| TapBuffer::new(n_x))
                .collect::<Result<_>>()?,
            n_err,
            k,
            j,
        })
    }

    fn index(&self, ch: usize, k: usize, j: usize) -> usize {
        (ch * self.k + k) * self.j + j
    }

    pub fn get(&self, ch: usize, k: usize, j: usize) -> &TapBuffer {
        &self.bufs[self.index(ch, k, j)]
    }

    /// Filters the newest reference samples through every estimate and
    /// pushes one new sample into each history.
    pub fn advance(&mut self, state: &ControlState, paths: &FilterBank) {
        assert_eq!(paths.rows(), self.n_err);
        assert_eq!(paths.cols(), self.k);
        for ch in 0..self.n_err {
            for k in 0..self.k {
                let s = paths.get(ch, k);
                for j in 0..self.j {
                    let v = convolve_stream(state.reference(j), s);
                    let idx = self.index(ch, k, j);
                    self.bufs[idx].push(v);
                }
            }
        }
    }
}

/// Filtered-reference LMS update: `w_kj ← w_kj − μ Σ_ch e_ch(n) x'_{j,k,ch}(n)`.
/// The filtered-reference histories must already include sample n.
pub fn mcfxlms_step(
    state: &mut ControlState,
    fx: &FilteredReferences,
    errors: &[f64],
    mu: f64,
) -> Result<(), NonFinite> {
    assert_eq!(errors.len(), fx.n_err);
    if errors.iter().any(|v| !v.is_finite()) {
        return Err(NonFinite("error signal"));
    }
    let n_x = state.w.tap_len();
    for (ch, &e) in errors.iter().enumerate() {
        let scale = -mu * e;
        for k in 0..fx.k {
            for j in 0..fx.j {
                axpy(
                    scale,
                    fx.get(ch, k, j).recent(n_x),
                    state.w.get_mut(k, j).taps_mut(),
                );
            }
        }
    }
    Ok(())
}

/// Auxiliary filters H (M×J, `N_h` taps) and their reference histories.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub h: FilterBank,
    refs: Vec<TapBuffer>,
}

impl AuxState {
    pub fn new(m: usize, j: usize, n_h: usize) -> Result<Self> {
        if m == 0 || j == 0 || n_h == 0 {
            return Err(Error::config("auxiliary filter dimensions must be >= 1"));
        }
        Ok(Self {
            h: FilterBank::zeros(m, j, n_h),
            refs: (0..j).map(|_| TapBuffer::new(n_h)).collect::<Result<_>>()?,
        })
    }

    pub fn with_filters(mut self, h: FilterBank) -> Result<Self> {
        if !h.same_shape(&self.h) {
            return Err(Error::config("auxiliary filter bank shape mismatch"));
        }
        self.h = h;
        Ok(self)
    }

    pub fn push_references(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.refs.len());
        for (buf, &v) in self.refs.iter_mut().zip(x) {
            buf.push(v);
        }
    }

    pub fn reference(&self, j: usize) -> &TapBuffer {
        &self.refs[j]
    }

    /// `Σ_j h_mjᵀ x̄_j(n)` for every physical sensor m.
    pub fn prediction(&self) -> Vec<f64> {
        let n_h = self.h.tap_len();
        (0..self.h.rows())
            .map(|m| {
                (0..self.h.cols())
                    .map(|j| dot(self.h.get(m, j).taps(), self.refs[j].recent(n_h)))
                    .sum()
            })
            .collect()
    }
}

/// Auxiliary LMS: inner errors `e_h = e_p − Σ_j h_mjᵀ x̄_j` are formed first,
/// then `h_mj ← h_mj + μ e_h,m x̄_j`. Returns the inner errors.
pub fn aux_lms_step(
    state: &mut AuxState,
    physical_errors: &[f64],
    mu: f64,
) -> Result<Vec<f64>, NonFinite> {
    let inner = control_stage_inner_error(physical_errors, state);
    if inner.iter().any(|v| !v.is_finite()) {
        return Err(NonFinite("inner error"));
    }
    let n_h = state.h.tap_len();
    for (m, &e) in inner.iter().enumerate() {
        for j in 0..state.h.cols() {
            axpy(
                mu * e,
                state.refs[j].recent(n_h),
                state.h.get_mut(m, j).taps_mut(),
            );
        }
    }
    Ok(inner)
}

/// `e_h,m(n) = e_p,m(n) − Σ_j h_o,mjᵀ x̄_j(n)` with the filters held fixed.
pub fn control_stage_inner_error(physical_errors: &[f64], aux: &AuxState) -> Vec<f64> {
    assert_eq!(physical_errors.len(), aux.h.rows());
    physical_errors
        .iter()
        .zip(aux.prediction())
        .map(|(e, p)| e - p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FirFilter;

    fn single(n_x: usize, l: usize) -> ControlState {
        ControlState::new(1, 1, n_x, l, 1).unwrap()
    }

    #[test]
    fn zero_filters_give_zero_output() {
        let mut s = ControlState::new(2, 3, 4, 2, 1).unwrap();
        s.push_references(&[1.0, -2.0, 3.0]);
        assert_eq!(control_output(&s), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_controller_passes_reference() {
        let mut s = single(1, 1);
        *s.w.get_mut(0, 0) = FirFilter::new(vec![1.0]).unwrap();
        for x in [0.3, -1.2, 4.0] {
            s.push_references(&[x]);
            assert_eq!(control_output(&s), vec![x]);
        }
    }

    #[test]
    fn two_reference_sum_by_hand() {
        let mut s = ControlState::new(1, 2, 1, 1, 1).unwrap();
        *s.w.get_mut(0, 0) = FirFilter::new(vec![1.0]).unwrap();
        *s.w.get_mut(0, 1) = FirFilter::new(vec![2.0]).unwrap();
        s.push_references(&[3.0, 5.0]);
        assert_eq!(control_output(&s), vec![13.0]);
    }

    #[test]
    fn mcalms_zero_error_or_zero_step_leaves_w() {
        let mut s = ControlState::new(2, 2, 3, 2, 1).unwrap();
        s.push_references(&[1.0, 2.0]);
        s.push_references(&[3.0, 4.0]);
        let before = s.w.clone();
        mcalms_step(&mut s, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(s.w, before);
        mcalms_step(&mut s, &[1.0, -3.0], 0.0).unwrap();
        assert_eq!(s.w, before);
    }

    #[test]
    fn mcalms_scalar_substitution() {
        let mut s = single(1, 1);
        s.push_references(&[2.0]);
        mcalms_step(&mut s, &[3.0], 0.1).unwrap();
        assert!((s.w.get(0, 0).taps()[0] - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn mcalms_uses_reference_delayed_by_path_length() {
        let mut s = single(2, 3);
        for x in [1.0, 2.0, 3.0, 4.0] {
            s.push_references(&[x]);
        }
        mcalms_step(&mut s, &[1.0], 1.0).unwrap();
        // x(n-2) = 2, x(n-3) = 1
        assert_eq!(s.w.get(0, 0).taps(), &[-2.0, -1.0]);
    }

    #[test]
    fn mcalms_rejects_non_finite() {
        let mut s = single(1, 1);
        assert_eq!(
            mcalms_step(&mut s, &[f64::NAN], 0.1),
            Err(NonFinite("filtered error"))
        );
    }

    #[test]
    fn mcfxlms_zero_error_leaves_w() {
        let mut s = ControlState::new(2, 2, 3, 2, 2).unwrap();
        let mut fx = FilteredReferences::new(2, 2, 2, 3).unwrap();
        let paths =
            FilterBank::from_fn(2, 2, |_, _| FirFilter::new(vec![0.7, 0.2]).unwrap()).unwrap();
        s.push_references(&[1.0, 2.0]);
        fx.advance(&s, &paths);
        let before = s.w.clone();
        mcfxlms_step(&mut s, &fx, &[0.0, 0.0], 0.3).unwrap();
        assert_eq!(s.w, before);
    }

    #[test]
    fn mcfxlms_matches_mcalms_for_unit_path() {
        let paths = FilterBank::from_fn(1, 1, |_, _| FirFilter::impulse(1, 0)).unwrap();
        let mut a = single(3, 1);
        let mut b = single(3, 1);
        let mut fx = FilteredReferences::new(1, 1, 1, 3).unwrap();
        for (x, e) in [(1.0, 0.5), (-2.0, 0.25), (0.5, -1.0)] {
            a.push_references(&[x]);
            b.push_references(&[x]);
            a.push_errors(&[e]);
            fx.advance(&b, &paths);
            let sums = a.filtered_error_sums(&paths);
            mcalms_step(&mut a, &sums, 0.2).unwrap();
            mcfxlms_step(&mut b, &fx, &[e], 0.2).unwrap();
            assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn aux_fixed_point_and_zero_step() {
        let mut aux = AuxState::new(1, 1, 2).unwrap();
        *aux.h.get_mut(0, 0) = FirFilter::new(vec![0.5, 0.25]).unwrap();
        aux.push_references(&[4.0]);
        aux.push_references(&[2.0]);
        let predicted = aux.prediction()[0]; // 0.5*2 + 0.25*4
        let before = aux.h.clone();
        let inner = aux_lms_step(&mut aux, &[predicted], 0.3).unwrap();
        assert_eq!(inner, vec![0.0]);
        assert_eq!(aux.h, before);
        let inner = aux_lms_step(&mut aux, &[5.0], 0.0).unwrap();
        assert_eq!(inner, vec![5.0 - predicted]);
        assert_eq!(aux.h, before);
    }

    #[test]
    fn aux_scalar_substitution() {
        let mu2 = 0.05;
        let mut aux = AuxState::new(1, 1, 1).unwrap();
        aux.push_references(&[2.0]);
        let inner = aux_lms_step(&mut aux, &[4.0], mu2).unwrap();
        assert_eq!(inner, vec![4.0]);
        assert!((aux.h.get(0, 0).taps()[0] - 8.0 * mu2).abs() < 1e-15);
    }

    #[test]
    fn inner_error_cases() {
        let mut aux = AuxState::new(1, 1, 1).unwrap();
        aux.push_references(&[1.5]);
        assert_eq!(control_stage_inner_error(&[5.0], &aux), vec![5.0]);
        *aux.h.get_mut(0, 0) = FirFilter::new(vec![2.0]).unwrap();
        assert_eq!(control_stage_inner_error(&[5.0], &aux), vec![2.0]);
        assert_eq!(control_stage_inner_error(&[3.0], &aux), vec![0.0]);
    }

    #[test]
    fn one_step_reduces_scalar_error() {
        // positive pure-gain paths: d = 0.8 x, s = 0.5, e = d + s y
        let (p, s_gain, mu) = (0.8, 0.5, 0.05);
        let path = FilterBank::from_fn(1, 1, |_, _| FirFilter::new(vec![s_gain]).unwrap()).unwrap();
        let mut st = single(1, 1);
        *st.w.get_mut(0, 0) = FirFilter::new(vec![0.3]).unwrap();
        let x = 1.7;
        st.push_references(&[x]);
        let e_before = p * x + s_gain * control_output(&st)[0];
        st.push_errors(&[e_before]);
        let sums = st.filtered_error_sums(&path);
        mcalms_step(&mut st, &sums, mu).unwrap();
        let e_after = p * x + s_gain * control_output(&st)[0];
        assert!(e_after.abs() <= e_before.abs(), "{e_before} -> {e_after}");
    }

    #[test]
    fn dims_and_steps_validate() {
        assert!(SystemDims {
            j: 0,
            k: 1,
            m: 1,
            q: 1
        }
        .validate()
        .is_err());
        assert!(StepSizes {
            mu1: 1.0,
            mu2: 0.0,
            mu3: 1.0
        }
        .validate()
        .is_err());
        assert!(StepSizes {
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0
        }
        .validate()
        .is_ok());
    }
}
