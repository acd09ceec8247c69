//! Two-stage virtual-sensing workflow.
//!
//! Tuning: controllers are adapted against the virtual sensors, then frozen
//! while auxiliary filters learn what the physical sensors hear with that
//! controller running. Control: the virtual sensors are gone; controllers
//! start from zero and adapt on the physical error minus the auxiliary
//! prediction. Virtual errors in the control stage are recorded for
//! evaluation only and never reach the update.

use serde::{Deserialize, Serialize};

use crate::acoustics::{add_measurement_noise, generate_noise, mean_power, NoiseSpec, PathSet};
use crate::adaptive::{
    aux_lms_step, aux_step_size, control_output, control_stage_inner_error, control_step_size,
    mcalms_step, mcfxlms_step, AuxState, ControlState, FilteredReferences, StepSizes, SystemDims,
};
use crate::complexity::{Kernel, OpTally};
use crate::dsp::{convolve_stream, FilterBank, TapBuffer};
use crate::error::{Error, NonFinite, Result};
use crate::seed::derive_seed;

/// Level reported when a window has no residual power at all.
pub const NR_CLAMP_DB: f64 = 80.0;
/// Fraction of the NR curve (from the end) whose median is the steady state.
pub const STEADY_STATE_FRACTION: f64 = 0.1;
/// Default control-stage knob for [`control_step_size`].
pub const DEFAULT_MU_SCALE: f64 = 0.05;
/// Default knob for [`aux_step_size`].
pub const DEFAULT_AUX_MU_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mcalms,
    Mcfxlms,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mcalms => "mcalms",
            Algorithm::Mcfxlms => "mcfxlms",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcalms" => Ok(Algorithm::Mcalms),
            "mcfxlms" => Ok(Algorithm::Mcfxlms),
            other => Err(format!(
                "unknown algorithm '{other}' (expected mcalms or mcfxlms)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TuningControllers,
    TuningAux,
    Control,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::TuningControllers => "tuning-controllers",
            Stage::TuningAux => "tuning-aux",
            Stage::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub dims: SystemDims,
    /// Control filter length N_x.
    pub n_x: usize,
    /// Auxiliary filter length N_h.
    pub n_h: usize,
    /// Secondary-path estimate length L.
    pub path_len: usize,
    /// μ̄ for the control updates (μ1, μ3).
    pub mu_scale: f64,
    /// μ̄ for the auxiliary LMS (μ2).
    pub aux_mu_scale: f64,
    /// Literal step sizes; when absent they come from the power heuristic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_sizes: Option<StepSizes>,
    pub n_samples: usize,
    pub tuning_noise: NoiseSpec,
    pub control_noise: NoiseSpec,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Moving-average window of the NR curve.
    pub nr_window: usize,
    /// Record virtual-sensor errors during the control stage.
    pub evaluate_virtual: bool,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.n_x == 0 || self.n_h == 0 || self.path_len == 0 {
            return Err(Error::config("filter lengths must be >= 1"));
        }
        if self.n_samples < self.n_x {
            return Err(Error::config(format!(
                "n_samples ({}) must be at least N_x ({})",
                self.n_samples, self.n_x
            )));
        }
        if self.nr_window == 0 {
            return Err(Error::config("NR window must be >= 1"));
        }
        for (name, v) in [
            ("mu_scale", self.mu_scale),
            ("aux_mu_scale", self.aux_mu_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = &self.step_sizes {
            s.validate()?;
        }
        self.tuning_noise.validate()?;
        self.control_noise.validate()?;
        Ok(())
    }

    fn check_plant(&self, plant: &PathSet) -> Result<()> {
        self.validate()?;
        plant.validate()?;
        if plant.dims != self.dims {
            return Err(Error::config(format!(
                "plant dims {:?} do not match config dims {:?}",
                plant.dims, self.dims
            )));
        }
        if plant.secondary_len() != self.path_len {
            return Err(Error::config(format!(
                "plant secondary paths have {} taps but path_len is {}",
                plant.secondary_len(),
                self.path_len
            )));
        }
        Ok(())
    }
}

/// Clean source signals and the noisy reference-sensor signals they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    pub sources: Vec<Vec<f64>>,
    pub references: Vec<Vec<f64>>,
}

impl Excitation {
    pub fn generate(cfg: &StageConfig, stage: Stage) -> Result<Self> {
        let (spec, tag) = match stage {
            Stage::TuningControllers | Stage::TuningAux => (&cfg.tuning_noise, "tuning"),
            Stage::Control => (&cfg.control_noise, "control"),
        };
        // both tuning stages see the same kind of noise but a fresh realisation
        let stage_index = match stage {
            Stage::TuningControllers => 0,
            Stage::TuningAux => 1,
            Stage::Control => 2,
        };
        let base = derive_seed(cfg.seed ^ spec.seed.rotate_left(29), tag, stage_index);
        let mut sources = Vec::with_capacity(cfg.dims.j);
        let mut references = Vec::with_capacity(cfg.dims.j);
        for j in 0..cfg.dims.j {
            let src_spec = NoiseSpec {
                seed: derive_seed(base, "source", j as u64),
                ..spec.clone()
            };
            let v = generate_noise(&src_spec, cfg.n_samples)?;
            let x = match spec.snr_db {
                Some(snr) => add_measurement_noise(&v, snr, derive_seed(base, "sensor", j as u64))?,
                None => v.clone(),
            };
            sources.push(v);
            references.push(x);
        }
        Ok(Self {
            sources,
            references,
        })
    }

    pub fn mean_reference_power(&self) -> f64 {
        self.references.iter().map(|x| mean_power(x)).sum::<f64>() / self.references.len() as f64
    }

    fn sample(&self, n: usize, v: &mut [f64], x: &mut [f64]) {
        for j in 0..self.sources.len() {
            v[j] = self.sources[j][n];
            x[j] = self.references[j][n];
        }
    }
}

/// Streaming acoustic plant: disturbances from the clean sources plus the
/// secondary sources' contribution, `e = d + Σ_k s_k * y_k`.
struct Plant<'a> {
    paths: &'a PathSet,
    sources: Vec<TapBuffer>,
    outputs: Vec<TapBuffer>,
}

impl<'a> Plant<'a> {
    fn new(paths: &'a PathSet) -> Result<Self> {
        let p_len = paths.primary_virtual.tap_len();
        let s_len = paths.secondary_len();
        Ok(Self {
            paths,
            sources: (0..paths.dims.j)
                .map(|_| TapBuffer::new(p_len))
                .collect::<Result<_>>()?,
            outputs: (0..paths.dims.k)
                .map(|_| TapBuffer::new(s_len))
                .collect::<Result<_>>()?,
        })
    }

    fn push_sources(&mut self, v: &[f64]) {
        for (b, &s) in self.sources.iter_mut().zip(v) {
            b.push(s);
        }
    }

    fn push_outputs(&mut self, y: &[f64]) {
        for (b, &s) in self.outputs.iter_mut().zip(y) {
            b.push(s);
        }
    }

    fn disturbance(&self, primary: &FilterBank, out: &mut [f64]) {
        for (r, d) in out.iter_mut().enumerate() {
            *d = (0..primary.cols())
                .map(|j| convolve_stream(&self.sources[j], primary.get(r, j)))
                .sum();
        }
    }

    fn errors(&self, secondary: &FilterBank, d: &[f64], out: &mut [f64]) {
        for (r, e) in out.iter_mut().enumerate() {
            *e = d[r]
                + (0..secondary.cols())
                    .map(|k| convolve_stream(&self.outputs[k], secondary.get(r, k)))
                    .sum::<f64>();
        }
    }

    fn virtual_sensors(&self, d: &mut [f64], e: &mut [f64]) {
        self.disturbance(&self.paths.primary_virtual, d);
        self.errors(&self.paths.secondary_virtual, d, e);
    }

    fn physical_sensors(&self, d: &mut [f64], e: &mut [f64]) {
        self.disturbance(&self.paths.primary_physical, d);
        self.errors(&self.paths.secondary_physical, d, e);
    }
}

/// Adaptive controller for either algorithm.
pub(crate) struct Controller {
    pub(crate) state: ControlState,
    filtered: Option<FilteredReferences>,
}

impl Controller {
    pub(crate) fn new(cfg: &StageConfig, algorithm: Algorithm, n_err: usize) -> Result<Self> {
        let d = cfg.dims;
        let state = ControlState::new(d.k, d.j, cfg.n_x, cfg.path_len, n_err)?;
        let filtered = match algorithm {
            Algorithm::Mcalms => None,
            Algorithm::Mcfxlms => Some(FilteredReferences::new(n_err, d.k, d.j, cfg.n_x)?),
        };
        Ok(Self { state, filtered })
    }

    pub(crate) fn output(&self, tally: &mut OpTally) -> Vec<f64> {
        let w = &self.state.w;
        tally.record(
            Kernel::ControlFiltering,
            w.rows() * w.cols() * w.tap_len(),
            w.rows() * (w.cols() * w.tap_len() - 1),
        );
        control_output(&self.state)
    }

    /// One update from the error signals sensed through `estimate`
    /// (error channels × K).
    pub(crate) fn adapt(
        &mut self,
        errors: &[f64],
        estimate: &FilterBank,
        mu: f64,
        tally: &mut OpTally,
    ) -> Result<(), NonFinite> {
        let (k, j, n_x) = (
            self.state.w.rows(),
            self.state.w.cols(),
            self.state.w.tap_len(),
        );
        let n_err = errors.len();
        let l = estimate.tap_len();
        match &mut self.filtered {
            None => {
                self.state.push_errors(errors);
                tally.dots(Kernel::ErrorFiltering, k * n_err, l);
                tally.record(Kernel::ErrorSummation, 0, k * (n_err - 1));
                let sums = self.state.filtered_error_sums(estimate);
                tally.record(Kernel::WeightUpdate, k + k * j * n_x, k * j * n_x);
                mcalms_step(&mut self.state, &sums, mu)
            }
            Some(fx) => {
                fx.advance(&self.state, estimate);
                tally.dots(Kernel::ReferenceFiltering, n_err * k * j, l);
                tally.record(
                    Kernel::WeightUpdate,
                    n_err + n_err * k * j * n_x,
                    n_err * k * j * n_x,
                );
                mcfxlms_step(&mut self.state, fx, errors, mu)
            }
        }
    }
}

/// Per-sample signals of one stage run plus the filters it ended with.
///
/// Series are indexed `[channel][sample]`; a series that the stage does not
/// produce is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub stage: Stage,
    pub algorithm: Algorithm,
    /// Step size used by this stage's adaptive update.
    pub mu: f64,
    pub n_samples: usize,
    pub nr_window: usize,
    pub d_v: Vec<Vec<f64>>,
    pub e_v: Vec<Vec<f64>>,
    pub d_p: Vec<Vec<f64>>,
    pub e_p: Vec<Vec<f64>>,
    pub e_h: Vec<Vec<f64>>,
    pub final_w: FilterBank,
    pub final_h: Option<FilterBank>,
}

impl RunTrace {
    fn new(stage: Stage, cfg: &StageConfig, algorithm: Algorithm, mu: f64, w: FilterBank) -> Self {
        Self {
            stage,
            algorithm,
            mu,
            n_samples: cfg.n_samples,
            nr_window: cfg.nr_window,
            d_v: Vec::new(),
            e_v: Vec::new(),
            d_p: Vec::new(),
            e_p: Vec::new(),
            e_h: Vec::new(),
            final_w: w,
            final_h: None,
        }
    }

    /// NR curve for every virtual sensor (empty if not recorded).
    pub fn virtual_nr(&self) -> Vec<NrCurve> {
        self.d_v
            .iter()
            .zip(&self.e_v)
            .map(|(d, e)| noise_reduction_db(d, e, self.nr_window))
            .collect::<Result<_>>()
            .unwrap_or_default()
    }

    /// Steady-state virtual NR per channel.
    pub fn steady_state_virtual_nr(&self) -> Vec<f64> {
        self.virtual_nr()
            .iter()
            .map(NrCurve::steady_state)
            .collect()
    }

    /// Mean |e_h| over the last 10% of samples divided by its mean over the
    /// first 10%, per physical channel.
    pub fn inner_error_decay(&self) -> Vec<f64> {
        self.e_h
            .iter()
            .map(|e| {
                let k = ((e.len() as f64 * STEADY_STATE_FRACTION).ceil() as usize).max(1);
                let mean_abs = |s: &[f64]| s.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64;
                mean_abs(&e[e.len() - k..]) / mean_abs(&e[..k])
            })
            .collect()
    }

    /// NR of the inner error relative to the physical error (auxiliary stage).
    pub fn inner_nr(&self) -> Vec<NrCurve> {
        self.e_p
            .iter()
            .zip(&self.e_h)
            .map(|(d, e)| noise_reduction_db(d, e, self.nr_window))
            .collect::<Result<_>>()
            .unwrap_or_default()
    }
}

fn series(channels: usize, n: usize) -> Vec<Vec<f64>> {
    (0..channels).map(|_| Vec::with_capacity(n)).collect()
}

fn push_all(dst: &mut [Vec<f64>], src: &[f64]) {
    for (s, &v) in dst.iter_mut().zip(src) {
        s.push(v);
    }
}

fn diverged(stage: Stage, n: usize, err: NonFinite, mu: f64) -> Error {
    Error::Divergence {
        stage: stage.name().to_string(),
        sample: n,
        detail: err.to_string(),
        mu: format!("{mu:e}"),
    }
}

/// Trains the controllers against the virtual sensors.
pub fn run_tuning_controllers(
    cfg: &StageConfig,
    plant: &PathSet,
) -> Result<(FilterBank, RunTrace)> {
    cfg.check_plant(plant)?;
    let stage = Stage::TuningControllers;
    let exc = Excitation::generate(cfg, stage)?;
    let est = &plant.secondary_virtual_est;
    let mu = match cfg.step_sizes {
        Some(s) => s.mu1,
        None => control_step_size(
            cfg.mu_scale,
            cfg.dims.j,
            cfg.n_x,
            exc.mean_reference_power(),
            est,
        ),
    };
    let d = cfg.dims;
    let n = cfg.n_samples;
    let mut ctrl = Controller::new(cfg, cfg.algorithm, d.q)?;
    let mut sim = Plant::new(plant)?;
    let mut tally = OpTally::disabled();
    let mut trace = RunTrace::new(stage, cfg, cfg.algorithm, mu, FilterBank::zeros(1, 1, 1));
    trace.d_v = series(d.q, n);
    trace.e_v = series(d.q, n);
    trace.d_p = series(d.m, n);
    trace.e_p = series(d.m, n);

    let (mut v, mut x) = (vec![0.0; d.j], vec![0.0; d.j]);
    let (mut dv, mut ev) = (vec![0.0; d.q], vec![0.0; d.q]);
    let (mut dp, mut ep) = (vec![0.0; d.m], vec![0.0; d.m]);
    for i in 0..n {
        exc.sample(i, &mut v, &mut x);
        sim.push_sources(&v);
        ctrl.state.push_references(&x);
        let y = ctrl.output(&mut tally);
        sim.push_outputs(&y);
        sim.virtual_sensors(&mut dv, &mut ev);
        sim.physical_sensors(&mut dp, &mut ep);
        ctrl.adapt(&ev, est, mu, &mut tally)
            .map_err(|e| diverged(stage, i, e, mu))?;
        push_all(&mut trace.d_v, &dv);
        push_all(&mut trace.e_v, &ev);
        push_all(&mut trace.d_p, &dp);
        push_all(&mut trace.e_p, &ep);
    }
    trace.final_w = ctrl.state.w.clone();
    Ok((ctrl.state.w, trace))
}

/// Trains the auxiliary filters with the controllers frozen at `optimal_w`.
pub fn run_tuning_aux(
    cfg: &StageConfig,
    plant: &PathSet,
    optimal_w: &FilterBank,
) -> Result<(FilterBank, RunTrace)> {
    cfg.check_plant(plant)?;
    let stage = Stage::TuningAux;
    let exc = Excitation::generate(cfg, stage)?;
    let mu = match cfg.step_sizes {
        Some(s) => s.mu2,
        None => aux_step_size(
            cfg.aux_mu_scale,
            cfg.dims.j,
            cfg.n_h,
            exc.mean_reference_power(),
        ),
    };
    let d = cfg.dims;
    let n = cfg.n_samples;
    let mut ctrl = Controller::new(cfg, Algorithm::Mcalms, d.q)?;
    ctrl.state = ctrl.state.with_filters(optimal_w.clone())?;
    let mut aux = AuxState::new(d.m, d.j, cfg.n_h)?;
    let mut sim = Plant::new(plant)?;
    let mut tally = OpTally::disabled();
    let mut trace = RunTrace::new(stage, cfg, cfg.algorithm, mu, optimal_w.clone());
    trace.d_v = series(d.q, n);
    trace.e_v = series(d.q, n);
    trace.d_p = series(d.m, n);
    trace.e_p = series(d.m, n);
    trace.e_h = series(d.m, n);

    let (mut v, mut x) = (vec![0.0; d.j], vec![0.0; d.j]);
    let (mut dv, mut ev) = (vec![0.0; d.q], vec![0.0; d.q]);
    let (mut dp, mut ep) = (vec![0.0; d.m], vec![0.0; d.m]);
    for i in 0..n {
        exc.sample(i, &mut v, &mut x);
        sim.push_sources(&v);
        ctrl.state.push_references(&x);
        aux.push_references(&x);
        let y = ctrl.output(&mut tally);
        sim.push_outputs(&y);
        sim.virtual_sensors(&mut dv, &mut ev);
        sim.physical_sensors(&mut dp, &mut ep);
        let eh = aux_lms_step(&mut aux, &ep, mu).map_err(|e| diverged(stage, i, e, mu))?;
        push_all(&mut trace.d_v, &dv);
        push_all(&mut trace.e_v, &ev);
        push_all(&mut trace.d_p, &dp);
        push_all(&mut trace.e_p, &ep);
        push_all(&mut trace.e_h, &eh);
    }
    trace.final_h = Some(aux.h.clone());
    Ok((aux.h, trace))
}

/// Per-sample control-stage machinery, shared with the operation counter.
pub(crate) struct ControlLoop<'a> {
    cfg: &'a StageConfig,
    plant: Plant<'a>,
    pub(crate) ctrl: Controller,
    aux: AuxState,
    mu: f64,
    dv: Vec<f64>,
    ev: Vec<f64>,
    dp: Vec<f64>,
    ep: Vec<f64>,
    eh: Vec<f64>,
}

impl<'a> ControlLoop<'a> {
    pub(crate) fn new(
        cfg: &'a StageConfig,
        paths: &'a PathSet,
        h_o: &FilterBank,
        mu: f64,
    ) -> Result<Self> {
        let d = cfg.dims;
        Ok(Self {
            cfg,
            plant: Plant::new(paths)?,
            ctrl: Controller::new(cfg, cfg.algorithm, d.m)?,
            aux: AuxState::new(d.m, d.j, cfg.n_h)?.with_filters(h_o.clone())?,
            mu,
            dv: vec![0.0; d.q],
            ev: vec![0.0; d.q],
            dp: vec![0.0; d.m],
            ep: vec![0.0; d.m],
            eh: vec![0.0; d.m],
        })
    }

    /// Advances one sample. Only controller-side arithmetic is tallied; the
    /// acoustic simulation and the evaluation-only virtual sensors are not.
    pub(crate) fn step(
        &mut self,
        v: &[f64],
        x: &[f64],
        tally: &mut OpTally,
    ) -> Result<(), NonFinite> {
        self.plant.push_sources(v);
        self.ctrl.state.push_references(x);
        self.aux.push_references(x);
        let y = self.ctrl.output(tally);
        self.plant.push_outputs(&y);
        self.plant.physical_sensors(&mut self.dp, &mut self.ep);
        let h = &self.aux.h;
        tally.record(
            Kernel::AuxiliaryFiltering,
            h.rows() * h.cols() * h.tap_len(),
            h.rows() * h.cols() * h.tap_len(),
        );
        self.eh = control_stage_inner_error(&self.ep, &self.aux);
        if self.cfg.evaluate_virtual {
            self.plant.virtual_sensors(&mut self.dv, &mut self.ev);
        }
        let est = &self.plant.paths.secondary_physical_est;
        self.ctrl.adapt(&self.eh, est, self.mu, tally)
    }
}

/// Adapts fresh controllers on the auxiliary-compensated physical error.
pub fn run_control_stage(cfg: &StageConfig, plant: &PathSet, h_o: &FilterBank) -> Result<RunTrace> {
    cfg.check_plant(plant)?;
    let stage = Stage::Control;
    let exc = Excitation::generate(cfg, stage)?;
    let mu = match cfg.step_sizes {
        Some(s) => s.mu3,
        None => control_step_size(
            cfg.mu_scale,
            cfg.dims.j,
            cfg.n_x,
            exc.mean_reference_power(),
            &plant.secondary_physical_est,
        ),
    };
    let d = cfg.dims;
    let n = cfg.n_samples;
    let mut lp = ControlLoop::new(cfg, plant, h_o, mu)?;
    let mut tally = OpTally::disabled();
    let mut trace = RunTrace::new(stage, cfg, cfg.algorithm, mu, FilterBank::zeros(1, 1, 1));
    if cfg.evaluate_virtual {
        trace.d_v = series(d.q, n);
        trace.e_v = series(d.q, n);
    }
    trace.d_p = series(d.m, n);
    trace.e_p = series(d.m, n);
    trace.e_h = series(d.m, n);

    let (mut v, mut x) = (vec![0.0; d.j], vec![0.0; d.j]);
    for i in 0..n {
        exc.sample(i, &mut v, &mut x);
        lp.step(&v, &x, &mut tally)
            .map_err(|e| diverged(stage, i, e, mu))?;
        if cfg.evaluate_virtual {
            push_all(&mut trace.d_v, &lp.dv);
            push_all(&mut trace.e_v, &lp.ev);
        }
        push_all(&mut trace.d_p, &lp.dp);
        push_all(&mut trace.e_p, &lp.ep);
        push_all(&mut trace.e_h, &lp.eh);
    }
    trace.final_w = lp.ctrl.state.w.clone();
    trace.final_h = Some(h_o.clone());
    Ok(trace)
}

/// Traces of all three stages of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub tuning: RunTrace,
    pub aux: RunTrace,
    pub control: RunTrace,
}

impl PipelineRun {
    pub fn step_sizes(&self) -> StepSizes {
        StepSizes {
            mu1: self.tuning.mu,
            mu2: self.aux.mu,
            mu3: self.control.mu,
        }
    }
}

pub fn run_pipeline(cfg: &StageConfig, plant: &PathSet) -> Result<PipelineRun> {
    let (w_o, tuning) = run_tuning_controllers(cfg, plant)?;
    let (h_o, aux) = run_tuning_aux(cfg, plant, &w_o)?;
    let control = run_control_stage(cfg, plant, &h_o)?;
    Ok(PipelineRun {
        tuning,
        aux,
        control,
    })
}

/// Smoothed noise-reduction curve of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NrCurve {
    /// Sample index of `values[0]` (the first full window).
    pub start: usize,
    pub values: Vec<f64>,
    /// Indices into `values` that hit the ±[`NR_CLAMP_DB`] clamp.
    pub clamped: Vec<usize>,
}

impl NrCurve {
    /// Median of the last 10% of the curve.
    pub fn steady_state(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let tail = ((self.values.len() as f64 * STEADY_STATE_FRACTION).ceil() as usize).max(1);
        let mut last: Vec<f64> = self.values[self.values.len() - tail..].to_vec();
        last.sort_by(f64::total_cmp);
        let mid = last.len() / 2;
        if last.len() % 2 == 1 {
            last[mid]
        } else {
            0.5 * (last[mid - 1] + last[mid])
        }
    }

    /// NR value at absolute sample index `n`, if the window has filled.
    pub fn at(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.start)
            .and_then(|i| self.values.get(i).copied())
    }

    /// Least-squares slope (dB per sample) over the final `fraction` of the curve.
    pub fn tail_slope(&self, fraction: f64) -> f64 {
        let len = ((self.values.len() as f64 * fraction).ceil() as usize)
            .clamp(2, self.values.len().max(2));
        if self.values.len() < 2 {
            return 0.0;
        }
        let ys = &self.values[self.values.len() - len..];
        let n = ys.len() as f64;
        let mx = (n - 1.0) / 2.0;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in ys.iter().enumerate() {
            let dx = i as f64 - mx;
            sxy += dx * (y - my);
            sxx += dx * dx;
        }
        sxy / sxx
    }
}

/// `NR(n) = 10·log10(avg(d²) / avg(e²))` over a trailing window, emitted
/// from the first full window on.
pub fn noise_reduction_db(disturbance: &[f64], error: &[f64], window: usize) -> Result<NrCurve> {
    if disturbance.len() != error.len() {
        return Err(Error::config(format!(
            "disturbance has {} samples, error has {}",
            disturbance.len(),
            error.len()
        )));
    }
    if window == 0 {
        return Err(Error::config("NR window must be >= 1"));
    }
    let n = disturbance.len();
    let start = window - 1;
    if n < window {
        return Ok(NrCurve {
            start,
            values: Vec::new(),
            clamped: Vec::new(),
        });
    }
    let mut values = Vec::with_capacity(n - start);
    let mut clamped = Vec::new();
    let (mut sd, mut se) = (0.0, 0.0);
    for i in 0..n {
        // exact recompute once per window keeps the running sums from drifting
        if i >= window && (i - start).is_multiple_of(window) {
            sd = disturbance[i + 1 - window..i].iter().map(|v| v * v).sum();
            se = error[i + 1 - window..i].iter().map(|v| v * v).sum();
        } else if i >= window {
            sd -= disturbance[i - window].powi(2);
            se -= error[i - window].powi(2);
        }
        sd += disturbance[i].powi(2);
        se += error[i].powi(2);
        if i >= start {
            let (pd, pe) = (sd.max(0.0), se.max(0.0));
            let nr = if !se.is_finite() || !sd.is_finite() {
                // overflowed power; only a diverging error gets here in practice
                clamped.push(values.len());
                if se.is_finite() {
                    NR_CLAMP_DB
                } else {
                    -NR_CLAMP_DB
                }
            } else if pe == 0.0 {
                clamped.push(values.len());
                NR_CLAMP_DB
            } else if pd == 0.0 {
                clamped.push(values.len());
                -NR_CLAMP_DB
            } else {
                (10.0 * (pd / pe).log10()).clamp(-NR_CLAMP_DB, NR_CLAMP_DB)
            };
            values.push(nr);
        }
    }
    Ok(NrCurve {
        start,
        values,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nr_of_uncontrolled_is_zero() {
        let d: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let c = noise_reduction_db(&d, &d, 10).unwrap();
        assert_eq!(c.start, 9);
        assert_eq!(c.values.len(), 91);
        assert!(c.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nr_of_tenth_is_twenty_db() {
        let d: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).cos() + 0.1).collect();
        let e: Vec<f64> = d.iter().map(|v| v / 10.0).collect();
        let c = noise_reduction_db(&d, &e, 16).unwrap();
        assert!(c.values.iter().all(|v| (v - 20.0).abs() < 1e-9));
        assert!((c.steady_state() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn nr_of_silence_is_clamped_and_flagged() {
        let d = vec![1.0; 50];
        let e = vec![0.0; 50];
        let c = noise_reduction_db(&d, &e, 5).unwrap();
        assert!(c.values.iter().all(|&v| v == NR_CLAMP_DB));
        assert_eq!(c.clamped.len(), c.values.len());
    }

    #[test]
    fn nr_becomes_exactly_clamped_after_error_stops() {
        let d = vec![1.0; 400];
        let e: Vec<f64> = (0..400).map(|i| if i < 100 { 0.37 } else { 0.0 }).collect();
        let c = noise_reduction_db(&d, &e, 32).unwrap();
        assert_eq!(c.values.last().copied(), Some(NR_CLAMP_DB));
    }

    #[test]
    fn nr_of_overflowing_error_is_clamped_low() {
        let d = vec![1.0; 64];
        let e: Vec<f64> = (0..64).map(|i| if i < 20 { 0.5 } else { 1e200 }).collect();
        let c = noise_reduction_db(&d, &e, 8).unwrap();
        assert_eq!(c.values.last().copied(), Some(-NR_CLAMP_DB));
        assert!(!c.clamped.is_empty());
    }

    #[test]
    fn nr_rejects_length_mismatch() {
        assert!(noise_reduction_db(&[1.0, 2.0], &[1.0], 1).is_err());
        assert!(noise_reduction_db(&[1.0], &[1.0], 0).is_err());
    }

    #[test]
    fn steady_state_is_tail_median() {
        let mut values = vec![0.0; 90];
        values.extend([5.0, 1.0, 9.0, 3.0, 7.0, 2.0, 8.0, 4.0, 6.0, 10.0]);
        let c = NrCurve {
            start: 0,
            values,
            clamped: vec![],
        };
        assert_eq!(c.steady_state(), 5.5);
    }

    #[test]
    fn algorithm_parses() {
        assert_eq!("MCALMS".parse::<Algorithm>().unwrap(), Algorithm::Mcalms);
        assert_eq!("mcfxlms".parse::<Algorithm>().unwrap(), Algorithm::Mcfxlms);
        assert!("lms".parse::<Algorithm>().is_err());
    }
}
