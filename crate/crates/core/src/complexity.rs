//! Per-sample operation counts for the control stage.
//!
//! The closed forms count one sample period of the control stage. The
//! instrumented counter tallies what the simulation kernels actually do,
//! split into the kernels below, so the two can be reconciled term by term:
//!
//! | kernel               | adjoint LMS            | filtered-reference LMS   |
//! |----------------------|------------------------|--------------------------|
//! | control filtering    | K·J·N_x                | K·J·N_x                  |
//! | auxiliary filtering  | M·J·N_h                | M·J·N_h                  |
//! | error filtering      | K·M·L                  | –                        |
//! | reference filtering  | –                      | J·K·M·L                  |
//! | error summation      | adds only              | –                        |
//! | weight update        | K + K·J·N_x            | M + J·K·M·N_x            |
//!
//! (multiplications shown). The closed forms leave out control filtering;
//! [`InstrumentedReport`] itemises that and every other residual.

use serde::{Deserialize, Serialize};

use crate::acoustics::PathSet;
use crate::dsp::FilterBank;
use crate::error::{Error, Result};
use crate::pipeline::{Algorithm, ControlLoop, StageConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub multiplications: u64,
    pub additions: u64,
}

impl OpCount {
    pub fn new(multiplications: u64, additions: u64) -> Self {
        Self {
            multiplications,
            additions,
        }
    }
}

impl std::ops::Add for OpCount {
    type Output = OpCount;
    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            multiplications: self.multiplications + rhs.multiplications,
            additions: self.additions + rhs.additions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    ControlFiltering,
    AuxiliaryFiltering,
    ErrorFiltering,
    ReferenceFiltering,
    ErrorSummation,
    WeightUpdate,
}

impl Kernel {
    pub const ALL: [Kernel; 6] = [
        Kernel::ControlFiltering,
        Kernel::AuxiliaryFiltering,
        Kernel::ErrorFiltering,
        Kernel::ReferenceFiltering,
        Kernel::ErrorSummation,
        Kernel::WeightUpdate,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::ControlFiltering => "control-filtering",
            Kernel::AuxiliaryFiltering => "auxiliary-filtering",
            Kernel::ErrorFiltering => "error-filtering",
            Kernel::ReferenceFiltering => "reference-filtering",
            Kernel::ErrorSummation => "error-summation",
            Kernel::WeightUpdate => "weight-update",
        }
    }
}

/// Arithmetic tally filled in by the control loop when enabled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpTally {
    enabled: bool,
    counts: [OpCount; 6],
}

impl OpTally {
    pub fn enabled() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    #[inline]
    pub fn record(&mut self, kernel: Kernel, multiplications: usize, additions: usize) {
        if self.enabled {
            let c = &mut self.counts[kernel.index()];
            c.multiplications += multiplications as u64;
            c.additions += additions as u64;
        }
    }

    /// `count` dot products of length `len`.
    #[inline]
    pub fn dots(&mut self, kernel: Kernel, count: usize, len: usize) {
        self.record(kernel, count * len, count * len.saturating_sub(1));
    }

    pub fn kernel(&self, kernel: Kernel) -> OpCount {
        self.counts[kernel.index()]
    }

    pub fn total(&self) -> OpCount {
        self.counts.iter().fold(OpCount::default(), |a, &b| a + b)
    }

    pub fn reset(&mut self) {
        self.counts = Default::default();
    }
}

/// Channel counts and filter lengths the closed forms depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountParams {
    pub j: u64,
    pub k: u64,
    pub m: u64,
    pub n_x: u64,
    pub n_h: u64,
    pub l: u64,
}

impl CountParams {
    pub fn new(j: u64, k: u64, m: u64, n_x: u64, n_h: u64, l: u64) -> Result<Self> {
        let p = Self {
            j,
            k,
            m,
            n_x,
            n_h,
            l,
        };
        if [j, k, m, n_x, n_h, l].contains(&0) {
            return Err(Error::config(format!(
                "operation counts need every parameter >= 1, got {p:?}"
            )));
        }
        Ok(p)
    }
}

fn overflow() -> Error {
    Error::config("operation count overflows u64")
}

fn mul(values: &[u64]) -> Result<u64> {
    values
        .iter()
        .try_fold(1u64, |acc, &v| acc.checked_mul(v))
        .ok_or_else(overflow)
}

fn add(values: &[u64]) -> Result<u64> {
    values
        .iter()
        .try_fold(0u64, |acc, &v| acc.checked_add(v))
        .ok_or_else(overflow)
}

/// Filtered-reference LMS:
/// mult `JKM(L + N_x + 1) + MJN_h`, add `JKM(L + N_x − 1) + M(J + N_h − 1)`.
pub fn ops_mcfxlms(p: CountParams) -> Result<OpCount> {
    let CountParams {
        j,
        k,
        m,
        n_x,
        n_h,
        l,
    } = p;
    let jkm = mul(&[j, k, m])?;
    let mults = add(&[mul(&[jkm, add(&[l, n_x, 1])?])?, mul(&[m, j, n_h])?])?;
    let adds = add(&[
        mul(&[jkm, add(&[l, n_x])? - 1])?,
        mul(&[m, add(&[j, n_h])? - 1])?,
    ])?;
    Ok(OpCount::new(mults, adds))
}

/// Adjoint LMS:
/// mult `K(LM + JN_x + 1) + MJN_h`, add `K[(L − 1)M + J(N_x + M − 1)] + M(J + N_h − 1)`.
pub fn ops_mcalms(p: CountParams) -> Result<OpCount> {
    let CountParams {
        j,
        k,
        m,
        n_x,
        n_h,
        l,
    } = p;
    let mults = add(&[
        mul(&[k, add(&[mul(&[l, m])?, mul(&[j, n_x])?, 1])?])?,
        mul(&[m, j, n_h])?,
    ])?;
    let adds = add(&[
        mul(&[
            k,
            add(&[mul(&[l - 1, m])?, mul(&[j, add(&[n_x, m])? - 1])?])?,
        ])?,
        mul(&[m, add(&[j, n_h])? - 1])?,
    ])?;
    Ok(OpCount::new(mults, adds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub channels: u64,
    pub mcfxlms: OpCount,
    pub mcalms: OpCount,
}

impl SweepRow {
    pub fn mult_ratio(&self) -> f64 {
        self.mcfxlms.multiplications as f64 / self.mcalms.multiplications as f64
    }

    pub fn add_ratio(&self) -> f64 {
        self.mcfxlms.additions as f64 / self.mcalms.additions as f64
    }
}

/// Both algorithms' counts for `J = K = M = c`, `c = 1..=ch_max`.
pub fn channel_sweep(n_x: u64, n_h: u64, l: u64, ch_max: u64) -> Result<Vec<SweepRow>> {
    if ch_max == 0 {
        return Err(Error::config("channel sweep needs ch_max >= 1"));
    }
    (1..=ch_max)
        .map(|c| {
            let p = CountParams::new(c, c, c, n_x, n_h, l)?;
            Ok(SweepRow {
                channels: c,
                mcfxlms: ops_mcfxlms(p)?,
                mcalms: ops_mcalms(p)?,
            })
        })
        .collect()
}

/// Instrumented counts of one control-stage sample next to the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentedReport {
    pub kernels: Vec<(Kernel, OpCount)>,
    pub measured: OpCount,
    pub closed_form: OpCount,
    /// measured − closed form
    pub residual_multiplications: i64,
    pub residual_additions: i64,
}

impl InstrumentedReport {
    pub fn from_tally(tally: &OpTally, closed_form: OpCount) -> Self {
        let measured = tally.total();
        Self {
            kernels: Kernel::ALL.iter().map(|&k| (k, tally.kernel(k))).collect(),
            measured,
            closed_form,
            residual_multiplications: measured.multiplications as i64
                - closed_form.multiplications as i64,
            residual_additions: measured.additions as i64 - closed_form.additions as i64,
        }
    }

    pub fn kernel(&self, kernel: Kernel) -> OpCount {
        self.kernels
            .iter()
            .find(|(k, _)| *k == kernel)
            .map(|(_, c)| *c)
            .unwrap_or_default()
    }
}

impl std::fmt::Display for InstrumentedReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "kernel,multiplications,additions")?;
        for (k, c) in &self.kernels {
            writeln!(f, "{},{},{}", k.name(), c.multiplications, c.additions)?;
        }
        writeln!(
            f,
            "measured,{},{}",
            self.measured.multiplications, self.measured.additions
        )?;
        writeln!(
            f,
            "closed-form,{},{}",
            self.closed_form.multiplications, self.closed_form.additions
        )?;
        write!(
            f,
            "residual,{},{}",
            self.residual_multiplications, self.residual_additions
        )
    }
}

/// Runs one control-stage sample of `algorithm` on `plant` and reports the
/// tallied arithmetic against the matching closed form. With `counting`
/// off the measured counts are all zero.
pub fn instrumented_counts(
    cfg: &StageConfig,
    plant: &PathSet,
    h_o: &FilterBank,
    algorithm: Algorithm,
    counting: bool,
) -> Result<InstrumentedReport> {
    let cfg = StageConfig {
        algorithm,
        ..cfg.clone()
    };
    cfg.validate()?;
    let d = cfg.dims;
    let mut lp = ControlLoop::new(&cfg, plant, h_o, 1e-6)?;
    let mut tally = if counting {
        OpTally::enabled()
    } else {
        OpTally::disabled()
    };
    let ones = vec![1.0; d.j];
    lp.step(&ones, &ones, &mut tally)
        .map_err(|e| Error::config(format!("counting run failed: {e}")))?;
    let params = CountParams::new(
        d.j as u64,
        d.k as u64,
        d.m as u64,
        cfg.n_x as u64,
        cfg.n_h as u64,
        cfg.path_len as u64,
    )?;
    let closed_form = match algorithm {
        Algorithm::Mcalms => ops_mcalms(params)?,
        Algorithm::Mcfxlms => ops_mcfxlms(params)?,
    };
    Ok(InstrumentedReport::from_tally(&tally, closed_form))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(j: u64, k: u64, m: u64, n_x: u64, n_h: u64, l: u64) -> CountParams {
        CountParams::new(j, k, m, n_x, n_h, l).unwrap()
    }

    #[test]
    fn unit_case_by_hand() {
        assert_eq!(
            ops_mcfxlms(p(1, 1, 1, 1, 1, 1)).unwrap(),
            OpCount::new(4, 2)
        );
        let a = ops_mcalms(p(1, 1, 1, 1, 1, 1)).unwrap();
        // K(LM + JN_x + 1) + MJN_h = 3 + 1; K[(L-1)M + J(N_x+M-1)] + M(J+N_h-1) = 1 + 1
        assert_eq!(a, OpCount::new(4, 2));
        assert_eq!(
            a.multiplications,
            ops_mcfxlms(p(1, 1, 1, 1, 1, 1)).unwrap().multiplications
        );
    }

    #[test]
    fn ten_channel_values() {
        let q = p(10, 10, 10, 512, 128, 256);
        assert_eq!(ops_mcfxlms(q).unwrap().multiplications, 781_800);
        assert_eq!(ops_mcalms(q).unwrap().multiplications, 89_610);
        // additions by hand: 1000*767 + 10*137 and 10*(2550 + 5210) + 1370
        assert_eq!(ops_mcfxlms(q).unwrap().additions, 768_370);
        assert_eq!(ops_mcalms(q).unwrap().additions, 78_970);
    }

    #[test]
    fn doubling_n_x_increases_counts() {
        let a = ops_mcfxlms(p(3, 2, 4, 64, 32, 16)).unwrap();
        let b = ops_mcfxlms(p(3, 2, 4, 128, 32, 16)).unwrap();
        assert!(b.multiplications > a.multiplications && b.additions > a.additions);
        let a = ops_mcalms(p(3, 2, 4, 64, 32, 16)).unwrap();
        let b = ops_mcalms(p(3, 2, 4, 128, 32, 16)).unwrap();
        assert!(b.multiplications > a.multiplications && b.additions > a.additions);
    }

    #[test]
    fn zero_argument_rejected_and_overflow_detected() {
        assert!(CountParams::new(0, 1, 1, 1, 1, 1).is_err());
        let huge = p(u64::MAX / 2, 4, 4, 4, 4, 4);
        assert!(ops_mcfxlms(huge).is_err());
        assert!(ops_mcalms(huge).is_err());
    }

    #[test]
    fn sweep_base_case_and_ratio() {
        let one = channel_sweep(512, 128, 256, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].mcalms.multiplications > 0 && one[0].mcfxlms.multiplications > 0);
        let rows = channel_sweep(512, 128, 256, 10).unwrap();
        let last = rows.last().unwrap().mult_ratio();
        assert!((8.0..=10.0).contains(&last), "{last}");
        assert!(channel_sweep(512, 128, 256, 0).is_err());
    }

    #[test]
    fn disabled_tally_stays_zero() {
        let mut t = OpTally::disabled();
        t.dots(Kernel::ControlFiltering, 4, 16);
        assert_eq!(t.total(), OpCount::default());
        let mut t = OpTally::enabled();
        t.dots(Kernel::ControlFiltering, 4, 16);
        assert_eq!(t.total(), OpCount::new(64, 60));
    }
}
