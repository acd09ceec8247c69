//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Runs without the libtest harness so the report is always printed:
//! `cargo test -p mvanc-core --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mvanc_core::adaptive::{mcalms_step, mcfxlms_step, ControlState, FilteredReferences};
use mvanc_core::complexity::{channel_sweep, ops_mcalms, ops_mcfxlms, CountParams};
use mvanc_core::dsp::{convolve_stream, FilterBank, FirFilter, TapBuffer};
use mvanc_core::export::write_experiment;
use mvanc_core::pipeline::Algorithm;
use mvanc_core::presets::{preset, presets, run_experiment, Experiment, ExperimentResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NR_FLOOR_DB: f64 = 25.0;
const ALGORITHM_GAP_DB: f64 = 3.0;
const FILTER_GAP_DB: f64 = 3.0;
const SCENARIO_ORDER_DB: f64 = 8.0;
const SHAPE_AGREEMENT_DB: f64 = 3.0;
const PASSBAND_DROP_DB: f64 = 3.0;
const RATIO_RANGE: (f64, f64) = (8.0, 10.0);
const ADJOINT_TOL: f64 = 1e-10;
const INCREMENT_TOL: f64 = 1e-9;
const CONVOLUTION_TOL: f64 = 1e-12;
const RUNTIME_BUDGET: Duration = Duration::from_secs(120);

#[derive(Default)]
struct Report {
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, passed: bool, detail: String) {
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("[{verdict}] {id} {name}: {detail}");
        if !passed {
            self.failures.push(format!("{id} {name}"));
        }
    }
}

fn run(name: &str) -> (Experiment, ExperimentResult, Duration) {
    let exp = preset(name).unwrap();
    let t = Instant::now();
    let result = run_experiment(&exp).unwrap_or_else(|e| panic!("{name}: {e}"));
    (exp, result, t.elapsed())
}

fn min(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn fmt_db(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn criterion_1_and_2(report: &mut Report, result: &ExperimentResult, elapsed: Duration) {
    let alms = result.run(Algorithm::Mcalms).unwrap();
    let fx = result.run(Algorithm::Mcfxlms).unwrap();
    let nr_a = alms.tuning.steady_state_virtual_nr();
    let nr_f = fx.tuning.steady_state_virtual_nr();
    let floor = min(nr_a.iter().chain(&nr_f).copied());
    let gap = max(nr_a.iter().zip(&nr_f).map(|(a, b)| (a - b).abs()));
    let per_algorithm = elapsed / 2;
    report.line(
        "C1",
        "algorithm equivalence",
        floor >= NR_FLOOR_DB && gap <= ALGORITHM_GAP_DB && per_algorithm <= RUNTIME_BUDGET,
        format!(
            "MCALMS {} dB, MCFxLMS {} dB, worst {floor:.2} >= {NR_FLOOR_DB}, gap {gap:.3} <= {ALGORITHM_GAP_DB}, {:.1} s per algorithm",
            fmt_db(&nr_a),
            fmt_db(&nr_f),
            per_algorithm.as_secs_f64()
        ),
    );

    let (wa, wf) = (&alms.tuning.final_w, &fx.tuning.final_w);
    let diffs: Vec<f64> = (0..wa.cols())
        .map(|j| {
            wa.get(0, j)
                .mean_abs_diff_db(wf.get(0, j), 800.0, 1800.0, result.sample_rate)
        })
        .collect();
    let worst = max(diffs.iter().copied());
    report.line(
        "C2",
        "filter equivalence",
        worst <= FILTER_GAP_DB,
        format!(
            "w_1j mean |diff| over 800-1800 Hz {} dB, limit {FILTER_GAP_DB}",
            fmt_db(&diffs)
        ),
    );
}

fn criterion_3_and_4(
    report: &mut Report,
    s1: &ExperimentResult,
    s2: &ExperimentResult,
    s3: &ExperimentResult,
) {
    let control = |r: &ExperimentResult| r.runs[0].1.control.steady_state_virtual_nr();
    let (n1, n2, n3) = (control(s1), control(s2), control(s3));
    let order = min(n2.iter().zip(&n3).map(|(a, b)| a - b));
    let s1_floor = min(n1.iter().copied());
    report.line(
        "C3",
        "scenario ordering",
        order >= SCENARIO_ORDER_DB && s1_floor >= NR_FLOOR_DB,
        format!(
            "scenario-1 {} dB (worst {s1_floor:.2} >= {NR_FLOOR_DB}); scenario-2 {} dB exceeds scenario-3 {} dB by at least {order:.2} >= {SCENARIO_ORDER_DB}",
            fmt_db(&n1),
            fmt_db(&n2),
            fmt_db(&n3)
        ),
    );

    let fs = s1.sample_rate;
    let r1 = &s1.runs[0].1;
    let agreement = r1.tuning.final_w.get(0, 0).mean_abs_diff_db(
        r1.control.final_w.get(0, 0),
        900.0,
        1700.0,
        fs,
    );
    let w3 = s3.runs[0].1.control.final_w.get(0, 0);
    let low = w3.band_mean_db(800.0, 1000.0, fs);
    let high = w3.band_mean_db(1100.0, 1700.0, fs);
    report.line(
        "C4",
        "control-filter passband shapes",
        agreement <= SHAPE_AGREEMENT_DB && low - high >= PASSBAND_DROP_DB,
        format!(
            "scenario-1 w_11 tuning vs control {agreement:.3} dB <= {SHAPE_AGREEMENT_DB}; scenario-3 control w_11 800-1000 Hz {low:.2} dB, 1100-1700 Hz {high:.2} dB, drop {:.2} >= {PASSBAND_DROP_DB}",
            low - high
        ),
    );
}

fn criterion_5(report: &mut Report) {
    let p = CountParams::new(10, 10, 10, 512, 128, 256).unwrap();
    let fx = ops_mcfxlms(p).unwrap();
    let alms = ops_mcalms(p).unwrap();
    let ratio = fx.multiplications as f64 / alms.multiplications as f64;
    let sweep = channel_sweep(512, 128, 256, 10).unwrap();
    let sweep_ratio = sweep.last().unwrap().mult_ratio();
    report.line(
        "C5",
        "complexity",
        fx.multiplications == 781_800
            && alms.multiplications == 89_610
            && (RATIO_RANGE.0..=RATIO_RANGE.1).contains(&ratio)
            && sweep_ratio == ratio,
        format!(
            "MCFxLMS {} mult, MCALMS {} mult, ratio {ratio:.3} in [{}, {}]",
            fx.multiplications, alms.multiplications, RATIO_RANGE.0, RATIO_RANGE.1
        ),
    );
}

fn criterion_6(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_adjoint = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..=100);
        let l = rng.random_range(1..=32);
        let x = random_vec(&mut rng, len);
        let e = random_vec(&mut rng, len + l - 1);
        let s = FirFilter::new(random_vec(&mut rng, l)).unwrap();
        let mut xb = TapBuffer::new(l).unwrap();
        let mut eb = TapBuffer::new(l).unwrap();
        let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);
        for n in 0..len + l - 1 {
            xb.push(if n < len { x[n] } else { 0.0 });
            let v = convolve_stream(&xb, &s);
            lhs += e[n] * v;
            scale += (e[n] * v).abs();
            eb.push(e[n]);
            if n + 1 >= l {
                rhs += x[n + 1 - l] * eb.time_reversed_output(&s);
            }
        }
        worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }

    // single channel, errors held fixed so the filter never feeds back
    let (n_x, l, samples) = (64, 16, 4000);
    let path =
        FilterBank::from_filters(1, 1, vec![FirFilter::new(random_vec(&mut rng, l)).unwrap()])
            .unwrap();
    let x = random_vec(&mut rng, samples);
    let e = random_vec(&mut rng, samples);
    let mu = 1e-3;
    let mut alms = ControlState::new(1, 1, n_x, l, 1).unwrap();
    for n in 0..samples + l - 1 {
        alms.push_references(&[x.get(n).copied().unwrap_or(0.0)]);
        alms.push_errors(&[e.get(n).copied().unwrap_or(0.0)]);
        let sums = alms.filtered_error_sums(&path);
        mcalms_step(&mut alms, &sums, mu).unwrap();
    }
    let mut fx_state = ControlState::new(1, 1, n_x, l, 1).unwrap();
    let mut fx = FilteredReferences::new(1, 1, 1, n_x).unwrap();
    for n in 0..samples {
        fx_state.push_references(&[x[n]]);
        fx.advance(&fx_state, &path);
        mcfxlms_step(&mut fx_state, &fx, &[e[n]], mu).unwrap();
    }
    let (a, b) = (alms.w.get(0, 0).taps(), fx_state.w.get(0, 0).taps());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    let increment = diff / norm;

    report.line(
        "C6",
        "adjoint identity",
        worst_adjoint <= ADJOINT_TOL && increment <= INCREMENT_TOL,
        format!(
            "1000 triples worst {worst_adjoint:.2e} <= {ADJOINT_TOL:e}; accumulated increments {increment:.2e} <= {INCREMENT_TOL:e}"
        ),
    );
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn criterion_7(report: &mut Report, exp: &Experiment, first: &ExperimentResult) {
    let root = std::env::temp_dir().join(format!("mvanc-acceptance-{}", std::process::id()));
    let (a, b) = (root.join("a"), root.join("b"));
    write_experiment(exp, first, &a, 10).unwrap();
    let second = run_experiment(exp).unwrap();
    write_experiment(exp, &second, &b, 10).unwrap();
    let files_a = csv_files(&a);
    let mut identical = !files_a.is_empty();
    let mut bytes = 0;
    for fa in &files_a {
        let fb = b.join(fa.strip_prefix(&a).unwrap());
        let (da, db) = (
            std::fs::read(fa).unwrap(),
            std::fs::read(&fb).unwrap_or_default(),
        );
        bytes += da.len();
        identical &= da == db;
    }
    identical &= files_a.len() == csv_files(&b).len();
    let _ = std::fs::remove_dir_all(&root);
    report.line(
        "C7",
        "determinism",
        identical,
        format!(
            "{} rerun: {} CSVs, {bytes} bytes, byte-identical: {identical}",
            exp.name,
            files_a.len()
        ),
    );
}

fn criterion_8(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let taps = rng.random_range(1..=64);
        let len = rng.random_range(1..=300);
        let h = random_vec(&mut rng, taps);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let f = FirFilter::new(h.clone()).unwrap();
        let mut buf = TapBuffer::new(taps).unwrap();
        for n in 0..len {
            buf.push(x[n]);
            let got = convolve_stream(&buf, &f);
            let (mut expect, mut scale) = (0.0, 0.0);
            for i in 0..=n.min(taps - 1) {
                expect += h[i] * x[n - i];
                scale += (h[i] * x[n - i]).abs();
            }
            if scale > 0.0 {
                worst = worst.max((got - expect).abs() / scale);
            }
        }
    }
    report.line(
        "C8",
        "oracle convolution",
        worst <= CONVOLUTION_TOL,
        format!("200 random cases, worst relative error {worst:.2e} <= {CONVOLUTION_TOL:e}"),
    );
}

fn main() {
    let mut report = Report::default();

    criterion_8(&mut report);
    criterion_6(&mut report);
    criterion_5(&mut report);

    let (fig6, fig6_result, fig6_time) = run("fig6-comparison");
    criterion_1_and_2(&mut report, &fig6_result, fig6_time);

    let (s1_exp, s1, _) = run("scenario-1");
    let (s2_exp, s2, _) = run("scenario-2");
    let (s3_exp, s3, _) = run("scenario-3");
    criterion_3_and_4(&mut report, &s1, &s2, &s3);

    criterion_7(&mut report, &fig6, &fig6_result);

    // every shipped preset's own expectations, including the late-divergence check
    let (long_exp, long, _) = run("long-paths");
    let finished = [
        (&fig6, &fig6_result),
        (&s1_exp, &s1),
        (&s2_exp, &s2),
        (&s3_exp, &s3),
        (&long_exp, &long),
    ];
    assert_eq!(finished.len(), presets().len());
    for (exp, result) in finished {
        for check in result.checks(&exp.expectations) {
            report.line(
                "P",
                &format!("{} {}", exp.name, check.label),
                check.passed,
                check.detail,
            );
        }
    }

    if report.failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        eprintln!("acceptance: failed {:?}", report.failures);
        std::process::exit(1);
    }
}
