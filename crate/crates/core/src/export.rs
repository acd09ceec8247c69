//! CSV artifacts and the per-experiment output directory.
//!
//! Every CSV opens with a `# <schema> key=value ...` line followed by the
//! column header. Schemas:
//!
//! - `mvanc.trace.v1`: `n`, then per channel `d_v<q>`, `e_v<q>`, `d_p<m>`,
//!   `e_p<m>`, `e_h<m>` for whichever series the stage recorded, then
//!   `nr_v<q>` (empty until the NR window fills). Rows are every `stride`-th
//!   sample, starting at `n = 0`.
//! - `mvanc.summary.v1`: `algorithm,stage,metric,channel,steady_state_db,mu`
//!   where `metric` is `virtual` (d_v over e_v) or `inner` (e_p over e_h).
//! - `mvanc.sweep.v1`: `channels,mcfxlms_mult,mcfxlms_add,mcalms_mult,mcalms_add,mult_ratio,add_ratio`.
//! - `mvanc.spectrum.v1`: `freq_hz` then one `<label>_<row><col>_db` column
//!   per filter, 1-based, on an even grid from DC to Nyquist.
//! - `mvanc.ops.v1`: one row per counted kernel, then measured, closed-form
//!   and residual totals.
//!
//! Numbers are written in shortest round-trip form so reruns with the same
//! seed give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::complexity::{instrumented_counts, SweepRow};
use crate::dsp::FilterBank;
use crate::error::Result;
use crate::pipeline::{PipelineRun, RunTrace, StageConfig};
use crate::presets::{Experiment, ExperimentResult};
use crate::snapshot::{bank_to_json, pathset_to_json};

pub const TRACE_SCHEMA: &str = "mvanc.trace.v1";
pub const SUMMARY_SCHEMA: &str = "mvanc.summary.v1";
pub const SWEEP_SCHEMA: &str = "mvanc.sweep.v1";
pub const SPECTRUM_SCHEMA: &str = "mvanc.spectrum.v1";
pub const OPS_SCHEMA: &str = "mvanc.ops.v1";
/// Spectrum grids are never coarser than this.
pub const MIN_SPECTRUM_POINTS: usize = 512;

pub fn trace_csv(trace: &RunTrace, stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {TRACE_SCHEMA} stage={} algorithm={} mu={} nr_window={} stride={stride}",
        trace.stage.name(),
        trace.algorithm.name(),
        trace.mu,
        trace.nr_window
    );
    let groups: [(&str, &Vec<Vec<f64>>); 5] = [
        ("d_v", &trace.d_v),
        ("e_v", &trace.e_v),
        ("d_p", &trace.d_p),
        ("e_p", &trace.e_p),
        ("e_h", &trace.e_h),
    ];
    let nr = trace.virtual_nr();
    let mut header = vec!["n".to_string()];
    for (name, series) in &groups {
        header.extend((1..=series.len()).map(|c| format!("{name}{c}")));
    }
    header.extend((1..=nr.len()).map(|c| format!("nr_v{c}")));
    out.push_str(&header.join(","));
    out.push('\n');

    let len = groups
        .iter()
        .flat_map(|(_, s)| s.first())
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    for n in (0..len).step_by(stride) {
        let _ = write!(out, "{n}");
        for (_, series) in &groups {
            for ch in series.iter() {
                let _ = write!(out, ",{}", ch[n]);
            }
        }
        for curve in &nr {
            match n.checked_sub(curve.start).and_then(|i| curve.values.get(i)) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = format!(
        "# {SUMMARY_SCHEMA} experiment={}\nalgorithm,stage,metric,channel,steady_state_db,mu\n",
        result.name
    );
    for (alg, run) in &result.runs {
        for trace in [&run.tuning, &run.aux, &run.control] {
            let rows = [
                ("virtual", trace.steady_state_virtual_nr()),
                (
                    "inner",
                    trace.inner_nr().iter().map(|c| c.steady_state()).collect(),
                ),
            ];
            for (metric, values) in rows {
                for (ch, v) in values.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{metric},{},{v},{}",
                        alg.name(),
                        trace.stage.name(),
                        ch + 1,
                        trace.mu
                    );
                }
            }
        }
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "# {SWEEP_SCHEMA}\nchannels,mcfxlms_mult,mcfxlms_add,mcalms_mult,mcalms_add,mult_ratio,add_ratio\n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.channels,
            r.mcfxlms.multiplications,
            r.mcfxlms.additions,
            r.mcalms.multiplications,
            r.mcalms.additions,
            r.mult_ratio(),
            r.add_ratio()
        );
    }
    out
}

/// Magnitude responses of every filter in each labelled bank. `n_points`
/// below [`MIN_SPECTRUM_POINTS`] is raised to it.
pub fn spectrum_csv(banks: &[(&str, &FilterBank)], sample_rate: f64, n_points: usize) -> String {
    let n_points = n_points.max(MIN_SPECTRUM_POINTS);
    let mut header = vec!["freq_hz".to_string()];
    let mut columns = Vec::new();
    for (label, bank) in banks {
        for ((r, c), f) in bank.iter() {
            header.push(format!("{label}_{}{}_db", r + 1, c + 1));
            columns.push(f.magnitude_response_db(n_points));
        }
    }
    let mut out = format!(
        "# {SPECTRUM_SCHEMA} sample_rate={sample_rate} points={n_points}\n{}\n",
        header.join(",")
    );
    for i in 0..n_points {
        let _ = write!(
            out,
            "{}",
            sample_rate / 2.0 * i as f64 / (n_points - 1) as f64
        );
        for col in &columns {
            let _ = write!(out, ",{}", col[i]);
        }
        out.push('\n');
    }
    out
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Lays out one experiment's artifacts under `dir`:
///
/// ```text
/// dir/summary.csv
/// dir/plant.json
/// dir/<algorithm>/{tuning,aux,control}.csv
/// dir/<algorithm>/{w_tuning,h,w_control}.json
/// dir/<algorithm>/spectrum.csv          tuning and control W
/// dir/<algorithm>/ops.csv               one counted control-stage sample
/// ```
///
/// Returns the files written, in that order.
pub fn write_experiment(
    exp: &Experiment,
    result: &ExperimentResult,
    dir: &Path,
    stride: usize,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let plant = exp.build_plant()?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        write_atomic(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("summary.csv"), summary_csv(result))?;
    put(dir.join("plant.json"), pathset_to_json(&plant))?;
    for (alg, run) in &result.runs {
        let sub = dir.join(alg.name());
        fs::create_dir_all(&sub)?;
        put(sub.join("tuning.csv"), trace_csv(&run.tuning, stride))?;
        put(sub.join("aux.csv"), trace_csv(&run.aux, stride))?;
        put(sub.join("control.csv"), trace_csv(&run.control, stride))?;
        let h = aux_bank(run);
        put(
            sub.join("w_tuning.json"),
            bank_to_json("W_tuning", &run.tuning.final_w),
        )?;
        put(sub.join("h.json"), bank_to_json("H", h))?;
        put(
            sub.join("w_control.json"),
            bank_to_json("W_control", &run.control.final_w),
        )?;
        put(
            sub.join("spectrum.csv"),
            spectrum_csv(
                &[
                    ("w_tuning", &run.tuning.final_w),
                    ("w_control", &run.control.final_w),
                ],
                result.sample_rate,
                MIN_SPECTRUM_POINTS,
            ),
        )?;
        let cfg = StageConfig {
            algorithm: *alg,
            ..exp.stage.clone()
        };
        let report = instrumented_counts(&cfg, &plant, h, *alg, true)?;
        put(
            sub.join("ops.csv"),
            format!("# {OPS_SCHEMA} algorithm={}\n{report}\n", alg.name()),
        )?;
    }
    Ok(written)
}

fn aux_bank(run: &PipelineRun) -> &FilterBank {
    run.aux
        .final_h
        .as_ref()
        .expect("auxiliary stage always records its final H")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::channel_sweep;
    use crate::dsp::FirFilter;

    #[test]
    fn sweep_csv_has_documented_columns() {
        let csv = sweep_csv(&channel_sweep(512, 128, 256, 10).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# mvanc.sweep.v1"));
        assert_eq!(
            lines[1],
            "channels,mcfxlms_mult,mcfxlms_add,mcalms_mult,mcalms_add,mult_ratio,add_ratio"
        );
        assert_eq!(lines.len(), 12);
        assert!(lines[11].starts_with("10,781800,"));
    }

    #[test]
    fn spectrum_of_zero_filter_is_floor() {
        let bank = FilterBank::zeros(1, 1, 8);
        let csv = spectrum_csv(&[("w", &bank)], 16_000.0, 10);
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), MIN_SPECTRUM_POINTS);
        assert!(rows.iter().all(|r| r.ends_with(",-120")));
        assert!(rows.last().unwrap().starts_with("8000,"));
    }

    #[test]
    fn spectrum_of_impulse_is_flat() {
        let bank = FilterBank::from_filters(1, 1, vec![FirFilter::impulse(16, 3)]).unwrap();
        let csv = spectrum_csv(&[("w", &bank)], 16_000.0, 600);
        assert!(csv.lines().nth(1).unwrap() == "freq_hz,w_11_db");
        for row in csv.lines().skip(2) {
            let db: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
            assert!(db.abs() < 1e-9, "{row}");
        }
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = std::env::temp_dir().join(format!("mvanc-export-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.csv");
        write_atomic(&path, "x\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x\n");
        assert!(!dir.join("a.csv.tmp").exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
