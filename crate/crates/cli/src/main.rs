//! `mvanc`: runs the experiment presets and writes CSV, JSON and SVG artifacts.

mod plot;
mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvanc_core::acoustics::PathSet;
use mvanc_core::complexity::channel_sweep;
use mvanc_core::dsp::FilterBank;
use mvanc_core::export::{spectrum_csv, sweep_csv, write_atomic, write_experiment};
use mvanc_core::pipeline::{run_pipeline, Algorithm, PipelineRun, Stage};
use mvanc_core::presets::{preset, preset_names, presets, Experiment, ExperimentResult};
use mvanc_core::snapshot::bank_from_json;
use rayon::prelude::*;

use plot::LinePlot;
use table::Table;

#[derive(Parser)]
#[command(
    name = "mvanc",
    version,
    about = "Multichannel virtual active noise control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run presets or TOML experiment files (`all` runs every preset).
    Run(RunArgs),
    /// Operation counts of both algorithms against channel count.
    Complexity(ComplexityArgs),
    /// Magnitude responses of filter-bank snapshots.
    Spectrum(SpectrumArgs),
    /// Print presets as TOML experiment files.
    ShowConfig {
        /// Preset names; all presets when omitted.
        names: Vec<String>,
    },
    /// List preset names and descriptions.
    ListPresets,
}

#[derive(Args)]
struct OutArgs {
    /// Output root directory.
    #[arg(long, env = "MVANC_OUT", default_value = "mvanc-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Preset names, TOML files, or `all`.
    #[arg(required = true)]
    targets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per stage.
    #[arg(long)]
    samples: Option<usize>,
    /// Control step-size knob (normalised by reference power and path energy).
    #[arg(long)]
    mu_scale: Option<f64>,
    /// Run only this algorithm.
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Write every n-th sample to the trace CSVs.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    trace_stride: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long, default_value_t = 512)]
    n_x: u64,
    #[arg(long, default_value_t = 128)]
    n_h: u64,
    /// Secondary-path estimate length.
    #[arg(long, default_value_t = 256)]
    l: u64,
    /// Sweep J = K = M from 1 to this.
    #[arg(long, default_value_t = 10)]
    ch_max: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SpectrumArgs {
    /// `mvanc.filterbank.v1` JSON files, overlaid in one plot.
    #[arg(required = true)]
    snapshots: Vec<PathBuf>,
    /// Report mean gain over this band, in Hz.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    band: Option<Vec<f64>>,
    #[arg(long, default_value_t = 16_000.0)]
    sample_rate: f64,
    /// Frequency grid points from DC to Nyquist (at least 512).
    #[arg(long, default_value_t = 512)]
    points: usize,
    /// Subdirectory of the output root.
    #[arg(long, default_value = "spectrum")]
    name: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Mcalms,
    Mcfxlms,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Mcalms => Algorithm::Mcalms,
            AlgorithmArg::Mcfxlms => Algorithm::Mcfxlms,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Divergence(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Divergence(m) | Failure::Io(m) => m,
        }
    }
}

impl From<mvanc_core::Error> for Failure {
    fn from(e: mvanc_core::Error) -> Self {
        use mvanc_core::Error as E;
        match e {
            E::Divergence { .. } => Failure::Divergence(e.to_string()),
            E::Io(_) => Failure::Io(e.to_string()),
            E::Config(_) | E::Snapshot(_) => Failure::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    // behave like other filters when piped into `head`
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Complexity(args) => cmd_complexity(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::ShowConfig { names } => cmd_show_config(&names),
        Command::ListPresets => {
            for p in presets() {
                println!("{:<18} {}", p.name, p.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn resolve_target(target: &str) -> Result<Vec<Experiment>, Failure> {
    if target == "all" {
        return Ok(presets());
    }
    if let Some(p) = preset(target) {
        return Ok(vec![p]);
    }
    let path = Path::new(target);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let exp: Experiment = toml::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        return Ok(vec![exp]);
    }
    Err(Failure::Usage(format!(
        "unknown preset `{target}` (known: {})",
        preset_names().join(", ")
    )))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    let mut experiments = Vec::new();
    for t in &args.targets {
        experiments.extend(resolve_target(t)?);
    }
    for exp in &mut experiments {
        let mut e = exp.clone();
        if let Some(seed) = args.seed {
            e = e.with_seed(seed);
        }
        if let Some(n) = args.samples {
            e = e.with_samples(n);
        }
        if let Some(mu) = args.mu_scale {
            e = e.with_mu_scale(mu);
        }
        if let Some(a) = args.algorithm {
            e = e.with_algorithm(a.into());
        }
        e.validate()?;
        *exp = e;
    }
    let mut names: Vec<&str> = experiments.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Failure::Usage(
            "experiment names must be unique within one run".into(),
        ));
    }

    let plants = experiments
        .iter()
        .map(Experiment::build_plant)
        .collect::<mvanc_core::Result<Vec<PathSet>>>()?;
    let jobs: Vec<_> = experiments
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.stage_configs().into_iter().map(move |cfg| (i, cfg)))
        .collect();
    let mut outcomes: Vec<(usize, Algorithm, mvanc_core::Result<PipelineRun>)> = jobs
        .into_par_iter()
        .map(|(i, cfg)| (i, cfg.algorithm, run_pipeline(&cfg, &plants[i])))
        .collect();

    let mut worst: Option<Failure> = None;
    for (i, exp) in experiments.iter().enumerate() {
        let mut runs = Vec::new();
        let mut failed = None;
        for (_, alg, outcome) in outcomes.iter_mut().filter(|o| o.0 == i) {
            match std::mem::replace(outcome, Err(mvanc_core::Error::Config(String::new()))) {
                Ok(run) => runs.push((*alg, run)),
                Err(e) => {
                    let f = Failure::from(e);
                    eprintln!("{} ({}): {}", exp.name, alg.name(), f.message());
                    failed = Some(pick_worse(failed, f));
                }
            }
        }
        if let Some(f) = failed {
            worst = Some(pick_worse(worst, f));
            continue;
        }
        let result = ExperimentResult {
            name: exp.name.clone(),
            sample_rate: exp.plant.sample_rate,
            runs,
        };
        if let Err(f) = emit(exp, &result, &args.out.out, args.trace_stride as usize) {
            eprintln!("{}: {}", exp.name, f.message());
            worst = Some(pick_worse(worst, f));
        }
    }
    match worst {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

/// Divergence outranks I/O, which outranks usage, for the final exit code.
fn pick_worse(a: Option<Failure>, b: Failure) -> Failure {
    match a {
        Some(a) if a.code() == 3 || (a.code() == 4 && b.code() == 2) => a,
        _ => b,
    }
}

fn emit(
    exp: &Experiment,
    result: &ExperimentResult,
    root: &Path,
    stride: usize,
) -> Result<(), Failure> {
    let dir = root.join(&exp.name);
    write_experiment(exp, result, &dir, stride)?;
    let config = toml::to_string_pretty(exp).map_err(|e| Failure::Usage(e.to_string()))?;
    write_atomic(&dir.join("experiment.toml"), &config)?;

    println!("== {} ({})", exp.name, dir.display());
    for (alg, run) in &result.runs {
        for (stage, trace) in [("tuning", &run.tuning), ("control", &run.control)] {
            let nr: Vec<String> = trace
                .steady_state_virtual_nr()
                .iter()
                .map(|v| format!("{v:.2}"))
                .collect();
            println!(
                "   {:<8} {:<8} steady-state NR [dB]: {}",
                alg.name(),
                stage,
                nr.join("  ")
            );
        }
    }
    let checks = result.checks(&exp.expectations);
    let mut report = String::new();
    for c in &checks {
        println!("   {c}");
        report.push_str(&format!("{c}\n"));
    }
    write_atomic(&dir.join("checks.txt"), &report)?;
    write_run_plots(result, &dir)?;
    Ok(())
}

fn save_svg(path: &Path, plot: &LinePlot) -> Result<(), Failure> {
    write_atomic(path, &plot.render())?;
    Ok(())
}

/// Plots are rebuilt from the CSVs on disk, never from in-memory traces.
fn write_run_plots(result: &ExperimentResult, dir: &Path) -> Result<(), Failure> {
    for (stage, file) in [
        (Stage::TuningControllers, "tuning.csv"),
        (Stage::Control, "control.csv"),
    ] {
        let mut plot = LinePlot::new(
            &format!("{}: {} stage", result.name, stage.name()),
            "sample",
            "noise reduction [dB]",
        );
        for (alg, _) in &result.runs {
            let path = dir.join(alg.name()).join(file);
            let t = Table::read(&path).map_err(Failure::Io)?;
            let n = t
                .index("n")
                .ok_or_else(|| io_err(&path, "missing column n"))?;
            for (i, col) in t.columns.iter().enumerate() {
                if let Some(q) = col.strip_prefix("nr_v") {
                    plot.add(format!("{} v{q}", alg.name()), t.xy(n, i));
                }
            }
        }
        let stem = file.trim_end_matches(".csv");
        save_svg(&dir.join(format!("nr_{stem}.svg")), &plot)?;
    }
    for (alg, _) in &result.runs {
        let sub = dir.join(alg.name());
        let plot = spectrum_plot(
            &sub.join("spectrum.csv"),
            &format!("{}: {} control filters", result.name, alg.name()),
        )?;
        save_svg(&sub.join("spectrum.svg"), &plot)?;
    }
    Ok(())
}

fn spectrum_plot(path: &Path, title: &str) -> Result<LinePlot, Failure> {
    let t = Table::read(path).map_err(Failure::Io)?;
    let f = t
        .index("freq_hz")
        .ok_or_else(|| io_err(path, "missing column freq_hz"))?;
    let mut plot = LinePlot::new(title, "frequency [Hz]", "magnitude [dB]");
    for (i, col) in t.columns.iter().enumerate() {
        if i != f {
            plot.add(col.trim_end_matches("_db"), t.xy(f, i));
        }
    }
    Ok(plot)
}

fn cmd_complexity(args: ComplexityArgs) -> Result<(), Failure> {
    let rows = channel_sweep(args.n_x, args.n_h, args.l, args.ch_max)?;
    let dir = args.out.out.join("complexity");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let csv_path = dir.join("sweep.csv");
    write_atomic(&csv_path, &sweep_csv(&rows))?;

    println!("channels  mcfxlms_mult  mcalms_mult  ratio");
    for r in &rows {
        println!(
            "{:>8}  {:>12}  {:>11}  {:>5.3}",
            r.channels,
            r.mcfxlms.multiplications,
            r.mcalms.multiplications,
            r.mult_ratio()
        );
    }

    let t = Table::read(&csv_path).map_err(Failure::Io)?;
    let ch = t
        .index("channels")
        .ok_or_else(|| io_err(&csv_path, "missing column channels"))?;
    let mut plot = LinePlot::new(
        &format!(
            "operations per sample (N_x={}, N_h={}, L={})",
            args.n_x, args.n_h, args.l
        ),
        "channels (J = K = M)",
        "operations",
    )
    .log_y();
    for name in ["mcfxlms_mult", "mcfxlms_add", "mcalms_mult", "mcalms_add"] {
        if let Some(i) = t.index(name) {
            plot.add(name, t.xy(ch, i));
        }
    }
    save_svg(&dir.join("complexity.svg"), &plot)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<(), Failure> {
    let mut banks: Vec<(String, FilterBank)> = Vec::new();
    for path in &args.snapshots {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let (_, bank) = bank_from_json(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut label = stem.clone();
        let mut k = 2;
        while banks.iter().any(|(l, _)| *l == label) {
            label = format!("{stem}{k}");
            k += 1;
        }
        banks.push((label, bank));
    }
    let dir = args.out.out.join(&args.name);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let refs: Vec<(&str, &FilterBank)> = banks.iter().map(|(l, b)| (l.as_str(), b)).collect();
    let csv_path = dir.join("spectrum.csv");
    write_atomic(
        &csv_path,
        &spectrum_csv(&refs, args.sample_rate, args.points),
    )?;

    if let Some(band) = &args.band {
        let (lo, hi) = (band[0], band[1]);
        if !(0.0 <= lo && lo < hi && hi <= args.sample_rate / 2.0) {
            return Err(Failure::Usage(format!(
                "--band {lo} {hi} must satisfy 0 <= LOW < HIGH <= Nyquist"
            )));
        }
        for (label, bank) in &banks {
            for ((r, c), f) in bank.iter() {
                println!(
                    "{label}_{}{}: mean {:.2} dB over {lo}-{hi} Hz",
                    r + 1,
                    c + 1,
                    f.band_mean_db(lo, hi, args.sample_rate)
                );
            }
        }
    }
    let plot = spectrum_plot(&csv_path, "filter magnitude responses")?;
    save_svg(&dir.join("spectrum.svg"), &plot)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_show_config(names: &[String]) -> Result<(), Failure> {
    let selected: Vec<Experiment> = if names.is_empty() {
        presets()
    } else {
        names
            .iter()
            .map(|n| {
                preset(n).ok_or_else(|| {
                    Failure::Usage(format!(
                        "unknown preset `{n}` (known: {})",
                        preset_names().join(", ")
                    ))
                })
            })
            .collect::<Result<_, _>>()?
    };
    for (i, exp) in selected.iter().enumerate() {
        if i > 0 {
            println!();
        }
        println!("# ---- preset {} ----", exp.name);
        print!(
            "{}",
            toml::to_string_pretty(exp).map_err(|e| Failure::Usage(e.to_string()))?
        );
    }
    Ok(())
}
