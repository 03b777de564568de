//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (divergence, failed validation), 4 I/O error.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{load_config, RunConfig};
use crate::hierarchy::truncation_report;
use crate::io::{format_matrix, sidecar_path, write_csv, write_json, Sidecar};
use crate::measurement::{run_deterministic, run_trajectory, TrajectoryRecord};
use crate::spectroscopy::{spectrum_sweep, SweepPoint, SweepSettings};
use crate::validation::{validate_suite, SuiteOptions};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "shem", version, about = "Stochastic HEOM under continuous dispersive measurement")]
pub struct Cli {
    /// Worker threads for trajectory ensembles (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the dispersive-frame operators and regime diagnostics.
    Dispersive {
        /// JSON configuration (or a sidecar from an earlier run).
        config: PathBuf,
    },
    /// Unconditioned hierarchy evolution: expectation values over time.
    Heom(RunArgs),
    /// One conditioned trajectory with its detector current.
    Trajectory {
        #[command(flatten)]
        run: RunArgs,
        /// Noise stream of the master seed.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Ensemble-averaged detector spectra, optionally swept over γ.
    Spectroscopy(RunArgs),
    /// Run the oracle suite and print a pass/fail report as JSON.
    Validate {
        /// Reduced subset.
        #[arg(long)]
        quick: bool,
        /// Flip the terminator sign in the Markov-limit check (negative control).
        #[arg(long)]
        tamper_terminator: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration (or a sidecar from an earlier run).
    pub config: PathBuf,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Hierarchy depth K.
    #[arg(long)]
    pub tier: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(n) = self.trajectories {
            cfg.run.trajectories = n;
        }
        if let Some(k) = self.tier {
            cfg.hierarchy.k = Some(k);
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 4,
        Error::AllDiverged { .. } | Error::TooShort { .. } => 3,
        _ => 2,
    }
}

/// Numerical failure reported after the outputs were written.
#[derive(Debug)]
pub struct Failed(pub String);

fn output_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(format!("{}_{name}", cfg.output.prefix))
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Failed(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}

fn dispatch(cmd: &Command) -> Result<Option<Failed>> {
    match cmd {
        Command::Dispersive { config } => cmd_dispersive(&load_config(config)?).map(|()| None),
        Command::Heom(a) => cmd_heom(&a.load()?),
        Command::Trajectory { run, stream } => cmd_trajectory(&run.load()?, *stream),
        Command::Spectroscopy(a) => cmd_spectroscopy(&a.load()?),
        Command::Validate { quick, tamper_terminator, out } => {
            cmd_validate(SuiteOptions { quick: *quick, tamper_terminator: *tamper_terminator }, out.as_deref())
        }
    }
}

pub fn cmd_dispersive(cfg: &RunConfig) -> Result<()> {
    let r = cfg.resolve()?;
    let f = &r.model.frame;
    let mut out = String::new();
    let mut section = |name: &str, op: &crate::Operator| {
        out.push_str(&format!("{name}:\n{}", format_matrix(op)));
    };
    section("X", &f.x);
    section("O_S", &f.o_s);
    section("Lambda", &f.lambda);
    section("H_S^D", &f.h_s_d);
    for (m, (s, q)) in f.s_tilde.iter().zip(&f.q).enumerate() {
        section(&format!("S~_{m}"), s);
        section(&format!("Q_{m}"), q);
    }
    let bc = r.model.bad_cavity()?;
    let alpha = r.model.meas.alpha()?;
    out.push_str(&format!("alpha: {:.6e}{:+.6e}i\n", alpha.re, alpha.im));
    out.push_str(&format!("dispersive_ratio: {:.6e}\n", f.dispersive_ratio));
    out.push_str(&format!("epsilon: {:.6e}\n", bc.epsilon));
    out.push_str(&format!("bad_cavity_ratio: {:.6e} (spectral), {:.6e} (trace)\n", bc.ratio_spectral, bc.ratio_trace));
    print!("{out}");
    for w in &f.warnings {
        warn(w);
    }
    if !bc.valid {
        warn(&format!("bad-cavity parameter {:.3} exceeds 0.1", bc.epsilon));
    }
    Ok(())
}

fn series_columns<'a>(
    rec: &'a TrajectoryRecord,
    names: &[String],
    with_current: bool,
) -> (Vec<String>, Vec<&'a [f64]>) {
    let mut header = vec!["t".to_string()];
    let mut cols: Vec<&[f64]> = vec![&rec.times];
    if with_current {
        header.push("current".into());
        cols.push(&rec.current);
    }
    for (n, s) in names.iter().zip(&rec.observables) {
        header.push(format!("obs_{n}"));
        cols.push(s);
    }
    header.push("trace".into());
    cols.push(&rec.trace);
    let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    (header, cols.into_iter().map(|c| &c[..n]).collect())
}

pub fn cmd_heom(cfg: &RunConfig) -> Result<Option<Failed>> {
    let r = cfg.resolve()?;
    let h = &r.config.hierarchy;
    let sys = r.model.build(h.engine, r.k, &h.options(), &h.full())?;
    let trunc = truncation_report(sys.space(), &r.model.baths, &r.model.frame, &r.model.drive);
    if trunc.warning {
        warn(&format!("truncation ratio {:.2} below 10; increase the tier", trunc.ratio));
    }
    let x0 = sys.initial_state(&r.model.rho0)?.data;
    let rec = run_deterministic(sys.monitored(), &x0, &r.operators(), &r.config.run.spec())?;
    let names: Vec<String> = r.observables.iter().map(|o| o.name.clone()).collect();
    let (header, cols) = series_columns(&rec, &names, false);
    let path = output_path(&r.config, "heom.csv");
    write_csv(&path, &header, &cols)?;
    let details = json!({
        "k": r.k,
        "n_aux": sys.space().len(),
        "truncation": trunc,
        "max_trace_error": rec.max_trace_error,
        "max_hermiticity_defect": rec.max_hermiticity_defect,
        "diverged": rec.diverged,
        "divergence_time": rec.divergence_time,
    });
    let n_div = usize::from(rec.diverged);
    write_json(&sidecar_path(&path), &Sidecar::new("heom", &r.config, r.config.run.seed, n_div, details))?;
    println!("{}", path.display());
    Ok(rec.diverged.then(|| Failed(format!("hierarchy diverged at t = {:?}", rec.divergence_time))))
}

pub fn cmd_trajectory(cfg: &RunConfig, stream: u64) -> Result<Option<Failed>> {
    let r = cfg.resolve()?;
    let h = &r.config.hierarchy;
    let sys = r.model.build(h.engine, r.k, &h.options(), &h.full())?;
    let x0 = sys.initial_state(&r.model.rho0)?.data;
    let seed = r.config.run.seed;
    let rec = run_trajectory(sys.monitored(), &x0, &r.operators(), &r.config.run.spec(), seed, stream)?;
    let names: Vec<String> = r.observables.iter().map(|o| o.name.clone()).collect();
    let (header, cols) = series_columns(&rec, &names, true);
    let path = output_path(&r.config, &format!("trajectory_{stream}.csv"));
    write_csv(&path, &header, &cols)?;
    let details = json!({
        "stream": stream,
        "k": r.k,
        "diverged": rec.diverged,
        "divergence_time": rec.divergence_time,
        "max_trace_error": rec.max_trace_error,
        "max_hermiticity_defect": rec.max_hermiticity_defect,
        "max_purity": rec.max_purity,
    });
    write_json(&sidecar_path(&path), &Sidecar::new("trajectory", &r.config, seed, usize::from(rec.diverged), details))?;
    println!("{}", path.display());
    Ok(rec.diverged.then(|| Failed(format!("trajectory diverged at t = {:?}", rec.divergence_time))))
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

pub fn cmd_spectroscopy(cfg: &RunConfig) -> Result<Option<Failed>> {
    let base = cfg.resolve()?;
    let envs = cfg.bath.as_ref().map(|b| b.environments.clone()).unwrap_or_default();
    let lambda = envs.first().map_or(0.0, |e| e.lambda);
    let beta = cfg.bath.as_ref().map_or(f64::NAN, |b| b.beta);
    let points = if cfg.spectroscopy.gammas.is_empty() {
        let gamma = envs.first().map_or(0.0, |e| e.gamma);
        vec![SweepPoint { gamma, lambda, beta, k: base.k, model: base.model.clone() }]
    } else {
        cfg.spectroscopy
            .gammas
            .iter()
            .map(|&g| {
                let r = cfg.resolve_with(Some(g))?;
                Ok(SweepPoint { gamma: g, lambda, beta, k: r.k, model: r.model })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let h = &base.config.hierarchy;
    let settings = SweepSettings {
        engine: h.engine,
        hierarchy: h.options(),
        full: h.full(),
        ensemble: base.config.run.ensemble(),
        exclusion_bins: cfg.spectroscopy.exclusion_bins,
        rabi_frequency: base.rabi_frequency,
    };
    let result = spectrum_sweep(points, &settings)?;
    for w in &result.warnings {
        warn(w);
    }
    let seed = base.config.run.seed;
    let mut files = Vec::new();
    for g in &result.results {
        let s = &g.spectrum;
        let nan = vec![f64::NAN; s.freq.len()];
        let stderr = s.psd_stderr.as_deref().unwrap_or(&nan);
        let path = output_path(&base.config, &format!("spectrum_gamma{}.csv", g.gamma));
        let header = ["freq".to_string(), "psd".into(), "psd_stderr".into()];
        write_csv(&path, &header, &[&s.freq, &s.psd_mean, stderr])?;
        if s.psd_stderr.is_none() {
            warn("single trajectory: psd_stderr column is undefined (nan)");
        }
        let details = json!({
            "gamma": g.gamma,
            "k": g.k,
            "n_requested": s.n_requested,
            "n_used": s.n_used,
            "stderr_available": s.psd_stderr.is_some(),
            "divergence_times": s.divergence_times,
            "max_trace_error": s.max_trace_error,
            "max_hermiticity_defect": s.max_hermiticity_defect,
            "peaks": g.peaks,
            "bad_cavity": g.bad_cavity,
            "truncation": g.truncation,
        });
        write_json(&sidecar_path(&path), &Sidecar::new("spectroscopy", &base.config, seed, s.n_diverged, details))?;
        files.push(path);
    }
    let t = &result.table;
    let col = |f: &dyn Fn(&crate::spectroscopy::ComparisonRow) -> f64| t.iter().map(f).collect::<Vec<f64>>();
    let cols = [
        col(&|r| r.gamma),
        col(&|r| r.lambda),
        col(&|r| r.beta),
        col(&|r| opt(r.f_peak)),
        col(&|r| opt(r.fwhm)),
        col(&|r| r.noise_floor),
        col(&|r| r.n_used as f64),
        col(&|r| r.n_diverged as f64),
    ];
    let header: Vec<String> =
        ["gamma", "lambda", "beta", "f_peak", "fwhm", "noise_floor", "n_used", "n_diverged"].map(String::from).into();
    let table_path = output_path(&base.config, "table.csv");
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    write_csv(&table_path, &header, &refs)?;
    let n_div: usize = t.iter().map(|r| r.n_diverged).sum();
    let verdict_path = output_path(&base.config, "verdicts.json");
    let details = json!({
        "verdicts": result.verdicts,
        "rabi_frequency": result.rabi_frequency,
        "white_level": result.white_level,
        "table": result.table,
        "warnings": result.warnings,
    });
    write_json(&verdict_path, &Sidecar::new("spectroscopy", &base.config, seed, n_div, details))?;
    files.push(table_path);
    files.push(verdict_path);
    let mut stdout = std::io::stdout().lock();
    for f in &files {
        let _ = writeln!(stdout, "{}", f.display());
    }
    Ok(None)
}

pub fn cmd_validate(opts: SuiteOptions, out: Option<&Path>) -> Result<Option<Failed>> {
    let report = validate_suite(opts)?;
    for c in &report.checks {
        eprintln!(
            "{:4} {} (value {:.3e}, tolerance {:.1e}; {})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.detail
        );
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    println!("{text}");
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok((!report.passed).then(|| {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Failed(format!("validation failed: {}", failed.join("; ")))
    }))
}
