//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use shem::algebra::{pauli, Operator};
use shem::bath::BathSpec;
use shem::dispersive::build_frame;
use shem::hierarchy::{HierarchyOptions, TerminatorForm};
use shem::measurement::{run_deterministic, run_trajectory, Invariants, RunSpec};
use shem::sde::Scheme;
use shem::spectroscopy::{weak_spectroscopy_experiment, RabiQubit, SpectroscopyConfig, SpectroscopyResult};
use shem::validation::{
    cross_check_elimination, markov_limit_check, pure_dephasing_check, strong_order_slopes, EliminationSetup,
    PURE_DEPHASING_CASES,
};

struct Outcome {
    id: u32,
    passed: bool,
}

#[derive(Default)]
struct Ledger {
    outcomes: Vec<Outcome>,
    deterministic: Invariants,
    stochastic: Invariants,
}

impl Ledger {
    fn record(&mut self, id: u32, title: &str, elapsed: Duration, result: Result<(bool, String), String>) {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!(
            "criterion {id:>2} [{}] {title}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        self.outcomes.push(Outcome { id, passed });
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn within(limit_s: f64, elapsed: Duration) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn criterion_1(ledger: &mut Ledger) -> Result<(bool, String), String> {
    let mut worst = 0.0f64;
    let mut all = true;
    for &(lambda, gamma, beta, l, k, dt) in &PURE_DEPHASING_CASES {
        let c = pure_dephasing_check(&BathSpec { lambda, gamma, beta, l }, 1.0, k, dt).map_err(|e| e.to_string())?;
        ledger.deterministic = ledger.deterministic.merge(c.invariants.unwrap_or_default());
        worst = worst.max(c.value);
        all &= c.passed;
    }
    Ok((all && worst <= 1e-3, format!("max relative coherence error {worst:.2e} (tol 1e-3) over 4 cases")))
}

fn criterion_2(ledger: &mut Ledger) -> Result<(bool, String), String> {
    let good = markov_limit_check(TerminatorForm::DoubleCommutator).map_err(|e| e.to_string())?;
    let tampered = markov_limit_check(TerminatorForm::FlippedSign).map_err(|e| e.to_string())?;
    ledger.deterministic = ledger.deterministic.merge(good.invariants.unwrap_or_default());
    Ok((
        good.value <= 0.02 && !tampered.passed,
        format!(
            "max |d<sigma_x>| / max|<sigma_x>| = {:.2e} (tol 0.02); flipped terminator gives {:.2e}",
            good.value, tampered.value
        ),
    ))
}

/// Fig.-2 qubit with a γ = 10 bath, started in the ground state so that the
/// Rabi oscillation is visible in both ⟨σ_z⟩ and the current.
fn criterion_3(ledger: &mut Ledger) -> Result<(bool, String), String> {
    let n = 10_000usize;
    let q = RabiQubit::default();
    let model = q.model(Some(BathSpec { lambda: 0.05, gamma: 10.0, beta: 0.05, l: 0 })).map_err(|e| e.to_string())?;
    let sys = model.shem(3, &HierarchyOptions::default()).map_err(|e| e.to_string())?;
    let x0 = sys.initial_state(&pauli::ground()).map_err(|e| e.to_string())?.data;
    let run = RunSpec { dt: 5e-3, t_end: 10.0, stride: 10, scheme: Scheme::Platen, renormalize: true };
    let obs = [pauli::sigma_z()];
    let det = run_deterministic(&sys, &x0, &obs, &run).map_err(|e| e.to_string())?;
    ledger.deterministic = ledger.deterministic.merge(det.invariants());
    let recs: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| run_trajectory(&sys, &x0, &obs, &run, 2024, i as u64))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let samples = det.len();
    let mut worst_z = 0.0f64;
    let mut worst_i = 0.0f64;
    let mut n_div = 0;
    for r in &recs {
        ledger.stochastic = ledger.stochastic.merge(r.invariants());
        n_div += usize::from(r.diverged);
    }
    let stats = |vals: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut s2, mut m) = (0.0, 0.0, 0.0);
        for v in vals {
            s += v;
            s2 += v * v;
            m += 1.0;
        }
        let mean = s / m;
        let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
        (mean, (var / m).sqrt())
    };
    for k in 0..samples {
        let (mz, sz) = stats(&mut recs.iter().map(|r| r.observables[0][k]));
        let (mi, si) = stats(&mut recs.iter().map(|r| r.current[k]));
        let dz = (mz - det.observables[0][k]).abs();
        let di = (mi - det.current[k]).abs();
        worst_z = worst_z.max(if dz == 0.0 { 0.0 } else { dz / sz });
        worst_i = worst_i.max(if di == 0.0 { 0.0 } else { di / si });
    }
    Ok((
        n_div == 0 && worst_z <= 4.0 && worst_i <= 4.0,
        format!(
            "N = {n}, {samples} samples: max |mean - deterministic| = {worst_z:.2} SE for <sigma_z>, {worst_i:.2} SE for the current"
        ),
    ))
}

fn spectroscopy(lambda: f64) -> shem::Result<SpectroscopyResult> {
    let mut cfg = SpectroscopyConfig { lambda, ..SpectroscopyConfig::default() };
    cfg.ensemble.trajectories = 2000;
    cfg.ensemble.seed = 7;
    cfg.ensemble.run = RunSpec { dt: 5e-3, t_end: 100.0, stride: 2, scheme: Scheme::Platen, renormalize: true };
    weak_spectroscopy_experiment(&cfg)
}

fn table(out: &SpectroscopyResult) -> String {
    out.table
        .iter()
        .map(|r| {
            format!(
                "gamma {}: f_peak {}, fwhm {}",
                r.gamma,
                r.f_peak.map_or("-".into(), |f| format!("{f:.3}")),
                r.fwhm.map_or("-".into(), |f| format!("{f:.3}"))
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn criterion_5(ledger: &mut Ledger, out: &SpectroscopyResult) -> Result<(bool, String), String> {
    for r in &out.results {
        ledger.stochastic = ledger.stochastic.merge(r.spectrum.invariants());
    }
    let v = out.verdicts.ok_or("no verdicts")?;
    let passed = v.peak_near_rabi && v.shift_monotone && v.broadening_monotone && v.offset_present;
    Ok((
        passed,
        format!(
            "{}; near Rabi {}, shift monotone {}, broadening monotone {}, offset {} (floor {:.1} vs white {})",
            table(out),
            v.peak_near_rabi,
            v.shift_monotone,
            v.broadening_monotone,
            v.offset_present,
            out.table[0].noise_floor,
            out.white_level
        ),
    ))
}

fn criterion_6(
    ledger: &mut Ledger,
    base: &SpectroscopyResult,
    medium: &SpectroscopyResult,
    strong: &SpectroscopyResult,
) -> Result<(bool, String), String> {
    for out in [medium, strong] {
        for r in &out.results {
            ledger.stochastic = ledger.stochastic.merge(r.spectrum.invariants());
        }
    }
    let broader = base.table.iter().zip(&medium.table).all(|(a, b)| match (a.fwhm, b.fwhm) {
        (Some(wa), Some(wb)) => wb > wa,
        _ => false,
    });
    let rabi = strong.rabi_frequency.ok_or("no Rabi frequency")?;
    let exclusion = SpectroscopyConfig::default().exclusion_bins as f64;
    let dc_dominated = strong.results.iter().filter(|r| r.gamma <= 10.0).all(|r| {
        let df = r.spectrum.df();
        let no_rabi_peak = r.peaks.peak.is_none_or(|p| (p.f_peak - rabi).abs() > 0.1 * rabi + df);
        no_rabi_peak || r.peaks.global_max_freq < exclusion * df
    });
    let diverged: Vec<String> = strong
        .results
        .iter()
        .chain(&medium.results)
        .map(|r| format!("{:.1}%", 100.0 * r.spectrum.diverged_fraction()))
        .collect();
    Ok((
        broader && dc_dominated,
        format!(
            "lambda 0.25 broader at every gamma: {broader} [{}]; lambda 1, gamma <= 10 off the Rabi line: {dc_dominated} [{}]; diverged fractions (lambda 1 then 0.25, by gamma) {}",
            table(medium),
            table(strong),
            diverged.join(", ")
        ),
    ))
}

fn criterion_7(ledger: &mut Ledger) -> Result<(bool, String), String> {
    let r = cross_check_elimination(&EliminationSetup::default()).map_err(|e| e.to_string())?;
    ledger.deterministic = ledger.deterministic.merge(r.invariants);
    Ok((
        r.epsilon <= 0.05 + 1e-12 && r.max_trace_distance <= 0.02,
        format!(
            "max trace distance {:.2e} (tol 0.02), epsilon {:.4}, {} Fock levels, top-level population {:.1e}",
            r.max_trace_distance, r.epsilon, r.fock_levels, r.top_level_population
        ),
    ))
}

fn criterion_8() -> Result<(bool, String), String> {
    let (em, platen) = strong_order_slopes(2000, 17);
    Ok((
        (0.4..=0.6).contains(&em) && (0.8..=1.2).contains(&platen),
        format!("Euler-Maruyama {em:.3} (in [0.4, 0.6]), Platen {platen:.3} (in [0.8, 1.2])"),
    ))
}

fn criterion_9() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sets = vec![(0.1, 1.0, 10.0)];
    for _ in 0..10 {
        sets.push((rng.random_range(0.01..0.3), rng.random_range(0.5..3.0), rng.random_range(5.0..30.0)));
    }
    let mut worst = 0.0f64;
    for &(g, omega, omega_c) in &sets {
        let h = pauli::sigma_z().scale_real(omega / 2.0);
        let mu = pauli::sigma_x().scale_real(g);
        let frame = build_frame(&h, &mu, &[], omega_c, 0.0).map_err(|e| e.to_string())?;
        let expected: Operator =
            pauli::sigma_z().scale_real(-2.0 * g * g * omega / (omega_c * omega_c - omega * omega));
        worst = worst.max((&frame.o_s - &expected).max_abs());
    }
    Ok((worst <= 1e-10, format!("max |O_S - closed form| = {worst:.2e} over {} parameter sets", sets.len())))
}

fn criterion_10() -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    let text = r#"{
        "system": {"kind": "rabi_qubit"},
        "bath": {"beta": 0.05, "l": 0, "environments": [{"lambda": 0.05, "gamma": 10}]},
        "run": {"dt": 0.005, "t_end": 20, "stride": 2, "trajectories": 96, "seed": 11},
        "spectroscopy": {"gammas": [50, 10]}
    }"#;
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    let run = |threads: &str, out: &str| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_shem"))
            .args(["--threads", threads, "spectroscopy"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("shem exited with {status}"))
        }
    };
    run("1", "a")?;
    run("4", "b")?;
    let mut same = 0;
    let names = ["shem_spectrum_gamma50.csv", "shem_spectrum_gamma10.csv", "shem_table.csv"];
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("b").join(name)).map_err(|e| e.to_string())?;
        same += usize::from(a == b && !a.is_empty());
    }
    Ok((same == names.len(), format!("{same}/{} CSV files byte-identical between --threads 1 and 4", names.len())))
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();

    let (r, t) = timed(|| criterion_1(&mut ledger));
    ledger.record(1, "pure-dephasing oracle", t, r.map(|(p, d)| (p && within(30.0, t), d)));

    let (r, t) = timed(|| criterion_2(&mut ledger));
    ledger.record(2, "Markovian limit", t, r.map(|(p, d)| (p && within(30.0, t), d)));

    let (r, t) = timed(|| criterion_3(&mut ledger));
    ledger.record(3, "unraveling mean consistency", t, r);

    let (base, t5) = timed(|| spectroscopy(0.05));
    let r = base.as_ref().map_err(|e| e.to_string()).and_then(|b| criterion_5(&mut ledger, b));
    ledger.record(5, "weak-spectroscopy trends", t5, r.map(|(p, d)| (p && within(1200.0, t5), d)));

    let ((medium, strong), t6) = timed(|| (spectroscopy(0.25), spectroscopy(1.0)));
    let r = match (&base, &medium, &strong) {
        (Ok(b), Ok(m), Ok(s)) => criterion_6(&mut ledger, b, m, s),
        _ => Err("a spectroscopy ensemble failed".to_string()),
    };
    ledger.record(6, "strong-coupling trends", t6, r.map(|(p, d)| (p && within(1800.0, t6), d)));

    let (r, t) = timed(|| criterion_7(&mut ledger));
    ledger.record(7, "elimination cross-check", t, r.map(|(p, d)| (p && within(300.0, t), d)));

    let (r, t) = timed(criterion_8);
    ledger.record(8, "SDE strong order", t, r.map(|(p, d)| (p && within(60.0, t), d)));

    let (r, t) = timed(criterion_9);
    ledger.record(9, "dispersive closed form", t, r);

    let (r, t) = timed(criterion_10);
    ledger.record(10, "reproducibility across thread counts", t, r);

    let (det, sto) = (ledger.deterministic, ledger.stochastic);
    let passed = det.max_trace_error <= 1e-8
        && sto.max_trace_error <= 1e-6
        && det.max_hermiticity_defect <= 1e-8
        && sto.max_hermiticity_defect <= 1e-8;
    ledger.record(
        4,
        "trace and Hermiticity invariants",
        Duration::ZERO,
        Ok((
            passed,
            format!(
                "deterministic |Tr-1| {:.1e} (tol 1e-8), stochastic |Tr-1| {:.1e} (tol 1e-6), Hermiticity defect {:.1e} (tol 1e-8)",
                det.max_trace_error,
                sto.max_trace_error,
                det.max_hermiticity_defect.max(sto.max_hermiticity_defect)
            ),
        )),
    );

    ledger.outcomes.sort_by_key(|o| o.id);
    println!("summary:");
    for o in &ledger.outcomes {
        println!("  criterion {:>2}: {}", o.id, if o.passed { "PASS" } else { "FAIL" });
    }
    if ledger.outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
