//! Weak-measurement spectroscopy of a Rabi-driven qubit for three bath
//! cut-offs. Usage: `weak_spectroscopy [trajectories] [t_end] [lambda]`.

use shem::measurement::RunSpec;
use shem::spectroscopy::{weak_spectroscopy_experiment, SpectroscopyConfig};

fn main() -> shem::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let mut cfg = SpectroscopyConfig::default();
    cfg.ensemble.trajectories = args.first().map_or(200, |&n| n as usize);
    cfg.ensemble.run =
        RunSpec { dt: 5e-3, t_end: args.get(1).copied().unwrap_or(100.0), stride: 2, ..RunSpec::default() };
    cfg.lambda = args.get(2).copied().unwrap_or(cfg.lambda);
    cfg.ensemble.seed = 7;

    let start = std::time::Instant::now();
    let out = weak_spectroscopy_experiment(&cfg)?;
    println!("Rabi frequency {:.4}, white level {}", out.rabi_frequency.unwrap_or(f64::NAN), out.white_level);
    println!(
        "{:>6} {:>3} {:>10} {:>10} {:>10} {:>10} {:>6}",
        "gamma", "K", "f_peak", "fwhm", "floor", "global", "diverg"
    );
    for (row, r) in out.table.iter().zip(&out.results) {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:>6} {:>3} {:>10} {:>10} {:>10.3} {:>10.4} {:>6}",
            row.gamma,
            r.k,
            show(row.f_peak),
            show(row.fwhm),
            row.noise_floor,
            r.peaks.global_max_freq,
            row.n_diverged
        );
    }
    if let Some(v) = out.verdicts {
        println!("{v:?}");
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
