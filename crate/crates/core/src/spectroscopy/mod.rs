//! Power spectral densities of detector currents and their ensemble average.

mod experiment;

pub use experiment::{
    spectrum_sweep, weak_spectroscopy_experiment, BuiltSystem, ComparisonRow, Engine, GammaResult, Model, RabiQubit,
    SpectroscopyConfig, SpectroscopyResult, SweepPoint, SweepSettings, Verdicts,
};

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::algebra::Operator;
use crate::measurement::{run_trajectory, Monitored, RunSpec};
use crate::{Error, Result, C64};

/// Shortest record accepted by [`psd`].
pub const MIN_SAMPLES: usize = 64;
/// Trajectories per reduction chunk. Fixed so the summation order does not
/// depend on the thread count.
const CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

/// Reusable one-sided periodogram for records of a fixed length.
pub struct Periodogram {
    n: usize,
    dt: f64,
    detrend: bool,
    weights: Vec<f64>,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Periodogram {
    pub fn new(n: usize, dt: f64, detrend: bool, window: Window) -> Result<Self> {
        if n < MIN_SAMPLES {
            return Err(Error::TooShort { len: n, min: MIN_SAMPLES });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("sample spacing must be positive, got {dt}")));
        }
        let weights: Vec<f64> = match window {
            Window::None => vec![1.0; n],
            Window::Hann => {
                (0..n).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect()
            }
        };
        let norm = weights.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self { n, dt, detrend, weights, norm, fft })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of one-sided bins, `⌊n/2⌋ + 1`.
    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// `f_j = j / (n dt)`.
    pub fn frequencies(&self) -> Vec<f64> {
        let df = 1.0 / (self.n as f64 * self.dt);
        (0..self.bins()).map(|j| j as f64 * df).collect()
    }

    /// `S_j = 2 dt |Σ_k w_k I_k e^{−2πi jk/n}|² / Σ_k w_k²`, DC and Nyquist halved.
    pub fn compute(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: samples.len() });
        }
        let mean = if self.detrend { samples.iter().sum::<f64>() / self.n as f64 } else { 0.0 };
        let mut buf: Vec<C64> =
            samples.iter().zip(&self.weights).map(|(&x, &w)| C64::new(w * (x - mean), 0.0)).collect();
        self.fft.process(&mut buf);
        let scale = 2.0 * self.dt / self.norm;
        let mut out: Vec<f64> = buf[..self.bins()].iter().map(|z| scale * z.norm_sqr()).collect();
        out[0] *= 0.5;
        if self.n.is_multiple_of(2) {
            *out.last_mut().unwrap() *= 0.5;
        }
        Ok(out)
    }
}

/// One-sided periodogram of `samples` spaced by `dt`: returns `(f_j, S_j)`.
pub fn psd(samples: &[f64], dt: f64, detrend: bool, window: Window) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = Periodogram::new(samples.len(), dt, detrend, window)?;
    Ok((p.frequencies(), p.compute(samples)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub run: RunSpec,
    pub trajectories: usize,
    pub seed: u64,
    pub detrend: bool,
    pub window: Window,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { run: RunSpec::default(), trajectories: 2000, seed: 0, detrend: false, window: Window::None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumResult {
    /// Cycles per unit time.
    pub freq: Vec<f64>,
    pub psd_mean: Vec<f64>,
    /// `None` when fewer than two trajectories were used.
    pub psd_stderr: Option<Vec<f64>>,
    pub n_requested: usize,
    pub n_used: usize,
    pub n_diverged: usize,
    /// Divergence times of the discarded trajectories, in trajectory order.
    pub divergence_times: Vec<f64>,
    /// Largest `|Tr σ⁰ − 1|` over all trajectories.
    pub max_trace_error: f64,
    /// Largest Hermiticity defect of the system state over all trajectories.
    pub max_hermiticity_defect: f64,
    /// Free-form echo of the configuration that produced the spectrum.
    pub config: serde_json::Value,
}

impl SpectrumResult {
    pub fn invariants(&self) -> crate::measurement::Invariants {
        crate::measurement::Invariants {
            max_trace_error: self.max_trace_error,
            max_hermiticity_defect: self.max_hermiticity_defect,
        }
    }

    pub fn df(&self) -> f64 {
        self.freq.get(1).copied().unwrap_or(0.0)
    }

    pub fn diverged_fraction(&self) -> f64 {
        self.n_diverged as f64 / self.n_requested.max(1) as f64
    }
}

#[derive(Default)]
struct Partial {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    used: usize,
    diverged: Vec<f64>,
    max_trace_error: f64,
    max_hermiticity_defect: f64,
}

impl Partial {
    fn absorb(&mut self, other: Partial) {
        if self.sum.is_empty() {
            self.sum = other.sum;
            self.sum_sq = other.sum_sq;
        } else if !other.sum.is_empty() {
            self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
            self.sum_sq.iter_mut().zip(&other.sum_sq).for_each(|(a, b)| *a += b);
        }
        self.used += other.used;
        self.diverged.extend(other.diverged);
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(other.max_hermiticity_defect);
    }
}

/// Mean periodogram over `cfg.trajectories` trajectories from `x0`.
///
/// Trajectory `i` uses noise stream `i` of `cfg.seed`. Diverged trajectories are
/// counted and excluded. The result does not depend on the rayon pool size.
pub fn ensemble_spectrum<S: Monitored + ?Sized>(sys: &S, x0: &[C64], cfg: &EnsembleConfig) -> Result<SpectrumResult> {
    if cfg.trajectories == 0 {
        return Err(Error::InvalidParameter("at least one trajectory is required".into()));
    }
    cfg.run.validate()?;
    let n = cfg.run.samples();
    let periodogram = Periodogram::new(n, cfg.run.sample_dt(), cfg.detrend, cfg.window)?;
    let observables: [Operator; 0] = [];
    let chunks: Vec<(usize, usize)> =
        (0..cfg.trajectories).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(cfg.trajectories))).collect();
    let partials: Vec<Result<Partial>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut part = Partial::default();
            for i in lo..hi {
                let rec = run_trajectory(sys, x0, &observables, &cfg.run, cfg.seed, i as u64)?;
                part.max_trace_error = part.max_trace_error.max(rec.max_trace_error);
                part.max_hermiticity_defect = part.max_hermiticity_defect.max(rec.max_hermiticity_defect);
                if rec.diverged {
                    part.diverged.push(rec.divergence_time.unwrap_or(f64::NAN));
                    continue;
                }
                let s = periodogram.compute(&rec.current)?;
                if part.sum.is_empty() {
                    part.sum = vec![0.0; s.len()];
                    part.sum_sq = vec![0.0; s.len()];
                }
                for (j, v) in s.into_iter().enumerate() {
                    part.sum[j] += v;
                    part.sum_sq[j] += v * v;
                }
                part.used += 1;
            }
            Ok(part)
        })
        .collect();
    let mut total = Partial::default();
    for p in partials {
        total.absorb(p?);
    }
    if total.used == 0 {
        return Err(Error::AllDiverged { requested: cfg.trajectories });
    }
    let m = total.used as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s / m).collect();
    let stderr = (total.used > 1).then(|| {
        total.sum_sq.iter().zip(&mean).map(|(sq, mu)| ((sq - m * mu * mu).max(0.0) / (m - 1.0) / m).sqrt()).collect()
    });
    Ok(SpectrumResult {
        freq: periodogram.frequencies(),
        psd_mean: mean,
        psd_stderr: stderr,
        n_requested: cfg.trajectories,
        n_used: total.used,
        n_diverged: total.diverged.len(),
        divergence_times: total.diverged,
        max_trace_error: total.max_trace_error,
        max_hermiticity_defect: total.max_hermiticity_defect,
        config: serde_json::Value::Null,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeakMetrics {
    pub f_peak: f64,
    /// Height above the noise floor.
    pub height: f64,
    pub fwhm: f64,
    pub noise_floor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeakAnalysis {
    pub noise_floor: f64,
    /// Frequency of the largest bin anywhere, DC band included.
    pub global_max_freq: f64,
    /// `None` when no bin clears `floor + 3·stderr`.
    pub peak: Option<PeakMetrics>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Interpolated half-height crossings `(left, right)` in fractional bins.
fn crossings(s: &[f64], j: usize, half: f64) -> (f64, f64) {
    let mut left = 0.0;
    let mut i = j;
    while i > 0 {
        if s[i - 1] < half {
            left = (i - 1) as f64 + (half - s[i - 1]) / (s[i] - s[i - 1]);
            break;
        }
        i -= 1;
    }
    let mut right = (s.len() - 1) as f64;
    let mut i = j;
    while i + 1 < s.len() {
        if s[i + 1] < half {
            right = i as f64 + (s[i] - half) / (s[i] - s[i + 1]);
            break;
        }
        i += 1;
    }
    (left, right)
}

/// Peak position, height and FWHM outside the first `exclusion` bins.
///
/// The floor is the median outside the exclusion band and the peak region. The
/// peak must exceed `floor + 3·stderr` at its bin; without a standard error the
/// spread is `1.4826·MAD` of the out-of-band bins.
pub fn peak_metrics(freq: &[f64], psd: &[f64], stderr: Option<&[f64]>, exclusion: usize) -> Result<PeakAnalysis> {
    if psd.is_empty() || psd.len() != freq.len() {
        return Err(Error::InvalidParameter("spectrum must be non-empty with matching grid".into()));
    }
    if exclusion + 2 > psd.len() {
        return Err(Error::TooShort { len: psd.len(), min: exclusion + 2 });
    }
    let global = (0..psd.len()).max_by(|&a, &b| psd[a].total_cmp(&psd[b])).unwrap();
    let band = &psd[exclusion..];
    let j = exclusion + (0..band.len()).max_by(|&a, &b| band[a].total_cmp(&band[b])).unwrap();
    let df = freq[1] - freq[0];

    let mut floor = median(band.to_vec());
    for _ in 0..2 {
        let (l, r) = crossings(psd, j, floor + 0.5 * (psd[j] - floor));
        // Exclude twice the half-width on each side of the peak.
        let w = (r - l).max(1.0);
        let (lo, hi) = ((l - w).floor(), (r + w).ceil());
        let rest: Vec<f64> =
            (exclusion..psd.len()).filter(|&i| (i as f64) < lo || (i as f64) > hi).map(|i| psd[i]).collect();
        if rest.len() >= 3 {
            floor = median(rest);
        }
    }
    let spread = match stderr {
        Some(se) => 3.0 * se[j],
        None => {
            let dev: Vec<f64> = band.iter().map(|v| (v - floor).abs()).collect();
            3.0 * 1.4826 * median(dev)
        }
    };
    let analysis = |peak| PeakAnalysis { noise_floor: floor, global_max_freq: freq[global], peak };
    if !(psd[j] > floor + spread) {
        return Ok(analysis(None));
    }
    let (l, r) = crossings(psd, j, floor + 0.5 * (psd[j] - floor));
    Ok(analysis(Some(PeakMetrics { f_peak: freq[j], height: psd[j] - floor, fwhm: (r - l) * df, noise_floor: floor })))
}

impl SpectrumResult {
    pub fn peak_metrics(&self, exclusion: usize) -> Result<PeakAnalysis> {
        peak_metrics(&self.freq, &self.psd_mean, self.psd_stderr.as_deref(), exclusion)
    }
}
