//! Single-trajectory runner: couples a hierarchy to the SDE engine,
//! synthesizes the detector current and records conditional observables.
//!
//! The current at step `k` is
//!
//! ```text
//! I_k = signal(σ⁰(t_k)) + g ΔW_k / dt
//! ```
//!
//! where `ΔW_k` is the same increment that drives the state update and `g` is
//! the engine's noise gain (`−√(2ηκ)`).

use serde::{Deserialize, Serialize};

use crate::algebra::Operator;
use crate::dispersive::steady_alpha;
use crate::error::{ensure_finite, invalid};
use crate::hierarchy::{expect_vec, FullHeomSystem, ShemSystem};
use crate::sde::{integrate, IntegrateOptions, NoiseStream, Scheme, SdeSystem};
use crate::{Result, C64};

/// Readout cavity and homodyne detector. The local-oscillator amplitude is 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Cavity leakage rate.
    pub kappa: f64,
    /// Detection efficiency.
    pub eta: f64,
    /// Local-oscillator phase.
    pub phi: f64,
    /// Cavity drive amplitude `E_p`.
    pub e_p: C64,
    /// Cavity detuning `Δ = ω_c − ω_p`.
    pub delta: f64,
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(invalid(format!("kappa must be positive and finite, got {}", self.kappa)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        ensure_finite("phi", self.phi)?;
        ensure_finite("delta", self.delta)?;
        ensure_finite("e_p", self.e_p.re)?;
        ensure_finite("e_p", self.e_p.im)
    }

    /// Steady cavity amplitude `α = −iE_p/(iΔ + κ)`.
    pub fn alpha(&self) -> Result<C64> {
        steady_alpha(self.e_p, self.delta, self.kappa)
    }

    /// Drive amplitude giving steady amplitude `alpha`.
    pub fn e_p_for(alpha: C64, kappa: f64, delta: f64) -> C64 {
        C64::i() * alpha * C64::new(kappa, delta)
    }
}

/// An engine whose physical block yields a system state and a detector signal.
pub trait Monitored: SdeSystem {
    /// Reduced system density matrix from the stacked state.
    fn system_state(&self, x: &[C64]) -> Operator;

    /// Deterministic part of the current.
    fn signal(&self, x: &[C64]) -> f64;

    /// Gain multiplying `ΔW/dt` in the current.
    fn current_noise_gain(&self) -> f64;

    /// `Tr[A ρ_S]` without materializing `ρ_S` when possible.
    fn system_expectation(&self, a: &Operator, x: &[C64]) -> f64 {
        expect_vec(a, self.system_state(x).as_slice()).re
    }
}

impl Monitored for ShemSystem {
    fn system_state(&self, x: &[C64]) -> Operator {
        let d = self.hilbert_dim();
        Operator::from_row_major(x[..d * d].to_vec()).expect("square block")
    }

    fn signal(&self, x: &[C64]) -> f64 {
        self.noise_scale() * self.noise_scale() * self.readout_mean(x)
    }

    fn current_noise_gain(&self) -> f64 {
        -self.noise_scale()
    }

    fn system_expectation(&self, a: &Operator, x: &[C64]) -> f64 {
        expect_vec(a, &x[..a.dim() * a.dim()]).re
    }
}

impl Monitored for FullHeomSystem {
    fn system_state(&self, x: &[C64]) -> Operator {
        FullHeomSystem::system_state(self, x)
    }

    fn signal(&self, x: &[C64]) -> f64 {
        self.current_signal(x)
    }

    fn current_noise_gain(&self) -> f64 {
        -self.noise_scale()
    }
}

/// Time grid and integrator settings shared by stochastic and deterministic runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub dt: f64,
    pub t_end: f64,
    /// Block-average the current over this many steps per sample.
    pub stride: usize,
    pub scheme: Scheme,
    pub renormalize: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { dt: 2e-3, t_end: 200.0, stride: 4, scheme: Scheme::Platen, renormalize: true }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(invalid("decimation stride must be at least 1"));
        }
        IntegrateOptions::new(self.scheme, self.dt, self.t_end).map(|_| ())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Number of recorded samples.
    pub fn samples(&self) -> usize {
        self.steps() / self.stride
    }

    /// Spacing of recorded samples.
    pub fn sample_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Current averaged over each sample interval.
    pub current: Vec<f64>,
    /// `observables[j][k] = ⟨A_j⟩(t_k)`.
    pub observables: Vec<Vec<f64>>,
    /// `Re Tr σ⁰(t_k)`.
    pub trace: Vec<f64>,
    pub max_trace_error: f64,
    /// Largest `‖ρ_S − ρ_S†‖` entry seen at any step.
    pub max_hermiticity_defect: f64,
    /// Largest `Tr ρ_S²` seen at any step.
    pub max_purity: f64,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
}

/// Worst-case normalization and Hermiticity of the physical state over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Invariants {
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
}

impl Invariants {
    pub fn merge(self, other: Invariants) -> Invariants {
        Invariants {
            max_trace_error: self.max_trace_error.max(other.max_trace_error),
            max_hermiticity_defect: self.max_hermiticity_defect.max(other.max_hermiticity_defect),
        }
    }
}

impl TrajectoryRecord {
    pub fn invariants(&self) -> Invariants {
        Invariants { max_trace_error: self.max_trace_error, max_hermiticity_defect: self.max_hermiticity_defect }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Hides the diffusion so the schemes take their deterministic branch.
pub(crate) struct DriftOnly<'a, S: ?Sized>(pub(crate) &'a S);

impl<S: SdeSystem + ?Sized> SdeSystem for DriftOnly<'_, S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn drift(&self, t: f64, x: &[C64], out: &mut [C64]) {
        self.0.drift(t, x, out)
    }

    fn diffusion(&self, _t: f64, _x: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
    }

    fn noisy(&self) -> bool {
        false
    }

    fn trace(&self, x: &[C64]) -> Option<C64> {
        self.0.trace(x)
    }

    fn diverged(&self, x: &[C64]) -> bool {
        self.0.diverged(x)
    }
}

fn purity(rho: &Operator) -> f64 {
    rho.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

fn record<S: Monitored + ?Sized, Q: SdeSystem + ?Sized>(
    monitor: &S,
    stepped: &Q,
    x0: &[C64],
    observables: &[Operator],
    run: &RunSpec,
    noise: Option<&mut NoiseStream>,
) -> Result<TrajectoryRecord> {
    run.validate()?;
    let mut opts = IntegrateOptions::new(run.scheme, run.dt, run.t_end)?;
    opts.renormalize = run.renormalize;
    let samples = run.samples();
    let mut out = TrajectoryRecord {
        times: Vec::with_capacity(samples),
        current: Vec::with_capacity(samples),
        observables: vec![Vec::with_capacity(samples); observables.len()],
        trace: Vec::with_capacity(samples),
        max_trace_error: 0.0,
        max_hermiticity_defect: 0.0,
        max_purity: 0.0,
        diverged: false,
        divergence_time: None,
        seed: None,
        stream: None,
    };
    let gain = monitor.current_noise_gain() / run.dt;
    let mut block = 0.0;
    let summary = integrate(stepped, x0, &opts, noise, |k, t, x, dw| {
        let Some(dw) = dw else { return };
        let rho = monitor.system_state(x);
        out.max_purity = out.max_purity.max(purity(&rho));
        out.max_hermiticity_defect = out.max_hermiticity_defect.max(rho.hermiticity_defect());
        if k % run.stride == 0 {
            if k / run.stride >= samples {
                return;
            }
            out.times.push(t);
            for (series, a) in out.observables.iter_mut().zip(observables) {
                series.push(expect_vec(a, rho.as_slice()).re);
            }
            out.trace.push(rho.trace().re);
        }
        block += monitor.signal(x) + gain * dw;
        if (k + 1) % run.stride == 0 && k / run.stride < samples {
            out.current.push(block / run.stride as f64);
            block = 0.0;
        }
    });
    out.max_trace_error = summary.max_trace_error;
    out.diverged = summary.diverged;
    out.divergence_time = summary.divergence_time;
    if out.diverged {
        // Keep only complete samples.
        let n = out.current.len();
        out.times.truncate(n);
        out.trace.truncate(n);
        out.observables.iter_mut().for_each(|s| s.truncate(n));
    }
    Ok(out)
}

/// One conditioned trajectory from `x0` with noise keyed by `(seed, stream)`.
pub fn run_trajectory<S: Monitored + ?Sized>(
    sys: &S,
    x0: &[C64],
    observables: &[Operator],
    run: &RunSpec,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    if run.scheme == Scheme::Rk4 && sys.noisy() {
        return Err(invalid("the rk4 scheme is only available for deterministic runs"));
    }
    let mut noise = NoiseStream::new(seed, stream, run.dt);
    let mut rec = record(sys, sys, x0, observables, run, Some(&mut noise))?;
    rec.seed = Some(seed);
    rec.stream = Some(stream);
    Ok(rec)
}

/// Unconditioned evolution: drift only, current equal to its signal part.
pub fn run_deterministic<S: Monitored + ?Sized>(
    sys: &S,
    x0: &[C64],
    observables: &[Operator],
    run: &RunSpec,
) -> Result<TrajectoryRecord> {
    record(sys, &DriftOnly(sys), x0, observables, run, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::pauli::*;
    use crate::dispersive::{DispersiveFrame, DriveSpec, SystemTone};
    use crate::hierarchy::HierarchyOptions;
    use crate::validation::{lindblad_propagate, LindbladSpec};

    fn meas(kappa: f64, eta: f64, alpha: f64) -> MeasurementConfig {
        let e_p = MeasurementConfig::e_p_for(C64::new(alpha, 0.0), kappa, 0.0);
        MeasurementConfig { kappa, eta, phi: -std::f64::consts::FRAC_PI_2, e_p, delta: 0.0 }
    }

    /// Diagonal frame with `O_S = χσ_z` and nothing else.
    fn dephasing_frame(chi: f64, h: Operator) -> DispersiveFrame {
        let z = Operator::zeros(2);
        DispersiveFrame::from_operators(z.clone(), h, sigma_z().scale_real(chi), vec![], vec![], vec![], 0.0).unwrap()
    }

    fn no_drive() -> DriveSpec {
        DriveSpec { e_p: C64::new(0.0, 0.0), omega_p: 0.0, tones: vec![] }
    }

    #[test]
    fn config_validation() {
        assert!(meas(1.0, 1.0, 1.0).validate().is_ok());
        assert!(meas(0.0, 1.0, 1.0).validate().is_err());
        assert!(meas(1.0, 1.5, 1.0).validate().is_err());
        let m = meas(3.0, 0.5, 2.0);
        assert!((m.alpha().unwrap() - C64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eigenstate_current_statistics() {
        let (kappa, chi) = (20.0, 0.05);
        let frame = dephasing_frame(chi, Operator::zeros(2));
        let m = meas(kappa, 1.0, 1.0);
        let sys = ShemSystem::new(&frame, &[], &m, &no_drive(), 0, &HierarchyOptions::default()).unwrap();
        let rho = excited();
        let x0 = sys.initial_state(&rho).unwrap().data;
        let run = RunSpec { dt: 1e-3, t_end: 20.0, stride: 1, scheme: Scheme::Platen, renormalize: true };
        let rec = run_trajectory(&sys, &x0, &[sigma_z()], &run, 11, 0).unwrap();
        assert!(!rec.diverged);
        assert_eq!(rec.current.len(), run.samples());
        // An O_S eigenstate is a fixed point; the signal is constant.
        let level = sys.signal(&x0);
        assert!(rec.observables[0].iter().all(|&z| (z - 1.0).abs() < 1e-9));
        let n = rec.current.len() as f64;
        let mean = rec.current.iter().sum::<f64>() / n;
        let var = rec.current.iter().map(|i| (i - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_var = 2.0 * kappa / run.dt;
        assert!((mean - level).abs() < 4.0 * (expected_var / n).sqrt());
        assert!((var / expected_var - 1.0).abs() < 0.05);
        // −4η|α|⟨O_S⟩ at φ − arg α = −π/2.
        assert!((level + 4.0 * chi).abs() < 1e-12);
    }

    #[test]
    fn zero_efficiency_gives_zero_current() {
        let frame = dephasing_frame(0.1, sigma_x().scale_real(0.5));
        let sys =
            ShemSystem::new(&frame, &[], &meas(10.0, 0.0, 1.0), &no_drive(), 0, &HierarchyOptions::default()).unwrap();
        assert!(!sys.noisy());
        let x0 = sys.initial_state(&ground()).unwrap().data;
        let run = RunSpec { dt: 1e-3, t_end: 1.0, stride: 5, scheme: Scheme::Platen, renormalize: true };
        let a = run_trajectory(&sys, &x0, &[sigma_z()], &run, 1, 0).unwrap();
        let b = run_trajectory(&sys, &x0, &[sigma_z()], &run, 2, 0).unwrap();
        assert!(a.current.iter().all(|&i| i == 0.0));
        assert_eq!(a.observables, b.observables);
    }

    #[test]
    fn deterministic_run_starts_at_initial_expectations() {
        let frame = dephasing_frame(0.1, sigma_x().scale_real(0.5));
        let sys =
            ShemSystem::new(&frame, &[], &meas(10.0, 1.0, 1.0), &no_drive(), 0, &HierarchyOptions::default()).unwrap();
        let rho = Operator::from_real(2, &[0.7, 0.2, 0.2, 0.3]);
        let x0 = sys.initial_state(&rho).unwrap().data;
        let run = RunSpec { dt: 1e-3, t_end: 0.1, stride: 1, scheme: Scheme::Rk4, renormalize: false };
        let rec = run_deterministic(&sys, &x0, &[sigma_z(), sigma_x()], &run).unwrap();
        assert_eq!(rec.times[0], 0.0);
        assert!((rec.observables[0][0] + 0.4).abs() < 1e-15);
        assert!((rec.observables[1][0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rabi_with_measurement_dephasing_matches_lindblad() {
        let (kappa, chi, alpha, omega_r) = (40.0, 0.1, 2.0, 3.0);
        let h = sigma_x().scale_real(omega_r / 2.0);
        let frame = dephasing_frame(chi, h.clone());
        let m = meas(kappa, 1.0, alpha);
        let sys = ShemSystem::new(&frame, &[], &m, &no_drive(), 0, &HierarchyOptions::default()).unwrap();
        let run = RunSpec { dt: 1e-3, t_end: 4.0, stride: 10, scheme: Scheme::Rk4, renormalize: false };
        let x0 = sys.initial_state(&ground()).unwrap().data;
        let rec = run_deterministic(&sys, &x0, &[sigma_z()], &run).unwrap();
        // Reference: H + |α|²O_S, rate 2|α|²/κ on D[O_S].
        let spec = LindbladSpec {
            h: &h + &sigma_z().scale_real(chi * alpha * alpha),
            channels: vec![(sigma_z().scale_real(chi), 2.0 * alpha * alpha / kappa)],
        };
        let reference = lindblad_propagate(&spec, &ground(), run.dt, run.t_end).unwrap();
        for (k, &t) in rec.times.iter().enumerate() {
            let step = (t / run.dt).round() as usize;
            let z = crate::algebra::expectation(&sigma_z(), &reference[step]).unwrap().re;
            assert!((rec.observables[0][k] - z).abs() < 1e-8, "t = {t}");
        }
        // Oscillates through zero at least once.
        assert!(rec.observables[0].iter().any(|&z| z > 0.0));
    }

    #[test]
    fn ensemble_mean_matches_unconditioned_evolution() {
        let (kappa, chi, alpha) = (20.0, 0.15, 2.0);
        let frame = dephasing_frame(chi, sigma_x().scale_real(1.5));
        let m = meas(kappa, 1.0, alpha);
        let sys = ShemSystem::new(&frame, &[], &m, &no_drive(), 0, &HierarchyOptions::default()).unwrap();
        let x0 = sys.initial_state(&ground()).unwrap().data;
        let run = RunSpec { dt: 2e-3, t_end: 2.0, stride: 50, scheme: Scheme::Platen, renormalize: true };
        let det = run_deterministic(&sys, &x0, &[sigma_z()], &run).unwrap();
        let n = 400;
        let recs: Vec<_> = (0..n).map(|s| run_trajectory(&sys, &x0, &[sigma_z()], &run, 5, s).unwrap()).collect();
        for k in 0..det.len() {
            let vals: Vec<f64> = recs.iter().map(|r| r.observables[0][k]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((mean - det.observables[0][k]).abs() <= 4.0 * sd / (n as f64).sqrt() + 1e-3, "k = {k}");
        }
        for r in &recs {
            // Pure-state trajectories overshoot unit purity by a discretization error
            // that shrinks with dt (about 1e-3 at dt = 2e-3 here).
            assert!(r.max_purity <= 1.0 + 5e-3, "purity {}", r.max_purity);
            assert!(r.max_trace_error <= 1e-9, "trace error {}", r.max_trace_error);
        }
    }

    #[test]
    fn same_seed_same_record() {
        let frame = dephasing_frame(0.1, sigma_x());
        let drive = DriveSpec {
            e_p: C64::new(0.0, 0.0),
            omega_p: 0.0,
            tones: vec![SystemTone { amplitude: C64::new(0.0, 0.0), omega: 1.0 }],
        };
        let sys = ShemSystem::new(&frame, &[], &meas(10.0, 1.0, 1.0), &drive, 0, &HierarchyOptions::default()).unwrap();
        let x0 = sys.initial_state(&ground()).unwrap().data;
        let run = RunSpec { dt: 1e-3, t_end: 1.0, stride: 3, scheme: Scheme::Platen, renormalize: true };
        let a = run_trajectory(&sys, &x0, &[sigma_z()], &run, 9, 4).unwrap();
        let b = run_trajectory(&sys, &x0, &[sigma_z()], &run, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.current.len(), 333);
    }
}
