//! Fixed-step Itô integration under one scalar Wiener process.
//!
//! States are flat complex vectors. Systems implement [`SdeSystem`]; the
//! [`Stepper`] owns the scratch buffers so the inner loop does not allocate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Result, C64};

/// `‖σ^0‖_tr` beyond this counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 100.0;
/// Renormalize when `|Tr σ^0 − 1|` exceeds this.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

pub trait SdeSystem: Sync {
    fn dim(&self) -> usize;

    /// `out = a(t, x)`.
    fn drift(&self, t: f64, x: &[C64], out: &mut [C64]);

    /// `out = b(t, x)`, the coefficient of `dW`.
    fn diffusion(&self, t: f64, x: &[C64], out: &mut [C64]);

    /// False when `b ≡ 0`, letting the integrator skip diffusion work.
    fn noisy(&self) -> bool {
        true
    }

    /// Trace of the physical state, if the state carries one.
    fn trace(&self, _x: &[C64]) -> Option<C64> {
        None
    }

    /// True once the state has left the admissible region.
    fn diverged(&self, x: &[C64]) -> bool {
        !x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Strong order 0.5; drift at the step midpoint.
    EulerMaruyama,
    /// Derivative-free strong order 1.0 with a Heun drift.
    #[default]
    Platen,
    /// Classical fourth-order Runge-Kutta; deterministic systems only.
    Rk4,
}

/// Gaussian increments `ΔW ~ N(0, dt)` from a counter-based generator keyed
/// by `(master seed, stream index)`.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
    sqrt_dt: f64,
    seed: u64,
    stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64, dt: f64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, sqrt_dt: dt.sqrt(), seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_increment(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * self.sqrt_dt
    }
}

/// One-step integrator with owned scratch space.
#[derive(Debug)]
pub struct Stepper {
    scheme: Scheme,
    k: [Vec<C64>; 5],
}

fn axpy(out: &mut [C64], c: f64, x: &[C64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += v * c;
    }
}

impl Stepper {
    pub fn new(scheme: Scheme, dim: usize) -> Self {
        Self { scheme, k: std::array::from_fn(|_| vec![ZERO; dim]) }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Advances `x` from `t` to `t + dt` with increment `dw`.
    pub fn step<S: SdeSystem + ?Sized>(&mut self, sys: &S, t: f64, dt: f64, dw: f64, x: &mut [C64]) {
        let noisy = sys.noisy();
        let [k0, k1, k2, k3, k4] = &mut self.k;
        match self.scheme {
            Scheme::EulerMaruyama => {
                sys.drift(t + 0.5 * dt, x, k0);
                if noisy {
                    sys.diffusion(t, x, k1);
                    axpy(x, dw, k1);
                }
                axpy(x, dt, k0);
            }
            Scheme::Platen => {
                sys.drift(t, x, k0);
                if !noisy {
                    // Heun
                    k2.copy_from_slice(x);
                    axpy(k2, dt, k0);
                    sys.drift(t + dt, k2, k1);
                    axpy(x, 0.5 * dt, k0);
                    axpy(x, 0.5 * dt, k1);
                    return;
                }
                sys.diffusion(t, x, k1);
                let sq = dt.sqrt();
                // Supporting values Ȳ = x + a dt + b ΔW and Υ = x + a dt + b √dt.
                k2.copy_from_slice(x);
                axpy(k2, dt, k0);
                k3.copy_from_slice(k2);
                axpy(k2, dw, k1);
                axpy(k3, sq, k1);
                sys.drift(t + dt, k2, k4);
                sys.diffusion(t, k3, k2);
                let corr = (dw * dw - dt) / (2.0 * sq);
                for i in 0..x.len() {
                    x[i] += 0.5 * dt * (k0[i] + k4[i]) + dw * k1[i] + corr * (k2[i] - k1[i]);
                }
            }
            Scheme::Rk4 => {
                assert!(!noisy, "RK4 is for deterministic systems");
                let h = dt;
                sys.drift(t, x, k0);
                k4.copy_from_slice(x);
                axpy(k4, 0.5 * h, k0);
                sys.drift(t + 0.5 * h, k4, k1);
                k4.copy_from_slice(x);
                axpy(k4, 0.5 * h, k1);
                sys.drift(t + 0.5 * h, k4, k2);
                k4.copy_from_slice(x);
                axpy(k4, h, k2);
                sys.drift(t + h, k4, k3);
                for i in 0..x.len() {
                    x[i] += h / 6.0 * (k0[i] + 2.0 * k1[i] + 2.0 * k2[i] + k3[i]);
                }
            }
        }
    }
}

/// `x + a dt + b ΔW`.
pub fn euler_maruyama_step<S: SdeSystem + ?Sized>(sys: &S, t: f64, dt: f64, dw: f64, x: &[C64]) -> Vec<C64> {
    let mut out = x.to_vec();
    Stepper::new(Scheme::EulerMaruyama, x.len()).step(sys, t, dt, dw, &mut out);
    out
}

/// Derivative-free strong order-1.0 update.
pub fn platen_step<S: SdeSystem + ?Sized>(sys: &S, t: f64, dt: f64, dw: f64, x: &[C64]) -> Vec<C64> {
    let mut out = x.to_vec();
    Stepper::new(Scheme::Platen, x.len()).step(sys, t, dt, dw, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    pub renormalize: bool,
}

impl IntegrateOptions {
    /// `round(t_end/dt)` steps of size `dt`.
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= dt) || !t_end.is_finite() {
            return Err(invalid(format!("run length {t_end} must be at least dt = {dt}")));
        }
        Ok(Self { scheme, dt, steps: (t_end / dt).round() as usize, renormalize: true })
    }
}

#[derive(Clone, Debug)]
pub struct PathSummary {
    pub final_state: Vec<C64>,
    pub steps_taken: usize,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    /// Largest `|Tr − 1|` seen by the observer.
    pub max_trace_error: f64,
}

/// Steps through `[0, steps·dt]`. Before every step the observer receives
/// `(k, t_k, x_k, Some(ΔW_k))`; after the last step it receives
/// `(steps, t_end, x_end, None)`. A diverged path stops early with no final
/// observation.
pub fn integrate<S, F>(
    sys: &S,
    x0: &[C64],
    opts: &IntegrateOptions,
    mut noise: Option<&mut NoiseStream>,
    mut observe: F,
) -> PathSummary
where
    S: SdeSystem + ?Sized,
    F: FnMut(usize, f64, &[C64], Option<f64>),
{
    assert_eq!(x0.len(), sys.dim(), "initial state dimension");
    let mut stepper = Stepper::new(opts.scheme, x0.len());
    let mut x = x0.to_vec();
    let mut max_trace_error = 0.0f64;
    let trace_err = |x: &[C64]| sys.trace(x).map_or(0.0, |tr| (tr - 1.0).norm());
    max_trace_error = max_trace_error.max(trace_err(&x));
    for k in 0..opts.steps {
        let t = k as f64 * opts.dt;
        let dw = match noise.as_deref_mut() {
            Some(n) if sys.noisy() => n.next_increment(),
            _ => 0.0,
        };
        observe(k, t, &x, Some(dw));
        stepper.step(sys, t, opts.dt, dw, &mut x);
        if sys.diverged(&x) {
            return PathSummary {
                final_state: x,
                steps_taken: k + 1,
                diverged: true,
                divergence_time: Some(t + opts.dt),
                max_trace_error,
            };
        }
        if opts.renormalize {
            if let Some(tr) = sys.trace(&x) {
                if (tr - 1.0).norm() > RENORMALIZE_TOLERANCE {
                    let inv = 1.0 / tr.re;
                    x.iter_mut().for_each(|z| *z *= inv);
                }
            }
        }
        max_trace_error = max_trace_error.max(trace_err(&x));
    }
    observe(opts.steps, opts.steps as f64 * opts.dt, &x, None);
    PathSummary { final_state: x, steps_taken: opts.steps, diverged: false, divergence_time: None, max_trace_error }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Scalar SDE `dx = a(x) dt + b(x) dW` on a single complex component,
/// for benchmarks and tests.
pub struct ScalarSde<A, B> {
    pub drift: A,
    pub diffusion: B,
}

impl<A, B> SdeSystem for ScalarSde<A, B>
where
    A: Fn(f64, C64) -> C64 + Sync,
    B: Fn(f64, C64) -> C64 + Sync,
{
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, t: f64, x: &[C64], out: &mut [C64]) {
        out[0] = (self.drift)(t, x[0]);
    }

    fn diffusion(&self, t: f64, x: &[C64], out: &mut [C64]) {
        out[0] = (self.diffusion)(t, x[0]);
    }
}

/// Strong error `E|x_N − x₀ e^{W_T − T/2}|` of `dx = x dW` at `T = 1` for each
/// `dt = 2^{−p}`, all levels sharing one fine Brownian path per sample.
pub fn geometric_strong_errors(scheme: Scheme, powers: &[u32], paths: usize, seed: u64) -> Vec<(f64, f64)> {
    let finest = *powers.iter().max().expect("at least one step size");
    let n_fine = 1usize << finest;
    let dt_fine = 1.0 / n_fine as f64;
    let sys = ScalarSde { drift: |_: f64, _: C64| ZERO, diffusion: |_: f64, x: C64| x };
    let mut totals = vec![0.0; powers.len()];
    let mut fine = vec![0.0; n_fine];
    for p in 0..paths {
        let mut noise = NoiseStream::new(seed, p as u64, dt_fine);
        fine.iter_mut().for_each(|w| *w = noise.next_increment());
        let w_total: f64 = fine.iter().sum();
        let exact = (w_total - 0.5).exp();
        for (slot, &pw) in powers.iter().enumerate() {
            let stride = n_fine >> pw;
            let dt = 1.0 / (1usize << pw) as f64;
            let mut stepper = Stepper::new(scheme, 1);
            let mut x = [C64::new(1.0, 0.0)];
            for (k, chunk) in fine.chunks_exact(stride).enumerate() {
                let dw: f64 = chunk.iter().sum();
                stepper.step(&sys, k as f64 * dt, dt, dw, &mut x);
            }
            totals[slot] += (x[0].re - exact).abs();
        }
    }
    powers.iter().zip(totals).map(|(&pw, tot)| (1.0 / (1usize << pw) as f64, tot / paths as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn zero_system_is_stationary() {
        let sys = ScalarSde { drift: |_: f64, _: C64| ZERO, diffusion: |_: f64, _: C64| ZERO };
        assert_eq!(euler_maruyama_step(&sys, 0.0, 0.1, 0.3, &[c(2.0)]), vec![c(2.0)]);
        assert_eq!(platen_step(&sys, 0.0, 0.1, 0.3, &[c(2.0)]), vec![c(2.0)]);
    }

    #[test]
    fn euler_decay() {
        let sys = ScalarSde { drift: |_: f64, x: C64| -x, diffusion: |_: f64, _: C64| ZERO };
        let mut x = vec![c(1.0)];
        for k in 0..100 {
            x = euler_maruyama_step(&sys, k as f64 * 0.01, 0.01, 0.0, &x);
        }
        assert!((x[0].re / (-1.0f64).exp() - 1.0).abs() < 0.01);
    }

    #[test]
    fn platen_additive_noise_matches_euler_noise_part() {
        // State-independent diffusion: the stochastic part is exactly b ΔW.
        let sys = ScalarSde { drift: |_: f64, _: C64| c(0.7), diffusion: |_: f64, _: C64| c(0.4) };
        let em = euler_maruyama_step(&sys, 0.0, 0.01, 0.05, &[c(1.0)]);
        let pl = platen_step(&sys, 0.0, 0.01, 0.05, &[c(1.0)]);
        assert!((em[0] - pl[0]).norm() < 1e-15);
    }

    #[test]
    fn platen_without_noise_is_second_order() {
        let sys = ScalarSde { drift: |_: f64, x: C64| -x, diffusion: |_: f64, _: C64| ZERO };
        for dt in [0.1, 0.05, 0.025] {
            let x = platen_step(&sys, 0.0, dt, 0.0, &[c(1.0)])[0].re;
            let heun = 1.0 - dt + 0.5 * dt * dt;
            assert!((x - heun).abs() < 1e-15);
            assert!((x - (-dt).exp()).abs() < dt.powi(3));
        }
    }

    #[test]
    fn noise_stream_is_reproducible_and_independent() {
        let mut a = NoiseStream::new(7, 3, 0.01);
        let mut b = NoiseStream::new(7, 3, 0.01);
        let mut other = NoiseStream::new(7, 4, 0.01);
        let xa: Vec<f64> = (0..100).map(|_| a.next_increment()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.next_increment()).collect();
        let xo: Vec<f64> = (0..100).map(|_| other.next_increment()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xo);
    }

    #[test]
    fn noise_stream_statistics() {
        let dt = 0.01;
        let n = 1_000_000;
        let mut s = NoiseStream::new(99, 0, dt);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let w = s.next_increment();
            sum += w;
            sq += w * w;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
        assert!((var / dt - 1.0).abs() < 0.01);
    }

    #[test]
    fn precession_returns_after_one_period() {
        // Real 2-vector rotating at angular frequency ω.
        struct Rot(f64);
        impl SdeSystem for Rot {
            fn dim(&self) -> usize {
                2
            }
            fn drift(&self, _: f64, x: &[C64], out: &mut [C64]) {
                out[0] = -x[1] * self.0;
                out[1] = x[0] * self.0;
            }
            fn diffusion(&self, _: f64, _: &[C64], out: &mut [C64]) {
                out.fill(ZERO);
            }
            fn noisy(&self) -> bool {
                false
            }
        }
        let omega = 2.0;
        let period = 2.0 * std::f64::consts::PI / omega;
        let opts = IntegrateOptions { scheme: Scheme::Rk4, dt: period / 1000.0, steps: 1000, renormalize: false };
        let out = integrate(&Rot(omega), &[c(1.0), c(0.0)], &opts, None, |_, _, _, _| {});
        assert!((out.final_state[0] - c(1.0)).norm() < 1e-10);
        assert!(out.final_state[1].norm() < 1e-10);
    }

    #[test]
    fn forced_divergence_is_flagged() {
        let sys = ScalarSde { drift: |_: f64, x: C64| x * 1e3, diffusion: |_: f64, _: C64| ZERO };
        let opts = IntegrateOptions { scheme: Scheme::EulerMaruyama, dt: 0.01, steps: 10_000, renormalize: false };
        let out = integrate(&sys, &[c(1.0)], &opts, None, |_, _, _, _| {});
        assert!(out.diverged);
        let t = out.divergence_time.unwrap();
        assert!(t > 0.0 && t < 100.0);
    }

    #[test]
    fn observer_sees_every_step_and_the_end() {
        let sys = ScalarSde { drift: |_: f64, _: C64| c(1.0), diffusion: |_: f64, _: C64| ZERO };
        let opts = IntegrateOptions::new(Scheme::EulerMaruyama, 0.1, 1.0).unwrap();
        let mut seen = Vec::new();
        integrate(&sys, &[c(0.0)], &opts, None, |k, t, x, dw| seen.push((k, t, x[0].re, dw.is_some())));
        assert_eq!(seen.len(), 11);
        assert_eq!(seen[0], (0, 0.0, 0.0, true));
        assert!((seen[10].2 - 1.0).abs() < 1e-12 && !seen[10].3);
    }

    #[test]
    fn options_reject_bad_steps() {
        assert!(IntegrateOptions::new(Scheme::Platen, 0.0, 1.0).is_err());
        assert!(IntegrateOptions::new(Scheme::Platen, 0.1, 0.01).is_err());
    }
}
