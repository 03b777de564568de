//! Independent oracles: the exact pure-dephasing solution, a dense Lindblad
//! propagator, and the elimination cross-check between the two engines.

use std::f64::consts::PI;

use serde::Serialize;

use crate::algebra::{expectation, pauli, trace_distance, Operator};
use crate::bath::{matsubara_expansion, total_weight, BathSpec, ExpTerm};
use crate::dispersive::{build_frame, DriveSpec};
use crate::error::invalid;
use crate::hierarchy::{FullHeomConfig, HierarchyOptions, ShemSystem, TerminatorForm};
use crate::liouville::Superop;
use crate::measurement::{run_deterministic, DriftOnly, Invariants, MeasurementConfig, Monitored, RunSpec};
use crate::sde::{geometric_strong_errors, log_log_slope, Scheme};
use crate::spectroscopy::RabiQubit;
use crate::{Error, Result, C64};

/// Matsubara terms summed explicitly in [`exact_dephasing_exponent`].
const EXACT_TERMS: usize = 20_000;

/// `Γ(t) = 4 Σ_a Re[c_a (γ_a t − 1 + e^{−γ_a t}) / γ_a²]` over the given terms.
pub fn dephasing_exponent(terms: &[ExpTerm], t: f64) -> f64 {
    terms
        .iter()
        .map(|term| {
            let g = term.gamma;
            let x = g * t;
            // γt − 1 + e^{−γt}, with a series for small γt.
            let shape = if x < 1e-3 { x * x / 2.0 - x * x * x / 6.0 + x.powi(4) / 24.0 } else { x - 1.0 + (-x).exp() };
            4.0 * term.c.re * shape / (g * g)
        })
        .sum()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `4 ∫₀ᵗ ∫₀ˢ Re C(u) du ds` by nested adaptive quadrature.
pub fn dephasing_exponent_quadrature(terms: &[ExpTerm], t: f64, tol: f64) -> f64 {
    let re_c = |u: f64| terms.iter().map(|term| term.c.re * (-term.gamma * u).exp()).sum::<f64>();
    let inner = |s: f64| adaptive_simpson(&re_c, 0.0, s, tol);
    4.0 * adaptive_simpson(&inner, 0.0, t, tol)
}

/// `Γ(t)` for the complete Drude-Lorentz bath (all Matsubara terms).
///
/// Uses `Σ_a c_a t/γ_a = t λ/(βγ)` in closed form; the remaining
/// `Σ_a c_a (1 − e^{−γ_a t})/γ_a²` converges as `a⁻³` and is summed to
/// `EXACT_TERMS` with an asymptotic tail.
pub fn exact_dephasing_exponent(spec: &BathSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let mut full = *spec;
    full.l = EXACT_TERMS;
    let terms = matsubara_expansion(&full)?.terms;
    let mut bounded = 0.0;
    for term in terms.iter().rev() {
        let x = term.gamma * t;
        let one_minus = if x < 1e-3 { x - x * x / 2.0 + x * x * x / 6.0 } else { 1.0 - (-x).exp() };
        bounded += term.c.re * one_minus / (term.gamma * term.gamma);
    }
    // c_a/γ_a² ≈ (2λγ/β)(β/2π)³ a⁻³ for a > A.
    let a = EXACT_TERMS as f64;
    let tail = 2.0 * spec.lambda * spec.gamma / spec.beta * (spec.beta / (2.0 * PI)).powi(3) / (2.0 * a * a);
    Ok(4.0 * (total_weight(spec).re * t - bounded - tail))
}

/// `ρ₀₁(t)/ρ₀₁(0)` for `H = (Ω/2)σ_z` coupled through `σ_z` to the full bath.
pub fn pure_dephasing_coherence(spec: &BathSpec, omega: f64, t: f64) -> Result<C64> {
    Ok(C64::from_polar((-exact_dephasing_exponent(spec, t)?).exp(), omega * t))
}

/// `dρ/dt = −i[H, ρ] + Σ rate·D[c]ρ`.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    pub h: Operator,
    pub channels: Vec<(Operator, f64)>,
}

impl LindbladSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.h.is_hermitian() {
            return Err(Error::NotHermitian(self.h.hermiticity_defect()));
        }
        for (c, rate) in &self.channels {
            if c.dim() != self.h.dim() {
                return Err(Error::DimensionMismatch { expected: self.h.dim(), found: c.dim() });
            }
            if !(*rate >= 0.0) || !rate.is_finite() {
                return Err(invalid(format!("Lindblad rate must be non-negative, got {rate}")));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Superop {
        let mut l = Superop::hamiltonian(&self.h);
        for (c, rate) in &self.channels {
            l.axpy(C64::new(*rate, 0.0), &Superop::dissipator(c));
        }
        l
    }
}

/// Fourth-order Runge-Kutta states at `t_k = k dt`, `k = 0..=round(T/dt)`.
pub fn lindblad_propagate(spec: &LindbladSpec, rho0: &Operator, dt: f64, t_end: f64) -> Result<Vec<Operator>> {
    spec.validate()?;
    if rho0.dim() != spec.h.dim() {
        return Err(Error::DimensionMismatch { expected: spec.h.dim(), found: rho0.dim() });
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(invalid(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_end}")));
    }
    let l = spec.generator();
    let steps = (t_end / dt).round() as usize;
    let n = rho0.dim() * rho0.dim();
    let zero = C64::new(0.0, 0.0);
    let mut x = rho0.as_slice().to_vec();
    let tr0 = rho0.trace();
    let mut k: [Vec<C64>; 4] = std::array::from_fn(|_| vec![zero; n]);
    let mut tmp = vec![zero; n];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(rho0.clone());
    let one = C64::new(1.0, 0.0);
    for step in 0..steps {
        for stage in 0..4 {
            let h = [0.0, 0.5, 0.5, 1.0][stage] * dt;
            tmp.copy_from_slice(&x);
            if stage > 0 {
                tmp.iter_mut().zip(&k[stage - 1]).for_each(|(t, v)| *t += v * h);
            }
            k[stage].fill(zero);
            l.apply_add(one, &tmp, &mut k[stage]);
        }
        for i in 0..n {
            x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        let rho = Operator::from_row_major(x.clone())?;
        let drift = (rho.trace() - tr0).norm();
        if !drift.is_finite() || drift > 1e-8 {
            return Err(invalid(format!(
                "Lindblad integration unstable at step {}: trace drift {drift:.3e}",
                step + 1
            )));
        }
        out.push(rho);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    /// State invariants of the underlying hierarchy run, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariants: Option<Invariants>,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: detail.into(),
            invariants: None,
        }
    }

    fn with_invariants(mut self, inv: Invariants) -> Self {
        self.invariants = Some(inv);
        self
    }
}

/// SHEM with measurement off and a qubit coupled through `σ_z`.
fn bare_qubit_shem(omega: f64, spec: &BathSpec, k: usize, terminator: TerminatorForm) -> Result<ShemSystem> {
    let h = pauli::sigma_z().scale_real(omega / 2.0);
    let frame = build_frame(&h, &Operator::zeros(2), &[pauli::sigma_z()], omega + 10.0, 0.0)?;
    let baths = [matsubara_expansion(spec)?];
    let meas = MeasurementConfig { kappa: 1.0, eta: 0.0, phi: 0.0, e_p: C64::new(0.0, 0.0), delta: 0.0 };
    let options = HierarchyOptions { terminator, ..HierarchyOptions::default() };
    ShemSystem::new(&frame, &baths, &meas, &DriveSpec::default(), k, &options)
}

fn plus_state() -> Operator {
    Operator::from_real(2, &[0.5, 0.5, 0.5, 0.5])
}

/// Largest relative deviation of the hierarchy's `ρ₀₁(t)` from the exact
/// pure-dephasing coherence over `t ∈ [0, 5/γ]`.
pub fn pure_dephasing_check(spec: &BathSpec, omega: f64, k: usize, dt: f64) -> Result<Check> {
    let sys = bare_qubit_shem(omega, spec, k, TerminatorForm::DoubleCommutator)?;
    let t_end = 5.0 / spec.gamma;
    let run = RunSpec { dt, t_end, stride: 1, scheme: Scheme::Rk4, renormalize: false };
    let x0 = sys.initial_state(&plus_state())?.data;
    let coherence = Operator::from_fn(2, |i, j| if (i, j) == (1, 0) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let rec = run_deterministic(&sys, &x0, &[coherence.clone(), coherence.scale(C64::new(0.0, -1.0))], &run)?;
    let mut worst = 0.0f64;
    for (k_t, &t) in rec.times.iter().enumerate() {
        let got = C64::new(rec.observables[0][k_t], rec.observables[1][k_t]) * 2.0;
        let want = pure_dephasing_coherence(spec, omega, t)?;
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok(Check::at_most(
        format!("pure dephasing λ/γ = {}, βγ = {}", spec.lambda / spec.gamma, spec.beta * spec.gamma),
        worst,
        1e-3,
        format!("L = {}, K = {k}, dt = {dt}", spec.l),
    )
    .with_invariants(rec.invariants()))
}

/// Hierarchy (L = 0 plus terminator) against Lindblad dephasing
/// `r D[σ_z]`, `r = 2 Σ_a Re(c_a/γ_a)`, on `⟨σ_x⟩(t)` over three decay times.
/// Returns the largest deviation relative to `max |⟨σ_x⟩|`.
pub fn markov_limit_check(terminator: TerminatorForm) -> Result<Check> {
    let omega = 1.0;
    let spec = BathSpec { lambda: 0.5, gamma: 100.0 * omega, beta: 0.05, l: 0 };
    let rate = 2.0 * total_weight(&spec).re;
    let t_end = 3.0 / (2.0 * rate);
    let dt = 1e-3;
    let k = 3;
    let sys = bare_qubit_shem(omega, &spec, k, terminator)?;
    let run = RunSpec { dt, t_end, stride: 1, scheme: Scheme::Rk4, renormalize: false };
    let x0 = sys.initial_state(&plus_state())?.data;
    let heom = run_deterministic(&sys, &x0, &[pauli::sigma_x()], &run)?;
    let h = pauli::sigma_z().scale_real(omega / 2.0);
    let lind =
        lindblad_propagate(&LindbladSpec { h, channels: vec![(pauli::sigma_z(), rate)] }, &plus_state(), dt, t_end)?;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (i, &v) in heom.observables[0].iter().enumerate() {
        let r = expectation(&pauli::sigma_x(), &lind[i])?.re;
        worst = worst.max((v - r).abs());
        scale = scale.max(r.abs());
    }
    if heom.diverged {
        worst = f64::INFINITY;
    }
    Ok(Check::at_most(
        format!("Markov limit ({terminator:?} terminator)"),
        worst / scale,
        0.02,
        format!("gamma = 100, beta = 0.05, lambda = 0.5, r = {rate:.4}, K = {k}"),
    )
    .with_invariants(heom.invariants()))
}

/// Parameters of the elimination cross-check.
#[derive(Clone, Debug)]
pub struct EliminationSetup {
    pub qubit: RabiQubit,
    pub bath: BathSpec,
    pub k: usize,
    pub full: FullHeomConfig,
    pub dt: f64,
    pub t_end: f64,
    pub rho0: Operator,
    pub tolerance: f64,
}

impl Default for EliminationSetup {
    /// Bad-cavity qubit with `ε = 0.05`: κ = 20, |α|² = 1, ‖O_S‖ = 0.5.
    fn default() -> Self {
        Self {
            qubit: RabiQubit { chi: 0.5, x_minus: 0.05, kappa: 20.0, alpha: 1.0, ..RabiQubit::default() },
            bath: BathSpec { lambda: 0.05, gamma: 10.0, beta: 0.05, l: 0 },
            k: 2,
            full: FullHeomConfig::default(),
            dt: 2e-3,
            t_end: 10.0,
            rho0: pauli::ground(),
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EliminationReport {
    pub max_trace_distance: f64,
    pub final_trace_distance: f64,
    pub epsilon: f64,
    pub fock_levels: usize,
    /// Largest population of the top retained Fock level.
    pub top_level_population: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Over both engines; the full engine's state is the joint one.
    pub invariants: Invariants,
}

/// Runs the eliminated and the full engine deterministically from matched
/// initial states and compares the system reduced states at every step.
pub fn cross_check_elimination(setup: &EliminationSetup) -> Result<EliminationReport> {
    let mut model = setup.qubit.model(Some(setup.bath))?;
    model.rho0 = setup.rho0.clone();
    let options = HierarchyOptions::default();
    let shem = model.shem(setup.k, &options)?;
    let full = model.full(setup.k, &options, &setup.full)?;
    let run = RunSpec { dt: setup.dt, t_end: setup.t_end, stride: 1, scheme: Scheme::Rk4, renormalize: false };

    let mut states = Vec::new();
    let mut herm = 0.0f64;
    let x0 = shem.initial_state(&model.rho0)?.data;
    let summary = crate::sde::integrate(
        &DriftOnly(&shem),
        &x0,
        &crate::sde::IntegrateOptions { scheme: Scheme::Rk4, dt: run.dt, steps: run.steps(), renormalize: false },
        None,
        |_, _, x, _| {
            let rho = shem.system_state(x);
            herm = herm.max(rho.hermiticity_defect());
            states.push(rho);
        },
    );
    if summary.diverged {
        return Err(invalid("eliminated hierarchy diverged during the cross-check"));
    }
    let shem_trace = summary.max_trace_error;
    let mut max_td = 0.0f64;
    let mut last_td = 0.0;
    let mut top = 0.0f64;
    let mut k = 0;
    let mut err = None;
    let y0 = full.initial_state(&model.rho0)?.data;
    let summary = crate::sde::integrate(
        &DriftOnly(&full),
        &y0,
        &crate::sde::IntegrateOptions { scheme: Scheme::Rk4, dt: run.dt, steps: run.steps(), renormalize: false },
        None,
        |_, _, y, _| {
            let rho = full.system_state(y);
            match trace_distance(&rho, &states[k]) {
                Ok(td) => {
                    max_td = max_td.max(td);
                    last_td = td;
                }
                Err(e) => err = Some(e),
            }
            top = top.max(full.top_level_population(y));
            herm = herm.max(full.joint_state(y).hermiticity_defect());
            k += 1;
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    if summary.diverged {
        return Err(invalid("full hierarchy diverged during the cross-check"));
    }
    let epsilon = model.bad_cavity()?.epsilon;
    Ok(EliminationReport {
        max_trace_distance: max_td,
        final_trace_distance: last_td,
        epsilon,
        fock_levels: full.levels(),
        top_level_population: top,
        tolerance: setup.tolerance,
        passed: max_td <= setup.tolerance,
        invariants: Invariants {
            max_trace_error: shem_trace.max(summary.max_trace_error),
            max_hermiticity_defect: herm,
        },
    })
}

/// Least-squares strong-order slopes of Euler-Maruyama and the Platen scheme
/// on `dx = x dW` over `dt = 2^{−4} … 2^{−8}`.
pub fn strong_order_slopes(paths: usize, seed: u64) -> (f64, f64) {
    let powers = [4, 5, 6, 7, 8];
    let slope = |scheme| {
        let errs = geometric_strong_errors(scheme, &powers, paths, seed);
        let (dts, es): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
        log_log_slope(&dts, &es)
    };
    (slope(Scheme::EulerMaruyama), slope(Scheme::Platen))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuiteOptions {
    /// Reduced subset.
    pub quick: bool,
    /// Flip the terminator sign in the Markov-limit check (negative control).
    pub tamper_terminator: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// `(λ, γ, β, L, K, dt)` for the pure-dephasing comparisons.
pub const PURE_DEPHASING_CASES: [(f64, f64, f64, usize, usize, f64); 4] = [
    (0.01, 1.0, 0.25, 2, 4, 2e-3),
    (0.01, 1.0, 1.0, 4, 4, 2e-3),
    (0.2, 1.0, 0.25, 2, 16, 2e-3),
    (0.2, 1.0, 1.0, 4, 8, 2e-3),
];

/// Runs the oracle suite.
pub fn validate_suite(opts: SuiteOptions) -> Result<ValidationReport> {
    let mut checks = Vec::new();

    let spec = BathSpec { lambda: 0.2, gamma: 1.0, beta: 1.0, l: 3 };
    let terms = matsubara_expansion(&spec)?.terms;
    let points = if opts.quick { 5 } else { 20 };
    let worst = (1..=points)
        .map(|i| {
            let t = 5.0 * i as f64 / points as f64;
            (dephasing_exponent(&terms, t) - dephasing_exponent_quadrature(&terms, t, 1e-13)).abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("dephasing exponent closed form vs quadrature", worst, 1e-8, format!("{points} times")));

    let cases: &[_] = if opts.quick { &PURE_DEPHASING_CASES[..1] } else { &PURE_DEPHASING_CASES };
    for &(lambda, gamma, beta, l, k, dt) in cases {
        checks.push(pure_dephasing_check(&BathSpec { lambda, gamma, beta, l }, 1.0, k, dt)?);
    }

    let form = if opts.tamper_terminator { TerminatorForm::FlippedSign } else { TerminatorForm::DoubleCommutator };
    checks.push(markov_limit_check(form)?);

    let r = 0.7;
    let decay = LindbladSpec { h: Operator::zeros(2), channels: vec![(pauli::sigma_minus(), r)] };
    let states = lindblad_propagate(&decay, &pauli::excited(), 1e-3, 3.0)?;
    let worst =
        states.iter().enumerate().map(|(i, s)| (s[(1, 1)].re - (-r * i as f64 * 1e-3).exp()).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("Lindblad amplitude damping", worst, 1e-6, "rate 0.7 over t in [0, 3]"));

    if !opts.quick {
        let report = cross_check_elimination(&EliminationSetup::default())?;
        checks.push(Check::at_most(
            "elimination cross-check",
            report.max_trace_distance,
            report.tolerance,
            format!("epsilon = {:.3}, Fock levels = {}", report.epsilon, report.fock_levels),
        ));
    }

    let (em, platen) = strong_order_slopes(if opts.quick { 300 } else { 2000 }, 17);
    checks.push(Check {
        name: "Euler-Maruyama strong order".into(),
        passed: (0.4..=0.6).contains(&em),
        value: em,
        tolerance: 0.1,
        detail: "slope in [0.4, 0.6]".into(),
        invariants: None,
    });
    checks.push(Check {
        name: "Platen strong order".into(),
        passed: (0.8..=1.2).contains(&platen),
        value: platen,
        tolerance: 0.2,
        detail: "slope in [0.8, 1.2]".into(),
        invariants: None,
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, passed })
}
