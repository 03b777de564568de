//! Drude-Lorentz environment `J(ω) = 2λγω/(ω² + γ²)`: exponential expansion of
//! the bath correlation function, truncation and the Markovian terminator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result, C64};

/// Minimal separation `|γ_a − γ|` before the Matsubara coefficient is treated as singular.
pub const POLE_GUARD: f64 = 1e-9;
/// Upper clamp for [`choose_l`].
pub const MAX_L: usize = 64;
/// Number of Matsubara terms in the brute-force reference sum.
pub const A_REF: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Matsubara cutoff `L`.
    pub l: usize,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma), ("beta", self.beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("bath {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn matsubara(&self, a: usize) -> f64 {
        2.0 * PI * a as f64 / self.beta
    }
}

/// One decaying exponential `c e^{−γ t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpTerm {
    pub c: C64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BathExpansion {
    pub spec: BathSpec,
    /// `terms[0]` is the Drude term, `terms[a]` the `a`-th Matsubara term.
    pub terms: Vec<ExpTerm>,
    pub terminator: C64,
}

fn coefficient(spec: &BathSpec, a: usize) -> Result<ExpTerm> {
    let (lambda, gamma, beta) = (spec.lambda, spec.gamma, spec.beta);
    if a == 0 {
        let cot = 1.0 / (beta * gamma / 2.0).tan();
        return Ok(ExpTerm { c: C64::new(cot, -1.0) * (lambda * gamma / 2.0), gamma });
    }
    let ga = spec.matsubara(a);
    if (ga - gamma).abs() <= POLE_GUARD {
        return Err(Error::Pole { matsubara: ga, gamma });
    }
    let c = (2.0 * lambda / beta) * gamma * ga / (ga * ga - gamma * gamma);
    Ok(ExpTerm { c: C64::new(c, 0.0), gamma: ga })
}

/// Coefficients `c_a` and rates `γ_a` for `0 ≤ a ≤ L`, plus the terminator.
pub fn matsubara_expansion(spec: &BathSpec) -> Result<BathExpansion> {
    spec.validate()?;
    let terms = (0..=spec.l).map(|a| coefficient(spec, a)).collect::<Result<Vec<_>>>()?;
    let kept: C64 = terms.iter().map(|t| t.c / t.gamma).sum();
    Ok(BathExpansion { spec: *spec, terms, terminator: total_weight(spec) - kept })
}

/// `∫₀^∞ C(t) dt = Σ_{a≥0} c_a/γ_a = λ(1/(βγ) − i/2)`, summed in closed form.
pub fn total_weight(spec: &BathSpec) -> C64 {
    C64::new(1.0 / (spec.beta * spec.gamma), -0.5) * spec.lambda
}

/// Brute-force partial sum `Σ_{a=0}^{a_ref} c_a/γ_a`.
pub fn reference_total(spec: &BathSpec, a_ref: usize) -> Result<C64> {
    spec.validate()?;
    let mut acc = C64::new(0.0, 0.0);
    // Smallest terms first to limit cancellation error.
    for a in (0..=a_ref).rev() {
        let t = coefficient(spec, a)?;
        acc += t.c / t.gamma;
    }
    Ok(acc)
}

/// Markovian terminator `Γ = Σ_{a>L} c_a/γ_a` for the truncated expansion.
pub fn terminator(spec: &BathSpec) -> Result<C64> {
    Ok(matsubara_expansion(spec)?.terminator)
}

/// Smallest `L` with `γ_L ≥ 10 ω_max`, clamped to `[0, MAX_L]`.
pub fn choose_l(spec: &BathSpec, omega_max: f64) -> usize {
    if !(omega_max > 0.0) {
        return 0;
    }
    let l = (10.0 * omega_max * spec.beta / (2.0 * PI)).ceil();
    if l.is_nan() {
        return 0;
    }
    (l.max(0.0) as usize).min(MAX_L)
}

/// `C(t) = Σ_a c_a e^{−γ_a t}` over the retained terms.
pub fn correlation_function(expansion: &BathExpansion, t: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("correlation time must be non-negative, got {t}")));
    }
    Ok(expansion.terms.iter().map(|term| term.c * (-term.gamma * t).exp()).sum())
}
