//! Generalized dispersive transformation `U_D = exp[X a† − X† a]`.
//!
//! Builds every system operator that survives the transformation to second
//! order in `X`, plus the readout-side quantities (steady cavity amplitude,
//! measured observable, bad-cavity parameter).

use serde::{Deserialize, Serialize};

use crate::algebra::{anticommutator, commutator, eigendecompose, Operator, SpectralDecomposition};
use crate::bath::BathExpansion;
use crate::error::{ensure_finite, invalid};
use crate::{Error, Result, C64};

/// Smallest allowed `|ω_c + Ω_j − Ω_k|` for a coupled pair.
pub const RESONANCE_THRESHOLD: f64 = 1e-9;
/// `dispersive_ratio` above this triggers a warning.
pub const DISPERSIVE_RATIO_WARN: f64 = 0.3;
/// `ε` above this triggers a warning.
pub const EPSILON_WARN: f64 = 0.1;

/// One system tone `E_q e^{−iω_q t}` of the multi-frequency drive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemTone {
    pub amplitude: C64,
    pub omega: f64,
}

/// Multi-frequency classical drive: the cavity tone plus system tones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub e_p: C64,
    pub omega_p: f64,
    pub tones: Vec<SystemTone>,
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("drive.omega_p", self.omega_p)?;
        ensure_finite("drive.e_p", self.e_p.norm())?;
        for t in &self.tones {
            ensure_finite("drive tone frequency", t.omega)?;
            ensure_finite("drive tone amplitude", t.amplitude.norm())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DispersiveFrame {
    pub x: Operator,
    pub o_s: Operator,
    pub lambda: Operator,
    pub h_s_d: Operator,
    /// Bare couplings `S_m`, kept for reference.
    pub s: Vec<Operator>,
    pub s_tilde: Vec<Operator>,
    pub q: Vec<Operator>,
    pub f_tilde: Vec<Operator>,
    pub alpha_sq: f64,
    pub dispersive_ratio: f64,
    pub warnings: Vec<String>,
}

impl DispersiveFrame {
    pub fn dim(&self) -> usize {
        self.o_s.dim()
    }

    pub fn n_envs(&self) -> usize {
        self.s_tilde.len()
    }

    /// Same frame with `F̃_m = S̃_m + Q_m|α|²` recomputed for a new `|α|²`.
    pub fn with_alpha_sq(&self, alpha_sq: f64) -> Self {
        let mut out = self.clone();
        out.alpha_sq = alpha_sq;
        out.f_tilde = f_tilde(&self.s_tilde, &self.q, alpha_sq);
        out
    }

    /// Frame given directly by its operators, e.g. a rotating-frame reduction
    /// of a lab-frame construction. Checks dimensions and Hermiticity.
    pub fn from_operators(
        x: Operator,
        h_s_d: Operator,
        o_s: Operator,
        s: Vec<Operator>,
        s_tilde: Vec<Operator>,
        q: Vec<Operator>,
        alpha_sq: f64,
    ) -> Result<Self> {
        let d = x.dim();
        for op in [&h_s_d, &o_s].into_iter().chain(&s).chain(&s_tilde).chain(&q) {
            if op.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: op.dim() });
            }
        }
        if s.len() != s_tilde.len() || s.len() != q.len() {
            return Err(invalid("S, S̃ and Q lists must have equal length"));
        }
        for op in [&h_s_d, &o_s].into_iter().chain(&s_tilde).chain(&q) {
            if !op.is_hermitian() {
                return Err(Error::NotHermitian(op.hermiticity_defect()));
            }
        }
        let lambda = commutator(&x.dagger(), &x).scale_real(0.5);
        let f = f_tilde(&s_tilde, &q, alpha_sq);
        Ok(Self {
            x,
            o_s,
            lambda,
            h_s_d,
            s,
            s_tilde,
            q,
            f_tilde: f,
            alpha_sq,
            dispersive_ratio: 0.0,
            warnings: Vec::new(),
        })
    }
}

fn f_tilde(s_tilde: &[Operator], q: &[Operator], alpha_sq: f64) -> Vec<Operator> {
    s_tilde.iter().zip(q).map(|(s, q)| s + &q.scale_real(alpha_sq)).collect()
}

fn check_same_dim(reference: &Operator, other: &Operator) -> Result<()> {
    if reference.dim() != other.dim() {
        return Err(Error::DimensionMismatch { expected: reference.dim(), found: other.dim() });
    }
    Ok(())
}

fn coupled(mu_jk: C64, scale: f64) -> bool {
    mu_jk.norm() > 1e-14 * scale
}

fn build_x_in(dec: &SpectralDecomposition, mu: &Operator, omega_c: f64) -> Result<(Operator, f64)> {
    let mu_e = dec.to_eigenbasis(mu);
    let scale = mu.max_abs().max(f64::MIN_POSITIVE);
    let w = &dec.eigenvalues;
    let mut ratio = 0.0f64;
    let mut x_e = Operator::zeros(mu.dim());
    for j in 0..mu.dim() {
        for k in 0..mu.dim() {
            let m = mu_e[(j, k)];
            if !coupled(m, scale) {
                continue;
            }
            let denom = omega_c + w[j] - w[k];
            if denom.abs() <= RESONANCE_THRESHOLD {
                return Err(Error::Resonance { from: j, to: k, denominator: denom });
            }
            x_e[(j, k)] = m / denom;
            ratio = ratio.max(m.norm() / denom.abs());
        }
    }
    Ok((dec.from_eigenbasis(&x_e), ratio))
}

/// `X = Σ_jk μ_jk / (ω_c + Ω_j − Ω_k) |j⟩⟨k|`, returned in the input basis.
pub fn build_x(h_s: &Operator, mu: &Operator, omega_c: f64) -> Result<Operator> {
    check_same_dim(h_s, mu)?;
    ensure_finite("omega_c", omega_c)?;
    let dec = eigendecompose(h_s)?;
    Ok(build_x_in(&dec, mu, omega_c)?.0)
}

/// All dispersive-frame operators for couplings `{S_m}` and cavity occupation `|α|²`.
pub fn build_frame(
    h_s: &Operator,
    mu: &Operator,
    s: &[Operator],
    omega_c: f64,
    alpha_sq: f64,
) -> Result<DispersiveFrame> {
    check_same_dim(h_s, mu)?;
    for sm in s {
        check_same_dim(h_s, sm)?;
    }
    ensure_finite("omega_c", omega_c)?;
    ensure_finite("|alpha|^2", alpha_sq)?;
    if !mu.is_hermitian() {
        return Err(Error::NotHermitian(mu.hermiticity_defect()));
    }
    let dec = eigendecompose(h_s)?;
    let (x, ratio) = build_x_in(&dec, mu, omega_c)?;
    let xd = x.dagger();
    let xdx = xd.matmul(&x);
    let xxd = x.matmul(&xd);

    let o_s = commutator(mu, &(&xd - &x)).scale_real(0.5).hermitian_part();
    let lambda = commutator(&xd, &x).scale_real(0.5).hermitian_part();
    let h_s_d = (h_s - &(&xd.matmul(mu) + &mu.matmul(&x)).scale_real(0.5)).hermitian_part();

    let mut s_tilde = Vec::with_capacity(s.len());
    let mut q = Vec::with_capacity(s.len());
    for sm in s {
        let st = &(sm - &anticommutator(&xdx, sm).scale_real(0.5)) + &xd.matmul(sm).matmul(&x);
        // D[X]S + D[X†]S
        let qm = &(&x.matmul(sm).matmul(&xd) - &anticommutator(&xdx, sm).scale_real(0.5))
            + &(&xd.matmul(sm).matmul(&x) - &anticommutator(&xxd, sm).scale_real(0.5));
        s_tilde.push(if sm.is_hermitian() { st.hermitian_part() } else { st });
        q.push(if sm.is_hermitian() { qm.hermitian_part() } else { qm });
    }
    let f = f_tilde(&s_tilde, &q, alpha_sq);

    let mut warnings = Vec::new();
    if ratio >= DISPERSIVE_RATIO_WARN {
        warnings.push(format!(
            "dispersive ratio {ratio:.3} >= {DISPERSIVE_RATIO_WARN}: second-order dispersive expansion is questionable"
        ));
    }
    Ok(DispersiveFrame {
        x,
        o_s,
        lambda,
        h_s_d,
        s: s.to_vec(),
        s_tilde,
        q,
        f_tilde: f,
        alpha_sq,
        dispersive_ratio: ratio,
        warnings,
    })
}

/// Coherent steady state `α = −iE_p / (iΔ + κ)` of the driven leaky cavity.
pub fn steady_alpha(e_p: C64, delta: f64, kappa: f64) -> Result<C64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    ensure_finite("delta", delta)?;
    Ok(-C64::i() * e_p / C64::new(kappa, delta))
}

/// Homodyne angle `θ = φ − arg α − arctan(Δ/κ)`.
pub fn readout_angle(kappa: f64, delta: f64, phi: f64, alpha: C64) -> f64 {
    phi - alpha.arg() - (delta / kappa).atan()
}

/// Measured observable `Ō_S ∝ (1+Λ)[sinθ O_S + κ cosθ Λ]`, normalized so that
/// at `Δ = 0` it reduces to `sin(φ − arg α) O_S + κ cos(φ − arg α) Λ` up to
/// `O(Λ²)`. Hermitian part taken.
pub fn effective_observable(frame: &DispersiveFrame, kappa: f64, delta: f64, phi: f64, alpha: C64) -> Result<Operator> {
    if !(kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    let theta = readout_angle(kappa, delta, phi, alpha);
    let inner = &frame.o_s.scale_real(theta.sin()) + &frame.lambda.scale_real(kappa * theta.cos());
    let one_plus = &Operator::identity(frame.dim()) + &frame.lambda;
    let pref = kappa * kappa / (kappa * kappa + delta * delta);
    Ok(one_plus.matmul(&inner).scale_real(pref).hermitian_part())
}

/// Back-action operator `B = e^{−iφ} α/(κ + iΔ) (i(1+Λ)O_S + κΛ²)` of the
/// eliminated-cavity measurement.
pub fn back_action_operator(frame: &DispersiveFrame, kappa: f64, delta: f64, phi: f64, alpha: C64) -> Operator {
    let pref = C64::from_polar(1.0, -phi) * alpha / C64::new(kappa, delta);
    let one_plus = &Operator::identity(frame.dim()) + &frame.lambda;
    let term = &one_plus.matmul(&frame.o_s).scale(C64::i()) + &frame.lambda.matmul(&frame.lambda).scale_real(kappa);
    term.scale(pref)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BadCavityReport {
    /// Perturbative parameter (spectral norms).
    pub epsilon: f64,
    /// `κ / (‖O_S‖ (1+|α|²))` with the spectral norm.
    pub ratio_spectral: f64,
    /// Same with the trace norm.
    pub ratio_trace: f64,
    /// `ε ≤ EPSILON_WARN`.
    pub valid: bool,
}

/// Bad-cavity parameter `ε = (1/κ) max{(‖O_S‖+|Δ|)(1+|α|²), Σ|Γ_m|‖Q_m‖, Σ|α|²λ_m‖Q_m‖}`.
pub fn bad_cavity_epsilon(
    frame: &DispersiveFrame,
    baths: &[BathExpansion],
    kappa: f64,
    delta: f64,
    alpha: C64,
) -> Result<BadCavityReport> {
    if !(kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    let a2 = alpha.norm_sqr();
    let os_spec = frame.o_s.spectral_norm();
    let os_trace = frame.o_s.trace_norm();
    let first = (os_spec + delta.abs()) * (1.0 + a2);
    let mut second = 0.0;
    let mut third = 0.0;
    for (q, bath) in frame.q.iter().zip(baths) {
        let qn = q.spectral_norm();
        second += bath.terminator.norm() * qn;
        third += a2 * bath.spec.lambda * qn;
    }
    let epsilon = first.max(second).max(third) / kappa;
    let ratio = |norm: f64| if norm > 0.0 { kappa / (norm * (1.0 + a2)) } else { f64::INFINITY };
    Ok(BadCavityReport {
        epsilon,
        ratio_spectral: ratio(os_spec),
        ratio_trace: ratio(os_trace),
        valid: epsilon <= EPSILON_WARN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::pauli::*;
    use crate::bath::{matsubara_expansion, BathSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn qubit(omega: f64, g: f64) -> (Operator, Operator) {
        (sigma_z().scale_real(omega / 2.0), sigma_x().scale_real(g))
    }

    fn closed_form_o_s(g: f64, omega: f64, omega_c: f64) -> Operator {
        sigma_z().scale_real(-2.0 * g * g * omega / (omega_c * omega_c - omega * omega))
    }

    fn random_hermitian(rng: &mut impl Rng, d: usize) -> Operator {
        Operator::from_fn(d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).hermitian_part()
    }

    fn random_unitary(rng: &mut impl Rng, d: usize) -> Operator {
        let h = random_hermitian(rng, d);
        let dec = eigendecompose(&h).unwrap();
        let phases: Vec<f64> = dec.eigenvalues.iter().map(|e| 3.0 * e).collect();
        let diag =
            Operator::from_fn(d, |i, j| if i == j { C64::from_polar(1.0, phases[i]) } else { C64::new(0.0, 0.0) });
        dec.from_eigenbasis(&diag)
    }

    #[test]
    fn zero_coupling_gives_zero_x() {
        let (h, _) = qubit(1.0, 0.0);
        let x = build_x(&h, &Operator::zeros(2), 10.0).unwrap();
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn qubit_x_closed_form() {
        let (omega, g, wc) = (1.0, 0.1, 10.0);
        let (h, mu) = qubit(omega, g);
        let x = build_x(&h, &mu, wc).unwrap();
        let expect = &sigma_minus().scale_real(g / (wc - omega)) + &sigma_plus().scale_real(g / (wc + omega));
        assert!((&x - &expect).max_abs() < 1e-14);
    }

    #[test]
    fn resonance_is_rejected() {
        let (h, mu) = qubit(1.0, 0.1);
        assert!(matches!(build_x(&h, &mu, 1.0), Err(Error::Resonance { .. })));
    }

    #[test]
    fn qubit_o_s_closed_form() {
        let (omega, g, wc) = (1.0, 0.1, 10.0);
        let (h, mu) = qubit(omega, g);
        let frame = build_frame(&h, &mu, &[sigma_z()], wc, 0.0).unwrap();
        assert!((&frame.o_s - &closed_form_o_s(g, omega, wc)).max_abs() < 1e-10);
        assert!(frame.o_s.trace().norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let omega = rng.random_range(0.2..5.0);
            let g = rng.random_range(0.01..0.3);
            let wc = omega + rng.random_range(1.0..20.0);
            let (h, mu) = qubit(omega, g);
            let frame = build_frame(&h, &mu, &[], wc, 0.0).unwrap();
            assert!((&frame.o_s - &closed_form_o_s(g, omega, wc)).max_abs() < 1e-10);
        }
    }

    #[test]
    fn decoupled_frame_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = random_hermitian(&mut rng, 3);
        let s = random_hermitian(&mut rng, 3);
        let frame = build_frame(&h, &Operator::zeros(3), std::slice::from_ref(&s), 7.0, 2.0).unwrap();
        assert!((&frame.s_tilde[0] - &s).max_abs() < 1e-15);
        assert_eq!(frame.q[0].max_abs(), 0.0);
        assert_eq!(frame.lambda.max_abs(), 0.0);
        assert!((&frame.h_s_d - &h).max_abs() < 1e-15);
        assert_eq!(frame.dispersive_ratio, 0.0);
    }

    #[test]
    fn f_tilde_without_photons_is_s_tilde() {
        let (h, mu) = qubit(1.0, 0.3);
        let frame = build_frame(&h, &mu, &[sigma_z(), sigma_x()], 4.0, 0.0).unwrap();
        for (f, s) in frame.f_tilde.iter().zip(&frame.s_tilde) {
            assert_eq!(f, s);
        }
        let shifted = frame.with_alpha_sq(3.0);
        assert!((&shifted.f_tilde[1] - &(&frame.s_tilde[1] + &frame.q[1].scale_real(3.0))).max_abs() < 1e-15);
    }

    #[test]
    fn frame_is_basis_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let d = 3;
            let h = random_hermitian(&mut rng, d);
            let mu = random_hermitian(&mut rng, d).scale_real(0.2);
            let s = random_hermitian(&mut rng, d);
            let v = random_unitary(&mut rng, d);
            let a = build_frame(&h, &mu, std::slice::from_ref(&s), 12.0, 1.5).unwrap();
            let b = build_frame(&h.conjugate_by(&v), &mu.conjugate_by(&v), &[s.conjugate_by(&v)], 12.0, 1.5).unwrap();
            let pairs = [
                (&a.x, &b.x),
                (&a.o_s, &b.o_s),
                (&a.lambda, &b.lambda),
                (&a.h_s_d, &b.h_s_d),
                (&a.s_tilde[0], &b.s_tilde[0]),
                (&a.q[0], &b.q[0]),
            ];
            for (p, q) in pairs {
                assert!((&p.conjugate_by(&v) - q).max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn frame_operators_are_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..20 {
            let h = random_hermitian(&mut rng, 4);
            let mu = random_hermitian(&mut rng, 4).scale_real(0.3);
            let s = random_hermitian(&mut rng, 4);
            let f = build_frame(&h, &mu, &[s], 15.0, 2.0).unwrap();
            for op in [&f.o_s, &f.lambda, &f.h_s_d, &f.f_tilde[0]] {
                assert!(op.hermiticity_defect() <= 1e-12 * op.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn x_scales_linearly_with_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let h = random_hermitian(&mut rng, 3);
        let mu = random_hermitian(&mut rng, 3);
        let x1 = build_x(&h, &mu, 9.0).unwrap();
        let x3 = build_x(&h, &mu.scale_real(3.0), 9.0).unwrap();
        assert!((&x1.scale_real(3.0) - &x3).max_abs() < 1e-13);
    }

    #[test]
    fn strong_coupling_warns() {
        let (h, mu) = qubit(1.0, 2.0);
        let frame = build_frame(&h, &mu, &[], 3.0, 0.0).unwrap();
        assert!(frame.dispersive_ratio >= DISPERSIVE_RATIO_WARN);
        assert_eq!(frame.warnings.len(), 1);
    }

    #[test]
    fn steady_alpha_examples() {
        let kappa = 2.5;
        let e_p = C64::new(0.3, -1.1);
        let a = steady_alpha(e_p, 0.0, kappa).unwrap();
        assert!((a - e_p / C64::new(0.0, kappa)).norm() < 1e-15);
        assert_eq!(steady_alpha(C64::new(0.0, 0.0), 1.0, kappa).unwrap(), C64::new(0.0, 0.0));
        let one = steady_alpha(C64::new(0.0, kappa), 0.0, kappa).unwrap();
        assert!((one - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(steady_alpha(e_p, 0.0, 0.0).is_err());
    }

    #[test]
    fn effective_observable_reductions() {
        let (h, mu) = qubit(1.0, 0.1);
        let frame = build_frame(&h, &mu, &[], 10.0, 0.0).unwrap();
        let alpha = C64::from_polar(2.0, 0.4);
        let kappa = 30.0;
        // Population quadrature with Λ removed.
        let mut no_lambda = frame.clone();
        no_lambda.lambda = Operator::zeros(2);
        let o = effective_observable(&no_lambda, kappa, 0.0, 0.4 - FRAC_PI_2, alpha).unwrap();
        assert!((&o + &frame.o_s).max_abs() < 1e-14);
        let o = effective_observable(&no_lambda, kappa, 0.0, 0.4 + 0.3, alpha).unwrap();
        assert!((&o - &frame.o_s.scale_real(0.3f64.sin())).max_abs() < 1e-14);
        // θ = 0: only Λ survives.
        let o = effective_observable(&frame, kappa, 0.0, 0.4, alpha).unwrap();
        let one_plus = &Operator::identity(2) + &frame.lambda;
        let expect = one_plus.matmul(&frame.lambda).scale_real(kappa).hermitian_part();
        assert!((&o - &expect).max_abs() < 1e-14);
        assert!(o.is_hermitian());
    }

    #[test]
    fn back_action_reduces_to_main_text_form() {
        let (h, mu) = qubit(1.0, 0.1);
        let mut frame = build_frame(&h, &mu, &[], 10.0, 0.0).unwrap();
        frame.lambda = Operator::zeros(2);
        let (kappa, phi, alpha) = (40.0, 0.7, C64::new(1.2, -0.5));
        let b = back_action_operator(&frame, kappa, 0.0, phi, alpha);
        let expect = frame.o_s.scale(C64::i() * alpha * C64::from_polar(1.0, -phi) / kappa);
        assert!((&b - &expect).max_abs() < 1e-15);
    }

    #[test]
    fn epsilon_examples() {
        let (h, _) = qubit(1.0, 0.0);
        let bath = matsubara_expansion(&BathSpec { lambda: 0.1, gamma: 5.0, beta: 1.0, l: 0 }).unwrap();
        let frame = build_frame(&h, &Operator::zeros(2), &[sigma_z()], 10.0, 4.0).unwrap();
        let alpha = C64::new(2.0, 0.0);
        let rep = bad_cavity_epsilon(&frame, std::slice::from_ref(&bath), 50.0, 0.7, alpha).unwrap();
        assert!((rep.epsilon - 0.7 * 5.0 / 50.0).abs() < 1e-15);
        let (h, mu) = qubit(1.0, 0.3);
        let frame = build_frame(&h, &mu, &[sigma_z()], 6.0, 4.0).unwrap();
        let small = bad_cavity_epsilon(&frame, std::slice::from_ref(&bath), 1e6, 0.0, alpha).unwrap();
        let large = bad_cavity_epsilon(&frame, &[bath], 1e3, 0.0, alpha).unwrap();
        assert!(small.epsilon < 1e-5 && small.valid);
        assert!((large.epsilon / small.epsilon - 1e3).abs() < 1e-6);
        // For a traceless qubit O_S the trace norm is twice the spectral norm.
        assert!((large.ratio_spectral / large.ratio_trace - 2.0).abs() < 1e-12);
    }
}
