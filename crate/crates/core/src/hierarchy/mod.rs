//! Truncated hierarchy of auxiliary density operators.
//!
//! Each bath expansion term `(m, a)` is a slot of the multi-index `n`; slots
//! are flattened m-major, a-minor. The hierarchy keeps every `n` with
//! `Σ n ≤ K`. Two engines share this bookkeeping: [`ShemSystem`] (cavity
//! adiabatically eliminated) and [`FullHeomSystem`] (explicit system⊗cavity).

mod full;
mod shem;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::algebra::{eigendecompose, Operator};
use crate::bath::BathExpansion;
use crate::dispersive::{DispersiveFrame, DriveSpec};
use crate::{Error, Result, C64};

pub use full::{FullHeomConfig, FullHeomSystem};
pub use shem::ShemSystem;

/// Largest admissible number of auxiliary operators.
pub const MAX_INDICES: usize = 1_000_000;
/// `Ψ/ω_SC` below this triggers a truncation warning.
pub const TRUNCATION_RATIO_WARN: f64 = 10.0;

/// How the terminator `Γ_m` enters the equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatorForm {
    /// `−Γ_m [F_m, [F_m, ·]]`
    #[default]
    DoubleCommutator,
    /// `+Γ_m D[F_m]`
    Dissipator,
    /// Terminator switched off.
    Off,
    /// `+Γ_m [F_m, [F_m, ·]]`: deliberately wrong sign, a negative control
    /// for the validation suite.
    FlippedSign,
}

/// Coefficient in front of the eliminated-cavity `D[O_S]` term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementDephasing {
    /// `2(κ+ν)|α|²/((κ+ν)²+Δ²)`: the rate implied by the back-action operator,
    /// which keeps unit-efficiency trajectories pure.
    #[default]
    Consistent,
    /// `(κ+ν)|α|²/((κ+ν)²+Δ²)` as printed.
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyOptions {
    pub terminator: TerminatorForm,
    pub dephasing: MeasurementDephasing,
    /// Include the Purcell channel `κD[X]`.
    pub purcell: bool,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self { terminator: TerminatorForm::default(), dephasing: MeasurementDephasing::default(), purcell: true }
    }
}

/// All multi-indices with `Σ n ≤ K` over `M` slots, ordered by tier and
/// within a tier by descending first slot, with neighbor tables.
#[derive(Clone, Debug)]
pub struct IndexSpace {
    m: usize,
    k: usize,
    indices: Vec<u16>,
    up: Vec<Option<usize>>,
    down: Vec<Option<usize>>,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn compositions(slots: usize, total: usize, prefix: &mut Vec<u16>, out: &mut Vec<u16>) {
    if slots == 1 {
        out.extend_from_slice(prefix);
        out.push(total as u16);
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u16);
        compositions(slots - 1, total - first, prefix, out);
        prefix.pop();
    }
}

impl IndexSpace {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("hierarchy needs at least one expansion term".into()));
        }
        let count = binomial((m + k) as u128, k as u128);
        if count > MAX_INDICES as u128 || k > u16::MAX as usize {
            return Err(Error::IndexOverflow { count, limit: MAX_INDICES });
        }
        let count = count as usize;
        let mut indices = Vec::with_capacity(count * m);
        for tier in 0..=k {
            compositions(m, tier, &mut Vec::with_capacity(m), &mut indices);
        }
        debug_assert_eq!(indices.len(), count * m);
        let lookup: HashMap<&[u16], usize> = indices.chunks_exact(m).enumerate().map(|(i, n)| (n, i)).collect();
        let mut up = vec![None; count * m];
        let mut down = vec![None; count * m];
        let mut probe = vec![0u16; m];
        for (i, n) in indices.chunks_exact(m).enumerate() {
            for s in 0..m {
                probe.copy_from_slice(n);
                probe[s] += 1;
                up[i * m + s] = lookup.get(probe.as_slice()).copied();
                if n[s] > 0 {
                    probe[s] -= 2;
                    down[i * m + s] = lookup.get(probe.as_slice()).copied();
                }
            }
        }
        Ok(Self { m, k, indices, up, down })
    }

    pub fn slots(&self) -> usize {
        self.m
    }

    pub fn tier(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize) -> &[u16] {
        &self.indices[i * self.m..(i + 1) * self.m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        self.indices.chunks_exact(self.m)
    }

    /// Position of `n` with slot `s` raised by one, if inside the space.
    pub fn up(&self, i: usize, s: usize) -> Option<usize> {
        self.up[i * self.m + s]
    }

    /// Position of `n` with slot `s` lowered by one, if inside the space.
    pub fn down(&self, i: usize, s: usize) -> Option<usize> {
        self.down[i * self.m + s]
    }

    pub fn position(&self, n: &[u16]) -> Option<usize> {
        self.iter().position(|x| x == n)
    }
}

/// Hierarchy slots for a list of bath expansions: `(environment, rate, c)`.
pub(crate) fn slots(baths: &[BathExpansion]) -> Vec<(usize, f64, C64)> {
    baths.iter().enumerate().flat_map(|(m, b)| b.terms.iter().map(move |t| (m, t.gamma, t.c))).collect()
}

/// Stacked auxiliary operators; block 0 is the physical density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyState {
    pub dim: usize,
    pub t: f64,
    pub data: Vec<C64>,
}

impl HierarchyState {
    /// `σ^0 = ρ₀`, every auxiliary zero.
    pub fn from_physical(rho0: &Operator, n_aux: usize) -> Self {
        let d = rho0.dim();
        let mut data = vec![C64::new(0.0, 0.0); n_aux * d * d];
        data[..d * d].copy_from_slice(rho0.as_slice());
        Self { dim: d, t: 0.0, data }
    }

    pub fn n_aux(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn aux(&self, i: usize) -> Operator {
        let d2 = self.dim * self.dim;
        Operator::from_row_major(self.data[i * d2..(i + 1) * d2].to_vec()).expect("square block")
    }

    pub fn physical(&self) -> Operator {
        self.aux(0)
    }
}

/// `Tr[A ρ]` for a row-major vectorized `ρ`.
pub fn expect_vec(a: &Operator, rho: &[C64]) -> C64 {
    let d = a.dim();
    let a = a.as_slice();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += a[i * d + k] * rho[k * d + i];
        }
    }
    acc
}

pub(crate) fn trace_vec(rho: &[C64], d: usize) -> C64 {
    (0..d).map(|i| rho[i * d + i]).sum()
}

/// `‖ρ‖_tr > threshold` (or non-finite) for a vectorized block. Uses
/// `‖ρ‖_F ≤ ‖ρ‖_tr ≤ √d ‖ρ‖_F` to avoid the SVD in the common case.
pub(crate) fn trace_norm_exceeds(rho: &[C64], d: usize, threshold: f64) -> bool {
    let frob = rho.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !frob.is_finite() || frob > threshold {
        return true;
    }
    if frob * (d as f64).sqrt() <= threshold {
        return false;
    }
    Operator::from_row_major(rho.to_vec()).expect("square block").trace_norm() > threshold
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationReport {
    /// `min Σ n_s γ_s` over top-tier indices.
    pub psi: f64,
    pub omega_sc: f64,
    pub ratio: f64,
    pub warning: bool,
}

/// Report for slot rates `rates` and dynamical frequency `omega_sc`.
pub fn truncation_report_for(space: &IndexSpace, rates: &[f64], omega_sc: f64) -> TruncationReport {
    assert_eq!(rates.len(), space.slots(), "one rate per slot");
    let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let psi = if space.tier() == 0 { 0.0 } else { space.tier() as f64 * slowest };
    let ratio = if omega_sc > 0.0 { psi / omega_sc } else { f64::INFINITY };
    TruncationReport { psi, omega_sc, ratio, warning: ratio < TRUNCATION_RATIO_WARN }
}

/// Largest dynamical frequency: eigenvalue spread of `H_S^D + |α|²O_S` plus
/// the system-tone Rabi scale `2|E_q|‖X‖`.
pub fn dynamical_frequency(frame: &DispersiveFrame, drive: &DriveSpec) -> f64 {
    let h = &frame.h_s_d + &frame.o_s.scale_real(frame.alpha_sq);
    let spread = match eigendecompose(&h.hermitian_part()) {
        Ok(dec) => dec.eigenvalues.last().unwrap() - dec.eigenvalues[0],
        Err(_) => 0.0,
    };
    let xnorm = frame.x.spectral_norm();
    spread + drive.tones.iter().map(|t| 2.0 * t.amplitude.norm() * xnorm).sum::<f64>()
}

pub fn truncation_report(
    space: &IndexSpace,
    baths: &[BathExpansion],
    frame: &DispersiveFrame,
    drive: &DriveSpec,
) -> TruncationReport {
    let rates: Vec<f64> = slots(baths).iter().map(|s| s.1).collect();
    truncation_report_for(space, &rates, dynamical_frequency(frame, drive))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spaces() {
        let s = IndexSpace::new(1, 2).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![&[0u16][..], &[1], &[2]]);
        let s = IndexSpace::new(2, 1).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![&[0u16, 0][..], &[1, 0], &[0, 1]]);
    }

    #[test]
    fn counts_match_binomial_and_brute_force() {
        for (m, k) in [(3, 2), (4, 3), (2, 5), (5, 0)] {
            let s = IndexSpace::new(m, k).unwrap();
            assert_eq!(s.len() as u128, binomial((m + k) as u128, k as u128));
            // Brute force over the box [0, K]^M.
            let mut brute = 0;
            let mut n = vec![0usize; m];
            loop {
                if n.iter().sum::<usize>() <= k {
                    brute += 1;
                    let n16: Vec<u16> = n.iter().map(|&v| v as u16).collect();
                    assert!(s.position(&n16).is_some());
                }
                let mut j = 0;
                while j < m {
                    n[j] += 1;
                    if n[j] <= k {
                        break;
                    }
                    n[j] = 0;
                    j += 1;
                }
                if j == m {
                    break;
                }
            }
            assert_eq!(brute, s.len());
        }
        assert_eq!(IndexSpace::new(3, 2).unwrap().len(), 10);
    }

    #[test]
    fn neighbor_tables_are_mutually_inverse() {
        let s = IndexSpace::new(3, 4).unwrap();
        for i in 0..s.len() {
            for slot in 0..3 {
                if let Some(u) = s.up(i, slot) {
                    assert_eq!(s.down(u, slot), Some(i));
                    assert_eq!(s.index(u)[slot], s.index(i)[slot] + 1);
                } else {
                    assert_eq!(s.index(i).iter().map(|&v| v as usize).sum::<usize>(), 4);
                }
                if let Some(w) = s.down(i, slot) {
                    assert_eq!(s.up(w, slot), Some(i));
                }
            }
        }
    }

    #[test]
    fn overflow_is_rejected() {
        assert!(matches!(IndexSpace::new(40, 10), Err(Error::IndexOverflow { .. })));
        assert!(IndexSpace::new(0, 1).is_err());
    }

    #[test]
    fn truncation_report_examples() {
        let r = truncation_report_for(&IndexSpace::new(1, 0).unwrap(), &[50.0], 3.0);
        assert_eq!((r.psi, r.ratio, r.warning), (0.0, 0.0, true));
        let r = truncation_report_for(&IndexSpace::new(1, 4).unwrap(), &[50.0], 3.0);
        assert_eq!(r.psi, 200.0);
        assert!((r.ratio - 200.0 / 3.0).abs() < 1e-12 && !r.warning);
        let r8 = truncation_report_for(&IndexSpace::new(1, 8).unwrap(), &[50.0], 3.0);
        assert_eq!(r8.psi, 2.0 * r.psi);
    }
}
