use serde::{Deserialize, Serialize};

use crate::algebra::{annihilation, Operator};
use crate::bath::BathExpansion;
use crate::dispersive::{DispersiveFrame, DriveSpec};
use crate::hierarchy::{
    expect_vec, slots, trace_norm_exceeds, trace_vec, HierarchyOptions, HierarchyState, IndexSpace, TerminatorForm,
};
use crate::liouville::{BlockAssembler, Csr, Generator, Superop, Tone};
use crate::measurement::MeasurementConfig;
use crate::sde::{SdeSystem, DIVERGENCE_THRESHOLD};
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);
/// Upper bound on `(d·(N_c+1))² × N_aux`.
pub const MAX_JOINT_ENTRIES: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullHeomConfig {
    /// Highest retained Fock level `N_c`; default `max(8, ⌈4|α|²⌉)`.
    pub fock_cutoff: Option<usize>,
    /// Work in the frame displaced by the steady amplitude `α`.
    pub displaced: bool,
}

impl Default for FullHeomConfig {
    fn default() -> Self {
        Self { fock_cutoff: None, displaced: true }
    }
}

impl FullHeomConfig {
    pub fn resolved_cutoff(&self, alpha: C64) -> usize {
        self.fock_cutoff.unwrap_or_else(|| 8.max((4.0 * alpha.norm_sqr()).ceil() as usize))
    }
}

/// Hybrid Markov-HEOM for the joint system ⊗ cavity state in the frame
/// rotating at the cavity drive frequency, with homodyne unraveling of the
/// cavity leakage `2κ D[(1+Λ)a]`.
///
/// The joint index is system-major. With `displaced`, every cavity operator
/// is written as `a + α`, so the cavity sits near vacuum.
#[derive(Clone, Debug)]
pub struct FullHeomSystem {
    space: IndexSpace,
    d_sys: usize,
    levels: usize,
    d: usize,
    alpha_shift: C64,
    generator: Generator,
    back_action: Option<Csr>,
    c_plus_cd: Operator,
    noise_scale: f64,
}

impl FullHeomSystem {
    pub fn new(
        frame: &DispersiveFrame,
        baths: &[BathExpansion],
        meas: &MeasurementConfig,
        drive: &DriveSpec,
        k: usize,
        options: &HierarchyOptions,
        config: &FullHeomConfig,
    ) -> Result<Self> {
        meas.validate()?;
        drive.validate()?;
        if baths.len() != frame.n_envs() {
            return Err(Error::DimensionMismatch { expected: frame.n_envs(), found: baths.len() });
        }
        let alpha = meas.alpha()?;
        let levels = config.resolved_cutoff(alpha) + 1;
        let d_sys = frame.dim();
        let d = d_sys * levels;
        let slot_list = slots(baths);
        let space = IndexSpace::new(slot_list.len().max(1), if slot_list.is_empty() { 0 } else { k })?;
        let entries = (d * d).saturating_mul(space.len());
        if entries > MAX_JOINT_ENTRIES {
            return Err(Error::InvalidParameter(format!(
                "joint system ⊗ cavity hierarchy has {entries} entries (limit {MAX_JOINT_ENTRIES}); lower the Fock cutoff or tier"
            )));
        }

        let id_s = Operator::identity(d_sys);
        let id_c = Operator::identity(levels);
        let alpha_shift = if config.displaced { alpha } else { C64::new(0.0, 0.0) };
        let a = &id_s.kron(&annihilation(levels)) + &Operator::identity(d).scale(alpha_shift);
        let ad = a.dagger();
        let n = ad.matmul(&a);
        let sys = |op: &Operator| op.kron(&id_c);
        let one_plus = &Operator::identity(d) + &sys(&frame.lambda);

        let drive_term = one_plus.matmul(&ad).scale(meas.e_p);
        let h = &(&(&sys(&frame.h_s_d) + &n.scale_real(meas.delta)) + &sys(&frame.o_s).matmul(&n))
            + &(&drive_term + &drive_term.dagger());
        let mut base = Superop::hamiltonian(&h.hermitian_part());
        if options.purcell {
            base.axpy(C64::new(meas.kappa, 0.0), &Superop::dissipator(&sys(&frame.x)));
        }
        let leak = one_plus.matmul(&a);
        base.axpy(C64::new(2.0 * meas.kappa, 0.0), &Superop::dissipator(&leak));

        let f: Vec<Operator> = frame.s_tilde.iter().zip(&frame.q).map(|(s, q)| &sys(s) + &sys(q).matmul(&n)).collect();
        for (bath, fm) in baths.iter().zip(&f) {
            let double = || {
                let f2 = fm.matmul(fm);
                &(&Superop::left(&f2) + &Superop::right(&f2)) - &Superop::sandwich(fm, fm).scale(C64::new(2.0, 0.0))
            };
            match options.terminator {
                TerminatorForm::Off => {}
                TerminatorForm::Dissipator => base.axpy(bath.terminator, &Superop::dissipator(fm)),
                TerminatorForm::DoubleCommutator => base.axpy(-bath.terminator, &double()),
                TerminatorForm::FlippedSign => base.axpy(bath.terminator, &double()),
            }
        }

        let identity = Superop::identity(d);
        let ups: Vec<Superop> = f.iter().map(|fm| Superop::commutator(fm).scale(-I)).collect();
        let lefts: Vec<Superop> = f.iter().map(Superop::left).collect();
        let rights: Vec<Superop> = f.iter().map(Superop::right).collect();
        let mut asm = BlockAssembler::new(d, space.len());
        for i in 0..space.len() {
            let idx = space.index(i);
            let nu: f64 = idx.iter().zip(&slot_list).map(|(&ns, s)| ns as f64 * s.1).sum();
            asm.add(i, i, C64::new(1.0, 0.0), &base);
            asm.add(i, i, C64::new(-nu, 0.0), &identity);
            for (s, &(m, _, c)) in slot_list.iter().enumerate() {
                if let Some(u) = space.up(i, s) {
                    asm.add(i, u, C64::new(1.0, 0.0), &ups[m]);
                }
                if let Some(w) = space.down(i, s) {
                    let ns = idx[s] as f64;
                    asm.add(i, w, -I * c * ns, &lefts[m]);
                    asm.add(i, w, I * c.conj() * ns, &rights[m]);
                }
            }
        }

        let x = sys(&frame.x);
        let xd = x.dagger();
        let mut tones = Vec::new();
        for tone in &drive.tones {
            tones.push(Tone {
                omega: tone.omega,
                superop: Csr::from(&Superop::commutator(&xd).scale(I * tone.amplitude)),
            });
            tones.push(Tone {
                omega: -tone.omega,
                superop: Csr::from(&Superop::commutator(&x).scale(I * tone.amplitude.conj())),
            });
        }

        let c_op = leak.scale(C64::from_polar(1.0, -meas.phi));
        let noise_scale = (2.0 * meas.eta * meas.kappa).sqrt();
        let back_action =
            (noise_scale > 0.0).then(|| Csr::from(&(&Superop::left(&c_op) + &Superop::right(&c_op.dagger()))));
        Ok(Self {
            space,
            d_sys,
            levels,
            d,
            alpha_shift,
            generator: Generator { static_part: asm.finish(), tones, block_size: d * d },
            back_action,
            c_plus_cd: &c_op + &c_op.dagger(),
            noise_scale,
        })
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    /// Number of retained Fock levels `N_c + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn joint_dim(&self) -> usize {
        self.d
    }

    /// Displacement applied to the cavity operators.
    pub fn alpha_shift(&self) -> C64 {
        self.alpha_shift
    }

    /// `ρ_S ⊗ |0⟩⟨0|` (the coherent state `|α⟩` when displaced).
    pub fn initial_state(&self, rho_s: &Operator) -> Result<HierarchyState> {
        if rho_s.dim() != self.d_sys {
            return Err(Error::DimensionMismatch { expected: self.d_sys, found: rho_s.dim() });
        }
        let mut vac = Operator::zeros(self.levels);
        vac[(0, 0)] = C64::new(1.0, 0.0);
        Ok(HierarchyState::from_physical(&rho_s.kron(&vac), self.space.len()))
    }

    /// Joint physical state `σ⁰` as an operator.
    pub fn joint_state(&self, x: &[C64]) -> Operator {
        Operator::from_row_major(x[..self.d * self.d].to_vec()).expect("square block")
    }

    /// System reduced state `Tr_C σ⁰`.
    pub fn system_state(&self, x: &[C64]) -> Operator {
        self.joint_state(x).partial_trace_second(self.d_sys, self.levels).expect("dimensions fixed at construction")
    }

    /// Cavity reduced state `Tr_S σ⁰` in the working (possibly displaced) frame.
    pub fn cavity_state(&self, x: &[C64]) -> Operator {
        self.joint_state(x).partial_trace_first(self.d_sys, self.levels).expect("dimensions fixed at construction")
    }

    /// Signal part `−2ηκ ⟨(1+Λ)(e^{−iφ}a + e^{iφ}a†)⟩` of the detector current.
    /// The overall sign matches the eliminated engine's current convention.
    pub fn current_signal(&self, x: &[C64]) -> f64 {
        -self.noise_scale * self.noise_scale * expect_vec(&self.c_plus_cd, &x[..self.d * self.d]).re
    }

    /// `√(2ηκ)`.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Population of the top retained Fock level, a truncation diagnostic.
    pub fn top_level_population(&self, x: &[C64]) -> f64 {
        self.cavity_state(x)[(self.levels - 1, self.levels - 1)].re
    }
}

impl SdeSystem for FullHeomSystem {
    fn dim(&self) -> usize {
        self.generator.dim()
    }

    fn drift(&self, t: f64, x: &[C64], out: &mut [C64]) {
        self.generator.apply(t, x, out);
    }

    fn diffusion(&self, _t: f64, x: &[C64], out: &mut [C64]) {
        let Some(back) = &self.back_action else {
            out.fill(C64::new(0.0, 0.0));
            return;
        };
        let d2 = self.d * self.d;
        let mean = expect_vec(&self.c_plus_cd, &x[..d2]).re;
        for (xb, ob) in x.chunks_exact(d2).zip(out.chunks_exact_mut(d2)) {
            back.matvec(xb, ob);
            for (o, &v) in ob.iter_mut().zip(xb) {
                *o = (*o - v * mean) * self.noise_scale;
            }
        }
    }

    fn noisy(&self) -> bool {
        self.back_action.is_some()
    }

    fn trace(&self, x: &[C64]) -> Option<C64> {
        Some(trace_vec(&x[..self.d * self.d], self.d))
    }

    fn diverged(&self, x: &[C64]) -> bool {
        trace_norm_exceeds(&x[..self.d * self.d], self.d, DIVERGENCE_THRESHOLD)
            || !x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}
