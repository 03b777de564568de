use crate::algebra::Operator;
use crate::bath::BathExpansion;
use crate::dispersive::{back_action_operator, DispersiveFrame, DriveSpec};
use crate::hierarchy::{
    expect_vec, slots, trace_norm_exceeds, trace_vec, HierarchyOptions, HierarchyState, IndexSpace,
    MeasurementDephasing, TerminatorForm,
};
use crate::liouville::{BlockAssembler, Csr, Generator, Superop, Tone};
use crate::measurement::MeasurementConfig;
use crate::sde::{SdeSystem, DIVERGENCE_THRESHOLD};
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Eliminated-cavity hierarchy for a system under continuous dispersive
/// measurement.
///
/// Drift for every index `n`:
///
/// ```text
/// dσⁿ = −i[H_S^D + |α|²O_S − tones, σⁿ] + κD[X]σⁿ − νₙσⁿ
///       + c_ν D[O_S]σⁿ + iΔ|α|²/((κ+ν)²+Δ²) [O_S², σⁿ]
///       − Σ_m Γ_m[F̃_m,[F̃_m,σⁿ]]
///       − i Σ_s [F̃_m, σ^{n+e_s}] − i Σ_s n_s (c_s F̃_m σ^{n−e_s} − c_s* σ^{n−e_s} F̃_m)
/// ```
///
/// and diffusion `−√(2ηκ) H[B] σⁿ` with the trace in `H` taken against `σ⁰`.
#[derive(Clone, Debug)]
pub struct ShemSystem {
    space: IndexSpace,
    d: usize,
    generator: Generator,
    /// `ρ ↦ Bρ + ρB†`
    back_action: Option<Csr>,
    b_plus_bd: Operator,
    noise_scale: f64,
    rates: Vec<f64>,
}

impl ShemSystem {
    pub fn new(
        frame: &DispersiveFrame,
        baths: &[BathExpansion],
        meas: &MeasurementConfig,
        drive: &DriveSpec,
        k: usize,
        options: &HierarchyOptions,
    ) -> Result<Self> {
        meas.validate()?;
        drive.validate()?;
        if baths.len() != frame.n_envs() {
            return Err(Error::DimensionMismatch { expected: frame.n_envs(), found: baths.len() });
        }
        let d = frame.dim();
        let alpha = meas.alpha()?;
        let a2 = alpha.norm_sqr();
        let frame = frame.with_alpha_sq(a2);
        let (kappa, delta) = (meas.kappa, meas.delta);

        let slot_list = slots(baths);
        let space = IndexSpace::new(slot_list.len().max(1), if slot_list.is_empty() { 0 } else { k })?;
        let n_aux = space.len();

        let mut unitary = Superop::hamiltonian(&(&frame.h_s_d + &frame.o_s.scale_real(a2)));
        if options.purcell {
            unitary.axpy(C64::new(kappa, 0.0), &Superop::dissipator(&frame.x));
        }
        for (bath, f) in baths.iter().zip(&frame.f_tilde) {
            match options.terminator {
                TerminatorForm::Off => {}
                TerminatorForm::Dissipator => unitary.axpy(bath.terminator, &Superop::dissipator(f)),
                TerminatorForm::DoubleCommutator | TerminatorForm::FlippedSign => {
                    let sign = if options.terminator == TerminatorForm::FlippedSign { 1.0 } else { -1.0 };
                    let double = &(&Superop::left(&f.matmul(f)) + &Superop::right(&f.matmul(f)))
                        - &Superop::sandwich(f, f).scale(C64::new(2.0, 0.0));
                    unitary.axpy(bath.terminator * sign, &double);
                }
            }
        }
        let dephase = Superop::dissipator(&frame.o_s);
        let stark = Superop::commutator(&frame.o_s.matmul(&frame.o_s));
        let identity = Superop::identity(d);
        let factor = match options.dephasing {
            MeasurementDephasing::Consistent => 2.0,
            MeasurementDephasing::PaperLiteral => 1.0,
        };
        let ups: Vec<Superop> = frame.f_tilde.iter().map(|f| Superop::commutator(f).scale(-I)).collect();
        let lefts: Vec<Superop> = frame.f_tilde.iter().map(Superop::left).collect();
        let rights: Vec<Superop> = frame.f_tilde.iter().map(Superop::right).collect();

        let mut asm = BlockAssembler::new(d, n_aux);
        for i in 0..n_aux {
            let n = space.index(i);
            let nu: f64 =
                if slot_list.is_empty() { 0.0 } else { n.iter().zip(&slot_list).map(|(&ns, s)| ns as f64 * s.1).sum() };
            let denom = (kappa + nu).powi(2) + delta * delta;
            asm.add(i, i, C64::new(1.0, 0.0), &unitary);
            asm.add(i, i, C64::new(-nu, 0.0), &identity);
            asm.add(i, i, C64::new(factor * (kappa + nu) * a2 / denom, 0.0), &dephase);
            asm.add(i, i, I * (delta * a2 / denom), &stark);
            for (s, &(m, _, c)) in slot_list.iter().enumerate() {
                if let Some(u) = space.up(i, s) {
                    asm.add(i, u, C64::new(1.0, 0.0), &ups[m]);
                }
                if let Some(w) = space.down(i, s) {
                    let ns = n[s] as f64;
                    asm.add(i, w, -I * c * ns, &lefts[m]);
                    asm.add(i, w, I * c.conj() * ns, &rights[m]);
                }
            }
        }

        let xd = frame.x.dagger();
        let mut tones = Vec::new();
        for tone in &drive.tones {
            // −i[−(E e^{−iωt} X† + E* e^{iωt} X), ·]
            tones.push(Tone {
                omega: tone.omega,
                superop: Csr::from(&Superop::commutator(&xd).scale(I * tone.amplitude)),
            });
            tones.push(Tone {
                omega: -tone.omega,
                superop: Csr::from(&Superop::commutator(&frame.x).scale(I * tone.amplitude.conj())),
            });
        }
        let generator = Generator { static_part: asm.finish(), tones, block_size: d * d };

        let b = back_action_operator(&frame, kappa, delta, meas.phi, alpha);
        let noise_scale = (2.0 * meas.eta * kappa).sqrt();
        let back_action = if noise_scale > 0.0 && b.max_abs() > 0.0 {
            Some(Csr::from(&(&Superop::left(&b) + &Superop::right(&b.dagger()))))
        } else {
            None
        };
        Ok(Self {
            space,
            d,
            generator,
            back_action,
            b_plus_bd: &b + &b.dagger(),
            noise_scale,
            rates: slot_list.iter().map(|s| s.1).collect(),
        })
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    /// Decay rate of each hierarchy slot.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn initial_state(&self, rho0: &Operator) -> Result<HierarchyState> {
        if rho0.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: rho0.dim() });
        }
        Ok(HierarchyState::from_physical(rho0, self.space.len()))
    }

    /// `Tr[(B + B†) σ⁰]`; the eliminated current's signal is `2ηκ` times this.
    pub fn readout_mean(&self, x: &[C64]) -> f64 {
        expect_vec(&self.b_plus_bd, &x[..self.d * self.d]).re
    }

    /// `√(2ηκ)`.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Deterministic derivative of a whole state.
    pub fn drift_state(&self, state: &HierarchyState) -> HierarchyState {
        let mut out = state.clone();
        self.drift(state.t, &state.data, &mut out.data);
        out
    }

    /// Coefficient of `dW` for a whole state.
    pub fn diffusion_state(&self, state: &HierarchyState) -> HierarchyState {
        let mut out = state.clone();
        self.diffusion(state.t, &state.data, &mut out.data);
        out
    }
}

impl SdeSystem for ShemSystem {
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
        let mean = self.readout_mean(x);
        let scale = C64::new(-self.noise_scale, 0.0);
        for (xb, ob) in x.chunks_exact(d2).zip(out.chunks_exact_mut(d2)) {
            back.matvec(xb, ob);
            for (o, &v) in ob.iter_mut().zip(xb) {
                *o = scale * (*o - v * mean);
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
