//! Rabi-driven qubit under dispersive readout and a sweep over bath cut-offs.

use serde::{Deserialize, Serialize};

use crate::algebra::{pauli, Operator};
use crate::bath::{matsubara_expansion, BathExpansion, BathSpec};
use crate::dispersive::{bad_cavity_epsilon, build_frame, BadCavityReport, DispersiveFrame, DriveSpec};
use crate::error::invalid;
use crate::hierarchy::{
    truncation_report, FullHeomConfig, FullHeomSystem, HierarchyOptions, HierarchyState, IndexSpace, ShemSystem,
    TruncationReport,
};
use crate::measurement::{MeasurementConfig, Monitored};
use crate::spectroscopy::{ensemble_spectrum, EnsembleConfig, PeakAnalysis, SpectrumResult};
use crate::{Result, C64};

/// Resonantly driven qubit whose `σ_z` is read out through a dispersive cavity.
///
/// The frame is built from a lab-frame Jaynes-Cummings coupling with qubit
/// splitting `omega_lab` and a detuning chosen so that `O_S = ±χσ_z` and
/// `X ≈ x_− σ_−`. The working frame rotates with the (Stark-shifted) qubit,
/// drops the counter-rotating `σ_+` part of `X`, and carries the Rabi drive
/// `(Ω_R/2)σ_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiQubit {
    pub omega_r: f64,
    pub chi: f64,
    /// Purcell amplitude; `κ x_−²` is the relaxation rate through `κD[X]`.
    pub x_minus: f64,
    pub kappa: f64,
    /// Steady cavity amplitude `|α|` (taken real).
    pub alpha: f64,
    pub eta: f64,
    /// Local-oscillator phase relative to `arg α`.
    pub phi_rel: f64,
    pub omega_lab: f64,
    /// Bath coupling operator `S = σ_z`.
    pub dephasing_bath: bool,
}

impl Default for RabiQubit {
    fn default() -> Self {
        Self {
            omega_r: 3.0,
            chi: 0.36,
            x_minus: 0.001f64.sqrt(),
            kappa: 50.0,
            alpha: 50.0f64.sqrt(),
            eta: 1.0,
            phi_rel: -std::f64::consts::FRAC_PI_2,
            omega_lab: 1e4,
            dephasing_bath: true,
        }
    }
}

impl RabiQubit {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_r", self.omega_r),
            ("chi", self.chi),
            ("x_minus", self.x_minus),
            ("kappa", self.kappa),
            ("omega_lab", self.omega_lab),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("qubit {name} must be positive, got {v}")));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("qubit alpha must be non-negative, got {}", self.alpha)));
        }
        if 2.0 * self.x_minus * self.x_minus * self.omega_lab <= self.chi {
            return Err(invalid("chi too large for x_minus and omega_lab: needs 2 x_minus² omega_lab > chi"));
        }
        Ok(())
    }

    /// Lab-frame detuning `δ = ω_c − Ω` giving `|O_S| = χσ_z`.
    pub fn lab_detuning(&self) -> f64 {
        let w = self.omega_lab;
        2.0 * w * self.chi / (2.0 * self.x_minus * self.x_minus * w - self.chi)
    }

    /// Relaxation rate `κ x_−²` through the Purcell channel.
    pub fn purcell_rate(&self) -> f64 {
        self.kappa * self.x_minus * self.x_minus
    }

    pub fn frame(&self) -> Result<DispersiveFrame> {
        self.validate()?;
        let delta = self.lab_detuning();
        let g = self.x_minus * delta;
        let h_lab = pauli::sigma_z().scale_real(self.omega_lab / 2.0);
        let mu = pauli::sigma_x().scale_real(g);
        let s = if self.dephasing_bath { vec![pauli::sigma_z()] } else { vec![] };
        let a2 = self.alpha * self.alpha;
        let lab = build_frame(&h_lab, &mu, &s, self.omega_lab + delta, a2)?;
        let x = pauli::sigma_minus().scale_real(lab.x[(0, 1)].re);
        let h = &pauli::sigma_x().scale_real(self.omega_r / 2.0) - &lab.o_s.scale_real(a2);
        let mut frame = DispersiveFrame::from_operators(x, h, lab.o_s, lab.s, lab.s_tilde, lab.q, a2)?;
        frame.dispersive_ratio = lab.dispersive_ratio;
        frame.warnings = lab.warnings;
        Ok(frame)
    }

    pub fn measurement(&self) -> MeasurementConfig {
        let alpha = C64::new(self.alpha, 0.0);
        MeasurementConfig {
            kappa: self.kappa,
            eta: self.eta,
            phi: self.phi_rel,
            e_p: MeasurementConfig::e_p_for(alpha, self.kappa, 0.0),
            delta: 0.0,
        }
    }

    /// Model with a Drude-Lorentz bath on `σ_z` (ignored if `dephasing_bath` is off).
    pub fn model(&self, bath: Option<BathSpec>) -> Result<Model> {
        let frame = self.frame()?;
        let baths = match (self.dephasing_bath, bath) {
            (true, Some(spec)) => vec![matsubara_expansion(&spec)?],
            (true, None) => return Err(invalid("a dephasing bath needs bath parameters")),
            (false, _) => vec![],
        };
        Ok(Model {
            frame,
            baths,
            meas: self.measurement(),
            drive: DriveSpec::default(),
            rho0: Operator::identity(2).scale_real(0.5),
        })
    }
}

/// Which hierarchy integrates the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Cavity adiabatically eliminated.
    #[default]
    Eliminated,
    /// Joint system ⊗ cavity hierarchy.
    Full,
}

/// A built hierarchy of either kind.
#[derive(Clone, Debug)]
pub enum BuiltSystem {
    Eliminated(ShemSystem),
    Full(FullHeomSystem),
}

impl BuiltSystem {
    pub fn monitored(&self) -> &dyn Monitored {
        match self {
            Self::Eliminated(s) => s,
            Self::Full(s) => s,
        }
    }

    pub fn space(&self) -> &IndexSpace {
        match self {
            Self::Eliminated(s) => s.space(),
            Self::Full(s) => s.space(),
        }
    }

    pub fn initial_state(&self, rho_s: &Operator) -> Result<HierarchyState> {
        match self {
            Self::Eliminated(s) => s.initial_state(rho_s),
            Self::Full(s) => s.initial_state(rho_s),
        }
    }
}

/// Everything needed to build either engine for one parameter set.
#[derive(Clone, Debug)]
pub struct Model {
    pub frame: DispersiveFrame,
    pub baths: Vec<BathExpansion>,
    pub meas: MeasurementConfig,
    pub drive: DriveSpec,
    pub rho0: Operator,
}

impl Model {
    pub fn shem(&self, k: usize, options: &HierarchyOptions) -> Result<ShemSystem> {
        ShemSystem::new(&self.frame, &self.baths, &self.meas, &self.drive, k, options)
    }

    pub fn full(&self, k: usize, options: &HierarchyOptions, config: &FullHeomConfig) -> Result<FullHeomSystem> {
        FullHeomSystem::new(&self.frame, &self.baths, &self.meas, &self.drive, k, options, config)
    }

    pub fn build(
        &self,
        engine: Engine,
        k: usize,
        options: &HierarchyOptions,
        full: &FullHeomConfig,
    ) -> Result<BuiltSystem> {
        Ok(match engine {
            Engine::Eliminated => BuiltSystem::Eliminated(self.shem(k, options)?),
            Engine::Full => BuiltSystem::Full(self.full(k, options, full)?),
        })
    }

    pub fn bad_cavity(&self) -> Result<BadCavityReport> {
        bad_cavity_epsilon(&self.frame, &self.baths, self.meas.kappa, self.meas.delta, self.meas.alpha()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroscopyConfig {
    pub qubit: RabiQubit,
    pub gammas: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    /// Matsubara cutoff; the rest goes into the terminator.
    pub l: usize,
    /// Hierarchy depth; default `max(2, ⌈10 Ω_R / γ⌉)` per γ.
    pub k: Option<usize>,
    pub hierarchy: HierarchyOptions,
    pub ensemble: EnsembleConfig,
    /// Bins next to DC ignored when locating the peak.
    pub exclusion_bins: usize,
}

impl Default for SpectroscopyConfig {
    fn default() -> Self {
        Self {
            qubit: RabiQubit::default(),
            gammas: vec![50.0, 10.0, 5.0],
            lambda: 0.05,
            beta: 0.05,
            l: 0,
            k: None,
            hierarchy: HierarchyOptions::default(),
            ensemble: EnsembleConfig::default(),
            exclusion_bins: 3,
        }
    }
}

impl SpectroscopyConfig {
    pub fn tier_for(&self, gamma: f64) -> usize {
        self.k.unwrap_or_else(|| 2.max((10.0 * self.qubit.omega_r / gamma).ceil() as usize))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaResult {
    pub gamma: f64,
    pub k: usize,
    pub spectrum: SpectrumResult,
    pub peaks: PeakAnalysis,
    pub bad_cavity: BadCavityReport,
    pub truncation: TruncationReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub f_peak: Option<f64>,
    pub fwhm: Option<f64>,
    pub noise_floor: f64,
    pub n_used: usize,
    pub n_diverged: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdicts {
    /// Peak of the widest-band spectrum within 10% of `Ω_R/2π` (one-bin slack).
    pub peak_near_rabi: bool,
    /// `|f_peak − Ω_R/2π|` non-decreasing as γ decreases (one-bin slack).
    pub shift_monotone: bool,
    /// FWHM non-decreasing as γ decreases.
    pub broadening_monotone: bool,
    /// Every noise floor is at least half the white shot-noise level `4ηκ`.
    pub offset_present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectroscopyResult {
    /// Ordered by decreasing γ.
    pub results: Vec<GammaResult>,
    pub table: Vec<ComparisonRow>,
    /// Present when a reference Rabi frequency is known.
    pub verdicts: Option<Verdicts>,
    /// `Ω_R / 2π`.
    pub rabi_frequency: Option<f64>,
    /// `4ηκ`.
    pub white_level: f64,
    pub warnings: Vec<String>,
}

/// Verdicts over rows already sorted by decreasing γ.
pub(crate) fn verdicts(rows: &[ComparisonRow], rabi: f64, df: f64, white: f64) -> Verdicts {
    let peaks: Option<Vec<(f64, f64)>> = rows.iter().map(|r| Some((r.f_peak?, r.fwhm?))).collect();
    let offset_present = rows.iter().all(|r| r.noise_floor >= 0.5 * white);
    let Some(peaks) = peaks else {
        return Verdicts { peak_near_rabi: false, shift_monotone: false, broadening_monotone: false, offset_present };
    };
    let shift: Vec<f64> = peaks.iter().map(|p| (p.0 - rabi).abs()).collect();
    Verdicts {
        peak_near_rabi: peaks.first().is_some_and(|p| (p.0 - rabi).abs() <= 0.1 * rabi + df),
        shift_monotone: shift.windows(2).all(|w| w[1] >= w[0] - df),
        broadening_monotone: peaks.windows(2).all(|w| w[1].1 >= w[0].1),
        offset_present,
    }
}

/// One bath cut-off of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub k: usize,
    pub model: Model,
}

/// Shared settings of a sweep.
#[derive(Clone, Debug, Default)]
pub struct SweepSettings {
    pub engine: Engine,
    pub hierarchy: HierarchyOptions,
    pub full: FullHeomConfig,
    pub ensemble: EnsembleConfig,
    pub exclusion_bins: usize,
    /// Expected line `Ω_R/2π`; enables the trend verdicts.
    pub rabi_frequency: Option<f64>,
}

/// Runs one ensemble per point, all with the same master seed, in order of
/// decreasing γ.
pub fn spectrum_sweep(mut points: Vec<SweepPoint>, settings: &SweepSettings) -> Result<SpectroscopyResult> {
    if points.is_empty() {
        return Err(invalid("at least one bath cut-off is required"));
    }
    points.sort_by(|a, b| b.gamma.total_cmp(&a.gamma));
    let mut results = Vec::with_capacity(points.len());
    let mut warnings = Vec::new();
    for p in &points {
        let sys = p.model.build(settings.engine, p.k, &settings.hierarchy, &settings.full)?;
        let bad_cavity = p.model.bad_cavity()?;
        if !bad_cavity.valid {
            warnings.push(format!("gamma = {}: bad-cavity parameter {:.3} exceeds 0.1", p.gamma, bad_cavity.epsilon));
        }
        let truncation = truncation_report(sys.space(), &p.model.baths, &p.model.frame, &p.model.drive);
        if truncation.warning {
            warnings.push(format!("gamma = {}: truncation ratio {:.2} below 10", p.gamma, truncation.ratio));
        }
        let x0 = sys.initial_state(&p.model.rho0)?.data;
        let mut spectrum = ensemble_spectrum(sys.monitored(), &x0, &settings.ensemble)?;
        spectrum.config = serde_json::json!({ "gamma": p.gamma, "lambda": p.lambda, "beta": p.beta, "k": p.k });
        let peaks = spectrum.peak_metrics(settings.exclusion_bins)?;
        results.push(GammaResult { gamma: p.gamma, k: p.k, spectrum, peaks, bad_cavity, truncation });
    }
    let table: Vec<ComparisonRow> = results
        .iter()
        .zip(&points)
        .map(|(r, p)| ComparisonRow {
            gamma: r.gamma,
            lambda: p.lambda,
            beta: p.beta,
            f_peak: r.peaks.peak.map(|m| m.f_peak),
            fwhm: r.peaks.peak.map(|m| m.fwhm),
            noise_floor: r.peaks.noise_floor,
            n_used: r.spectrum.n_used,
            n_diverged: r.spectrum.n_diverged,
        })
        .collect();
    let meas = &points[0].model.meas;
    let white = 4.0 * meas.eta * meas.kappa;
    let verdicts = settings.rabi_frequency.map(|rabi| verdicts(&table, rabi, results[0].spectrum.df(), white));
    Ok(SpectroscopyResult {
        results,
        table,
        verdicts,
        rabi_frequency: settings.rabi_frequency,
        white_level: white,
        warnings,
    })
}

/// Sweeps the bath cut-off for the Rabi-driven qubit.
pub fn weak_spectroscopy_experiment(cfg: &SpectroscopyConfig) -> Result<SpectroscopyResult> {
    let points = cfg
        .gammas
        .iter()
        .map(|&gamma| {
            let spec = BathSpec { lambda: cfg.lambda, gamma, beta: cfg.beta, l: cfg.l };
            Ok(SweepPoint {
                gamma,
                lambda: cfg.lambda,
                beta: cfg.beta,
                k: cfg.tier_for(gamma),
                model: cfg.qubit.model(Some(spec))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = SweepSettings {
        engine: Engine::Eliminated,
        hierarchy: cfg.hierarchy,
        full: FullHeomConfig::default(),
        ensemble: cfg.ensemble,
        exclusion_bins: cfg.exclusion_bins,
        rabi_frequency: Some(cfg.qubit.omega_r / (2.0 * std::f64::consts::PI)),
    };
    spectrum_sweep(points, &settings)
}
