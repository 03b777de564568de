//! JSON run configuration: schema, defaults, and resolution into a model.
//!
//! Matrices are row-major arrays of `[re, im]` pairs. Unknown fields are
//! rejected and errors carry the path of the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algebra::{eigendecompose, pauli, Operator};
use crate::bath::{choose_l, matsubara_expansion, BathSpec};
use crate::dispersive::{build_frame, steady_alpha, DriveSpec, SystemTone};
use crate::hierarchy::{dynamical_frequency, FullHeomConfig, HierarchyOptions, MeasurementDephasing, TerminatorForm};
use crate::measurement::{MeasurementConfig, RunSpec};
use crate::sde::Scheme;
use crate::spectroscopy::{Engine, EnsembleConfig, Model, RabiQubit, Window};
use crate::{Error, Result, C64};

/// `[re, im]`
pub type Complex = [f64; 2];
/// Row-major `[re, im]` entries.
pub type Matrix = Vec<Complex>;

fn c(z: Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub spectroscopy: SpectroscopyBlock,
    #[serde(default)]
    pub output: OutputConfig,
    /// Recorded expectation values; default Pauli operators for a qubit,
    /// populations otherwise.
    #[serde(default)]
    pub observables: Vec<NamedOperator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    /// Arbitrary `H_S`, `μ` and bath couplings `S_m`.
    Matrices(MatrixSystem),
    /// Resonantly driven qubit with built-in readout parameters; the cavity
    /// block must be absent.
    RabiQubit(RabiSystem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSystem {
    pub dim: usize,
    pub h: Matrix,
    pub mu: Matrix,
    /// One coupling operator per environment.
    #[serde(default)]
    pub s: Vec<Matrix>,
    /// Initial state; default `|0⟩⟨0|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Matrix>,
}

/// [`RabiQubit`] parameters; the bath switch follows the bath block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiSystem {
    pub omega_r: f64,
    pub chi: f64,
    pub x_minus: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub eta: f64,
    pub phi_rel: f64,
    pub omega_lab: f64,
    /// Initial state; default `I/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho0: Option<Matrix>,
}

impl Default for RabiSystem {
    fn default() -> Self {
        let q = RabiQubit::default();
        Self {
            omega_r: q.omega_r,
            chi: q.chi,
            x_minus: q.x_minus,
            kappa: q.kappa,
            alpha: q.alpha,
            eta: q.eta,
            phi_rel: q.phi_rel,
            omega_lab: q.omega_lab,
            rho0: None,
        }
    }
}

impl RabiSystem {
    pub fn qubit(&self, dephasing_bath: bool) -> RabiQubit {
        RabiQubit {
            omega_r: self.omega_r,
            chi: self.chi,
            x_minus: self.x_minus,
            kappa: self.kappa,
            alpha: self.alpha,
            eta: self.eta,
            phi_rel: self.phi_rel,
            omega_lab: self.omega_lab,
            dephasing_bath,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub beta: f64,
    /// Matsubara cutoff; default the smallest `L` with `2πL/β ≥ 10 ω_SC`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub environments: Vec<Environment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub omega_c: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub eta: f64,
    /// Local-oscillator phase.
    #[serde(default)]
    pub phi: f64,
    pub e_p: Complex,
    pub omega_p: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub tones: Vec<ToneConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneConfig {
    pub amplitude: Complex,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Depth; default `max(2, ⌈10 ω_SC / γ_min⌉)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub engine: Engine,
    pub terminator: TerminatorForm,
    pub dephasing: MeasurementDephasing,
    pub purcell: bool,
    /// Full engine only; default `max(8, ⌈4|α|²⌉)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock_cutoff: Option<usize>,
    pub displaced: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        let h = HierarchyOptions::default();
        let f = FullHeomConfig::default();
        Self {
            k: None,
            engine: Engine::default(),
            terminator: h.terminator,
            dephasing: h.dephasing,
            purcell: h.purcell,
            fock_cutoff: f.fock_cutoff,
            displaced: f.displaced,
        }
    }
}

impl HierarchyConfig {
    pub fn options(&self) -> HierarchyOptions {
        HierarchyOptions { terminator: self.terminator, dephasing: self.dephasing, purcell: self.purcell }
    }

    pub fn full(&self) -> FullHeomConfig {
        FullHeomConfig { fock_cutoff: self.fock_cutoff, displaced: self.displaced }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub dt: f64,
    pub t_end: f64,
    /// Decimation: steps per recorded sample.
    pub stride: usize,
    pub scheme: Scheme,
    pub renormalize: bool,
    pub trajectories: usize,
    pub seed: u64,
    pub window: Window,
    pub detrend: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        let r = RunSpec::default();
        let e = EnsembleConfig::default();
        Self {
            dt: r.dt,
            t_end: r.t_end,
            stride: r.stride,
            scheme: r.scheme,
            renormalize: r.renormalize,
            trajectories: e.trajectories,
            seed: e.seed,
            window: e.window,
            detrend: e.detrend,
        }
    }
}

impl RunBlock {
    pub fn spec(&self) -> RunSpec {
        RunSpec {
            dt: self.dt,
            t_end: self.t_end,
            stride: self.stride,
            scheme: self.scheme,
            renormalize: self.renormalize,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            run: self.spec(),
            trajectories: self.trajectories,
            seed: self.seed,
            detrend: self.detrend,
            window: self.window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroscopyBlock {
    /// Cut-offs to sweep; each replaces γ of every environment. Empty runs
    /// the configured bath once.
    pub gammas: Vec<f64>,
    pub exclusion_bins: usize,
}

impl Default for SpectroscopyBlock {
    fn default() -> Self {
        Self { gammas: Vec::new(), exclusion_bins: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name prefix.
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), prefix: "shem".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedOperator {
    pub name: String,
    pub matrix: Matrix,
}

/// Parses a configuration. A sidecar written by a previous run (an object
/// with `tool` and `config` keys) is accepted and its `config` re-used.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| cfg_err("<root>", e.to_string()))?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("tool") && map.contains_key("config") => {
            map.remove("config").expect("checked")
        }
        v => v,
    };
    let mut track = serde_path_to_error::Track::new();
    let de = serde_path_to_error::Deserializer::new(value, &mut track);
    RunConfig::deserialize(de).map_err(|e| {
        let path = track.path().to_string();
        let msg = e.to_string();
        cfg_err(with_missing_field(&path, &msg), msg)
    })
}

/// `missing field `x`` at `a.b` is reported at `a.b.x`.
fn with_missing_field(path: &str, msg: &str) -> String {
    let field = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next());
    match (field, path) {
        (Some(f), "." | "") => f.to_string(),
        (Some(f), p) => format!("{p}.{f}"),
        (None, "." | "") => "<root>".into(),
        (None, p) => p.to_string(),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

fn matrix(path: &str, dim: usize, m: &Matrix) -> Result<Operator> {
    if m.len() != dim * dim {
        return Err(cfg_err(path, format!("expected {} entries for dimension {dim}, found {}", dim * dim, m.len())));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(cfg_err(path, "entries must be finite"));
    }
    Operator::from_row_major(m.iter().map(|&z| c(z)).collect())
}

fn hermitian(path: &str, dim: usize, m: &Matrix) -> Result<Operator> {
    let op = matrix(path, dim, m)?;
    if !op.is_hermitian() {
        return Err(cfg_err(path, format!("must be Hermitian (defect {:.3e})", op.hermiticity_defect())));
    }
    Ok(op)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be finite, got {v}")))
    }
}

fn density_matrix(path: &str, dim: usize, m: &Matrix) -> Result<Operator> {
    let rho = hermitian(path, dim, m)?;
    if (rho.trace().re - 1.0).abs() > 1e-9 {
        return Err(cfg_err(path, format!("trace must be 1, got {}", rho.trace().re)));
    }
    let dec = eigendecompose(&rho)?;
    if dec.eigenvalues[0] < -1e-9 {
        return Err(cfg_err(path, format!("must be positive semidefinite (eigenvalue {:.3e})", dec.eigenvalues[0])));
    }
    Ok(rho)
}

/// A configuration with every default resolved, ready to run.
#[derive(Clone, Debug)]
pub struct Resolved {
    /// The input with `k`, `l`, `fock_cutoff`, `rho0` and `observables` filled in.
    pub config: RunConfig,
    pub model: Model,
    pub k: usize,
    pub observables: Vec<NamedOperator>,
    /// `Ω_R/2π` for the Rabi qubit.
    pub rabi_frequency: Option<f64>,
}

impl Resolved {
    pub fn operators(&self) -> Vec<Operator> {
        let d = self.model.frame.dim();
        self.observables.iter().map(|o| matrix("observables", d, &o.matrix).expect("validated")).collect()
    }
}

fn to_matrix(op: &Operator) -> Matrix {
    op.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

fn default_observables(dim: usize) -> Vec<NamedOperator> {
    if dim == 2 {
        [("sigma_x", pauli::sigma_x()), ("sigma_y", pauli::sigma_y()), ("sigma_z", pauli::sigma_z())]
            .into_iter()
            .map(|(n, op)| NamedOperator { name: n.into(), matrix: to_matrix(&op) })
            .collect()
    } else {
        (0..dim)
            .map(|i| {
                let mut p = Operator::zeros(dim);
                p[(i, i)] = C64::new(1.0, 0.0);
                NamedOperator { name: format!("p{i}"), matrix: to_matrix(&p) }
            })
            .collect()
    }
}

/// Default depth `max(2, ⌈10 ω_SC / γ_min⌉)`, or 0 without a bath.
pub fn default_tier(omega_sc: f64, gammas: impl IntoIterator<Item = f64>) -> usize {
    let g = gammas.into_iter().fold(f64::INFINITY, f64::min);
    if !g.is_finite() {
        return 0;
    }
    2.max((10.0 * omega_sc / g).ceil() as usize)
}

impl RunConfig {
    fn validate_blocks(&self) -> Result<()> {
        let r = &self.run;
        positive("run.dt", r.dt)?;
        positive("run.t_end", r.t_end)?;
        if r.stride == 0 {
            return Err(cfg_err("run.stride", "must be at least 1"));
        }
        if let Some(b) = &self.bath {
            positive("bath.beta", b.beta)?;
            for (i, e) in b.environments.iter().enumerate() {
                positive(&format!("bath.environments[{i}].lambda"), e.lambda)?;
                positive(&format!("bath.environments[{i}].gamma"), e.gamma)?;
            }
        }
        for (i, t) in self.drive.tones.iter().enumerate() {
            finite(&format!("drive.tones[{i}].omega"), t.omega)?;
            finite(&format!("drive.tones[{i}].amplitude"), t.amplitude[0])?;
            finite(&format!("drive.tones[{i}].amplitude"), t.amplitude[1])?;
        }
        for (i, g) in self.spectroscopy.gammas.iter().enumerate() {
            positive(&format!("spectroscopy.gammas[{i}]"), *g)?;
        }
        Ok(())
    }

    fn tones(&self) -> Vec<SystemTone> {
        self.drive.tones.iter().map(|t| SystemTone { amplitude: c(t.amplitude), omega: t.omega }).collect()
    }

    /// Builds the model, with every environment's cut-off replaced by
    /// `gamma_override` when given.
    pub fn resolve_with(&self, gamma_override: Option<f64>) -> Result<Resolved> {
        self.validate_blocks()?;
        let mut config = self.clone();
        let envs: Vec<Environment> = self
            .bath
            .as_ref()
            .map(|b| {
                b.environments.iter().map(|e| Environment { gamma: gamma_override.unwrap_or(e.gamma), ..*e }).collect()
            })
            .unwrap_or_default();
        let beta = self.bath.as_ref().map_or(1.0, |b| b.beta);

        let (mut model, rabi) = match &self.system {
            SystemConfig::Matrices(m) => {
                if m.dim == 0 {
                    return Err(cfg_err("system.dim", "must be at least 1"));
                }
                let d = m.dim;
                let h = hermitian("system.h", d, &m.h)?;
                let mu = hermitian("system.mu", d, &m.mu)?;
                let s =
                    m.s.iter()
                        .enumerate()
                        .map(|(i, op)| hermitian(&format!("system.s[{i}]"), d, op))
                        .collect::<Result<Vec<_>>>()?;
                if s.len() != envs.len() {
                    return Err(cfg_err(
                        "bath.environments",
                        format!("{} environments for {} coupling operators in system.s", envs.len(), s.len()),
                    ));
                }
                let cav = self.cavity.ok_or_else(|| cfg_err("cavity", "required for matrices systems"))?;
                positive("cavity.kappa", cav.kappa)?;
                for (p, v) in
                    [("cavity.omega_c", cav.omega_c), ("cavity.omega_p", cav.omega_p), ("cavity.phi", cav.phi)]
                {
                    finite(p, v)?;
                }
                finite("cavity.e_p", cav.e_p[0])?;
                finite("cavity.e_p", cav.e_p[1])?;
                if !(0.0..=1.0).contains(&cav.eta) {
                    return Err(cfg_err("cavity.eta", format!("must lie in [0, 1], got {}", cav.eta)));
                }
                let e_p = c(cav.e_p);
                let delta = cav.omega_c - cav.omega_p;
                let alpha = steady_alpha(e_p, delta, cav.kappa)?;
                let frame = build_frame(&h, &mu, &s, cav.omega_c, alpha.norm_sqr())?;
                let meas = MeasurementConfig { kappa: cav.kappa, eta: cav.eta, phi: cav.phi, e_p, delta };
                let drive = DriveSpec { e_p, omega_p: cav.omega_p, tones: self.tones() };
                let rho0 = match &m.rho0 {
                    Some(r) => density_matrix("system.rho0", d, r)?,
                    None => {
                        let mut r = Operator::zeros(d);
                        r[(0, 0)] = C64::new(1.0, 0.0);
                        r
                    }
                };
                let model = Model { frame, baths: Vec::new(), meas, drive, rho0 };
                (model, None)
            }
            SystemConfig::RabiQubit(r) => {
                if self.cavity.is_some() {
                    return Err(cfg_err("cavity", "rabi_qubit systems carry their readout parameters in system"));
                }
                if envs.len() > 1 {
                    return Err(cfg_err("bath.environments", "rabi_qubit couples to at most one environment"));
                }
                let q = r.qubit(!envs.is_empty());
                q.validate().map_err(|e| cfg_err("system", e.to_string()))?;
                let rho0 = match &r.rho0 {
                    Some(rho) => density_matrix("system.rho0", 2, rho)?,
                    None => Operator::identity(2).scale_real(0.5),
                };
                let drive = DriveSpec { tones: self.tones(), ..DriveSpec::default() };
                let model = Model { frame: q.frame()?, baths: Vec::new(), meas: q.measurement(), drive, rho0 };
                (model, Some(q.omega_r / (2.0 * std::f64::consts::PI)))
            }
        };

        let omega_sc = dynamical_frequency(&model.frame, &model.drive);
        if let Some(b) = &self.bath {
            let l = match b.l {
                Some(l) => l,
                None => envs
                    .iter()
                    .map(|e| choose_l(&BathSpec { lambda: e.lambda, gamma: e.gamma, beta, l: 0 }, omega_sc))
                    .max()
                    .unwrap_or(0),
            };
            model.baths = envs
                .iter()
                .map(|e| matsubara_expansion(&BathSpec { lambda: e.lambda, gamma: e.gamma, beta, l }))
                .collect::<Result<Vec<_>>>()?;
            if gamma_override.is_none() {
                config.bath.as_mut().expect("present").l = Some(l);
            }
        }
        let k = self.hierarchy.k.unwrap_or_else(|| default_tier(omega_sc, envs.iter().map(|e| e.gamma)));
        if gamma_override.is_none() {
            config.hierarchy.k = Some(k);
        }
        if self.hierarchy.engine == Engine::Full {
            config.hierarchy.fock_cutoff = Some(self.hierarchy.full().resolved_cutoff(model.meas.alpha()?));
        }

        let d = model.frame.dim();
        let observables = if self.observables.is_empty() { default_observables(d) } else { self.observables.clone() };
        for (i, o) in observables.iter().enumerate() {
            hermitian(&format!("observables[{i}].matrix"), d, &o.matrix)?;
        }
        config.observables = observables.clone();
        match &mut config.system {
            SystemConfig::Matrices(m) => m.rho0 = Some(to_matrix(&model.rho0)),
            SystemConfig::RabiQubit(r) => r.rho0 = Some(to_matrix(&model.rho0)),
        }
        Ok(Resolved { config, model, k, observables, rabi_frequency: rabi })
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with(None)
    }
}
