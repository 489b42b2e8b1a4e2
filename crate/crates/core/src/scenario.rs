//! Scenario files, the run pipeline and report emission.
//!
//! A scenario names the tiers to run (`pm`, `qa`, `qt`, `cwe`), the model,
//! the initial state and a list of cross-checks. [`run`] evolves every
//! requested tier, evaluates each check exactly once and collects the
//! result in a [`RunReport`], which [`write_outputs`] serializes as JSON plus
//! one CSV file per series.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::characteristics::Integrator;
use crate::error::{Error, Result};
use crate::fisher::verify_l0_conditions;
use crate::grid::{Grid, NumericsConfig, PhaseGrid, Vec2};
use crate::hamiltonian::{Hamiltonian, Potential};
use crate::invariants::{kelvin_trace_qa, kelvin_trace_qt, CirculationTrace, Contour};
use crate::phase_ensemble::{
    evolve_liouville, expectation, integrate_characteristic, monte_carlo_expectations, PhaseDensity, PhaseState,
};
use crate::profiles::{GaussianDensity, Quadratic};
use crate::projection::{CausticReport, ConfigDensity, QaConfig, QaInitial, QaRun};
use crate::quantum::{
    catalog, evolve_classical_wave, madelung_decompose, modified_hj_residual, qt_expectations, step_plan,
    Propagator, QtExpectations, WaveFunction,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Phase-space ensembles.
    Pm,
    /// Quasi-quantal projection.
    Qa,
    /// Schrödinger dynamics.
    Qt,
    /// Classical wave equation (quantum potential cancelled).
    Cwe,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Pm => "pm",
            Tier::Qa => "qa",
            Tier::Qt => "qt",
            Tier::Cwe => "cwe",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Free,
    Harmonic {
        omega: f64,
    },
    Quartic {
        lambda: f64,
    },
    DoubleWell {
        a: f64,
        b: f64,
    },
}

impl PotentialSpec {
    fn build(&self) -> Potential {
        match *self {
            PotentialSpec::Free => Potential::Free,
            PotentialSpec::Harmonic { omega } => Potential::Harmonic { omega },
            PotentialSpec::Quartic { lambda } => Potential::Quartic { lambda },
            PotentialSpec::DoubleWell { a, b } => Potential::DoubleWell { a, b },
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

impl Default for HamiltonianSpec {
    fn default() -> Self {
        Self {
            dim: 1,
            mass: 1.0,
            potential: PotentialSpec::Free,
        }
    }
}

/// Square box of side `extent` with `points` nodes per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub extent: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            extent: 20.0,
            points: 256,
        }
    }
}

/// Initial state by catalog name. Vectors may be omitted (zero) or given
/// with one entry per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Gaussian density of standard deviation `sigma` with action
    /// `p0·(q - c) + ½ curvature |q - c|²`.
    GaussianPacket {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        momentum: Vec<f64>,
        #[serde(default)]
        curvature: f64,
    },
    /// Displaced harmonic ground state; needs a harmonic potential.
    CoherentState {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        momentum: Vec<f64>,
    },
    /// Harmonic eigenstate `n` (1D).
    EigenstateN {
        #[serde(default)]
        n: usize,
    },
    PlaneWave {
        momentum: Vec<f64>,
    },
    /// `(q1 + i q2)^winding e^{-|q|²/2σ²}` (2D).
    #[serde(rename = "vortex_2d")]
    Vortex2d {
        #[serde(default = "one_usize")]
        winding: usize,
        #[serde(default = "one")]
        sigma: f64,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::GaussianPacket {
            center: Vec::new(),
            sigma: 1.0,
            momentum: Vec::new(),
            curvature: 0.0,
        }
    }
}

impl InitialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialSpec::GaussianPacket { .. } => "gaussian_packet",
            InitialSpec::CoherentState { .. } => "coherent_state",
            InitialSpec::EigenstateN { .. } => "eigenstate_n",
            InitialSpec::PlaneWave { .. } => "plane_wave",
            InitialSpec::Vortex2d { .. } => "vortex_2d",
        }
    }

    /// Whether the state defines a classical momentum surface `p = M0(q)`.
    fn has_momentum_surface(&self) -> bool {
        matches!(self, InitialSpec::GaussianPacket { .. } | InitialSpec::CoherentState { .. })
    }
}

/// Phase-space ensemble settings (1D only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmSpec {
    pub p_extent: f64,
    pub p_points: usize,
    /// Momentum width of the phase-space Gaussian.
    pub momentum_spread: f64,
    /// Seed positions of characteristics started on `p = M0(q)`.
    pub seeds: Vec<f64>,
}

impl Default for PmSpec {
    fn default() -> Self {
        Self {
            p_extent: 8.0,
            p_points: 64,
            momentum_spread: 0.5,
            seeds: vec![-1.0, -0.5, 0.5, 1.0],
        }
    }
}

/// `samples` equally spaced report times on `[0, t_end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub samples: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { samples: 11 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: usize,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self {
            center: vec![0.0, 0.0],
            radius: 1.0,
            points: 128,
        }
    }
}

fn tol_norm() -> f64 {
    1e-10
}
fn tol_energy() -> f64 {
    1e-6
}
fn tol_ehrenfest() -> f64 {
    1e-5
}
fn tol_hj() -> f64 {
    1e-4
}
fn tol_caustic() -> f64 {
    0.01
}
fn tol_trajectory() -> f64 {
    1e-6
}
fn tol_fields() -> f64 {
    5e-3
}
fn comparison_floor() -> f64 {
    1e-4
}
fn tol_toggle() -> f64 {
    1e-12
}
fn tol_fisher() -> f64 {
    1e-8
}
fn tol_circulation() -> f64 {
    1e-6
}
fn mc_samples() -> usize {
    100_000
}
fn mc_errors() -> f64 {
    3.0
}

/// Cross-checks. Every tolerance has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// `max |‖ψ(t)‖² - ‖ψ(0)‖²|` over every QT step.
    Norm {
        #[serde(default = "tol_norm")]
        tolerance: f64,
    },
    /// Relative drift of `⟨H⟩` over every QT step.
    Energy {
        #[serde(default = "tol_energy")]
        tolerance: f64,
    },
    /// Centered-difference residuals of `d⟨q⟩/dt = ⟨p⟩/m`, `d⟨p⟩/dt = ⟨F⟩`.
    Ehrenfest {
        #[serde(default = "tol_ehrenfest")]
        tolerance: f64,
    },
    /// Modified Hamilton-Jacobi residual after the last QT step.
    HjResidual {
        #[serde(default = "tol_hj")]
        tolerance: f64,
    },
    /// Detected caustic time; `null` expects no caustic before `t_end`.
    Caustic {
        #[serde(default)]
        expected_t_star: Option<f64>,
        #[serde(default = "tol_caustic")]
        tolerance: f64,
    },
    /// QA trajectories against phase-space characteristics for `t < 0.9 t*`.
    PmQaTrajectories {
        #[serde(default = "tol_trajectory")]
        tolerance: f64,
    },
    /// Madelung `ρ`, `M` of the classical-wave run against QA fields at
    /// `min(t_end, t*/2)`, where the wave density exceeds the floor.
    QaCweFields {
        #[serde(default = "tol_fields")]
        tolerance: f64,
        #[serde(default = "comparison_floor")]
        comparison_floor: f64,
    },
    /// Classical-wave solver with coefficient 0 against the QT path.
    CweQtToggle {
        #[serde(default = "tol_toggle")]
        tolerance: f64,
    },
    /// `L₀` identity and constraint residuals at every report time.
    Fisher {
        #[serde(default = "tol_fisher")]
        tolerance: f64,
    },
    /// QA: Kelvin drift. QT: winding trace well-formed (measurement only).
    Circulation {
        #[serde(default = "tol_circulation")]
        tolerance: f64,
    },
    /// Liouville grid expectations against Monte Carlo characteristics.
    LiouvilleMonteCarlo {
        #[serde(default = "mc_samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "mc_errors")]
        max_standard_errors: f64,
    },
}

impl CheckSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckSpec::Norm { .. } => "norm",
            CheckSpec::Energy { .. } => "energy",
            CheckSpec::Ehrenfest { .. } => "ehrenfest",
            CheckSpec::HjResidual { .. } => "hj_residual",
            CheckSpec::Caustic { .. } => "caustic",
            CheckSpec::PmQaTrajectories { .. } => "pm_qa_trajectories",
            CheckSpec::QaCweFields { .. } => "qa_cwe_fields",
            CheckSpec::CweQtToggle { .. } => "cwe_qt_toggle",
            CheckSpec::Fisher { .. } => "fisher",
            CheckSpec::Circulation { .. } => "circulation",
            CheckSpec::LiouvilleMonteCarlo { .. } => "liouville_monte_carlo",
        }
    }

    /// The module operation that produces the measured value.
    pub fn source(&self) -> &'static str {
        match self {
            CheckSpec::Norm { .. } => "quantum::evolve_schrodinger",
            CheckSpec::Energy { .. } | CheckSpec::Ehrenfest { .. } => "quantum::qt_expectations",
            CheckSpec::HjResidual { .. } => "quantum::modified_hj_residual",
            CheckSpec::Caustic { .. } => "projection::evolve_canonical_condition",
            CheckSpec::PmQaTrajectories { .. } => "projection::extract_trajectory vs phase_ensemble::integrate_characteristic",
            CheckSpec::QaCweFields { .. } => "quantum::evolve_classical_wave vs projection::evolve_hj_continuity",
            CheckSpec::CweQtToggle { .. } => "quantum::evolve_classical_wave",
            CheckSpec::Fisher { .. } => "fisher::verify_l0_conditions",
            CheckSpec::Circulation { .. } => "invariants::kelvin_trace_qa / invariants::kelvin_trace_qt",
            CheckSpec::LiouvilleMonteCarlo { .. } => "phase_ensemble::evolve_liouville vs phase_ensemble::monte_carlo_expectations",
        }
    }

    fn tolerance(&self) -> f64 {
        match *self {
            CheckSpec::Norm { tolerance }
            | CheckSpec::Energy { tolerance }
            | CheckSpec::Ehrenfest { tolerance }
            | CheckSpec::HjResidual { tolerance }
            | CheckSpec::Caustic { tolerance, .. }
            | CheckSpec::PmQaTrajectories { tolerance }
            | CheckSpec::QaCweFields { tolerance, .. }
            | CheckSpec::CweQtToggle { tolerance }
            | CheckSpec::Fisher { tolerance }
            | CheckSpec::Circulation { tolerance } => tolerance,
            CheckSpec::LiouvilleMonteCarlo { max_standard_errors, .. } => max_standard_errors,
        }
    }

    /// Tier sets of which at least one must be fully present.
    fn requirements(&self) -> &'static [&'static [Tier]] {
        match self {
            CheckSpec::Norm { .. } | CheckSpec::Energy { .. } | CheckSpec::Ehrenfest { .. } | CheckSpec::HjResidual { .. } => {
                &[&[Tier::Qt]]
            }
            CheckSpec::Caustic { .. } => &[&[Tier::Qa]],
            CheckSpec::PmQaTrajectories { .. } => &[&[Tier::Pm, Tier::Qa]],
            CheckSpec::QaCweFields { .. } => &[&[Tier::Qa, Tier::Cwe]],
            CheckSpec::CweQtToggle { .. } => &[&[Tier::Qt, Tier::Cwe]],
            CheckSpec::Fisher { .. } | CheckSpec::Circulation { .. } => &[&[Tier::Qt], &[Tier::Qa]],
            CheckSpec::LiouvilleMonteCarlo { .. } => &[&[Tier::Pm]],
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tiers: Vec<Tier>,
    #[serde(default)]
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub pm: PmSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub contour: Option<ContourSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_scenario(&text)
}

/// Parses and validates scenario JSON; defaults are filled in.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::scenario(if key == "." { "(root)".to_string() } else { key }, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn fill_vector(key: &str, v: &mut Vec<f64>, dim: usize) -> Result<()> {
    if v.is_empty() {
        *v = vec![0.0; dim];
    }
    if v.len() != dim {
        return Err(Error::scenario(key, format!("expected {dim} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::scenario(key, "entries must be finite"));
    }
    Ok(())
}

fn vec2(v: &[f64]) -> Vec2 {
    [v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0)]
}

impl Scenario {
    /// Checks every rule and fills dimension-dependent defaults.
    pub fn validate(&mut self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::scenario(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let dim = self.hamiltonian.dim;
        if !(1..=2).contains(&dim) {
            return Err(Error::scenario(
                "hamiltonian.dim",
                format!("unsupported dimension {dim}; every tier supports 1 or 2"),
            ));
        }
        self.hamiltonian()?;
        self.numerics.validate()?;
        self.grid()?;

        let mut seen = BTreeSet::new();
        self.tiers.retain(|t| seen.insert(*t));
        let has_harmonic = matches!(self.hamiltonian.potential, PotentialSpec::Harmonic { .. });
        match &mut self.initial {
            InitialSpec::GaussianPacket { center, sigma, momentum, curvature } => {
                fill_vector("initial.center", center, dim)?;
                fill_vector("initial.momentum", momentum, dim)?;
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::scenario("initial.sigma", format!("must be positive, got {sigma}")));
                }
                if !curvature.is_finite() {
                    return Err(Error::scenario("initial.curvature", "must be finite"));
                }
            }
            InitialSpec::CoherentState { center, momentum } => {
                fill_vector("initial.center", center, dim)?;
                fill_vector("initial.momentum", momentum, dim)?;
            }
            InitialSpec::PlaneWave { momentum } => fill_vector("initial.momentum", momentum, dim)?,
            InitialSpec::EigenstateN { .. } if dim != 1 => {
                return Err(Error::scenario("initial.kind", "eigenstate_n is one-dimensional"));
            }
            InitialSpec::Vortex2d { sigma, .. } => {
                if dim != 2 {
                    return Err(Error::scenario("initial.kind", "vortex_2d needs hamiltonian.dim = 2"));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::scenario("initial.sigma", format!("must be positive, got {sigma}")));
                }
            }
            InitialSpec::EigenstateN { .. } => {}
        }
        if matches!(self.initial, InitialSpec::CoherentState { .. } | InitialSpec::EigenstateN { .. }) && !has_harmonic {
            return Err(Error::scenario(
                "initial.kind",
                format!("{} needs a harmonic potential", self.initial.kind()),
            ));
        }
        for t in &self.tiers {
            if *t == Tier::Pm && dim != 1 {
                return Err(Error::scenario("tiers", "pm supports one degree of freedom only"));
            }
            if matches!(t, Tier::Pm | Tier::Qa) && !self.initial.has_momentum_surface() {
                return Err(Error::scenario(
                    "tiers",
                    format!(
                        "{} needs an initial state with a classical momentum surface (gaussian_packet or coherent_state), got {}",
                        t.name(),
                        self.initial.kind()
                    ),
                ));
            }
        }
        if self.tiers.contains(&Tier::Pm) {
            let pm = &self.pm;
            if !(pm.p_extent > 0.0 && pm.momentum_spread > 0.0 && pm.p_points.is_power_of_two()) {
                return Err(Error::scenario(
                    "pm",
                    "p_extent and momentum_spread must be positive and p_points a power of two",
                ));
            }
        }
        if self.output.samples == 0 {
            return Err(Error::scenario("output.samples", "must be at least 1"));
        }
        if let Some(c) = &mut self.contour {
            if dim != 2 {
                return Err(Error::scenario("contour", "contours live in a two-dimensional configuration space"));
            }
            fill_vector("contour.center", &mut c.center, 2)?;
            if !(c.radius > 0.0) || c.points < 64 {
                return Err(Error::scenario("contour", "radius must be positive and points at least 64"));
            }
        }

        let mut kinds = BTreeSet::new();
        for (i, check) in self.checks.iter().enumerate() {
            let key = format!("checks[{i}]");
            if !kinds.insert(check.kind()) {
                return Err(Error::scenario(key, format!("duplicate check {}", check.kind())));
            }
            if !(check.tolerance() > 0.0) {
                return Err(Error::scenario(key, "tolerance must be positive"));
            }
            let ok = check.requirements().iter().any(|set| set.iter().all(|t| self.tiers.contains(t)));
            if !ok {
                let needs: Vec<String> = check
                    .requirements()
                    .iter()
                    .map(|set| set.iter().map(|t| t.name()).collect::<Vec<_>>().join(" + "))
                    .collect();
                return Err(Error::scenario(
                    key,
                    format!("{} needs tiers {}", check.kind(), needs.join(" or ")),
                ));
            }
            if let CheckSpec::Circulation { .. } = check {
                if self.contour.is_none() {
                    return Err(Error::scenario(key, "circulation needs a contour"));
                }
            }
            if let CheckSpec::QaCweFields { comparison_floor, .. } = check {
                if !(*comparison_floor > 0.0 && *comparison_floor < 1.0) {
                    return Err(Error::scenario(key, "comparison_floor must lie in (0, 1)"));
                }
            }
            if let CheckSpec::LiouvilleMonteCarlo { samples, .. } = check {
                if *samples < 2 {
                    return Err(Error::scenario(key, "samples must be at least 2"));
                }
            }
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian> {
        let spec = &self.hamiltonian;
        Hamiltonian::new(spec.dim, spec.mass, spec.potential.build()).map_err(|e| match e {
            Error::Scenario { key, message } if !key.starts_with("hamiltonian") => Error::Scenario {
                key: format!("hamiltonian.{key}"),
                message,
            },
            Error::Config(message) => Error::scenario("hamiltonian", message),
            other => other,
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        let dim = self.hamiltonian.dim;
        Grid::new(&vec![self.grid.extent; dim], &vec![self.grid.points; dim]).map_err(|e| match e {
            Error::Config(message) => Error::scenario("grid", message),
            other => other,
        })
    }

    /// Report times `t_end · k / (samples - 1)`.
    pub fn output_times(&self) -> Vec<f64> {
        let n = self.output.samples;
        let t = self.numerics.t_end;
        if n == 1 || t == 0.0 {
            return vec![t];
        }
        (0..n).map(|k| t * k as f64 / (n - 1) as f64).collect()
    }

    pub fn wave_function(&self, grid: &Grid) -> Result<WaveFunction> {
        let hbar = self.numerics.hbar;
        let mass = self.hamiltonian.mass;
        let omega = match self.hamiltonian.potential {
            PotentialSpec::Harmonic { omega } => omega,
            _ => 0.0,
        };
        match &self.initial {
            InitialSpec::GaussianPacket { center, sigma, momentum, curvature } => {
                catalog::gaussian_packet(grid, vec2(center), *sigma, vec2(momentum), *curvature, hbar)
            }
            InitialSpec::CoherentState { center, momentum } => {
                catalog::coherent_state(grid, mass, omega, vec2(center), vec2(momentum), hbar)
            }
            InitialSpec::EigenstateN { n } => Ok(catalog::eigenstate_n(grid, mass, omega, *n, hbar)?.0),
            InitialSpec::PlaneWave { momentum } => catalog::plane_wave(grid, vec2(momentum), hbar),
            InitialSpec::Vortex2d { winding, sigma } => {
                let w = u32::try_from(*winding).map_err(|_| Error::scenario("initial.winding", "too large"))?;
                catalog::vortex_2d(grid, w, *sigma, hbar)
            }
        }
    }

    /// `(center, sigma, momentum, curvature)` of the classical surface.
    fn surface(&self) -> Option<(Vec2, f64, Vec2, f64)> {
        match &self.initial {
            InitialSpec::GaussianPacket { center, sigma, momentum, curvature } => {
                Some((vec2(center), *sigma, vec2(momentum), *curvature))
            }
            InitialSpec::CoherentState { center, momentum } => {
                let PotentialSpec::Harmonic { omega } = self.hamiltonian.potential else {
                    return None;
                };
                let sigma = (self.numerics.hbar / (2.0 * self.hamiltonian.mass * omega)).sqrt();
                Some((vec2(center), sigma, vec2(momentum), 0.0))
            }
            _ => None,
        }
    }

    /// `S0 = p0·(q - c) + ½a|q - c|²` and the Gaussian `ρ0`.
    pub fn qa_initial(&self) -> Result<QaInitial> {
        let (c, sigma, p0, a) = self
            .surface()
            .ok_or_else(|| Error::scenario("initial.kind", format!("{} has no momentum surface", self.initial.kind())))?;
        let s0 = Quadratic {
            constant: -(p0[0] * c[0] + p0[1] * c[1]) + 0.5 * a * (c[0] * c[0] + c[1] * c[1]),
            linear: [p0[0] - a * c[0], p0[1] - a * c[1]],
            curvature: [[a, 0.0], [0.0, a]],
        };
        let rho0 = GaussianDensity::new(self.hamiltonian.dim, c, [sigma; 2])?;
        Ok(QaInitial::from_action(Arc::new(s0), Some(Arc::new(rho0))))
    }

    fn surface_momentum(&self, q: f64) -> f64 {
        let (c, _, p0, a) = self.surface().expect("validated");
        p0[0] + a * (q - c[0])
    }
}

/// QA summary at one time, integrated over defined nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QaSample {
    pub t: f64,
    pub norm: f64,
    pub position: Vec2,
    pub momentum: Vec2,
    pub energy: f64,
}

/// Phase-space expectations at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PmSample {
    pub t: f64,
    pub position: f64,
    pub momentum: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedTrajectory {
    pub q0: f64,
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PmReport {
    pub series: Vec<PmSample>,
    pub trajectories: Vec<SeedTrajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QaReport {
    pub series: Vec<QaSample>,
    pub valid_until: f64,
    /// Report times past the caustic were dropped.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveReport {
    /// Coefficient of the quantum-potential cancellation (0 for QT).
    pub coefficient: f64,
    pub series: Vec<QtExpectations>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FisherSample {
    pub tier: Tier,
    pub t: f64,
    pub fisher: f64,
    pub entropy: f64,
    pub l0_identity_residual: f64,
    pub constraint_residual: f64,
    pub retained: f64,
    pub unreliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TierTrace {
    pub tier: Tier,
    pub trace: CirculationTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A required tier failed, so the check could not be evaluated.
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub kind: &'static str,
    pub source: &'static str,
    pub tolerance: f64,
    pub measured: Option<f64>,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecutionError {
    pub tier: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    CheckFailure,
    ExecutionError,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub pm: Option<PmReport>,
    pub qa: Option<QaReport>,
    pub qt: Option<WaveReport>,
    pub cwe: Option<WaveReport>,
    pub caustic: Option<CausticReport>,
    pub fisher: Vec<FisherSample>,
    pub circulation: Vec<TierTrace>,
    pub checks: Vec<CheckResult>,
    pub execution_errors: Vec<ExecutionError>,
    pub status: Status,
}

impl RunReport {
    /// 0 pass, 1 check failure, 2 execution error.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::CheckFailure => 1,
            Status::ExecutionError => 2,
        }
    }
}

/// Output of a wave tier kept for the cross-checks.
struct WaveRun {
    report: WaveReport,
    /// Expectations after every step (only when Ehrenfest or drift checks need them).
    steps: Vec<QtExpectations>,
    densities: Vec<ConfigDensity>,
    psi0: WaveFunction,
    last: WaveFunction,
    hj_residual: Option<f64>,
}

fn run_wave(s: &Scenario, h: &Hamiltonian, grid: &Grid, coefficient: f64, per_step: bool) -> Result<WaveRun> {
    let psi0 = s.wave_function(grid)?;
    let times = s.output_times();
    let (n, step) = step_plan(s.numerics.t_end, s.numerics.dt)?;
    let mark: BTreeSet<usize> = times
        .iter()
        .map(|t| if step > 0.0 { (t / step).round() as usize } else { 0 })
        .collect();
    let mut prop = Propagator::new(h, grid, s.numerics.hbar, if n == 0 { s.numerics.dt } else { step })?
        .with_nonlinear(coefficient, s.numerics.density_floor);
    let mut psi = psi0.clone();
    let mut series = Vec::new();
    let mut steps = Vec::new();
    let mut densities = Vec::new();
    for k in 0..=n {
        if k > 0 {
            prop.step(&mut psi)?;
            psi.t = k as f64 * step;
        }
        let want = mark.contains(&k);
        if per_step || want {
            let e = qt_expectations(&psi, h)?;
            if per_step {
                steps.push(e);
            }
            if want {
                series.push(e);
                densities.push(psi.density());
            }
        }
    }
    let hj_residual = if coefficient == 0.0 {
        let before = madelung_decompose(&psi, s.numerics.density_floor)?;
        let mut next = psi.clone();
        prop.step(&mut next)?;
        next.t = psi.t + prop.dt();
        let after = madelung_decompose(&next, s.numerics.density_floor)?;
        Some(modified_hj_residual(&before, &after, h, s.numerics.hbar, 1.0)?)
    } else {
        None
    };
    Ok(WaveRun {
        report: WaveReport { coefficient, series },
        steps,
        densities,
        psi0,
        last: psi,
        hj_residual,
    })
}

fn qa_sample(run: &QaRun, t: f64) -> Result<(QaSample, ConfigDensity)> {
    let f = run.fields_at(t)?;
    let grid = run.grid();
    let h = run.hamiltonian();
    let dv = grid.cell_volume();
    let mut out = QaSample {
        t: f.t,
        norm: 0.0,
        position: [0.0; 2],
        momentum: [0.0; 2],
        energy: 0.0,
    };
    for i in 0..grid.len() {
        if !f.defined[i] {
            continue;
        }
        let r = f.density.samples[i] * dv;
        let q = grid.position(i);
        let m = f.momentum.at(i);
        out.norm += r;
        for k in 0..grid.dim() {
            out.position[k] += r * q[k];
            out.momentum[k] += r * m[k];
        }
        out.energy += r * h.energy(q, m);
    }
    Ok((out, f.density))
}

struct QaTier {
    run: QaRun,
    report: QaReport,
    densities: Vec<ConfigDensity>,
}

fn run_qa(s: &Scenario, h: &Hamiltonian, grid: &Grid) -> Result<QaTier> {
    let cfg = QaConfig::from_numerics(&s.numerics);
    let run = QaRun::evolve(h, grid, s.qa_initial()?, s.numerics.t_end, &cfg)?;
    let valid = run.valid_until();
    let mut series = Vec::new();
    let mut densities = Vec::new();
    let mut truncated = false;
    for t in s.output_times() {
        if t > valid * (1.0 + 1e-12) || run.report().t_star.is_some_and(|ts| t >= ts) {
            truncated = true;
            continue;
        }
        let (sample, rho) = qa_sample(&run, t)?;
        series.push(sample);
        densities.push(rho);
    }
    Ok(QaTier {
        report: QaReport {
            series,
            valid_until: valid,
            truncated,
        },
        run,
        densities,
    })
}

fn phase_ensemble(s: &Scenario, grid: &Grid, coarse: bool) -> Result<PhaseDensity> {
    let (c, sigma, p0, _) = s.surface().expect("validated");
    let div = if coarse { 2 } else { 1 };
    let pg = PhaseGrid::new(grid.extent(0), grid.points(0) / div, s.pm.p_extent, s.pm.p_points / div)?;
    PhaseDensity::gaussian(pg, (c[0], p0[0]), (sigma, s.pm.momentum_spread))
}

fn pm_expectations(h: &Hamiltonian, rho: &PhaseDensity) -> Result<[f64; 3]> {
    let g = &rho.grid;
    Ok([
        expectation(rho, &g.sample(|q, _| q))?,
        expectation(rho, &g.sample(|_, p| p))?,
        expectation(rho, &g.sample(|q, p| h.energy([q, 0.0], [p, 0.0])))?,
    ])
}

fn run_pm(s: &Scenario, h: &Hamiltonian, grid: &Grid) -> Result<PmReport> {
    let rho0 = phase_ensemble(s, grid, false)?;
    let dt = s.numerics.dt;
    let times = s.output_times();
    let mut series = Vec::new();
    for &t in &times {
        let rho = evolve_liouville(h, &rho0, t, dt, Integrator::Rk4)?;
        let [q, p, e] = pm_expectations(h, &rho)?;
        series.push(PmSample {
            t,
            position: q,
            momentum: p,
            energy: e,
        });
    }
    let mut trajectories = Vec::new();
    for &q0 in &s.pm.seeds {
        let start = PhaseState::new(q0, s.surface_momentum(q0), 0.0);
        let mut tr = SeedTrajectory {
            q0,
            times: Vec::new(),
            q: Vec::new(),
            p: Vec::new(),
        };
        for &t in &times {
            let e = integrate_characteristic(h, start, t, dt, Integrator::Rk4)?;
            tr.times.push(t);
            tr.q.push(e.q);
            tr.p.push(e.p);
        }
        trajectories.push(tr);
    }
    Ok(PmReport { series, trajectories })
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

struct Tiers {
    pm: Option<PmReport>,
    qa: Option<QaTier>,
    qt: Option<WaveRun>,
    cwe: Option<WaveRun>,
}

/// Outcome of one check before the bookkeeping fields are attached.
struct Evaluated {
    measured: f64,
    passed: bool,
    detail: String,
}

impl Evaluated {
    fn within(measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            measured,
            passed: measured <= tolerance,
            detail: detail.into(),
        }
    }
}

struct Context<'a> {
    s: &'a Scenario,
    h: &'a Hamiltonian,
    grid: &'a Grid,
    tiers: &'a Tiers,
    fisher: Vec<FisherSample>,
    circulation: Vec<TierTrace>,
}

fn missing(tier: Tier) -> Error {
    Error::config(format!("tier {} did not complete", tier.name()))
}

impl Context<'_> {
    fn qt(&self) -> Result<&WaveRun> {
        self.tiers.qt.as_ref().ok_or_else(|| missing(Tier::Qt))
    }

    fn cwe(&self) -> Result<&WaveRun> {
        self.tiers.cwe.as_ref().ok_or_else(|| missing(Tier::Cwe))
    }

    fn qa(&self) -> Result<&QaTier> {
        self.tiers.qa.as_ref().ok_or_else(|| missing(Tier::Qa))
    }

    fn pm(&self) -> Result<&PmReport> {
        self.tiers.pm.as_ref().ok_or_else(|| missing(Tier::Pm))
    }

    fn has(&self, t: Tier) -> bool {
        self.s.tiers.contains(&t)
    }

    fn evaluate(&mut self, check: &CheckSpec) -> Result<Evaluated> {
        let tol = check.tolerance();
        let dim = self.grid.dim();
        match check {
            CheckSpec::Norm { .. } => {
                let steps = &self.qt()?.steps;
                let n0 = steps[0].norm;
                let drift = max_abs(steps.iter().map(|e| e.norm - n0));
                Ok(Evaluated::within(drift, tol, format!("{} steps", steps.len() - 1)))
            }
            CheckSpec::Energy { .. } => {
                let steps = &self.qt()?.steps;
                let e0 = steps[0].energy;
                let scale = if e0.abs() > 1e-12 { e0.abs() } else { 1.0 };
                let drift = max_abs(steps.iter().map(|e| (e.energy - e0) / scale));
                Ok(Evaluated::within(drift, tol, format!("E(0) = {e0:.12e}")))
            }
            CheckSpec::Ehrenfest { .. } => {
                let steps = &self.qt()?.steps;
                if steps.len() < 3 {
                    return Err(Error::config("Ehrenfest residuals need at least two steps"));
                }
                let dt = steps[1].t - steps[0].t;
                let m = self.h.mass();
                let (mut rq, mut rp): (f64, f64) = (0.0, 0.0);
                for w in steps.windows(3) {
                    for k in 0..dim {
                        let dq = (w[2].position[k] - w[0].position[k]) / (2.0 * dt);
                        let dp = (w[2].momentum[k] - w[0].momentum[k]) / (2.0 * dt);
                        rq = rq.max((dq - w[1].momentum[k] / m).abs());
                        rp = rp.max((dp - w[1].force[k]).abs());
                    }
                }
                Ok(Evaluated::within(
                    rq.max(rp),
                    tol,
                    format!("position residual {rq:.3e}, momentum residual {rp:.3e}"),
                ))
            }
            CheckSpec::HjResidual { .. } => {
                let r = self.qt()?.hj_residual.unwrap_or(f64::NAN);
                Ok(Evaluated::within(r, tol, format!("after the step ending at t = {}", self.s.numerics.t_end)))
            }
            CheckSpec::Caustic { expected_t_star, .. } => {
                let found = self.qa()?.run.report().t_star;
                match (expected_t_star, found) {
                    (Some(e), Some(t)) => Ok(Evaluated::within((t - e).abs(), tol, format!("t* = {t:.6}, expected {e}"))),
                    (Some(e), None) => Ok(Evaluated {
                        measured: f64::NAN,
                        passed: false,
                        detail: format!("no caustic before t = {}, expected t* = {e}", self.s.numerics.t_end),
                    }),
                    (None, None) => Ok(Evaluated {
                        measured: 0.0,
                        passed: true,
                        detail: "no caustic, as expected".into(),
                    }),
                    (None, Some(t)) => Ok(Evaluated {
                        measured: t,
                        passed: false,
                        detail: format!("unexpected caustic at t* = {t:.6}"),
                    }),
                }
            }
            CheckSpec::PmQaTrajectories { .. } => {
                let qa = self.qa()?;
                let pm = self.pm()?;
                let limit = qa.run.report().t_star.map_or(f64::INFINITY, |t| 0.9 * t);
                let t_cmp = self
                    .s
                    .output_times()
                    .into_iter()
                    .filter(|&t| t < limit && t <= qa.run.valid_until())
                    .fold(0.0, f64::max);
                let mut err: f64 = 0.0;
                for seed in &pm.trajectories {
                    let tr = qa.run.extract_trajectory([seed.q0, 0.0], t_cmp)?;
                    let start = PhaseState::new(seed.q0, self.s.surface_momentum(seed.q0), 0.0);
                    for (k, &t) in tr.times.iter().enumerate() {
                        let c = integrate_characteristic(self.h, start, t, self.s.numerics.dt, Integrator::Rk4)?;
                        err = err.max((tr.q[k][0] - c.q).abs()).max((tr.p[k][0] - c.p).abs());
                    }
                }
                Ok(Evaluated::within(
                    err,
                    tol,
                    format!("{} seeds compared up to t = {t_cmp}", pm.trajectories.len()),
                ))
            }
            CheckSpec::QaCweFields { comparison_floor, .. } => {
                let qa = self.qa()?;
                self.cwe()?;
                let t = match qa.run.report().t_star {
                    Some(ts) => self.s.numerics.t_end.min(0.5 * ts),
                    None => self.s.numerics.t_end,
                };
                let psi0 = self.s.wave_function(self.grid)?;
                let psi = evolve_classical_wave(self.h, &psi0, t, self.s.numerics.dt, 1.0, self.s.numerics.density_floor)?;
                let pair = madelung_decompose(&psi, *comparison_floor)?;
                let fields = qa.run.fields_at(t)?;
                let (mut dr, mut dm): (f64, f64) = (0.0, 0.0);
                let mut compared = 0;
                for i in 0..self.grid.len() {
                    if pair.mask[i] {
                        continue;
                    }
                    if !fields.defined[i] {
                        dr = f64::NAN;
                        break;
                    }
                    compared += 1;
                    dr = dr.max((pair.density.samples[i] - fields.density.samples[i]).abs());
                    for k in 0..dim {
                        dm = dm.max((pair.phase_gradient[k][i] - fields.momentum.components[k][i]).abs());
                    }
                }
                Ok(Evaluated::within(
                    if dr.is_nan() { f64::NAN } else { dr.max(dm) },
                    tol,
                    format!("t = {t}: density {dr:.3e}, momentum {dm:.3e} over {compared} nodes"),
                ))
            }
            CheckSpec::CweQtToggle { .. } => {
                let qt = self.qt()?;
                self.cwe()?;
                let zero = evolve_classical_wave(
                    self.h,
                    &qt.psi0,
                    self.s.numerics.t_end,
                    self.s.numerics.dt,
                    0.0,
                    self.s.numerics.density_floor,
                )?;
                let diff = max_abs(zero.samples.iter().zip(&qt.last.samples).map(|(a, b)| (a - b).norm()));
                Ok(Evaluated::within(diff, tol, "coefficient 0 against the QT path"))
            }
            CheckSpec::Fisher { .. } => {
                let (tier, densities) = match (&self.tiers.qt, &self.tiers.qa) {
                    (Some(qt), _) if self.has(Tier::Qt) => (Tier::Qt, &qt.densities),
                    (_, Some(qa)) => (Tier::Qa, &qa.densities),
                    _ => return Err(missing(if self.has(Tier::Qt) { Tier::Qt } else { Tier::Qa })),
                };
                let b0 = self.s.numerics.hbar.powi(2) / (4.0 * self.h.mass());
                let mut worst: f64 = 0.0;
                let mut samples = Vec::new();
                for rho in densities {
                    let r = verify_l0_conditions(rho, b0, self.s.numerics.density_floor)?;
                    let constraint = max_abs(r.constraint_residual.iter().copied());
                    worst = worst.max(r.l0_identity_residual).max(constraint);
                    samples.push(FisherSample {
                        tier,
                        t: rho.t,
                        fisher: r.fisher,
                        entropy: r.entropy,
                        l0_identity_residual: r.l0_identity_residual,
                        constraint_residual: constraint,
                        retained: r.retained,
                        unreliable: r.unreliable,
                    });
                }
                let n = samples.len();
                self.fisher = samples;
                Ok(Evaluated::within(worst, tol, format!("{} densities from tier {}", n, tier.name())))
            }
            CheckSpec::Circulation { .. } => {
                let spec = self.s.contour.as_ref().expect("validated");
                let c0 = Contour::circle(vec2(&spec.center), spec.radius, spec.points)?;
                let times = self.s.output_times();
                let mut out = Evaluated {
                    measured: f64::NAN,
                    passed: true,
                    detail: String::new(),
                };
                if self.has(Tier::Qa) {
                    let qa = self.qa()?;
                    let trace = kelvin_trace_qa(&qa.run, &c0, &times)?;
                    let drift = trace.relative_drift().unwrap_or(f64::NAN);
                    out.measured = drift;
                    out.passed &= drift <= tol;
                    out.detail = format!("QA Kelvin drift {drift:.3e} over {} samples", trace.times.len());
                    self.circulation.push(TierTrace { tier: Tier::Qa, trace });
                }
                if self.has(Tier::Qt) {
                    let qt = self.qt()?;
                    let trace = kelvin_trace_qt(
                        self.h,
                        &qt.psi0,
                        &c0,
                        &times,
                        self.s.numerics.dt,
                        0.0,
                        self.s.numerics.density_floor,
                    )?;
                    let defined = trace.winding.iter().flatten().count();
                    let residue = max_abs(
                        trace.residue.iter().zip(&trace.winding).filter(|(_, w)| w.is_some()).map(|(r, _)| r.unwrap_or(f64::NAN)),
                    );
                    let ok = residue < 0.05;
                    if !self.has(Tier::Qa) {
                        out.measured = residue;
                    }
                    out.passed &= ok;
                    let jumps: Vec<String> = trace
                        .jumps
                        .iter()
                        .map(|j| format!("{}->{} at t = {} near ({:.3}, {:.3})", j.from, j.to, j.t, j.location[0], j.location[1]))
                        .collect();
                    if !out.detail.is_empty() {
                        out.detail.push_str("; ");
                    }
                    out.detail += &format!(
                        "QT winding defined at {defined}/{} samples, max residue {residue:.3e}, jumps: {}",
                        trace.times.len(),
                        if jumps.is_empty() { "none".to_string() } else { jumps.join(", ") }
                    );
                    self.circulation.push(TierTrace { tier: Tier::Qt, trace });
                }
                Ok(out)
            }
            CheckSpec::LiouvilleMonteCarlo { samples, seed, .. } => {
                self.pm()?;
                let t = self.s.numerics.t_end;
                let dt = self.s.numerics.dt;
                let fine = evolve_liouville(self.h, &phase_ensemble(self.s, self.grid, false)?, t, dt, Integrator::Rk4)?;
                let coarse = evolve_liouville(self.h, &phase_ensemble(self.s, self.grid, true)?, t, dt, Integrator::Rk4)?;
                let (fine, coarse) = (pm_expectations(self.h, &fine)?, pm_expectations(self.h, &coarse)?);
                let (c, sigma, p0, _) = self.s.surface().expect("validated");
                let mc = monte_carlo_expectations(
                    self.h,
                    (c[0], p0[0]),
                    (sigma, self.s.pm.momentum_spread),
                    t,
                    dt,
                    *samples,
                    *seed,
                )?;
                let mut worst: f64 = 0.0;
                let mut parts = Vec::new();
                for (k, name) in ["<q>", "<p>", "<H>"].iter().enumerate() {
                    let grid_err = (fine[k] - coarse[k]).abs();
                    let combined = (mc[k].standard_error.powi(2) + grid_err * grid_err).sqrt();
                    let z = (fine[k] - mc[k].mean).abs() / combined;
                    worst = worst.max(z);
                    parts.push(format!("{name} grid {:.6} mc {:.6} ({z:.2} se)", fine[k], mc[k].mean));
                }
                Ok(Evaluated::within(worst, tol, parts.join(", ")))
            }
        }
    }
}

/// Runs every requested tier and check. Tier failures are recorded in the
/// report; only an invalid scenario is an error.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    let mut s = scenario.clone();
    s.validate()?;
    let h = s.hamiltonian()?;
    let grid = s.grid()?;
    let mut errors = Vec::new();
    let mut record = |tier: Tier, e: Error| {
        errors.push(ExecutionError {
            tier: tier.name().into(),
            message: e.to_string(),
        })
    };
    let wants = |kinds: &[&str]| s.checks.iter().any(|c| kinds.contains(&c.kind()));
    let per_step = wants(&["norm", "energy", "ehrenfest"]);

    let mut tiers = Tiers {
        pm: None,
        qa: None,
        qt: None,
        cwe: None,
    };
    for &tier in &s.tiers {
        match tier {
            Tier::Pm => match run_pm(&s, &h, &grid) {
                Ok(r) => tiers.pm = Some(r),
                Err(e) => record(tier, e),
            },
            Tier::Qa => match run_qa(&s, &h, &grid) {
                Ok(r) => tiers.qa = Some(r),
                Err(e) => record(tier, e),
            },
            Tier::Qt => match run_wave(&s, &h, &grid, 0.0, per_step) {
                Ok(r) => tiers.qt = Some(r),
                Err(e) => record(tier, e),
            },
            Tier::Cwe => match run_wave(&s, &h, &grid, 1.0, false) {
                Ok(r) => tiers.cwe = Some(r),
                Err(e) => record(tier, e),
            },
        }
    }

    let mut ctx = Context {
        s: &s,
        h: &h,
        grid: &grid,
        tiers: &tiers,
        fisher: Vec::new(),
        circulation: Vec::new(),
    };
    let mut checks = Vec::new();
    let mut check_errors = Vec::new();
    for check in &s.checks {
        let (measured, verdict, detail) = match ctx.evaluate(check) {
            Ok(e) => {
                let verdict = if e.passed { Verdict::Pass } else { Verdict::Fail };
                (e.measured.is_finite().then_some(e.measured), verdict, e.detail)
            }
            Err(e) => {
                check_errors.push(ExecutionError {
                    tier: format!("check {}", check.kind()),
                    message: e.to_string(),
                });
                (None, Verdict::Error, e.to_string())
            }
        };
        checks.push(CheckResult {
            kind: check.kind(),
            source: check.source(),
            tolerance: check.tolerance(),
            measured,
            verdict,
            detail,
        });
    }
    let fisher = std::mem::take(&mut ctx.fisher);
    let circulation = std::mem::take(&mut ctx.circulation);
    errors.extend(check_errors);

    let status = if !errors.is_empty() {
        Status::ExecutionError
    } else if checks.iter().any(|c| c.verdict != Verdict::Pass) {
        Status::CheckFailure
    } else {
        Status::Pass
    };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        caustic: tiers.qa.as_ref().map(|q| q.run.report().clone()),
        pm: tiers.pm,
        qa: tiers.qa.map(|q| q.report),
        qt: tiers.qt.map(|w| w.report),
        cwe: tiers.cwe.map(|w| w.report),
        fisher,
        circulation,
        checks,
        execution_errors: errors,
        status,
        scenario: s,
    })
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("{prefix}{k}")).collect()
}

fn wave_csv(path: &Path, report: &WaveReport, dim: usize) -> Result<()> {
    let mut header = vec!["t".to_string(), "norm".into()];
    for p in ["q", "p", "p_phase", "force"] {
        header.extend(axis_names(p, dim));
    }
    header.push("energy".into());
    let rows: Vec<Vec<String>> = report
        .series
        .iter()
        .map(|e| {
            let mut r = vec![num(e.t), num(e.norm)];
            for v in [e.position, e.momentum, e.momentum_from_phase, e.force] {
                r.extend(v[..dim].iter().map(|x| num(*x)));
            }
            r.push(num(e.energy));
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes `report.json` and one CSV per series into `dir`; returns the paths
/// in the order written. Identical reports produce identical bytes.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let dim = report.scenario.hamiltonian.dim;
    let mut written = Vec::new();

    let json = dir.join("report.json");
    let mut f = fs::File::create(&json)?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    written.push(json);

    if let Some(pm) = &report.pm {
        let path = dir.join("series_pm.csv");
        let rows: Vec<Vec<String>> =
            pm.series.iter().map(|s| vec![num(s.t), num(s.position), num(s.momentum), num(s.energy)]).collect();
        write_csv(&path, &["t".into(), "q".into(), "p".into(), "energy".into()], &rows)?;
        written.push(path);
    }
    if let Some(qa) = &report.qa {
        let path = dir.join("series_qa.csv");
        let mut header = vec!["t".to_string(), "norm".into()];
        header.extend(axis_names("q", dim));
        header.extend(axis_names("p", dim));
        header.push("energy".into());
        let rows: Vec<Vec<String>> = qa
            .series
            .iter()
            .map(|s| {
                let mut r = vec![num(s.t), num(s.norm)];
                r.extend(s.position[..dim].iter().map(|x| num(*x)));
                r.extend(s.momentum[..dim].iter().map(|x| num(*x)));
                r.push(num(s.energy));
                r
            })
            .collect();
        write_csv(&path, &header, &rows)?;
        written.push(path);
    }
    for (name, wave) in [("series_qt.csv", &report.qt), ("series_cwe.csv", &report.cwe)] {
        if let Some(w) = wave {
            let path = dir.join(name);
            wave_csv(&path, w, dim)?;
            written.push(path);
        }
    }
    if let Some(c) = &report.caustic {
        let path = dir.join("caustic.csv");
        let rows: Vec<Vec<String>> = c.series.iter().map(|(t, d)| vec![num(*t), num(*d)]).collect();
        write_csv(&path, &["t".into(), "min_jacobian".into()], &rows)?;
        written.push(path);
    }
    if !report.fisher.is_empty() {
        let path = dir.join("fisher.csv");
        let rows: Vec<Vec<String>> = report
            .fisher
            .iter()
            .map(|f| {
                vec![
                    f.tier.name().into(),
                    num(f.t),
                    num(f.fisher),
                    num(f.entropy),
                    num(f.l0_identity_residual),
                    num(f.constraint_residual),
                ]
            })
            .collect();
        let header = ["tier", "t", "fisher", "entropy", "l0_identity_residual", "constraint_residual"];
        write_csv(&path, &header.map(String::from), &rows)?;
        written.push(path);
    }
    for t in &report.circulation {
        let path = dir.join(format!("circulation_{}.csv", t.tier.name()));
        t.trace.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    let path = dir.join("checks.csv");
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            let verdict = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Error => "error",
            };
            vec![
                c.kind.into(),
                c.source.into(),
                c.measured.map(num).unwrap_or_default(),
                num(c.tolerance),
                verdict.into(),
            ]
        })
        .collect();
    write_csv(&path, &["kind", "source", "measured", "tolerance", "verdict"].map(String::from), &rows)?;
    written.push(path);
    Ok(written)
}
