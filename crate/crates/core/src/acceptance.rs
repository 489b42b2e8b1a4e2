//! The end-to-end acceptance suite.
//!
//! Each criterion runs a small scenario on a reference grid and compares the
//! result against a closed form, a second tier, or an independent estimator.
//! A criterion passes when every one of its measurements is within tolerance.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::characteristics::Integrator;
use crate::clebsch::{enumerate_class_solutions, regular_solution, variable_count};
use crate::error::{Error, Result};
use crate::fisher::{entropy, fisher_info, kl_shift, verify_l0_conditions};
use crate::grid::{Grid, PhaseGrid, Vec2};
use crate::hamiltonian::{Hamiltonian, Potential};
use crate::invariants::{circulation, kelvin_trace_qa, kelvin_trace_qt, poincare_invariant, winding_number, Contour};
use crate::phase_ensemble::{
    evolve_liouville, expectation, integrate_characteristic, monte_carlo_expectations, PhaseDensity, PhaseState,
};
use crate::profiles::{AffineMomentum, GaussianDensity, GradientOf, Quadratic, ScalarProfile};
use crate::projection::{ConfigDensity, QaConfig, QaInitial, QaRun};
use crate::quantum::{
    catalog, evolve_classical_wave, evolve_schrodinger, madelung_decompose, modified_hj_residual, qt_expectations,
    quantum_potential, Propagator,
};

/// Knobs exposed on the command line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Options {
    /// Caustic threshold on the characteristic-map Jacobian for every QA run.
    pub caustic_threshold: f64,
    pub monte_carlo_samples: usize,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            caustic_threshold: 1e-3,
            monte_carlo_samples: 1_000_000,
            seed: 0x51ee_d5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriterionInfo {
    pub id: u8,
    pub title: &'static str,
    pub tolerance: &'static str,
}

pub const CRITERIA: [CriterionInfo; 13] = [
    CriterionInfo { id: 1, title: "Poincare invariant", tolerance: "relative drift < 1e-6" },
    CriterionInfo { id: 2, title: "caustic time", tolerance: "t* in [0.99, 1.01]; field < 1e-5" },
    CriterionInfo { id: 3, title: "PM contains QA", tolerance: "trajectories < 1e-6 for t < 0.9 t*" },
    CriterionInfo { id: 4, title: "Schrodinger baseline", tolerance: "<q> 1e-6, norm 1e-10, energy 1e-8, sigma 1e-6" },
    CriterionInfo { id: 5, title: "Ehrenfest relations", tolerance: "residuals < 1e-5" },
    CriterionInfo { id: 6, title: "linearization identity", tolerance: "1e-12 off, 1e-10 on constant density" },
    CriterionInfo { id: 7, title: "QA vs classical wave", tolerance: "Madelung fields < 5e-3 off-mask" },
    CriterionInfo { id: 8, title: "modified Hamilton-Jacobi", tolerance: "residual < 1e-4; T_Q(0) 1e-8" },
    CriterionInfo { id: 9, title: "Fisher suite", tolerance: "1e-6 / 1e-8 / 1e-3 relative" },
    CriterionInfo { id: 10, title: "Clebsch tables", tolerance: "exact" },
    CriterionInfo { id: 11, title: "circulation and winding", tolerance: "1e-10 / 1e-6 / exact / 1e-6" },
    CriterionInfo { id: 12, title: "Liouville vs Monte Carlo", tolerance: "3 combined standard errors" },
    CriterionInfo { id: 13, title: "QT winding trace", tolerance: "integer winding, residue < 0.05" },
];

/// One compared quantity. `value ≤ tolerance` passes; NaN never does.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// A yes/no condition, recorded as `0` (holds) or `1`.
    pub fn holds(label: impl Into<String>, ok: bool) -> Self {
        Self::new(label, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    fn ratio(&self) -> f64 {
        if !self.value.is_finite() {
            f64::INFINITY
        } else if self.tolerance > 0.0 {
            self.value / self.tolerance
        } else if self.value > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.measurements.is_empty() && self.measurements.iter().all(|m| m.passed)
    }

    /// The measurement closest to (or furthest past) its tolerance.
    pub fn worst(&self) -> Option<&Measurement> {
        self.measurements.iter().max_by(|a, b| {
            (!a.passed, a.ratio()).partial_cmp(&(!b.passed, b.ratio())).unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    /// `PASS  4 title  label = value (tol ...)`
    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let detail = match (&self.error, self.worst()) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(m)) => format!("{} = {:.3e} (tol {:.1e})", m.label, m.value, m.tolerance),
            (None, None) => "no measurements".into(),
        };
        format!("{verdict} {:>2} {:<26} {detail}  [{:.1}s]", self.id, self.title, self.seconds)
    }
}

/// Criterion id, worst measurement, tolerance, verdict.
pub fn format_table(outcomes: &[Outcome]) -> String {
    let mut out = format!("{:>2}  {:<26} {:<34} {:>11} {:>9}  verdict\n", "#", "criterion", "measured", "value", "tolerance");
    for o in outcomes {
        let verdict = if o.passed() { "pass" } else { "FAIL" };
        match (&o.error, o.worst()) {
            (Some(e), _) => out += &format!("{:>2}  {:<26} error: {e}  {verdict}\n", o.id, o.title),
            (None, Some(m)) => {
                out += &format!(
                    "{:>2}  {:<26} {:<34} {:>11.3e} {:>9.1e}  {verdict}\n",
                    o.id, o.title, m.label, m.value, m.tolerance
                )
            }
            (None, None) => out += &format!("{:>2}  {:<26} {:<34} {:>11} {:>9}  {verdict}\n", o.id, o.title, "-", "-", "-"),
        }
    }
    out
}

pub fn info(id: u8) -> Option<CriterionInfo> {
    CRITERIA.iter().copied().find(|c| c.id == id)
}

pub fn run(id: u8, options: &Options) -> Result<Outcome> {
    let meta = info(id).ok_or_else(|| Error::argument(format!("no acceptance criterion {id}; valid ids are 1-13")))?;
    let start = Instant::now();
    let mut notes = Vec::new();
    let result = match id {
        1 => poincare(),
        2 => caustic_time(options),
        3 => pm_contains_qa(options, &mut notes),
        4 => schrodinger_baseline(),
        5 => ehrenfest(),
        6 => linearization(),
        7 => qa_vs_classical_wave(options),
        8 => modified_hj(),
        9 => fisher_suite(),
        10 => clebsch_tables(),
        11 => circulation_and_winding(options),
        12 => liouville_vs_monte_carlo(options, &mut notes),
        13 => qt_winding(&mut notes),
        _ => unreachable!("ids are validated above"),
    };
    let (measurements, error) = match result {
        Ok(m) => (m, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    Ok(Outcome {
        id,
        title: meta.title,
        measurements,
        notes,
        error,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(options: &Options) -> Vec<Outcome> {
    CRITERIA.iter().map(|c| run(c.id, options).expect("listed ids are valid")).collect()
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

fn qa_config(options: &Options) -> QaConfig {
    QaConfig {
        caustic_threshold: options.caustic_threshold,
        ..QaConfig::default()
    }
}

fn poincare() -> Result<Vec<Measurement>> {
    let h = Hamiltonian::harmonic(1, 1.0, 1.0)?;
    // clockwise in (q, p) so that ∮p dq is the enclosed area
    let c0 = Contour::circle([0.0; 2], 1.0, 256)?.reversed();
    let times: Vec<f64> = (0..=16).map(|k| k as f64 * PI / 8.0).collect();
    let trace = poincare_invariant(&h, &c0, &times, 1e-3)?;
    let first = trace.circulation[0].unwrap_or(f64::NAN);
    Ok(vec![
        Measurement::new("|I(0) - pi|", (first - PI).abs(), 1e-6),
        Measurement::new("relative drift", trace.relative_drift().unwrap_or(f64::NAN), 1e-6),
    ])
}

fn caustic_time(options: &Options) -> Result<Vec<Measurement>> {
    let h = Hamiltonian::free(1, 1.0)?;
    let grid = Grid::line(8.0, 128)?;
    let init = QaInitial::from_momentum(Arc::new(GradientOf(Arc::new(Quadratic::isotropic(-1.0)))));
    let run = QaRun::evolve(&h, &grid, init, 1.5, &qa_config(options))?;
    let t_star = run.report().t_star.unwrap_or(f64::NAN);
    let fields = run.fields_at(0.5)?;
    let err = max_abs((0..grid.len()).map(|i| {
        let q = grid.position(i)[0];
        if fields.defined[i] { fields.momentum.components[0][i] + q / 0.5 } else { f64::NAN }
    }));
    Ok(vec![
        Measurement::new("|t* - 1|", (t_star - 1.0).abs(), 0.01),
        Measurement::new("max |M + q/(1-t)| at t = 0.5", err, 1e-5),
    ])
}

fn pm_contains_qa(options: &Options, notes: &mut Vec<String>) -> Result<Vec<Measurement>> {
    let grid = Grid::line(8.0, 128)?;
    let s0: Arc<dyn ScalarProfile> = Arc::new(Quadratic::isotropic(-1.0));
    let mut out = Vec::new();
    for h in [Hamiltonian::free(1, 1.0)?, Hamiltonian::harmonic(1, 1.0, 1.0)?] {
        let name = h.potential_kind().name();
        let run = QaRun::evolve(&h, &grid, QaInitial::from_action(s0.clone(), None), 1.5, &qa_config(options))?;
        let t_star = run
            .report()
            .t_star
            .ok_or_else(|| Error::config(format!("{name}: focusing data produced no caustic")))?;
        let t = 0.89 * t_star;
        notes.push(format!("{name}: t* = {t_star:.5}, compared up to t = {t:.5}"));
        let mut err: f64 = 0.0;
        for q0 in [-1.5, -0.5, 0.25, 1.0] {
            let tr = run.extract_trajectory([q0, 0.0], t)?;
            for (k, &tk) in tr.times.iter().enumerate() {
                let pm = integrate_characteristic(&h, PhaseState::new(q0, -q0, 0.0), tk, 1e-3, Integrator::Rk4)?;
                err = err.max((tr.q[k][0] - pm.q).abs()).max((tr.p[k][0] - pm.p).abs());
            }
        }
        out.push(Measurement::new(format!("{name}: max |QA - PM|"), err, 1e-6));
    }
    Ok(out)
}

fn schrodinger_baseline() -> Result<Vec<Measurement>> {
    let osc = Hamiltonian::harmonic(1, 1.0, 1.0)?;
    let grid = Grid::line(20.0, 256)?;
    let psi0 = catalog::coherent_state(&grid, 1.0, 1.0, [1.0, 0.0], [0.0; 2], 1.0)?;
    let e0 = qt_expectations(&psi0, &osc)?;
    // the Strang energy error oscillates at O(dt²); 2e-4 keeps it below 1e-8
    let dt = 2e-4;
    let steps = (2.0 * PI / dt).ceil() as usize;
    let dt = 2.0 * PI / steps as f64;
    let mut prop = Propagator::new(&osc, &grid, 1.0, dt)?;
    let mut psi = psi0;
    let (mut dq, mut dn, mut de): (f64, f64, f64) = ((e0.position[0] - 1.0).abs(), 0.0, 0.0);
    for k in 1..=steps {
        prop.step(&mut psi)?;
        let e = qt_expectations(&psi, &osc)?;
        let t = k as f64 * dt;
        dq = dq.max((e.position[0] - t.cos()).abs());
        dn = dn.max((e.norm - e0.norm).abs());
        de = de.max(((e.energy - e0.energy) / e0.energy).abs());
    }

    let free = Hamiltonian::free(1, 1.0)?;
    let grid = Grid::line(64.0, 1024)?;
    let packet = catalog::gaussian_packet(&grid, [0.0; 2], 1.0, [0.0; 2], 0.0, 1.0)?;
    let later = evolve_schrodinger(&free, &packet, 2.0, 1e-3)?;
    let rho = later.density_samples();
    let mean = grid.quadrature(&rho.iter().enumerate().map(|(i, r)| r * grid.position(i)[0]).collect::<Vec<_>>());
    let var = grid.quadrature(
        &rho.iter().enumerate().map(|(i, r)| r * (grid.position(i)[0] - mean).powi(2)).collect::<Vec<_>>(),
    );
    // σ(t)² = σ0² + (ħt/2mσ0)²
    let sigma_exact = (1.0f64 + 1.0).sqrt();
    Ok(vec![
        Measurement::new("max |<q> - cos t|", dq, 1e-6),
        Measurement::new("norm drift", dn, 1e-10),
        Measurement::new("relative energy drift", de, 1e-8),
        Measurement::new("|sigma(2) - sqrt 2|", (var.sqrt() - sigma_exact).abs(), 1e-6),
    ])
}

fn ehrenfest() -> Result<Vec<Measurement>> {
    let grid = Grid::line(20.0, 256)?;
    let dt = 1e-3;
    let mut out = Vec::new();
    for h in [
        Hamiltonian::harmonic(1, 1.0, 1.0)?,
        Hamiltonian::new(1, 1.0, Potential::Quartic { lambda: 1.0 })?,
    ] {
        let name = h.potential_kind().name();
        let mut prop = Propagator::new(&h, &grid, 1.0, dt)?;
        let mut psi = catalog::gaussian_packet(&grid, [1.0, 0.0], 0.7, [0.5, 0.0], 0.0, 1.0)?;
        let mut series = vec![qt_expectations(&psi, &h)?];
        for _ in 0..2000 {
            prop.step(&mut psi)?;
            series.push(qt_expectations(&psi, &h)?);
        }
        let (mut rq, mut rp): (f64, f64) = (0.0, 0.0);
        for w in series.windows(3) {
            let dq = (w[2].position[0] - w[0].position[0]) / (2.0 * dt);
            let dp = (w[2].momentum[0] - w[0].momentum[0]) / (2.0 * dt);
            rq = rq.max((dq - w[1].momentum[0] / h.mass()).abs());
            rp = rp.max((dp - w[1].force[0]).abs());
        }
        out.push(Measurement::new(format!("{name}: d<q>/dt - <p>/m"), rq, 1e-5));
        out.push(Measurement::new(format!("{name}: d<p>/dt - <F>"), rp, 1e-5));
    }
    Ok(out)
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    max_abs(a.iter().zip(b).map(|(x, y)| (x - y).norm()))
}

fn linearization() -> Result<Vec<Measurement>> {
    let grid = Grid::line(20.0, 256)?;
    let osc = Hamiltonian::harmonic(1, 1.0, 1.0)?;
    let psi0 = catalog::gaussian_packet(&grid, [1.0, 0.0], 0.8, [0.5, 0.0], 0.3, 1.0)?;
    let a = evolve_schrodinger(&osc, &psi0, 1.0, 1e-3)?;
    let b = evolve_classical_wave(&osc, &psi0, 1.0, 1e-3, 0.0, 1e-6)?;

    let box_ = Grid::line(2.0 * PI, 64)?;
    let free = Hamiltonian::free(1, 1.0)?;
    let wave = catalog::plane_wave(&box_, [3.0, 0.0], 1.0)?;
    let c = evolve_schrodinger(&free, &wave, 1.0, 1e-3)?;
    let d = evolve_classical_wave(&free, &wave, 1.0, 1e-3, 1.0, 1e-12)?;
    Ok(vec![
        Measurement::new("coefficient 0 vs Schrodinger", max_diff(&a.samples, &b.samples), 1e-12),
        Measurement::new("constant density, coefficient 1", max_diff(&c.samples, &d.samples), 1e-10),
    ])
}

/// Compares Madelung `ρ` and `M` of a classical-wave run with the QA fields
/// rebuilt from characteristics at time `t`.
fn wave_vs_qa(curvature: f64, t: f64, options: &Options) -> Result<(f64, f64)> {
    let grid = Grid::line(20.0, 256)?;
    let free = Hamiltonian::free(1, 1.0)?;
    let psi0 = catalog::gaussian_packet(&grid, [0.0; 2], 1.0, [0.0; 2], curvature, 1.0)?;
    let psi = evolve_classical_wave(&free, &psi0, t, 1e-3, 1.0, 1e-12)?;
    let pair = madelung_decompose(&psi, 1e-4)?;

    let init = QaInitial::from_action(
        Arc::new(Quadratic::isotropic(curvature)),
        Some(Arc::new(GaussianDensity::centered(1, 1.0))),
    );
    let run = QaRun::evolve(&free, &grid, init, t, &qa_config(options))?;
    let qa = run.fields_at(t)?;
    let (mut dr, mut dm): (f64, f64) = (0.0, 0.0);
    for i in 0..grid.len() {
        if pair.mask[i] {
            continue;
        }
        if !qa.defined[i] {
            return Err(Error::config(format!("QA field undefined at q = {}", grid.position(i)[0])));
        }
        dr = dr.max((pair.density.samples[i] - qa.density.samples[i]).abs());
        dm = dm.max((pair.phase_gradient[0][i] - qa.momentum.components[0][i]).abs());
    }
    Ok((dr, dm))
}

fn qa_vs_classical_wave(options: &Options) -> Result<Vec<Measurement>> {
    let (r0, m0) = wave_vs_qa(0.0, 1.0, options)?;
    // focusing data: t* = 1, compared at t = 0.5 t*
    let (r1, m1) = wave_vs_qa(-1.0, 0.5, options)?;
    Ok(vec![
        Measurement::new("S0 = 0: max |rho_w - rho_qa|", r0, 5e-3),
        Measurement::new("S0 = 0: max |M_w - M_qa|", m0, 5e-3),
        Measurement::new("focusing: max |rho_w - rho_qa|", r1, 5e-3),
        Measurement::new("focusing: max |M_w - M_qa|", m1, 5e-3),
    ])
}

fn modified_hj() -> Result<Vec<Measurement>> {
    let grid = Grid::line(20.0, 256)?;
    let osc = Hamiltonian::harmonic(1, 1.0, 1.0)?;
    let mut psi = catalog::coherent_state(&grid, 1.0, 1.0, [1.0, 0.0], [0.0; 2], 1.0)?;
    let mut prop = Propagator::new(&osc, &grid, 1.0, 1e-3)?;
    prop.run(&mut psi, 500)?;
    let before = madelung_decompose(&psi, 1e-12)?;
    prop.step(&mut psi)?;
    let after = madelung_decompose(&psi, 1e-12)?;
    let residual = modified_hj_residual(&before, &after, &osc, 1.0, 1.0)?;

    let unit = GaussianDensity::centered(1, 1.0);
    let rho = ConfigDensity::new(grid.clone(), grid.sample(|q| unit.value(q)), 0.0)?;
    let tq = quantum_potential(&rho, 1.0, 1.0, 1e-12)?;
    let origin = grid.points(0) / 2;
    debug_assert_eq!(grid.position(origin)[0], 0.0);
    Ok(vec![
        Measurement::new("max |HJ residual|", residual, 1e-4),
        Measurement::new("|T_Q(0) + 0.25|", (tq[origin] + 0.25).abs(), 1e-8),
    ])
}

fn fisher_suite() -> Result<Vec<Measurement>> {
    let grid = Grid::line(40.0, 512)?;
    let density = |sigma: f64| {
        let g = GaussianDensity::centered(1, sigma);
        ConfigDensity::new(grid.clone(), grid.sample(|q| g.value(q)), 0.0)
    };
    let mut out = Vec::new();
    let mut worst_i: f64 = 0.0;
    let (mut identity, mut constraint, mut shift): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for sigma in [0.5, 1.0, 2.0] {
        let rho = density(sigma)?;
        let info = fisher_info(&rho, 1e-12)?.value;
        worst_i = worst_i.max((info - 1.0 / (sigma * sigma)).abs());
        let report = verify_l0_conditions(&rho, 0.25, 1e-12)?;
        identity = identity.max(report.l0_identity_residual);
        constraint = constraint.max(max_abs(report.constraint_residual.iter().copied()));
        let delta = 1e-3;
        let g = kl_shift(&rho, 0, delta, 1e-12)?.value / (delta * delta);
        shift = shift.max(((g + 0.5 * info) / (0.5 * info)).abs());
    }
    let unit = density(1.0)?;
    let h = entropy(&unit, 1e-12)?.value;
    out.push(Measurement::new("max |I - 1/sigma^2|", worst_i, 1e-6));
    out.push(Measurement::new("|int rho L0 + (B0/2) I|", identity, 1e-8));
    out.push(Measurement::new("|int d_k rho L0|", constraint, 1e-8));
    out.push(Measurement::new("KL shift vs -I/2, relative", shift, 1e-3));
    out.push(Measurement::new("|H - ln(2 pi e)/2|", (h - 0.5 * (2.0 * PI * std::f64::consts::E).ln()).abs(), 1e-6));
    Ok(out)
}

fn clebsch_tables() -> Result<Vec<Measurement>> {
    let pairs = |n| -> Result<Vec<(u32, u32)>> { Ok(enumerate_class_solutions(n, false)?.iter().map(|s| s.pair()).collect()) };
    let mut regular_ok = true;
    let mut increment_ok = true;
    for n in 1..=100 {
        let r = regular_solution(n)?;
        regular_ok &= r.pair() == (n - 1, n);
        if n < 100 {
            increment_ok &= variable_count(&regular_solution(n + 1)?) == variable_count(&r) + 2;
        }
    }
    Ok(vec![
        Measurement::holds("N = 1 table", pairs(1)? == [(0, 1)]),
        Measurement::holds("N = 2 table", pairs(2)? == [(1, 2), (3, 1)]),
        Measurement::holds("N = 3 table", pairs(3)? == [(0, 4), (2, 3), (4, 2), (6, 1)]),
        Measurement::holds("regular(N) = (N-1, N)", regular_ok),
        Measurement::holds("variable count step 2", increment_ok),
    ])
}

fn circulation_and_winding(options: &Options) -> Result<Vec<Measurement>> {
    let unit = Contour::circle([0.0; 2], 1.0, 256)?;
    // ∇ of S = q1² + q1 cos q2 + q2³
    let grad = |q: Vec2| Some([2.0 * q[0] + q[1].cos(), -q[0] * q[1].sin() + 3.0 * q[1] * q[1]]);
    let exact = circulation(&grad, &unit)?;
    let vortex = |q: Vec2| {
        let r2 = q[0] * q[0] + q[1] * q[1];
        Some([-q[1] / r2, q[0] / r2])
    };
    let point = circulation(&vortex, &unit)?;
    let mut winding_ok = true;
    for k in 0..3u32 {
        let psi = move |q: Vec2| Complex64::new(q[0], q[1]).powu(k);
        winding_ok &= winding_number(&psi, &unit, 1e-8)?.value == k as i64;
    }

    let h = Hamiltonian::harmonic(2, 1.0, 1.0)?;
    let grid = Grid::square(8.0, 32)?;
    let cfg = QaConfig {
        seed_extent: 1.0,
        ..qa_config(options)
    };
    let init = QaInitial::from_action(
        Arc::new(Quadratic::isotropic(-0.3)),
        Some(Arc::new(GaussianDensity::centered(2, 1.0))),
    );
    let run = QaRun::evolve(&h, &grid, init, 1.0, &cfg)?;
    let c0 = Contour::circle([0.5, 0.2], 1.0, 128)?;
    let trace = kelvin_trace_qa(&run, &c0, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
    let irrotational = if trace.truncated { f64::NAN } else { trace.relative_drift().unwrap_or(f64::NAN) };

    let free = Hamiltonian::free(2, 1.0)?;
    let run = QaRun::evolve(&free, &grid, QaInitial::from_momentum(Arc::new(AffineMomentum::rotation(1.0))), 0.5, &cfg)?;
    let trace = kelvin_trace_qa(&run, &Contour::circle([0.0; 2], 1.0, 128)?, &[0.0, 0.25, 0.5])?;
    let rotational = if trace.truncated { f64::NAN } else { trace.relative_drift().unwrap_or(f64::NAN) };
    Ok(vec![
        Measurement::new("|circ grad S|", exact.abs(), 1e-10),
        Measurement::new("|point vortex - 2 pi|", (point - 2.0 * PI).abs(), 1e-6),
        Measurement::holds("winding of (q1 + i q2)^k = k", winding_ok),
        Measurement::new("Kelvin QA drift, irrotational", irrotational, 1e-6),
        Measurement::new("Kelvin QA drift, rigid rotation", rotational, 1e-6),
    ])
}

fn liouville_vs_monte_carlo(options: &Options, notes: &mut Vec<String>) -> Result<Vec<Measurement>> {
    let h = Hamiltonian::free(1, 1.0)?;
    let t = 2.0;
    let (mean, sigma) = ((0.0, 1.0), (0.5, 0.5));
    let grid_estimate = |qp: usize, pp: usize| -> Result<[f64; 3]> {
        let grid = PhaseGrid::new(16.0, qp, 8.0, pp)?;
        let rho0 = PhaseDensity::gaussian(grid.clone(), mean, sigma)?;
        let rho = evolve_liouville(&h, &rho0, t, 1e-2, Integrator::Rk4)?;
        Ok([
            expectation(&rho, &grid.sample(|q, _| q))?,
            expectation(&rho, &grid.sample(|_, p| p))?,
            expectation(&rho, &grid.sample(|q, p| h.energy([q, 0.0], [p, 0.0])))?,
        ])
    };
    let fine = grid_estimate(128, 64)?;
    let coarse = grid_estimate(64, 32)?;

    // independent estimator: Störmer-Verlet characteristics from sampled seeds
    let mc = monte_carlo_expectations(&h, mean, sigma, t, 1e-2, options.monte_carlo_samples, options.seed)?;
    let mut out = Vec::new();
    for (k, name) in ["<q>", "<p>", "<H>"].iter().enumerate() {
        let (mc, se) = (mc[k].mean, mc[k].standard_error);
        // grid error estimated by halving the resolution
        let grid_err = (fine[k] - coarse[k]).abs();
        let combined = (se * se + grid_err * grid_err).sqrt();
        notes.push(format!("{name}: grid {:.6} MC {mc:.6} se {se:.2e} grid err {grid_err:.2e}", fine[k]));
        out.push(Measurement::new(
            format!("{name}: |grid - MC| / combined se"),
            (fine[k] - mc).abs() / combined,
            3.0,
        ));
    }
    Ok(out)
}

fn qt_winding(notes: &mut Vec<String>) -> Result<Vec<Measurement>> {
    let grid = Grid::square(12.0, 64)?;
    let h = Hamiltonian::harmonic(2, 1.0, 1.0)?;
    // off-centre unit vortex: it precesses and passes near the contour
    let base = catalog::vortex_2d(&grid, 1, 1.0, 1.0)?;
    let shift = catalog::gaussian_packet(&grid, [0.4, 0.0], 1.0, [0.0; 2], 0.0, 1.0)?;
    let samples = base.samples.iter().zip(&shift.samples).map(|(a, b)| a * b.norm()).collect();
    let psi0 = crate::quantum::WaveFunction::normalized(grid.clone(), samples, 1.0)?;
    let c0 = Contour::circle([0.0; 2], 1.0, 128)?;
    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let trace = kelvin_trace_qt(&h, &psi0, &c0, &times, 1e-3, 0.0, 1e-8)?;

    let defined = trace.winding.iter().flatten().count();
    let worst = trace.residue.iter().zip(&trace.winding).filter(|(_, w)| w.is_some()).map(|(r, _)| r.unwrap_or(f64::NAN));
    let worst = max_abs(worst);
    let jumps_ok = trace
        .jumps
        .iter()
        .all(|j| times.contains(&j.t) && j.location.iter().all(|x| x.is_finite()) && j.from != j.to);
    for j in &trace.jumps {
        notes.push(format!("winding {} -> {} at t = {:.2}, near ({:.3}, {:.3})", j.from, j.to, j.t, j.location[0], j.location[1]));
    }
    notes.push(format!("{defined} of {} samples defined", times.len()));
    Ok(vec![
        Measurement::holds("at least one defined sample", defined > 0),
        Measurement::new("max rounding residue", worst, 0.05),
        Measurement::holds("jumps carry time and location", jumps_ok),
    ])
}
