//! Quasi-quantal approximation: momentum fields on configuration space.
//!
//! Seeds placed on the surface `p = M0(q)` are evolved as canonical
//! characteristics together with their action and tangent map. Eulerian
//! fields are rebuilt from the seed cloud in Lagrangian coordinates: in 1D the
//! map `q0 -> q(t)` is inverted on cubic Hermite segments built from the
//! tangents, in 2D a triangulated seed lattice is interpolated linearly. The
//! run stops at the first caustic, where `det ∂q/∂q0` reaches the threshold.

use std::borrow::Cow;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{Characteristic, Flow, Integrator};
use crate::error::{Error, Result};
use crate::grid::{Grid, NumericsConfig, Vec2};
use crate::hamiltonian::Hamiltonian;
use crate::interp::{hermite, hermite_derivative};
use crate::profiles::{GradientOf, Mat2, MomentumProfile, ScalarProfile, UniformDensity};

/// Samples of `M_k(q, t)`.
#[derive(Clone, Debug)]
pub struct MomentumField {
    pub grid: Grid,
    /// One sample vector per axis.
    pub components: Vec<Vec<f64>>,
    pub t: f64,
    /// Nodes covered by the characteristic cloud.
    pub defined: Vec<bool>,
}

impl MomentumField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>, t: f64) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::argument("one momentum component per axis is required"));
        }
        for c in &components {
            grid.check_len(c.len())?;
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::argument("momentum field must be finite"));
            }
        }
        let defined = vec![true; grid.len()];
        Ok(Self {
            grid,
            components,
            t,
            defined,
        })
    }

    pub fn from_profile(grid: &Grid, profile: &dyn MomentumProfile, t: f64) -> Result<Self> {
        let m: Vec<Vec2> = grid.sample(|q| profile.momentum(q));
        let components = (0..grid.dim()).map(|k| m.iter().map(|v| v[k]).collect()).collect();
        Self::new(grid.clone(), components, t)
    }

    /// Irrotational field `M = ∇S`.
    pub fn from_action(action: &ConfigAction) -> Result<Self> {
        let grid = &action.grid;
        let components = (0..grid.dim())
            .map(|k| grid.detrended_derivative(&action.samples, k, 1))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.clone(), components, action.t)
    }

    pub fn at(&self, i: usize) -> Vec2 {
        let mut m = [0.0; 2];
        for (k, c) in self.components.iter().enumerate() {
            m[k] = c[i];
        }
        m
    }
}

/// Samples of `S(q, t)`.
#[derive(Clone, Debug)]
pub struct ConfigAction {
    pub grid: Grid,
    pub samples: Vec<f64>,
    pub t: f64,
    /// Jump of `S` across the periodic seam of each axis, in units of `2πħ`.
    pub winding: [i64; 2],
}

impl ConfigAction {
    pub fn new(grid: Grid, samples: Vec<f64>, t: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::argument("action samples must be finite"));
        }
        Ok(Self {
            grid,
            samples,
            t,
            winding: [0; 2],
        })
    }
}

/// Samples of `ρ(q, t)`.
#[derive(Clone, Debug)]
pub struct ConfigDensity {
    pub grid: Grid,
    pub samples: Vec<f64>,
    pub t: f64,
}

impl ConfigDensity {
    pub fn new(grid: Grid, samples: Vec<f64>, t: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::argument("density samples must be finite and non-negative"));
        }
        Ok(Self { grid, samples, t })
    }

    pub fn total(&self) -> f64 {
        self.grid.quadrature(&self.samples)
    }
}

/// First breakdown of the characteristic map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausticReport {
    /// Time at which `min det ∂q/∂q0` first reaches the threshold.
    pub t_star: Option<f64>,
    /// Current position of the seed attaining the minimum at `t_star`.
    pub location: Option<Vec2>,
    /// Smallest determinant seen over the valid part of the run.
    pub min_jacobian: f64,
    pub threshold: f64,
    /// Last time for which fields are returned.
    pub valid_until: f64,
    /// `(t, min det)` at every recorded snapshot.
    pub series: Vec<(f64, f64)>,
}

impl CausticReport {
    /// Fields past `t_star` would be multivalued.
    pub fn multivalued(&self) -> bool {
        self.t_star.is_some()
    }
}

/// Tuning of the characteristic solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    pub dt: f64,
    pub integrator: Integrator,
    pub caustic_threshold: f64,
    /// Seeds per grid cell and axis; 0 selects 8 in 1D and 2 in 2D.
    pub oversampling: usize,
    /// Seed lattice extent relative to the box.
    pub seed_extent: f64,
    /// Upper bound on stored snapshot floats.
    pub snapshot_budget: usize,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            integrator: Integrator::Rk4,
            caustic_threshold: 1e-3,
            oversampling: 0,
            seed_extent: 2.0,
            snapshot_budget: 12_000_000,
        }
    }
}

impl QaConfig {
    pub fn from_numerics(n: &NumericsConfig) -> Self {
        Self {
            dt: n.dt,
            caustic_threshold: n.caustic_threshold,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::argument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.caustic_threshold.is_finite() && self.caustic_threshold > 0.0) {
            return Err(Error::argument("caustic threshold must be positive"));
        }
        if !(self.seed_extent.is_finite() && self.seed_extent >= 1.0) {
            return Err(Error::argument("seed extent must be at least 1"));
        }
        Ok(())
    }
}

/// Initial data on the surface `p = M0(q)`.
#[derive(Clone)]
pub struct QaInitial {
    pub momentum: Arc<dyn MomentumProfile>,
    /// `S0`; when absent the carried action starts at zero.
    pub action: Option<Arc<dyn ScalarProfile>>,
    /// `ρ0`; when absent the density is uniform over the box.
    pub density: Option<Arc<dyn ScalarProfile>>,
}

impl QaInitial {
    pub fn from_momentum(m0: Arc<dyn MomentumProfile>) -> Self {
        Self {
            momentum: m0,
            action: None,
            density: None,
        }
    }

    /// `M0 = ∇S0`.
    pub fn from_action(s0: Arc<dyn ScalarProfile>, rho0: Option<Arc<dyn ScalarProfile>>) -> Self {
        Self {
            momentum: Arc::new(GradientOf(s0.clone())),
            action: Some(s0),
            density: rho0,
        }
    }
}

impl std::fmt::Debug for QaInitial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QaInitial")
            .field("action", &self.action.is_some())
            .field("density", &self.density.is_some())
            .finish()
    }
}

/// Seed states at one instant.
#[derive(Debug)]
pub struct Snapshot {
    pub t: f64,
    pub seeds: Vec<Characteristic>,
    triangles: OnceLock<TriangleIndex>,
}

impl Snapshot {
    fn new(t: f64, seeds: Vec<Characteristic>) -> Self {
        Self {
            t,
            seeds,
            triangles: OnceLock::new(),
        }
    }
}

impl Clone for Snapshot {
    fn clone(&self) -> Self {
        Self::new(self.t, self.seeds.clone())
    }
}

/// Bucket index of the triangulated seed lattice (2D only).
#[derive(Debug)]
struct TriangleIndex {
    buckets: Vec<Vec<u32>>,
    per_axis: usize,
    lo: Vec2,
    size: Vec2,
}

/// Field values at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValues {
    /// Lagrangian label of the point.
    pub q0: Vec2,
    pub momentum: Vec2,
    pub action: f64,
    /// `det ∂q/∂q0`
    pub jacobian: f64,
    /// `∂_k M_k`
    pub divergence: f64,
    pub density: f64,
}

/// Eulerian fields rebuilt at one time.
#[derive(Clone, Debug)]
pub struct QaFields {
    pub t: f64,
    pub momentum: MomentumField,
    pub action: ConfigAction,
    pub density: ConfigDensity,
    pub jacobian: Vec<f64>,
    pub divergence: Vec<f64>,
    pub defined: Vec<bool>,
}

/// A trajectory extracted from the evolved momentum field.
#[derive(Clone, Debug, PartialEq)]
pub struct QaTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<Vec2>,
    pub p: Vec<Vec2>,
    /// `∫ (M·v - h) dt` accumulated from the start.
    pub action_increment: Vec<f64>,
}

/// An evolved QA problem: the seed cloud at regularly spaced snapshots.
#[derive(Debug)]
pub struct QaRun {
    hamiltonian: Hamiltonian,
    grid: Grid,
    initial: QaInitial,
    config: QaConfig,
    seeds_per_axis: [usize; 2],
    seed_spacing: Vec2,
    seed_origin: Vec2,
    step: f64,
    interval: f64,
    snapshots: Vec<Snapshot>,
    final_state: Snapshot,
    report: CausticReport,
}

fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `trace(dp · dq⁻¹)`, the divergence of the momentum field at a seed.
fn seed_divergence(c: &Characteristic, dim: usize) -> f64 {
    if dim == 1 {
        return c.dp[0][0] / c.dq[0][0];
    }
    let d = det2(&c.dq);
    let inv = [[c.dq[1][1] / d, -c.dq[0][1] / d], [-c.dq[1][0] / d, c.dq[0][0] / d]];
    (0..2).map(|i| (0..2).map(|k| c.dp[i][k] * inv[k][i]).sum::<f64>()).sum()
}

impl QaRun {
    /// Evolves the seed cloud from `t = 0` up to `t_end` or the first caustic.
    pub fn evolve(
        hamiltonian: &Hamiltonian,
        grid: &Grid,
        initial: QaInitial,
        t_end: f64,
        config: &QaConfig,
    ) -> Result<Self> {
        config.validate()?;
        let dim = grid.dim();
        if hamiltonian.dim() != dim {
            return Err(Error::config(format!(
                "Hamiltonian is {}D but the grid is {dim}D",
                hamiltonian.dim()
            )));
        }
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::argument(format!("t_end must be non-negative, got {t_end}")));
        }
        let oversampling = match config.oversampling {
            0 if dim == 1 => 8,
            0 => 2,
            n => n,
        };
        let mut seeds_per_axis = [1usize; 2];
        let mut seed_spacing = [0.0; 2];
        let mut seed_origin = [0.0; 2];
        for k in 0..dim {
            let span = config.seed_extent * grid.extent(k);
            let cells = (oversampling as f64 * config.seed_extent * grid.points(k) as f64).round() as usize;
            seeds_per_axis[k] = cells + 1;
            seed_spacing[k] = span / cells as f64;
            seed_origin[k] = -0.5 * span;
        }
        let n_seeds = seeds_per_axis[0] * seeds_per_axis[1];
        let m0 = &initial.momentum;
        let s0 = &initial.action;
        let seeds: Vec<Characteristic> = (0..n_seeds)
            .into_par_iter()
            .map(|i| {
                let (a, b) = (i / seeds_per_axis[1], i % seeds_per_axis[1]);
                let mut q = [seed_origin[0] + a as f64 * seed_spacing[0], 0.0];
                if dim == 2 {
                    q[1] = seed_origin[1] + b as f64 * seed_spacing[1];
                }
                let mut p = m0.momentum(q);
                let mut jac = m0.jacobian(q);
                if dim == 1 {
                    p[1] = 0.0;
                    jac = [[jac[0][0], 0.0], [0.0, 0.0]];
                }
                let action = s0.as_ref().map_or(0.0, |s| s.value(q));
                Characteristic::on_surface(q, p, action, jac)
            })
            .collect();
        if seeds.iter().any(|c| !(c.p.iter().all(|x| x.is_finite()) && c.action.is_finite())) {
            return Err(Error::argument("initial momentum or action is not finite on the seed lattice"));
        }

        // Snapshot spacing: an even number of intervals, each a whole number of steps.
        let floats_per_snapshot = n_seeds * 13;
        let max_snapshots = (config.snapshot_budget / floats_per_snapshot).clamp(3, 401);
        let max_intervals = (max_snapshots - 1) & !1;
        let nominal = if t_end > 0.0 {
            ((t_end / config.dt) - 1e-9).ceil().max(1.0) as usize
        } else {
            0
        };
        let (steps, record_every) = if nominal == 0 {
            (0, 1)
        } else {
            let r = nominal.div_ceil(max_intervals).max(1);
            let intervals = nominal.div_ceil(r);
            let intervals = intervals + (intervals & 1);
            (intervals * r, r)
        };
        let step = if steps > 0 { t_end / steps as f64 } else { 0.0 };
        let interval = step * record_every as f64;

        let mut run = Self {
            hamiltonian: hamiltonian.clone(),
            grid: grid.clone(),
            initial,
            config: config.clone(),
            seeds_per_axis,
            seed_spacing,
            seed_origin,
            step,
            interval,
            snapshots: Vec::new(),
            final_state: Snapshot::new(0.0, Vec::new()),
            report: CausticReport {
                t_star: None,
                location: None,
                min_jacobian: f64::INFINITY,
                threshold: config.caustic_threshold,
                valid_until: t_end,
                series: Vec::new(),
            },
        };

        let eps = config.caustic_threshold;
        let (j0, loc0) = run.min_jacobian(&seeds);
        run.report.series.push((0.0, j0));
        run.report.min_jacobian = j0;
        if j0 <= eps {
            run.report.t_star = Some(0.0);
            run.report.location = loc0;
            run.report.valid_until = 0.0;
            run.final_state = Snapshot::new(0.0, seeds.clone());
            run.snapshots.push(Snapshot::new(0.0, seeds));
            return Ok(run);
        }
        run.snapshots.push(Snapshot::new(0.0, seeds.clone()));

        let flow = Flow::new(hamiltonian, config.dt, config.integrator)?;
        let mut current = seeds;
        let mut prev_min = j0;
        for k in 1..=steps {
            let t_prev = (k - 1) as f64 * step;
            let next: Vec<Characteristic> = current.par_iter().map(|c| flow.step(c, step)).collect();
            let t = k as f64 * step;
            if next.iter().any(|c| !(c.q.iter().chain(&c.p).all(|x| x.is_finite()) && c.action.is_finite())) {
                return Err(Error::NumericalBlowup {
                    t,
                    what: "quasi-quantal characteristic".into(),
                });
            }
            let (jmin, loc) = run.min_jacobian(&next);
            if jmin <= eps {
                let frac = if prev_min > jmin { (prev_min - eps) / (prev_min - jmin) } else { 1.0 };
                let t_star = t_prev + frac.clamp(0.0, 1.0) * step;
                run.report.t_star = Some(t_star);
                run.report.location = loc;
                run.report.valid_until = t_star;
                run.report.series.push((t, jmin));
                run.final_state = Snapshot::new(t_prev, current);
                return Ok(run);
            }
            run.report.min_jacobian = run.report.min_jacobian.min(jmin);
            prev_min = jmin;
            current = next;
            if k % record_every == 0 {
                run.report.series.push((t, jmin));
                run.snapshots.push(Snapshot::new(t, current.clone()));
            }
        }
        run.final_state = Snapshot::new(steps as f64 * step, current);
        Ok(run)
    }

    /// Minimum Jacobian determinant over seeds currently inside the box.
    fn min_jacobian(&self, seeds: &[Characteristic]) -> (f64, Option<Vec2>) {
        let dim = self.grid.dim();
        let inside = |q: &Vec2| {
            (0..dim).all(|k| {
                let lo = self.grid.origin(k);
                q[k] >= lo && q[k] <= lo + self.grid.extent(k)
            })
        };
        seeds
            .par_iter()
            .filter(|c| inside(&c.q))
            .map(|c| (c.jacobian_det(dim), Some(c.q)))
            .reduce(|| (f64::INFINITY, None), |a, b| if b.0 < a.0 { b } else { a })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn initial(&self) -> &QaInitial {
        &self.initial
    }

    pub fn report(&self) -> &CausticReport {
        &self.report
    }

    /// Last time at which fields are defined.
    pub fn valid_until(&self) -> f64 {
        self.final_state.t
    }

    /// Time between stored snapshots.
    pub fn snapshot_interval(&self) -> f64 {
        self.interval
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Seed cloud at an arbitrary time in `[0, valid_until]`; stored snapshots
    /// are borrowed, other times are integrated from the preceding snapshot.
    pub fn snapshot_at(&self, t: f64) -> Result<Cow<'_, Snapshot>> {
        let valid = self.valid_until();
        let tol = 1e-12 * valid.abs().max(1.0);
        if !(t >= 0.0) || t > valid + tol {
            return Err(Error::TrajectoryUndefined {
                requested: t,
                valid_until: self.report.valid_until,
            });
        }
        if (t - valid).abs() <= tol {
            return Ok(Cow::Borrowed(&self.final_state));
        }
        if self.interval == 0.0 {
            return Ok(Cow::Borrowed(&self.snapshots[0]));
        }
        let x = t / self.interval;
        let j = (x + 1e-9).floor() as usize;
        let j = j.min(self.snapshots.len() - 1);
        let base = &self.snapshots[j];
        if (t - base.t).abs() <= tol {
            return Ok(Cow::Borrowed(base));
        }
        let flow = Flow::new(&self.hamiltonian, self.step, self.config.integrator)?;
        let dt = t - base.t;
        let seeds = base
            .seeds
            .par_iter()
            .map(|c| flow.advance(c, dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Cow::Owned(Snapshot::new(t, seeds)))
    }

    fn seed_label(&self, i: usize) -> Vec2 {
        let n1 = self.seeds_per_axis[1];
        [
            self.seed_origin[0] + (i / n1) as f64 * self.seed_spacing[0],
            self.seed_origin[1] + (i % n1) as f64 * self.seed_spacing[1],
        ]
    }

    fn density0(&self, q0: Vec2) -> f64 {
        match &self.initial.density {
            Some(d) => d.value(q0),
            None => UniformDensity {
                volume: self.grid.volume(),
            }
            .value(q0),
        }
    }

    /// Field values at `x`, or `None` where no characteristic arrives.
    pub fn eval(&self, snap: &Snapshot, x: Vec2) -> Option<PointValues> {
        if self.grid.dim() == 1 {
            self.eval_1d(snap, x[0])
        } else {
            self.eval_2d(snap, x)
        }
    }

    pub fn momentum_at(&self, snap: &Snapshot, x: Vec2) -> Option<Vec2> {
        self.eval(snap, x).map(|v| v.momentum)
    }

    fn eval_1d(&self, snap: &Snapshot, x: f64) -> Option<PointValues> {
        let seeds = &snap.seeds;
        let n = seeds.len();
        let idx = seeds.partition_point(|c| c.q[0] <= x);
        let i = if idx == 0 {
            return None;
        } else if idx == n {
            if seeds[n - 1].q[0] == x {
                n - 2
            } else {
                return None;
            }
        } else {
            idx - 1
        };
        let (a, b) = (&seeds[i], &seeds[i + 1]);
        let d = self.seed_spacing[0];
        let (qa, qb, sa, sb) = (a.q[0], b.q[0], a.dq[0][0] * d, b.dq[0][0] * d);
        // Newton on the monotone Hermite segment, safeguarded by bisection
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut u = if qb > qa { (x - qa) / (qb - qa) } else { 0.5 };
        for _ in 0..60 {
            let f = hermite(qa, qb, sa, sb, u) - x;
            if f.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
            if f < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let df = hermite_derivative(qa, qb, sa, sb, u);
            let mut next = u - f / df;
            if !(df > 0.0) || !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() < 1e-16 {
                break;
            }
            u = next;
        }
        let dq_du = hermite_derivative(qa, qb, sa, sb, u);
        let (pa, pb, ta, tb) = (a.p[0], b.p[0], a.dp[0][0] * d, b.dp[0][0] * d);
        let momentum = hermite(pa, pb, ta, tb, u);
        let dm_du = hermite_derivative(pa, pb, ta, tb, u);
        let action = hermite(a.action, b.action, pa * sa, pb * sb, u);
        let jacobian = dq_du / d;
        let q0 = [self.seed_label(i)[0] + u * d, 0.0];
        Some(PointValues {
            q0,
            momentum: [momentum, 0.0],
            action,
            jacobian,
            divergence: dm_du / dq_du,
            density: self.density0(q0) / jacobian.abs(),
        })
    }

    fn triangle(&self, id: u32) -> [usize; 3] {
        let n1 = self.seeds_per_axis[1];
        let cell = (id / 2) as usize;
        let (a, b) = (cell / (n1 - 1), cell % (n1 - 1));
        let v00 = a * n1 + b;
        let v10 = (a + 1) * n1 + b;
        let v11 = (a + 1) * n1 + b + 1;
        let v01 = a * n1 + b + 1;
        if id.is_multiple_of(2) {
            [v00, v10, v11]
        } else {
            [v00, v11, v01]
        }
    }

    fn triangle_index<'s>(&self, snap: &'s Snapshot) -> &'s TriangleIndex {
        snap.triangles.get_or_init(|| {
            let per_axis = self.grid.points(0).max(self.grid.points(1));
            let lo = [self.grid.origin(0), self.grid.origin(1)];
            let size = [
                self.grid.extent(0) / per_axis as f64,
                self.grid.extent(1) / per_axis as f64,
            ];
            let mut buckets = vec![Vec::new(); per_axis * per_axis];
            let cells = (self.seeds_per_axis[0] - 1) * (self.seeds_per_axis[1] - 1);
            for id in 0..(2 * cells) as u32 {
                let v = self.triangle(id);
                let mut bb_lo = [f64::INFINITY; 2];
                let mut bb_hi = [f64::NEG_INFINITY; 2];
                for &k in &v {
                    for ax in 0..2 {
                        bb_lo[ax] = bb_lo[ax].min(snap.seeds[k].q[ax]);
                        bb_hi[ax] = bb_hi[ax].max(snap.seeds[k].q[ax]);
                    }
                }
                let mut range = [(0usize, 0usize); 2];
                let mut outside = false;
                for ax in 0..2 {
                    let a = ((bb_lo[ax] - lo[ax]) / size[ax]).floor();
                    let b = ((bb_hi[ax] - lo[ax]) / size[ax]).floor();
                    if b < 0.0 || a >= per_axis as f64 {
                        outside = true;
                        break;
                    }
                    range[ax] = (a.max(0.0) as usize, (b as usize).min(per_axis - 1));
                }
                if outside {
                    continue;
                }
                for i in range[0].0..=range[0].1 {
                    for j in range[1].0..=range[1].1 {
                        buckets[i * per_axis + j].push(id);
                    }
                }
            }
            TriangleIndex {
                buckets,
                per_axis,
                lo,
                size,
            }
        })
    }

    fn eval_2d(&self, snap: &Snapshot, x: Vec2) -> Option<PointValues> {
        let index = self.triangle_index(snap);
        let mut b = [0usize; 2];
        for ax in 0..2 {
            let f = ((x[ax] - index.lo[ax]) / index.size[ax]).floor();
            if !(f >= 0.0 && f < index.per_axis as f64) {
                return None;
            }
            b[ax] = f as usize;
        }
        for &id in &index.buckets[b[0] * index.per_axis + b[1]] {
            let v = self.triangle(id);
            let (a, bb, c) = (&snap.seeds[v[0]], &snap.seeds[v[1]], &snap.seeds[v[2]]);
            let e1 = [bb.q[0] - a.q[0], bb.q[1] - a.q[1]];
            let e2 = [c.q[0] - a.q[0], c.q[1] - a.q[1]];
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            if det.abs() < 1e-300 {
                continue;
            }
            let r = [x[0] - a.q[0], x[1] - a.q[1]];
            let l1 = (r[0] * e2[1] - r[1] * e2[0]) / det;
            let l2 = (e1[0] * r[1] - e1[1] * r[0]) / det;
            let l0 = 1.0 - l1 - l2;
            let tol = -1e-12;
            if l0 < tol || l1 < tol || l2 < tol {
                continue;
            }
            let w = [l0, l1, l2];
            let mix = |f: &dyn Fn(usize) -> f64| w[0] * f(v[0]) + w[1] * f(v[1]) + w[2] * f(v[2]);
            let seeds = &snap.seeds;
            let q0 = [mix(&|k| self.seed_label(k)[0]), mix(&|k| self.seed_label(k)[1])];
            let jacobian = mix(&|k| det2(&seeds[k].dq));
            return Some(PointValues {
                q0,
                momentum: [mix(&|k| seeds[k].p[0]), mix(&|k| seeds[k].p[1])],
                action: mix(&|k| seeds[k].action),
                jacobian,
                divergence: mix(&|k| seed_divergence(&seeds[k], 2)),
                density: self.density0(q0) / jacobian.abs(),
            });
        }
        None
    }

    /// Rebuilds all Eulerian fields on the grid at time `t`.
    pub fn fields_at(&self, t: f64) -> Result<QaFields> {
        let snap = self.snapshot_at(t)?;
        self.fields_of(&snap)
    }

    /// Fields at the final valid time.
    pub fn final_fields(&self) -> Result<QaFields> {
        self.fields_of(&self.final_state)
    }

    fn fields_of(&self, snap: &Snapshot) -> Result<QaFields> {
        let grid = &self.grid;
        let dim = grid.dim();
        if dim == 2 {
            self.triangle_index(snap);
        }
        let values: Vec<Option<PointValues>> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.eval(snap, grid.position(i)))
            .collect();
        let pick = |f: &dyn Fn(&PointValues) -> f64| -> Vec<f64> {
            values.iter().map(|v| v.as_ref().map_or(0.0, f)).collect()
        };
        let components = (0..dim).map(|k| pick(&|v| v.momentum[k])).collect();
        let defined: Vec<bool> = values.iter().map(Option::is_some).collect();
        let mut momentum = MomentumField::new(grid.clone(), components, snap.t)?;
        momentum.defined = defined.clone();
        Ok(QaFields {
            t: snap.t,
            momentum,
            action: ConfigAction::new(grid.clone(), pick(&|v| v.action), snap.t)?,
            density: ConfigDensity::new(grid.clone(), pick(&|v| v.density.max(0.0)), snap.t)?,
            jacobian: pick(&|v| v.jacobian),
            divergence: pick(&|v| v.divergence),
            defined,
        })
    }

    /// Integrates `q̇ = ∂H/∂p(M(q, t))` on the rebuilt field with RK4, using
    /// two snapshot intervals per step so that every stage lands on stored data.
    pub fn extract_trajectory(&self, q0: Vec2, t: f64) -> Result<QaTrajectory> {
        let valid = self.valid_until();
        if !(t >= 0.0) || t > valid + 1e-12 * valid.max(1.0) || self.report.t_star.is_some_and(|ts| t >= ts) {
            return Err(Error::TrajectoryUndefined {
                requested: t,
                valid_until: self.report.valid_until,
            });
        }
        let h = &self.hamiltonian;
        let rhs = |snap: &Snapshot, q: Vec2| -> Result<(Vec2, f64, Vec2)> {
            let m = self.momentum_at(snap, q).ok_or_else(|| Error::Advection {
                t: snap.t,
                what: format!("trajectory reached {q:?}, outside the characteristic cloud"),
            })?;
            let v = h.velocity_map(m);
            let mv = m[0] * v[0] + m[1] * v[1];
            Ok((v, mv - h.energy(q, m), m))
        };
        let rk4 = |q: Vec2, s: f64, hstep: f64, s0: &Snapshot, s1: &Snapshot, s2: &Snapshot| -> Result<(Vec2, f64)> {
            let add = |q: Vec2, a: f64, v: Vec2| [q[0] + a * v[0], q[1] + a * v[1]];
            let (k1, l1, _) = rhs(s0, q)?;
            let (k2, l2, _) = rhs(s1, add(q, 0.5 * hstep, k1))?;
            let (k3, l3, _) = rhs(s1, add(q, 0.5 * hstep, k2))?;
            let (k4, l4, _) = rhs(s2, add(q, hstep, k3))?;
            let mut out = q;
            for k in 0..2 {
                out[k] += hstep / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            Ok((out, s + hstep / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)))
        };

        let mut q = q0;
        let mut s = 0.0;
        let first = &self.snapshots[0];
        let mut out = QaTrajectory {
            times: vec![0.0],
            q: vec![q0],
            p: vec![rhs(first, q0)?.2],
            action_increment: vec![0.0],
        };
        let mut now = 0.0;
        if self.interval > 0.0 {
            let big = 2.0 * self.interval;
            let full = ((t / big) + 1e-9).floor() as usize;
            let full = full.min((self.snapshots.len() - 1) / 2);
            for k in 0..full {
                let (a, b, c) = (&self.snapshots[2 * k], &self.snapshots[2 * k + 1], &self.snapshots[2 * k + 2]);
                (q, s) = rk4(q, s, big, a, b, c)?;
                now = c.t;
                out.times.push(now);
                out.q.push(q);
                out.p.push(rhs(c, q)?.2);
                out.action_increment.push(s);
            }
        }
        let rest = t - now;
        if rest > 1e-12 * t.max(1.0) {
            let a = self.snapshot_at(now)?;
            let b = self.snapshot_at(now + 0.5 * rest)?;
            let c = self.snapshot_at(t)?;
            (q, s) = rk4(q, s, rest, &a, &b, &c)?;
            out.times.push(t);
            out.q.push(q);
            out.p.push(rhs(&c, q)?.2);
            out.action_increment.push(s);
        }
        Ok(out)
    }

    /// Initial action at the start of a trajectory (zero when no `S0` was given).
    pub fn initial_action(&self, q0: Vec2) -> f64 {
        self.initial.action.as_ref().map_or(0.0, |s| s.value(q0))
    }

    /// Residual of `(∂_t + v·∇ + ½∇·v)√ρ` at time `t` over defined nodes,
    /// with a centered time difference of width `2δ`.
    pub fn half_density_residual(&self, t: f64, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && t >= delta) {
            return Err(Error::argument("half-density residual needs t ≥ δ > 0"));
        }
        let before = self.fields_at(t - delta)?;
        let now = self.fields_at(t)?;
        let after = self.fields_at(t + delta)?;
        let grid = &self.grid;
        let amp = |f: &QaFields| f.density.samples.iter().map(|r| r.sqrt()).collect::<Vec<_>>();
        let (a_minus, a, a_plus) = (amp(&before), amp(&now), amp(&after));
        let grad = grid.gradient(&a)?;
        let m = self.hamiltonian.mass();
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            if !(before.defined[i] && now.defined[i] && after.defined[i]) {
                continue;
            }
            let dt = (a_plus[i] - a_minus[i]) / (2.0 * delta);
            let v = now.momentum.at(i);
            let adv: f64 = (0..grid.dim()).map(|k| v[k] / m * grad[k][i]).sum();
            let r = dt + adv + 0.5 * now.divergence[i] / m * a[i];
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

/// `h(q) = H(q, M(q))` at every node.
pub fn restrict_h(h: &Hamiltonian, m: &MomentumField) -> Result<Vec<f64>> {
    if h.dim() != m.grid.dim() {
        return Err(Error::argument("Hamiltonian and field dimensions differ"));
    }
    Ok((0..m.grid.len()).map(|i| h.energy(m.grid.position(i), m.at(i))).collect())
}

/// Solves the canonical condition for `M` up to `t`; past a caustic the field
/// at the last valid time is returned and the report is flagged.
pub fn evolve_canonical_condition(
    h: &Hamiltonian,
    grid: &Grid,
    m0: Arc<dyn MomentumProfile>,
    t: f64,
    config: &QaConfig,
) -> Result<(MomentumField, CausticReport)> {
    let run = QaRun::evolve(h, grid, QaInitial::from_momentum(m0), t, config)?;
    let fields = run.final_fields()?;
    Ok((fields.momentum, run.report.clone()))
}

/// Hamilton-Jacobi plus continuity as an initial-value problem.
pub fn evolve_hj_continuity(
    h: &Hamiltonian,
    grid: &Grid,
    s0: Arc<dyn ScalarProfile>,
    rho0: Arc<dyn ScalarProfile>,
    t: f64,
    config: &QaConfig,
) -> Result<(ConfigAction, ConfigDensity, CausticReport)> {
    let run = QaRun::evolve(h, grid, QaInitial::from_action(s0, Some(rho0)), t, config)?;
    let fields = run.final_fields()?;
    Ok((fields.action, fields.density, run.report.clone()))
}

/// Projected action `s0 + ∫(M·v - h) dt` along an extracted trajectory.
pub fn projected_action(trajectory: &QaTrajectory, s0: f64) -> Vec<f64> {
    trajectory.action_increment.iter().map(|ds| s0 + ds).collect()
}

/// Vorticity tensor `Ω_ik = ∂M_k/∂q_i - ∂M_i/∂q_k` at every node; empty in 1D.
pub fn vorticity(m: &MomentumField) -> Result<Vec<Mat2>> {
    let grid = &m.grid;
    if grid.dim() == 1 {
        return Ok(Vec::new());
    }
    let d1m0 = grid.detrended_derivative(&m.components[0], 1, 1)?;
    let d0m1 = grid.detrended_derivative(&m.components[1], 0, 1)?;
    Ok(d0m1
        .iter()
        .zip(&d1m0)
        .map(|(a, b)| {
            let w = a - b;
            [[0.0, w], [-w, 0.0]]
        })
        .collect())
}

/// `max_t |(s - S)(t) - (s - S)(0)|` along a QA trajectory, where `s` is the
/// phase-space action transported from `s0(q, p)` and `S` the QA action field.
pub fn consistency_s_minus_s(
    run: &QaRun,
    trajectory: &QaTrajectory,
    s0: &dyn Fn(f64, f64) -> f64,
    dt: f64,
) -> Result<f64> {
    let h = run.hamiltonian();
    let mut first = None;
    let mut worst: f64 = 0.0;
    for (k, &t) in trajectory.times.iter().enumerate() {
        let q = trajectory.q[k];
        let p = trajectory.p[k];
        let s = crate::phase_ensemble::phase_action_at(h, s0, q[0], p[0], t, dt)?;
        let snap = run.snapshot_at(t)?;
        let big_s = run
            .eval(&snap, q)
            .ok_or_else(|| Error::Advection {
                t,
                what: "trajectory left the characteristic cloud".into(),
            })?
            .action;
        let d = s - big_s;
        let d0 = *first.get_or_insert(d);
        worst = worst.max((d - d0).abs());
    }
    Ok(worst)
}
