//! Wave mechanics on the periodic grid.
//!
//! Schrodinger evolution uses Strang splitting: half potential kick, exact
//! kinetic drift per Fourier mode, half potential kick. The classical wave
//! equation `iħψ_t = Ĥψ + c·T_Q ψ` adds the quantum potential to the kicks,
//! recomputed from `|ψ|²` at each kick; with `c = 0` the extra work is skipped.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, Vec2};
use crate::hamiltonian::Hamiltonian;
use crate::projection::{ConfigAction, ConfigDensity};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Samples of `ψ(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub samples: Vec<Complex64>,
    pub t: f64,
    pub hbar: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, samples: Vec<Complex64>, hbar: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::argument(format!("hbar must be positive, got {hbar}")));
        }
        if samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::argument("wave function has non-finite samples"));
        }
        Ok(Self {
            grid,
            samples,
            t: 0.0,
            hbar,
        })
    }

    /// Like [`WaveFunction::new`] but rescaled to unit norm.
    pub fn normalized(grid: Grid, samples: Vec<Complex64>, hbar: f64) -> Result<Self> {
        let mut psi = Self::new(grid, samples, hbar)?;
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::argument("cannot normalize a vanishing wave function"));
        }
        let s = 1.0 / n.sqrt();
        psi.samples.iter_mut().for_each(|z| *z *= s);
        Ok(psi)
    }

    /// `∫|ψ|²`.
    pub fn norm(&self) -> f64 {
        self.grid.quadrature(&self.density_samples())
    }

    pub fn density_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn density(&self) -> ConfigDensity {
        ConfigDensity {
            grid: self.grid.clone(),
            samples: self.density_samples(),
            t: self.t,
        }
    }

    fn require_normalized(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > 1e-8 {
            return Err(Error::argument(format!("wave function must be normalized, norm = {n}")));
        }
        Ok(())
    }
}

/// Density and phase action of a wave function.
#[derive(Clone, Debug)]
pub struct MadelungPair {
    pub density: ConfigDensity,
    /// `ħ ×` unwrapped phase; zero on the mask.
    pub action: ConfigAction,
    /// `true` where `ρ < ε_ρ · max ρ`.
    pub mask: Vec<bool>,
    /// `∇S = ħ Im(ψ*∇ψ)/ρ` off the mask, zero on it.
    pub phase_gradient: Vec<Vec<f64>>,
    /// Wrapped phase `arg ψ`.
    pub phase: Vec<f64>,
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Relative mask `ρ < floor · max ρ`.
pub fn density_mask(rho: &[f64], floor: f64) -> Vec<bool> {
    let max = rho.iter().cloned().fold(0.0, f64::max);
    rho.iter().map(|&r| !(r >= floor * max) || max == 0.0).collect()
}

/// Unwraps the phase along one line of `len` samples starting at `start`
/// with `stride`, beginning from `initial`. Masked samples are skipped.
fn unwrap_line(
    phase: &[f64],
    mask: &[bool],
    out: &mut [f64],
    start: usize,
    stride: usize,
    len: usize,
    initial: Option<f64>,
) -> f64 {
    let mut last: Option<(f64, f64)> = None;
    let mut total = 0.0;
    for j in 0..len {
        let i = start + j * stride;
        if mask[i] {
            out[i] = 0.0;
            continue;
        }
        let value = match last {
            None => initial.unwrap_or(phase[i]),
            Some((wrapped, unwrapped)) => {
                let d = wrap_angle(phase[i] - wrapped);
                total += d;
                unwrapped + d
            }
        };
        out[i] = value;
        last = Some((phase[i], value));
    }
    total
}

/// Total phase advance around the periodic seam of one line, in turns.
fn line_winding(phase: &[f64], mask: &[bool], start: usize, stride: usize, len: usize) -> i64 {
    let live: Vec<usize> = (0..len).map(|j| start + j * stride).filter(|&i| !mask[i]).collect();
    if live.len() < len {
        // the seam is only meaningful on fully unmasked lines
        return 0;
    }
    let mut total = 0.0;
    for w in 0..live.len() {
        let a = live[w];
        let b = live[(w + 1) % live.len()];
        total += wrap_angle(phase[b] - phase[a]);
    }
    (total / (2.0 * PI)).round() as i64
}

pub fn madelung_decompose(psi: &WaveFunction, density_floor: f64) -> Result<MadelungPair> {
    let grid = &psi.grid;
    let rho = psi.density_samples();
    let mask = density_mask(&rho, density_floor);
    let phase: Vec<f64> = psi.samples.iter().map(|z| z.arg()).collect();
    let mut unwrapped = vec![0.0; grid.len()];
    let mut winding = [0i64; 2];
    if grid.dim() == 1 {
        unwrap_line(&phase, &mask, &mut unwrapped, 0, 1, grid.len(), None);
        winding[0] = line_winding(&phase, &mask, 0, 1, grid.len());
    } else {
        let (n0, n1) = (grid.points(0), grid.points(1));
        let mut column = vec![0.0; grid.len()];
        unwrap_line(&phase, &mask, &mut column, 0, n1, n0, None);
        for i in 0..n0 {
            let start = i * n1;
            let init = if mask[start] { None } else { Some(column[start]) };
            unwrap_line(&phase, &mask, &mut unwrapped, start, 1, n1, init);
        }
        winding[0] = line_winding(&phase, &mask, 0, n1, n0);
        winding[1] = line_winding(&phase, &mask, 0, 1, n1);
    }
    let hbar = psi.hbar;
    let action_samples: Vec<f64> = unwrapped.iter().map(|s| hbar * s).collect();

    let mut phase_gradient = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let d = grid.spectral_derivative_complex(&psi.samples, axis, 1)?;
        phase_gradient.push(
            (0..grid.len())
                .map(|i| {
                    if mask[i] {
                        0.0
                    } else {
                        hbar * (psi.samples[i].conj() * d[i]).im / rho[i]
                    }
                })
                .collect(),
        );
    }
    let mut action = ConfigAction::new(grid.clone(), action_samples, psi.t)?;
    action.winding = winding;
    Ok(MadelungPair {
        density: ConfigDensity::new(grid.clone(), rho, psi.t)?,
        action,
        mask,
        phase_gradient,
        phase,
    })
}

/// `ψ = √ρ e^{iS/ħ}`.
pub fn madelung_compose(rho: &ConfigDensity, s: &ConfigAction, hbar: f64) -> Result<WaveFunction> {
    if rho.grid != s.grid {
        return Err(Error::argument("density and action live on different grids"));
    }
    let samples = rho
        .samples
        .iter()
        .zip(&s.samples)
        .map(|(r, s)| Complex64::from_polar(r.max(0.0).sqrt(), s / hbar))
        .collect();
    let mut psi = WaveFunction::new(rho.grid.clone(), samples, hbar)?;
    psi.t = rho.t;
    Ok(psi)
}

/// `T_Q = (ħ²/2m) ∇²√ρ / √ρ` off the mask, zero on it.
pub fn quantum_potential(rho: &ConfigDensity, hbar: f64, mass: f64, density_floor: f64) -> Result<Vec<f64>> {
    let mask = density_mask(&rho.samples, density_floor);
    quantum_potential_masked(&rho.grid, &rho.samples, &mask, hbar, mass)
}

fn quantum_potential_masked(grid: &Grid, rho: &[f64], mask: &[bool], hbar: f64, mass: f64) -> Result<Vec<f64>> {
    let amp: Vec<f64> = rho.iter().map(|r| r.max(0.0).sqrt()).collect();
    let lap = grid.laplacian(&amp)?;
    let c = hbar * hbar / (2.0 * mass);
    Ok((0..grid.len())
        .map(|i| if mask[i] { 0.0 } else { c * lap[i] / amp[i] })
        .collect())
}

/// Split-step propagator with an optional quantum-potential counter-term.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: Grid,
    hbar: f64,
    mass: f64,
    dt: f64,
    potential: Vec<f64>,
    half_kick: Vec<Complex64>,
    drift: Vec<Complex64>,
    nonlinear: f64,
    density_floor: f64,
    tq_limit: f64,
    dealias: Vec<bool>,
}

impl Propagator {
    pub fn new(h: &Hamiltonian, grid: &Grid, hbar: f64, dt: f64) -> Result<Self> {
        if h.dim() != grid.dim() {
            return Err(Error::config("Hamiltonian and grid dimensions differ"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::argument(format!("dt must be positive, got {dt}")));
        }
        let potential: Vec<f64> = grid.sample(|q| h.potential(q));
        let half_kick = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -0.5 * v * dt / hbar))
            .collect();
        let ks: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.wavenumbers(a)).collect();
        let drift = (0..grid.len())
            .map(|flat| {
                let idx = grid.multi_index(flat);
                let k2: f64 = (0..grid.dim()).map(|a| ks[a][idx[a]].powi(2)).sum();
                Complex64::from_polar(1.0, -hbar * k2 * dt / (2.0 * h.mass()))
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            hbar,
            mass: h.mass(),
            dt,
            potential,
            half_kick,
            drift,
            nonlinear: 0.0,
            density_floor: 1e-12,
            tq_limit: f64::INFINITY,
            dealias: (0..grid.len())
                .map(|flat| {
                    let idx = grid.multi_index(flat);
                    (0..grid.dim()).all(|a| {
                        let n = grid.points(a);
                        let m = if idx[a] < n / 2 { idx[a] } else { n - idx[a] };
                        3 * m <= n
                    })
                })
                .collect(),
        })
    }

    /// Enables the `+c·T_Q` term. The blow-up bound is set on first use.
    pub fn with_nonlinear(mut self, coefficient: f64, density_floor: f64) -> Self {
        self.nonlinear = coefficient;
        self.density_floor = density_floor;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential_samples(&self) -> &[f64] {
        &self.potential
    }

    fn check(&self, psi: &WaveFunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(Error::argument("wave function lives on a different grid"));
        }
        if (psi.hbar - self.hbar).abs() > 0.0 {
            return Err(Error::argument("wave function and propagator use different hbar"));
        }
        Ok(())
    }

    /// Two-thirds rule on `ψ`. Without it the modes aliased across the
    /// Nyquist wavenumber see a kick that no longer cancels their dispersion
    /// and grow exponentially from round-off.
    fn dealias(&self, psi: &mut WaveFunction) {
        self.grid.forward(&mut psi.samples);
        for (z, keep) in psi.samples.iter_mut().zip(&self.dealias) {
            if !keep {
                *z = ZERO;
            }
        }
        self.grid.inverse(&mut psi.samples);
    }

    fn nonlinear_kick(&mut self, psi: &mut WaveFunction, tau: f64) -> Result<()> {
        let rho = psi.density_samples();
        let mask = density_mask(&rho, self.density_floor);
        let tq = quantum_potential_masked(&self.grid, &rho, &mask, self.hbar, self.mass)?;
        let mut worst: f64 = 0.0;
        for &v in &tq {
            if !v.is_finite() {
                return Err(Error::SingularAmplitude {
                    t: psi.t,
                    what: "quantum potential is not finite off the density mask".into(),
                });
            }
            worst = worst.max(v.abs());
        }
        if self.tq_limit.is_infinite() {
            let floor = self.hbar * self.hbar / (2.0 * self.mass * self.grid.volume().powf(2.0 / self.grid.dim() as f64));
            self.tq_limit = 1e6 * worst.max(floor);
        } else if worst > self.tq_limit {
            return Err(Error::NumericalBlowup {
                t: psi.t,
                what: format!("max |T_Q| = {worst:.3e} exceeds {:.3e}", self.tq_limit),
            });
        }
        let c = self.nonlinear * tau / self.hbar;
        for (z, v) in psi.samples.iter_mut().zip(&tq) {
            *z *= Complex64::from_polar(1.0, -c * v);
        }
        Ok(())
    }

    /// One Strang step.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<()> {
        self.check(psi)?;
        let half = 0.5 * self.dt;
        if self.nonlinear != 0.0 {
            self.nonlinear_kick(psi, half)?;
        }
        for (z, k) in psi.samples.iter_mut().zip(&self.half_kick) {
            *z *= k;
        }
        self.grid.forward(&mut psi.samples);
        for (z, d) in psi.samples.iter_mut().zip(&self.drift) {
            *z *= d;
        }
        self.grid.inverse(&mut psi.samples);
        for (z, k) in psi.samples.iter_mut().zip(&self.half_kick) {
            *z *= k;
        }
        psi.t += self.dt;
        if self.nonlinear != 0.0 {
            self.nonlinear_kick(psi, half)?;
            self.dealias(psi);
        }
        Ok(())
    }

    pub fn run(&mut self, psi: &mut WaveFunction, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(psi)?;
        }
        Ok(())
    }
}

/// Number of equal steps of size at most `dt` covering `t`, and that size.
pub fn step_plan(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::argument(format!("time must be non-negative, got {t}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::argument(format!("dt must be positive, got {dt}")));
    }
    if t == 0.0 {
        return Ok((0, dt));
    }
    let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, t / n as f64))
}

pub fn evolve_schrodinger(h: &Hamiltonian, psi0: &WaveFunction, t: f64, dt: f64) -> Result<WaveFunction> {
    evolve_classical_wave(h, psi0, t, dt, 0.0, 1e-12)
}

/// Classical wave equation with the quantum-potential term scaled by
/// `coefficient` (1 for the full equation, 0 for Schrodinger).
pub fn evolve_classical_wave(
    h: &Hamiltonian,
    psi0: &WaveFunction,
    t: f64,
    dt: f64,
    coefficient: f64,
    density_floor: f64,
) -> Result<WaveFunction> {
    psi0.require_normalized()?;
    let (n, step) = step_plan(t, dt)?;
    let mut psi = psi0.clone();
    if n == 0 {
        return Ok(psi);
    }
    let mut prop = Propagator::new(h, &psi0.grid, psi0.hbar, step)?.with_nonlinear(coefficient, density_floor);
    prop.run(&mut psi, n)?;
    psi.t = psi0.t + t;
    Ok(psi)
}

/// Residual of `∂S/∂t + H(q, ∇S) - T_Q` from Madelung fields at two times.
///
/// The time derivative uses the wrapped phase difference; spatial terms are
/// averaged between the two times. Returns the max norm over nodes that are
/// unmasked at both times.
pub fn modified_hj_residual(
    before: &MadelungPair,
    after: &MadelungPair,
    h: &Hamiltonian,
    hbar: f64,
    coefficient: f64,
) -> Result<f64> {
    Ok(hj_residual_samples(before, after, h, hbar, coefficient)?
        .into_iter()
        .flatten()
        .fold(0.0, |a: f64, b| a.max(b.abs())))
}

/// Pointwise residual; `None` on masked nodes.
pub fn hj_residual_samples(
    before: &MadelungPair,
    after: &MadelungPair,
    h: &Hamiltonian,
    hbar: f64,
    coefficient: f64,
) -> Result<Vec<Option<f64>>> {
    let grid = &before.density.grid;
    if &after.density.grid != grid {
        return Err(Error::argument("Madelung fields live on different grids"));
    }
    let dt = after.density.t - before.density.t;
    if !(dt > 0.0) {
        return Err(Error::argument("the second Madelung pair must be later than the first"));
    }
    let m = h.mass();
    let tq = |p: &MadelungPair| quantum_potential_masked(grid, &p.density.samples, &p.mask, hbar, m);
    let (tq0, tq1) = (tq(before)?, tq(after)?);
    Ok((0..grid.len())
        .map(|i| {
            if before.mask[i] || after.mask[i] {
                return None;
            }
            let ds = hbar * wrap_angle(after.phase[i] - before.phase[i]) / dt;
            let mut p = [0.0; 2];
            let mut kinetic = 0.0;
            for k in 0..grid.dim() {
                let g0 = before.phase_gradient[k][i];
                let g1 = after.phase_gradient[k][i];
                p[k] = 0.5 * (g0 + g1);
                kinetic += 0.5 * (g0 * g0 + g1 * g1) / (2.0 * m);
            }
            let q = grid.position(i);
            let _ = p;
            Some(ds + kinetic + h.potential(q) - coefficient * 0.5 * (tq0[i] + tq1[i]))
        })
        .collect())
}

/// QT expectation values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QtExpectations {
    pub t: f64,
    pub norm: f64,
    pub position: Vec2,
    /// Spectral `⟨-iħ∇⟩`.
    pub momentum: Vec2,
    /// `∫ρ ∇S` from the Madelung phase gradient.
    pub momentum_from_phase: Vec2,
    pub force: Vec2,
    pub energy: f64,
}

pub fn qt_expectations(psi: &WaveFunction, h: &Hamiltonian) -> Result<QtExpectations> {
    let grid = &psi.grid;
    let dim = grid.dim();
    let rho = psi.density_samples();
    let norm = grid.quadrature(&rho);
    let mut position = [0.0; 2];
    let mut force = [0.0; 2];
    let mut potential = 0.0;
    for (i, r) in rho.iter().enumerate() {
        let q = grid.position(i);
        let f = h.force(q);
        for k in 0..dim {
            position[k] += r * q[k];
            force[k] += r * f[k];
        }
        potential += r * h.potential(q);
    }
    let dv = grid.cell_volume();
    for k in 0..dim {
        position[k] *= dv;
        force[k] *= dv;
    }
    potential *= dv;

    // spectral moments: Σ|ψ̂|² k^a with ∫|ψ|² = (dv/N) Σ|ψ̂|²
    let mut hat = psi.samples.clone();
    grid.forward(&mut hat);
    let ks: Vec<Vec<f64>> = (0..dim).map(|a| grid.wavenumbers(a)).collect();
    let scale = dv / grid.len() as f64;
    let mut momentum = [0.0; 2];
    let mut k2 = 0.0;
    for (flat, z) in hat.iter().enumerate() {
        let idx = grid.multi_index(flat);
        let w = z.norm_sqr() * scale;
        for a in 0..dim {
            let n = grid.points(a);
            // the Nyquist mode carries no net momentum
            let ka = if idx[a] == n / 2 { 0.0 } else { ks[a][idx[a]] };
            momentum[a] += w * ka;
            k2 += w * ks[a][idx[a]].powi(2);
        }
    }
    let hbar = psi.hbar;
    for m in momentum.iter_mut().take(dim) {
        *m *= hbar;
    }
    let kinetic = hbar * hbar * k2 / (2.0 * h.mass());

    let mut momentum_from_phase = [0.0; 2];
    for a in 0..dim {
        let d = grid.spectral_derivative_complex(&psi.samples, a, 1)?;
        let s: f64 = psi.samples.iter().zip(&d).map(|(z, dz)| (z.conj() * dz).im).sum();
        momentum_from_phase[a] = hbar * s * dv;
    }
    Ok(QtExpectations {
        t: psi.t,
        norm,
        position,
        momentum,
        momentum_from_phase,
        force,
        energy: kinetic + potential,
    })
}

/// Initial wave functions by catalog name.
pub mod catalog {
    use super::*;

    pub const NAMES: [&str; 5] = ["gaussian_packet", "coherent_state", "eigenstate_n", "plane_wave", "vortex_2d"];

    /// `ψ ∝ exp(-|q-q0|²/4σ² + i[p0·(q-q0) + ½a|q-q0|²]/ħ)`; `σ` is the
    /// standard deviation of `ρ` and `a` the curvature of the initial action.
    pub fn gaussian_packet(grid: &Grid, center: Vec2, sigma: f64, momentum: Vec2, curvature: f64, hbar: f64) -> Result<WaveFunction> {
        if !(sigma > 0.0) {
            return Err(Error::scenario("initial.sigma", format!("must be positive, got {sigma}")));
        }
        let d = grid.dim();
        let samples = grid.sample(|q| {
            let mut r2 = 0.0;
            let mut pd = 0.0;
            for k in 0..d {
                let x = q[k] - center[k];
                r2 += x * x;
                pd += momentum[k] * x;
            }
            Complex64::from_polar((-r2 / (4.0 * sigma * sigma)).exp(), (pd + 0.5 * curvature * r2) / hbar)
        });
        WaveFunction::normalized(grid.clone(), samples, hbar)
    }

    /// Displaced ground state of `½mω²q²`.
    pub fn coherent_state(grid: &Grid, mass: f64, omega: f64, center: Vec2, momentum: Vec2, hbar: f64) -> Result<WaveFunction> {
        if !(mass > 0.0 && omega > 0.0) {
            return Err(Error::scenario("initial", "coherent state needs positive mass and omega"));
        }
        gaussian_packet(grid, center, (hbar / (2.0 * mass * omega)).sqrt(), momentum, 0.0, hbar)
    }

    /// Harmonic-oscillator eigenfunction `n` along the first axis (ground
    /// state along the second in 2D). Returns the state and its energy.
    pub fn eigenstate_n(grid: &Grid, mass: f64, omega: f64, n: usize, hbar: f64) -> Result<(WaveFunction, f64)> {
        if !(mass > 0.0 && omega > 0.0) {
            return Err(Error::scenario("initial", "eigenstate needs positive mass and omega"));
        }
        let alpha = (mass * omega / hbar).sqrt();
        // normalized Hermite functions by the stable three-term recurrence
        let hermite_fn = |x: f64, n: usize| {
            let xi = alpha * x;
            let mut prev = 0.0;
            let mut cur = alpha.sqrt() * PI.powf(-0.25) * (-0.5 * xi * xi).exp();
            for j in 1..=n {
                let next = (2.0 / j as f64).sqrt() * xi * cur - ((j - 1) as f64 / j as f64).sqrt() * prev;
                prev = cur;
                cur = next;
            }
            cur
        };
        let d = grid.dim();
        let samples = grid.sample(|q| {
            let mut v = hermite_fn(q[0], n);
            if d == 2 {
                v *= hermite_fn(q[1], 0);
            }
            Complex64::new(v, 0.0)
        });
        let energy = hbar * omega * (n as f64 + 0.5 * d as f64);
        Ok((WaveFunction::normalized(grid.clone(), samples, hbar)?, energy))
    }

    /// `e^{ip·q/ħ}` normalized on the box; `p/ħ` must be a grid wavenumber.
    pub fn plane_wave(grid: &Grid, momentum: Vec2, hbar: f64) -> Result<WaveFunction> {
        for k in 0..grid.dim() {
            let unit = 2.0 * PI / grid.extent(k);
            let turns = momentum[k] / hbar / unit;
            if (turns - turns.round()).abs() > 1e-9 {
                return Err(Error::scenario(
                    "initial.momentum",
                    format!("p/ħ along axis {k} must be a multiple of 2π/L = {unit}"),
                ));
            }
        }
        let d = grid.dim();
        let samples = grid.sample(|q| {
            let phase: f64 = (0..d).map(|k| momentum[k] * q[k]).sum::<f64>() / hbar;
            Complex64::from_polar(1.0, phase)
        });
        WaveFunction::normalized(grid.clone(), samples, hbar)
    }

    /// `ψ ∝ (q1 + i q2)^k e^{-|q|²/2σ²}`.
    pub fn vortex_2d(grid: &Grid, winding: u32, sigma: f64, hbar: f64) -> Result<WaveFunction> {
        if grid.dim() != 2 {
            return Err(Error::scenario("grid.dim", "vortex_2d needs a 2D grid"));
        }
        if !(sigma > 0.0) {
            return Err(Error::scenario("initial.sigma", format!("must be positive, got {sigma}")));
        }
        let samples = grid.sample(|q| {
            Complex64::new(q[0], q[1]).powu(winding) * (-(q[0] * q[0] + q[1] * q[1]) / (2.0 * sigma * sigma)).exp()
        });
        WaveFunction::normalized(grid.clone(), samples, hbar)
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;
    use crate::hamiltonian::Potential;
    use crate::phase_ensemble::{integrate_characteristic, PhaseState};
    use crate::characteristics::Integrator;
    use proptest::prelude::*;

    fn line(l: f64, n: usize) -> Grid {
        Grid::line(l, n).unwrap()
    }

    fn osc() -> Hamiltonian {
        Hamiltonian::harmonic(1, 1.0, 1.0).unwrap()
    }

    fn variance(psi: &WaveFunction) -> f64 {
        let rho = psi.density_samples();
        let g = &psi.grid;
        let mean: f64 = g.quadrature(&rho.iter().enumerate().map(|(i, r)| r * g.position(i)[0]).collect::<Vec<_>>());
        g.quadrature(&rho.iter().enumerate().map(|(i, r)| r * (g.position(i)[0] - mean).powi(2)).collect::<Vec<_>>())
    }

    #[test]
    fn free_packet_spreads() {
        let g = line(64.0, 1024);
        let h = Hamiltonian::free(1, 1.0).unwrap();
        let psi0 = gaussian_packet(&g, [0.0; 2], 1.0, [0.0; 2], 0.0, 1.0).unwrap();
        let psi = evolve_schrodinger(&h, &psi0, 2.0, 1e-3).unwrap();
        assert!((variance(&psi).sqrt() - 2f64.sqrt()).abs() < 1e-6);
        // a finer time step changes nothing for the free particle
        let fine = evolve_schrodinger(&h, &psi0, 2.0, 2.5e-4).unwrap();
        let diff = psi.samples.iter().zip(&fine.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_state_follows_the_classical_orbit() {
        let g = line(20.0, 256);
        let psi0 = coherent_state(&g, 1.0, 1.0, [1.0, 0.0], [0.0; 2], 1.0).unwrap();
        let e0 = qt_expectations(&psi0, &osc()).unwrap();
        assert!((e0.position[0] - 1.0).abs() < 1e-8 && e0.momentum[0].abs() < 1e-8);
        let psi = evolve_schrodinger(&osc(), &psi0, PI, 1e-3).unwrap();
        let e = qt_expectations(&psi, &osc()).unwrap();
        let pm = integrate_characteristic(&osc(), PhaseState::new(1.0, 0.0, 0.0), PI, 1e-3, Integrator::Rk4).unwrap();
        assert!((e.position[0] - pm.q).abs() < 1e-6, "{}", e.position[0]);
        assert!((e.position[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn ground_state_is_stationary() {
        let g = line(20.0, 256);
        let (psi0, _) = eigenstate_n(&g, 1.0, 1.0, 0, 1.0).unwrap();
        // the split-step ground state differs from the exact one at O(dt²)
        let psi = evolve_schrodinger(&osc(), &psi0, 1.0, 1e-4).unwrap();
        let rho0 = psi0.density_samples();
        let diff = psi.density_samples().iter().zip(&rho0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn eigenstates_are_orthonormal() {
        let g = line(20.0, 256);
        let (a, ea) = eigenstate_n(&g, 1.0, 1.0, 1, 1.0).unwrap();
        let (b, _) = eigenstate_n(&g, 1.0, 1.0, 2, 1.0).unwrap();
        let overlap: Complex64 = g.quadrature_complex(&a.samples.iter().zip(&b.samples).map(|(x, y)| x.conj() * y).collect::<Vec<_>>());
        assert!(overlap.norm() < 1e-10);
        assert!((qt_expectations(&a, &osc()).unwrap().energy - ea).abs() < 1e-10);
    }

    #[test]
    fn plane_wave_is_blind_to_the_nonlinear_term() {
        let g = line(2.0 * PI, 64);
        let h = Hamiltonian::free(1, 1.0).unwrap();
        let psi0 = plane_wave(&g, [1.0, 0.0], 1.0).unwrap();
        let a = evolve_schrodinger(&h, &psi0, 1.0, 1e-3).unwrap();
        let b = evolve_classical_wave(&h, &psi0, 1.0, 1e-3, 1.0, 1e-12).unwrap();
        let diff = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert!(plane_wave(&g, [0.5, 0.0], 1.0).is_err());
    }

    #[test]
    fn zero_coefficient_is_the_schrodinger_path() {
        let g = line(20.0, 256);
        let h = Hamiltonian::new(1, 1.0, Potential::Quartic { lambda: 0.5 }).unwrap();
        let psi0 = gaussian_packet(&g, [0.5, 0.0], 0.8, [0.3, 0.0], 0.0, 1.0).unwrap();
        let a = evolve_schrodinger(&h, &psi0, 0.7, 1e-3).unwrap();
        let b = evolve_classical_wave(&h, &psi0, 0.7, 1e-3, 0.0, 1e-12).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn madelung_examples() {
        let g = line(2.0 * PI, 64);
        let psi = plane_wave(&g, [1.0, 0.0], 1.0).unwrap();
        let pair = madelung_decompose(&psi, 1e-12).unwrap();
        assert_eq!(pair.action.winding[0], 1);
        let c = pair.action.samples[0] - g.position(0)[0];
        for (i, q) in g.positions().into_iter().enumerate() {
            assert!((pair.action.samples[i] - q[0] - c).abs() < 1e-12);
            assert!((pair.phase_gradient[0][i] - 1.0).abs() < 1e-10);
        }

        let real = WaveFunction::normalized(g.clone(), g.sample(|q| Complex64::new(2.0 + q[0].cos(), 0.0)), 1.0).unwrap();
        let pair = madelung_decompose(&real, 1e-12).unwrap();
        assert!(pair.action.samples.iter().all(|&s| s == 0.0));

        let g = line(20.0, 256);
        let psi = gaussian_packet(&g, [0.3, 0.0], 1.2, [1.5, 0.0], -0.4, 1.0).unwrap();
        let pair = madelung_decompose(&psi, 1e-12).unwrap();
        let back = madelung_compose(&pair.density, &pair.action, 1.0).unwrap();
        for i in 0..g.len() {
            if !pair.mask[i] {
                assert!((back.samples[i] - psi.samples[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn madelung_2d_round_trip() {
        let g = Grid::square(12.0, 64).unwrap();
        let psi = vortex_2d(&g, 1, 1.0, 1.0).unwrap();
        let pair = madelung_decompose(&psi, 1e-12).unwrap();
        let back = madelung_compose(&pair.density, &pair.action, 1.0).unwrap();
        for i in 0..g.len() {
            if !pair.mask[i] {
                assert!((back.samples[i] - psi.samples[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn quantum_potential_examples() {
        let g = line(40.0, 1024);
        let rho: Vec<f64> = g.sample(|q| (-0.5 * q[0] * q[0]).exp() / (2.0 * PI).sqrt());
        let d = ConfigDensity::new(g.clone(), rho.clone(), 0.0).unwrap();
        let tq = quantum_potential(&d, 1.0, 1.0, 1e-12).unwrap();
        let zero = g.index([512, 0]);
        // finite-difference oracle on the closed-form amplitude
        let amp = |x: f64| (-0.25 * x * x).exp();
        let e = 1e-3;
        let fd = 0.5 * (amp(e) - 2.0 * amp(0.0) + amp(-e)) / (e * e) / amp(0.0);
        assert!((tq[zero] - (-0.25)).abs() < 1e-8);
        assert!((tq[zero] - fd).abs() < 1e-6);
        let weighted: Vec<f64> = rho.iter().zip(&tq).map(|(r, t)| r * t).collect();
        assert!((g.quadrature(&weighted) + 0.125).abs() < 1e-8);

        let flat = ConfigDensity::new(g.clone(), vec![1.0 / 40.0; g.len()], 0.0).unwrap();
        assert!(quantum_potential(&flat, 1.0, 1.0, 1e-12).unwrap().iter().all(|t| t.abs() < 1e-12));
    }

    #[test]
    fn modified_hamilton_jacobi() {
        let g = line(20.0, 256);
        let psi0 = coherent_state(&g, 1.0, 1.0, [1.0, 0.0], [0.0; 2], 1.0).unwrap();
        let mut prop = Propagator::new(&osc(), &g, 1.0, 1e-3).unwrap();
        let mut psi = psi0.clone();
        prop.run(&mut psi, 500).unwrap();
        let before = madelung_decompose(&psi, 1e-12).unwrap();
        prop.step(&mut psi).unwrap();
        let after = madelung_decompose(&psi, 1e-12).unwrap();
        let r = modified_hj_residual(&before, &after, &osc(), 1.0, 1.0).unwrap();
        assert!(r < 1e-4, "{r}");

        // stationary ground state
        let mut prop = Propagator::new(&osc(), &g, 1.0, 1e-4).unwrap();
        let (mut psi, e) = eigenstate_n(&g, 1.0, 1.0, 0, 1.0).unwrap();
        let before = madelung_decompose(&psi, 1e-12).unwrap();
        prop.step(&mut psi).unwrap();
        let after = madelung_decompose(&psi, 1e-12).unwrap();
        let r = modified_hj_residual(&before, &after, &osc(), 1.0, 1.0).unwrap();
        assert!(r < 1e-6, "{r}");
        let ds = wrap_angle(after.phase[128] - before.phase[128]) / 1e-4;
        assert!((ds + e).abs() < 1e-6);
    }

    #[test]
    fn small_hbar_approaches_classical_hamilton_jacobi() {
        let hbar = 1e-3;
        let g = line(8.0, 4096);
        let h = Hamiltonian::free(1, 1.0).unwrap();
        let psi0 = gaussian_packet(&g, [0.0; 2], 0.5, [0.5, 0.0], 0.0, hbar).unwrap();
        let mut prop = Propagator::new(&h, &g, hbar, 1e-3).unwrap();
        let mut psi = psi0;
        let before = madelung_decompose(&psi, 1e-12).unwrap();
        prop.step(&mut psi).unwrap();
        let after = madelung_decompose(&psi, 1e-12).unwrap();
        let r = modified_hj_residual(&before, &after, &h, hbar, 0.0).unwrap();
        assert!(r < 1e-3, "{r}");
    }

    #[test]
    fn expectation_examples() {
        let g = line(20.0, 512);
        let h = Hamiltonian::free(1, 1.0).unwrap();
        let psi = gaussian_packet(&g, [0.0; 2], 1.0, [2.0, 0.0], 0.0, 1.0).unwrap();
        let e = qt_expectations(&psi, &h).unwrap();
        assert!((e.momentum[0] - 2.0).abs() < 1e-8);
        assert!((e.momentum_from_phase[0] - 2.0).abs() < 1e-8);
        let later = evolve_schrodinger(&h, &psi, 1.0, 1e-3).unwrap();
        assert!((qt_expectations(&later, &h).unwrap().momentum[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn ehrenfest_relations() {
        let g = line(20.0, 256);
        for h in [osc(), Hamiltonian::new(1, 1.0, Potential::Quartic { lambda: 1.0 }).unwrap()] {
            let dt = 1e-3;
            let mut prop = Propagator::new(&h, &g, 1.0, dt).unwrap();
            let mut psi = gaussian_packet(&g, [1.0, 0.0], 0.7, [0.0; 2], 0.0, 1.0).unwrap();
            let mut series = vec![qt_expectations(&psi, &h).unwrap()];
            for _ in 0..600 {
                prop.step(&mut psi).unwrap();
                series.push(qt_expectations(&psi, &h).unwrap());
            }
            for w in series.windows(3) {
                let dq = (w[2].position[0] - w[0].position[0]) / (2.0 * dt);
                let dp = (w[2].momentum[0] - w[0].momentum[0]) / (2.0 * dt);
                assert!((dq - w[1].momentum[0]).abs() < 1e-5);
                assert!((dp - w[1].force[0]).abs() < 1e-5);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gradient_phase_identity(a in -1.0f64..1.0, b in 0.5f64..2.0, c in -0.5f64..0.5, x0 in -1.0f64..1.0) {
            let g = line(40.0, 512);
            let psi = WaveFunction::normalized(
                g.clone(),
                g.sample(|q| {
                    let x = q[0] - x0;
                    Complex64::from_polar((-x * x / (2.0 * b * b)).exp() * (1.0 + 0.3 * (c * x).sin().powi(2)), a * x + c * x * x + 0.2 * (x).sin())
                }),
                1.0,
            ).unwrap();
            let pair = madelung_decompose(&psi, 1e-12).unwrap();
            let dpsi = g.spectral_derivative_complex(&psi.samples, 0, 1).unwrap();
            let drho = g.spectral_derivative(&pair.density.samples, 0, 1).unwrap();
            let rho_max = pair.density.samples.iter().cloned().fold(0.0, f64::max);
            for i in 0..g.len() {
                if pair.density.samples[i] < 1e-6 * rho_max {
                    continue;
                }
                let lhs = psi.samples[i] * pair.phase_gradient[0][i];
                let rhs = (dpsi[i] - psi.samples[i] * (drho[i] / (2.0 * pair.density.samples[i]))) / Complex64::new(0.0, 1.0);
                prop_assert!((lhs - rhs).norm() < 1e-8);
            }
        }
    }
}
