//! Phase-space ensembles for one degree of freedom.
//!
//! The Liouville density and the phase-space action are both transported
//! along canonical characteristics: every grid node is traced backward to its
//! origin, where the initial data is interpolated. No phase-space PDE scheme
//! is involved, so the evolution is unconditionally stable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::characteristics::{Characteristic, Flow, Integrator};
use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::hamiltonian::Hamiltonian;
use crate::interp::Bicubic;

/// A point of phase space at a given time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub q: f64,
    pub p: f64,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: f64, p: f64, t: f64) -> Self {
        Self { q, p, t }
    }
}

/// Samples of `ρ(q, p, t)`.
#[derive(Clone, Debug)]
pub struct PhaseDensity {
    pub grid: PhaseGrid,
    pub samples: Vec<f64>,
    pub t: f64,
}

impl PhaseDensity {
    pub fn new(grid: PhaseGrid, samples: Vec<f64>, t: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        if samples.iter().any(|x| !x.is_finite() || *x < -1e-10) {
            return Err(Error::argument("phase density must be finite and non-negative"));
        }
        Ok(Self { grid, samples, t })
    }

    /// Normalized Gaussian with independent widths in `q` and `p`.
    pub fn gaussian(grid: PhaseGrid, mean: (f64, f64), sigma: (f64, f64)) -> Result<Self> {
        if !(sigma.0 > 0.0 && sigma.1 > 0.0) {
            return Err(Error::argument("gaussian widths must be positive"));
        }
        let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma.0 * sigma.1);
        let samples = grid.sample(|q, p| {
            let zq = (q - mean.0) / sigma.0;
            let zp = (p - mean.1) / sigma.1;
            norm * (-0.5 * (zq * zq + zp * zp)).exp()
        });
        Self::new(grid, samples, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.grid.quadrature(&self.samples)
    }
}

/// Samples of the phase-space action `S(q, p, t)`.
#[derive(Clone, Debug)]
pub struct PhaseAction {
    pub grid: PhaseGrid,
    pub samples: Vec<f64>,
    pub t: f64,
}

impl PhaseAction {
    pub fn new(grid: PhaseGrid, samples: Vec<f64>, t: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::argument("phase action must be finite"));
        }
        Ok(Self { grid, samples, t })
    }

    pub fn zero(grid: PhaseGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            samples: vec![0.0; n],
            t: 0.0,
        }
    }
}

fn require_1d(h: &Hamiltonian) -> Result<()> {
    if h.dim() == 1 {
        Ok(())
    } else {
        Err(Error::config("phase-space ensembles support one degree of freedom"))
    }
}

/// Advances a single phase point by `t` (negative `t` integrates backward).
pub fn integrate_characteristic(
    h: &Hamiltonian,
    state0: PhaseState,
    t: f64,
    dt: f64,
    scheme: Integrator,
) -> Result<PhaseState> {
    let flow = Flow::new(h, dt, scheme)?.without_tangent();
    let c = flow.advance(&Characteristic::new([state0.q, 0.0], [state0.p, 0.0]), t)?;
    Ok(PhaseState::new(c.q[0], c.p[0], state0.t + t))
}

/// Traces `(q, p)` back by `t` and returns the origin together with the
/// action integral accumulated on the way (which is `-∫₀ᵗ L̄`).
fn trace_back(flow: &Flow<'_>, q: f64, p: f64, t: f64) -> Result<(f64, f64, f64)> {
    let c = flow.advance(&Characteristic::new([q, 0.0], [p, 0.0]), -t)?;
    Ok((c.q[0], c.p[0], c.action))
}

/// `ρ(x, t) = ρ0(Φ₋ₜ(x))` with bicubic interpolation of `ρ0`.
///
/// Characteristics whose origin lies outside the sampled rectangle pick up
/// zero density.
pub fn evolve_liouville(
    h: &Hamiltonian,
    rho0: &PhaseDensity,
    t: f64,
    dt: f64,
    scheme: Integrator,
) -> Result<PhaseDensity> {
    require_1d(h)?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let flow = Flow::new(h, dt, scheme)?.without_tangent();
    let interp = Bicubic::new(&rho0.grid, &rho0.samples);
    let grid = &rho0.grid;
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (q, p) = grid.point(i);
            let (q0, p0, _) = trace_back(&flow, q, p, t)?;
            Ok(interp.eval(q0, p0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PhaseDensity {
        grid: grid.clone(),
        samples,
        t: rho0.t + t,
    })
}

/// Phase-space expectation value `∫ dq dp ρ A`.
pub fn expectation(rho: &PhaseDensity, observable: &[f64]) -> Result<f64> {
    rho.grid.check_len(observable.len())?;
    let integrand: Vec<f64> = rho.samples.iter().zip(observable).map(|(r, a)| r * a).collect();
    Ok(rho.grid.quadrature(&integrand))
}

/// Phase-space action at one point: `S0(Φ₋ₜ(x)) + ∫₀ᵗ L̄` along the
/// characteristic ending at `x = (q, p)`.
pub fn phase_action_at(
    h: &Hamiltonian,
    s0: &dyn Fn(f64, f64) -> f64,
    q: f64,
    p: f64,
    t: f64,
    dt: f64,
) -> Result<f64> {
    require_1d(h)?;
    if t == 0.0 {
        return Ok(s0(q, p));
    }
    let flow = Flow::new(h, dt, Integrator::Rk4)?.without_tangent();
    let (q0, p0, acc) = trace_back(&flow, q, p, t)?;
    Ok(s0(q0, p0) - acc)
}

/// Transports an analytically given initial action to every phase-grid node.
pub fn evolve_phase_action_with(
    h: &Hamiltonian,
    grid: &PhaseGrid,
    s0: &(dyn Fn(f64, f64) -> f64 + Sync),
    t: f64,
    dt: f64,
) -> Result<PhaseAction> {
    require_1d(h)?;
    let flow = Flow::new(h, dt, Integrator::Rk4)?.without_tangent();
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (q, p) = grid.point(i);
            if t == 0.0 {
                return Ok(s0(q, p));
            }
            let (q0, p0, acc) = trace_back(&flow, q, p, t)?;
            Ok(s0(q0, p0) - acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PhaseAction {
        grid: grid.clone(),
        samples,
        t,
    })
}

/// Transports tabulated initial action samples (bicubic interpolation, zero
/// outside the sampled rectangle).
pub fn evolve_phase_action(
    h: &Hamiltonian,
    s0: &PhaseAction,
    t: f64,
    dt: f64,
) -> Result<PhaseAction> {
    if t == 0.0 {
        return Ok(s0.clone());
    }
    let interp = Bicubic::new(&s0.grid, &s0.samples);
    let mut out = evolve_phase_action_with(h, &s0.grid, &|q, p| interp.eval(q, p), t, dt)?;
    out.t = s0.t + t;
    Ok(out)
}

/// Classical phase-space wave function `√ρ e^{iS/ħ}` on the phase grid.
#[derive(Clone, Debug)]
pub struct PhaseWaveFunction {
    pub grid: PhaseGrid,
    pub samples: Vec<Complex64>,
    pub t: f64,
}

/// Evolves the classical wave function through its characteristics: the
/// modulus follows the Liouville density and the phase follows the action.
pub fn evolve_phase_wavefunction(
    h: &Hamiltonian,
    rho0: &PhaseDensity,
    s0: &PhaseAction,
    t: f64,
    dt: f64,
    hbar: f64,
) -> Result<PhaseWaveFunction> {
    if rho0.grid != s0.grid {
        return Err(Error::argument("density and action live on different phase grids"));
    }
    if !(hbar > 0.0) {
        return Err(Error::argument("hbar must be positive"));
    }
    let rho = evolve_liouville(h, rho0, t, dt, Integrator::Rk4)?;
    let s = evolve_phase_action(h, s0, t, dt)?;
    let samples = rho
        .samples
        .iter()
        .zip(&s.samples)
        .map(|(r, s)| Complex64::from_polar(r.max(0.0).sqrt(), s / hbar))
        .collect();
    Ok(PhaseWaveFunction {
        grid: rho.grid,
        samples,
        t: rho.t,
    })
}

/// Sample mean and standard error of the mean of an observable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            standard_error: (var / n).sqrt(),
        }
    }
}

/// Monte Carlo estimates of `⟨q⟩`, `⟨p⟩` and `⟨H⟩` at time `t` for a Gaussian
/// initial ensemble, each sample carried by a Störmer-Verlet characteristic.
///
/// Samples are drawn in 64 independent ChaCha streams, so the result depends
/// only on `seed` and `samples`, not on thread scheduling.
pub fn monte_carlo_expectations(
    h: &Hamiltonian,
    mean: (f64, f64),
    sigma: (f64, f64),
    t: f64,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<[Estimate; 3]> {
    require_1d(h)?;
    if samples < 2 {
        return Err(Error::argument("Monte Carlo needs at least two samples"));
    }
    let nq = Normal::new(mean.0, sigma.0).map_err(|e| Error::argument(e.to_string()))?;
    let np = Normal::new(mean.1, sigma.1).map_err(|e| Error::argument(e.to_string()))?;
    const STREAMS: usize = 64;
    let per = samples.div_ceil(STREAMS);
    let values: Vec<[f64; 3]> = (0..STREAMS)
        .into_par_iter()
        .map(|c| -> Result<Vec<[f64; 3]>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = per.min(samples.saturating_sub(c * per));
            (0..count)
                .map(|_| {
                    let s = PhaseState::new(nq.sample(&mut rng), np.sample(&mut rng), 0.0);
                    let e = integrate_characteristic(h, s, t, dt, Integrator::StormerVerlet)?;
                    Ok([e.q, e.p, h.energy([e.q, 0.0], [e.p, 0.0])])
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let column = |k: usize| Estimate::from_samples(&values.iter().map(|v| v[k]).collect::<Vec<_>>());
    Ok([column(0), column(1), column(2)])
}
