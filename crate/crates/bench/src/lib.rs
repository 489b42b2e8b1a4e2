//! Fixtures shared by the benchmarks.

use qcl_core::error::Result;
use qcl_core::grid::{Grid, PhaseGrid};
use qcl_core::hamiltonian::{Hamiltonian, Potential};
use qcl_core::phase_ensemble::PhaseDensity;
use qcl_core::quantum::{catalog, WaveFunction};

/// Smooth periodic test field `exp(sin q)` on a line of `n` points.
pub fn periodic_field(n: usize) -> Result<(Grid, Vec<f64>)> {
    let grid = Grid::line(2.0 * std::f64::consts::PI, n)?;
    let field = grid.sample(|q| q[0].sin().exp());
    Ok((grid, field))
}

/// Displaced packet in a harmonic trap, in `dim` dimensions.
pub fn harmonic_packet(dim: usize, n: usize) -> Result<(Hamiltonian, Grid, WaveFunction)> {
    let h = Hamiltonian::new(dim, 1.0, Potential::Harmonic { omega: 1.0 })?;
    let grid = Grid::new(&vec![20.0; dim], &vec![n; dim])?;
    let psi = catalog::gaussian_packet(&grid, [1.0, 0.0], 1.0, [0.5, 0.0], 0.0, 1.0)?;
    Ok((h, grid, psi))
}

/// Free phase-space Gaussian on a `qn × pn` grid.
pub fn phase_gaussian(qn: usize, pn: usize) -> Result<(Hamiltonian, PhaseDensity)> {
    let h = Hamiltonian::new(1, 1.0, Potential::Free)?;
    let rho = PhaseDensity::gaussian(PhaseGrid::new(16.0, qn, 8.0, pn)?, (0.0, 1.0), (0.5, 0.5))?;
    Ok((h, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let (g, f) = periodic_field(64).unwrap();
        assert_eq!(f.len(), g.len());
        let (_, _, psi) = harmonic_packet(2, 32).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        assert!(phase_gaussian(32, 16).is_ok());
    }
}
