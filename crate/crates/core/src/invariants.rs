//! Band structure and Chern numbers of the clean periodic chain.
//!
//! The unit cell holds `q` sites (`b = p/q`). Treating the drive phase `φ` as
//! a second momentum, each band lives on the `(k, φ)` torus and carries an
//! integer Chern number: the number of unit cells a particle in that band is
//! carried per drive cycle.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive::SpatialPeriod;

/// Smallest grid accepted by [`fhs_chern`] along either direction.
pub const MIN_GRID: usize = 6;
pub const DEFAULT_GRID: (usize, usize) = (60, 60);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChernError {
    #[error("grid {0}x{1} is below the minimum {MIN_GRID}x{MIN_GRID}")]
    GridTooSmall(usize, usize),
    #[error("unit cell needs q >= 2, got q = {0}")]
    BadPeriod(u32),
    #[error("band touching on grid at k = {k}, phi = {phi} (gap {gap:e} between bands {band} and {next})", next = band + 1)]
    BandTouching {
        k: f64,
        phi: f64,
        band: usize,
        gap: f64,
    },
    #[error("vanishing overlap between neighbouring eigenvectors of band {band} at k = {k}, phi = {phi}")]
    SingularLink { band: usize, k: f64, phi: f64 },
}

/// Clean infinite chain with a `q`-site unit cell.
///
/// Gauge: the momentum sits entirely on the bond that leaves the cell, so
/// `H(k + 2π/q, φ) = H(k, φ)` exactly and all intra-cell bonds are real.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochModel {
    pub period: SpatialPeriod,
    pub amplitude: f64,
    pub hopping: f64,
    /// Constant added to `φ` (a uniform chain phase).
    pub phase_offset: f64,
}

impl BlochModel {
    pub fn new(period: SpatialPeriod, amplitude: f64, hopping: f64) -> Self {
        BlochModel {
            period,
            amplitude,
            hopping,
            phase_offset: 0.0,
        }
    }

    /// `b = 1/3`, `Δ` as given, unit hopping.
    pub fn trimer(amplitude: f64) -> Self {
        BlochModel::new(SpatialPeriod::TRIMER, amplitude, 1.0)
    }

    pub fn q(&self) -> usize {
        self.period.q as usize
    }

    /// Width of the Brillouin zone along `k`.
    pub fn zone(&self) -> f64 {
        TAU / self.q() as f64
    }

    fn check(&self) -> Result<(), ChernError> {
        if self.period.q < 2 {
            return Err(ChernError::BadPeriod(self.period.q));
        }
        Ok(())
    }

    fn touching_threshold(&self) -> f64 {
        1e-9 * self.amplitude.abs().max(self.hopping.abs())
    }
}

/// `q × q` Bloch Hamiltonian at momentum `k` and drive phase `φ`.
pub fn bloch_hamiltonian(model: &BlochModel, k: f64, phi: f64) -> DMatrix<Complex64> {
    let q = model.q();
    let p = model.period.p as f64;
    let mut h = DMatrix::from_element(q, q, Complex64::new(0.0, 0.0));
    for m in 0..q {
        let angle = TAU * m as f64 * p / q as f64 + phi + model.phase_offset;
        h[(m, m)] = Complex64::new(model.amplitude * angle.cos(), 0.0);
    }
    for m in 0..q.saturating_sub(1) {
        h[(m, m + 1)] += model.hopping;
        h[(m + 1, m)] += model.hopping;
    }
    if q >= 2 {
        let wrap = Complex64::from_polar(model.hopping, q as f64 * k);
        h[(q - 1, 0)] += wrap;
        h[(0, q - 1)] += wrap.conj();
    }
    h
}

/// Ascending band energies and the matching eigenvectors (as columns).
pub fn bands(model: &BlochModel, k: f64, phi: f64) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(bloch_hamiltonian(model, k, phi));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (energies, vectors)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChernResult {
    /// Per band, ascending energy.
    pub chern: Vec<i32>,
    pub grid: (usize, usize),
    /// Largest distance of a band's total flux / 2π from its integer.
    pub residual: f64,
}

fn grid_point(model: &BlochModel, grid: (usize, usize), i: usize, j: usize) -> (f64, f64) {
    (
        model.zone() * i as f64 / grid.0 as f64,
        TAU * j as f64 / grid.1 as f64,
    )
}

/// Lattice field-strength Chern numbers on an `n_k × n_φ` grid.
///
/// Link variables are normalized overlaps of neighbouring band eigenvectors;
/// each plaquette flux is the argument of the product of its four links. The
/// orientation is chosen so that a positive Chern number means transport
/// toward increasing site index as `φ` increases.
pub fn fhs_chern(model: &BlochModel, grid: (usize, usize)) -> Result<ChernResult, ChernError> {
    model.check()?;
    let (nk, nphi) = grid;
    if nk < MIN_GRID || nphi < MIN_GRID {
        return Err(ChernError::GridTooSmall(nk, nphi));
    }
    let q = model.q();
    let threshold = model.touching_threshold();
    let mut vectors = Vec::with_capacity(nk * nphi);
    for i in 0..nk {
        for j in 0..nphi {
            let (k, phi) = grid_point(model, grid, i, j);
            let (e, v) = bands(model, k, phi);
            for band in 0..q - 1 {
                let gap = e[band + 1] - e[band];
                if gap < threshold {
                    return Err(ChernError::BandTouching { k, phi, band, gap });
                }
            }
            vectors.push(v);
        }
    }
    let at = |i: usize, j: usize| &vectors[(i % nk) * nphi + (j % nphi)];

    let mut chern = Vec::with_capacity(q);
    let mut residual: f64 = 0.0;
    for band in 0..q {
        let link = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, i: usize, j: usize| {
            let overlap = a.column(band).dotc(&b.column(band));
            let norm = overlap.norm();
            if norm < 1e-12 {
                let (k, phi) = grid_point(model, grid, i, j);
                return Err(ChernError::SingularLink { band, k, phi });
            }
            Ok(overlap / norm)
        };
        let mut total = 0.0;
        for i in 0..nk {
            for j in 0..nphi {
                let u00 = at(i, j);
                let u10 = at(i + 1, j);
                let u11 = at(i + 1, j + 1);
                let u01 = at(i, j + 1);
                let loop_product = link(u00, u10, i, j)?
                    * link(u10, u11, i, j)?
                    * link(u11, u01, i, j)?
                    * link(u01, u00, i, j)?;
                total += plaquette_flux(loop_product);
            }
        }
        let turns = total / TAU;
        let rounded = turns.round();
        residual = residual.max((turns - rounded).abs());
        chern.push(rounded as i32);
    }
    Ok(ChernResult {
        chern,
        grid,
        residual,
    })
}

/// Argument in `(-π, π]`.
pub fn plaquette_flux(z: Complex64) -> f64 {
    let a = z.arg();
    if a <= -PI {
        a + TAU
    } else {
        a
    }
}

/// Smallest separation between adjacent bands over the grid.
pub fn min_gap(model: &BlochModel, grid: (usize, usize)) -> f64 {
    let q = model.q();
    let mut best = f64::INFINITY;
    for i in 0..grid.0 {
        for j in 0..grid.1 {
            let (k, phi) = grid_point(model, grid, i, j);
            let (e, _) = bands(model, k, phi);
            for band in 0..q.saturating_sub(1) {
                best = best.min(e[band + 1] - e[band]);
            }
        }
    }
    best
}
