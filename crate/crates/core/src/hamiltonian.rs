//! Single-excitation Hamiltonian of a driven chain array.
//!
//! With one flipped spin the XX chain `(J/2)(σˣσˣ + σʸσʸ)` is a hopping
//! `J(σ⁺σ⁻ + σ⁻σ⁺)` of amplitude `J`, and `(1/2)Σ ω_l σᶻ_l` contributes
//! `ω_l` on the diagonal up to a state-independent shift, which is dropped.
//! Every matrix element is real, so snapshots store a diagonal plus a list of
//! symmetric bonds.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::drive::{DisorderRealization, DriveError, DriveParams};
use crate::lattice::ArrayTopology;

/// Largest dimension the dense eigensolver accepts by default.
pub const DENSE_CAP: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error("dense solver refused: dimension {dim} exceeds cap {cap}")]
    DenseSolverRefused { dim: usize, cap: usize },
}

/// Real symmetric off-diagonal element `H[i][j] = H[j][i] = amplitude`, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub amplitude: f64,
}

/// The Hamiltonian frozen at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSnapshot {
    pub time: f64,
    pub diagonal: Vec<f64>,
    pub bonds: Vec<Bond>,
}

impl HamiltonianSnapshot {
    pub fn from_parts(time: f64, diagonal: Vec<f64>, bonds: Vec<Bond>) -> Self {
        let bonds = bonds
            .into_iter()
            .map(|b| Bond {
                i: b.i.min(b.j),
                j: b.i.max(b.j),
                amplitude: b.amplitude,
            })
            .collect();
        HamiltonianSnapshot {
            time,
            diagonal,
            bonds,
        }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// `H[i][j]` as a complex number.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let mut v = if i == j { self.diagonal[i] } else { 0.0 };
        for b in &self.bonds {
            if (b.i, b.j) == (i, j) || (b.j, b.i) == (i, j) {
                v += b.amplitude;
            }
        }
        Complex64::new(v, 0.0)
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diagonal) {
            *yi = xi * d;
        }
        for b in &self.bonds {
            y[b.i] += x[b.j] * b.amplitude;
            y[b.j] += x[b.i] * b.amplitude;
        }
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut radius = vec![0.0; self.dim()];
        for b in &self.bonds {
            radius[b.i] += b.amplitude.abs();
            radius[b.j] += b.amplitude.abs();
        }
        self.diagonal
            .iter()
            .zip(&radius)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (d, r)| {
                (lo.min(d - r), hi.max(d + r))
            })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for b in &self.bonds {
            m[(b.i, b.j)] += b.amplitude;
            m[(b.j, b.i)] += b.amplitude;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }

    /// Debug dump: one CSV line per row, real and imaginary parts interleaved.
    pub fn write_dense_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.to_dense();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols())
                .flat_map(|j| [m[(i, j)].to_string(), "0".to_string()])
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Time-independent pieces of the array Hamiltonian, ready to be frozen at
/// any time.
#[derive(Clone, Debug)]
pub struct DrivenArray {
    drive: DriveParams,
    phases: Vec<f64>,
    offsets: Vec<f64>,
    bonds: Vec<Bond>,
}

impl DrivenArray {
    pub fn new(
        topology: &ArrayTopology,
        drive: &DriveParams,
        disorder: &DisorderRealization,
    ) -> Result<Self, HamiltonianError> {
        disorder.check_dimension(topology.n_sites())?;
        let phases = (0..topology.n_sites())
            .map(|i| topology.static_phase(i, drive.b()))
            .collect();
        let j = topology.hopping();
        let bonds = topology
            .intra_bonds()
            .map(|(a, b)| Bond {
                i: a,
                j: b,
                amplitude: j,
            })
            .chain(topology.couplings().iter().map(|k| Bond {
                i: k.c_site.min(k.a_site),
                j: k.c_site.max(k.a_site),
                amplitude: k.coupling.strength,
            }))
            .collect();
        Ok(DrivenArray {
            drive: *drive,
            phases,
            offsets: disorder.offsets.clone(),
            bonds,
        })
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn drive(&self) -> &DriveParams {
        &self.drive
    }

    pub fn fill_diagonal(&self, t: f64, diagonal: &mut [f64]) {
        for ((d, &phase), &offset) in diagonal.iter_mut().zip(&self.phases).zip(&self.offsets) {
            *d = self.drive.modulation(phase, t) + offset;
        }
    }

    pub fn snapshot(&self, t: f64) -> HamiltonianSnapshot {
        let mut diagonal = vec![0.0; self.dim()];
        self.fill_diagonal(t, &mut diagonal);
        HamiltonianSnapshot {
            time: t,
            diagonal,
            bonds: self.bonds.clone(),
        }
    }
}

/// Freeze the array Hamiltonian at time `t`.
pub fn assemble(
    topology: &ArrayTopology,
    drive: &DriveParams,
    disorder: &DisorderRealization,
    t: f64,
) -> Result<HamiltonianSnapshot, HamiltonianError> {
    Ok(DrivenArray::new(topology, drive, disorder)?.snapshot(t))
}

/// Ascending eigenvalues, refusing dimensions above [`DENSE_CAP`].
pub fn instantaneous_spectrum(h: &HamiltonianSnapshot) -> Result<Vec<f64>, HamiltonianError> {
    instantaneous_spectrum_capped(h, DENSE_CAP)
}

pub fn instantaneous_spectrum_capped(
    h: &HamiltonianSnapshot,
    cap: usize,
) -> Result<Vec<f64>, HamiltonianError> {
    if h.dim() > cap {
        return Err(HamiltonianError::DenseSolverRefused { dim: h.dim(), cap });
    }
    let mut e: Vec<f64> = SymmetricEigen::new(h.to_dense())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}
