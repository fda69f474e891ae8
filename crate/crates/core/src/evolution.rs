//! Time evolution of a single excitation and the transport observables
//! recorded along the way.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drive::{DisorderRealization, DriveParams};
use crate::expm::{dense_exp_apply, ChebyshevKernel};
use crate::hamiltonian::{DrivenArray, HamiltonianError, HamiltonianSnapshot};
use crate::lattice::{validate_regions, ArrayTopology, ChainId, RegionSpec, TopologyError};

/// Largest tolerated `|‖ψ‖² - 1|` before a run is declared failed.
pub const NORM_FAILURE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("non-finite amplitude after step {step}")]
    NonFinite { step: usize },
    #[error("integrator failure: norm drift {drift:e} after step {step}")]
    IntegratorFailure { step: usize, drift: f64 },
    #[error("invalid integrator config: {0}")]
    BadConfig(String),
    #[error("initial state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("state has {got} amplitudes, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("end time {t1} precedes start time {t0}")]
    BadInterval { t0: f64, t1: f64 },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Complex amplitudes over the flat site basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        StateVector(amplitudes)
    }

    /// The excitation localized on flat site `index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[index] = Complex64::new(1.0, 0.0);
        StateVector(v)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(Complex64::norm_sqr).collect()
    }

    /// Largest amplitude difference to `other`.
    pub fn max_distance(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One exponential of the Hamiltonian frozen at each step midpoint.
    MidpointExponential,
    /// Fourth-order commutator-free Magnus scheme with dense exponentials.
    /// Slow; meant for cross-checks at small `dt`.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub stride: usize,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 0.01,
            stride: 100,
            method: Method::MidpointExponential,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, drive: &DriveParams) -> Result<(), EvolutionError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolutionError::BadConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.dt > 0.1 / drive.frequency {
            return Err(EvolutionError::BadConfig(format!(
                "dt = {} exceeds 0.1/Ω = {}",
                self.dt,
                0.1 / drive.frequency
            )));
        }
        if self.stride == 0 {
            return Err(EvolutionError::BadConfig(
                "stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_finite(psi: &[Complex64], step: usize) -> Result<f64, EvolutionError> {
    let n2: f64 = psi.iter().map(Complex64::norm_sqr).sum();
    if !n2.is_finite() {
        return Err(EvolutionError::NonFinite { step });
    }
    Ok(n2)
}

/// `exp(-i H dt) ψ` with `H` frozen (normally at the step midpoint).
pub fn step(
    h_mid: &HamiltonianSnapshot,
    psi: &StateVector,
    dt: f64,
) -> Result<StateVector, EvolutionError> {
    if psi.dim() != h_mid.dim() {
        return Err(EvolutionError::DimensionMismatch {
            expected: h_mid.dim(),
            got: psi.dim(),
        });
    }
    let mut out = psi.clone();
    ChebyshevKernel::new().apply(h_mid, out.amplitudes_mut(), dt);
    check_finite(out.amplitudes(), 0)?;
    Ok(out)
}

/// Uniform time grid from `t0` to `t1` with spacing at most `|dt|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Self {
        let span = (t1 - t0).abs() / dt;
        let rounded = span.round();
        let steps = if (span - rounded).abs() < 1e-9 * span.max(1.0) {
            rounded
        } else {
            span.ceil()
        } as usize;
        TimeGrid { t0, t1, steps }
    }

    pub fn h(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            (self.t1 - self.t0) / self.steps as f64
        }
    }

    /// Time after `k` steps; exact at both ends.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.h()
        }
    }
}

/// Per-step stepping machinery shared by [`propagate`] and [`evolve`].
struct Stepper<'a> {
    array: &'a DrivenArray,
    method: Method,
    snapshot: HamiltonianSnapshot,
    kernel: ChebyshevKernel,
}

impl<'a> Stepper<'a> {
    fn new(array: &'a DrivenArray, method: Method) -> Self {
        Stepper {
            array,
            method,
            snapshot: array.snapshot(0.0),
            kernel: ChebyshevKernel::new(),
        }
    }

    fn advance(&mut self, psi: &mut [Complex64], t: f64, h: f64) {
        match self.method {
            Method::MidpointExponential => {
                let mid = t + 0.5 * h;
                self.array.fill_diagonal(mid, &mut self.snapshot.diagonal);
                self.snapshot.time = mid;
                self.kernel.apply(&self.snapshot, psi, h);
            }
            Method::Reference => {
                // Gauss nodes and commutator-free weights of the fourth-order
                // two-exponential Magnus scheme.
                let r3 = 3f64.sqrt();
                let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
                let (a1, a2) = (0.25 - r3 / 6.0, 0.25 + r3 / 6.0);
                let h1 = self.array.snapshot(t + c1 * h).to_dense();
                let h2 = self.array.snapshot(t + c2 * h).to_dense();
                let first: DMatrix<f64> = &h1 * a2 + &h2 * a1;
                let second: DMatrix<f64> = &h1 * a1 + &h2 * a2;
                dense_exp_apply(&first, psi, h);
                dense_exp_apply(&second, psi, h);
            }
        }
    }
}

/// Evolve `psi` from `t0` to `t1` (either direction) without recording.
/// The grid is [`TimeGrid::new`]`(t0, t1, dt)`, so running `t1 → t0` retraces
/// the same steps backwards.
pub fn evolve(
    array: &DrivenArray,
    psi: &StateVector,
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<StateVector, EvolutionError> {
    config.validate(array.drive())?;
    if psi.dim() != array.dim() {
        return Err(EvolutionError::DimensionMismatch {
            expected: array.dim(),
            got: psi.dim(),
        });
    }
    let grid = TimeGrid::new(t0, t1, config.dt);
    let h = grid.h();
    let start_norm = psi.norm_sqr();
    let mut out = psi.clone();
    let mut stepper = Stepper::new(array, config.method);
    for k in 0..grid.steps {
        stepper.advance(out.amplitudes_mut(), grid.time(k), h);
        let n2 = check_finite(out.amplitudes(), k + 1)?;
        let drift = (n2 - start_norm).abs();
        if drift > NORM_FAILURE {
            return Err(EvolutionError::IntegratorFailure { step: k + 1, drift });
        }
    }
    Ok(out)
}

/// `Σ_{i ∈ region} |ψ_i|²`.
pub fn region_population(psi: &StateVector, region: &RegionSpec) -> f64 {
    region
        .sites
        .iter()
        .map(|&i| psi.amplitudes()[i].norm_sqr())
        .sum()
}

/// Weight of a chain and its population-weighted mean site `l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainCom {
    /// `None` when the weight is below `1e-12`.
    pub position: Option<f64>,
    pub weight: f64,
}

pub fn chain_center_of_mass(
    psi: &StateVector,
    topology: &ArrayTopology,
    chain: ChainId,
) -> Option<ChainCom> {
    let range = topology.chain_sites(chain)?;
    let amps = &psi.amplitudes()[range];
    let weight: f64 = amps.iter().map(Complex64::norm_sqr).sum();
    let moment: f64 = amps
        .iter()
        .enumerate()
        .map(|(k, a)| (k + 1) as f64 * a.norm_sqr())
        .sum();
    let position = (weight >= 1e-12).then(|| moment / weight);
    Some(ChainCom { position, weight })
}

/// Observables recorded along one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub site_populations: Vec<Vec<f64>>,
    pub region_names: Vec<String>,
    pub region_populations: Vec<Vec<f64>>,
    pub chain_ids: Vec<ChainId>,
    pub center_of_mass: Vec<Vec<Option<f64>>>,
    pub final_state: StateVector,
    /// Largest `|‖ψ‖² - 1|` seen at any step.
    pub max_norm_drift: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Population of chain `chain` at every recorded time.
    pub fn chain_population(&self, topology: &ArrayTopology, chain: ChainId) -> Vec<f64> {
        let range = topology.chain_sites(chain).expect("chain exists");
        self.site_populations
            .iter()
            .map(|p| p[range.clone()].iter().sum())
            .collect()
    }

    pub fn region(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.region_names.iter().position(|n| n == name)?;
        Some(self.region_populations.iter().map(|r| r[k]).collect())
    }
}

struct Recorder<'a> {
    topology: &'a ArrayTopology,
    regions: &'a [RegionSpec],
    out: Trajectory,
}

impl Recorder<'_> {
    fn record(&mut self, t: f64, psi: &StateVector) {
        self.out.times.push(t);
        self.out.site_populations.push(psi.populations());
        self.out.region_populations.push(
            self.regions
                .iter()
                .map(|r| region_population(psi, r))
                .collect(),
        );
        self.out.center_of_mass.push(
            self.out
                .chain_ids
                .iter()
                .map(|&c| chain_center_of_mass(psi, self.topology, c).and_then(|com| com.position))
                .collect(),
        );
    }
}

/// Evolve `psi0` from `t0` to `t1` on a fixed grid, recording observables at
/// `t0`, every `config.stride` steps and at `t1`.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    topology: &ArrayTopology,
    drive: &DriveParams,
    disorder: &DisorderRealization,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
    regions: &[RegionSpec],
) -> Result<Trajectory, EvolutionError> {
    config.validate(drive)?;
    if t1.is_nan() || t0.is_nan() || t1 < t0 {
        return Err(EvolutionError::BadInterval { t0, t1 });
    }
    let n = topology.n_sites();
    if psi0.dim() != n {
        return Err(EvolutionError::DimensionMismatch {
            expected: n,
            got: psi0.dim(),
        });
    }
    let n2 = psi0.norm_sqr();
    if (n2 - 1.0).abs() > 1e-10 {
        return Err(EvolutionError::NotNormalized(n2));
    }
    validate_regions(regions, n)?;
    let array = DrivenArray::new(topology, drive, disorder)?;

    let grid = TimeGrid::new(t0, t1, config.dt);
    let h = grid.h();
    let mut recorder = Recorder {
        topology,
        regions,
        out: Trajectory {
            times: Vec::new(),
            site_populations: Vec::new(),
            region_names: regions.iter().map(|r| r.name.clone()).collect(),
            region_populations: Vec::new(),
            chain_ids: topology.chains().iter().map(|c| c.id).collect(),
            center_of_mass: Vec::new(),
            final_state: psi0.clone(),
            max_norm_drift: (n2 - 1.0).abs(),
        },
    };
    let mut psi = psi0.clone();
    recorder.record(t0, &psi);
    let mut stepper = Stepper::new(&array, config.method);
    let mut max_drift = (n2 - 1.0).abs();
    for k in 0..grid.steps {
        stepper.advance(psi.amplitudes_mut(), grid.time(k), h);
        let n2 = check_finite(psi.amplitudes(), k + 1)?;
        let drift = (n2 - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > NORM_FAILURE {
            return Err(EvolutionError::IntegratorFailure { step: k + 1, drift });
        }
        if (k + 1) % config.stride == 0 || k + 1 == grid.steps {
            recorder.record(grid.time(k + 1), &psi);
        }
    }
    let mut out = recorder.out;
    out.final_state = psi;
    out.max_norm_drift = max_drift;
    Ok(out)
}
