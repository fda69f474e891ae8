//! Adiabatic onsite modulation, static disorder and the per-trimer winding
//! diagnostic.
//!
//! Site `l` of chain `μ` has angular frequency
//! `ω(t) = Δ cos(2π(l-1)b + Ωt + θ_μ) + δ`, where `δ` is a static offset drawn
//! once per disorder realization. For each trimer the pair
//! `(ω_A - ω_B, ω_A - ω_C)` traces a closed curve over one period; as long as
//! that curve winds around the origin the trimer keeps its gaps open.

use std::f64::consts::{PI, TAU};

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{ArrayTopology, ChainId};

/// Largest `W/Δ` for which every uniform offset draw in `[-W, W]` leaves the
/// origin strictly inside every trimer curve.
///
/// The worst corner of the offset cube pushes the curve's centre to
/// `(2W, 0)`, `(2W, 2W)` or `(0, 2W)` (up to sign); each of those reaches the
/// clean curve when `16 W² / 9Δ² = 1`.
pub const PROTECTION_BOUND: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("modulation amplitude must be finite and non-negative, got {0}")]
    BadAmplitude(f64),
    #[error("modulation frequency must be finite and positive, got {0}")]
    BadFrequency(f64),
    #[error("spatial period p/q needs q > 0, got {p}/{q}")]
    BadPeriod { p: u32, q: u32 },
    #[error("disorder strength must be finite and non-negative, got {0}")]
    BadStrength(f64),
    #[error("disorder has {got} offsets but the topology has {expected} sites")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("site ({chain},{site}) does not exist")]
    NoSuchSite { chain: ChainId, site: usize },
    #[error("chain {chain} has no trimer {trimer}")]
    NoSuchTrimer { chain: ChainId, trimer: usize },
    #[error("a closed curve needs at least 16 samples, got {0}")]
    TooFewSamples(usize),
}

/// `b = p/q`, the spatial period of the modulation in units of sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialPeriod {
    pub p: u32,
    pub q: u32,
}

impl SpatialPeriod {
    pub const TRIMER: SpatialPeriod = SpatialPeriod { p: 1, q: 3 };

    pub fn value(self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

impl Default for SpatialPeriod {
    fn default() -> Self {
        SpatialPeriod::TRIMER
    }
}

/// Amplitude `Δ`, angular frequency `Ω` and spatial period `b` of the drive.
/// The per-chain phase `θ_μ` lives on each [`ChainSpec`](crate::lattice::ChainSpec).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub period: SpatialPeriod,
}

impl DriveParams {
    pub fn new(amplitude: f64, frequency: f64) -> Result<Self, DriveError> {
        Self::with_period(amplitude, frequency, SpatialPeriod::TRIMER)
    }

    pub fn with_period(
        amplitude: f64,
        frequency: f64,
        period: SpatialPeriod,
    ) -> Result<Self, DriveError> {
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(DriveError::BadAmplitude(amplitude));
        }
        if !frequency.is_finite() || frequency <= 0.0 {
            return Err(DriveError::BadFrequency(frequency));
        }
        if period.q == 0 {
            return Err(DriveError::BadPeriod {
                p: period.p,
                q: period.q,
            });
        }
        Ok(DriveParams {
            amplitude,
            frequency,
            period,
        })
    }

    /// `T = 2π/Ω`.
    pub fn cycle(&self) -> f64 {
        TAU / self.frequency
    }

    pub fn b(&self) -> f64 {
        self.period.value()
    }

    /// Clean modulation at a site whose static phase is `phase`.
    #[inline]
    pub fn modulation(&self, phase: f64, t: f64) -> f64 {
        self.amplitude * (phase + self.frequency * t).cos()
    }
}

/// One static draw of onsite offsets, indexed by flat site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub strength: f64,
    pub seed: Option<u64>,
    pub offsets: Vec<f64>,
}

impl DisorderRealization {
    pub fn clean(n_sites: usize) -> Self {
        DisorderRealization {
            strength: 0.0,
            seed: None,
            offsets: vec![0.0; n_sites],
        }
    }

    /// Hand-crafted offsets; the strength is recorded as the largest `|δ|`.
    pub fn from_offsets(offsets: Vec<f64>) -> Self {
        let strength = offsets.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        DisorderRealization {
            strength,
            seed: None,
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn check_dimension(&self, n_sites: usize) -> Result<(), DriveError> {
        if self.offsets.len() != n_sites {
            return Err(DriveError::DimensionMismatch {
                expected: n_sites,
                got: self.offsets.len(),
            });
        }
        Ok(())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator used for disorder draws.
///
/// The 64-bit seed is expanded into a 256-bit ChaCha key with four SplitMix64
/// outputs (little-endian), and the stream is ChaCha with 8 rounds. Each site
/// consumes one `u64`; its top 53 bits `m` map to `W(2m/(2^53-1) - 1)`, which
/// covers the closed interval `[-W, W]`.
pub fn disorder_rng(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform offsets in `[-W, W]`, one per site in flat index order.
pub fn sample_disorder(
    topology: &ArrayTopology,
    strength: f64,
    seed: u64,
) -> Result<DisorderRealization, DriveError> {
    if !strength.is_finite() || strength < 0.0 {
        return Err(DriveError::BadStrength(strength));
    }
    const SCALE: f64 = 1.0 / ((1u64 << 53) - 1) as f64;
    let mut rng = disorder_rng(seed);
    let offsets = (0..topology.n_sites())
        .map(|_| {
            let unit = (rng.next_u64() >> 11) as f64 * SCALE;
            strength * (2.0 * unit - 1.0)
        })
        .collect();
    Ok(DisorderRealization {
        strength,
        seed: Some(seed),
        offsets,
    })
}

/// `Δ cos(2π(l-1)b + Ωt + θ_μ) + δ_{μ,l}`.
pub fn onsite_frequency(
    drive: &DriveParams,
    topology: &ArrayTopology,
    disorder: &DisorderRealization,
    chain: ChainId,
    site: usize,
    t: f64,
) -> Result<f64, DriveError> {
    disorder.check_dimension(topology.n_sites())?;
    let index = topology
        .flatten(chain, site)
        .ok_or(DriveError::NoSuchSite { chain, site })?;
    let phase = topology.static_phase(index, drive.b());
    Ok(drive.modulation(phase, t) + disorder.offsets[index])
}

/// Closed parametric curve `(ω_A - ω_B, ω_A - ω_C)` of one trimer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimerCurve {
    pub chain: ChainId,
    /// 1-based trimer index within the chain.
    pub trimer: usize,
    pub points: Vec<[f64; 2]>,
    /// Energy scale used for the origin-proximity tolerance (normally `Δ`).
    pub scale: f64,
}

impl TrimerCurve {
    /// A free-standing closed polyline, e.g. for testing the winding routine.
    pub fn from_points(points: Vec<[f64; 2]>) -> Self {
        let scale = points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        TrimerCurve {
            chain: 0,
            trimer: 0,
            points,
            scale,
        }
    }
}

/// Sample a trimer's curve at `n_samples` evenly spaced times over `[0, T]`;
/// the first and last samples are one period apart, closing the curve.
pub fn trimer_curve(
    drive: &DriveParams,
    topology: &ArrayTopology,
    disorder: &DisorderRealization,
    chain: ChainId,
    trimer: usize,
    n_samples: usize,
) -> Result<TrimerCurve, DriveError> {
    if n_samples < 16 {
        return Err(DriveError::TooFewSamples(n_samples));
    }
    disorder.check_dimension(topology.n_sites())?;
    let spec = topology
        .chain(chain)
        .ok_or(DriveError::NoSuchTrimer { chain, trimer })?;
    if trimer == 0 || trimer > spec.trimers() {
        return Err(DriveError::NoSuchTrimer { chain, trimer });
    }
    let a = topology
        .flatten(chain, 3 * trimer - 2)
        .expect("trimer in range");
    let sites = [a, a + 1, a + 2];
    let phases = sites.map(|i| topology.static_phase(i, drive.b()));
    let offsets = sites.map(|i| disorder.offsets[i]);
    let cycle = drive.cycle();
    let points = (0..n_samples)
        .map(|j| {
            let t = cycle * j as f64 / (n_samples - 1) as f64;
            let w = [0, 1, 2].map(|s| drive.modulation(phases[s], t) + offsets[s]);
            [w[0] - w[1], w[0] - w[2]]
        })
        .collect();
    Ok(TrimerCurve {
        chain,
        trimer,
        points,
        scale: drive.amplitude,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindingError {
    #[error("gap closing: curve passes within {tolerance:e} of the origin at segment {segment}")]
    GapClosing { segment: usize, tolerance: f64 },
    #[error("curve too coarse: winding {value} is not within 1e-6 of an integer")]
    Unresolved { value: f64 },
    #[error("curve has fewer than two points")]
    Degenerate,
}

fn distance_to_origin(p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (-(p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] + s * d[0]).hypot(p[1] + s * d[1])
}

/// Signed number of turns of the closed polyline around the origin
/// (counter-clockwise positive), from the sum of per-segment angle increments.
/// The segment from the last point back to the first is included.
pub fn winding_number(curve: &TrimerCurve) -> Result<i32, WindingError> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(WindingError::Degenerate);
    }
    let tolerance = 1e-9 * curve.scale;
    let mut total = 0.0;
    for (segment, (p, q)) in pts.iter().zip(pts.iter().cycle().skip(1)).enumerate() {
        if distance_to_origin(*p, *q) <= tolerance {
            return Err(WindingError::GapClosing { segment, tolerance });
        }
        let cross = p[0] * q[1] - p[1] * q[0];
        let dot = p[0] * q[0] + p[1] * q[1];
        total += cross.atan2(dot);
    }
    let turns = total / TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() >= 1e-6 {
        return Err(WindingError::Unresolved { value: turns });
    }
    Ok(rounded as i32)
}

/// Offsets `(δ_A - δ_B, δ_A - δ_C)` that translate a trimer's curve.
pub fn trimer_offsets(
    topology: &ArrayTopology,
    disorder: &DisorderRealization,
    chain: ChainId,
    trimer: usize,
) -> Result<(f64, f64), DriveError> {
    disorder.check_dimension(topology.n_sites())?;
    let spec = topology
        .chain(chain)
        .ok_or(DriveError::NoSuchTrimer { chain, trimer })?;
    if trimer == 0 || trimer > spec.trimers() {
        return Err(DriveError::NoSuchTrimer { chain, trimer });
    }
    let a = topology
        .flatten(chain, 3 * trimer - 2)
        .expect("trimer in range");
    let d = &disorder.offsets;
    Ok((d[a] - d[a + 1], d[a] - d[a + 2]))
}

/// `(s₀/a)² + (d₀/b)²` for the offsets rotated by 45°, with `a = 3Δ/√2` and
/// `b = √3Δ/√2` the semi-axes of the clean curve. Below one the origin is
/// enclosed.
pub fn certificate_margin(amplitude: f64, offsets: (f64, f64)) -> f64 {
    let (ab, ac) = offsets;
    let s0 = (ab + ac) / 2f64.sqrt();
    let d0 = (ab - ac) / 2f64.sqrt();
    let semi_major = 3.0 * amplitude / 2f64.sqrt();
    let semi_minor = 3f64.sqrt() * amplitude / 2f64.sqrt();
    (s0 / semi_major).powi(2) + (d0 / semi_minor).powi(2)
}

/// Closed-form test that the translated `b = 1/3` trimer curve encloses the
/// origin.
pub fn protection_certificate(amplitude: f64, offsets: (f64, f64)) -> bool {
    certificate_margin(amplitude, offsets) < 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindingStatus {
    Ok,
    GapClosing,
    Unresolved,
    Degenerate,
}

impl WindingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            WindingStatus::Ok => "ok",
            WindingStatus::GapClosing => "gap-closing",
            WindingStatus::Unresolved => "unresolved",
            WindingStatus::Degenerate => "degenerate",
        }
    }
}

/// One row of the winding diagnostic table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindingRow {
    pub chain: ChainId,
    pub trimer: usize,
    pub seed: Option<u64>,
    pub strength: f64,
    /// `None` unless `status` is `Ok`.
    pub winding: Option<i32>,
    pub certificate: bool,
    pub status: WindingStatus,
}

/// Winding number and certificate for every trimer of the array.
pub fn winding_diagnostics(
    drive: &DriveParams,
    topology: &ArrayTopology,
    disorder: &DisorderRealization,
    n_samples: usize,
) -> Result<Vec<WindingRow>, DriveError> {
    let mut rows = Vec::with_capacity(topology.n_trimers());
    for spec in topology.chains() {
        for trimer in 1..=spec.trimers() {
            let curve = trimer_curve(drive, topology, disorder, spec.id, trimer, n_samples)?;
            let offsets = trimer_offsets(topology, disorder, spec.id, trimer)?;
            let (winding, status) = match winding_number(&curve) {
                Ok(w) => (Some(w), WindingStatus::Ok),
                Err(WindingError::GapClosing { .. }) => (None, WindingStatus::GapClosing),
                Err(WindingError::Unresolved { .. }) => (None, WindingStatus::Unresolved),
                Err(WindingError::Degenerate) => (None, WindingStatus::Degenerate),
            };
            rows.push(WindingRow {
                chain: spec.id,
                trimer,
                seed: disorder.seed,
                strength: disorder.strength,
                winding,
                certificate: protection_certificate(drive.amplitude, offsets),
                status,
            });
        }
    }
    Ok(rows)
}

/// Point on the clean `b = 1/3` curve at drive phase `x = Ωt + θ`.
pub fn clean_curve_point(amplitude: f64, x: f64) -> [f64; 2] {
    let r = 3f64.sqrt() * amplitude;
    [r * (x + PI / 3.0).sin(), r * (x + 2.0 * PI / 3.0).sin()]
}
