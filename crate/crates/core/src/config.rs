//! Versioned JSON experiment configuration.
//!
//! A config names a topology (preset or explicit), the drive, the disorder,
//! the initial excitation, the duration and the observables to record. It is
//! validated in full by [`ExperimentConfig::resolve`] before anything runs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::drive::{sample_disorder, DisorderRealization, DriveError, DriveParams, SpatialPeriod};
use crate::evolution::{EvolutionError, IntegratorConfig};
use crate::lattice::{
    bethe_topology, fig1c_topology, single_chain, validate_regions, ArrayTopology, ChainId,
    ChainSpec, EdgeCoupling, RegionSpec, TopologyError,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of samples per trimer curve unless the config says otherwise.
pub const DEFAULT_WINDING_SAMPLES: usize = 512;

const FIG2: &str = include_str!("../presets/fig2.json");
const SINGLE_CHAIN: &str = include_str!("../presets/single-chain.json");
const BETHE: &str = include_str!("../presets/bethe.json");

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 3] = ["fig2", "single-chain", "bethe"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("unknown preset {0:?} (available: fig2, single-chain, bethe)")]
    UnknownPreset(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("drive: {0}")]
    Drive(#[from] DriveError),
    #[error("integrator: {0}")]
    Integrator(#[from] EvolutionError),
}

fn schema(msg: impl Into<String>) -> ConfigError {
    ConfigError::Schema(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    /// Seven six-site chains in a two-level binary tree.
    Fig1c,
    SingleChain {
        length: usize,
    },
    Bethe {
        depth: usize,
        length: usize,
    },
    Explicit {
        chains: Vec<ChainSpec>,
        #[serde(default)]
        couplings: Vec<EdgeCoupling>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub delta: f64,
    pub omega: f64,
    #[serde(default)]
    pub b: SpatialPeriod,
    /// Uniform chain phase. When absent, the topology's own phases are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    #[serde(default)]
    pub strength: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Explicit per-site offsets in flat order. Replaces seeded sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
}

impl Default for DisorderConfig {
    fn default() -> Self {
        DisorderConfig {
            strength: 0.0,
            seeds: default_seeds(),
            offsets: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRef {
    pub chain: ChainId,
    /// 1-based position along the chain.
    pub site: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<ChainId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sites: Vec<SiteRef>,
}

fn default_hopping() -> f64 {
    1.0
}

fn default_samples() -> usize {
    DEFAULT_WINDING_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub topology: TopologyConfig,
    /// Intra-chain hopping `J`.
    #[serde(default = "default_hopping")]
    pub hopping: f64,
    pub drive: DriveConfig,
    #[serde(default)]
    pub disorder: DisorderConfig,
    pub initial_state: SiteRef,
    pub duration_periods: f64,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
    #[serde(default = "default_samples")]
    pub winding_samples: usize,
    /// Output directory. Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A config that passed validation, with everything it implies built.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub topology: ArrayTopology,
    pub drive: DriveParams,
    pub regions: Vec<RegionSpec>,
    /// Flat index of the initially excited site.
    pub initial_site: usize,
    pub hash: String,
}

impl ExperimentConfig {
    /// Parse a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text)?;
        if let Some(obj) = value.as_object_mut() {
            if obj.contains_key("config_hash") {
                value = obj
                    .remove("config")
                    .ok_or_else(|| schema("manifest has no config member"))?;
            }
        }
        let version = value
            .get("schema_version")
            .ok_or_else(|| schema("missing field `schema_version`"))?;
        match version.as_u64() {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(ConfigError::Version(v.min(u32::MAX as u64) as u32)),
            None => return Err(schema("schema_version must be a non-negative integer")),
        }
        serde_json::from_value(value).map_err(|e| schema(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let text = match name {
            "fig2" => FIG2,
            "single-chain" => SINGLE_CHAIN,
            "bethe" => BETHE,
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Self::from_json(text)
    }

    /// Canonical serialization used for hashing: compact JSON in field
    /// declaration order, without the output directory.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        hex_sha256(self.canonical_json().as_bytes())
    }

    /// Seeds in first-occurrence order with repeats dropped.
    pub fn unique_seeds(&self) -> Vec<u64> {
        let mut seen = BTreeSet::new();
        self.disorder
            .seeds
            .iter()
            .copied()
            .filter(|s| seen.insert(*s))
            .collect()
    }

    fn build_topology(&self) -> Result<ArrayTopology, ConfigError> {
        let topo = match &self.topology {
            TopologyConfig::Fig1c => fig1c_topology(),
            TopologyConfig::SingleChain { length } => {
                single_chain(*length, std::f64::consts::PI / 3.0)?
            }
            TopologyConfig::Bethe { depth, length } => bethe_topology(*depth, *length)?,
            TopologyConfig::Explicit { chains, couplings } => {
                ArrayTopology::new(chains.clone(), couplings.clone(), 1.0)?
            }
        };
        let topo = topo.with_hopping(self.hopping)?;
        Ok(match self.drive.theta {
            Some(theta) => topo.with_uniform_phase(theta),
            None => topo,
        })
    }

    /// Validate every field and build the objects the runners need. Repeated
    /// seeds are dropped before hashing.
    pub fn resolve(mut self) -> Result<Experiment, ConfigError> {
        self.disorder.seeds = self.unique_seeds();
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(self.schema_version));
        }
        if let Some(theta) = self.drive.theta {
            if !theta.is_finite() {
                return Err(schema(format!("drive.theta must be finite, got {theta}")));
            }
        }
        let drive = DriveParams::with_period(self.drive.delta, self.drive.omega, self.drive.b)?;
        let topology = self.build_topology()?;

        if !(self.duration_periods.is_finite() && self.duration_periods >= 0.0) {
            return Err(schema(format!(
                "duration_periods must be finite and non-negative, got {}",
                self.duration_periods
            )));
        }
        if !self.start_time.is_finite() {
            return Err(schema("start_time must be finite"));
        }
        if self.winding_samples < 16 {
            return Err(schema(format!(
                "winding_samples must be at least 16, got {}",
                self.winding_samples
            )));
        }
        self.integrator.validate(&drive)?;

        let strength = self.disorder.strength;
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(DriveError::BadStrength(strength).into());
        }
        match &self.disorder.offsets {
            Some(offsets) => {
                if offsets.len() != topology.n_sites() {
                    return Err(DriveError::DimensionMismatch {
                        expected: topology.n_sites(),
                        got: offsets.len(),
                    }
                    .into());
                }
                if offsets.iter().any(|d| !d.is_finite()) {
                    return Err(schema("disorder.offsets must be finite"));
                }
            }
            None if self.disorder.seeds.is_empty() => {
                return Err(schema("disorder.seeds must list at least one seed"));
            }
            None => {}
        }

        let SiteRef { chain, site } = self.initial_state;
        let initial_site = topology.site_index(chain, site)?;

        let mut names = BTreeSet::new();
        let mut regions = Vec::with_capacity(self.regions.len());
        for r in &self.regions {
            if r.name.is_empty() || !names.insert(r.name.as_str()) {
                return Err(schema(format!(
                    "region names must be non-empty and unique: {:?}",
                    r.name
                )));
            }
            if r.name.contains([',', '"', '\n', '\r']) {
                return Err(schema(format!(
                    "region name {:?} contains a CSV delimiter",
                    r.name
                )));
            }
            let mut spec = RegionSpec::from_chains(r.name.clone(), &topology, &r.chains)?;
            for s in &r.sites {
                spec.sites.push(topology.site_index(s.chain, s.site)?);
            }
            regions.push(RegionSpec::new(spec.name, spec.sites));
        }
        validate_regions(&regions, topology.n_sites())?;

        let hash = self.hash();
        Ok(Experiment {
            config: self,
            topology,
            drive,
            regions,
            initial_site,
            hash,
        })
    }
}

impl Experiment {
    /// First 12 hex digits of the config hash, used in file names.
    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }

    pub fn t0(&self) -> f64 {
        self.config.start_time
    }

    pub fn t1(&self) -> f64 {
        self.config.start_time + self.config.duration_periods * self.drive.cycle()
    }

    /// One disorder realization per distinct seed, or the explicit offsets.
    pub fn realizations(&self) -> Result<Vec<DisorderRealization>, DriveError> {
        if let Some(offsets) = &self.config.disorder.offsets {
            return Ok(vec![DisorderRealization::from_offsets(offsets.clone())]);
        }
        self.config
            .unique_seeds()
            .into_iter()
            .map(|seed| sample_disorder(&self.topology, self.config.disorder.strength, seed))
            .collect()
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let exp = ExperimentConfig::preset(name).unwrap().resolve().unwrap();
            assert_eq!(exp.hash.len(), 64);
        }
        let fig2 = ExperimentConfig::preset("fig2").unwrap().resolve().unwrap();
        assert_eq!(fig2.topology.n_sites(), 42);
        assert_eq!(fig2.initial_site, 0);
        assert_eq!(fig2.regions.len(), 3);
        assert_eq!(fig2.topology.chains()[3].phase, std::f64::consts::PI / 3.0);
    }

    #[test]
    fn unknown_field_is_a_schema_error() {
        let mut v: Value = serde_json::from_str(FIG2).unwrap();
        v["drive"]["gamma"] = 1.0.into();
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, ConfigError::Schema(_)), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let mut v: Value = serde_json::from_str(FIG2).unwrap();
        v["schema_version"] = 7.into();
        assert!(matches!(
            ExperimentConfig::from_json(&v.to_string()),
            Err(ConfigError::Version(7))
        ));
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(matches!(
            ExperimentConfig::from_json(&v.to_string()),
            Err(ConfigError::Schema(_))
        ));
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::preset("fig2").unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.disorder.seeds = vec![2];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn manifest_wrapper_is_unwrapped() {
        let cfg = ExperimentConfig::preset("single-chain").unwrap();
        let manifest = serde_json::json!({
            "config": cfg,
            "config_hash": cfg.hash(),
        });
        assert_eq!(
            ExperimentConfig::from_json(&manifest.to_string()).unwrap(),
            cfg
        );
    }

    #[test]
    fn seeds_deduplicated_in_order() {
        let mut cfg = ExperimentConfig::preset("fig2").unwrap();
        cfg.disorder.seeds = vec![5, 3, 5, 1, 3];
        assert_eq!(cfg.unique_seeds(), vec![5, 3, 1]);
        let once = {
            let mut c = cfg.clone();
            c.disorder.seeds = vec![5, 3, 1];
            c.resolve().unwrap()
        };
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.config.disorder.seeds, vec![5, 3, 1]);
        assert_eq!(exp.hash, once.hash);
    }

    #[test]
    fn invalid_values_rejected() {
        let base = ExperimentConfig::preset("fig2").unwrap();
        let mut c = base.clone();
        c.initial_state.site = 7;
        assert!(matches!(c.resolve(), Err(ConfigError::Topology(_))));
        let mut c = base.clone();
        c.duration_periods = -1.0;
        assert!(matches!(c.resolve(), Err(ConfigError::Schema(_))));
        let mut c = base.clone();
        c.integrator.dt = 10.0;
        assert!(matches!(c.resolve(), Err(ConfigError::Integrator(_))));
        let mut c = base.clone();
        c.regions[1].chains.push(1);
        assert!(matches!(c.resolve(), Err(ConfigError::Topology(_))));
        let mut c = base.clone();
        c.disorder.offsets = Some(vec![0.0; 3]);
        assert!(matches!(c.resolve(), Err(ConfigError::Drive(_))));
        let mut c = base;
        c.disorder.seeds.clear();
        assert!(matches!(c.resolve(), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn explicit_topology_round_trips() {
        let text = r#"{
            "schema_version": 1,
            "topology": {
                "preset": "explicit",
                "chains": [{"id": 1, "length": 3, "phase": 0.0}, {"id": 2, "length": 6, "phase": 1.0}],
                "couplings": [{"from": {"chain": 1, "edge": "C"}, "to": {"chain": 2, "edge": "A"}, "strength": 0.5}]
            },
            "drive": {"delta": 10.0, "omega": 0.1},
            "initial_state": {"chain": 2, "site": 6},
            "duration_periods": 0.5
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.initial_site, 8);
        assert_eq!(exp.topology.couplings()[0].coupling.strength, 0.5);
        assert_eq!(exp.realizations().unwrap().len(), 1);
    }
}
