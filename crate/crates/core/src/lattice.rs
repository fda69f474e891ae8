//! Array topologies: trimerized chains joined edge-to-edge.
//!
//! Every chain has `L` sites (`L` a multiple of three), labelled `l = 1..=L`.
//! Within trimer `r` the sites `3r-2, 3r-1, 3r` are the A, B and C sublattices,
//! so the first site of a chain is always its A edge and the last site its C
//! edge. Chains can only be joined by coupling a C edge to an A edge.
//!
//! Sites are addressed by a flat index: chains in ascending id order, sites in
//! ascending `l` within a chain.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ChainId = u32;

/// Terminal site of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Edge {
    /// Site `l = 1`.
    A,
    /// Site `l = L`.
    C,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edge::A => f.write_str("A"),
            Edge::C => f.write_str("C"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub id: ChainId,
    pub length: usize,
    /// Drive phase offset of this chain, radians.
    pub phase: f64,
}

impl ChainSpec {
    pub fn new(id: ChainId, length: usize, phase: f64) -> Self {
        ChainSpec { id, length, phase }
    }

    pub fn trimers(&self) -> usize {
        self.length / 3
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeEnd {
    pub chain: ChainId,
    pub edge: Edge,
}

impl EdgeEnd {
    pub fn new(chain: ChainId, edge: Edge) -> Self {
        EdgeEnd { chain, edge }
    }
}

impl fmt::Display for EdgeEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.chain, self.edge)
    }
}

/// Hopping of strength `strength` (units of J) between two chain edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeCoupling {
    pub from: EdgeEnd,
    pub to: EdgeEnd,
    pub strength: f64,
}

impl EdgeCoupling {
    pub fn new(from: EdgeEnd, to: EdgeEnd, strength: f64) -> Self {
        EdgeCoupling { from, to, strength }
    }

    /// Coupling from the C edge of `upstream` to the A edge of `downstream`.
    pub fn c_to_a(upstream: ChainId, downstream: ChainId, strength: f64) -> Self {
        EdgeCoupling::new(
            EdgeEnd::new(upstream, Edge::C),
            EdgeEnd::new(downstream, Edge::A),
            strength,
        )
    }

    fn key(&self) -> (EdgeEnd, EdgeEnd) {
        if self.from <= self.to {
            (self.from, self.to)
        } else {
            (self.to, self.from)
        }
    }
}

impl fmt::Display for EdgeCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("array has no chains")]
    Empty,
    #[error("chain {chain}: length {length} is not a positive multiple of 3")]
    NotTrimerized { chain: ChainId, length: usize },
    #[error("chain id {0} appears more than once")]
    DuplicateChain(ChainId),
    #[error("coupling {coupling} references unknown chain {chain}")]
    UnknownChain { coupling: String, chain: ChainId },
    #[error("coupling {0} joins a chain to itself")]
    SelfCoupling(String),
    #[error("{edge} edge coupled to {edge} edge in coupling {coupling}")]
    SameEdge { edge: Edge, coupling: String },
    #[error("coupling {0} declared more than once")]
    DuplicateCoupling(String),
    #[error("coupling {coupling} has non-finite strength {strength}")]
    BadStrength { coupling: String, strength: f64 },
    #[error("intra-chain hopping must be finite, got {0}")]
    BadHopping(f64),
    #[error("Bethe lattice depth must be at least 1, got {0}")]
    BadDepth(usize),
    #[error("site ({chain},{site}) does not exist")]
    NoSuchSite { chain: ChainId, site: usize },
    #[error("region {0:?} contains an out-of-range site index {1}")]
    RegionOutOfRange(String, usize),
    #[error("regions {0:?} and {1:?} overlap")]
    RegionsOverlap(String, String),
}

/// A physical inter-chain bond between two flat site indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingBond {
    pub coupling: EdgeCoupling,
    /// Flat index of the C-edge site.
    pub c_site: usize,
    /// Flat index of the A-edge site.
    pub a_site: usize,
}

/// A validated, immutable array of chains.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayTopology {
    chains: Vec<ChainSpec>,
    offsets: Vec<usize>,
    couplings: Vec<CouplingBond>,
    hopping: f64,
    n_sites: usize,
}

/// Validate chains and couplings, with unit intra-chain hopping.
pub fn build_topology(
    chains: Vec<ChainSpec>,
    couplings: Vec<EdgeCoupling>,
) -> Result<ArrayTopology, TopologyError> {
    ArrayTopology::new(chains, couplings, 1.0)
}

impl ArrayTopology {
    pub fn new(
        mut chains: Vec<ChainSpec>,
        couplings: Vec<EdgeCoupling>,
        hopping: f64,
    ) -> Result<Self, TopologyError> {
        if chains.is_empty() {
            return Err(TopologyError::Empty);
        }
        if !hopping.is_finite() {
            return Err(TopologyError::BadHopping(hopping));
        }
        chains.sort_by_key(|c| c.id);
        for pair in chains.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(TopologyError::DuplicateChain(pair[0].id));
            }
        }
        for c in &chains {
            if c.length == 0 || c.length % 3 != 0 {
                return Err(TopologyError::NotTrimerized {
                    chain: c.id,
                    length: c.length,
                });
            }
        }

        let mut offsets = Vec::with_capacity(chains.len());
        let mut n_sites = 0;
        for c in &chains {
            offsets.push(n_sites);
            n_sites += c.length;
        }

        let mut topo = ArrayTopology {
            chains,
            offsets,
            couplings: Vec::with_capacity(couplings.len()),
            hopping,
            n_sites,
        };

        let mut seen = BTreeSet::new();
        for k in couplings {
            let label = k.to_string();
            for end in [k.from, k.to] {
                if topo.chain_position(end.chain).is_none() {
                    return Err(TopologyError::UnknownChain {
                        coupling: label,
                        chain: end.chain,
                    });
                }
            }
            if k.from.chain == k.to.chain {
                return Err(TopologyError::SelfCoupling(label));
            }
            if k.from.edge == k.to.edge {
                return Err(TopologyError::SameEdge {
                    edge: k.from.edge,
                    coupling: label,
                });
            }
            if !k.strength.is_finite() {
                return Err(TopologyError::BadStrength {
                    coupling: label,
                    strength: k.strength,
                });
            }
            if !seen.insert(k.key()) {
                return Err(TopologyError::DuplicateCoupling(label));
            }
            let (c_end, a_end) = if k.from.edge == Edge::C {
                (k.from, k.to)
            } else {
                (k.to, k.from)
            };
            let c_site = topo.edge_site(c_end);
            let a_site = topo.edge_site(a_end);
            topo.couplings.push(CouplingBond {
                coupling: k,
                c_site,
                a_site,
            });
        }
        Ok(topo)
    }

    fn chain_position(&self, id: ChainId) -> Option<usize> {
        self.chains.binary_search_by_key(&id, |c| c.id).ok()
    }

    fn edge_site(&self, end: EdgeEnd) -> usize {
        let pos = self.chain_position(end.chain).expect("validated chain");
        match end.edge {
            Edge::A => self.offsets[pos],
            Edge::C => self.offsets[pos] + self.chains[pos].length - 1,
        }
    }

    /// Copy of this topology with every chain phase set to `phase`.
    pub fn with_uniform_phase(&self, phase: f64) -> Self {
        let mut t = self.clone();
        for c in &mut t.chains {
            c.phase = phase;
        }
        t
    }

    /// Copy of this topology with a different intra-chain hopping.
    pub fn with_hopping(&self, hopping: f64) -> Result<Self, TopologyError> {
        if !hopping.is_finite() {
            return Err(TopologyError::BadHopping(hopping));
        }
        let mut t = self.clone();
        t.hopping = hopping;
        Ok(t)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Chains in ascending id order.
    pub fn chains(&self) -> &[ChainSpec] {
        &self.chains
    }

    pub fn chain(&self, id: ChainId) -> Option<&ChainSpec> {
        self.chain_position(id).map(|p| &self.chains[p])
    }

    pub fn couplings(&self) -> &[CouplingBond] {
        &self.couplings
    }

    pub fn n_trimers(&self) -> usize {
        self.chains.iter().map(ChainSpec::trimers).sum()
    }

    /// Flat index of site `l` (1-based) of chain `chain`.
    pub fn flatten(&self, chain: ChainId, site: usize) -> Option<usize> {
        let pos = self.chain_position(chain)?;
        if site == 0 || site > self.chains[pos].length {
            return None;
        }
        Some(self.offsets[pos] + site - 1)
    }

    pub fn site_index(&self, chain: ChainId, site: usize) -> Result<usize, TopologyError> {
        self.flatten(chain, site)
            .ok_or(TopologyError::NoSuchSite { chain, site })
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(&self, index: usize) -> Option<(ChainId, usize)> {
        if index >= self.n_sites {
            return None;
        }
        let pos = self.offsets.partition_point(|&o| o <= index) - 1;
        Some((self.chains[pos].id, index - self.offsets[pos] + 1))
    }

    /// Flat index range covered by a chain.
    pub fn chain_sites(&self, chain: ChainId) -> Option<std::ops::Range<usize>> {
        let pos = self.chain_position(chain)?;
        let start = self.offsets[pos];
        Some(start..start + self.chains[pos].length)
    }

    /// Phase of the drive at flat site `index` before the time-dependent part:
    /// `2π(l-1)b + θ_μ`.
    pub fn static_phase(&self, index: usize, b: f64) -> f64 {
        let pos = self.offsets.partition_point(|&o| o <= index) - 1;
        let l = index - self.offsets[pos] + 1;
        2.0 * PI * (l - 1) as f64 * b + self.chains[pos].phase
    }

    /// Nearest-neighbour bonds inside chains, as `(i, i+1)` flat pairs.
    pub fn intra_bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.chains
            .iter()
            .zip(&self.offsets)
            .flat_map(|(c, &o)| (o..o + c.length - 1).map(|i| (i, i + 1)))
    }

    pub fn intra_bond_count(&self) -> usize {
        self.chains.iter().map(|c| c.length - 1).sum()
    }

    /// Undirected adjacency lists induced by intra-chain bonds and couplings.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_sites];
        let pairs = self
            .intra_bonds()
            .chain(self.couplings.iter().map(|b| (b.c_site, b.a_site)));
        for (i, j) in pairs {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Recover the chain and coupling lists this topology was built from.
    pub fn parts(&self) -> (Vec<ChainSpec>, Vec<EdgeCoupling>) {
        (
            self.chains.clone(),
            self.couplings.iter().map(|b| b.coupling).collect(),
        )
    }
}

/// Seven chains of six sites: chain 1 feeds chains 2 and 3, chain 2 feeds 4
/// and 6, chain 3 feeds 5 and 7. All couplings and phases are `K = J = 1`
/// and `θ = π/3`.
pub fn fig1c_topology() -> ArrayTopology {
    let chains = (1..=7).map(|id| ChainSpec::new(id, 6, PI / 3.0)).collect();
    let couplings = [(1, 2), (1, 3), (3, 5), (3, 7), (2, 6), (2, 4)]
        .into_iter()
        .map(|(up, down)| EdgeCoupling::c_to_a(up, down, 1.0))
        .collect();
    build_topology(chains, couplings).expect("fig1c topology is valid")
}

/// A single chain with phase `phase` and no couplings.
pub fn single_chain(length: usize, phase: f64) -> Result<ArrayTopology, TopologyError> {
    build_topology(vec![ChainSpec::new(1, length, phase)], Vec::new())
}

/// z = 3 Bethe lattice in which every link is a chain of `length` sites.
///
/// The central junction joins the C edge of chain 1 to the A edges of chains
/// 2 and 3. Every junction joins exactly one C edge to two A edges, and the
/// tree is grown breadth first until links at distance `depth` from the centre
/// exist, giving `3(2^depth - 1)` chains. Couplings have unit strength and all
/// phases are `π/3`.
pub fn bethe_topology(depth: usize, length: usize) -> Result<ArrayTopology, TopologyError> {
    if depth < 1 {
        return Err(TopologyError::BadDepth(depth));
    }
    let phase = PI / 3.0;
    let mut chains = vec![
        ChainSpec::new(1, length, phase),
        ChainSpec::new(2, length, phase),
        ChainSpec::new(3, length, phase),
    ];
    let mut couplings = vec![
        EdgeCoupling::c_to_a(1, 2, 1.0),
        EdgeCoupling::c_to_a(1, 3, 1.0),
    ];
    // Open ends of the current shell: the edge of each outermost chain that is
    // not yet attached to anything.
    let mut frontier = vec![
        EdgeEnd::new(1, Edge::A),
        EdgeEnd::new(2, Edge::C),
        EdgeEnd::new(3, Edge::C),
    ];
    let mut next_id: ChainId = 4;
    for _ in 1..depth {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for end in frontier {
            let first = next_id;
            let second = next_id + 1;
            next_id += 2;
            chains.push(ChainSpec::new(first, length, phase));
            chains.push(ChainSpec::new(second, length, phase));
            match end.edge {
                Edge::C => {
                    couplings.push(EdgeCoupling::c_to_a(end.chain, first, 1.0));
                    couplings.push(EdgeCoupling::c_to_a(end.chain, second, 1.0));
                    next.push(EdgeEnd::new(first, Edge::C));
                    next.push(EdgeEnd::new(second, Edge::C));
                }
                Edge::A => {
                    // `first` supplies the C edge of this junction.
                    couplings.push(EdgeCoupling::c_to_a(first, end.chain, 1.0));
                    couplings.push(EdgeCoupling::c_to_a(first, second, 1.0));
                    next.push(EdgeEnd::new(first, Edge::A));
                    next.push(EdgeEnd::new(second, Edge::C));
                }
            }
        }
        frontier = next;
    }
    build_topology(chains, couplings)
}

/// Named set of flat site indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub sites: Vec<usize>,
}

impl RegionSpec {
    pub fn new(name: impl Into<String>, sites: impl IntoIterator<Item = usize>) -> Self {
        let sites: BTreeSet<usize> = sites.into_iter().collect();
        RegionSpec {
            name: name.into(),
            sites: sites.into_iter().collect(),
        }
    }

    /// Region covering every site of the listed chains.
    pub fn from_chains(
        name: impl Into<String>,
        topology: &ArrayTopology,
        chains: &[ChainId],
    ) -> Result<Self, TopologyError> {
        let mut sites = Vec::new();
        for &c in chains {
            let range = topology
                .chain_sites(c)
                .ok_or(TopologyError::NoSuchSite { chain: c, site: 1 })?;
            sites.extend(range);
        }
        Ok(RegionSpec::new(name, sites))
    }
}

/// Check that regions address valid sites and are pairwise disjoint.
pub fn validate_regions(regions: &[RegionSpec], n_sites: usize) -> Result<(), TopologyError> {
    let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
    for r in regions {
        for &s in &r.sites {
            if s >= n_sites {
                return Err(TopologyError::RegionOutOfRange(r.name.clone(), s));
            }
            if let Some(prev) = owner.insert(s, &r.name) {
                return Err(TopologyError::RegionsOverlap(
                    prev.to_string(),
                    r.name.clone(),
                ));
            }
        }
    }
    Ok(())
}
