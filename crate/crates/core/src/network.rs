//! Synchronous sensor network: topologies and the two-phase exchange round.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::intersection::Strip;
use crate::observers::{correct, fuse, Corrected, Dynamics, NodeState, ObserverConfig, StepOutput};
use crate::zonotope::Zonotope;

/// Undirected communication graph with self-inclusive neighborhoods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

/// Wire form: `{"n": 8, "neighbors": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from per-node neighbor lists. Each list must contain
    /// the node itself, only valid ids, and no duplicates; lists are sorted.
    pub fn new(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::Empty("topology"));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} lists a neighbor twice"
                )));
            }
            if let Some(&bad) = list.iter().find(|&&j| j >= n) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} lists unknown neighbor {bad}"
                )));
            }
            if list.binary_search(&i).is_err() {
                return Err(Error::InvalidArgument(format!(
                    "node {i} is missing from its own neighborhood"
                )));
            }
        }
        Ok(Self { neighbors })
    }

    /// Circulant ring: node `i` is linked to `i ± 1, …, i ± k/2 (mod n)`.
    pub fn ring(n: usize, k_neighbors: usize) -> Result<Self> {
        if n == 0 || k_neighbors >= n || k_neighbors % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "ring needs n >= 1 and an even neighbor count below n, got n={n}, k={k_neighbors}"
            )));
        }
        let half = k_neighbors / 2;
        let neighbors = (0..n)
            .map(|i| {
                let mut list: Vec<usize> = (0..=half)
                    .flat_map(|d| [(i + d) % n, (i + n - d) % n])
                    .collect();
                list.sort_unstable();
                list.dedup();
                list
            })
            .collect();
        Self::new(neighbors)
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Number of neighbors excluding the node itself, maximised over nodes.
    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(|l| l.len() - 1).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(i, list)| list.iter().all(|&j| self.neighbors[j].binary_search(&i).is_ok()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: TopologyRepr = serde_json::from_str(text)?;
        ensure_dim("topology node count", repr.n, repr.neighbors.len())?;
        Self::new(repr.neighbors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TopologyRepr {
            n: self.n_nodes(),
            neighbors: self.neighbors.clone(),
        })
        .expect("topology serialization is infallible")
    }
}

/// Payloads exchanged in one round.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub step: usize,
    /// Strips delivered to each node in phase one, tagged with their origin.
    pub strips: Vec<Vec<(usize, Strip)>>,
    /// Corrected set published by each node in phase two; node `i` receives
    /// `corrected[j]` for every `j` in its neighborhood.
    pub corrected: Vec<Zonotope>,
}

impl RoundTrace {
    pub fn shared_sets<'a>(&'a self, topology: &'a Topology, node: usize) -> Vec<(usize, &'a Zonotope)> {
        topology
            .neighbors(node)
            .iter()
            .map(|&j| (j, &self.corrected[j]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub step: StepOutput,
    /// Wall-clock time spent in this node's two phases.
    pub compute_time: Duration,
}

/// Runs one synchronous round.
///
/// Phase one delivers every node the strips of its neighborhood and runs the
/// measurement (or Luenberger) update; phase two starts only after all
/// corrected sets exist, delivers them, and runs the diffusion step. Each
/// node's result depends only on its neighborhood's payloads, so node
/// processing order is irrelevant.
pub fn run_round(
    step: usize,
    topology: &Topology,
    states: &[NodeState],
    measurements: &[Strip],
    cfg: &ObserverConfig,
    dynamics: &Dynamics,
) -> Result<(Vec<RoundOutput>, RoundTrace)> {
    let n = topology.n_nodes();
    ensure_dim("node states", n, states.len())?;
    ensure_dim("measurements", n, measurements.len())?;

    let strips: Vec<Vec<(usize, Strip)>> = (0..n)
        .map(|i| {
            topology
                .neighbors(i)
                .iter()
                .map(|&j| (j, measurements[j].clone()))
                .collect()
        })
        .collect();

    let mut phase_one: Vec<Corrected> = Vec::with_capacity(n);
    let mut elapsed = Vec::with_capacity(n);
    for (state, delivered) in states.iter().zip(&strips) {
        let start = Instant::now();
        let list: Vec<Strip> = delivered.iter().map(|(_, s)| s.clone()).collect();
        phase_one.push(correct(state, &list, cfg, dynamics)?);
        elapsed.push(start.elapsed());
    }
    let corrected: Vec<Zonotope> = phase_one.iter().map(|c| c.set.clone()).collect();

    let mut outputs = Vec::with_capacity(n);
    for (i, state) in states.iter().enumerate() {
        let start = Instant::now();
        let neighborhood = topology.neighbors(i);
        let shared: Vec<&Zonotope> = neighborhood.iter().map(|&j| &corrected[j]).collect();
        let own_index = neighborhood
            .binary_search(&i)
            .expect("topology validated self-inclusion");
        let mut out = fuse(state.node_id, &shared, own_index, cfg, dynamics)?;
        out.pseudo_inverse_fallback = phase_one[i].pseudo_inverse_fallback;
        outputs.push(RoundOutput {
            step: out,
            compute_time: elapsed[i] + start.elapsed(),
        });
    }

    Ok((
        outputs,
        RoundTrace {
            step,
            strips,
            corrected,
        },
    ))
}
