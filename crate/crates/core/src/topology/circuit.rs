use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use super::{NodeId, QkdnGraph, TopologyError};
use crate::crypto::Qrng;

/// Initiator `P_0` plus hops `P_1..P_{n+1}`; the last hop is the destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    initiator: NodeId,
    hops: Vec<NodeId>,
}

impl Circuit {
    /// Validates adjacency, uniqueness and `n >= 1` against `graph`.
    pub fn new(graph: &QkdnGraph, initiator: NodeId, hops: Vec<NodeId>) -> Result<Self, TopologyError> {
        if hops.len() < 2 {
            return Err(match hops.last() {
                Some(&dst) => TopologyError::RequireIntermediate(initiator, dst),
                None => TopologyError::InvalidCircuit("no hops"),
            });
        }
        let mut seen = BTreeSet::new();
        let mut prev = initiator;
        for &hop in core::iter::once(&initiator).chain(&hops) {
            if !graph.contains(hop) {
                return Err(TopologyError::InvalidCircuit("unknown node in circuit"));
            }
            if !seen.insert(hop) {
                return Err(TopologyError::InvalidCircuit("repeated node"));
            }
        }
        for &hop in &hops {
            if !graph.adjacent(prev, hop) {
                return Err(TopologyError::InvalidCircuit("consecutive hops without a quantum edge"));
            }
            prev = hop;
        }
        Ok(Self { initiator, hops })
    }

    pub fn initiator(&self) -> NodeId {
        self.initiator
    }

    /// `P_1..P_{n+1}`.
    pub fn hops(&self) -> &[NodeId] {
        &self.hops
    }

    pub fn destination(&self) -> NodeId {
        *self.hops.last().unwrap()
    }

    pub fn intermediates(&self) -> &[NodeId] {
        &self.hops[..self.hops.len() - 1]
    }

    /// `n`.
    pub fn intermediate_count(&self) -> usize {
        self.hops.len() - 1
    }

    /// `N = n + 1`.
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    /// `P_0..P_{n+1}`.
    pub fn path(&self) -> Vec<NodeId> {
        core::iter::once(self.initiator).chain(self.hops.iter().copied()).collect()
    }

    /// Position of `node` in `P_0..P_{n+1}`.
    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.path().iter().position(|&p| p == node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CircuitPolicy {
    Shortest,
    /// Self-avoiding random walk with at most `max_intermediates` relays.
    RandomWalk { max_intermediates: usize },
    /// Explicit hops `P_1..P_{n+1}`.
    Fixed(Vec<NodeId>),
}

const WALK_ATTEMPTS: usize = 256;

fn shortest_path(graph: &QkdnGraph, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([src]);
    parent.insert(src, src);
    while let Some(cur) = queue.pop_front() {
        if cur == dst {
            let mut hops = Vec::new();
            let mut at = dst;
            while at != src {
                hops.push(at);
                at = parent[&at];
            }
            hops.reverse();
            return Some(hops);
        }
        for next in graph.neighbors(cur) {
            if let alloc::collections::btree_map::Entry::Vacant(e) = parent.entry(next) {
                e.insert(cur);
                queue.push_back(next);
            }
        }
    }
    None
}

fn random_walk(
    graph: &QkdnGraph,
    src: NodeId,
    dst: NodeId,
    max_intermediates: usize,
    rng: &mut Qrng,
) -> Option<Vec<NodeId>> {
    for _ in 0..WALK_ATTEMPTS {
        let mut visited = BTreeSet::from([src]);
        let mut hops = Vec::new();
        let mut cur = src;
        while hops.len() <= max_intermediates {
            let options: Vec<NodeId> = graph
                .neighbors(cur)
                .filter(|n| !visited.contains(n) && !(hops.is_empty() && *n == dst))
                .collect();
            if options.is_empty() {
                break;
            }
            cur = options[rng.below(options.len())];
            visited.insert(cur);
            hops.push(cur);
            if cur == dst {
                return Some(hops);
            }
        }
    }
    None
}

pub fn select_circuit(
    graph: &QkdnGraph,
    src: NodeId,
    dst: NodeId,
    policy: &CircuitPolicy,
    rng: &mut Qrng,
) -> Result<Circuit, TopologyError> {
    for id in [src, dst] {
        if !graph.contains(id) {
            return Err(TopologyError::InvalidCircuit("endpoint not in graph"));
        }
    }
    if src == dst {
        return Err(TopologyError::SameEndpoints(src));
    }
    let hops = match policy {
        CircuitPolicy::Shortest => shortest_path(graph, src, dst).ok_or(TopologyError::NoPath(src, dst))?,
        CircuitPolicy::RandomWalk { max_intermediates } => {
            if shortest_path(graph, src, dst).is_none() {
                return Err(TopologyError::NoPath(src, dst));
            }
            random_walk(graph, src, dst, *max_intermediates, rng)
                .ok_or(TopologyError::NoPath(src, dst))?
        }
        CircuitPolicy::Fixed(hops) => {
            if hops.last() != Some(&dst) {
                return Err(TopologyError::InvalidCircuit("fixed circuit must end at the destination"));
            }
            hops.clone()
        }
    };
    Circuit::new(graph, src, hops)
}
