//! QKDN graph, circuits, the classical bus and KEM session establishment.

mod bus;
mod circuit;
mod network;
mod session;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{kdf, CryptoProvider, KemKeyPair, Seed, SigKeyPair, SymKey};
use crate::qkd_link::{LinkError, LinkPools};

pub use bus::{Channel, ClassicalBus, Phase, ReplaySpec, TamperSpec, TamperStage, WireMessage};
pub use circuit::{select_circuit, Circuit, CircuitPolicy};
pub use network::{Network, RunError};
pub use session::{kem_session_setup, SessionError};

/// Node identity: a 4-byte ordinal, unique within a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("edge references unknown node `{0}`")]
    DanglingEdge(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("link: {0}")]
    Link(#[from] LinkError),
    #[error("no path from {0} to {1}")]
    NoPath(NodeId, NodeId),
    #[error("circuit from {0} to {1} needs at least one intermediate node")]
    RequireIntermediate(NodeId, NodeId),
    #[error("source and destination coincide ({0})")]
    SameEndpoints(NodeId),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSpec {
    pub a: String,
    pub b: String,
    pub pool_size: usize,
}

/// Declarative topology: labelled nodes and quantum edges with pool sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologySpec {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    pub seed: Seed,
}

/// Static key material every node holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub label: String,
    pub kem: KemKeyPair,
    pub sig: SigKeyPair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdnGraph {
    nodes: BTreeMap<NodeId, NodeRecord>,
    labels: BTreeMap<String, NodeId>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub pools: LinkPools,
}

fn derived_seed(root: &Seed, context: &[&[u8]]) -> Seed {
    kdf(&context.concat(), &SymKey::from_bytes(*root.as_bytes()))
}

/// Builds the graph: assigns ordinals 1.. in declaration order, generates
/// static KEM and signature keypairs and provisions every link pool, all
/// from the topology seed.
pub fn load_topology(
    spec: &TopologySpec,
    provider: &dyn CryptoProvider,
) -> Result<QkdnGraph, TopologyError> {
    if spec.nodes.is_empty() {
        return Err(TopologyError::Parse("node list is empty".into()));
    }
    let mut graph = QkdnGraph {
        nodes: BTreeMap::new(),
        labels: BTreeMap::new(),
        adjacency: BTreeMap::new(),
        pools: LinkPools::default(),
    };
    for (i, label) in spec.nodes.iter().enumerate() {
        if label.is_empty() {
            return Err(TopologyError::Parse("empty node label".into()));
        }
        let id = NodeId(i as u32 + 1);
        if graph.labels.insert(label.clone(), id).is_some() {
            return Err(TopologyError::DuplicateNode(label.clone()));
        }
        let kem = provider.kem_keygen(&derived_seed(&spec.seed, &[b"node-kem", &id.to_be_bytes()]));
        let sig = provider.sig_keygen(&derived_seed(&spec.seed, &[b"node-sig", &id.to_be_bytes()]));
        graph.nodes.insert(
            id,
            NodeRecord {
                id,
                label: label.clone(),
                kem,
                sig,
            },
        );
        graph.adjacency.insert(id, BTreeSet::new());
    }
    for edge in &spec.edges {
        let a = graph.resolve(&edge.a).ok_or_else(|| TopologyError::DanglingEdge(edge.a.clone()))?;
        let b = graph.resolve(&edge.b).ok_or_else(|| TopologyError::DanglingEdge(edge.b.clone()))?;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let seed = derived_seed(&spec.seed, &[b"link-pool", &lo.to_be_bytes(), &hi.to_be_bytes()]);
        graph.pools.provision_pool(a, b, edge.pool_size, seed)?;
        graph.adjacency.entry(a).or_default().insert(b);
        graph.adjacency.entry(b).or_default().insert(a);
    }
    Ok(graph)
}

impl QkdnGraph {
    pub fn resolve(&self, label: &str) -> Option<NodeId> {
        self.labels.get(label).copied()
    }

    pub fn require(&self, label: &str) -> Result<NodeId, TopologyError> {
        self.resolve(label)
            .ok_or_else(|| TopologyError::UnknownNode(label.into()))
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    pub fn label(&self, id: NodeId) -> &str {
        self.nodes.get(&id).map(|n| n.label.as_str()).unwrap_or("?")
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Neighbours in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }
}
