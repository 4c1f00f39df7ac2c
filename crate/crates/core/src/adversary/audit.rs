use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::closure::{Closure, Derivation};
use super::{Event, KnowledgeSet, Learned, Party, PlainKind, Transcript};
use crate::crypto::CryptoProvider;
use crate::onion::{LayerKind, LayerPlain, OnionParams};
use crate::topology::{NodeId, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Initiator,
    Destination,
    /// A coalition that includes an endpoint.
    Endpoint,
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Initiator => "initiator",
            Role::Destination => "destination",
            Role::Endpoint => "endpoint",
            Role::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecrecyVerdict {
    pub party: Party,
    pub role: Role,
    pub derivable: bool,
    /// Rendered derivation path when `derivable`.
    pub path: Option<String>,
    /// The derivation re-executed successfully from the party's base items.
    pub replayed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityView {
    pub node: NodeId,
    pub view: BTreeSet<NodeId>,
    /// `{predecessor, self, successor}` when the node is on the path.
    pub allowed: Option<BTreeSet<NodeId>>,
}

impl IdentityView {
    pub fn within_bound(&self) -> Option<bool> {
        self.allowed.as_ref().map(|a| self.view.is_subset(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub attack: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub secrecy: Vec<SecrecyVerdict>,
    pub anonymity: Vec<IdentityView>,
    pub attacks: Vec<AttackOutcome>,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn ids(set: &BTreeSet<NodeId>) -> String {
    set.iter().map(|n| format!("{}", n.0)).collect::<Vec<_>>().join(",")
}

impl AuditReport {
    /// One record per line; identical reports serialize identically.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.secrecy {
            out.push_str(&format!(
                "secrecy party={} role={} derivable={}",
                v.party.label(),
                v.role.as_str(),
                yes_no(v.derivable)
            ));
            if let Some(p) = &v.path {
                out.push_str(&format!(" replayed={} path={p}", yes_no(v.replayed)));
            }
            out.push('\n');
        }
        for a in &self.anonymity {
            out.push_str(&format!("anonymity node={} view={}", a.node.0, ids(&a.view)));
            if let (Some(allowed), Some(ok)) = (&a.allowed, a.within_bound()) {
                out.push_str(&format!(" allowed={} within-bound={}", ids(allowed), yes_no(ok)));
            }
            out.push('\n');
        }
        for a in &self.attacks {
            out.push_str(&format!("attack {} outcome={}\n", a.attack, a.outcome));
        }
        out
    }

    /// Verdicts for parties that are not endpoints and nonetheless derive `S`.
    pub fn non_endpoint_leaks(&self) -> Vec<&SecrecyVerdict> {
        self.secrecy
            .iter()
            .filter(|v| v.derivable && v.role == Role::Other)
            .collect()
    }

    pub fn verdict(&self, party: &Party) -> Option<&SecrecyVerdict> {
        self.secrecy.iter().find(|v| &v.party == party)
    }
}

/// Audit settings: closure depth and, for onion runs, the sizes needed to
/// parse extended onions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditParams {
    pub depth: usize,
    pub onion: Option<OnionParams>,
}

impl Default for AuditParams {
    fn default() -> Self {
        Self {
            depth: super::closure::DEFAULT_DEPTH,
            onion: None,
        }
    }
}

/// Decides, for one party, whether `secret` is derivable from its knowledge.
pub fn party_verdict(
    provider: &dyn CryptoProvider,
    transcript: &Transcript,
    party: &Party,
    role: Role,
    secret: &[u8],
    node_count: u32,
    params: &AuditParams,
) -> SecrecyVerdict {
    let ks = KnowledgeSet::for_party(transcript, party);
    let mut closure = Closure::new(provider, params.onion, node_count, &ks);
    let direct = closure.find(secret);
    let found: Option<Derivation> = direct.or_else(|| {
        closure.saturate(params.depth);
        closure.find(secret)
    });
    let (path, replayed) = match &found {
        Some(d) => (Some(closure.describe(d)), closure.replay(d, secret)),
        None => (None, false),
    };
    SecrecyVerdict {
        party: party.clone(),
        role,
        derivable: found.is_some(),
        path,
        replayed,
    }
}

/// Per-node verdicts for every node of the run, then the bus tap, then the
/// attacker coalition (bus tap plus compromised nodes) when any node was
/// compromised.
pub fn secrecy_audit(
    provider: &dyn CryptoProvider,
    transcript: &Transcript,
    nodes: &[NodeId],
    endpoints: (NodeId, NodeId),
    secret: &[u8],
    params: &AuditParams,
) -> Vec<SecrecyVerdict> {
    let role = |n: NodeId| {
        if n == endpoints.0 {
            Role::Initiator
        } else if n == endpoints.1 {
            Role::Destination
        } else {
            Role::Other
        }
    };
    let node_count = nodes.iter().map(|n| n.0).max().unwrap_or(0);
    let compromised: BTreeSet<NodeId> = transcript.compromised().collect();
    let mut parties: Vec<(Party, Role)> = nodes.iter().map(|&n| (Party::Node(n), role(n))).collect();
    parties.push((Party::BusTap, Role::Other));
    if !compromised.is_empty() {
        let endpoint_inside = compromised.contains(&endpoints.0) || compromised.contains(&endpoints.1);
        parties.push((Party::Attacker, if endpoint_inside { Role::Endpoint } else { Role::Other }));
    }
    parties
        .into_iter()
        .map(|(p, r)| party_verdict(provider, transcript, &p, r, secret, node_count, params))
        .collect()
}

/// Node identities each node can see during delivery: bus peers it
/// exchanged messages with plus next hops named in onion layers it peeled.
/// `path` (initiator first) adds the neighbour bound for on-path nodes.
pub fn anonymity_audit(transcript: &Transcript, nodes: &[NodeId], path: Option<&[NodeId]>) -> Vec<IdentityView> {
    nodes
        .iter()
        .map(|&node| {
            let mut view = BTreeSet::from([node]);
            for e in transcript.events() {
                match e {
                    Event::Send { phase: Phase::Delivery, from, to, .. } if *from == node || *to == node => {
                        view.insert(*from);
                        view.insert(*to);
                    }
                    Event::Learn {
                        node: n,
                        phase: Phase::Delivery,
                        item: Learned::Plaintext { kind: PlainKind::Layer, bytes },
                    } if *n == node => {
                        if let Ok(LayerPlain { kind: LayerKind::Forward, next_hop, .. }) = LayerPlain::parse(bytes) {
                            view.insert(next_hop);
                        }
                    }
                    _ => {}
                }
            }
            let allowed = path.and_then(|p| {
                let at = p.iter().position(|&x| x == node)?;
                let mut a = BTreeSet::from([node]);
                if at > 0 {
                    a.insert(p[at - 1]);
                }
                if let Some(&next) = p.get(at + 1) {
                    a.insert(next);
                }
                Some(a)
            });
            IdentityView { node, view, allowed }
        })
        .collect()
}
