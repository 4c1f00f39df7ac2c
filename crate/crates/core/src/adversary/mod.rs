//! Transcripts, knowledge sets, attack injection and the secrecy and
//! anonymity audits.

mod audit;
mod closure;
mod knowledge;
mod transcript;

pub use audit::{
    anonymity_audit, party_verdict, secrecy_audit, AttackOutcome, AuditParams, AuditReport,
    IdentityView, Role, SecrecyVerdict,
};
pub use closure::{apply_rule, Closure, Derivation, Item, Origin, Rule, Step, DEFAULT_DEPTH};
pub use knowledge::{KnowledgeSet, Observed, Party};
pub use transcript::{ErrorKind, Event, KeyClass, Learned, PlainKind, Transcript};

use crate::topology::{ClassicalBus, Network, NodeId, ReplaySpec, TamperSpec, TopologyError, WireMessage};

/// Installs a bit-flip on one future bus message.
pub fn tamper_inject(bus: &mut ClassicalBus, spec: TamperSpec) {
    bus.tamper_inject(spec);
}

/// Schedules a verbatim re-delivery of one future bus message.
pub fn schedule_replay(bus: &mut ClassicalBus, spec: ReplaySpec) {
    bus.schedule_replay(spec);
}

/// Re-queues a message that was already delivered.
pub fn replay_inject(bus: &mut ClassicalBus, recorded: &WireMessage) {
    bus.replay_inject(recorded);
}

/// Honest-but-curious compromise: the node keeps following the protocol and
/// everything it holds joins the attacker's knowledge.
pub fn compromise_node(net: &mut Network<'_>, node: NodeId) -> Result<(), TopologyError> {
    net.compromise(node)
}
