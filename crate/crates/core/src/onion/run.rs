use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{build_onion, process_onion, BuildOutput, ExtendedOnion, HopAction, NodeContext, OnionParams};
use crate::adversary::{KeyClass, PlainKind};
use crate::crypto::SymKey;
use crate::topology::{kem_session_setup, Circuit, Network, NodeId, Phase, RunError};

/// Result of a networked onion run.
#[derive(Debug, Clone)]
pub struct OnionRun {
    pub build: BuildOutput,
    /// Every accepted hop in processing order.
    pub hops: Vec<(NodeId, HopAction)>,
}

/// Runs the onion protocol for `circuit` over `net`.
///
/// The initiator first establishes a session key with every other node of
/// the graph, so the setup traffic says nothing about which nodes the
/// circuit uses. The onion is then built, link-wrapped to `P_1`, and relayed
/// until the bus drains.
pub fn onion_run(net: &mut Network<'_>, circuit: &Circuit, params: &OnionParams) -> Result<OnionRun, RunError> {
    let initiator = circuit.initiator();
    let peers: Vec<NodeId> = net.graph().node_ids().filter(|&id| id != initiator).collect();
    for peer in peers {
        kem_session_setup(net, initiator, peer)?;
    }
    let mut session_of: BTreeMap<NodeId, SymKey> = BTreeMap::new();
    for id in net.graph().node_ids().filter(|&id| id != initiator) {
        session_of.insert(id, net.session_key(initiator, id)?);
    }
    let keys: Vec<SymKey> = circuit.hops().iter().map(|h| session_of[h]).collect();

    net.set_phase(Phase::Delivery);
    let mut rng = net.rng().fork();
    let build = net
        .crypto(initiator, |p| build_onion(p, circuit, &keys, params, &mut rng))
        .map_err(|e| net.fail(initiator, e.into()))?;
    net.learn_plain(initiator, PlainKind::Secret, &build.secret);
    for k in &build.one_time_keys {
        net.learn_key(initiator, KeyClass::OneTime, k.as_bytes());
    }
    net.learn_key(initiator, KeyClass::Ephemeral, build.ephemeral.signing.as_bytes());
    let first = circuit.hops()[0];
    net.send_link(initiator, first, &build.first.to_bytes())
        .map_err(|e| net.fail(initiator, e))?;

    let mut contexts: BTreeMap<NodeId, NodeContext> = session_of
        .iter()
        .map(|(&id, &k)| (id, NodeContext::new(id, k, *params)))
        .collect();
    let destination = circuit.destination();
    let mut accepted = Vec::new();
    net.drive(|net, msg| {
        let me = msg.to;
        let payload = net.open_link(&msg)?;
        let onion = ExtendedOnion::from_bytes(&payload, params)?;
        let ctx = contexts.get_mut(&me).ok_or(RunError::MissingSession(initiator, me))?;
        let done = net.crypto(me, |p| process_onion(p, ctx, &onion))?;
        net.learn_plain(me, PlainKind::Layer, &done.layer);
        net.learn_key(me, KeyClass::OneTime, done.head.key.as_bytes());
        match &done.action {
            HopAction::Forward { next_hop, onion } => {
                net.send_link(me, *next_hop, &onion.to_bytes())?;
            }
            HopAction::Deliver { secret } => {
                if me != destination {
                    return Err(RunError::Protocol("onion delivered at a node other than the destination"));
                }
                net.deliver(me, secret);
            }
        }
        accepted.push((me, done.action));
        Ok(())
    })?;
    Ok(OnionRun { build, hops: accepted })
}
