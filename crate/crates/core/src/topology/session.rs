//! Signed one-round-trip KEM handshake.
//!
//! ```text
//! init  = I (u32) || T (u32) || ct_len (u32) || ct || Sig_I("qkdn-kem-init" || I || T || ct)
//! reply = T (u32) || I (u32) || confirm (32)   || Sig_T("qkdn-kem-resp" || T || I || H(ct) || confirm)
//! ```
//!
//! `confirm = MAC(key, "confirm")` proves the responder derived the same key.

use alloc::vec::Vec;

use super::{Channel, Network, NodeId, Phase, RunError, WireMessage};
use crate::adversary::ErrorKind;
use crate::crypto::{digest_eq, hash, mac, Digest, KemCiphertext, Signature, SymKey, DIGEST_LEN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("handshake signature rejected at {0}")]
    SignatureRejected(NodeId),
    #[error("no handshake reply reached {0}")]
    NoReply(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

const INIT_LABEL: &[u8] = b"qkdn-kem-init";
const RESP_LABEL: &[u8] = b"qkdn-kem-resp";

fn init_signed_part(i: NodeId, t: NodeId, ct: &[u8]) -> Vec<u8> {
    [INIT_LABEL, &i.to_be_bytes(), &t.to_be_bytes(), ct].concat()
}

fn resp_signed_part(t: NodeId, i: NodeId, ct: &[u8], confirm: &Digest) -> Vec<u8> {
    [RESP_LABEL, &t.to_be_bytes(), &i.to_be_bytes(), &hash(ct), confirm].concat()
}

fn session_context(i: NodeId, t: NodeId) -> Vec<u8> {
    [b"qkdn-session".as_slice(), &i.to_be_bytes(), &t.to_be_bytes()].concat()
}

struct Init {
    initiator: NodeId,
    target: NodeId,
    ct: Vec<u8>,
    sig: Vec<u8>,
}

fn parse_init(bytes: &[u8]) -> Option<Init> {
    let u32_at = |at: usize| Some(u32::from_be_bytes(bytes.get(at..at + 4)?.try_into().ok()?));
    let ct_len = u32_at(8)? as usize;
    let ct = bytes.get(12..12usize.checked_add(ct_len)?)?;
    Some(Init {
        initiator: NodeId(u32_at(0)?),
        target: NodeId(u32_at(4)?),
        ct: ct.to_vec(),
        sig: bytes[12 + ct_len..].to_vec(),
    })
}

/// Pops the next original message addressed to `to`, dropping replays.
fn await_message(net: &mut Network<'_>, to: NodeId) -> Option<WireMessage> {
    while let Some(msg) = net.next_message() {
        if msg.replayed {
            net.record_error(msg.to, ErrorKind::Replay);
            continue;
        }
        if msg.to == to && msg.channel == Channel::Plain {
            return Some(msg);
        }
    }
    None
}

fn reject(net: &mut Network<'_>, at: NodeId) -> RunError {
    net.fail(at, SessionError::SignatureRejected(at).into())
}

/// Establishes `k^PQC` between `initiator` and `target` over the bus and
/// installs it on both sides. Runs in the setup phase.
pub fn kem_session_setup(
    net: &mut Network<'_>,
    initiator: NodeId,
    target: NodeId,
) -> Result<SymKey, RunError> {
    let (i_rec, t_rec) = match (net.graph().node(initiator), net.graph().node(target)) {
        (Some(i), Some(t)) => (i.clone(), t.clone()),
        (None, _) => return Err(SessionError::UnknownNode(initiator).into()),
        (_, None) => return Err(SessionError::UnknownNode(target).into()),
    };
    let prev_phase = net.phase();
    net.set_phase(Phase::Setup);

    let coins = net.rng().draw_seed();
    let (ct, ss) = net.crypto(initiator, |p| p.kem_encapsulate(&t_rec.kem.public, &coins))?;
    let sig_i = net.crypto(initiator, |p| {
        p.sign(&i_rec.sig.signing, &init_signed_part(initiator, target, ct.as_bytes()))
    });
    let mut init = Vec::new();
    init.extend_from_slice(&initiator.to_be_bytes());
    init.extend_from_slice(&target.to_be_bytes());
    init.extend_from_slice(&(ct.len() as u32).to_be_bytes());
    init.extend_from_slice(ct.as_bytes());
    init.extend_from_slice(sig_i.as_bytes());
    net.send_plain(initiator, target, init);

    // responder
    let msg = await_message(net, target).ok_or(SessionError::NoReply(target))?;
    let Some(got) = parse_init(&msg.bytes) else {
        return Err(reject(net, target));
    };
    let ok = got.initiator == initiator
        && got.target == target
        && net.crypto(target, |p| {
            p.verify(
                &i_rec.sig.verifying,
                &init_signed_part(got.initiator, got.target, &got.ct),
                &Signature::new(got.sig.clone()),
            )
        });
    if !ok {
        return Err(reject(net, target));
    }
    let got_ct = KemCiphertext::new(got.ct.clone());
    let Ok(ss_t) = net.crypto(target, |p| p.kem_decapsulate(&t_rec.kem.secret, &got_ct)) else {
        return Err(reject(net, target));
    };
    let key_t = ss_t.session_key(&session_context(initiator, target));
    let confirm = mac(&key_t, b"confirm");
    let sig_t = net.crypto(target, |p| {
        p.sign(&t_rec.sig.signing, &resp_signed_part(target, initiator, &got.ct, &confirm))
    });
    let mut reply = Vec::new();
    reply.extend_from_slice(&target.to_be_bytes());
    reply.extend_from_slice(&initiator.to_be_bytes());
    reply.extend_from_slice(&confirm);
    reply.extend_from_slice(sig_t.as_bytes());
    net.send_plain(target, initiator, reply);

    // initiator
    let msg = await_message(net, initiator).ok_or(SessionError::NoReply(initiator))?;
    let b = &msg.bytes;
    if b.len() < 8 + DIGEST_LEN || b[..4] != target.to_be_bytes() || b[4..8] != initiator.to_be_bytes() {
        return Err(reject(net, initiator));
    }
    let confirm_rx: Digest = b[8..8 + DIGEST_LEN].try_into().unwrap();
    let sig_rx = Signature::new(b[8 + DIGEST_LEN..].to_vec());
    let signed = resp_signed_part(target, initiator, ct.as_bytes(), &confirm_rx);
    let ok = net.crypto(initiator, |p| p.verify(&t_rec.sig.verifying, &signed, &sig_rx));
    let key = ss.session_key(&session_context(initiator, target));
    if !ok || !digest_eq(&mac(&key, b"confirm"), &confirm_rx) {
        return Err(reject(net, initiator));
    }
    net.install_session(initiator, target, key);
    net.set_phase(prev_phase);
    Ok(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::KeyClass;
    use crate::crypto::{DeterministicProvider, Seed};
    use crate::topology::tests::line_spec;
    use crate::topology::{load_topology, TamperSpec, TamperStage};

    fn net(p: &DeterministicProvider) -> Network<'_> {
        let g = load_topology(&line_spec(&["A", "B", "C", "D"], 4), p).unwrap();
        Network::new(p, g, Seed::from_bytes([9; 32]))
    }

    #[test]
    fn honest_setup_agrees_and_keys_differ_per_target() {
        let p = DeterministicProvider;
        let mut n = net(&p);
        let a = NodeId(1);
        let keys: Vec<_> = (2..=4).map(|t| kem_session_setup(&mut n, a, NodeId(t)).unwrap()).collect();
        assert_eq!(n.session_key(NodeId(3), a).unwrap(), keys[1]);
        assert!(keys[0] != keys[1] && keys[1] != keys[2] && keys[0] != keys[2]);
        assert!(n.transcript().errors().next().is_none());
    }

    #[test]
    fn tampered_encapsulation_is_rejected() {
        let p = DeterministicProvider;
        for offset in [0, 5, 13, 40] {
            let mut n = net(&p);
            n.bus_mut().tamper_inject(TamperSpec {
                phase: Phase::Setup,
                message: 1,
                offset,
                mask: 0x04,
                stage: TamperStage::Wire,
            });
            let err = kem_session_setup(&mut n, NodeId(1), NodeId(3)).unwrap_err();
            assert_eq!(err, RunError::Session(SessionError::SignatureRejected(NodeId(3))));
            assert!(n.session_key(NodeId(1), NodeId(3)).is_err());
        }
    }

    #[test]
    fn tampered_reply_is_rejected_by_initiator() {
        let p = DeterministicProvider;
        let mut n = net(&p);
        n.bus_mut().tamper_inject(TamperSpec {
            phase: Phase::Setup,
            message: 2,
            offset: 10,
            mask: 1,
            stage: TamperStage::Wire,
        });
        let err = kem_session_setup(&mut n, NodeId(1), NodeId(2)).unwrap_err();
        assert_eq!(err, RunError::Session(SessionError::SignatureRejected(NodeId(1))));
    }

    #[test]
    fn setup_records_the_kem_class_key_once_per_side() {
        let p = DeterministicProvider;
        let mut n = net(&p);
        let key = kem_session_setup(&mut n, NodeId(1), NodeId(4)).unwrap();
        let holders: Vec<_> = n
            .transcript()
            .events()
            .iter()
            .filter_map(|e| match e {
                crate::adversary::Event::Learn {
                    node,
                    item: crate::adversary::Learned::Key { class: KeyClass::Session, bytes },
                    ..
                } if bytes[..] == key.as_bytes()[..] => Some(*node),
                _ => None,
            })
            .collect();
        assert_eq!(holders, [NodeId(1), NodeId(4)]);
    }
}
