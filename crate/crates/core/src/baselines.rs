//! Key-relay and trusted-node reference protocols, plain and PQC-hybrid.
//!
//! All four use the same link wrapper and bus as the onion protocol so their
//! metrics are directly comparable. The secret is always 32 bytes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::adversary::PlainKind;
use crate::crypto::{CryptoError, SymCiphertext, SymKey, KEY_LEN};
use crate::topology::{kem_session_setup, Channel, Circuit, Network, NodeId, Phase, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("length mismatch: {0} vs {1} bytes")]
pub struct LengthMismatch(pub usize, pub usize);

pub fn xor_bytes(a: &[u8], b: &[u8]) -> Result<Vec<u8>, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

/// OTP contributions along a path whose link keys are `link_keys[i] = k_{i,i+1}`:
/// `S ^ k_01`, then `k_{i-1,i} ^ k_{i,i+1}` for every intermediate.
pub fn tn_contributions(secret: &[u8; KEY_LEN], link_keys: &[SymKey]) -> Vec<[u8; KEY_LEN]> {
    let mut out = Vec::with_capacity(link_keys.len());
    let mut prev = *secret;
    for k in link_keys {
        let mut c = prev;
        for (c, k) in c.iter_mut().zip(k.as_bytes()) {
            *c ^= k;
        }
        out.push(c);
        prev = *k.as_bytes();
    }
    out
}

/// The trusted node's combination: XOR of every contribution.
pub fn tn_combine(contributions: &[[u8; KEY_LEN]]) -> [u8; KEY_LEN] {
    contributions.iter().fold([0; KEY_LEN], |mut acc, c| {
        acc.iter_mut().zip(c).for_each(|(a, b)| *a ^= b);
        acc
    })
}

/// Outcome of a baseline run; delivery itself is recorded in the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineRun {
    pub secret: [u8; KEY_LEN],
}

fn next_on_path(path: &[NodeId], me: NodeId) -> Result<NodeId, RunError> {
    let at = path
        .iter()
        .position(|&p| p == me)
        .ok_or(RunError::Protocol("message reached a node off the path"))?;
    path.get(at + 1).copied().ok_or(RunError::Protocol("no hop after the destination"))
}

fn draw_secret(net: &mut Network<'_>, initiator: NodeId) -> [u8; KEY_LEN] {
    let secret = *net.rng().draw_key().as_bytes();
    net.learn_plain(initiator, PlainKind::Secret, &secret);
    secret
}

fn relay(net: &mut Network<'_>, circuit: &Circuit, first_payload: Vec<u8>, hybrid: Option<SymKey>) -> Result<(), RunError> {
    let path = circuit.path();
    let (src, dst) = (circuit.initiator(), circuit.destination());
    net.send_link(src, path[1], &first_payload).map_err(|e| net.fail(src, e))?;
    net.drive(|net, msg| {
        let me = msg.to;
        let payload = net.open_link(&msg)?;
        if me != dst {
            return net.send_link(me, next_on_path(&path, me)?, &payload);
        }
        let secret = match hybrid {
            None => payload,
            Some(k) => {
                let ct = SymCiphertext::from_bytes(&payload)?;
                let s = net.crypto(me, |p| p.sym_decrypt(&k, &ct))?;
                net.learn_plain(me, PlainKind::Payload, &s);
                s
            }
        };
        net.deliver(me, &secret);
        Ok(())
    })
}

/// Hop-by-hop relay: every node decrypts `S` and re-encrypts it for the next link.
pub fn keyrelay_run(net: &mut Network<'_>, circuit: &Circuit) -> Result<BaselineRun, RunError> {
    net.set_phase(Phase::Delivery);
    let secret = draw_secret(net, circuit.initiator());
    relay(net, circuit, secret.to_vec(), None)?;
    Ok(BaselineRun { secret })
}

/// Relay of `E(k^PQC_{0,D}, S)`: one PQC encryption and one decryption in total.
pub fn keyrelay_hybrid_run(net: &mut Network<'_>, circuit: &Circuit) -> Result<BaselineRun, RunError> {
    let (src, dst) = (circuit.initiator(), circuit.destination());
    let key = kem_session_setup(net, src, dst)?;
    net.set_phase(Phase::Delivery);
    let secret = draw_secret(net, src);
    let iv = net.rng().draw_iv();
    let ct = net.crypto(src, |p| p.sym_encrypt(&key, &secret, iv));
    relay(net, circuit, ct.to_bytes(), Some(key))?;
    Ok(BaselineRun { secret })
}

fn tn_message(contributor: NodeId, payload: &[u8]) -> Vec<u8> {
    [contributor.to_be_bytes().as_slice(), payload].concat()
}

fn tn_common(net: &mut Network<'_>, circuit: &Circuit, tn: NodeId, hybrid: bool) -> Result<BaselineRun, RunError> {
    if !net.graph().contains(tn) {
        return Err(RunError::Protocol("trusted node is not in the graph"));
    }
    let path = circuit.path();
    let (src, dst) = (circuit.initiator(), circuit.destination());
    let contributors: Vec<NodeId> = path[..path.len() - 1].to_vec();

    let mut sessions: BTreeMap<NodeId, SymKey> = BTreeMap::new();
    if hybrid {
        for &c in contributors.iter().chain(core::iter::once(&dst)) {
            if c != tn {
                sessions.insert(c, kem_session_setup(net, c, tn)?);
            }
        }
    }

    net.set_phase(Phase::Delivery);
    let secret = draw_secret(net, src);
    let mut link_keys = Vec::with_capacity(contributors.len());
    for w in path.windows(2) {
        link_keys.push(net.draw_link_key(w[0], w[1]).map_err(|e| net.fail(w[0], e))?);
    }
    let k_last = link_keys[link_keys.len() - 1];
    let contributions = tn_contributions(&secret, &link_keys);

    let mut collected: BTreeMap<NodeId, [u8; KEY_LEN]> = BTreeMap::new();
    for (&c, contribution) in contributors.iter().zip(&contributions) {
        if c == tn {
            collected.insert(c, *contribution);
            continue;
        }
        let payload = match sessions.get(&c) {
            Some(k) => {
                let iv = net.rng().draw_iv();
                net.crypto(c, |p| p.sym_encrypt(k, contribution, iv)).to_bytes()
            }
            None => contribution.to_vec(),
        };
        net.send_plain(c, tn, tn_message(c, &payload));
    }

    let expected = contributors.len();
    let finish = |net: &mut Network<'_>, collected: &BTreeMap<NodeId, [u8; KEY_LEN]>| -> Result<(), RunError> {
        let all: Vec<[u8; KEY_LEN]> = collected.values().copied().collect();
        let combined = tn_combine(&all);
        net.learn_plain(tn, PlainKind::Payload, &combined);
        if tn == dst {
            let s = xor_bytes(&combined, k_last.as_bytes()).unwrap();
            net.deliver(dst, &s);
            return Ok(());
        }
        let payload = match sessions.get(&dst) {
            Some(k) => {
                let iv = net.rng().draw_iv();
                net.crypto(tn, |p| p.sym_encrypt(k, &combined, iv)).to_bytes()
            }
            None => combined.to_vec(),
        };
        net.send_plain(tn, dst, tn_message(tn, &payload));
        Ok(())
    };
    if collected.len() == expected {
        finish(net, &collected)?;
    }

    net.drive(|net, msg| {
        if msg.channel != Channel::Plain || msg.bytes.len() < 4 {
            return Err(RunError::Protocol("unexpected message in trusted-node run"));
        }
        let sender = NodeId(u32::from_be_bytes(msg.bytes[..4].try_into().unwrap()));
        let body = &msg.bytes[4..];
        let me = msg.to;
        let plain = match sessions.get(if me == tn { &sender } else { &me }) {
            Some(k) if hybrid => {
                let ct = SymCiphertext::from_bytes(body)?;
                let pt = net.crypto(me, |p| p.sym_decrypt(k, &ct))?;
                net.learn_plain(me, PlainKind::Payload, &pt);
                pt
            }
            _ => body.to_vec(),
        };
        let value: [u8; KEY_LEN] = plain
            .as_slice()
            .try_into()
            .map_err(|_| RunError::Crypto(CryptoError::MalformedCiphertext))?;
        if me == tn && sender != tn {
            if collected.insert(sender, value).is_some() {
                return Err(RunError::Replay);
            }
            if collected.len() == expected {
                finish(net, &collected)?;
            }
            Ok(())
        } else if me == dst && sender == tn {
            let s = xor_bytes(&value, k_last.as_bytes()).unwrap();
            net.deliver(dst, &s);
            Ok(())
        } else {
            Err(RunError::Protocol("unexpected message in trusted-node run"))
        }
    })?;
    Ok(BaselineRun { secret })
}

/// Trusted-node model: OTP contributions in the clear to `tn`, which forwards `S ^ k_last`.
pub fn tn_run(net: &mut Network<'_>, circuit: &Circuit, tn: NodeId) -> Result<BaselineRun, RunError> {
    tn_common(net, circuit, tn, false)
}

/// Trusted-node model with every contribution and the combined value wrapped
/// under PQC session keys shared with `tn`.
pub fn tn_hybrid_run(net: &mut Network<'_>, circuit: &Circuit, tn: NodeId) -> Result<BaselineRun, RunError> {
    tn_common(net, circuit, tn, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Qrng, Seed};

    #[test]
    fn xor_basics() {
        let m = [7u8; 32];
        assert_eq!(xor_bytes(&m, &[0; 32]).unwrap(), m);
        assert_eq!(xor_bytes(&m, &m).unwrap(), [0; 32]);
        assert_eq!(xor_bytes(&m, &[0; 31]), Err(LengthMismatch(32, 31)));
    }

    #[test]
    fn combination_is_secret_xor_last_key() {
        let mut rng = Qrng::from_seed(Seed::from_bytes([5; 32]));
        for hops in 1..6 {
            let s = *rng.draw_key().as_bytes();
            let keys: Vec<SymKey> = (0..hops).map(|_| rng.draw_key()).collect();
            let c = tn_combine(&tn_contributions(&s, &keys));
            assert_eq!(c.to_vec(), xor_bytes(&s, keys.last().unwrap().as_bytes()).unwrap());
        }
    }
}
