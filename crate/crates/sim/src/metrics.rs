//! Operation counters and the weighted latency proxy.

use std::collections::BTreeMap;

use qkdn_core::adversary::{Event, Transcript};
use qkdn_core::crypto::OpKind;
use qkdn_core::topology::{NodeId, Phase, QkdnGraph};
use serde::Serialize;

use crate::config::Weights;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub kem_ops: u64,
    /// Symmetric encryptions, padded and raw.
    pub sym_encrypts: u64,
    pub sym_decrypts: u64,
    /// Symmetric operations under a PQC session key.
    pub pqc_sym_ops: u64,
    pub signs: u64,
    pub verifies: u64,
    pub link_ops: u64,
    pub link_keys_consumed: u64,
    pub bus_messages: u64,
    pub bus_bytes: u64,
}

impl Counts {
    fn op(&mut self, kind: OpKind, session_key: bool) {
        match kind {
            OpKind::KemEncapsulate | OpKind::KemDecapsulate => self.kem_ops += 1,
            OpKind::SymEncrypt | OpKind::RawEncrypt => self.sym_encrypts += 1,
            OpKind::SymDecrypt | OpKind::RawDecrypt => self.sym_decrypts += 1,
            OpKind::Sign => self.signs += 1,
            OpKind::Verify => self.verifies += 1,
            OpKind::LinkSeal | OpKind::LinkVerify | OpKind::LinkDecrypt => self.link_ops += 1,
        }
        if session_key && matches!(
            kind,
            OpKind::SymEncrypt | OpKind::SymDecrypt | OpKind::RawEncrypt | OpKind::RawDecrypt
        ) {
            self.pqc_sym_ops += 1;
        }
    }

    fn add(&mut self, o: &Counts) {
        self.kem_ops += o.kem_ops;
        self.sym_encrypts += o.sym_encrypts;
        self.sym_decrypts += o.sym_decrypts;
        self.pqc_sym_ops += o.pqc_sym_ops;
        self.signs += o.signs;
        self.verifies += o.verifies;
        self.link_ops += o.link_ops;
        self.link_keys_consumed += o.link_keys_consumed;
        self.bus_messages += o.bus_messages;
        self.bus_bytes += o.bus_bytes;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeLatency {
    pub node: String,
    pub setup: u64,
    pub delivery: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub protocol: String,
    /// `n`, relays between the endpoints.
    pub intermediates: usize,
    pub total: Counts,
    pub setup: Counts,
    pub delivery: Counts,
    /// Weighted op count summed over all nodes, delivery phase.
    pub latency: u64,
    pub setup_latency: u64,
    /// One entry per path node, initiator first.
    pub per_hop: Vec<NodeLatency>,
    /// First 8 bytes of SHA-256 of the run's `S`, hex; empty if none was drawn.
    pub secret_sha256: String,
}

pub fn op_weight(w: &Weights, kind: OpKind) -> u64 {
    match kind {
        OpKind::KemEncapsulate => w.kem_encapsulate,
        OpKind::KemDecapsulate => w.kem_decapsulate,
        OpKind::SymEncrypt => w.sym_encrypt,
        OpKind::SymDecrypt => w.sym_decrypt,
        OpKind::RawEncrypt => w.raw_encrypt,
        OpKind::RawDecrypt => w.raw_decrypt,
        OpKind::Sign => w.sign,
        OpKind::Verify => w.verify,
        OpKind::LinkSeal => w.link_seal,
        OpKind::LinkVerify => w.link_verify,
        OpKind::LinkDecrypt => w.link_decrypt,
    }
}

/// Derives the counters from a transcript. Link-key draws carry no phase of
/// their own and are attributed to the phase of the preceding event.
pub fn collect(
    transcript: &Transcript,
    graph: &QkdnGraph,
    path: &[NodeId],
    weights: &Weights,
    protocol: &str,
    secret: Option<&[u8]>,
) -> Metrics {
    let mut setup = Counts::default();
    let mut delivery = Counts::default();
    let mut latency: BTreeMap<NodeId, (u64, u64)> = BTreeMap::new();
    let mut current = Phase::Setup;
    for e in transcript.events() {
        let phase = match e {
            Event::Send { phase, .. } | Event::CryptoOp { phase, .. } | Event::Learn { phase, .. } | Event::Error { phase, .. } => {
                current = *phase;
                *phase
            }
            _ => current,
        };
        let counts = match phase {
            Phase::Setup => &mut setup,
            Phase::Delivery => &mut delivery,
        };
        match e {
            Event::Send { bytes, .. } => {
                counts.bus_messages += 1;
                counts.bus_bytes += bytes.len() as u64;
            }
            Event::LinkConsume { .. } => counts.link_keys_consumed += 1,
            Event::CryptoOp { node, kind, session_key, .. } => {
                counts.op(*kind, *session_key);
                let slot = latency.entry(*node).or_default();
                let w = op_weight(weights, *kind);
                match phase {
                    Phase::Setup => slot.0 += w,
                    Phase::Delivery => slot.1 += w,
                }
            }
            _ => {}
        }
    }
    let mut total = setup;
    total.add(&delivery);
    let per_hop = path
        .iter()
        .map(|n| {
            let (s, d) = latency.get(n).copied().unwrap_or_default();
            NodeLatency {
                node: graph.label(*n).to_string(),
                setup: s,
                delivery: d,
            }
        })
        .collect();
    Metrics {
        protocol: protocol.to_string(),
        intermediates: path.len().saturating_sub(2),
        total,
        setup,
        delivery,
        latency: latency.values().map(|v| v.1).sum(),
        setup_latency: latency.values().map(|v| v.0).sum(),
        per_hop,
        secret_sha256: secret.map_or_else(String::new, |s| hex::encode(&qkdn_core::crypto::hash(s)[..8])),
    }
}
