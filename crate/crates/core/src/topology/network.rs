use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{Channel, ClassicalBus, NodeId, Phase, QkdnGraph, SessionError, TopologyError, WireMessage};
use crate::adversary::{ErrorKind, Event, KeyClass, Learned, PlainKind, Transcript};
use crate::crypto::{hash, CryptoError, CryptoProvider, Metered, OpKind, Qrng, Seed, SymKey};
use crate::onion::OnionError;
use crate::qkd_link::{link_wrap, LinkEnvelope, LinkError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("link: {0}")]
    Link(#[from] LinkError),
    #[error("session: {0}")]
    Session(#[from] SessionError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("onion: {0}")]
    Onion(#[from] OnionError),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("no session key between {0} and {1}")]
    MissingSession(NodeId, NodeId),
    #[error("duplicate message")]
    Replay,
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
}

impl RunError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            RunError::Link(LinkError::PoolExhausted(..)) => ErrorKind::PoolExhausted,
            RunError::Link(
                LinkError::AuthenticationFailure | LinkError::IndexOutOfRange(_) | LinkError::Malformed,
            ) => ErrorKind::AuthenticationFailure,
            RunError::Session(_) => ErrorKind::SignatureRejected,
            RunError::Onion(e) => e.kind(),
            RunError::Replay => ErrorKind::Replay,
            RunError::Crypto(CryptoError::MalformedCiphertext | CryptoError::Unaligned(_)) => {
                ErrorKind::LayerMalformed
            }
            _ => ErrorKind::Protocol,
        }
    }
}

/// One simulation run: graph, bus, transcript and the seeded randomness
/// stream. All protocol runners drive the network through this type so every
/// send, key use and decryption lands in the transcript.
pub struct Network<'p> {
    provider: &'p dyn CryptoProvider,
    graph: QkdnGraph,
    bus: ClassicalBus,
    transcript: Transcript,
    rng: Qrng,
    phase: Phase,
    sessions: BTreeMap<(NodeId, NodeId), SymKey>,
    session_set: BTreeSet<SymKey>,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<'p> Network<'p> {
    /// Every node starts out holding its own static secret keys.
    pub fn new(provider: &'p dyn CryptoProvider, graph: QkdnGraph, seed: Seed) -> Self {
        let mut transcript = Transcript::new();
        for id in graph.node_ids() {
            let rec = graph.node(id).unwrap();
            for (class, bytes) in [
                (KeyClass::StaticKem, rec.kem.secret.as_bytes()),
                (KeyClass::StaticSig, rec.sig.signing.as_bytes()),
            ] {
                transcript.push(Event::Learn {
                    node: id,
                    phase: Phase::Setup,
                    item: Learned::Key { class, bytes: bytes.to_vec() },
                });
            }
        }
        Self {
            provider,
            graph,
            bus: ClassicalBus::new(),
            transcript,
            rng: Qrng::from_seed(seed),
            phase: Phase::Setup,
            sessions: BTreeMap::new(),
            session_set: BTreeSet::new(),
        }
    }

    pub fn provider(&self) -> &'p dyn CryptoProvider {
        self.provider
    }

    pub fn graph(&self) -> &QkdnGraph {
        &self.graph
    }

    pub fn bus_mut(&mut self) -> &mut ClassicalBus {
        &mut self.bus
    }

    pub fn rng(&mut self) -> &mut Qrng {
        &mut self.rng
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (QkdnGraph, ClassicalBus, Transcript) {
        (self.graph, self.bus, self.transcript)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Marks `node` as leaking everything it holds to the adversary.
    pub fn compromise(&mut self, node: NodeId) -> Result<(), TopologyError> {
        if !self.graph.contains(node) {
            return Err(TopologyError::UnknownNode(alloc::format!("{node}")));
        }
        self.transcript.push(Event::Compromise { node });
        Ok(())
    }

    pub fn learn(&mut self, node: NodeId, item: Learned) {
        let phase = self.phase;
        self.transcript.push(Event::Learn { node, phase, item });
    }

    pub fn learn_key(&mut self, node: NodeId, class: KeyClass, bytes: &[u8]) {
        self.learn(node, Learned::Key { class, bytes: bytes.to_vec() });
    }

    pub fn learn_plain(&mut self, node: NodeId, kind: PlainKind, bytes: &[u8]) {
        self.learn(node, Learned::Plaintext { kind, bytes: bytes.to_vec() });
    }

    pub fn record_error(&mut self, node: NodeId, kind: ErrorKind) {
        let phase = self.phase;
        self.transcript.push(Event::Error { node, phase, kind });
    }

    /// Logs `e` against `node` and hands it back for propagation.
    pub fn fail(&mut self, node: NodeId, e: RunError) -> RunError {
        self.record_error(node, e.kind());
        e
    }

    pub fn deliver(&mut self, node: NodeId, secret: &[u8]) {
        self.learn_plain(node, PlainKind::Secret, secret);
        self.transcript.push(Event::Deliver { node, digest: hash(secret) });
    }

    /// Runs `f` against a metered provider and logs the operations as `node`'s.
    pub fn crypto<R>(&mut self, node: NodeId, f: impl FnOnce(&dyn CryptoProvider) -> R) -> R {
        let (out, log) = {
            let metered = Metered::new(self.provider, &self.session_set);
            let out = f(&metered);
            (out, metered.take())
        };
        for rec in log {
            self.op(node, rec.kind, rec.session_key);
        }
        out
    }

    fn op(&mut self, node: NodeId, kind: OpKind, session_key: bool) {
        let phase = self.phase;
        self.transcript.push(Event::CryptoOp { node, phase, kind, session_key });
    }

    pub fn install_session(&mut self, a: NodeId, b: NodeId, key: SymKey) {
        self.sessions.insert(pair(a, b), key);
        self.session_set.insert(key);
        self.learn_key(a, KeyClass::Session, key.as_bytes());
        self.learn_key(b, KeyClass::Session, key.as_bytes());
    }

    pub fn session_key(&self, a: NodeId, b: NodeId) -> Result<SymKey, RunError> {
        self.sessions.get(&pair(a, b)).copied().ok_or(RunError::MissingSession(a, b))
    }

    pub fn send_plain(&mut self, from: NodeId, to: NodeId, bytes: Vec<u8>) {
        let phase = self.phase;
        self.bus.send(phase, from, to, Channel::Plain, bytes);
    }

    /// Wraps `payload` under the next key of the `from`-`to` pool and queues it.
    pub fn send_link(&mut self, from: NodeId, to: NodeId, payload: &[u8]) -> Result<(), RunError> {
        let pool = self
            .graph
            .pools
            .get_mut(from, to)
            .ok_or(LinkError::NoSuchLink(from, to))?;
        let (index, key) = pool.next_link_key(from)?;
        self.transcript.push(Event::LinkConsume { from, to, index });
        self.learn_key(from, KeyClass::Link, key.as_bytes());
        let iv = self.rng.draw_iv();
        let env = link_wrap(self.provider, &key, index, payload, iv)?;
        self.op(from, OpKind::LinkSeal, false);
        let phase = self.phase;
        self.bus.send(phase, from, to, Channel::Link, env.to_bytes());
        Ok(())
    }

    /// Consumes one pool key of the `a`-`b` link for use outside the link
    /// wrapper (OTP contributions). Both endpoints learn it.
    pub fn draw_link_key(&mut self, a: NodeId, b: NodeId) -> Result<SymKey, RunError> {
        let pool = self.graph.pools.get_mut(a, b).ok_or(LinkError::NoSuchLink(a, b))?;
        let (index, key) = pool.next_link_key(a)?;
        self.transcript.push(Event::LinkConsume { from: a, to: b, index });
        self.learn_key(a, KeyClass::Link, key.as_bytes());
        self.learn_key(b, KeyClass::Link, key.as_bytes());
        Ok(key)
    }

    /// Next message off the bus, recorded as observed traffic.
    pub fn next_message(&mut self) -> Option<WireMessage> {
        let msg = self.bus.deliver_next()?;
        self.transcript.push(Event::Send {
            seq: msg.seq,
            phase: msg.phase,
            from: msg.from,
            to: msg.to,
            channel: msg.channel,
            bytes: msg.bytes.clone(),
            replayed: msg.replayed,
        });
        Some(msg)
    }

    /// Receiver side of a link message: MAC check first, decryption only on
    /// success, then any unwrapped-stage tampering.
    pub fn open_link(&mut self, msg: &WireMessage) -> Result<Vec<u8>, RunError> {
        if msg.channel != Channel::Link {
            return Err(RunError::Protocol("expected a link-wrapped message"));
        }
        let (from, to) = (msg.from, msg.to);
        let env = LinkEnvelope::from_bytes(&msg.bytes)?;
        let pool = self.graph.pools.get(from, to).ok_or(LinkError::NoSuchLink(from, to))?;
        let key = pool.key_at(env.key_index);
        self.op(to, OpKind::LinkVerify, false);
        let key = key?;
        let verified = env.verify(&key)?;
        self.op(to, OpKind::LinkDecrypt, false);
        let mut payload = verified.open(self.provider)?;
        self.learn_key(to, KeyClass::Link, key.as_bytes());
        self.bus.tamper_unwrapped(msg, &mut payload);
        self.learn_plain(to, PlainKind::LinkPayload, &payload);
        Ok(payload)
    }

    /// Feeds every queued message to `handler` until the bus drains. Discards
    /// are logged and the loop continues; fatal errors stop the run.
    pub fn drive(
        &mut self,
        mut handler: impl FnMut(&mut Self, WireMessage) -> Result<(), RunError>,
    ) -> Result<(), RunError> {
        while let Some(msg) = self.next_message() {
            let at = msg.to;
            if let Err(e) = handler(self, msg) {
                let kind = e.kind();
                self.record_error(at, kind);
                if kind.is_fatal() {
                    return Err(e);
                }
            }
        }
        Ok(())
    }
}
