use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::crypto::{hash, Digest, OpKind};
use crate::topology::{Channel, NodeId, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyClass {
    StaticKem,
    StaticSig,
    Link,
    Session,
    OneTime,
    /// Per-circuit ephemeral signature key (verification half for relays).
    Ephemeral,
}

impl KeyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyClass::StaticKem => "static-kem",
            KeyClass::StaticSig => "static-sig",
            KeyClass::Link => "link",
            KeyClass::Session => "session",
            KeyClass::OneTime => "one-time",
            KeyClass::Ephemeral => "ephemeral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlainKind {
    /// The shared secret itself.
    Secret,
    /// Output of a link unwrap.
    LinkPayload,
    /// Decrypted onion layer (`LayerPlain` bytes).
    Layer,
    /// Any other decrypted protocol payload.
    Payload,
}

impl PlainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlainKind::Secret => "secret",
            PlainKind::LinkPayload => "link-payload",
            PlainKind::Layer => "layer",
            PlainKind::Payload => "payload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Learned {
    Key { class: KeyClass, bytes: Vec<u8> },
    Plaintext { kind: PlainKind, bytes: Vec<u8> },
}

impl Learned {
    pub fn bytes(&self) -> &[u8] {
        match self {
            Learned::Key { bytes, .. } | Learned::Plaintext { bytes, .. } => bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorKind {
    AuthenticationFailure,
    TagInvalid,
    LayerMalformed,
    SizeViolation,
    Replay,
    PoolExhausted,
    SignatureRejected,
    Protocol,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::AuthenticationFailure => "authentication-failure",
            ErrorKind::TagInvalid => "tag-invalid",
            ErrorKind::LayerMalformed => "layer-malformed",
            ErrorKind::SizeViolation => "size-violation",
            ErrorKind::Replay => "replay",
            ErrorKind::PoolExhausted => "pool-exhausted",
            ErrorKind::SignatureRejected => "signature-rejected",
            ErrorKind::Protocol => "protocol",
        }
    }

    /// Errors that end the run rather than discarding one message.
    pub fn is_fatal(self) -> bool {
        matches!(
            self,
            ErrorKind::PoolExhausted | ErrorKind::SignatureRejected | ErrorKind::Protocol
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A message as observed on the bus at delivery time.
    Send {
        seq: u64,
        phase: Phase,
        from: NodeId,
        to: NodeId,
        channel: Channel,
        bytes: Vec<u8>,
        replayed: bool,
    },
    LinkConsume {
        from: NodeId,
        to: NodeId,
        index: u32,
    },
    CryptoOp {
        node: NodeId,
        phase: Phase,
        kind: OpKind,
        session_key: bool,
    },
    Learn {
        node: NodeId,
        phase: Phase,
        item: Learned,
    },
    Deliver {
        node: NodeId,
        digest: Digest,
    },
    Error {
        node: NodeId,
        phase: Phase,
        kind: ErrorKind,
    },
    Compromise {
        node: NodeId,
    },
}

fn hex8(d: &[u8]) -> String {
    let mut s = String::with_capacity(16);
    for b in &d[..8] {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl Event {
    /// One-line text form. Byte payloads are summarised by length and digest prefix.
    pub fn to_line(&self) -> String {
        match self {
            Event::Send { seq, phase, from, to, channel, bytes, replayed } => format!(
                "send seq={seq} phase={} from={} to={} channel={} len={} sha256={}{}",
                phase.as_str(),
                from.0,
                to.0,
                channel.as_str(),
                bytes.len(),
                hex8(&hash(bytes)),
                if *replayed { " replayed" } else { "" }
            ),
            Event::LinkConsume { from, to, index } => {
                format!("link-consume from={} to={} index={index}", from.0, to.0)
            }
            Event::CryptoOp { node, phase, kind, session_key } => format!(
                "crypto-op node={} phase={} kind={}{}",
                node.0,
                phase.as_str(),
                kind.as_str(),
                if *session_key { " session-key" } else { "" }
            ),
            Event::Learn { node, phase, item } => {
                let (what, class) = match item {
                    Learned::Key { class, .. } => ("key", class.as_str()),
                    Learned::Plaintext { kind, .. } => ("plaintext", kind.as_str()),
                };
                format!(
                    "learn node={} phase={} {what}={class} len={} sha256={}",
                    node.0,
                    phase.as_str(),
                    item.bytes().len(),
                    hex8(&hash(item.bytes()))
                )
            }
            Event::Deliver { node, digest } => {
                format!("deliver node={} secret-sha256={}", node.0, hex8(digest))
            }
            Event::Error { node, phase, kind } => {
                format!("error node={} phase={} kind={}", node.0, phase.as_str(), kind.as_str())
            }
            Event::Compromise { node } => format!("compromise node={}", node.0),
        }
    }
}

/// Append-only record of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn deliveries(&self) -> impl Iterator<Item = (NodeId, &Digest)> {
        self.events.iter().filter_map(|e| match e {
            Event::Deliver { node, digest } => Some((*node, digest)),
            _ => None,
        })
    }

    pub fn errors(&self) -> impl Iterator<Item = (NodeId, ErrorKind)> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Error { node, kind, .. } => Some((*node, *kind)),
            _ => None,
        })
    }

    pub fn compromised(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Compromise { node } => Some(*node),
            _ => None,
        })
    }

    pub fn count_ops(&self, phase: Option<Phase>, pred: impl Fn(OpKind, bool) -> bool) -> u64 {
        self.events
            .iter()
            .filter(|e| match e {
                Event::CryptoOp { phase: p, kind, session_key, .. } => {
                    phase.is_none_or(|want| want == *p) && pred(*kind, *session_key)
                }
                _ => false,
            })
            .count() as u64
    }
}
