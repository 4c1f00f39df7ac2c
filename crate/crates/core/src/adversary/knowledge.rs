use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Event, KeyClass, Learned, PlainKind, Transcript};
use crate::topology::{Channel, NodeId, Phase};

/// Whose view a knowledge set describes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    Node(NodeId),
    /// Passive collector of every bus message.
    BusTap,
    /// Bus tap plus every node marked compromised in the transcript.
    Attacker,
}

impl Party {
    pub fn label(&self) -> String {
        match self {
            Party::Node(n) => format!("node:{}", n.0),
            Party::BusTap => "bus-tap".into(),
            Party::Attacker => "attacker".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Observed {
    pub seq: u64,
    pub phase: Phase,
    pub from: NodeId,
    pub to: NodeId,
    pub channel: Channel,
    pub bytes: Vec<u8>,
}

/// Everything one party holds, decrypted or saw, in transcript order with
/// duplicates removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeSet {
    pub keys: Vec<(KeyClass, Vec<u8>)>,
    pub plaintexts: Vec<(PlainKind, Phase, Vec<u8>)>,
    pub observed: Vec<Observed>,
}

impl KnowledgeSet {
    fn absorb_node(&mut self, transcript: &Transcript, node: NodeId) {
        for e in transcript.events() {
            match e {
                Event::Learn { node: n, phase, item } if *n == node => match item {
                    Learned::Key { class, bytes } => self.keys.push((*class, bytes.clone())),
                    Learned::Plaintext { kind, bytes } => self.plaintexts.push((*kind, *phase, bytes.clone())),
                },
                Event::Send { from, to, .. } if *from == node || *to == node => self.push_send(e),
                _ => {}
            }
        }
    }

    fn push_send(&mut self, e: &Event) {
        if let Event::Send { seq, phase, from, to, channel, bytes, .. } = e {
            self.observed.push(Observed {
                seq: *seq,
                phase: *phase,
                from: *from,
                to: *to,
                channel: *channel,
                bytes: bytes.clone(),
            });
        }
    }

    fn dedup(&mut self) {
        let mut seen = BTreeSet::new();
        self.keys.retain(|k| seen.insert(k.clone()));
        let mut seen = BTreeSet::new();
        self.plaintexts.retain(|p| seen.insert((p.0, p.2.clone())));
        let mut seen = BTreeSet::new();
        self.observed.retain(|o| seen.insert(o.seq));
        self.observed.sort_by_key(|o| o.seq);
    }

    pub fn for_party(transcript: &Transcript, party: &Party) -> Self {
        let mut ks = Self::default();
        match party {
            Party::Node(n) => ks.absorb_node(transcript, *n),
            Party::BusTap | Party::Attacker => {
                for e in transcript.events() {
                    ks.push_send(e);
                }
                if *party == Party::Attacker {
                    let nodes: BTreeSet<NodeId> = transcript.compromised().collect();
                    for n in nodes {
                        ks.absorb_node(transcript, n);
                    }
                }
            }
        }
        ks.dedup();
        ks
    }

    pub fn node(transcript: &Transcript, node: NodeId) -> Self {
        Self::for_party(transcript, &Party::Node(node))
    }

    pub fn holds_key(&self, bytes: &[u8]) -> bool {
        self.keys.iter().any(|(_, k)| k == bytes)
    }

    /// Plain containment: some decrypted plaintext includes `needle`.
    pub fn plaintext_contains(&self, needle: &[u8]) -> bool {
        self.plaintexts
            .iter()
            .any(|(_, _, p)| !needle.is_empty() && p.windows(needle.len()).any(|w| w == needle))
    }
}
