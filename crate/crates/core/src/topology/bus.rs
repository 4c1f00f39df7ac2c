use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// KEM handshakes and other preparation before the secret exists.
    Setup,
    /// Everything from the first message carrying (material for) `S`.
    Delivery,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Delivery => "delivery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// Link-wrapped under a QKD key between quantum neighbours.
    Link,
    /// Plain classical message.
    Plain,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Link => "link",
            Channel::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub seq: u64,
    pub phase: Phase,
    /// 1-based position among the messages of its phase.
    pub ordinal: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub channel: Channel,
    pub bytes: Vec<u8>,
    pub replayed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperStage {
    /// Flip bits of the bytes on the wire (link envelope included).
    Wire,
    /// Flip bits of the payload after the receiver's link unwrap, modelling
    /// a relay that bypasses the link MAC.
    Unwrapped,
}

/// Flips `mask` into byte `offset` of exactly one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperSpec {
    pub phase: Phase,
    /// 1-based message position within the phase. For relay-style runs the
    /// k-th delivery message is the one sent to hop `P_k`.
    pub message: usize,
    pub offset: usize,
    pub mask: u8,
    pub stage: TamperStage,
}

impl TamperSpec {
    pub fn matches(&self, msg: &WireMessage) -> bool {
        !msg.replayed && self.phase == msg.phase && self.message == msg.ordinal
    }

    /// Applies the flip; `false` if the offset is out of range.
    pub fn apply(&self, bytes: &mut [u8]) -> bool {
        match bytes.get_mut(self.offset) {
            Some(b) if self.mask != 0 => {
                *b ^= self.mask;
                true
            }
            _ => false,
        }
    }
}

/// Re-delivers a copy of one message after the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplaySpec {
    pub phase: Phase,
    pub message: usize,
}

/// FIFO classical channel. Delivery order is the send order, so a run is
/// fully determined by its seed. Attacks are installed up front and fire on
/// the message they select.
#[derive(Debug, Clone, Default)]
pub struct ClassicalBus {
    queue: VecDeque<WireMessage>,
    next_seq: u64,
    setup_count: usize,
    delivery_count: usize,
    tampers: Vec<(TamperSpec, bool)>,
    replays: Vec<(ReplaySpec, bool)>,
}

impl ClassicalBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, phase: Phase, from: NodeId, to: NodeId, channel: Channel, bytes: Vec<u8>) -> u64 {
        let counter = match phase {
            Phase::Setup => &mut self.setup_count,
            Phase::Delivery => &mut self.delivery_count,
        };
        *counter += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push_back(WireMessage {
            seq,
            phase,
            ordinal: *counter,
            from,
            to,
            channel,
            bytes,
            replayed: false,
        });
        seq
    }

    pub fn tamper_inject(&mut self, spec: TamperSpec) {
        self.tampers.push((spec, false));
    }

    pub fn schedule_replay(&mut self, spec: ReplaySpec) {
        self.replays.push((spec, false));
    }

    /// Queues a verbatim copy of an already delivered message.
    pub fn replay_inject(&mut self, recorded: &WireMessage) {
        let mut copy = recorded.clone();
        copy.seq = self.next_seq;
        copy.replayed = true;
        self.next_seq += 1;
        self.queue.push_back(copy);
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Pops the next message with wire-stage tampering applied.
    pub fn deliver_next(&mut self) -> Option<WireMessage> {
        let mut msg = self.queue.pop_front()?;
        for (spec, applied) in &mut self.tampers {
            if spec.stage == TamperStage::Wire && spec.matches(&msg) && spec.apply(&mut msg.bytes) {
                *applied = true;
            }
        }
        let mut replay = false;
        for (spec, applied) in &mut self.replays {
            if !*applied && !msg.replayed && spec.phase == msg.phase && spec.message == msg.ordinal {
                *applied = true;
                replay = true;
            }
        }
        if replay {
            self.replay_inject(&msg);
        }
        Some(msg)
    }

    /// Applies unwrapped-stage tampering to a payload the receiver just unwrapped.
    pub fn tamper_unwrapped(&mut self, msg: &WireMessage, payload: &mut [u8]) -> bool {
        let mut hit = false;
        for (spec, applied) in &mut self.tampers {
            if spec.stage == TamperStage::Unwrapped && spec.matches(msg) && spec.apply(payload) {
                *applied = true;
                hit = true;
            }
        }
        hit
    }

    pub fn was_tampered(&self, msg: &WireMessage) -> bool {
        self.tampers.iter().any(|(s, applied)| *applied && s.matches(msg))
    }

    /// Attacks that never found their target message.
    pub fn unapplied(&self) -> (Vec<TamperSpec>, Vec<ReplaySpec>) {
        (
            self.tampers.iter().filter(|(_, a)| !a).map(|(s, _)| s.clone()).collect(),
            self.replays.iter().filter(|(_, a)| !a).map(|(s, _)| *s).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fifo_with_per_phase_ordinals() {
        let mut bus = ClassicalBus::new();
        bus.send(Phase::Setup, NodeId(1), NodeId(2), Channel::Plain, vec![1]);
        bus.send(Phase::Delivery, NodeId(1), NodeId(2), Channel::Link, vec![2]);
        bus.send(Phase::Delivery, NodeId(2), NodeId(3), Channel::Link, vec![3]);
        let got: Vec<_> = core::iter::from_fn(|| bus.deliver_next())
            .map(|m| (m.seq, m.phase, m.ordinal, m.bytes[0]))
            .collect();
        assert_eq!(
            got,
            [(0, Phase::Setup, 1, 1), (1, Phase::Delivery, 1, 2), (2, Phase::Delivery, 2, 3)]
        );
    }

    #[test]
    fn wire_tamper_hits_exactly_one_message() {
        let mut bus = ClassicalBus::new();
        bus.tamper_inject(TamperSpec { phase: Phase::Delivery, message: 2, offset: 1, mask: 0x80, stage: TamperStage::Wire });
        for _ in 0..3 {
            bus.send(Phase::Delivery, NodeId(1), NodeId(2), Channel::Link, vec![0, 0]);
        }
        let got: Vec<_> = core::iter::from_fn(|| bus.deliver_next()).map(|m| m.bytes).collect();
        assert_eq!(got, [vec![0, 0], vec![0, 0x80], vec![0, 0]]);
        assert!(bus.unapplied().0.is_empty());
    }

    #[test]
    fn out_of_range_target_stays_unapplied() {
        let mut bus = ClassicalBus::new();
        bus.tamper_inject(TamperSpec { phase: Phase::Delivery, message: 9, offset: 0, mask: 1, stage: TamperStage::Wire });
        bus.send(Phase::Delivery, NodeId(1), NodeId(2), Channel::Link, vec![0]);
        bus.deliver_next();
        assert_eq!(bus.unapplied().0.len(), 1);
    }

    #[test]
    fn replay_requeues_a_copy() {
        let mut bus = ClassicalBus::new();
        bus.schedule_replay(ReplaySpec { phase: Phase::Delivery, message: 1 });
        bus.send(Phase::Delivery, NodeId(1), NodeId(2), Channel::Link, vec![5]);
        let first = bus.deliver_next().unwrap();
        let again = bus.deliver_next().unwrap();
        assert!(again.replayed && !first.replayed);
        assert_eq!(first.bytes, again.bytes);
        assert!(bus.deliver_next().is_none());
    }
}
