use alloc::vec::Vec;

use super::{OnionError, OnionParams};
use crate::crypto::{Signature, SymKey, VerifyingKey, BLOCK_LEN, KEY_LEN};
use crate::topology::NodeId;

/// kind + next_hop + payload_len.
pub const LAYER_HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Forward = 1,
    Deliver = 2,
}

/// One decrypted onion layer, without its fill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlain {
    pub kind: LayerKind,
    /// Zero for `Deliver`.
    pub next_hop: NodeId,
    pub payload: Vec<u8>,
}

impl LayerPlain {
    pub fn forward(next_hop: NodeId, inner: Vec<u8>) -> Self {
        Self {
            kind: LayerKind::Forward,
            next_hop,
            payload: inner,
        }
    }

    pub fn deliver(secret: &[u8]) -> Self {
        Self {
            kind: LayerKind::Deliver,
            next_hop: NodeId(0),
            payload: secret.to_vec(),
        }
    }

    /// Header and payload, zero-padded to the cipher block size.
    pub fn encode_prefix(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LAYER_HEADER_LEN + self.payload.len() + BLOCK_LEN);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.next_hop.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.resize(out.len().next_multiple_of(BLOCK_LEN), 0);
        out
    }

    /// Parses an `M`-byte layer plaintext; everything past the payload is fill.
    pub fn parse(bytes: &[u8]) -> Result<Self, OnionError> {
        if bytes.len() < LAYER_HEADER_LEN {
            return Err(OnionError::LayerMalformed);
        }
        let kind = match bytes[0] {
            1 => LayerKind::Forward,
            2 => LayerKind::Deliver,
            _ => return Err(OnionError::LayerMalformed),
        };
        let next_hop = NodeId(u32::from_be_bytes(bytes[1..5].try_into().unwrap()));
        let len = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload = bytes
            .get(LAYER_HEADER_LEN..LAYER_HEADER_LEN.saturating_add(len))
            .ok_or(OnionError::LayerMalformed)?;
        match (kind, next_hop.0) {
            (LayerKind::Deliver, 0) if len == KEY_LEN => {}
            (LayerKind::Forward, h) if h != 0 && len >= 2 * BLOCK_LEN && len.is_multiple_of(BLOCK_LEN) => {}
            _ => return Err(OnionError::LayerMalformed),
        }
        Ok(Self {
            kind,
            next_hop,
            payload: payload.to_vec(),
        })
    }
}

/// Contents of an extension head block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadBlockPlain {
    pub key: SymKey,
    pub evk: VerifyingKey,
    pub tag: Signature,
}

impl HeadBlockPlain {
    pub fn encoded_len(evk_len: usize, sig_len: usize) -> usize {
        KEY_LEN + 2 + evk_len + 2 + sig_len
    }

    pub fn encode(&self, block_len: usize) -> Result<Vec<u8>, OnionError> {
        let needed = Self::encoded_len(self.evk.len(), self.tag.len());
        if needed > block_len || self.evk.len() > u16::MAX as usize || self.tag.len() > u16::MAX as usize {
            return Err(OnionError::HeadBlockOverflow {
                needed,
                available: block_len,
            });
        }
        let mut out = Vec::with_capacity(block_len);
        out.extend_from_slice(self.key.as_bytes());
        out.extend_from_slice(&(self.evk.len() as u16).to_be_bytes());
        out.extend_from_slice(self.evk.as_bytes());
        out.extend_from_slice(&(self.tag.len() as u16).to_be_bytes());
        out.extend_from_slice(self.tag.as_bytes());
        out.resize(block_len, 0);
        Ok(out)
    }

    /// Strict parse: any nonzero fill byte is a failure.
    pub fn parse(bytes: &[u8]) -> Option<Self> {
        let key = SymKey::from_slice(bytes.get(..KEY_LEN)?)?;
        let mut at = KEY_LEN;
        let field = |at: &mut usize| -> Option<Vec<u8>> {
            let len = u16::from_be_bytes(bytes.get(*at..*at + 2)?.try_into().ok()?) as usize;
            let v = bytes.get(*at + 2..*at + 2 + len)?.to_vec();
            *at += 2 + len;
            Some(v)
        };
        let evk = field(&mut at)?;
        let tag = field(&mut at)?;
        if bytes[at..].iter().any(|&b| b != 0) {
            return None;
        }
        Some(Self {
            key,
            evk: VerifyingKey::new(evk),
            tag: Signature::new(tag),
        })
    }
}

/// `O'_i`: a container onion plus its extension blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedOnion {
    pub onion: Vec<u8>,
    pub blocks: Vec<Vec<u8>>,
}

impl ExtendedOnion {
    pub fn hop_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn check_dims(&self, params: &OnionParams) -> Result<(), OnionError> {
        if self.onion.len() != params.container_len()
            || self.blocks.len() < 2
            || self.blocks.iter().any(|b| b.len() != params.block_len)
        {
            return Err(OnionError::SizeViolation);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let block_len = self.blocks.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(8 + self.onion.len() + self.blocks.len() * block_len);
        out.extend_from_slice(&(self.onion.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.onion);
        out.extend_from_slice(&(self.blocks.len() as u32).to_be_bytes());
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out
    }

    /// Parses wire bytes against the circuit-wide sizes. Framing that does
    /// not match `params` exactly is reported as a malformed layer.
    pub fn from_bytes(bytes: &[u8], params: &OnionParams) -> Result<Self, OnionError> {
        let word = |at: usize| -> Result<usize, OnionError> {
            let w = bytes.get(at..at + 4).ok_or(OnionError::LayerMalformed)?;
            Ok(u32::from_be_bytes(w.try_into().unwrap()) as usize)
        };
        let onion_len = word(0)?;
        if onion_len != params.container_len() {
            return Err(OnionError::LayerMalformed);
        }
        let n = word(4 + onion_len)?;
        let blocks_at = 8 + onion_len;
        if n < 2 || bytes.len() != blocks_at + n.saturating_mul(params.block_len) {
            return Err(OnionError::LayerMalformed);
        }
        Ok(Self {
            onion: bytes[4..4 + onion_len].to_vec(),
            blocks: bytes[blocks_at..].chunks(params.block_len).map(<[u8]>::to_vec).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn layer_prefix_round_trip() {
        let l = LayerPlain::forward(NodeId(7), vec![0xab; 64]);
        let mut bytes = l.encode_prefix();
        assert_eq!(bytes.len(), 80);
        bytes.resize(256, 0xee);
        assert_eq!(LayerPlain::parse(&bytes).unwrap(), l);
        let d = LayerPlain::deliver(&[5; 32]);
        assert_eq!(d.encode_prefix().len(), 48);
        assert_eq!(LayerPlain::parse(&d.encode_prefix()).unwrap(), d);
    }

    #[test]
    fn layer_parse_rejects_bad_headers() {
        let mut b = LayerPlain::deliver(&[5; 32]).encode_prefix();
        b[0] = 3;
        assert_eq!(LayerPlain::parse(&b), Err(OnionError::LayerMalformed));
        let mut b = LayerPlain::deliver(&[5; 32]).encode_prefix();
        b[4] = 1;
        assert_eq!(LayerPlain::parse(&b), Err(OnionError::LayerMalformed));
        let mut b = LayerPlain::forward(NodeId(2), vec![1; 32]).encode_prefix();
        b[8] = 0xff;
        assert_eq!(LayerPlain::parse(&b), Err(OnionError::LayerMalformed));
    }

    #[test]
    fn head_block_round_trip_and_strict_fill() {
        let h = HeadBlockPlain {
            key: SymKey::from_bytes([1; 32]),
            evk: VerifyingKey::new(vec![2; 40]),
            tag: Signature::new(vec![3; 50]),
        };
        let mut enc = h.encode(256).unwrap();
        assert_eq!(enc.len(), 256);
        assert_eq!(HeadBlockPlain::parse(&enc).unwrap(), h);
        enc[255] = 1;
        assert!(HeadBlockPlain::parse(&enc).is_none());
        assert_eq!(
            h.encode(64),
            Err(OnionError::HeadBlockOverflow { needed: 126, available: 64 })
        );
    }

    #[test]
    fn extended_onion_framing() {
        let p = OnionParams { block_len: 32, layer_len: 64 };
        let o = ExtendedOnion { onion: vec![9; 80], blocks: vec![vec![1; 32], vec![2; 32]] };
        let bytes = o.to_bytes();
        assert_eq!(bytes.len(), p.wire_len(2));
        assert_eq!(ExtendedOnion::from_bytes(&bytes, &p).unwrap(), o);
        assert_eq!(ExtendedOnion::from_bytes(&bytes[1..], &p), Err(OnionError::LayerMalformed));
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert_eq!(ExtendedOnion::from_bytes(&bad, &p), Err(OnionError::LayerMalformed));
    }
}
