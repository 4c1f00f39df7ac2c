//! Pre-provisioned QKD link keys and the authenticated link wrapper.
//!
//! Every classical message between two quantum-adjacent nodes travels inside
//! a [`LinkEnvelope`]: padded CBC under an encryption subkey, then HMAC-SHA256
//! under a MAC subkey, both derived from one pool key that is never reused.
//!
//! Wire layout: `key_index (u32 BE) || iv || body || tag (32 bytes)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::crypto::{
    digest_eq, kdf, mac, CryptoProvider, Digest, Qrng, Seed, SymCiphertext, SymKey, BLOCK_LEN,
    DIGEST_LEN,
};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("a node cannot share a link with itself ({0})")]
    SelfLink(NodeId),
    #[error("link {0}-{1} already provisioned")]
    DuplicatePool(NodeId, NodeId),
    #[error("pool size must be at least 1")]
    EmptyPool,
    #[error("no link between {0} and {1}")]
    NoSuchLink(NodeId, NodeId),
    #[error("key pool {0}-{1} exhausted")]
    PoolExhausted(NodeId, NodeId),
    #[error("{0} is not an endpoint of this link")]
    NotEndpoint(NodeId),
    #[error("link authentication failed")]
    AuthenticationFailure,
    #[error("key index {0} outside the pool")]
    IndexOutOfRange(u32),
    #[error("malformed link envelope")]
    Malformed,
    #[error("link payload must be non-empty")]
    EmptyPayload,
}

/// Key material shared by the two ends of one quantum link.
///
/// Endpoint `a` consumes keys from the front of the list, endpoint `b` from
/// the back, so the two send directions never collide on an index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkKeyPool {
    a: NodeId,
    b: NodeId,
    keys: Vec<SymKey>,
    next_a: usize,
    next_b: usize,
}

impl LinkKeyPool {
    pub fn provision(a: NodeId, b: NodeId, count: usize, seed: Seed) -> Result<Self, LinkError> {
        if a == b {
            return Err(LinkError::SelfLink(a));
        }
        if count == 0 {
            return Err(LinkError::EmptyPool);
        }
        let mut rng = Qrng::from_seed(seed);
        let keys = (0..count).map(|_| rng.draw_key()).collect();
        Ok(Self {
            a,
            b,
            keys,
            next_a: 0,
            next_b: 0,
        })
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.a, self.b)
    }

    pub fn size(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[SymKey] {
        &self.keys
    }

    /// Consumption cursors `(a -> b, b -> a)`.
    pub fn cursors(&self) -> (usize, usize) {
        (self.next_a, self.next_b)
    }

    pub fn remaining(&self) -> usize {
        self.keys.len() - self.next_a - self.next_b
    }

    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if node == self.a {
            Some(self.b)
        } else if node == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    /// Draws the next unused key in `sender`'s direction.
    pub fn next_link_key(&mut self, sender: NodeId) -> Result<(u32, SymKey), LinkError> {
        if sender != self.a && sender != self.b {
            return Err(LinkError::NotEndpoint(sender));
        }
        if self.remaining() == 0 {
            return Err(LinkError::PoolExhausted(self.a, self.b));
        }
        let index = if sender == self.a {
            self.next_a += 1;
            self.next_a - 1
        } else {
            self.next_b += 1;
            self.keys.len() - self.next_b
        };
        Ok((index as u32, self.keys[index]))
    }

    pub fn key_at(&self, index: u32) -> Result<SymKey, LinkError> {
        self.keys
            .get(index as usize)
            .copied()
            .ok_or(LinkError::IndexOutOfRange(index))
    }
}

/// All pools of a network, keyed by the unordered endpoint pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkPools {
    pools: BTreeMap<(NodeId, NodeId), LinkKeyPool>,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LinkPools {
    pub fn provision_pool(
        &mut self,
        a: NodeId,
        b: NodeId,
        count: usize,
        seed: Seed,
    ) -> Result<&LinkKeyPool, LinkError> {
        let key = pair(a, b);
        if self.pools.contains_key(&key) {
            return Err(LinkError::DuplicatePool(key.0, key.1));
        }
        let pool = LinkKeyPool::provision(key.0, key.1, count, seed)?;
        Ok(self.pools.entry(key).or_insert(pool))
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<&LinkKeyPool> {
        self.pools.get(&pair(a, b))
    }

    pub fn get_mut(&mut self, a: NodeId, b: NodeId) -> Option<&mut LinkKeyPool> {
        self.pools.get_mut(&pair(a, b))
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        self.pools.contains_key(&pair(a, b))
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinkKeyPool> {
        self.pools.values()
    }
}

/// Encryption and MAC subkeys derived from one link key.
pub fn link_subkeys(key: &SymKey) -> (SymKey, SymKey) {
    (
        SymKey::from_bytes(*kdf(b"qkdn-link-enc", key).as_bytes()),
        SymKey::from_bytes(*kdf(b"qkdn-link-mac", key).as_bytes()),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkEnvelope {
    pub key_index: u32,
    pub body: SymCiphertext,
    pub auth_tag: Digest,
}

fn envelope_tag(mac_key: &SymKey, key_index: u32, body: &SymCiphertext) -> Digest {
    let mut msg = Vec::with_capacity(4 + body.len());
    msg.extend_from_slice(&key_index.to_be_bytes());
    msg.extend_from_slice(&body.iv);
    msg.extend_from_slice(&body.body);
    mac(mac_key, &msg)
}

pub fn link_wrap(
    provider: &dyn CryptoProvider,
    key: &SymKey,
    key_index: u32,
    payload: &[u8],
    iv: [u8; BLOCK_LEN],
) -> Result<LinkEnvelope, LinkError> {
    if payload.is_empty() {
        return Err(LinkError::EmptyPayload);
    }
    let (enc, mac_key) = link_subkeys(key);
    let body = provider.sym_encrypt(&enc, payload, iv);
    let auth_tag = envelope_tag(&mac_key, key_index, &body);
    Ok(LinkEnvelope {
        key_index,
        body,
        auth_tag,
    })
}

/// An envelope whose tag has been checked against a link key.
pub struct VerifiedEnvelope<'a> {
    envelope: &'a LinkEnvelope,
    enc_key: SymKey,
}

impl VerifiedEnvelope<'_> {
    pub fn open(self, provider: &dyn CryptoProvider) -> Result<Vec<u8>, LinkError> {
        provider
            .sym_decrypt(&self.enc_key, &self.envelope.body)
            .map_err(|_| LinkError::Malformed)
    }
}

impl LinkEnvelope {
    pub fn verify(&self, key: &SymKey) -> Result<VerifiedEnvelope<'_>, LinkError> {
        let (enc_key, mac_key) = link_subkeys(key);
        if !digest_eq(&envelope_tag(&mac_key, self.key_index, &self.body), &self.auth_tag) {
            return Err(LinkError::AuthenticationFailure);
        }
        Ok(VerifiedEnvelope {
            envelope: self,
            enc_key,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.body.len() + DIGEST_LEN);
        out.extend_from_slice(&self.key_index.to_be_bytes());
        out.extend_from_slice(&self.body.to_bytes());
        out.extend_from_slice(&self.auth_tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LinkError> {
        if bytes.len() < 4 + 2 * BLOCK_LEN + DIGEST_LEN {
            return Err(LinkError::Malformed);
        }
        let (head, rest) = bytes.split_at(4);
        let (body, tag) = rest.split_at(rest.len() - DIGEST_LEN);
        Ok(Self {
            key_index: u32::from_be_bytes(head.try_into().unwrap()),
            body: SymCiphertext::from_bytes(body).map_err(|_| LinkError::Malformed)?,
            auth_tag: tag.try_into().unwrap(),
        })
    }
}

/// Verifies, then decrypts. The receiver looks the key up by the index in the header.
pub fn link_unwrap(
    provider: &dyn CryptoProvider,
    pool: &LinkKeyPool,
    envelope: &LinkEnvelope,
    receiver: NodeId,
) -> Result<Vec<u8>, LinkError> {
    if pool.other(receiver).is_none() {
        return Err(LinkError::NotEndpoint(receiver));
    }
    let key = pool.key_at(envelope.key_index)?;
    envelope.verify(&key)?.open(provider)
}
