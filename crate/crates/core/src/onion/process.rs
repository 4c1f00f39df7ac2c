use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{ExtendedOnion, HeadBlockPlain, LayerKind, LayerPlain, OnionError, OnionParams};
use crate::crypto::{
    hash, kdf, prg, CryptoProvider, Digest, Signature, SigningKey, SymKey, VerifyingKey, BLOCK_LEN,
};
use crate::topology::NodeId;

const ZERO_IV: [u8; BLOCK_LEN] = [0; BLOCK_LEN];
const TAG_LABEL: &[u8] = b"qkdn-onion-tag-v1";

/// `r_i = prg(kdf(P_i, k_i), L)`.
pub fn compute_padding(node: NodeId, key: &SymKey, block_len: usize) -> Vec<u8> {
    prg(&kdf(&node.to_be_bytes(), key), block_len)
}

/// Keyed filler a relay appends to the inner onion it unwrapped.
pub fn container_fill(node: NodeId, key: &SymKey, len: usize) -> Vec<u8> {
    prg(&kdf(&[b"onion-fill".as_slice(), &node.to_be_bytes()].concat(), key), len)
}

/// Decrypts one layer of a container under the node's session key.
pub fn peel_layer(
    provider: &dyn CryptoProvider,
    key: &SymKey,
    onion: &[u8],
    params: &OnionParams,
) -> Result<(LayerPlain, Vec<u8>), OnionError> {
    if onion.len() != params.container_len() {
        return Err(OnionError::SizeViolation);
    }
    let iv: [u8; BLOCK_LEN] = onion[..BLOCK_LEN].try_into().unwrap();
    let mut plain = onion[BLOCK_LEN..].to_vec();
    provider
        .raw_decrypt(key, &iv, &mut plain)
        .map_err(|_| OnionError::SizeViolation)?;
    let layer = LayerPlain::parse(&plain)?;
    Ok((layer, plain))
}

/// Drops `B_1`, decrypts the rest block by block under `k_i`, appends `r_i`.
pub fn shift_blocks(
    provider: &dyn CryptoProvider,
    key: &SymKey,
    blocks: &[Vec<u8>],
    padding: Vec<u8>,
) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = blocks[1..]
        .iter()
        .map(|b| {
            let mut b = b.clone();
            provider
                .raw_decrypt(key, &ZERO_IV, &mut b)
                .expect("extension blocks are block aligned");
            b
        })
        .collect();
    out.push(padding);
    out
}

fn lp(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

/// Canonical signed bytes for one hop: the one-time key, the container the
/// hop received, the container it forwards (empty at the destination) and
/// the trailing blocks `B_2..B_N` as received.
pub fn tag_message(key: &SymKey, incoming: &[u8], next: &[u8], trailing: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        TAG_LABEL.len() + 48 + incoming.len() + next.len() + trailing.iter().map(|b| 4 + b.len()).sum::<usize>(),
    );
    out.extend_from_slice(TAG_LABEL);
    lp(&mut out, key.as_bytes());
    lp(&mut out, incoming);
    lp(&mut out, next);
    for b in trailing {
        lp(&mut out, b);
    }
    out
}

pub fn tag_sign(provider: &dyn CryptoProvider, esk: &SigningKey, msg: &[u8]) -> Signature {
    provider.sign(esk, msg)
}

pub fn tag_verify(provider: &dyn CryptoProvider, evk: &VerifyingKey, msg: &[u8], tag: &Signature) -> bool {
    provider.verify(evk, msg, tag)
}

pub(super) fn encrypt_head(
    provider: &dyn CryptoProvider,
    session_key: &SymKey,
    head: &HeadBlockPlain,
    block_len: usize,
) -> Result<Vec<u8>, OnionError> {
    let mut block = head.encode(block_len)?;
    provider
        .raw_encrypt(session_key, &ZERO_IV, &mut block)
        .map_err(|_| OnionError::SizeViolation)?;
    Ok(block)
}

pub(super) fn wrap_block(provider: &dyn CryptoProvider, key: &SymKey, block: &[u8]) -> Vec<u8> {
    let mut b = block.to_vec();
    provider
        .raw_encrypt(key, &ZERO_IV, &mut b)
        .expect("extension blocks are block aligned");
    b
}

/// Per-node processing state: identity, the session key shared with the
/// initiator, and the digests of head blocks already accepted.
#[derive(Debug, Clone)]
pub struct NodeContext {
    pub id: NodeId,
    pub session_key: SymKey,
    pub params: OnionParams,
    seen: BTreeSet<Digest>,
}

impl NodeContext {
    pub fn new(id: NodeId, session_key: SymKey, params: OnionParams) -> Self {
        Self {
            id,
            session_key,
            params,
            seen: BTreeSet::new(),
        }
    }
}

/// Result of one accepted hop, with everything the node decrypted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Processed {
    pub action: super::HopAction,
    /// Full `M`-byte layer plaintext, fill included.
    pub layer: Vec<u8>,
    pub head: HeadBlockPlain,
}

/// One hop: peel, extract, verify, then forward or deliver.
pub fn process_onion(
    provider: &dyn CryptoProvider,
    ctx: &mut NodeContext,
    onion: &ExtendedOnion,
) -> Result<Processed, OnionError> {
    let params = ctx.params;
    onion.check_dims(&params)?;
    let digest = hash(&onion.blocks[0]);
    if ctx.seen.contains(&digest) {
        return Err(OnionError::Replay);
    }
    let (layer, layer_bytes) = peel_layer(provider, &ctx.session_key, &onion.onion, &params)?;

    let mut head_bytes = onion.blocks[0].clone();
    provider
        .raw_decrypt(&ctx.session_key, &ZERO_IV, &mut head_bytes)
        .map_err(|_| OnionError::SizeViolation)?;
    let head = HeadBlockPlain::parse(&head_bytes).ok_or(OnionError::TagInvalid)?;

    let next = match layer.kind {
        LayerKind::Deliver => Vec::new(),
        LayerKind::Forward => {
            let total = params.container_len();
            if layer.payload.len() > total || layer.next_hop == ctx.id {
                return Err(OnionError::LayerMalformed);
            }
            let mut c = layer.payload.clone();
            c.extend(container_fill(ctx.id, &head.key, total - c.len()));
            c
        }
    };
    let msg = tag_message(&head.key, &onion.onion, &next, &onion.blocks[1..]);
    if !tag_verify(provider, &head.evk, &msg, &head.tag) {
        return Err(OnionError::TagInvalid);
    }
    ctx.seen.insert(digest);

    let action = match layer.kind {
        LayerKind::Deliver => super::HopAction::Deliver {
            secret: layer.payload.clone(),
        },
        LayerKind::Forward => {
            let padding = compute_padding(ctx.id, &head.key, params.block_len);
            super::HopAction::Forward {
                next_hop: layer.next_hop,
                onion: ExtendedOnion {
                    onion: next,
                    blocks: shift_blocks(provider, &head.key, &onion.blocks, padding),
                },
            }
        }
    };
    Ok(Processed {
        action,
        layer: layer_bytes,
        head,
    })
}
