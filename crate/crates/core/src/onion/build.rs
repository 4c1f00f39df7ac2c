use alloc::vec;
use alloc::vec::Vec;

use super::process::{encrypt_head, wrap_block};
use super::{
    compute_padding, container_fill, tag_message, tag_sign, ExtendedOnion, HeadBlockPlain, LayerPlain,
    OnionError, OnionParams,
};
use crate::crypto::{CryptoProvider, Qrng, SigKeyPair, SymKey, BLOCK_LEN, KEY_LEN};
use crate::topology::{Circuit, NodeId};

/// What an honest hop does with the onion it receives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HopAction {
    Forward { next_hop: NodeId, onion: ExtendedOnion },
    Deliver { secret: Vec<u8> },
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    /// `O'_1`, not yet link-wrapped.
    pub first: ExtendedOnion,
    /// Expected action of hop `P_i` at index `i - 1`; ends in `Deliver`.
    pub oracle: Vec<HopAction>,
    pub secret: [u8; KEY_LEN],
    /// `k_1..k_N`.
    pub one_time_keys: Vec<SymKey>,
    pub ephemeral: SigKeyPair,
}

impl BuildOutput {
    /// `O'_1..O'_N` as each hop receives them.
    pub fn states(&self) -> Vec<&ExtendedOnion> {
        core::iter::once(&self.first)
            .chain(self.oracle.iter().filter_map(|a| match a {
                HopAction::Forward { onion, .. } => Some(onion),
                HopAction::Deliver { .. } => None,
            }))
            .collect()
    }
}

fn seal_layer(
    provider: &dyn CryptoProvider,
    key: &SymKey,
    layer: &LayerPlain,
    params: &OnionParams,
    rng: &mut Qrng,
) -> Result<Vec<u8>, OnionError> {
    let mut prefix = layer.encode_prefix();
    if prefix.len() > params.layer_len {
        return Err(OnionError::LayerOverflow {
            needed: prefix.len(),
            available: params.layer_len,
        });
    }
    let iv = rng.draw_iv();
    provider
        .raw_encrypt(key, &iv, &mut prefix)
        .map_err(|_| OnionError::SizeViolation)?;
    let mut out = iv.to_vec();
    out.extend(prefix);
    Ok(out)
}

/// Builds `O'_1` for `circuit` and simulates every hop to produce the oracle.
///
/// `session_keys[i]` is `k^PQC` shared with `circuit.hops()[i]`. The secret,
/// the one-time keys and the ephemeral tag keypair come from `rng`.
pub fn build_onion(
    provider: &dyn CryptoProvider,
    circuit: &Circuit,
    session_keys: &[SymKey],
    params: &OnionParams,
    rng: &mut Qrng,
) -> Result<BuildOutput, OnionError> {
    params.validate()?;
    let hops = circuit.hops();
    let n_hops = hops.len();
    if n_hops < 2 {
        return Err(OnionError::CircuitTooShort);
    }
    if session_keys.len() != n_hops {
        return Err(OnionError::SessionKeyCount {
            expected: n_hops,
            got: session_keys.len(),
        });
    }
    let needed = HeadBlockPlain::encoded_len(provider.verifying_key_len(), provider.signature_len());
    if needed > params.block_len {
        return Err(OnionError::HeadBlockOverflow {
            needed,
            available: params.block_len,
        });
    }

    let secret = *rng.draw_key().as_bytes();
    let keys: Vec<SymKey> = (0..n_hops).map(|_| rng.draw_key()).collect();
    let ephemeral = provider.sig_keygen(&rng.draw_seed());

    // meaningful onion prefixes, innermost first
    let mut prefixes = vec![Vec::new(); n_hops];
    prefixes[n_hops - 1] = seal_layer(provider, &session_keys[n_hops - 1], &LayerPlain::deliver(&secret), params, rng)?;
    for i in (0..n_hops - 1).rev() {
        let layer = LayerPlain::forward(hops[i + 1], prefixes[i + 1].clone());
        prefixes[i] = seal_layer(provider, &session_keys[i], &layer, params, rng)?;
    }

    // full containers as each hop receives them
    let total = params.container_len();
    let mut containers = Vec::with_capacity(n_hops);
    for (i, prefix) in prefixes.iter().enumerate() {
        let mut c = prefix.clone();
        let fill = if i == 0 {
            rng.bytes(total - c.len())
        } else {
            container_fill(hops[i - 1], &keys[i - 1], total - c.len())
        };
        c.extend(fill);
        containers.push(c);
    }

    // deterministic tails: the last i blocks seen by hop i
    let mut tails: Vec<Vec<Vec<u8>>> = vec![Vec::new()];
    for i in 0..n_hops - 1 {
        let mut next: Vec<Vec<u8>> = tails[i]
            .iter()
            .map(|b| {
                let mut b = b.clone();
                provider
                    .raw_decrypt(&keys[i], &[0; BLOCK_LEN], &mut b)
                    .expect("aligned");
                b
            })
            .collect();
        next.push(compute_padding(hops[i], &keys[i], params.block_len));
        tails.push(next);
    }

    // extensions, last hop first
    let mut states: Vec<ExtendedOnion> = Vec::with_capacity(n_hops);
    for j in (0..n_hops).rev() {
        let (trailing, next): (Vec<Vec<u8>>, &[u8]) = if j == n_hops - 1 {
            (tails[j].clone(), &[])
        } else {
            let after = states.last().unwrap();
            (
                after.blocks[..n_hops - 1]
                    .iter()
                    .map(|b| wrap_block(provider, &keys[j], b))
                    .collect(),
                &containers[j + 1],
            )
        };
        let msg = tag_message(&keys[j], &containers[j], next, &trailing);
        let head = HeadBlockPlain {
            key: keys[j],
            evk: ephemeral.verifying.clone(),
            tag: tag_sign(provider, &ephemeral.signing, &msg),
        };
        let mut blocks = Vec::with_capacity(n_hops);
        blocks.push(encrypt_head(provider, &session_keys[j], &head, params.block_len)?);
        blocks.extend(trailing);
        states.push(ExtendedOnion {
            onion: containers[j].clone(),
            blocks,
        });
    }
    states.reverse();

    let mut oracle: Vec<HopAction> = states[1..]
        .iter()
        .zip(&hops[1..])
        .map(|(onion, &next_hop)| HopAction::Forward {
            next_hop,
            onion: onion.clone(),
        })
        .collect();
    oracle.push(HopAction::Deliver {
        secret: secret.to_vec(),
    });
    Ok(BuildOutput {
        first: states.swap_remove(0),
        oracle,
        secret,
        one_time_keys: keys,
        ephemeral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{DeterministicProvider, Seed};
    use crate::onion::{process_onion, NodeContext};
    use crate::topology::tests::line_spec;
    use crate::topology::{load_topology, select_circuit, CircuitPolicy, QkdnGraph};

    const SMALL: OnionParams = OnionParams { block_len: 128, layer_len: 512 };

    fn setup(len: usize) -> (QkdnGraph, Circuit, Vec<SymKey>) {
        let labels: Vec<_> = (0..len).map(|i| alloc::format!("N{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let g = load_topology(&line_spec(&refs, 4), &DeterministicProvider).unwrap();
        let mut rng = Qrng::from_seed(Seed::from_bytes([0; 32]));
        let c = select_circuit(&g, NodeId(1), NodeId(len as u32), &CircuitPolicy::Shortest, &mut rng).unwrap();
        let keys = (0..c.hop_count()).map(|_| rng.draw_key()).collect();
        (g, c, keys)
    }

    fn walk(out: &BuildOutput, circuit: &Circuit, keys: &[SymKey], params: OnionParams) {
        let p = DeterministicProvider;
        let mut onion = out.first.clone();
        for (i, &hop) in circuit.hops().iter().enumerate() {
            let mut ctx = NodeContext::new(hop, keys[i], params);
            let got = process_onion(&p, &mut ctx, &onion).unwrap();
            assert_eq!(got.action, out.oracle[i]);
            if let HopAction::Forward { onion: next, .. } = got.action {
                onion = next;
            }
        }
    }

    #[test]
    fn honest_walk_matches_oracle() {
        for len in [3, 4, 7] {
            let (_, c, keys) = setup(len);
            let mut rng = Qrng::from_seed(Seed::from_bytes([len as u8; 32]));
            let out = build_onion(&DeterministicProvider, &c, &keys, &SMALL, &mut rng).unwrap();
            assert_eq!(out.first.blocks.len(), c.hop_count());
            let sizes: Vec<_> = out.states().iter().map(|s| s.to_bytes().len()).collect();
            assert!(sizes.iter().all(|&s| s == SMALL.wire_len(c.hop_count())));
            walk(&out, &c, &keys, SMALL);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let (_, c, keys) = setup(4);
        let b = |s| {
            let mut rng = Qrng::from_seed(Seed::from_bytes([s; 32]));
            build_onion(&DeterministicProvider, &c, &keys, &SMALL, &mut rng).unwrap().first.to_bytes()
        };
        assert_eq!(b(1), b(1));
        assert_ne!(b(1), b(2));
    }

    #[test]
    fn size_errors() {
        let (_, c, keys) = setup(4);
        let mut rng = Qrng::from_seed(Seed::from_bytes([0; 32]));
        let tiny = OnionParams { block_len: 64, layer_len: 512 };
        assert!(matches!(
            build_onion(&DeterministicProvider, &c, &keys, &tiny, &mut rng),
            Err(OnionError::HeadBlockOverflow { .. })
        ));
        let narrow = OnionParams { block_len: 128, layer_len: 64 };
        assert!(matches!(
            build_onion(&DeterministicProvider, &c, &keys, &narrow, &mut rng),
            Err(OnionError::LayerOverflow { .. })
        ));
        assert!(matches!(
            build_onion(&DeterministicProvider, &c, &keys[..2], &SMALL, &mut rng),
            Err(OnionError::SessionKeyCount { .. })
        ));
    }
}
