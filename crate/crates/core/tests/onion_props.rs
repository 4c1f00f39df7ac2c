mod common;

use common::{line, seed_u64, session_keys, SMALL};
use proptest::prelude::*;
use qkdn_core::crypto::{CryptoProvider, DeterministicProvider, Qrng};
#[cfg(feature = "production")]
use qkdn_core::crypto::ProductionProvider;
use qkdn_core::onion::{build_onion, process_onion, ExtendedOnion, HopAction, NodeContext, OnionError, OnionParams};
use qkdn_core::topology::Circuit;

fn contexts(circuit: &Circuit, keys: &[qkdn_core::crypto::SymKey], params: OnionParams) -> Vec<NodeContext> {
    circuit
        .hops()
        .iter()
        .zip(keys)
        .map(|(&id, &k)| NodeContext::new(id, k, params))
        .collect()
}

/// Walks the circuit hop by hop over serialized states, checking each
/// output against the oracle. Returns the delivered secret.
fn walk(provider: &dyn CryptoProvider, n: usize, run: u64, params: OnionParams) -> Vec<u8> {
    let (_, circuit) = line(n, provider, 4);
    let mut rng = Qrng::from_seed(seed_u64(run));
    let keys = session_keys(&mut rng, circuit.hop_count());
    let out = build_onion(provider, &circuit, &keys, &params, &mut rng).unwrap();
    let mut ctxs = contexts(&circuit, &keys, params);
    let wire_len = params.wire_len(circuit.hop_count());
    let mut bytes = out.first.to_bytes();
    for (i, ctx) in ctxs.iter_mut().enumerate() {
        assert_eq!(bytes.len(), wire_len, "hop {i}");
        let onion = ExtendedOnion::from_bytes(&bytes, &params).unwrap();
        let done = process_onion(provider, ctx, &onion).unwrap();
        assert_eq!(done.action, out.oracle[i], "hop {i} differs from the oracle");
        match done.action {
            HopAction::Forward { next_hop, onion } => {
                assert_eq!(next_hop, circuit.hops()[i + 1]);
                bytes = onion.to_bytes();
            }
            HopAction::Deliver { secret } => {
                assert_eq!(i, circuit.hop_count() - 1);
                return secret;
            }
        }
    }
    panic!("no hop delivered");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn honest_walk_delivers_and_matches_oracle(n in 1usize..=8, run in any::<u64>()) {
        let p = DeterministicProvider;
        let (_, circuit) = line(n, &p, 4);
        let mut rng = Qrng::from_seed(seed_u64(run));
        let keys = session_keys(&mut rng, circuit.hop_count());
        let out = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap();
        prop_assert_eq!(walk(&p, n, run, SMALL), out.secret.to_vec());
        let sizes: Vec<usize> = out.states().iter().map(|s| s.to_bytes().len()).collect();
        prop_assert!(sizes.iter().all(|&s| s == SMALL.wire_len(n + 1)));
    }

    #[test]
    fn single_bit_flips_are_caught_before_any_action(n in 1usize..=5, run in any::<u64>(), hop in any::<usize>(), at in any::<usize>(), bit in 0u8..8) {
        let p = DeterministicProvider;
        let (_, circuit) = line(n, &p, 4);
        let mut rng = Qrng::from_seed(seed_u64(run));
        let keys = session_keys(&mut rng, circuit.hop_count());
        let out = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap();
        let hop = hop % circuit.hop_count();
        let mut bytes = out.states()[hop].to_bytes();
        let at = at % bytes.len();
        bytes[at] ^= 1 << bit;
        let mut ctx = NodeContext::new(circuit.hops()[hop], keys[hop], SMALL);
        let got = ExtendedOnion::from_bytes(&bytes, &SMALL).and_then(|o| process_onion(&p, &mut ctx, &o));
        prop_assert!(
            matches!(got, Err(OnionError::TagInvalid | OnionError::LayerMalformed)),
            "hop {} byte {} bit {}: {:?}", hop, at, bit, got.map(|d| d.action)
        );
    }
}

#[test]
fn replayed_state_is_discarded_by_the_same_node() {
    let p = DeterministicProvider;
    let (_, circuit) = line(2, &p, 4);
    let mut rng = Qrng::from_seed(seed_u64(11));
    let keys = session_keys(&mut rng, 3);
    let out = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap();
    let mut ctx = NodeContext::new(circuit.hops()[1], keys[1], SMALL);
    let state = out.states()[1].clone();
    assert!(process_onion(&p, &mut ctx, &state).is_ok());
    assert_eq!(process_onion(&p, &mut ctx, &state).unwrap_err(), OnionError::Replay);
}

#[test]
fn wrong_session_key_never_yields_an_action() {
    let p = DeterministicProvider;
    let (_, circuit) = line(3, &p, 4);
    let mut rng = Qrng::from_seed(seed_u64(12));
    let keys = session_keys(&mut rng, 4);
    let out = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap();
    for (i, state) in out.states().into_iter().enumerate() {
        let other = keys[(i + 1) % keys.len()];
        let mut ctx = NodeContext::new(circuit.hops()[i], other, SMALL);
        let got = process_onion(&p, &mut ctx, state);
        assert!(matches!(got, Err(OnionError::TagInvalid | OnionError::LayerMalformed)), "{i}");
    }
}

#[test]
fn wrong_dimensions_are_size_violations() {
    let p = DeterministicProvider;
    let (_, circuit) = line(2, &p, 4);
    let mut rng = Qrng::from_seed(seed_u64(13));
    let keys = session_keys(&mut rng, 3);
    let out = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap();
    let mut ctx = NodeContext::new(circuit.hops()[0], keys[0], SMALL);
    let mut short = out.first.clone();
    short.blocks[1].pop();
    assert_eq!(process_onion(&p, &mut ctx, &short).unwrap_err(), OnionError::SizeViolation);
    let mut dropped = out.first.clone();
    dropped.blocks.truncate(1);
    assert_eq!(process_onion(&p, &mut ctx, &dropped).unwrap_err(), OnionError::SizeViolation);
}

#[cfg(feature = "production")]
#[test]
fn production_provider_delivers_with_default_sizes() {
    let p = ProductionProvider;
    let params = OnionParams::default();
    for n in [1, 3] {
        let (_, circuit) = line(n, &p, 4);
        let mut rng = Qrng::from_seed(seed_u64(n as u64));
        let keys = session_keys(&mut rng, circuit.hop_count());
        let secret = build_onion(&p, &circuit, &keys, &params, &mut rng).unwrap().secret;
        assert_eq!(walk(&p, n, n as u64, params), secret.to_vec());
    }
}

#[cfg(feature = "production")]
#[test]
fn production_head_block_does_not_fit_small_blocks() {
    let p = ProductionProvider;
    let (_, circuit) = line(1, &p, 4);
    let mut rng = Qrng::from_seed(seed_u64(1));
    let keys = session_keys(&mut rng, 2);
    let err = build_onion(&p, &circuit, &keys, &SMALL, &mut rng).unwrap_err();
    assert_eq!(err, OnionError::HeadBlockOverflow { needed: 32 + 2 + 1312 + 2 + 2420, available: 128 });
}
