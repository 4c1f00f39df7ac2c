#![allow(dead_code)]

use qkdn_core::crypto::{CryptoProvider, Qrng, Seed, SymKey};
use qkdn_core::onion::OnionParams;
use qkdn_core::topology::{
    load_topology, select_circuit, Circuit, CircuitPolicy, EdgeSpec, Network, QkdnGraph, TopologySpec,
};

/// Big enough for nine hops with the deterministic provider.
pub const SMALL: OnionParams = OnionParams {
    block_len: 128,
    layer_len: 512,
};

pub fn seed(b: u8) -> Seed {
    Seed::from_bytes([b; 32])
}

pub fn seed_u64(x: u64) -> Seed {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&x.to_be_bytes());
    Seed::from_bytes(s)
}

/// `P0 - P1 - ... - P{n+1}`.
pub fn line_spec(n: usize, pool_size: usize) -> TopologySpec {
    let nodes: Vec<String> = (0..n + 2).map(|i| format!("P{i}")).collect();
    let edges = nodes
        .windows(2)
        .map(|w| EdgeSpec {
            a: w[0].clone(),
            b: w[1].clone(),
            pool_size,
        })
        .collect();
    TopologySpec {
        nodes,
        edges,
        seed: seed(0x5a),
    }
}

pub fn line(n: usize, provider: &dyn CryptoProvider, pool_size: usize) -> (QkdnGraph, Circuit) {
    let g = load_topology(&line_spec(n, pool_size), provider).unwrap();
    let src = g.require("P0").unwrap();
    let dst = g.require(&format!("P{}", n + 1)).unwrap();
    let c = select_circuit(&g, src, dst, &CircuitPolicy::Shortest, &mut Qrng::from_seed(seed(1))).unwrap();
    (g, c)
}

pub fn line_net(n: usize, provider: &dyn CryptoProvider, pool_size: usize, run_seed: u8) -> (Network<'_>, Circuit) {
    let (g, c) = line(n, provider, pool_size);
    (Network::new(provider, g, seed(run_seed)), c)
}

pub fn session_keys(rng: &mut Qrng, count: usize) -> Vec<SymKey> {
    (0..count).map(|_| rng.draw_key()).collect()
}
