//! Onion-routed key distribution over simulated QKD networks.
//!
//! The crate is `no_std` with `alloc`. It provides the crypto providers, QKD
//! link pools, the network model and classical bus, the onion protocol, the
//! key-relay and trusted-node baselines, and the secrecy and anonymity audits.

#![no_std]

extern crate alloc;

pub mod adversary;
pub mod baselines;
pub mod crypto;
pub mod onion;
pub mod qkd_link;
pub mod topology;
