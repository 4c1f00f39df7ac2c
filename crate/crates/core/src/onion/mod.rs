//! Extended onions: construction by the initiator, per-hop processing, and a
//! network runner that moves them over link-wrapped classical messages.
//!
//! Sizes at a glance, with `M` the layer size and `L` the block size:
//!
//! ```text
//! container O_i   = iv (16) || CBC_raw(k^PQC_i, iv, LayerPlain)        M + 16 bytes
//! LayerPlain      = kind (1) || next_hop (4) || payload_len (4) || payload || fill
//! extension       = B_1 .. B_N                                          N * L bytes
//! B_1 plaintext   = k_i (32) || evk_len (2) || evk || sig_len (2) || sig || zeros
//! wire O'_i       = |O_i| (u32) || O_i || N (u32) || B_1 .. B_N
//! ```
//!
//! The initiator only encrypts the meaningful prefix of each layer. A relay
//! rebuilds the full-size inner container by appending keyed filler derived
//! from its one-time key. Every container on the circuit is `M + 16` bytes
//! and every byte of it is known to the initiator at build time.

mod build;
mod format;
mod process;
mod run;

pub use build::{build_onion, BuildOutput, HopAction};
pub use format::{ExtendedOnion, HeadBlockPlain, LayerKind, LayerPlain, LAYER_HEADER_LEN};
pub use process::{
    compute_padding, container_fill, peel_layer, process_onion, shift_blocks, tag_message,
    tag_sign, tag_verify, NodeContext, Processed,
};
pub use run::{onion_run, OnionRun};

use crate::adversary::ErrorKind;
use crate::crypto::BLOCK_LEN;

pub const DEFAULT_BLOCK_LEN: usize = 4096;
pub const DEFAULT_LAYER_LEN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OnionError {
    #[error("integrity tag rejected")]
    TagInvalid,
    #[error("onion layer malformed")]
    LayerMalformed,
    #[error("extended onion has the wrong dimensions")]
    SizeViolation,
    #[error("onion replayed")]
    Replay,
    #[error("head block needs {needed} bytes but blocks are {available}")]
    HeadBlockOverflow { needed: usize, available: usize },
    #[error("inner onion of {needed} bytes does not fit a {available}-byte layer")]
    LayerOverflow { needed: usize, available: usize },
    #[error("circuit needs at least one intermediate node")]
    CircuitTooShort,
    #[error("expected {expected} session keys, got {got}")]
    SessionKeyCount { expected: usize, got: usize },
    #[error("invalid onion parameters: {0}")]
    InvalidParams(&'static str),
}

impl OnionError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            OnionError::TagInvalid => ErrorKind::TagInvalid,
            OnionError::LayerMalformed => ErrorKind::LayerMalformed,
            OnionError::SizeViolation => ErrorKind::SizeViolation,
            OnionError::Replay => ErrorKind::Replay,
            _ => ErrorKind::Protocol,
        }
    }
}

/// Fixed sizes shared by every node on a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnionParams {
    /// `L`, bytes per extension block.
    pub block_len: usize,
    /// `M`, bytes per layer plaintext.
    pub layer_len: usize,
}

impl Default for OnionParams {
    fn default() -> Self {
        Self {
            block_len: DEFAULT_BLOCK_LEN,
            layer_len: DEFAULT_LAYER_LEN,
        }
    }
}

impl OnionParams {
    pub fn validate(&self) -> Result<(), OnionError> {
        if self.block_len == 0 || !self.block_len.is_multiple_of(BLOCK_LEN) {
            return Err(OnionError::InvalidParams("block length must be a positive multiple of 16"));
        }
        if !self.layer_len.is_multiple_of(BLOCK_LEN) || self.layer_len < 64 {
            return Err(OnionError::InvalidParams("layer length must be a multiple of 16 and at least 64"));
        }
        if self.layer_len > u32::MAX as usize / 2 || self.block_len > u32::MAX as usize / 2 {
            return Err(OnionError::InvalidParams("sizes must fit in 31 bits"));
        }
        Ok(())
    }

    /// Bytes of one container `O_i`.
    pub fn container_len(&self) -> usize {
        self.layer_len + BLOCK_LEN
    }

    /// Bytes of a serialized `O'_i` on a circuit with `hop_count` hops.
    pub fn wire_len(&self, hop_count: usize) -> usize {
        4 + self.container_len() + 4 + hop_count * self.block_len
    }
}
