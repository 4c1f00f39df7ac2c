//! Cryptographic providers.
//!
//! A [`CryptoProvider`] supplies the block cipher, KEM and signature scheme.
//! Hashing, key derivation and padding expansion are fixed to SHA-256 and
//! shared by every provider, so initiator and relay always agree on derived
//! material regardless of which provider is plugged in.

mod deterministic;
mod metered;
#[cfg(feature = "production")]
mod production;
mod rng;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};

pub use deterministic::DeterministicProvider;
pub use metered::{Metered, OpKind, OpRecord};
#[cfg(feature = "production")]
pub use production::ProductionProvider;
pub use rng::Qrng;

pub const KEY_LEN: usize = 32;
pub const BLOCK_LEN: usize = 16;
pub const DIGEST_LEN: usize = 32;

pub type Digest = [u8; DIGEST_LEN];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("input length {0} is not a multiple of the cipher block size")]
    Unaligned(usize),
    #[error("KEM decapsulation failed")]
    DecapsulationFailure,
    #[error("malformed key material")]
    MalformedKey,
    #[error("unknown crypto provider `{0}`")]
    UnknownProvider(alloc::string::String),
}

macro_rules! octet_array {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name([u8; $len]);

        impl $name {
            pub const fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                bytes.try_into().ok().map(Self)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "("))?;
                for b in &self.0[..4] {
                    write!(f, "{:02x}", b)?;
                }
                write!(f, "..)")
            }
        }
    };
}

octet_array!(
    /// 256-bit symmetric key: session keys, one-time keys and QKD link keys.
    SymKey,
    KEY_LEN
);
octet_array!(
    /// 256-bit seed for deterministic expansion.
    Seed,
    KEY_LEN
);
octet_array!(SharedSecret, KEY_LEN);

impl SharedSecret {
    /// Session key bound to the two endpoints of a KEM handshake.
    pub fn session_key(&self, context: &[u8]) -> SymKey {
        SymKey(kdf(context, &SymKey(self.0)).0)
    }
}

macro_rules! octet_vec {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Vec<u8>);

        impl $name {
            pub fn new(bytes: Vec<u8>) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({} bytes)"), self.0.len())
            }
        }
    };
}

octet_vec!(KemPublicKey);
octet_vec!(KemSecretKey);
octet_vec!(KemCiphertext);
octet_vec!(SigningKey);
octet_vec!(VerifyingKey);
octet_vec!(Signature);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemKeyPair {
    pub public: KemPublicKey,
    pub secret: KemSecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigKeyPair {
    pub verifying: VerifyingKey,
    pub signing: SigningKey,
}

/// Padded-mode ciphertext: `iv || body`, body a non-empty multiple of the block size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymCiphertext {
    pub iv: [u8; BLOCK_LEN],
    pub body: Vec<u8>,
}

impl SymCiphertext {
    pub fn len(&self) -> usize {
        BLOCK_LEN + self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 2 * BLOCK_LEN || !bytes.len().is_multiple_of(BLOCK_LEN) {
            return Err(CryptoError::MalformedCiphertext);
        }
        let mut iv = [0u8; BLOCK_LEN];
        iv.copy_from_slice(&bytes[..BLOCK_LEN]);
        Ok(Self {
            iv,
            body: bytes[BLOCK_LEN..].to_vec(),
        })
    }
}

/// Ciphertext length produced by padded mode for a plaintext of `len` bytes.
pub const fn padded_len(len: usize) -> usize {
    BLOCK_LEN + (len / BLOCK_LEN + 1) * BLOCK_LEN
}

/// Block cipher, KEM and signature scheme behind one object-safe interface.
///
/// Implementors supply the primitives; padded and raw modes are derived from
/// `cbc_encrypt`/`cbc_decrypt`. Randomness is always passed in (as IVs or
/// coins) so a seeded run replays byte-identically with any provider.
pub trait CryptoProvider {
    fn name(&self) -> &'static str;

    /// CBC encryption in place. `data.len()` is a multiple of [`BLOCK_LEN`].
    fn cbc_encrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]);
    /// CBC decryption in place. `data.len()` is a multiple of [`BLOCK_LEN`].
    fn cbc_decrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]);

    fn kem_keygen(&self, seed: &Seed) -> KemKeyPair;
    fn kem_encapsulate(
        &self,
        public: &KemPublicKey,
        coins: &Seed,
    ) -> Result<(KemCiphertext, SharedSecret), CryptoError>;
    fn kem_decapsulate(
        &self,
        secret: &KemSecretKey,
        ct: &KemCiphertext,
    ) -> Result<SharedSecret, CryptoError>;

    fn sig_keygen(&self, seed: &Seed) -> SigKeyPair;
    fn sign(&self, key: &SigningKey, msg: &[u8]) -> Signature;
    fn verify(&self, key: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool;

    /// Verification key and signature sizes, used to size head blocks.
    fn verifying_key_len(&self) -> usize;
    fn signature_len(&self) -> usize;

    /// Padded (PKCS#7) CBC encryption.
    fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8], iv: [u8; BLOCK_LEN]) -> SymCiphertext {
        let pad = BLOCK_LEN - plaintext.len() % BLOCK_LEN;
        let mut body = Vec::with_capacity(plaintext.len() + pad);
        body.extend_from_slice(plaintext);
        body.resize(plaintext.len() + pad, pad as u8);
        self.cbc_encrypt(key, &iv, &mut body);
        SymCiphertext { iv, body }
    }

    fn sym_decrypt(&self, key: &SymKey, ct: &SymCiphertext) -> Result<Vec<u8>, CryptoError> {
        if ct.body.is_empty() || !ct.body.len().is_multiple_of(BLOCK_LEN) {
            return Err(CryptoError::MalformedCiphertext);
        }
        let mut body = ct.body.clone();
        self.cbc_decrypt(key, &ct.iv, &mut body);
        let pad = *body.last().unwrap_or(&0) as usize;
        if pad == 0 || pad > BLOCK_LEN || body[body.len() - pad..].iter().any(|&b| b as usize != pad)
        {
            return Err(CryptoError::MalformedCiphertext);
        }
        body.truncate(body.len() - pad);
        Ok(body)
    }

    /// Raw CBC: length preserving, total on block-aligned input.
    fn raw_encrypt(
        &self,
        key: &SymKey,
        iv: &[u8; BLOCK_LEN],
        data: &mut [u8],
    ) -> Result<(), CryptoError> {
        if !data.len().is_multiple_of(BLOCK_LEN) {
            return Err(CryptoError::Unaligned(data.len()));
        }
        self.cbc_encrypt(key, iv, data);
        Ok(())
    }

    fn raw_decrypt(
        &self,
        key: &SymKey,
        iv: &[u8; BLOCK_LEN],
        data: &mut [u8],
    ) -> Result<(), CryptoError> {
        if !data.len().is_multiple_of(BLOCK_LEN) {
            return Err(CryptoError::Unaligned(data.len()));
        }
        self.cbc_decrypt(key, iv, data);
        Ok(())
    }
}

#[cfg(feature = "production")]
pub const PROVIDER_NAMES: &[&str] = &[DeterministicProvider::NAME, ProductionProvider::NAME];
#[cfg(not(feature = "production"))]
pub const PROVIDER_NAMES: &[&str] = &[DeterministicProvider::NAME];

/// Looks a provider up by its configuration name.
pub fn provider_by_name(name: &str) -> Result<Box<dyn CryptoProvider>, CryptoError> {
    match name {
        DeterministicProvider::NAME => Ok(Box::new(DeterministicProvider)),
        #[cfg(feature = "production")]
        ProductionProvider::NAME => Ok(Box::new(ProductionProvider)),
        other => Err(CryptoError::UnknownProvider(other.into())),
    }
}

/// SHA-256.
pub fn hash(msg: &[u8]) -> Digest {
    Sha256::digest(msg).into()
}

/// SHA-256 over several parts, each prefixed with its big-endian u32 length.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    h.finalize().into()
}

/// `H(len(context) || context || key)`.
pub fn kdf(context: &[u8], key: &SymKey) -> Seed {
    let mut h = Sha256::new();
    h.update((context.len() as u32).to_be_bytes());
    h.update(context);
    h.update(key.as_bytes());
    Seed(h.finalize().into())
}

/// Deterministic expansion: SHA-256 in counter mode. `prg(s, a)` is a prefix of `prg(s, b)` for a < b.
pub fn prg(seed: &Seed, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + DIGEST_LEN);
    let mut counter = 0u32;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(b"qkdn-prg");
        h.update(seed.as_bytes());
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// HMAC-SHA256.
pub fn mac(key: &SymKey, msg: &[u8]) -> Digest {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key.as_bytes()).expect("any key length");
    m.update(msg);
    m.finalize().into_bytes().into()
}

/// Constant-time comparison of two digests.
pub fn digest_eq(a: &Digest, b: &Digest) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn providers() -> Vec<Box<dyn CryptoProvider>> {
        PROVIDER_NAMES
            .iter()
            .filter_map(|n| provider_by_name(n).ok())
            .collect()
    }

    #[test]
    fn one_byte_plaintext_yields_two_blocks() {
        for p in providers() {
            let ct = p.sym_encrypt(&SymKey([1; 32]), b"x", [0; 16]);
            assert_eq!(ct.to_bytes().len(), 2 * BLOCK_LEN, "{}", p.name());
            assert_eq!(padded_len(1), 32);
        }
    }

    #[test]
    fn block_aligned_plaintext_gains_a_full_padding_block() {
        for p in providers() {
            let ct = p.sym_encrypt(&SymKey([3; 32]), &[9u8; 32], [5; 16]);
            assert_eq!(ct.body.len(), 48);
            assert_eq!(p.sym_decrypt(&SymKey([3; 32]), &ct).unwrap(), vec![9u8; 32]);
        }
    }

    #[test]
    fn padded_decrypt_under_wrong_key_is_rejected_or_differs() {
        let p = DeterministicProvider;
        let mut rejected = 0;
        for i in 0..100u8 {
            let ct = p.sym_encrypt(&SymKey([i; 32]), b"secret material", [i; 16]);
            match p.sym_decrypt(&SymKey([i.wrapping_add(1); 32]), &ct) {
                Err(CryptoError::MalformedCiphertext) => rejected += 1,
                Ok(m) => assert_ne!(m, b"secret material"),
                Err(e) => panic!("{e}"),
            }
        }
        assert!(rejected > 80);
    }

    #[test]
    fn ciphertext_parse_rejects_short_and_unaligned() {
        assert!(SymCiphertext::from_bytes(&[0; 16]).is_err());
        assert!(SymCiphertext::from_bytes(&[0; 33]).is_err());
        assert!(SymCiphertext::from_bytes(&[0; 32]).is_ok());
    }

    #[test]
    fn raw_mode_rejects_unaligned() {
        let p = DeterministicProvider;
        let mut d = [0u8; 17];
        assert_eq!(
            p.raw_encrypt(&SymKey([0; 32]), &[0; 16], &mut d),
            Err(CryptoError::Unaligned(17))
        );
    }

    #[test]
    fn raw_decrypt_under_other_key_differs() {
        let mut seed = Qrng::from_seed(Seed([11; 32]));
        let p = DeterministicProvider;
        for _ in 0..100 {
            let k = seed.draw_key();
            let k2 = seed.draw_key();
            let block = seed.bytes(64);
            let mut c = block.clone();
            p.raw_encrypt(&k, &[0; 16], &mut c).unwrap();
            let mut d = c.clone();
            p.raw_decrypt(&k2, &[0; 16], &mut d).unwrap();
            assert_ne!(d, block);
            p.raw_decrypt(&k, &[0; 16], &mut c).unwrap();
            assert_eq!(c, block);
        }
    }

    #[test]
    fn hash_is_fixed_width_and_separates_corpus() {
        assert_eq!(hash(b"").len(), 32);
        assert_eq!(hash(b"abc"), hash(b"abc"));
        let corpus: Vec<Vec<u8>> = (0..256u32).map(|i| i.to_be_bytes().to_vec()).collect();
        let mut digests: Vec<Digest> = corpus.iter().map(|m| hash(m)).collect();
        digests.sort();
        digests.dedup();
        assert_eq!(digests.len(), corpus.len());
    }

    #[test]
    fn hash_matches_sha256_reference() {
        // FIPS 180-2 "abc" vector
        assert_eq!(
            hash(b"abc")[..8],
            [0xba, 0x78, 0x16, 0xbf, 0x8f, 0x01, 0xcf, 0xea]
        );
    }

    #[test]
    fn kdf_is_stable_and_domain_separated() {
        let k1 = SymKey([1; 32]);
        let k2 = SymKey([2; 32]);
        assert_eq!(kdf(b"P1", &k1), kdf(b"P1", &k1));
        for i in 0..32u32 {
            for j in 0..32u32 {
                if i != j {
                    assert_ne!(kdf(&i.to_be_bytes(), &k1), kdf(&j.to_be_bytes(), &k1));
                }
            }
            assert_ne!(kdf(&i.to_be_bytes(), &k1), kdf(&i.to_be_bytes(), &k2));
        }
        // length prefix keeps ("ab", k) and ("a", "b"||k) apart
        assert_ne!(kdf(b"ab", &k1), kdf(b"a", &k1));
    }

    #[test]
    fn prg_is_deterministic_with_prefix_property() {
        let s = Seed([4; 32]);
        assert_eq!(prg(&s, 100), prg(&s, 100));
        assert_eq!(prg(&s, 16)[..], prg(&s, 32)[..16]);
        assert_eq!(prg(&s, 33)[..], prg(&s, 4096)[..33]);
        assert_ne!(prg(&s, 32), prg(&Seed([5; 32]), 32));
    }

    #[test]
    fn unknown_provider_name_is_rejected() {
        assert!(matches!(
            provider_by_name("rot13"),
            Err(CryptoError::UnknownProvider(_))
        ));
    }

    #[test]
    fn mac_binds_key_and_message() {
        let a = mac(&SymKey([1; 32]), b"m");
        assert!(digest_eq(&a, &mac(&SymKey([1; 32]), b"m")));
        assert!(!digest_eq(&a, &mac(&SymKey([2; 32]), b"m")));
        assert!(!digest_eq(&a, &mac(&SymKey([1; 32]), b"n")));
    }
}
