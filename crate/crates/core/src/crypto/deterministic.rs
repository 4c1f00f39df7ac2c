//! Fully deterministic provider for tests and desk-scale simulation.
//!
//! The block cipher is a 16-round Feistel permutation over 128-bit blocks
//! with SHA-256-derived round keys. KEM and signatures are keyed-hash
//! simulations: they are correct and deterministic, but a holder of the
//! public/verification key can recompute secrets, so they model protocol
//! flow only. Verification keys double as MAC keys.

use alloc::vec::Vec;

use super::{
    hash_parts, CryptoError, CryptoProvider, KemCiphertext, KemKeyPair, KemPublicKey,
    KemSecretKey, Seed, SharedSecret, SigKeyPair, Signature, SigningKey, SymKey, VerifyingKey,
    BLOCK_LEN,
};

const ROUNDS: usize = 16;
const KEM_CHECK_LEN: usize = 16;

#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicProvider;

impl DeterministicProvider {
    pub const NAME: &'static str = "test-deterministic";
}

struct Feistel {
    round_keys: [u64; ROUNDS],
}

impl Feistel {
    fn new(key: &SymKey) -> Self {
        let mut round_keys = [0u64; ROUNDS];
        for (chunk_idx, chunk) in round_keys.chunks_mut(4).enumerate() {
            let d = hash_parts(&[b"feistel-round-keys", key.as_bytes(), &[chunk_idx as u8]]);
            for (i, rk) in chunk.iter_mut().enumerate() {
                *rk = u64::from_be_bytes(d[i * 8..i * 8 + 8].try_into().unwrap());
            }
        }
        Self { round_keys }
    }

    fn round(x: u64, rk: u64) -> u64 {
        let mut z = x ^ rk;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn split(block: &[u8]) -> (u64, u64) {
        (
            u64::from_be_bytes(block[..8].try_into().unwrap()),
            u64::from_be_bytes(block[8..16].try_into().unwrap()),
        )
    }

    fn join(block: &mut [u8], l: u64, r: u64) {
        block[..8].copy_from_slice(&l.to_be_bytes());
        block[8..16].copy_from_slice(&r.to_be_bytes());
    }

    fn encrypt(&self, block: &mut [u8]) {
        let (mut l, mut r) = Self::split(block);
        for rk in self.round_keys {
            let next = l ^ Self::round(r, rk);
            l = r;
            r = next;
        }
        Self::join(block, l, r);
    }

    fn decrypt(&self, block: &mut [u8]) {
        let (mut l, mut r) = Self::split(block);
        for rk in self.round_keys.iter().rev() {
            let prev = r ^ Self::round(l, *rk);
            r = l;
            l = prev;
        }
        Self::join(block, l, r);
    }
}

fn kem_mask(public: &[u8]) -> [u8; 32] {
    hash_parts(&[b"sim-kem-mask", public])
}

impl CryptoProvider for DeterministicProvider {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn cbc_encrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        let cipher = Feistel::new(key);
        let mut prev = *iv;
        for block in data.chunks_exact_mut(BLOCK_LEN) {
            for (b, p) in block.iter_mut().zip(prev) {
                *b ^= p;
            }
            cipher.encrypt(block);
            prev.copy_from_slice(block);
        }
    }

    fn cbc_decrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        let cipher = Feistel::new(key);
        let mut prev = *iv;
        for block in data.chunks_exact_mut(BLOCK_LEN) {
            let mut saved = [0u8; BLOCK_LEN];
            saved.copy_from_slice(block);
            cipher.decrypt(block);
            for (b, p) in block.iter_mut().zip(prev) {
                *b ^= p;
            }
            prev = saved;
        }
    }

    fn kem_keygen(&self, seed: &Seed) -> KemKeyPair {
        let secret = hash_parts(&[b"sim-kem-sk", seed.as_bytes()]);
        let public = hash_parts(&[b"sim-kem-pk", &secret]);
        KemKeyPair {
            public: KemPublicKey::new(public.to_vec()),
            secret: KemSecretKey::new(secret.to_vec()),
        }
    }

    fn kem_encapsulate(
        &self,
        public: &KemPublicKey,
        coins: &Seed,
    ) -> Result<(KemCiphertext, SharedSecret), CryptoError> {
        if public.len() != 32 {
            return Err(CryptoError::MalformedKey);
        }
        let r = coins.as_bytes();
        let mut ct: Vec<u8> = kem_mask(public.as_bytes())
            .iter()
            .zip(r)
            .map(|(m, r)| m ^ r)
            .collect();
        ct.extend_from_slice(&hash_parts(&[b"sim-kem-check", public.as_bytes(), r])[..KEM_CHECK_LEN]);
        let ss = hash_parts(&[b"sim-kem-ss", public.as_bytes(), r]);
        Ok((KemCiphertext::new(ct), SharedSecret::from_bytes(ss)))
    }

    fn kem_decapsulate(
        &self,
        secret: &KemSecretKey,
        ct: &KemCiphertext,
    ) -> Result<SharedSecret, CryptoError> {
        if ct.len() != 32 + KEM_CHECK_LEN {
            return Err(CryptoError::DecapsulationFailure);
        }
        let public = hash_parts(&[b"sim-kem-pk", secret.as_bytes()]);
        let r: Vec<u8> = kem_mask(&public)
            .iter()
            .zip(&ct.as_bytes()[..32])
            .map(|(m, c)| m ^ c)
            .collect();
        let check = hash_parts(&[b"sim-kem-check", &public, &r]);
        if check[..KEM_CHECK_LEN] != ct.as_bytes()[32..] {
            return Err(CryptoError::DecapsulationFailure);
        }
        Ok(SharedSecret::from_bytes(hash_parts(&[
            b"sim-kem-ss",
            &public,
            &r,
        ])))
    }

    fn sig_keygen(&self, seed: &Seed) -> SigKeyPair {
        let k = hash_parts(&[b"sim-sig-key", seed.as_bytes()]).to_vec();
        SigKeyPair {
            verifying: VerifyingKey::new(k.clone()),
            signing: SigningKey::new(k),
        }
    }

    fn sign(&self, key: &SigningKey, msg: &[u8]) -> Signature {
        Signature::new(hash_parts(&[b"sim-sig", key.as_bytes(), msg]).to_vec())
    }

    fn verify(&self, key: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool {
        let expected = hash_parts(&[b"sim-sig", key.as_bytes(), msg]);
        sig.len() == expected.len()
            && super::digest_eq(&expected, sig.as_bytes().try_into().unwrap())
    }

    fn verifying_key_len(&self) -> usize {
        32
    }

    fn signature_len(&self) -> usize {
        32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Qrng;

    #[test]
    fn feistel_is_a_permutation_on_blocks() {
        let c = Feistel::new(&SymKey::from_bytes([7; 32]));
        let mut rng = Qrng::from_seed(Seed::from_bytes([3; 32]));
        for _ in 0..1000 {
            let orig = rng.bytes(16);
            let mut b = orig.clone();
            c.encrypt(&mut b);
            assert_ne!(b, orig);
            c.decrypt(&mut b);
            assert_eq!(b, orig);
        }
    }

    #[test]
    fn same_inputs_give_identical_ciphertext() {
        let p = DeterministicProvider;
        let k = SymKey::from_bytes([1; 32]);
        assert_eq!(
            p.sym_encrypt(&k, b"message", [2; 16]),
            p.sym_encrypt(&k, b"message", [2; 16])
        );
    }

    #[test]
    fn keypair_is_reproducible_from_seed() {
        let p = DeterministicProvider;
        let s = Seed::from_bytes([5; 32]);
        assert_eq!(p.kem_keygen(&s), p.kem_keygen(&s));
        assert_eq!(p.sig_keygen(&s), p.sig_keygen(&s));
        assert_ne!(p.kem_keygen(&s), p.kem_keygen(&Seed::from_bytes([6; 32])));
    }

    #[test]
    fn decapsulation_rejects_tampered_ciphertext() {
        let p = DeterministicProvider;
        let kp = p.kem_keygen(&Seed::from_bytes([1; 32]));
        let (ct, _) = p
            .kem_encapsulate(&kp.public, &Seed::from_bytes([2; 32]))
            .unwrap();
        let mut bytes = ct.as_bytes().to_vec();
        bytes[0] ^= 1;
        assert_eq!(
            p.kem_decapsulate(&kp.secret, &KemCiphertext::new(bytes)),
            Err(CryptoError::DecapsulationFailure)
        );
        assert_eq!(
            p.kem_decapsulate(&kp.secret, &KemCiphertext::new(alloc::vec![0; 3])),
            Err(CryptoError::DecapsulationFailure)
        );
    }
}
