//! AES-256-CBC, ML-KEM-768 and ML-DSA-44.
//!
//! Key generation and encapsulation draw from a ChaCha20 stream seeded by the
//! caller, which keeps simulated runs reproducible.

use aes::cipher::block_padding::NoPadding;
use aes::cipher::{BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use aes::Aes256;
use ml_dsa::{EncodedSignature, EncodedVerifyingKey, KeyGen, MlDsa44};
use ml_kem::kem::{Decapsulate, Encapsulate};
use ml_kem::{EncodedSizeUser, KemCore, MlKem768};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::{
    CryptoError, CryptoProvider, KemCiphertext, KemKeyPair, KemPublicKey, KemSecretKey, Seed,
    SharedSecret, SigKeyPair, Signature, SigningKey, SymKey, VerifyingKey, BLOCK_LEN,
};

type Ek = <MlKem768 as KemCore>::EncapsulationKey;
type Dk = <MlKem768 as KemCore>::DecapsulationKey;

// Empty ML-DSA context string.
const SIG_CTX: &[u8] = b"";

#[derive(Debug, Clone, Copy, Default)]
pub struct ProductionProvider;

impl ProductionProvider {
    pub const NAME: &'static str = "production";
}

impl CryptoProvider for ProductionProvider {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn cbc_encrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        let enc = cbc::Encryptor::<Aes256>::new(key.as_bytes().into(), iv.into());
        let len = data.len();
        enc.encrypt_padded_mut::<NoPadding>(data, len)
            .expect("caller passes block-aligned data");
    }

    fn cbc_decrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        let dec = cbc::Decryptor::<Aes256>::new(key.as_bytes().into(), iv.into());
        dec.decrypt_padded_mut::<NoPadding>(data)
            .expect("caller passes block-aligned data");
    }

    fn kem_keygen(&self, seed: &Seed) -> KemKeyPair {
        let mut rng = ChaCha20Rng::from_seed(*seed.as_bytes());
        let (dk, ek) = MlKem768::generate(&mut rng);
        KemKeyPair {
            public: KemPublicKey::new(ek.as_bytes().to_vec()),
            secret: KemSecretKey::new(dk.as_bytes().to_vec()),
        }
    }

    fn kem_encapsulate(
        &self,
        public: &KemPublicKey,
        coins: &Seed,
    ) -> Result<(KemCiphertext, SharedSecret), CryptoError> {
        let encoded = public
            .as_bytes()
            .try_into()
            .map_err(|_| CryptoError::MalformedKey)?;
        let ek = Ek::from_bytes(encoded);
        let mut rng = ChaCha20Rng::from_seed(*coins.as_bytes());
        let (ct, ss) = ek
            .encapsulate(&mut rng)
            .map_err(|_| CryptoError::MalformedKey)?;
        let ss: [u8; 32] = ss.into();
        Ok((KemCiphertext::new(ct.to_vec()), SharedSecret::from_bytes(ss)))
    }

    fn kem_decapsulate(
        &self,
        secret: &KemSecretKey,
        ct: &KemCiphertext,
    ) -> Result<SharedSecret, CryptoError> {
        let encoded = secret
            .as_bytes()
            .try_into()
            .map_err(|_| CryptoError::MalformedKey)?;
        let dk = Dk::from_bytes(encoded);
        let ct = ct
            .as_bytes()
            .try_into()
            .map_err(|_| CryptoError::DecapsulationFailure)?;
        let ss = dk
            .decapsulate(ct)
            .map_err(|_| CryptoError::DecapsulationFailure)?;
        let ss: [u8; 32] = ss.into();
        Ok(SharedSecret::from_bytes(ss))
    }

    fn sig_keygen(&self, seed: &Seed) -> SigKeyPair {
        let kp = MlDsa44::key_gen_internal(seed.as_bytes().into());
        SigKeyPair {
            verifying: VerifyingKey::new(kp.verifying_key().encode().to_vec()),
            signing: SigningKey::new(kp.signing_key().encode().to_vec()),
        }
    }

    fn sign(&self, key: &SigningKey, msg: &[u8]) -> Signature {
        let encoded = key
            .as_bytes()
            .try_into()
            .expect("signing keys are only produced by sig_keygen");
        let sk = ml_dsa::SigningKey::<MlDsa44>::decode(encoded);
        let sig = sk
            .sign_deterministic(msg, SIG_CTX)
            .expect("empty context is within bounds");
        Signature::new(sig.encode().to_vec())
    }

    fn verify(&self, key: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(vk_enc) = <&EncodedVerifyingKey<MlDsa44>>::try_from(key.as_bytes()) else {
            return false;
        };
        let Ok(sig_enc) = <&EncodedSignature<MlDsa44>>::try_from(sig.as_bytes()) else {
            return false;
        };
        let Some(sig) = ml_dsa::Signature::<MlDsa44>::decode(sig_enc) else {
            return false;
        };
        ml_dsa::VerifyingKey::<MlDsa44>::decode(vk_enc).verify_with_context(msg, SIG_CTX, &sig)
    }

    fn verifying_key_len(&self) -> usize {
        1312
    }

    fn signature_len(&self) -> usize {
        2420
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aes_256_cbc_matches_sp800_38a_vector() {
        // NIST SP 800-38A F.2.5, first block.
        let key: [u8; 32] = [
            0x60, 0x3d, 0xeb, 0x10, 0x15, 0xca, 0x71, 0xbe, 0x2b, 0x73, 0xae, 0xf0, 0x85, 0x7d,
            0x77, 0x81, 0x1f, 0x35, 0x2c, 0x07, 0x3b, 0x61, 0x08, 0xd7, 0x2d, 0x98, 0x10, 0xa3,
            0x09, 0x14, 0xdf, 0xf4,
        ];
        let iv: [u8; 16] = core::array::from_fn(|i| i as u8);
        let mut data = [
            0x6b, 0xc1, 0xbe, 0xe2, 0x2e, 0x40, 0x9f, 0x96, 0xe9, 0x3d, 0x7e, 0x11, 0x73, 0x93,
            0x17, 0x2a,
        ];
        ProductionProvider.cbc_encrypt(&SymKey::from_bytes(key), &iv, &mut data);
        assert_eq!(
            data,
            [
                0xf5, 0x8c, 0x4c, 0x04, 0xd6, 0xe5, 0xf1, 0xba, 0x77, 0x9e, 0xab, 0xfb, 0x5f, 0x7b,
                0xfb, 0xd6
            ]
        );
    }

    #[test]
    fn kem_and_signature_round_trip() {
        let p = ProductionProvider;
        let kp = p.kem_keygen(&Seed::from_bytes([1; 32]));
        assert_eq!(kp, p.kem_keygen(&Seed::from_bytes([1; 32])));
        let (ct, ss) = p
            .kem_encapsulate(&kp.public, &Seed::from_bytes([2; 32]))
            .unwrap();
        assert_eq!(p.kem_decapsulate(&kp.secret, &ct).unwrap(), ss);
        let (_, ss2) = p
            .kem_encapsulate(&kp.public, &Seed::from_bytes([3; 32]))
            .unwrap();
        assert_ne!(ss, ss2);

        let sk = p.sig_keygen(&Seed::from_bytes([4; 32]));
        let sig = p.sign(&sk.signing, b"onion");
        assert_eq!(sig.len(), p.signature_len());
        assert_eq!(sk.verifying.len(), p.verifying_key_len());
        assert!(p.verify(&sk.verifying, b"onion", &sig));
        assert!(!p.verify(&sk.verifying, b"onioN", &sig));
        let other = p.sig_keygen(&Seed::from_bytes([5; 32]));
        assert!(!p.verify(&other.verifying, b"onion", &sig));
    }
}
