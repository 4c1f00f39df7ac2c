use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::{
    CryptoError, CryptoProvider, KemCiphertext, KemKeyPair, KemPublicKey, KemSecretKey, Seed,
    SharedSecret, SigKeyPair, Signature, SigningKey, SymCiphertext, SymKey, VerifyingKey,
    BLOCK_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    KemEncapsulate,
    KemDecapsulate,
    SymEncrypt,
    SymDecrypt,
    RawEncrypt,
    RawDecrypt,
    Sign,
    Verify,
    LinkSeal,
    LinkVerify,
    LinkDecrypt,
}

impl OpKind {
    pub const ALL: [OpKind; 11] = [
        OpKind::KemEncapsulate,
        OpKind::KemDecapsulate,
        OpKind::SymEncrypt,
        OpKind::SymDecrypt,
        OpKind::RawEncrypt,
        OpKind::RawDecrypt,
        OpKind::Sign,
        OpKind::Verify,
        OpKind::LinkSeal,
        OpKind::LinkVerify,
        OpKind::LinkDecrypt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::KemEncapsulate => "kem-encapsulate",
            OpKind::KemDecapsulate => "kem-decapsulate",
            OpKind::SymEncrypt => "sym-encrypt",
            OpKind::SymDecrypt => "sym-decrypt",
            OpKind::RawEncrypt => "raw-encrypt",
            OpKind::RawDecrypt => "raw-decrypt",
            OpKind::Sign => "sign",
            OpKind::Verify => "verify",
            OpKind::LinkSeal => "link-seal",
            OpKind::LinkVerify => "link-verify",
            OpKind::LinkDecrypt => "link-decrypt",
        }
    }
}

/// One metered operation. `session_key` is set for symmetric operations run
/// under a registered PQC session key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpRecord {
    pub kind: OpKind,
    pub session_key: bool,
}

/// Provider wrapper that logs every high-level operation in call order.
pub struct Metered<'a> {
    inner: &'a dyn CryptoProvider,
    session_keys: &'a BTreeSet<SymKey>,
    log: RefCell<Vec<OpRecord>>,
}

impl<'a> Metered<'a> {
    pub fn new(inner: &'a dyn CryptoProvider, session_keys: &'a BTreeSet<SymKey>) -> Self {
        Self {
            inner,
            session_keys,
            log: RefCell::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<OpRecord> {
        core::mem::take(&mut *self.log.borrow_mut())
    }

    fn record(&self, kind: OpKind, key: Option<&SymKey>) {
        let session_key = key.is_some_and(|k| self.session_keys.contains(k));
        self.log.borrow_mut().push(OpRecord { kind, session_key });
    }
}

impl CryptoProvider for Metered<'_> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn cbc_encrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        self.inner.cbc_encrypt(key, iv, data)
    }

    fn cbc_decrypt(&self, key: &SymKey, iv: &[u8; BLOCK_LEN], data: &mut [u8]) {
        self.inner.cbc_decrypt(key, iv, data)
    }

    fn kem_keygen(&self, seed: &Seed) -> KemKeyPair {
        self.inner.kem_keygen(seed)
    }

    fn kem_encapsulate(
        &self,
        public: &KemPublicKey,
        coins: &Seed,
    ) -> Result<(KemCiphertext, SharedSecret), CryptoError> {
        self.record(OpKind::KemEncapsulate, None);
        self.inner.kem_encapsulate(public, coins)
    }

    fn kem_decapsulate(
        &self,
        secret: &KemSecretKey,
        ct: &KemCiphertext,
    ) -> Result<SharedSecret, CryptoError> {
        self.record(OpKind::KemDecapsulate, None);
        self.inner.kem_decapsulate(secret, ct)
    }

    fn sig_keygen(&self, seed: &Seed) -> SigKeyPair {
        self.inner.sig_keygen(seed)
    }

    fn sign(&self, key: &SigningKey, msg: &[u8]) -> Signature {
        self.record(OpKind::Sign, None);
        self.inner.sign(key, msg)
    }

    fn verify(&self, key: &VerifyingKey, msg: &[u8], sig: &Signature) -> bool {
        self.record(OpKind::Verify, None);
        self.inner.verify(key, msg, sig)
    }

    fn verifying_key_len(&self) -> usize {
        self.inner.verifying_key_len()
    }

    fn signature_len(&self) -> usize {
        self.inner.signature_len()
    }

    fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8], iv: [u8; BLOCK_LEN]) -> SymCiphertext {
        self.record(OpKind::SymEncrypt, Some(key));
        self.inner.sym_encrypt(key, plaintext, iv)
    }

    fn sym_decrypt(&self, key: &SymKey, ct: &SymCiphertext) -> Result<Vec<u8>, CryptoError> {
        self.record(OpKind::SymDecrypt, Some(key));
        self.inner.sym_decrypt(key, ct)
    }

    fn raw_encrypt(
        &self,
        key: &SymKey,
        iv: &[u8; BLOCK_LEN],
        data: &mut [u8],
    ) -> Result<(), CryptoError> {
        self.record(OpKind::RawEncrypt, Some(key));
        self.inner.raw_encrypt(key, iv, data)
    }

    fn raw_decrypt(
        &self,
        key: &SymKey,
        iv: &[u8; BLOCK_LEN],
        data: &mut [u8],
    ) -> Result<(), CryptoError> {
        self.record(OpKind::RawDecrypt, Some(key));
        self.inner.raw_decrypt(key, iv, data)
    }
}
