//! Message envelopes: a payload attested to a module, signed by the sender
//! and encrypted for the recipient. Two providers share one contract: a
//! deterministic mock built from keyed hashing, and a real one using
//! ed25519 signatures with x25519 + ChaCha20-Poly1305 encryption.

use std::collections::HashMap;
use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    Real,
}

impl ProviderKind {
    pub fn parse(s: &str) -> Option<ProviderKind> {
        match s {
            "mock" => Some(ProviderKind::Mock),
            "real" => Some(ProviderKind::Real),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::Mock => "mock",
            ProviderKind::Real => "real",
        }
    }
}

#[derive(Clone)]
pub struct KeyPair {
    pub kind: ProviderKind,
    pub public: Vec<u8>,
    secret: Vec<u8>,
    pub seed: String,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({}, {})", self.kind.as_str(), hex::encode(&self.public))
    }
}

impl KeyPair {
    pub fn id(&self) -> String {
        hex::encode(&self.public)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Decrypt,
    Signature,
    Attestation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decrypt => "decrypt",
            Stage::Signature => "signature",
            Stage::Attestation => "attestation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: Vec<u8>,
    pub recipient: Vec<u8>,
    pub module_hash: Vec<u8>,
    /// Step number (8 bytes, big endian) followed by the attestation token.
    pub attestation: Vec<u8>,
    pub signature: Vec<u8>,
    pub ciphertext: Vec<u8>,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in [&self.sender, &self.recipient, &self.module_hash, &self.attestation, &self.signature, &self.ciphertext] {
            out.extend_from_slice(&(f.len() as u32).to_be_bytes());
            out.extend_from_slice(f);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Envelope> {
        let mut fields = Vec::with_capacity(6);
        let mut pos = 0usize;
        for _ in 0..6 {
            let len = u32::from_be_bytes(bytes.get(pos..pos + 4)?.try_into().ok()?) as usize;
            pos += 4;
            fields.push(bytes.get(pos..pos.checked_add(len)?)?.to_vec());
            pos += len;
        }
        if pos != bytes.len() {
            return None;
        }
        let mut it = fields.into_iter();
        Some(Envelope {
            sender: it.next()?,
            recipient: it.next()?,
            module_hash: it.next()?,
            attestation: it.next()?,
            signature: it.next()?,
            ciphertext: it.next()?,
        })
    }
}

/// What a successfully opened envelope yields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened {
    pub payload: Vec<u8>,
    pub sender: Vec<u8>,
    pub module_hash: String,
    pub step: u64,
}

fn h(parts: &[&[u8]]) -> [u8; 32] {
    let mut d = Sha256::new();
    for p in parts {
        d.update((p.len() as u64).to_be_bytes());
        d.update(p);
    }
    d.finalize().into()
}

fn signed_bytes(payload: &[u8], module_hash: &[u8], recipient: &[u8], attestation: &[u8]) -> Vec<u8> {
    h(&[b"signed", payload, module_hash, recipient, attestation]).to_vec()
}

fn attest_token(payload: &[u8], module_hash: &[u8], step: u64) -> [u8; 32] {
    h(&[b"attest", payload, module_hash, &step.to_be_bytes()])
}

fn keystream_xor(key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (block, chunk) in data.chunks(32).enumerate() {
        let ks = h(&[b"stream", key, &(block as u64).to_be_bytes()]);
        out.extend(chunk.iter().zip(ks.iter()).map(|(a, b)| a ^ b));
    }
    out
}

/// Crypto provider. The mock keeps the secrets of the keys it issued so it
/// can play both ends of a keyed-hash scheme inside one process.
#[derive(Debug, Clone)]
pub struct Provider {
    pub kind: ProviderKind,
    ring: HashMap<Vec<u8>, Vec<u8>>,
}

impl Provider {
    pub fn new(kind: ProviderKind) -> Provider {
        Provider { kind, ring: HashMap::new() }
    }

    /// Deterministic key derivation from a seed string.
    pub fn keypair(&mut self, seed: &str) -> KeyPair {
        match self.kind {
            ProviderKind::Mock => {
                let secret = h(&[b"mock-secret", seed.as_bytes()]).to_vec();
                let public = h(&[b"mock-public", &secret]).to_vec();
                self.ring.insert(public.clone(), secret.clone());
                KeyPair { kind: self.kind, public, secret, seed: seed.into() }
            }
            ProviderKind::Real => {
                let sign_seed = h(&[b"ed25519", seed.as_bytes()]);
                let dh_seed = h(&[b"x25519", seed.as_bytes()]);
                let sk = SigningKey::from_bytes(&sign_seed);
                let dh = x25519_dalek::StaticSecret::from(dh_seed);
                let mut public = sk.verifying_key().to_bytes().to_vec();
                public.extend_from_slice(x25519_dalek::PublicKey::from(&dh).as_bytes());
                let mut secret = sign_seed.to_vec();
                secret.extend_from_slice(&dh_seed);
                KeyPair { kind: self.kind, public, secret, seed: seed.into() }
            }
        }
    }

    fn sign(&self, kp: &KeyPair, msg: &[u8]) -> Vec<u8> {
        match self.kind {
            ProviderKind::Mock => h(&[b"sig", &kp.secret, msg]).to_vec(),
            ProviderKind::Real => {
                let sk = SigningKey::from_bytes(kp.secret[..32].try_into().expect("key length"));
                sk.sign(msg).to_bytes().to_vec()
            }
        }
    }

    pub fn verify_signature(&self, public: &[u8], msg: &[u8], sig: &[u8]) -> bool {
        match self.kind {
            ProviderKind::Mock => match self.ring.get(public) {
                Some(secret) => h(&[b"sig", secret, msg]).as_slice() == sig,
                None => false,
            },
            ProviderKind::Real => {
                let (Some(pk), Ok(sig)) = (public.get(..32), Signature::from_slice(sig)) else { return false };
                match VerifyingKey::from_bytes(pk.try_into().expect("32 bytes")) {
                    Ok(vk) => vk.verify(msg, &sig).is_ok(),
                    Err(_) => false,
                }
            }
        }
    }

    fn real_key(&self, my_secret: &[u8], their_public: &[u8], sender: &[u8], recipient: &[u8]) -> Option<[u8; 32]> {
        let dh = x25519_dalek::StaticSecret::from(<[u8; 32]>::try_from(my_secret.get(32..64)?).ok()?);
        let pk = x25519_dalek::PublicKey::from(<[u8; 32]>::try_from(their_public.get(32..64)?).ok()?);
        let shared = dh.diffie_hellman(&pk);
        Some(h(&[b"aead-key", shared.as_bytes(), sender, recipient]))
    }

    fn encrypt(&self, sender: &KeyPair, recipient: &[u8], nonce_seed: &[u8], plain: &[u8]) -> Vec<u8> {
        match self.kind {
            ProviderKind::Mock => {
                let rs = self.ring.get(recipient).cloned().unwrap_or_default();
                let body = keystream_xor(&h(&[b"enc", &rs, nonce_seed]), plain);
                let tag = h(&[b"tag", &rs, nonce_seed, &body]);
                let mut out = nonce_seed.to_vec();
                out.extend_from_slice(&tag);
                out.extend_from_slice(&body);
                out
            }
            ProviderKind::Real => {
                let key = self.real_key(&sender.secret, recipient, &sender.public, recipient).expect("well-formed keys");
                let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
                let nonce = &nonce_seed[..12];
                let mut out = nonce.to_vec();
                out.extend(cipher.encrypt(Nonce::from_slice(nonce), plain).expect("encryption"));
                out
            }
        }
    }

    fn decrypt(&self, me: &KeyPair, sender: &[u8], ct: &[u8]) -> Option<Vec<u8>> {
        match self.kind {
            ProviderKind::Mock => {
                if ct.len() < 64 {
                    return None;
                }
                let (nonce_seed, rest) = ct.split_at(32);
                let (tag, body) = rest.split_at(32);
                if h(&[b"tag", &me.secret, nonce_seed, body]).as_slice() != tag {
                    return None;
                }
                Some(keystream_xor(&h(&[b"enc", &me.secret, nonce_seed]), body))
            }
            ProviderKind::Real => {
                if ct.len() < 12 {
                    return None;
                }
                let key = self.real_key(&me.secret, sender, sender, &me.public)?;
                let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
                cipher.decrypt(Nonce::from_slice(&ct[..12]), &ct[12..]).ok()
            }
        }
    }

    /// Attest, sign and encrypt `payload` for `recipient`.
    pub fn seal(&self, payload: &[u8], module_hash: &str, step: u64, sender: &KeyPair, recipient: &[u8]) -> Envelope {
        let mh = module_hash.as_bytes();
        let mut attestation = step.to_be_bytes().to_vec();
        attestation.extend_from_slice(&attest_token(payload, mh, step));
        let signature = self.sign(sender, &signed_bytes(payload, mh, recipient, &attestation));
        let nonce_seed = h(&[b"nonce", &signature]);
        let ciphertext = self.encrypt(sender, recipient, &nonce_seed, payload);
        Envelope {
            sender: sender.public.clone(),
            recipient: recipient.to_vec(),
            module_hash: mh.to_vec(),
            attestation,
            signature,
            ciphertext,
        }
    }

    /// Decrypt, then check the signature, then the attestation.
    pub fn open(&self, bytes: &[u8], me: &KeyPair, known: &[Vec<u8>]) -> Result<Opened, Stage> {
        let env = Envelope::from_bytes(bytes).ok_or(Stage::Decrypt)?;
        if env.recipient != me.public {
            return Err(Stage::Decrypt);
        }
        let payload = self.decrypt(me, &env.sender, &env.ciphertext).ok_or(Stage::Decrypt)?;
        if !known.contains(&env.sender) {
            return Err(Stage::Signature);
        }
        let signed = signed_bytes(&payload, &env.module_hash, &env.recipient, &env.attestation);
        if !self.verify_signature(&env.sender, &signed, &env.signature) {
            return Err(Stage::Signature);
        }
        if env.attestation.len() != 40 {
            return Err(Stage::Attestation);
        }
        let step = u64::from_be_bytes(env.attestation[..8].try_into().expect("8 bytes"));
        if env.attestation[8..] != attest_token(&payload, &env.module_hash, step) {
            return Err(Stage::Attestation);
        }
        let module_hash = String::from_utf8(env.module_hash.clone()).map_err(|_| Stage::Attestation)?;
        Ok(Opened { payload, sender: env.sender, module_hash, step })
    }

    /// Known keys under which the envelope's signature verifies.
    pub fn signers(&self, bytes: &[u8], payload: &[u8], known: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let Some(env) = Envelope::from_bytes(bytes) else { return vec![] };
        let signed = signed_bytes(payload, &env.module_hash, &env.recipient, &env.attestation);
        known.iter().filter(|k| self.verify_signature(k, &signed, &env.signature)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(kind: ProviderKind) -> (Provider, KeyPair, KeyPair, KeyPair) {
        let mut p = Provider::new(kind);
        let a = p.keypair("alice");
        let b = p.keypair("bob");
        let c = p.keypair("carol");
        (p, a, b, c)
    }

    #[test]
    fn round_trip_both_providers() {
        for kind in [ProviderKind::Mock, ProviderKind::Real] {
            let (p, a, b, _) = setup(kind);
            let env = p.seal(b"hello", "m1", 7, &a, &b.public).to_bytes();
            let o = p.open(&env, &b, std::slice::from_ref(&a.public)).unwrap();
            assert_eq!(o.payload, b"hello");
            assert_eq!(o.module_hash, "m1");
            assert_eq!(o.sender, a.public);
            assert_eq!(o.step, 7);
        }
    }

    #[test]
    fn mock_is_deterministic() {
        let (p, a, b, _) = setup(ProviderKind::Mock);
        assert_eq!(p.seal(b"x", "m", 1, &a, &b.public), p.seal(b"x", "m", 1, &a, &b.public));
    }

    #[test]
    fn wrong_recipient_and_signature_swap() {
        for kind in [ProviderKind::Mock, ProviderKind::Real] {
            let (p, a, b, c) = setup(kind);
            let known = vec![a.public.clone(), b.public.clone(), c.public.clone()];
            let env = p.seal(b"hi", "m", 1, &a, &b.public);
            assert_eq!(p.open(&env.to_bytes(), &c, &known), Err(Stage::Decrypt));
            // carol signs the same content; her signature under alice's name must fail
            let other = p.seal(b"hi", "m", 1, &c, &b.public);
            let mut forged = env.clone();
            forged.signature = other.signature;
            assert_eq!(p.open(&forged.to_bytes(), &b, &known), Err(Stage::Signature));
        }
    }
}
