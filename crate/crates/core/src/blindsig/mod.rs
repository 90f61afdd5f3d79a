//! Blind signatures: the bank signs coin digests it never sees.
//!
//! [`BlindScheme`] is the interface the rest of the crate uses; [`RsaFdh`]
//! is the full-domain-hash RSA instantiation. The unblinding factor lives
//! in [`Unblinder`], which wipes its bytes on drop.

use num_bigint_dig::{BigUint, ModInverse, RandBigInt};
use num_traits::{One, Zero};
use rand_core::{CryptoRng, RngCore};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::RsaPrivateKey;
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::Zeroizing;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlindError {
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("blinded message outside the signing domain")]
    InvalidBlindedMessage,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("malformed key or signature encoding")]
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlindedMessage(pub Vec<u8>);

/// A signature on a blinded message, before unblinding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlindedSignature(pub Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlindSignature(pub Vec<u8>);

/// Blinding randomness, held by the requester until it unblinds.
pub struct Unblinder(Zeroizing<Vec<u8>>);

pub trait BlindScheme {
    type PublicKey: Clone + Send + Sync;
    type SecretKey: Send + Sync;

    fn blind(
        pk: &Self::PublicKey,
        msg: &[u8],
        rng: &mut (impl RngCore + CryptoRng),
    ) -> (BlindedMessage, Unblinder);
    fn sign_blinded(sk: &Self::SecretKey, k: &BlindedMessage) -> Result<BlindedSignature, BlindError>;
    fn unblind(pk: &Self::PublicKey, sig: &BlindedSignature, u: Unblinder) -> Result<BlindSignature, BlindError>;
    fn verify(pk: &Self::PublicKey, msg: &[u8], sig: &BlindSignature) -> bool;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsaPublicKey {
    n: BigUint,
    e: BigUint,
}

pub struct RsaSecretKey {
    public: RsaPublicKey,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

pub struct BlindKeypair {
    pub pk: RsaPublicKey,
    pub sk: RsaSecretKey,
}

impl BlindKeypair {
    pub fn generate(bits: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<Self, BlindError> {
        let key = RsaPrivateKey::new(rng, bits).map_err(|e| BlindError::KeyGeneration(e.to_string()))?;
        let primes = key.primes();
        if primes.len() != 2 {
            return Err(BlindError::KeyGeneration("expected two primes".into()));
        }
        let (p, q) = (primes[0].clone(), primes[1].clone());
        let d = key.d();
        let one = BigUint::one();
        let qinv = q
            .clone()
            .mod_inverse(&p)
            .and_then(|x| x.to_biguint())
            .ok_or_else(|| BlindError::KeyGeneration("q not invertible mod p".into()))?;
        let pk = RsaPublicKey { n: key.n().clone(), e: key.e().clone() };
        let sk = RsaSecretKey {
            public: pk.clone(),
            dp: d % (&p - &one),
            dq: d % (&q - &one),
            p,
            q,
            qinv,
        };
        Ok(BlindKeypair { pk, sk })
    }
}

impl RsaPublicKey {
    pub fn modulus_len(&self) -> usize {
        self.n.bits().div_ceil(8)
    }

    pub fn modulus_bits(&self) -> usize {
        self.n.bits()
    }

    /// `u32 len(n) | n | u32 len(e) | e`, big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for x in [&self.n, &self.e] {
            let b = x.to_bytes_be();
            out.extend((b.len() as u32).to_be_bytes());
            out.extend(b);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BlindError> {
        let mut rest = bytes;
        let mut parts = Vec::new();
        for _ in 0..2 {
            if rest.len() < 4 {
                return Err(BlindError::Malformed);
            }
            let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            if rest.len() < 4 + len || len == 0 || rest[4] == 0 {
                return Err(BlindError::Malformed);
            }
            parts.push(BigUint::from_bytes_be(&rest[4..4 + len]));
            rest = &rest[4 + len..];
        }
        if !rest.is_empty() {
            return Err(BlindError::Malformed);
        }
        let e = parts.pop().unwrap();
        let n = parts.pop().unwrap();
        rsa::RsaPublicKey::new(n.clone(), e.clone()).map_err(|_| BlindError::Malformed)?;
        Ok(RsaPublicKey { n, e })
    }

    /// Full-domain hash onto `Z_n`: SHA-256 in counter mode, 16 bytes wider
    /// than the modulus, reduced mod `n`.
    pub fn fdh(&self, msg: &[u8]) -> BigUint {
        let want = self.modulus_len() + 16;
        let mut buf = Vec::with_capacity(want + 32);
        let mut counter = 0u32;
        while buf.len() < want {
            let mut h = Sha256::new();
            h.update(b"atmcash/fdh");
            h.update(counter.to_be_bytes());
            h.update(msg);
            buf.extend(h.finalize());
            counter += 1;
        }
        BigUint::from_bytes_be(&buf[..want]) % &self.n
    }

    fn fixed(&self, x: &BigUint) -> Vec<u8> {
        let b = x.to_bytes_be();
        let mut out = vec![0u8; self.modulus_len() - b.len()];
        out.extend(b);
        out
    }

    fn parse(&self, bytes: &[u8]) -> Option<BigUint> {
        if bytes.len() != self.modulus_len() {
            return None;
        }
        let x = BigUint::from_bytes_be(bytes);
        (x < self.n).then_some(x)
    }
}

impl RsaSecretKey {
    pub fn public_key(&self) -> &RsaPublicKey {
        &self.public
    }

    fn raw_sign(&self, x: &BigUint) -> BigUint {
        let m1 = x.modpow(&self.dp, &self.p);
        let m2 = x.modpow(&self.dq, &self.q);
        let diff = (&m1 + &self.p - (&m2 % &self.p)) % &self.p;
        let h = (&self.qinv * diff) % &self.p;
        m2 + h * &self.q
    }
}

/// RSA blind signature with a full-domain hash.
pub struct RsaFdh;

impl BlindScheme for RsaFdh {
    type PublicKey = RsaPublicKey;
    type SecretKey = RsaSecretKey;

    fn blind(pk: &RsaPublicKey, msg: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> (BlindedMessage, Unblinder) {
        let r = loop {
            let r = rng.gen_biguint_below(&pk.n);
            if !r.is_zero() && r.clone().mod_inverse(&pk.n).is_some() {
                break r;
            }
        };
        let k = (pk.fdh(msg) * r.modpow(&pk.e, &pk.n)) % &pk.n;
        (BlindedMessage(pk.fixed(&k)), Unblinder(Zeroizing::new(pk.fixed(&r))))
    }

    fn sign_blinded(sk: &RsaSecretKey, k: &BlindedMessage) -> Result<BlindedSignature, BlindError> {
        let x = sk.public.parse(&k.0).ok_or(BlindError::InvalidBlindedMessage)?;
        Ok(BlindedSignature(sk.public.fixed(&sk.raw_sign(&x))))
    }

    fn unblind(pk: &RsaPublicKey, sig: &BlindedSignature, u: Unblinder) -> Result<BlindSignature, BlindError> {
        let s = pk.parse(&sig.0).ok_or(BlindError::InvalidSignature)?;
        let r = pk.parse(&u.0).ok_or(BlindError::Malformed)?;
        let r_inv = r
            .mod_inverse(&pk.n)
            .and_then(|x| x.to_biguint())
            .ok_or(BlindError::Malformed)?;
        Ok(BlindSignature(pk.fixed(&((s * r_inv) % &pk.n))))
    }

    fn verify(pk: &RsaPublicKey, msg: &[u8], sig: &BlindSignature) -> bool {
        match pk.parse(&sig.0) {
            Some(s) => s.modpow(&pk.e, &pk.n) == pk.fdh(msg),
            None => false,
        }
    }
}
