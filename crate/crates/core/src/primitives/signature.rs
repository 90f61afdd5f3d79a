//! Schnorr signatures over the protocol group.
//!
//! Used for the ATM's promise signature, user receipts and the bank's
//! certificates on signing keys. A signature is `(c, s)` with
//! `c = H(pk, g^s pk^{-c}, msg)`.

use ff::Field;
use rand_core::{CryptoRng, RngCore};

use crate::group::{scalar_from_bytes, scalar_len, scalar_to_bytes, CyclicGroup, GroupError};

const SIG_DOMAIN: &[u8] = b"atmcash/schnorr-sig";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyingKey<G>(pub G);

#[derive(Clone, Debug)]
pub struct SigningKey<G: CyclicGroup> {
    secret: G::Scalar,
    public: VerifyingKey<G>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature<F> {
    pub challenge: F,
    pub response: F,
}

fn challenge<G: CyclicGroup>(pk: &G, commitment: &G, msg: &[u8]) -> G::Scalar {
    let mut buf = pk.to_bytes();
    buf.extend_from_slice(&commitment.to_bytes());
    buf.extend_from_slice(msg);
    G::hash_to_scalar(SIG_DOMAIN, &buf)
}

impl<G: CyclicGroup> SigningKey<G> {
    pub fn random(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        let secret = G::Scalar::random(rng);
        SigningKey {
            secret,
            public: VerifyingKey(G::generator().exp(&secret)),
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey<G> {
        self.public
    }

    pub fn sign(&self, msg: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Signature<G::Scalar> {
        let k = G::Scalar::random(rng);
        let r = G::generator().exp(&k);
        let c = challenge(&self.public.0, &r, msg);
        Signature {
            challenge: c,
            response: k + c * self.secret,
        }
    }
}

impl<G: CyclicGroup> VerifyingKey<G> {
    pub fn verify(&self, msg: &[u8], sig: &Signature<G::Scalar>) -> bool {
        let r = G::generator()
            .exp(&sig.response)
            .div(&self.0.exp(&sig.challenge));
        challenge(&self.0, &r, msg) == sig.challenge
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }
}

impl<F: ff::PrimeField> Signature<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = scalar_to_bytes(&self.challenge);
        out.extend(scalar_to_bytes(&self.response));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        let n = scalar_len::<F>();
        if bytes.len() != 2 * n {
            return Err(GroupError::InvalidScalar);
        }
        Ok(Signature {
            challenge: scalar_from_bytes(&bytes[..n])?,
            response: scalar_from_bytes(&bytes[n..])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn sign_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sk = SigningKey::<GroupElement>::random(&mut rng);
        let sig = sk.sign(b"withdrawal", &mut rng);
        assert!(sk.verifying_key().verify(b"withdrawal", &sig));
        assert!(!sk.verifying_key().verify(b"withdrawaL", &sig));
        let other = SigningKey::<GroupElement>::random(&mut rng);
        assert!(!other.verifying_key().verify(b"withdrawal", &sig));
        let decoded = Signature::from_bytes(&sig.to_bytes()).unwrap();
        assert_eq!(decoded, sig);
        let mut bytes = sig.to_bytes();
        bytes[40] ^= 1;
        let flipped = Signature::<crate::group::Scalar>::from_bytes(&bytes);
        assert!(flipped.map(|s| !sk.verifying_key().verify(b"withdrawal", &s)).unwrap_or(true));
    }
}
