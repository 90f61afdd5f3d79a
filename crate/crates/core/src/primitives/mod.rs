//! Pedersen commitments, the Dodis-Yampolskiy PRF, random-oracle digests and
//! nonces.
//!
//! Byte layouts: a [`Digest`] and a [`Nonce`] are both 32 raw bytes (2λ bits
//! for λ = 128). Digests are SHA-256 over a length-prefixed domain label
//! followed by the message.

use ff::Field;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::group::{scalar_invert, CyclicGroup, GeneratorSet};

mod signature;

pub use signature::{Signature, SigningKey, VerifyingKey};

/// Output of the random oracle [`ro`].
pub type Digest = [u8; 32];

/// A fresh 2λ-bit value identifying a withdrawal or a spend.
pub type Nonce = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("{given} messages but only {available} generators")]
    TooManyMessages { given: usize, available: usize },
    #[error("PRF input is degenerate: 1 + k + x = 0")]
    DegenerateInput,
    #[error("randomness source failed")]
    EntropyUnavailable,
}

/// A generalized Pedersen commitment `g_1^{m_1} ... g_n^{m_n} g'^r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment<G>(pub G);

impl<G: CyclicGroup> Commitment<G> {
    pub fn element(&self) -> &G {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }
}

/// The messages and blinding factor that open a [`Commitment`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening<G: CyclicGroup> {
    pub messages: Vec<G::Scalar>,
    pub blinding: G::Scalar,
}

impl<G: CyclicGroup> Opening<G> {
    pub fn new(messages: Vec<G::Scalar>, blinding: G::Scalar) -> Self {
        Opening { messages, blinding }
    }

    /// Opening of `messages` under a fresh uniformly random blinding factor.
    pub fn random(messages: Vec<G::Scalar>, rng: &mut (impl RngCore + CryptoRng)) -> Self {
        Opening {
            messages,
            blinding: G::Scalar::random(rng),
        }
    }

    pub fn commit(&self, gens: &GeneratorSet<G>) -> Result<Commitment<G>, PrimitiveError> {
        commit(&self.messages, &self.blinding, gens)
    }
}

pub fn commit<G: CyclicGroup>(
    messages: &[G::Scalar],
    blinding: &G::Scalar,
    gens: &GeneratorSet<G>,
) -> Result<Commitment<G>, PrimitiveError> {
    if messages.len() > gens.count() {
        return Err(PrimitiveError::TooManyMessages {
            given: messages.len(),
            available: gens.count(),
        });
    }
    let acc = G::product(&gens.messages[..messages.len()], messages);
    Ok(Commitment(acc.mul(&gens.blinding.exp(blinding))))
}

pub fn verify_opening<G: CyclicGroup>(
    c: &Commitment<G>,
    o: &Opening<G>,
    gens: &GeneratorSet<G>,
) -> bool {
    matches!(o.commit(gens), Ok(ref recomputed) if recomputed == c)
}

/// Key of the Dodis-Yampolskiy PRF.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrfKey<F>(pub F);

impl<F: Field> PrfKey<F> {
    pub fn random(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        PrfKey(F::random(rng))
    }
}

/// `F_k(x) = g^{1/(1+k+x)}`.
pub fn dy_prf<G: CyclicGroup>(key: &PrfKey<G::Scalar>, x: &G::Scalar) -> Result<G, PrimitiveError> {
    let denom = G::Scalar::ONE + key.0 + x;
    let inv = scalar_invert(&denom).map_err(|_| PrimitiveError::DegenerateInput)?;
    Ok(G::generator().exp(&inv))
}

/// Random oracle onto 256-bit strings.
pub fn ro(domain: &[u8], msg: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(b"atmcash/ro");
    h.update((domain.len() as u32).to_be_bytes());
    h.update(domain);
    h.update(msg);
    h.finalize().into()
}

pub fn gen_nonce(rng: &mut (impl RngCore + CryptoRng)) -> Result<Nonce, PrimitiveError> {
    let mut nonce = [0u8; 32];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|_| PrimitiveError::EntropyUnavailable)?;
    Ok(nonce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::toy::{ToyElement, ToyScalar, AMBIENT_MODULUS, ORDER};
    use crate::group::{derive_generators, GroupElement, Scalar};
    use num_bigint_dig::{BigUint, ModInverse};
    use num_traits::ToPrimitive;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;
    use std::collections::{HashMap, HashSet};

    fn toy_gens() -> GeneratorSet<ToyElement> {
        derive_generators(b"toy-test", 2)
    }

    fn modpow(base: u64, e: u64) -> u64 {
        let r = BigUint::from(base).modpow(&BigUint::from(e), &BigUint::from(AMBIENT_MODULUS));
        r.to_u64().unwrap()
    }

    #[test]
    fn commit_zero_is_identity() {
        let gens = derive_generators::<GroupElement>(b"t", 1);
        let c = commit(&[Scalar::ZERO], &Scalar::ZERO, &gens).unwrap();
        assert_eq!(c.0, <GroupElement as CyclicGroup>::identity());
    }

    #[test]
    fn commit_is_homomorphic() {
        let gens = derive_generators::<GroupElement>(b"t", 2);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a: Vec<Scalar> = (0..2).map(|_| Scalar::random(&mut rng)).collect();
        let b: Vec<Scalar> = (0..2).map(|_| Scalar::random(&mut rng)).collect();
        let (r, s) = (Scalar::random(&mut rng), Scalar::random(&mut rng));
        let sum: Vec<Scalar> = a.iter().zip(&b).map(|(x, y)| *x + y).collect();
        let lhs = commit(&a, &r, &gens).unwrap().0.mul(&commit(&b, &s, &gens).unwrap().0);
        assert_eq!(lhs, commit(&sum, &(r + s), &gens).unwrap().0);
    }

    #[test]
    fn commit_matches_double_exponentiation_oracle() {
        let gens = toy_gens();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = ToyScalar::random(&mut rng);
            let r = ToyScalar::random(&mut rng);
            let c = commit(&[m], &r, &gens).unwrap();
            let oracle = (BigUint::from(modpow(gens.messages[0].value(), m.to_u64()))
                * BigUint::from(modpow(gens.blinding.value(), r.to_u64())))
                % BigUint::from(AMBIENT_MODULUS);
            assert_eq!(BigUint::from(c.0.value()), oracle);
        }
    }

    #[test]
    fn too_many_messages() {
        let gens = toy_gens();
        let err = commit(&[ToyScalar::ONE; 3], &ToyScalar::ONE, &gens).unwrap_err();
        assert_eq!(err, PrimitiveError::TooManyMessages { given: 3, available: 2 });
    }

    #[test]
    fn verify_opening_cases() {
        let gens = toy_gens();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let o = Opening::<ToyElement>::random(vec![ToyScalar::from(5u64), ToyScalar::from(9u64)], &mut rng);
        let c = o.commit(&gens).unwrap();
        assert!(verify_opening(&c, &o, &gens));
        let mut bumped = o.clone();
        bumped.messages[1] += ToyScalar::ONE;
        assert!(!verify_opening(&c, &bumped, &gens));
        let mut reblinded = o.clone();
        reblinded.blinding += ToyScalar::ONE;
        assert!(!verify_opening(&c, &reblinded, &gens));
    }

    #[test]
    fn hiding_fresh_blindings_are_distinct() {
        let gens = derive_generators::<GroupElement>(b"t", 1);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut seen = HashSet::new();
        for _ in 0..200 {
            let o = Opening::<GroupElement>::random(vec![Scalar::from(42u64)], &mut rng);
            assert!(seen.insert(o.commit(&gens).unwrap().to_bytes()));
        }
    }

    #[test]
    fn binding_brute_force_over_small_box() {
        // Every (m, r) in a 2^10 x 2^10 box commits to a distinct element, so
        // no sampled commitment from the box has a second opening inside it.
        let gens = derive_generators::<ToyElement>(b"binding", 1);
        let side = 1u64 << 10;
        let g_pows: Vec<ToyElement> = (0..side)
            .map(|m| gens.messages[0].exp(&ToyScalar::from(m)))
            .collect();
        let h_pows: Vec<ToyElement> = (0..side)
            .map(|r| gens.blinding.exp(&ToyScalar::from(r)))
            .collect();
        let mut table: HashMap<u64, (u64, u64)> = HashMap::with_capacity((side * side) as usize);
        for (m, gm) in g_pows.iter().enumerate() {
            for (r, hr) in h_pows.iter().enumerate() {
                let prev = table.insert(gm.mul(hr).value(), (m as u64, r as u64));
                assert!(prev.is_none(), "second opening found");
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (m, r) = (rng.next_u64() % side, rng.next_u64() % side);
            let c = commit(&[ToyScalar::from(m)], &ToyScalar::from(r), &gens).unwrap();
            assert_eq!(table[&c.0.value()], (m, r));
        }
    }

    #[test]
    fn prf_edge_cases() {
        let g = GroupElement::generator();
        assert_eq!(dy_prf::<GroupElement>(&PrfKey(Scalar::ZERO), &Scalar::ZERO).unwrap(), g);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for _ in 0..10 {
            let x = Scalar::random(&mut rng);
            let k = -Scalar::ONE - x;
            assert_eq!(
                dy_prf::<GroupElement>(&PrfKey(k), &x),
                Err(PrimitiveError::DegenerateInput)
            );
        }
    }

    #[test]
    fn prf_matches_modular_inverse_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let p = BigUint::from(ORDER);
        for _ in 0..200 {
            let k = ToyScalar::random(&mut rng);
            let x = ToyScalar::random(&mut rng);
            let denom = (BigUint::from(k.to_u64()) + BigUint::from(x.to_u64()) + 1u32) % &p;
            let inv = denom.clone().mod_inverse(&p).unwrap().to_biguint().unwrap();
            let expected = modpow(4, inv.to_u64().unwrap());
            let got = dy_prf::<ToyElement>(&PrfKey(k), &x).unwrap();
            assert_eq!(got.value(), expected);
        }
    }

    #[test]
    fn prf_is_injective_on_small_domain() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..100 {
            let key = PrfKey::<ToyScalar>::random(&mut rng);
            let mut seen = HashSet::new();
            for x in 0..1024u64 {
                let y = dy_prf::<ToyElement>(&key, &ToyScalar::from(x)).unwrap();
                assert!(seen.insert(y.value()));
            }
        }
    }

    #[test]
    fn ro_determinism_and_avalanche() {
        let msg = b"coin bytes and identities".to_vec();
        let base = ro(b"coin-id", &msg);
        assert_eq!(base, ro(b"coin-id", &msg));
        assert_ne!(base, ro(b"promise", &msg));
        let mut total_flipped = 0u32;
        let trials = msg.len() * 8;
        for bit in 0..trials {
            let mut m = msg.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            let d = ro(b"coin-id", &m);
            assert_ne!(d, base);
            total_flipped += d.iter().zip(&base).map(|(a, b)| (a ^ b).count_ones()).sum::<u32>();
        }
        let mean = total_flipped as f64 / trials as f64;
        assert!((100.0..156.0).contains(&mean), "mean flipped bits {mean}");
    }

    #[test]
    fn nonces_are_fresh() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let n = gen_nonce(&mut rng).unwrap();
            assert_eq!(n.len(), 32);
            assert!(seen.insert(n));
        }
        let mut other = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            assert!(!seen.contains(&gen_nonce(&mut other).unwrap()));
        }
    }

    #[test]
    fn os_nonce_works() {
        let a = gen_nonce(&mut rand_core::OsRng).unwrap();
        let b = gen_nonce(&mut rand_core::OsRng).unwrap();
        assert_ne!(a, b);
    }
}
