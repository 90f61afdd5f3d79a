//! Credentials on committed values with zero-knowledge presentation.
//!
//! This is a BBS+ signature whose message generators are the Pedersen
//! generators of the protocol, so the issuer can sign a registrant's
//! commitment `P = Π g_i^{m_i} h^β` directly:
//! `A = (b0 · P · h^{s''})^{1/(e+x)}`, public key `w = g2^x` in G2.
//!
//! A presentation randomizes `A' = A^{r1}`, `Ā = A'^{-e} B^{r1}` (so
//! `Ā = A'^x`) and `d = B^{r1} h^{-r2}`, then proves with the sigma engine:
//!
//! ```text
//! Ā / d = A'^{-e} · h^{r2}
//! b0    = d^{r3} · h^{-s'} · Π g_i^{-m_i}      (r3 = 1/r1, s' = s - r2·r3)
//! com   = Π g_i^{m_i} · h^{β'}
//! ```
//!
//! and the verifier checks `e(A', w) = e(Ā, g2)` with `A' ≠ 1`. Proof layout:
//! commitments `[A', Ā, d, T1, T2, T3]`, responses in witness order
//! `e, r2, r3, s', m_1..m_L, β'`.

use std::sync::OnceLock;

use bls12_381::{multi_miller_loop, G1Affine, G2Affine, G2Prepared, G2Projective, Gt};
use ff::Field;
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{scalar_from_bytes, scalar_invert, scalar_to_bytes, CyclicGroup, GeneratorSet, GroupElement, Scalar};
use crate::nizk::{verify_key_registration, LinearStatement, Proof, StatementTag};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredError {
    #[error("registration proof rejected")]
    InvalidRegistration,
    #[error("credential does not match the opening")]
    WitnessMismatch,
    #[error("malformed credential encoding")]
    Malformed,
    #[error("{given} messages but the key signs {expected}")]
    MessageCount { given: usize, expected: usize },
}

fn b0() -> GroupElement {
    static B0: OnceLock<GroupElement> = OnceLock::new();
    *B0.get_or_init(|| GroupElement::hash_to_group(b"atmcash/v1/credential", b"b0"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CredPublicKey {
    pub w: G2Affine,
    pub message_count: usize,
}

/// A randomized credential `[A', Ā, d]` with its linear statement.
pub struct Presentation {
    pub elements: [GroupElement; 3],
    pub statement: LinearStatement<GroupElement>,
    pub witness: Vec<Scalar>,
}

pub struct CredKeypair {
    x: Scalar,
    pub pk: CredPublicKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Credential {
    pub a: GroupElement,
    pub e: Scalar,
    /// Issuer's share of the blinding; the holder adds it to their own.
    pub s: Scalar,
}

impl CredKeypair {
    pub fn generate(message_count: usize, rng: &mut (impl RngCore + CryptoRng)) -> Self {
        let x = Scalar::random(&mut *rng);
        let w = G2Affine::from(G2Projective::generator() * x);
        CredKeypair { x, pk: CredPublicKey { w, message_count } }
    }

    /// Signs whatever `com` commits to.
    pub fn zsign(&self, com: &GroupElement, gens: &GeneratorSet<GroupElement>, rng: &mut (impl RngCore + CryptoRng)) -> Credential {
        loop {
            let e = Scalar::random(&mut *rng);
            let Ok(inv) = scalar_invert(&(e + self.x)) else { continue };
            let s = Scalar::random(&mut *rng);
            let base = b0().mul(com).mul(&gens.blinding.exp(&s));
            return Credential { a: base.exp(&inv), e, s };
        }
    }

    /// Checks the registrant's proof that `com` opens to the secret key of
    /// `pk` and signs the commitment.
    pub fn issue(
        &self,
        com: &GroupElement,
        pk: &GroupElement,
        registration: &Proof<GroupElement>,
        gens: &GeneratorSet<GroupElement>,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Credential, CredError> {
        if !verify_key_registration(gens, com, pk, self.pk.message_count, registration) {
            return Err(CredError::InvalidRegistration);
        }
        Ok(self.zsign(com, gens, rng))
    }
}

fn pairing_eq(p1: &GroupElement, q1: &G2Affine, p2: &GroupElement, q2: &G2Affine) -> bool {
    let a = G1Affine::from(*p1);
    let b = G1Affine::from(-*p2);
    let (q1, q2) = (G2Prepared::from(*q1), G2Prepared::from(*q2));
    multi_miller_loop(&[(&a, &q1), (&b, &q2)]).final_exponentiation() == Gt::identity()
}

impl CredPublicKey {
    /// Holder-side check after issuance. `blinding` is the holder's total
    /// blinding (own β plus the issuer's `s`).
    pub fn verify_credential(
        &self,
        messages: &[Scalar],
        blinding: &Scalar,
        cred: &Credential,
        gens: &GeneratorSet<GroupElement>,
    ) -> bool {
        if messages.len() != self.message_count || bool::from(cred.a.is_identity()) {
            return false;
        }
        let b = b0()
            .mul(&GroupElement::product(&gens.messages[..messages.len()], messages))
            .mul(&gens.blinding.exp(blinding));
        let w_e = G2Affine::from(G2Projective::from(self.w) + G2Projective::generator() * cred.e);
        pairing_eq(&cred.a, &w_e, &b, &G2Affine::generator())
    }

    fn statement(
        &self,
        gens: &GeneratorSet<GroupElement>,
        com: &GroupElement,
        a_prime: &GroupElement,
        a_bar: &GroupElement,
        d: &GroupElement,
    ) -> LinearStatement<GroupElement> {
        let l = self.message_count;
        let h = gens.blinding;
        let mut rel2 = vec![(*d, 2), (h.inverse(), 3)];
        let mut rel3 = Vec::with_capacity(l + 1);
        for (i, gi) in gens.messages[..l].iter().enumerate() {
            rel2.push((gi.inverse(), 4 + i));
            rel3.push((*gi, 4 + i));
        }
        rel3.push((h, 4 + l));
        LinearStatement::new(StatementTag::Credential, 5 + l)
            .bind(&self.w.to_compressed())
            .relation(a_bar.div(d), vec![(a_prime.inverse(), 0), (h, 1)])
            .relation(b0(), rel2)
            .relation(*com, rel3)
    }

    /// Randomizes the credential and assembles the sigma statement with its
    /// witness, for callers that drive the commit/respond moves themselves.
    #[allow(clippy::too_many_arguments)]
    pub fn presentation(
        &self,
        gens: &GeneratorSet<GroupElement>,
        com: &GroupElement,
        messages: &[Scalar],
        com_blinding: &Scalar,
        cred_blinding: &Scalar,
        cred: &Credential,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Presentation, CredError> {
        if messages.len() != self.message_count {
            return Err(CredError::MessageCount { given: messages.len(), expected: self.message_count });
        }
        if !self.verify_credential(messages, cred_blinding, cred, gens) {
            return Err(CredError::WitnessMismatch);
        }
        let b = b0()
            .mul(&GroupElement::product(&gens.messages[..messages.len()], messages))
            .mul(&gens.blinding.exp(cred_blinding));
        let r1 = loop {
            let r = Scalar::random(&mut *rng);
            if !bool::from(r.is_zero()) {
                break r;
            }
        };
        let r2 = Scalar::random(&mut *rng);
        let r3 = scalar_invert(&r1).expect("r1 is nonzero");
        let a_prime = cred.a.exp(&r1);
        let b_r1 = b.exp(&r1);
        let a_bar = a_prime.exp(&(-cred.e)).mul(&b_r1);
        let d = b_r1.div(&gens.blinding.exp(&r2));
        let mut witness = vec![cred.e, r2, r3, *cred_blinding - r2 * r3];
        witness.extend_from_slice(messages);
        witness.push(*com_blinding);
        Ok(Presentation {
            elements: [a_prime, a_bar, d],
            statement: self.statement(gens, com, &a_prime, &a_bar, &d),
            witness,
        })
    }

    /// Proves possession of a credential on the messages inside `com`,
    /// where `com = Π g_i^{m_i} h^{com_blinding}` is a fresh commitment.
    #[allow(clippy::too_many_arguments)]
    pub fn zprove(
        &self,
        gens: &GeneratorSet<GroupElement>,
        com: &GroupElement,
        messages: &[Scalar],
        com_blinding: &Scalar,
        cred_blinding: &Scalar,
        cred: &Credential,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Proof<GroupElement>, CredError> {
        let pres = self.presentation(gens, com, messages, com_blinding, cred_blinding, cred, rng)?;
        let inner = pres.statement.prove(&pres.witness, rng).map_err(|_| CredError::WitnessMismatch)?;
        let mut commitments = pres.elements.to_vec();
        commitments.extend(inner.commitments);
        Ok(Proof { tag: StatementTag::Credential, commitments, challenge: inner.challenge, responses: inner.responses })
    }

    pub fn zverify(&self, gens: &GeneratorSet<GroupElement>, com: &GroupElement, proof: &Proof<GroupElement>) -> bool {
        if proof.tag != StatementTag::Credential || proof.commitments.len() != 6 {
            return false;
        }
        let (a_prime, a_bar, d) = (proof.commitments[0], proof.commitments[1], proof.commitments[2]);
        if bool::from(a_prime.is_identity()) || !pairing_eq(&a_prime, &self.w, &a_bar, &G2Affine::generator()) {
            return false;
        }
        let inner = Proof {
            tag: StatementTag::Credential,
            commitments: proof.commitments[3..].to_vec(),
            challenge: proof.challenge,
            responses: proof.responses.clone(),
        };
        self.statement(gens, com, &a_prime, &a_bar, &d).verify(&inner)
    }

    /// `w (96-byte compressed G2) | u8 message_count`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.w.to_compressed().to_vec();
        out.push(self.message_count as u8);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CredError> {
        if bytes.len() != 97 {
            return Err(CredError::Malformed);
        }
        let w: [u8; 96] = bytes[..96].try_into().unwrap();
        let w = Option::<G2Affine>::from(G2Affine::from_compressed(&w)).ok_or(CredError::Malformed)?;
        Ok(CredPublicKey { w, message_count: bytes[96] as usize })
    }
}

impl Credential {
    /// `A (48) | e (32) | s (32)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.a.to_bytes();
        out.extend(scalar_to_bytes(&self.e));
        out.extend(scalar_to_bytes(&self.s));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CredError> {
        if bytes.len() != 112 {
            return Err(CredError::Malformed);
        }
        let a = GroupElement::from_bytes(&bytes[..48]).map_err(|_| CredError::Malformed)?;
        let e = scalar_from_bytes(&bytes[48..80]).map_err(|_| CredError::Malformed)?;
        let s = scalar_from_bytes(&bytes[80..]).map_err(|_| CredError::Malformed)?;
        Ok(Credential { a, e, s })
    }
}
