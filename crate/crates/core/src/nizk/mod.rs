//! Fiat-Shamir sigma protocols for linear relations over a cyclic group.
//!
//! Every statement the protocol proves is reduced to a conjunction of
//! relations `image = Π base_j^{w[idx_j]}` over a shared witness vector. The
//! same witness index appearing in two relations gets one response, which is
//! what ties e.g. the key inside a commitment to the key used in a PRF.
//!
//! Proof layout (all integers big-endian):
//!
//! ```text
//! tag: u8 | n_commitments: u16 | n_responses: u16
//! commitments: n_commitments x element | challenge: scalar
//! responses: n_responses x scalar
//! ```

use ff::Field;
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{scalar_from_bytes, scalar_invert, scalar_len, scalar_to_bytes, CyclicGroup};

mod range;
mod statements;

pub use range::{forge_truncated, prove_range, range_bit_count, range_check, verify_range, RangeProver};
pub use statements::*;

const CHALLENGE_DOMAIN: &[u8] = b"atmcash/nizk/challenge";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NizkError {
    #[error("witness does not satisfy the statement")]
    WitnessMismatch,
    #[error("PRF input is degenerate")]
    DegenerateInput,
    #[error("counter {ctr} outside [1, {n}]")]
    OutOfRange { ctr: u64, n: u64 },
    #[error("malformed proof encoding")]
    MalformedProof,
    #[error("transcripts share a challenge")]
    EqualChallenges,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum StatementTag {
    KeyRegistration = 1,
    Voucher = 2,
    CompactVoucher = 3,
    Spend = 4,
    Range = 5,
    Credential = 6,
    Opening = 7,
}

impl StatementTag {
    pub fn from_byte(b: u8) -> Option<Self> {
        use StatementTag::*;
        [KeyRegistration, Voucher, CompactVoucher, Spend, Range, Credential, Opening]
            .into_iter()
            .find(|t| *t as u8 == b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof<G: CyclicGroup> {
    pub tag: StatementTag,
    pub commitments: Vec<G>,
    pub challenge: G::Scalar,
    pub responses: Vec<G::Scalar>,
}

impl<G: CyclicGroup> Proof<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.tag as u8];
        out.extend((self.commitments.len() as u16).to_be_bytes());
        out.extend((self.responses.len() as u16).to_be_bytes());
        for c in &self.commitments {
            out.extend(c.to_bytes());
        }
        out.extend(scalar_to_bytes(&self.challenge));
        for s in &self.responses {
            out.extend(scalar_to_bytes(s));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NizkError> {
        if bytes.len() < 5 {
            return Err(NizkError::MalformedProof);
        }
        let tag = StatementTag::from_byte(bytes[0]).ok_or(NizkError::MalformedProof)?;
        let nc = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        let nr = u16::from_be_bytes([bytes[3], bytes[4]]) as usize;
        let (el, sl) = (G::ELEMENT_LEN, scalar_len::<G::Scalar>());
        if bytes.len() != 5 + nc * el + (1 + nr) * sl {
            return Err(NizkError::MalformedProof);
        }
        let mut pos = 5;
        let mut commitments = Vec::with_capacity(nc);
        for _ in 0..nc {
            commitments
                .push(G::from_bytes(&bytes[pos..pos + el]).map_err(|_| NizkError::MalformedProof)?);
            pos += el;
        }
        let scalar = |p: usize| {
            scalar_from_bytes::<G::Scalar>(&bytes[p..p + sl]).map_err(|_| NizkError::MalformedProof)
        };
        let challenge = scalar(pos)?;
        pos += sl;
        let mut responses = Vec::with_capacity(nr);
        for _ in 0..nr {
            responses.push(scalar(pos)?);
            pos += sl;
        }
        Ok(Proof { tag, commitments, challenge, responses })
    }
}

/// `image = Π base^{w[index]}`.
#[derive(Clone, Debug)]
pub struct Relation<G> {
    pub image: G,
    pub terms: Vec<(G, usize)>,
}

/// A conjunction of linear relations with an explicit public context that is
/// bound into the Fiat-Shamir challenge.
#[derive(Clone, Debug)]
pub struct LinearStatement<G: CyclicGroup> {
    pub tag: StatementTag,
    pub witness_count: usize,
    pub relations: Vec<Relation<G>>,
    pub context: Vec<u8>,
}

/// Prover state between the commit and respond moves.
pub struct Committed<G: CyclicGroup> {
    pub nonces: Vec<G::Scalar>,
    pub commitments: Vec<G>,
}

impl<G: CyclicGroup> LinearStatement<G> {
    pub fn new(tag: StatementTag, witness_count: usize) -> Self {
        LinearStatement { tag, witness_count, relations: Vec::new(), context: Vec::new() }
    }

    pub fn relation(mut self, image: G, terms: Vec<(G, usize)>) -> Self {
        debug_assert!(terms.iter().all(|(_, i)| *i < self.witness_count));
        self.relations.push(Relation { image, terms });
        self
    }

    pub fn bind(mut self, bytes: &[u8]) -> Self {
        self.context.extend((bytes.len() as u32).to_be_bytes());
        self.context.extend_from_slice(bytes);
        self
    }

    fn evaluate(rel: &Relation<G>, values: &[G::Scalar]) -> G {
        let (bases, exps): (Vec<G>, Vec<G::Scalar>) =
            rel.terms.iter().map(|(b, i)| (*b, values[*i])).unzip();
        G::product(&bases, &exps)
    }

    pub fn holds(&self, witness: &[G::Scalar]) -> bool {
        witness.len() == self.witness_count
            && self.relations.iter().all(|r| Self::evaluate(r, witness) == r.image)
    }

    pub fn commit(&self, rng: &mut (impl RngCore + CryptoRng)) -> Committed<G> {
        let nonces: Vec<G::Scalar> = (0..self.witness_count).map(|_| G::Scalar::random(&mut *rng)).collect();
        let commitments = self.relations.iter().map(|r| Self::evaluate(r, &nonces)).collect();
        Committed { nonces, commitments }
    }

    pub fn respond(&self, witness: &[G::Scalar], state: &Committed<G>, challenge: &G::Scalar) -> Vec<G::Scalar> {
        state
            .nonces
            .iter()
            .zip(witness)
            .map(|(r, w)| *r + *challenge * w)
            .collect()
    }

    /// The verifier's equation `Π base^{s} = T · image^c` for every relation.
    pub fn check(&self, commitments: &[G], challenge: &G::Scalar, responses: &[G::Scalar]) -> bool {
        commitments.len() == self.relations.len()
            && responses.len() == self.witness_count
            && self.relations.iter().zip(commitments).all(|(r, t)| {
                Self::evaluate(r, responses) == t.mul(&r.image.exp(challenge))
            })
    }

    pub fn transcript(&self, commitments: &[G]) -> Vec<u8> {
        transcript_bytes(self.tag, &self.context, &self.relations, commitments)
    }

    pub fn challenge(&self, commitments: &[G]) -> G::Scalar {
        G::hash_to_scalar(CHALLENGE_DOMAIN, &self.transcript(commitments))
    }

    pub fn prove(&self, witness: &[G::Scalar], rng: &mut (impl RngCore + CryptoRng)) -> Result<Proof<G>, NizkError> {
        if !self.holds(witness) {
            return Err(NizkError::WitnessMismatch);
        }
        let state = self.commit(rng);
        let challenge = self.challenge(&state.commitments);
        let responses = self.respond(witness, &state, &challenge);
        Ok(Proof { tag: self.tag, commitments: state.commitments, challenge, responses })
    }

    pub fn verify(&self, proof: &Proof<G>) -> bool {
        proof.tag == self.tag
            && proof.commitments.len() == self.relations.len()
            && self.challenge(&proof.commitments) == proof.challenge
            && self.check(&proof.commitments, &proof.challenge, &proof.responses)
    }

    /// Transcript for a given challenge without a witness: responses first,
    /// then commitments solved from the verification equation.
    pub fn simulate(&self, challenge: &G::Scalar, rng: &mut (impl RngCore + CryptoRng)) -> (Vec<G>, Vec<G::Scalar>) {
        let responses: Vec<G::Scalar> = (0..self.witness_count).map(|_| G::Scalar::random(&mut *rng)).collect();
        let commitments = self
            .relations
            .iter()
            .map(|r| Self::evaluate(r, &responses).div(&r.image.exp(challenge)))
            .collect();
        (commitments, responses)
    }
}

pub(crate) fn transcript_bytes<G: CyclicGroup>(
    tag: StatementTag,
    context: &[u8],
    relations: &[Relation<G>],
    commitments: &[G],
) -> Vec<u8> {
    let mut t = vec![tag as u8];
    t.extend((context.len() as u32).to_be_bytes());
    t.extend_from_slice(context);
    t.extend((relations.len() as u32).to_be_bytes());
    for r in relations {
        t.extend(r.image.to_bytes());
        t.extend((r.terms.len() as u32).to_be_bytes());
        for (b, i) in &r.terms {
            t.extend(b.to_bytes());
            t.extend((*i as u32).to_be_bytes());
        }
    }
    t.extend((commitments.len() as u32).to_be_bytes());
    for c in commitments {
        t.extend(c.to_bytes());
    }
    t
}

/// Special-soundness extractor: from `s = r + c·w` under two challenges,
/// `w = (s1 - s2) / (c1 - c2)`.
pub fn extract<F: ff::PrimeField>(c1: &F, s1: &[F], c2: &F, s2: &[F]) -> Result<Vec<F>, NizkError> {
    let inv = scalar_invert(&(*c1 - c2)).map_err(|_| NizkError::EqualChallenges)?;
    Ok(s1.iter().zip(s2).map(|(a, b)| (*a - b) * inv).collect())
}

#[cfg(test)]
mod tests;
