//! Prime-order groups and their scalar fields.
//!
//! Everything in the protocol lives in one prime-order group: commitments,
//! PRF outputs, identity keys and the Schnorr-style proofs over them. The
//! production instantiation is the G1 subgroup of BLS12-381, whose scalar
//! field is shared with the pairing groups used by [`crate::credsig`]. A tiny
//! 61-bit Schnorr group ([`toy`]) runs the same generic code for brute-force
//! and rewinding tests.
//!
//! Notation is multiplicative throughout to match the protocol formulas:
//! [`CyclicGroup::mul`] is the group operation and [`CyclicGroup::exp`] raises
//! an element to a scalar power.

use std::fmt::Debug;

use ff::PrimeField;
use sha2::{Digest, Sha512};
use thiserror::Error;

mod bls;
pub mod toy;

pub use bls12_381::Scalar;

/// An element of the production group (BLS12-381 G1).
pub type GroupElement = bls12_381::G1Projective;

/// Errors raised by scalar and group-element handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("not a canonical encoding of a group element")]
    InvalidElement,
    #[error("not a canonical encoding of a scalar")]
    InvalidScalar,
}

/// A cyclic group of prime order with a canonical generator.
pub trait CyclicGroup: Copy + Eq + Debug + Send + Sync + 'static {
    type Scalar: PrimeField;

    /// Width of the canonical (compressed) element encoding.
    const ELEMENT_LEN: usize;

    fn identity() -> Self;
    fn generator() -> Self;

    /// The group operation.
    fn mul(&self, rhs: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp(&self, e: &Self::Scalar) -> Self;

    /// Domain-separated hash onto the group. The discrete logarithm of the
    /// output with respect to any other element is unknown.
    fn hash_to_group(dst: &[u8], msg: &[u8]) -> Self;

    /// Reduces 512 uniform bits into a near-uniform scalar.
    fn scalar_from_wide(bytes: &[u8; 64]) -> Self::Scalar;

    fn to_bytes(&self) -> Vec<u8>;

    /// Decodes and validates membership in the prime-order group.
    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError>;

    fn div(&self, rhs: &Self) -> Self {
        self.mul(&rhs.inverse())
    }

    /// `Π bases[i]^exps[i]`.
    fn product(bases: &[Self], exps: &[Self::Scalar]) -> Self {
        debug_assert_eq!(bases.len(), exps.len());
        bases
            .iter()
            .zip(exps)
            .fold(Self::identity(), |acc, (b, e)| acc.mul(&b.exp(e)))
    }

    /// Hashes `(domain, msg)` to a scalar. The domain is length-prefixed, so
    /// two distinct domains never feed the same bytes to the hash.
    fn hash_to_scalar(domain: &[u8], msg: &[u8]) -> Self::Scalar {
        let mut h = Sha512::new();
        h.update(b"atmcash/h2s");
        h.update((domain.len() as u32).to_be_bytes());
        h.update(domain);
        h.update(msg);
        let out: [u8; 64] = h.finalize().into();
        Self::scalar_from_wide(&out)
    }
}

/// `x^{-1}`, or [`GroupError::ZeroInverse`] for zero.
pub fn scalar_invert<F: PrimeField>(x: &F) -> Result<F, GroupError> {
    Option::<F>::from(x.invert()).ok_or(GroupError::ZeroInverse)
}

/// Fixed-width big-endian scalar encoding.
pub fn scalar_to_bytes<F: PrimeField>(x: &F) -> Vec<u8> {
    // Both fields used here expose little-endian representations.
    let mut out = x.to_repr().as_ref().to_vec();
    out.reverse();
    out
}

/// Inverse of [`scalar_to_bytes`]; rejects wrong widths and values `>= p`.
pub fn scalar_from_bytes<F: PrimeField>(bytes: &[u8]) -> Result<F, GroupError> {
    let mut repr = F::Repr::default();
    if repr.as_ref().len() != bytes.len() {
        return Err(GroupError::InvalidScalar);
    }
    for (dst, src) in repr.as_mut().iter_mut().zip(bytes.iter().rev()) {
        *dst = *src;
    }
    Option::<F>::from(F::from_repr(repr)).ok_or(GroupError::InvalidScalar)
}

/// Width in bytes of the canonical scalar encoding of `F`.
pub fn scalar_len<F: PrimeField>() -> usize {
    F::Repr::default().as_ref().len()
}

/// Independent generators for generalized Pedersen commitments, together with
/// the base generator `g` used for identity keys and the PRF.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSet<G: CyclicGroup> {
    /// Base generator of the group.
    pub g: G,
    /// Message generators `g_1..g_n`.
    pub messages: Vec<G>,
    /// Blinding generator `g'`.
    pub blinding: G,
}

const GENERATOR_DST: &[u8] = b"atmcash/v1/generators";

/// Derives `count` message generators and one blinding generator from `seed`
/// by hashing to the group.
pub fn derive_generators<G: CyclicGroup>(seed: &[u8], count: usize) -> GeneratorSet<G> {
    assert!(count >= 1, "at least one message generator is required");
    let tagged = |label: &[u8], index: u32| {
        let mut msg = Vec::with_capacity(seed.len() + label.len() + 8);
        msg.extend_from_slice(&(seed.len() as u32).to_be_bytes());
        msg.extend_from_slice(seed);
        msg.extend_from_slice(label);
        msg.extend_from_slice(&index.to_be_bytes());
        G::hash_to_group(GENERATOR_DST, &msg)
    };
    GeneratorSet {
        g: G::generator(),
        messages: (0..count as u32).map(|i| tagged(b"message", i)).collect(),
        blinding: tagged(b"blinding", 0),
    }
}

impl<G: CyclicGroup> GeneratorSet<G> {
    pub fn count(&self) -> usize {
        self.messages.len()
    }
}
