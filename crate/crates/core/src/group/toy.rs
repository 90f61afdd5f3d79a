//! A 61-bit Schnorr group for brute-force and rewinding tests.
//!
//! The group is the subgroup of quadratic residues of `Z_q^*` for the safe
//! prime `q = 2p + 1`, so it has prime order `p`. It offers no security and is
//! never used by the protocol actors; it exists so that the generic
//! commitment, PRF and proof code can be exercised exhaustively.

use ff::PrimeField;
use sha2::{Digest, Sha256};

use super::{CyclicGroup, GroupError};

/// Scalar field of the toy group, `Z_p` with `p = 2305843009213688669`.
#[derive(PrimeField)]
#[PrimeFieldModulus = "2305843009213688669"]
#[PrimeFieldGenerator = "2"]
#[PrimeFieldReprEndianness = "little"]
pub struct ToyScalar([u64; 1]);

/// Group order `p`.
pub const ORDER: u64 = 2_305_843_009_213_688_669;
/// Modulus of the ambient multiplicative group, `q = 2p + 1`.
pub const AMBIENT_MODULUS: u64 = 4_611_686_018_427_377_339;

/// An element of the order-`p` subgroup of `Z_q^*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyElement(u64);

fn mulmod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % AMBIENT_MODULUS as u128) as u64
}

fn powmod(mut base: u64, mut e: u64) -> u64 {
    let mut acc = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, base);
        }
        base = mulmod(base, base);
        e >>= 1;
    }
    acc
}

impl ToyScalar {
    pub fn to_u64(&self) -> u64 {
        let repr = self.to_repr();
        u64::from_le_bytes(repr.as_ref()[..8].try_into().expect("8-byte repr"))
    }
}

impl ToyElement {
    pub fn value(&self) -> u64 {
        self.0
    }
}

impl CyclicGroup for ToyElement {
    type Scalar = ToyScalar;

    const ELEMENT_LEN: usize = 8;

    fn identity() -> Self {
        ToyElement(1)
    }

    fn generator() -> Self {
        // 4 = 2^2 is a nontrivial quadratic residue, hence a generator of the
        // prime-order subgroup.
        ToyElement(4)
    }

    fn mul(&self, rhs: &Self) -> Self {
        ToyElement(mulmod(self.0, rhs.0))
    }

    fn inverse(&self) -> Self {
        // x^(p-1) = x^-1 inside a group of order p.
        ToyElement(powmod(self.0, ORDER - 1))
    }

    fn exp(&self, e: &ToyScalar) -> Self {
        ToyElement(powmod(self.0, e.to_u64()))
    }

    fn hash_to_group(dst: &[u8], msg: &[u8]) -> Self {
        // Try-and-increment onto Z_q^*, then square into the QR subgroup.
        for ctr in 0u32.. {
            let mut h = Sha256::new();
            h.update((dst.len() as u32).to_be_bytes());
            h.update(dst);
            h.update(msg);
            h.update(ctr.to_be_bytes());
            let digest = h.finalize();
            let v = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) % AMBIENT_MODULUS;
            if v == 0 {
                continue;
            }
            let x = mulmod(v, v);
            if x != 1 {
                return ToyElement(x);
            }
        }
        unreachable!("counter space exhausted")
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> ToyScalar {
        let reduced = bytes
            .iter()
            .fold(0u128, |acc, b| (acc * 256 + *b as u128) % ORDER as u128);
        ToyScalar::from(reduced as u64)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_be_bytes().to_vec()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        let arr: [u8; 8] = bytes.try_into().map_err(|_| GroupError::InvalidElement)?;
        let v = u64::from_be_bytes(arr);
        if v == 0 || v >= AMBIENT_MODULUS || powmod(v, ORDER) != 1 {
            return Err(GroupError::InvalidElement);
        }
        Ok(ToyElement(v))
    }
}
