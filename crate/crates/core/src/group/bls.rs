use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
use bls12_381::{G1Affine, G1Projective, Scalar};
use sha2::Sha256;

use super::{CyclicGroup, GroupError};

impl CyclicGroup for G1Projective {
    type Scalar = Scalar;

    const ELEMENT_LEN: usize = 48;

    fn identity() -> Self {
        G1Projective::identity()
    }

    fn generator() -> Self {
        G1Projective::generator()
    }

    fn mul(&self, rhs: &Self) -> Self {
        self + rhs
    }

    fn inverse(&self) -> Self {
        -self
    }

    fn exp(&self, e: &Scalar) -> Self {
        self * e
    }

    fn hash_to_group(dst: &[u8], msg: &[u8]) -> Self {
        <G1Projective as HashToCurve<ExpandMsgXmd<Sha256>>>::hash_to_curve(msg, dst)
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> Scalar {
        Scalar::from_bytes_wide(bytes)
    }

    fn to_bytes(&self) -> Vec<u8> {
        G1Affine::from(self).to_compressed().to_vec()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        let arr: [u8; 48] = bytes.try_into().map_err(|_| GroupError::InvalidElement)?;
        Option::<G1Affine>::from(G1Affine::from_compressed(&arr))
            .map(G1Projective::from)
            .ok_or(GroupError::InvalidElement)
    }
}
