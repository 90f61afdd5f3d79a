//! Protocol messages and the values derived from their canonical bytes.

use super::{blind_sig, digest, nonce, tag, unframe, FieldReader, FieldWriter, WireError, WireObject};
use crate::blindsig::BlindSignature;
use crate::group::{CyclicGroup, GroupElement, Scalar};
use crate::nizk::Proof;
use crate::primitives::{ro, Digest, Nonce, Signature};

/// `⟨C1, C2, Q, σ_c⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coin {
    pub c1: GroupElement,
    pub c2: GroupElement,
    pub q: GroupElement,
    pub sigma_c: BlindSignature,
}

/// `⟨P, π_skU, X, Y, π_cid, π_skA, r_c⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Voucher {
    pub p: GroupElement,
    pub pi_sk_u: Proof<GroupElement>,
    pub x: GroupElement,
    pub y: GroupElement,
    pub pi_cid: Proof<GroupElement>,
    pub pi_sk_a: Proof<GroupElement>,
    pub r_c: Scalar,
}

/// `⟨Z, π_T, r_v, r_t⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub z: GroupElement,
    pub pi_t: Proof<GroupElement>,
    pub r_v: Nonce,
    pub r_t: Scalar,
}

/// Coin of the compact variant: fresh commitments to the reusable PRF keys
/// with presentations of the bank's credentials on them. The blind
/// signature is optional; see the crate README.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactCoin {
    pub c1: GroupElement,
    pub c2: GroupElement,
    pub q: GroupElement,
    pub pi_k1: Proof<GroupElement>,
    pub pi_k2: Proof<GroupElement>,
    pub pi_sk_a: Proof<GroupElement>,
    pub sigma_c: Option<BlindSignature>,
}

/// `⟨J, P, π_skU, X, Y, π_ctr, π_cid, r_c⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactVoucher {
    pub j: GroupElement,
    pub p: GroupElement,
    pub pi_sk_u: Proof<GroupElement>,
    pub x: GroupElement,
    pub y: GroupElement,
    pub pi_ctr: Proof<GroupElement>,
    pub pi_cid: Proof<GroupElement>,
    pub r_c: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum AnyCoin {
    Plain(Coin),
    Compact(CompactCoin),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnyVoucher {
    Plain(Voucher),
    Compact(CompactVoucher),
}

/// The ATM's signed promise `Σ = sign(I, V, nonce)`, sent before the user
/// hands over a receipt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Promise {
    pub sigma: Signature<Scalar>,
    pub i: Digest,
    pub voucher: AnyVoucher,
    pub nonce: Nonce,
}

/// User's signature on `⟨"withdrawal", pk_U, pk_A, nonce⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub pk_u: GroupElement,
    pub pk_a: GroupElement,
    pub nonce: Nonce,
    pub sig: Signature<Scalar>,
}

/// Payload of an AbortWithdrawal message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbortRecord {
    pub sigma: Signature<Scalar>,
    pub i: Digest,
    pub voucher: AnyVoucher,
    pub nonce: Nonce,
    pub pk_u: GroupElement,
    pub pk_a: GroupElement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Role {
    User = 1,
    Atm = 2,
}

impl Role {
    fn from_byte(b: u8) -> Option<Role> {
        match b {
            1 => Some(Role::User),
            2 => Some(Role::Atm),
            _ => None,
        }
    }
}

/// Bank's signature binding an identity key to a signing key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub role: Role,
    pub pk: GroupElement,
    pub signing_pk: GroupElement,
    pub sig: Signature<Scalar>,
}

/// First message of a withdrawal: `⟨pk_U, P, π_skU⟩` plus the user's
/// certificate so the ATM can check the receipt offline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WithdrawRequest {
    pub pk_u: GroupElement,
    pub p: GroupElement,
    pub pi_sk_u: Proof<GroupElement>,
    pub cert: Certificate,
}

impl WireObject for Coin {
    const TAG: u8 = tag::COIN;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.c1).element(&self.c2).element(&self.q).bytes(&self.sigma_c.0);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Coin {
            c1: r.element()?,
            c2: r.element()?,
            q: r.element()?,
            sigma_c: blind_sig(r.bytes()?)?,
        })
    }
}

impl WireObject for Voucher {
    const TAG: u8 = tag::VOUCHER;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.p)
            .proof(&self.pi_sk_u)
            .element(&self.x)
            .element(&self.y)
            .proof(&self.pi_cid)
            .proof(&self.pi_sk_a)
            .scalar(&self.r_c);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Voucher {
            p: r.element()?,
            pi_sk_u: r.proof()?,
            x: r.element()?,
            y: r.element()?,
            pi_cid: r.proof()?,
            pi_sk_a: r.proof()?,
            r_c: r.scalar()?,
        })
    }
}

impl WireObject for Transaction {
    const TAG: u8 = tag::TRANSACTION;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.z).proof(&self.pi_t).bytes(&self.r_v).scalar(&self.r_t);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Transaction {
            z: r.element()?,
            pi_t: r.proof()?,
            r_v: nonce(r.bytes()?)?,
            r_t: r.scalar()?,
        })
    }
}

impl WireObject for CompactCoin {
    const TAG: u8 = tag::COMPACT_COIN;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.c1)
            .element(&self.c2)
            .element(&self.q)
            .proof(&self.pi_k1)
            .proof(&self.pi_k2)
            .proof(&self.pi_sk_a);
        // An absent signature is an empty field.
        w.bytes(self.sigma_c.as_ref().map(|s| s.0.as_slice()).unwrap_or(&[]));
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(CompactCoin {
            c1: r.element()?,
            c2: r.element()?,
            q: r.element()?,
            pi_k1: r.proof()?,
            pi_k2: r.proof()?,
            pi_sk_a: r.proof()?,
            sigma_c: match r.bytes()? {
                [] => None,
                b => Some(BlindSignature(b.to_vec())),
            },
        })
    }
}

impl WireObject for CompactVoucher {
    const TAG: u8 = tag::COMPACT_VOUCHER;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.j)
            .element(&self.p)
            .proof(&self.pi_sk_u)
            .element(&self.x)
            .element(&self.y)
            .proof(&self.pi_ctr)
            .proof(&self.pi_cid)
            .scalar(&self.r_c);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(CompactVoucher {
            j: r.element()?,
            p: r.element()?,
            pi_sk_u: r.proof()?,
            x: r.element()?,
            y: r.element()?,
            pi_ctr: r.proof()?,
            pi_cid: r.proof()?,
            r_c: r.scalar()?,
        })
    }
}

impl AnyCoin {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            AnyCoin::Plain(c) => c.encode(),
            AnyCoin::Compact(c) => c.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        match unframe(bytes, None)?.0 {
            tag::COIN => Coin::decode(bytes).map(AnyCoin::Plain),
            tag::COMPACT_COIN => CompactCoin::decode(bytes).map(AnyCoin::Compact),
            found => Err(WireError::UnexpectedType { expected: tag::COIN, found }),
        }
    }

    pub fn commitments(&self) -> (GroupElement, GroupElement, GroupElement) {
        match self {
            AnyCoin::Plain(c) => (c.c1, c.c2, c.q),
            AnyCoin::Compact(c) => (c.c1, c.c2, c.q),
        }
    }

    /// `H(C1, C2, Q)`, the message the bank blind-signs.
    pub fn digest(&self) -> Digest {
        let (c1, c2, q) = self.commitments();
        coin_digest(&c1, &c2, &q)
    }
}

impl AnyVoucher {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            AnyVoucher::Plain(v) => v.encode(),
            AnyVoucher::Compact(v) => v.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        match unframe(bytes, None)?.0 {
            tag::VOUCHER => Voucher::decode(bytes).map(AnyVoucher::Plain),
            tag::COMPACT_VOUCHER => CompactVoucher::decode(bytes).map(AnyVoucher::Compact),
            found => Err(WireError::UnexpectedType { expected: tag::VOUCHER, found }),
        }
    }

    pub fn p(&self) -> GroupElement {
        match self {
            AnyVoucher::Plain(v) => v.p,
            AnyVoucher::Compact(v) => v.p,
        }
    }

    pub fn x(&self) -> GroupElement {
        match self {
            AnyVoucher::Plain(v) => v.x,
            AnyVoucher::Compact(v) => v.x,
        }
    }

    pub fn y(&self) -> GroupElement {
        match self {
            AnyVoucher::Plain(v) => v.y,
            AnyVoucher::Compact(v) => v.y,
        }
    }

    pub fn r_c(&self) -> Scalar {
        match self {
            AnyVoucher::Plain(v) => v.r_c,
            AnyVoucher::Compact(v) => v.r_c,
        }
    }

    /// The coin identifier the spend proof is evaluated at.
    pub fn cid(&self) -> Scalar {
        match self {
            AnyVoucher::Plain(v) => cid_of(&v.r_c),
            AnyVoucher::Compact(v) => compact_cid(&v.p, &v.j),
        }
    }
}

impl WireObject for Promise {
    const TAG: u8 = tag::PROMISE;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.signature(&self.sigma).bytes(&self.i).bytes(&self.voucher.encode()).bytes(&self.nonce);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Promise {
            sigma: r.signature()?,
            i: digest(r.bytes()?)?,
            voucher: AnyVoucher::decode(r.bytes()?)?,
            nonce: nonce(r.bytes()?)?,
        })
    }
}

impl WireObject for Receipt {
    const TAG: u8 = tag::RECEIPT;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.pk_u).element(&self.pk_a).bytes(&self.nonce).signature(&self.sig);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Receipt {
            pk_u: r.element()?,
            pk_a: r.element()?,
            nonce: nonce(r.bytes()?)?,
            sig: r.signature()?,
        })
    }
}

impl WireObject for AbortRecord {
    const TAG: u8 = tag::ABORT_RECORD;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.signature(&self.sigma)
            .bytes(&self.i)
            .bytes(&self.voucher.encode())
            .bytes(&self.nonce)
            .element(&self.pk_u)
            .element(&self.pk_a);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(AbortRecord {
            sigma: r.signature()?,
            i: digest(r.bytes()?)?,
            voucher: AnyVoucher::decode(r.bytes()?)?,
            nonce: nonce(r.bytes()?)?,
            pk_u: r.element()?,
            pk_a: r.element()?,
        })
    }
}

impl WireObject for Certificate {
    const TAG: u8 = tag::CERTIFICATE;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.u8(self.role as u8).element(&self.pk).element(&self.signing_pk).signature(&self.sig);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(Certificate {
            role: Role::from_byte(r.u8()?).ok_or(WireError::NonCanonical(1))?,
            pk: r.element()?,
            signing_pk: r.element()?,
            sig: r.signature()?,
        })
    }
}

impl WireObject for WithdrawRequest {
    const TAG: u8 = tag::WITHDRAW_REQUEST;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.pk_u).element(&self.p).proof(&self.pi_sk_u).nested(&self.cert);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(WithdrawRequest {
            pk_u: r.element()?,
            p: r.element()?,
            pi_sk_u: r.proof()?,
            cert: r.nested()?,
        })
    }
}

/// `H(C1, C2, Q)`.
pub fn coin_digest(c1: &GroupElement, c2: &GroupElement, q: &GroupElement) -> Digest {
    let mut m = c1.to_bytes();
    m.extend(c2.to_bytes());
    m.extend(q.to_bytes());
    ro(b"coin", &m)
}

/// `r_c = H(P)`.
pub fn rc_of(p: &GroupElement) -> Scalar {
    GroupElement::hash_to_scalar(b"rc", &p.to_bytes())
}

/// `cid = r_c + 1`.
pub fn cid_of(r_c: &Scalar) -> Scalar {
    *r_c + <Scalar as ff::Field>::ONE
}

/// `cid = H(P, J)` in the compact variant.
pub fn compact_cid(p: &GroupElement, j: &GroupElement) -> Scalar {
    let mut m = p.to_bytes();
    m.extend(j.to_bytes());
    GroupElement::hash_to_scalar(b"cid", &m)
}

/// `r_t = H(pk_m, r_v)`.
pub fn rt_of(pk_m: &GroupElement, r_v: &Nonce) -> Scalar {
    let mut m = pk_m.to_bytes();
    m.extend_from_slice(r_v);
    GroupElement::hash_to_scalar(b"rt", &m)
}

/// `I = ro(C, pk_U, pk_A)`.
pub fn promise_digest(coin: &AnyCoin, pk_u: &GroupElement, pk_a: &GroupElement) -> Digest {
    let mut m = coin.encode();
    m.extend(pk_u.to_bytes());
    m.extend(pk_a.to_bytes());
    ro(b"promise", &m)
}

/// Bytes covered by `Σ`.
pub fn promise_message(i: &Digest, voucher: &AnyVoucher, nonce: &Nonce) -> Vec<u8> {
    let mut m = b"promise".to_vec();
    m.extend_from_slice(i);
    m.extend(voucher.encode());
    m.extend_from_slice(nonce);
    m
}

/// Bytes covered by a receipt.
pub fn receipt_message(pk_u: &GroupElement, pk_a: &GroupElement, nonce: &Nonce) -> Vec<u8> {
    let mut m = b"withdrawal".to_vec();
    m.extend(pk_u.to_bytes());
    m.extend(pk_a.to_bytes());
    m.extend_from_slice(nonce);
    m
}

/// Bytes covered by a certificate.
pub fn certificate_message(role: Role, pk: &GroupElement, signing_pk: &GroupElement) -> Vec<u8> {
    let mut m = b"certificate".to_vec();
    m.push(role as u8);
    m.extend(pk.to_bytes());
    m.extend(signing_pk.to_bytes());
    m
}
