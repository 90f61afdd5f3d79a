//! Persistent records: purse entries, ATM stock, and bank ledger lines.

use super::{blind_sig, digest, tag, FieldReader, FieldWriter, WireError, WireObject};
use super::{AnyCoin, AnyVoucher, Role};
use crate::blindsig::BlindSignature;
use crate::group::{GroupElement, Scalar};
use crate::primitives::{Digest, Nonce};

/// A withdrawn coin with the blinding of its voucher commitment `P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PurseEntry {
    pub coin: AnyCoin,
    pub voucher: AnyVoucher,
    pub blinding: Scalar,
    pub spent: bool,
}

/// An unissued coin in the ATM's store, with every opening needed to issue
/// it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KsRecord {
    pub c1: GroupElement,
    pub c2: GroupElement,
    pub q: GroupElement,
    pub k1: Scalar,
    pub k2: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub delta: Scalar,
    pub sigma_c: BlindSignature,
}

/// One deposited coin: `⟨C, cid, Y, Z, r_c, r_t⟩` plus `X`. `key` is the
/// index the bank matches on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpentEntry {
    pub key: Vec<u8>,
    pub cid: Scalar,
    pub x: GroupElement,
    pub y: GroupElement,
    pub z: GroupElement,
    pub r_c: Scalar,
    pub r_t: Scalar,
    pub merchant: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountRecord {
    pub pk: GroupElement,
    pub role: Role,
    pub balance: u64,
    pub signing_pk: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppliedReceipt {
    pub pk_u: GroupElement,
    pub pk_a: GroupElement,
    pub nonce: Nonce,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateRecord {
    pub pk_a: GroupElement,
    pub minted: u64,
}

/// A deposit refused because its coin matched an aborted withdrawal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoidedRecord {
    pub coin: Digest,
    pub culprit: GroupElement,
}

impl WireObject for PurseEntry {
    const TAG: u8 = tag::PURSE_ENTRY;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.bytes(&self.coin.encode())
            .bytes(&self.voucher.encode())
            .scalar(&self.blinding)
            .u8(self.spent as u8);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(PurseEntry {
            coin: AnyCoin::decode(r.bytes()?)?,
            voucher: AnyVoucher::decode(r.bytes()?)?,
            blinding: r.scalar()?,
            spent: r.bool()?,
        })
    }
}

impl WireObject for KsRecord {
    const TAG: u8 = tag::KS_RECORD;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.c1)
            .element(&self.c2)
            .element(&self.q)
            .scalar(&self.k1)
            .scalar(&self.k2)
            .scalar(&self.beta1)
            .scalar(&self.beta2)
            .scalar(&self.delta)
            .bytes(&self.sigma_c.0);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(KsRecord {
            c1: r.element()?,
            c2: r.element()?,
            q: r.element()?,
            k1: r.scalar()?,
            k2: r.scalar()?,
            beta1: r.scalar()?,
            beta2: r.scalar()?,
            delta: r.scalar()?,
            sigma_c: blind_sig(r.bytes()?)?,
        })
    }
}

impl WireObject for SpentEntry {
    const TAG: u8 = tag::SPENT_ENTRY;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.bytes(&self.key)
            .scalar(&self.cid)
            .element(&self.x)
            .element(&self.y)
            .element(&self.z)
            .scalar(&self.r_c)
            .scalar(&self.r_t)
            .element(&self.merchant);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(SpentEntry {
            key: r.bytes()?.to_vec(),
            cid: r.scalar()?,
            x: r.element()?,
            y: r.element()?,
            z: r.element()?,
            r_c: r.scalar()?,
            r_t: r.scalar()?,
            merchant: r.element()?,
        })
    }
}

impl WireObject for AccountRecord {
    const TAG: u8 = tag::ACCOUNT;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.pk).u8(self.role as u8).u64(self.balance).element(&self.signing_pk);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(AccountRecord {
            pk: r.element()?,
            role: match r.u8()? {
                1 => Role::User,
                2 => Role::Atm,
                _ => return Err(WireError::NonCanonical(2)),
            },
            balance: r.u64()?,
            signing_pk: r.element()?,
        })
    }
}

impl WireObject for AppliedReceipt {
    const TAG: u8 = tag::APPLIED_RECEIPT;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.pk_u).element(&self.pk_a).bytes(&self.nonce);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(AppliedReceipt { pk_u: r.element()?, pk_a: r.element()?, nonce: r.fixed32()? })
    }
}

impl WireObject for RateRecord {
    const TAG: u8 = tag::RATE;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.element(&self.pk_a).u64(self.minted);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(RateRecord { pk_a: r.element()?, minted: r.u64()? })
    }
}

impl WireObject for VoidedRecord {
    const TAG: u8 = tag::VOIDED;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.bytes(&self.coin).element(&self.culprit);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        Ok(VoidedRecord { coin: digest(r.bytes()?)?, culprit: r.element()? })
    }
}
