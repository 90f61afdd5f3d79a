use super::*;
use crate::nizk::StatementTag;
use ff::Field;
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use std::sync::OnceLock;

fn pool() -> &'static [GroupElement] {
    static POOL: OnceLock<Vec<GroupElement>> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        (0..32).map(|_| GroupElement::generator().exp(&Scalar::random(&mut rng))).collect()
    })
}

struct Gen(ChaCha20Rng);

impl Gen {
    fn el(&mut self) -> GroupElement {
        pool()[(self.0.next_u32() % 32) as usize]
    }
    fn sc(&mut self) -> Scalar {
        Scalar::random(&mut self.0)
    }
    fn bytes32(&mut self) -> [u8; 32] {
        let mut b = [0u8; 32];
        self.0.fill_bytes(&mut b);
        b
    }
    fn proof(&mut self, tag: StatementTag) -> Proof<GroupElement> {
        let nc = 1 + (self.0.next_u32() % 6) as usize;
        let nr = 1 + (self.0.next_u32() % 8) as usize;
        Proof {
            tag,
            commitments: (0..nc).map(|_| self.el()).collect(),
            challenge: self.sc(),
            responses: (0..nr).map(|_| self.sc()).collect(),
        }
    }
    fn sig(&mut self) -> Signature<Scalar> {
        Signature { challenge: self.sc(), response: self.sc() }
    }
    fn blind(&mut self) -> BlindSignature {
        let mut b = vec![0u8; 128];
        self.0.fill_bytes(&mut b);
        BlindSignature(b)
    }
    fn coin(&mut self) -> Coin {
        Coin { c1: self.el(), c2: self.el(), q: self.el(), sigma_c: self.blind() }
    }
    fn voucher(&mut self) -> Voucher {
        Voucher {
            p: self.el(),
            pi_sk_u: self.proof(StatementTag::Credential),
            x: self.el(),
            y: self.el(),
            pi_cid: self.proof(StatementTag::Voucher),
            pi_sk_a: self.proof(StatementTag::Credential),
            r_c: self.sc(),
        }
    }
    fn compact_coin(&mut self) -> CompactCoin {
        let sigma_c = if self.0.next_u32() & 1 == 0 { None } else { Some(self.blind()) };
        CompactCoin {
            c1: self.el(),
            c2: self.el(),
            q: self.el(),
            pi_k1: self.proof(StatementTag::Credential),
            pi_k2: self.proof(StatementTag::Credential),
            pi_sk_a: self.proof(StatementTag::Credential),
            sigma_c,
        }
    }
    fn compact_voucher(&mut self) -> CompactVoucher {
        CompactVoucher {
            j: self.el(),
            p: self.el(),
            pi_sk_u: self.proof(StatementTag::Credential),
            x: self.el(),
            y: self.el(),
            pi_ctr: self.proof(StatementTag::Range),
            pi_cid: self.proof(StatementTag::CompactVoucher),
            r_c: self.sc(),
        }
    }
    fn any_voucher(&mut self) -> AnyVoucher {
        if self.0.next_u32() & 1 == 0 {
            AnyVoucher::Plain(self.voucher())
        } else {
            AnyVoucher::Compact(self.compact_voucher())
        }
    }
    fn cert(&mut self) -> Certificate {
        Certificate { role: Role::User, pk: self.el(), signing_pk: self.el(), sig: self.sig() }
    }
}

fn round_trip<T: WireObject + PartialEq + std::fmt::Debug>(v: &T) {
    let bytes = v.encode();
    assert_eq!(&T::decode(&bytes).unwrap(), v);
    assert_eq!(v.encode(), bytes);
    let spans = field_spans(&bytes).unwrap();
    assert!(spans.iter().enumerate().all(|(i, s)| s.tag as usize == i + 1));
    assert!(T::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(T::decode(&longer).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_type_round_trips(seed in any::<u64>()) {
        let mut g = Gen(ChaCha20Rng::seed_from_u64(seed));
        round_trip(&g.coin());
        round_trip(&g.voucher());
        round_trip(&Transaction { z: g.el(), pi_t: g.proof(StatementTag::Spend), r_v: g.bytes32(), r_t: g.sc() });
        round_trip(&g.compact_coin());
        round_trip(&g.compact_voucher());
        round_trip(&Promise { sigma: g.sig(), i: g.bytes32(), voucher: g.any_voucher(), nonce: g.bytes32() });
        round_trip(&Receipt { pk_u: g.el(), pk_a: g.el(), nonce: g.bytes32(), sig: g.sig() });
        round_trip(&AbortRecord {
            sigma: g.sig(), i: g.bytes32(), voucher: g.any_voucher(), nonce: g.bytes32(), pk_u: g.el(), pk_a: g.el(),
        });
        round_trip(&g.cert());
        let cert = g.cert();
        round_trip(&WithdrawRequest { pk_u: g.el(), p: g.el(), pi_sk_u: g.proof(StatementTag::Credential), cert });
        round_trip(&PurseEntry {
            coin: AnyCoin::Plain(g.coin()), voucher: g.any_voucher(), blinding: g.sc(), spent: seed % 2 == 0,
        });
        round_trip(&KsRecord {
            c1: g.el(), c2: g.el(), q: g.el(), k1: g.sc(), k2: g.sc(), beta1: g.sc(), beta2: g.sc(),
            delta: g.sc(), sigma_c: g.blind(),
        });
        round_trip(&SpentEntry {
            key: g.bytes32().to_vec(), cid: g.sc(), x: g.el(), y: g.el(), z: g.el(), r_c: g.sc(), r_t: g.sc(),
            merchant: g.el(),
        });
        round_trip(&AccountRecord { pk: g.el(), role: Role::Atm, balance: seed, signing_pk: g.el() });
        round_trip(&AppliedReceipt { pk_u: g.el(), pk_a: g.el(), nonce: g.bytes32() });
        round_trip(&RateRecord { pk_a: g.el(), minted: seed });
        round_trip(&VoidedRecord { coin: g.bytes32(), culprit: g.el() });
    }
}

#[test]
fn header_errors() {
    let mut g = Gen(ChaCha20Rng::seed_from_u64(1));
    let bytes = g.coin().encode();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(Coin::decode(&bad), Err(WireError::BadMagic));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert_eq!(Coin::decode(&bad), Err(WireError::UnsupportedVersion(9)));
    let mut bad = bytes.clone();
    bad[5] = 0x7f;
    assert_eq!(Coin::decode(&bad), Err(WireError::UnknownTag(0x7f)));
    assert_eq!(
        Voucher::decode(&bytes),
        Err(WireError::UnexpectedType { expected: tag::VOUCHER, found: tag::COIN })
    );
    assert!(matches!(Coin::decode(&bytes[..5]), Err(WireError::Malformed(_))));
    assert!(matches!(AnyVoucher::decode(&bytes), Err(WireError::UnexpectedType { .. })));
}

#[test]
fn non_canonical_values_rejected() {
    let mut g = Gen(ChaCha20Rng::seed_from_u64(2));
    let tx = Transaction { z: g.el(), pi_t: g.proof(StatementTag::Spend), r_v: g.bytes32(), r_t: g.sc() };
    let mut bytes = tx.encode();
    let spans = field_spans(&bytes).unwrap();
    for b in &mut bytes[spans[3].value.clone()] {
        *b = 0xff;
    }
    assert_eq!(Transaction::decode(&bytes), Err(WireError::NonCanonical(4)));
    let mut bytes = tx.encode();
    bytes[spans[0].value.start] ^= 0x80;
    assert_eq!(Transaction::decode(&bytes), Err(WireError::NonCanonical(1)));
}

#[test]
fn field_order_is_enforced() {
    let mut g = Gen(ChaCha20Rng::seed_from_u64(3));
    let mut bytes = g.coin().encode();
    let spans = field_spans(&bytes).unwrap();
    bytes[spans[1].value.start - 5] = 3;
    assert!(matches!(Coin::decode(&bytes), Err(WireError::Malformed(_))));
}

#[test]
fn derived_values() {
    let mut g = Gen(ChaCha20Rng::seed_from_u64(4));
    let p = g.el();
    assert_eq!(cid_of(&rc_of(&p)), rc_of(&p) + Scalar::ONE);
    let (pk, r_v) = (g.el(), g.bytes32());
    let mut other = r_v;
    other[0] ^= 1;
    assert_ne!(rt_of(&pk, &r_v), rt_of(&pk, &other));
    let coin = AnyCoin::Plain(g.coin());
    let (u, a) = (g.el(), g.el());
    assert_ne!(promise_digest(&coin, &u, &a), promise_digest(&coin, &a, &u));
}
