use std::collections::BTreeSet;

use super::*;
use crate::bank::{BankConfig, Profile, Verdict};
use crate::nizk::verify_voucher;
use crate::testkit::{self, rng};
use crate::wallet::verify_issued;
use crate::wire::{rc_of, WireObject};

fn offline(mode: BalanceMode) -> AtmConfig {
    AtmConfig { mode, ..AtmConfig::default() }
}

#[test]
fn init_registers_distinct_atms() {
    let mut r = rng(20);
    let bank = testkit::bank(&mut r);
    let a = testkit::atm(&bank, AtmConfig::default(), 0, &mut r);
    let b = testkit::atm(&bank, AtmConfig::default(), 0, &mut r);
    assert_ne!(a.pk(), b.pk());
    assert_eq!(bank.account(&a.pk()).unwrap().role, Role::Atm);
    let (q, delta) = commit1(bank.params(), a.id.sk, &mut r).unwrap();
    let proof = a.id.prove_q(bank.params(), &q, &delta, &mut r).unwrap();
    assert!(bank.params().atm_cred.zverify(&bank.params().gens, &q, &proof));
}

#[test]
fn stocked_coins_carry_valid_signatures() {
    let mut r = rng(21);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig::default(), 0, &mut r);
    assert_eq!(atm.req_coin(5, &mut r).unwrap(), 5);
    assert_eq!(atm.req_coin(2, &mut r).unwrap(), 7);
    let pk = &bank.params().blind_pk;
    assert!(atm.stock().iter().all(|k| RsaFdh::verify(pk, &coin_digest(&k.c1, &k.c2, &k.q), &k.sigma_c)));
    assert_eq!(bank.minted_for(&atm.pk()), 7);
}

#[test]
fn promise_voucher_and_prf_output_check_out() {
    let mut r = rng(22);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig::default(), 1, &mut r);
    let u = testkit::user(&bank, &mut r);
    let rec = atm.stock()[0].clone();
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    let promise = atm.begin_issue(&req, &mut r).unwrap();
    assert_eq!(atm.session_phase(&promise.nonce), Some(Phase::Promised));
    assert!(atm.stock().is_empty());
    let msg = promise_message(&promise.i, &promise.voucher, &promise.nonce);
    assert!(VerifyingKey(atm.certificate().signing_pk).verify(&msg, &promise.sigma));

    let AnyVoucher::Plain(v) = &promise.voucher else { panic!("plain voucher expected") };
    let st = VoucherStatement { c1: rec.c1, c2: rec.c2, q: rec.q, x: v.x, y: v.y, cid: cid_of(&v.r_c), r_c: v.r_c };
    assert!(verify_voucher(&bank.params().gens, &st, &v.pi_cid));
    let cid = rc_of(&req.p) + Scalar::ONE;
    let g = GroupElement::generator();
    assert_eq!(v.x, g.exp(&(Scalar::ONE + rec.k1 + cid).invert().unwrap()));
}

#[test]
fn coin_released_once_and_only_for_a_valid_receipt() {
    let mut r = rng(23);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig::default(), 1, &mut r);
    let u = testkit::user(&bank, &mut r);
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    let promise = atm.begin_issue(&req, &mut r).unwrap();
    let mut other = promise.clone();
    other.nonce[0] ^= 0xff;
    let sigma = atm.id.signing.sign(&promise_message(&other.i, &other.voucher, &other.nonce), &mut r);
    other.sigma = sigma;
    let wrong = u.issue_receipt(bank.params(), atm.certificate(), &other, &req.p, &mut r).unwrap();
    assert_eq!(atm.complete_issue(&promise.nonce, &wrong, &mut r), Err(AtmError::InvalidReceipt));
    assert_eq!(atm.session_phase(&promise.nonce), Some(Phase::Promised));
    assert_eq!(atm.complete_issue(&other.nonce, &wrong, &mut r), Err(AtmError::UnknownSession));

    let receipt = u.issue_receipt(bank.params(), atm.certificate(), &promise, &req.p, &mut r).unwrap();
    let coin = atm.complete_issue(&promise.nonce, &receipt, &mut r).unwrap().unwrap();
    assert_eq!(promise_digest(&coin, &u.pk(), &atm.pk()), promise.i);
    assert!(verify_issued(bank.params(), &coin, &promise.voucher).is_ok());
    assert_eq!(atm.complete_issue(&promise.nonce, &receipt, &mut r), Err(AtmError::AlreadyCompleted));
    assert_eq!(bank.balance(&u.pk()), Some(99));
}

#[test]
fn expired_sessions_retire_their_records() {
    let mut r = rng(24);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig { session_ttl: 5, ..AtmConfig::default() }, 2, &mut r);
    let u = testkit::user(&bank, &mut r);
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    let promise = atm.begin_issue(&req, &mut r).unwrap();
    atm.tick(4);
    assert_eq!(atm.session_phase(&promise.nonce), Some(Phase::Promised));
    atm.tick(5);
    assert_eq!(atm.session_phase(&promise.nonce), Some(Phase::Aborted));
    assert_eq!(atm.retired(), 1);
    assert_eq!(atm.unissued(), 1);
    let receipt = u.issue_receipt(bank.params(), atm.certificate(), &promise, &req.p, &mut r).unwrap();
    assert_eq!(atm.complete_issue(&promise.nonce, &receipt, &mut r), Err(AtmError::UnknownSession));
    assert_eq!(bank.balance(&u.pk()), Some(100));
}

#[test]
fn offline_modes_use_the_filter_and_defer_receipts() {
    let mut r = rng(25);
    let cfg = crate::bank::BankConfig { opening_balance: 1, ..testkit::toy_config() };
    let bank = std::sync::Arc::new(crate::bank::Bank::init(cfg, &mut r).unwrap());
    let mut pure = testkit::atm(&bank, offline(BalanceMode::PureOffline), 3, &mut r);
    let mut fallback = testkit::atm(&bank, offline(BalanceMode::OfflineWithFallback), 3, &mut r);
    let mut u = testkit::user(&bank, &mut r);
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    assert_eq!(pure.begin_issue(&req, &mut r), Err(AtmError::NoFilter));

    pure.install_filter(bank.low_balance_filter(1e-3, 100, 1).unwrap()).unwrap();
    testkit::withdraw(&mut u, &mut pure, &bank, &mut r);
    assert_eq!(pure.deferred_receipts(), 1);
    assert_eq!(bank.balance(&u.pk()), Some(1));
    pure.tick(10);
    assert_eq!(pure.deferred_receipts(), 0);
    assert_eq!(bank.balance(&u.pk()), Some(0));

    let stale = bank.low_balance_filter(1e-3, 100, 1).unwrap();
    assert_eq!(pure.install_filter(stale), Err(AtmError::StaleFilter { current: 1, offered: 1 }));
    pure.install_filter(bank.low_balance_filter(1e-3, 100, 2).unwrap()).unwrap();
    fallback.install_filter(bank.low_balance_filter(1e-3, 100, 2).unwrap()).unwrap();
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    assert_eq!(pure.begin_issue(&req, &mut r), Err(AtmError::InsufficientBalance));
    assert_eq!(fallback.begin_issue(&req, &mut r), Err(AtmError::InsufficientBalance));
}

#[test]
fn fallback_recovers_from_a_stale_positive() {
    let mut r = rng(26);
    let cfg = crate::bank::BankConfig { opening_balance: 1, ..testkit::toy_config() };
    let bank = std::sync::Arc::new(crate::bank::Bank::init(cfg, &mut r).unwrap());
    let mut online = testkit::atm(&bank, AtmConfig::default(), 2, &mut r);
    let mut pure = testkit::atm(&bank, offline(BalanceMode::PureOffline), 1, &mut r);
    let mut fallback = testkit::atm(&bank, offline(BalanceMode::OfflineWithFallback), 1, &mut r);
    let mut m = testkit::merchant(&bank, &mut r);
    let mut funder = testkit::user(&bank, &mut r);
    testkit::withdraw(m.user_mut(), &mut online, &bank, &mut r);
    assert_eq!(bank.balance(&m.pk()), Some(0));
    let filter = bank.low_balance_filter(1e-3, 100, 1).unwrap();
    assert!(filter.contains_pk(&m.pk()));
    pure.install_filter(filter.clone()).unwrap();
    fallback.install_filter(filter).unwrap();

    let idx = testkit::withdraw(&mut funder, &mut online, &bank, &mut r);
    let r_v = m.fresh_nonce(&mut r).unwrap();
    let (c, v, t) = funder.spend(bank.params(), idx, &m.pk(), &r_v, &mut r).unwrap();
    m.accept(bank.params(), c, v, t).unwrap();
    assert_eq!(m.deposit_all(&bank), vec![Ok(Verdict::Accepted)]);
    assert_eq!(bank.balance(&m.pk()), Some(1));

    let (req, _) = m.user().withdraw_request(bank.params(), &mut r).unwrap();
    assert_eq!(pure.begin_issue(&req, &mut r), Err(AtmError::InsufficientBalance));
    assert!(fallback.begin_issue(&req, &mut r).is_ok());
}

#[test]
fn compact_keys_are_bounded_by_the_counter() {
    let mut r = rng(27);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig { variant: Variant::Compact, ..AtmConfig::default() }, 0, &mut r);
    let mut u = testkit::user(&bank, &mut r);
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    assert_eq!(atm.begin_issue(&req, &mut r), Err(AtmError::NoCompactKeys));
    atm.provision_compact(&mut r).unwrap();
    assert_eq!(bank.minted_for(&atm.pk()), 8);
    assert_eq!(atm.unissued(), 8);
    let mut xs = BTreeSet::new();
    for i in 0..8 {
        let idx = testkit::withdraw(&mut u, &mut atm, &bank, &mut r);
        let e = &u.purse()[idx];
        assert!(verify_issued(bank.params(), &e.coin, &e.voucher).is_ok());
        xs.insert(e.voucher.x().to_bytes());
        assert_eq!(atm.compact_counter(), Some(i + 1));
    }
    assert_eq!(xs.len(), 8);
    assert_eq!(atm.unissued(), 0);
    let (req, _) = u.withdraw_request(bank.params(), &mut r).unwrap();
    assert_eq!(atm.begin_issue(&req, &mut r), Err(AtmError::KeyExhausted(8)));

    let m = testkit::merchant(&bank, &mut r);
    let (c, v, t) = u.spend(bank.params(), 0, &m.pk(), &[9; 32], &mut r).unwrap();
    assert_eq!(bank.update_tx(&c, &v, &t, &m.pk()), Ok(Verdict::Accepted));
}

#[test]
fn vouchers_do_not_embed_the_atm_key() {
    let mut r = rng(28);
    let bank = testkit::bank(&mut r);
    let mut atm = testkit::atm(&bank, AtmConfig::default(), 3, &mut r);
    let mut u = testkit::user(&bank, &mut r);
    let pk = atm.pk().to_bytes();
    for _ in 0..3 {
        let idx = testkit::withdraw(&mut u, &mut atm, &bank, &mut r);
        let e = &u.purse()[idx];
        for bytes in [e.coin.encode(), e.voucher.encode()] {
            assert!(!bytes.windows(pk.len()).any(|w| w == pk.as_slice()));
        }
    }
}

#[test]
fn hundred_thousand_coin_stock_fits_storage_and_traffic_budget() {
    let mut r = rng(29);
    let config = BankConfig { profile: Profile::Production, ..BankConfig::default() };
    let bank = Arc::new(Bank::init(config, &mut r).unwrap());
    let mut atm = testkit::atm(&bank, AtmConfig::default(), 0, &mut r);
    atm.req_coin(10, &mut r).unwrap();
    let per_record = atm.stock().iter().map(|k| k.encode().len()).max().unwrap() as u64;
    // Each coin crosses the wire as one blinded message and one blinded signature.
    let per_coin_traffic = 2 * bank.params().blind_pk.modulus_len() as u64;
    let (storage, traffic) = (100_000 * per_record, 100_000 * per_coin_traffic);
    assert!(storage <= 200_000_000, "stock of 1e5 coins needs {storage} bytes");
    assert!(traffic <= 132_000_000, "stocking 1e5 coins moves {traffic} bytes");
}
