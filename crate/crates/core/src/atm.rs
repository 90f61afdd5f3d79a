//! ATMs: coin stocking, the fair-exchange issuing state machine, and the
//! compact variant with reusable PRF keys.
//!
//! The free functions are the cryptographic building blocks shared with
//! the adversarial ATMs of the harness.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use ff::Field;
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Bank, BankError, PublicParams};
use crate::blindsig::{BlindError, BlindScheme, RsaFdh};
use crate::credsig::{CredError, Credential};
use crate::group::{CyclicGroup, GroupElement, Scalar};
use crate::nizk::{
    prove_compact_voucher, prove_key_registration, prove_opening, prove_range, prove_voucher, CompactVoucherStatement,
    CompactVoucherWitness, NizkError, VoucherStatement, VoucherWitness,
};
use crate::offline::LowBalanceFilter;
use crate::primitives::{dy_prf, gen_nonce, Nonce, Opening, PrfKey, PrimitiveError, SigningKey, VerifyingKey};
use crate::wire::{
    cid_of, coin_digest, promise_digest, promise_message, rc_of, receipt_message, AnyCoin, AnyVoucher, Certificate,
    Coin, CompactCoin, CompactVoucher, KsRecord, Promise, Receipt, Role, Voucher, WithdrawRequest,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtmError {
    #[error("user balance too low for a withdrawal")]
    InsufficientBalance,
    #[error("no coins in stock")]
    OutOfStock,
    #[error("user certificate or credential proof rejected")]
    InvalidUserProof,
    #[error("receipt does not verify for this session")]
    InvalidReceipt,
    #[error("no open session for this nonce")]
    UnknownSession,
    #[error("session already completed")]
    AlreadyCompleted,
    #[error("compact key pair used for all {0} issuances")]
    KeyExhausted(u64),
    #[error("compact keys not provisioned")]
    NoCompactKeys,
    #[error("filter epoch {offered} is not newer than {current}")]
    StaleFilter { current: u64, offered: u64 },
    #[error("no low-balance filter installed")]
    NoFilter,
    #[error("stocked coin fails verification")]
    BadStock,
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Blind(#[from] BlindError),
    #[error(transparent)]
    Credential(#[from] CredError),
    #[error(transparent)]
    Nizk(#[from] NizkError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

/// How the ATM decides whether a user can afford a withdrawal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Ask the bank, and forward receipts immediately.
    Online,
    /// Consult the filter, falling back to the bank on a hit; receipts are
    /// batched.
    OfflineWithFallback,
    /// Consult the filter only; a hit refuses the withdrawal.
    PureOffline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Compact,
}

#[derive(Clone, Debug)]
pub struct AtmConfig {
    pub mode: BalanceMode,
    pub variant: Variant,
    /// Ticks before an unreceipted session expires.
    pub session_ttl: u64,
    /// Ticks between receipt flushes in the offline modes.
    pub flush_interval: u64,
}

impl Default for AtmConfig {
    fn default() -> Self {
        AtmConfig { mode: BalanceMode::Online, variant: Variant::Plain, session_ttl: 60, flush_interval: 10 }
    }
}

/// An ATM's keys, credential and certificate.
pub struct AtmIdentity {
    sk: Scalar,
    pk: GroupElement,
    signing: SigningKey<GroupElement>,
    cred: Credential,
    cred_blinding: Scalar,
    cert: Certificate,
}

impl AtmIdentity {
    /// Samples `sk_A` and registers it with the bank.
    pub fn register(bank: &Bank, rng: &mut (impl RngCore + CryptoRng)) -> Result<AtmIdentity, AtmError> {
        let gens = &bank.params().gens;
        let sk = Scalar::random(&mut *rng);
        let pk = GroupElement::generator().exp(&sk);
        let opening = Opening::<GroupElement>::random(vec![sk], rng);
        let q = opening.commit(gens)?.0;
        let proof = prove_key_registration(gens, &q, &pk, &opening, rng)?;
        let signing = SigningKey::random(rng);
        let (cred, cert) = bank.register_atm(&q, &pk, &proof, &signing.verifying_key().0)?;
        Ok(AtmIdentity { sk, pk, signing, cred_blinding: opening.blinding + cred.s, cred, cert })
    }

    pub fn pk(&self) -> GroupElement {
        self.pk
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    fn prove_q(
        &self,
        params: &PublicParams,
        q: &GroupElement,
        delta: &Scalar,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<crate::nizk::Proof<GroupElement>, AtmError> {
        Ok(params.atm_cred.zprove(&params.gens, q, &[self.sk], delta, &self.cred_blinding, &self.cred, rng)?)
    }
}

fn commit1(params: &PublicParams, m: Scalar, rng: &mut (impl RngCore + CryptoRng)) -> Result<(GroupElement, Scalar), AtmError> {
    let o = Opening::<GroupElement>::random(vec![m], rng);
    Ok((o.commit(&params.gens)?.0, o.blinding))
}

/// Samples `count` coin records, has the bank blind-sign them, and returns
/// them unblinded and checked.
pub fn stock_records(
    bank: &Bank,
    id: &AtmIdentity,
    count: usize,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Vec<KsRecord>, AtmError> {
    let params = bank.params();
    let mut drafts = Vec::with_capacity(count);
    let mut blinded = Vec::with_capacity(count);
    for _ in 0..count {
        let (k1, k2) = (Scalar::random(&mut *rng), Scalar::random(&mut *rng));
        let (c1, beta1) = commit1(params, k1, rng)?;
        let (c2, beta2) = commit1(params, k2, rng)?;
        let (q, delta) = commit1(params, id.sk, rng)?;
        let (k, u) = RsaFdh::blind(&params.blind_pk, &coin_digest(&c1, &c2, &q), rng);
        blinded.push(k);
        drafts.push((c1, c2, q, k1, k2, beta1, beta2, delta, u));
    }
    let sigs = bank.issue_coin(&id.pk, &blinded)?;
    drafts
        .into_iter()
        .zip(sigs)
        .map(|((c1, c2, q, k1, k2, beta1, beta2, delta, u), s)| {
            let sigma_c = RsaFdh::unblind(&params.blind_pk, &s, u)?;
            if !RsaFdh::verify(&params.blind_pk, &coin_digest(&c1, &c2, &q), &sigma_c) {
                return Err(AtmError::BadStock);
            }
            Ok(KsRecord { c1, c2, q, k1, k2, beta1, beta2, delta, sigma_c })
        })
        .collect()
}

/// Binds coin record `rec` to the user commitment `p`.
pub fn issue_voucher(
    params: &PublicParams,
    id: &AtmIdentity,
    rec: &KsRecord,
    request: &WithdrawRequest,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<(AnyCoin, AnyVoucher), AtmError> {
    let p = request.p;
    let r_c = rc_of(&p);
    let cid = cid_of(&r_c);
    let x = dy_prf::<GroupElement>(&PrfKey(rec.k1), &cid)?;
    let y = id.pk.mul(&dy_prf::<GroupElement>(&PrfKey(rec.k2), &Scalar::ZERO)?.exp(&r_c));
    let st = VoucherStatement { c1: rec.c1, c2: rec.c2, q: rec.q, x, y, cid, r_c };
    let wit = VoucherWitness {
        k1: rec.k1,
        beta1: rec.beta1,
        k2: rec.k2,
        beta2: rec.beta2,
        sk_a: id.sk,
        delta: rec.delta,
    };
    let pi_cid = prove_voucher(&params.gens, &st, &wit, rng)?;
    let pi_sk_a = id.prove_q(params, &rec.q, &rec.delta, rng)?;
    let coin = Coin { c1: rec.c1, c2: rec.c2, q: rec.q, sigma_c: rec.sigma_c.clone() };
    let voucher = Voucher { p, pi_sk_u: request.pi_sk_u.clone(), x, y, pi_cid, pi_sk_a, r_c };
    Ok((AnyCoin::Plain(coin), AnyVoucher::Plain(voucher)))
}

/// `Σ = sign(I, V, nonce)` with `I = ro(C, pk_U, pk_A)`.
pub fn make_promise(
    id: &AtmIdentity,
    coin: &AnyCoin,
    voucher: AnyVoucher,
    pk_u: &GroupElement,
    nonce: Nonce,
    rng: &mut (impl RngCore + CryptoRng),
) -> Promise {
    let i = promise_digest(coin, pk_u, &id.pk);
    let sigma = id.signing.sign(&promise_message(&i, &voucher, &nonce), rng);
    Promise { sigma, i, voucher, nonce }
}

/// Checks the user's certificate and credential presentation on `P`.
pub fn check_request(params: &PublicParams, request: &WithdrawRequest) -> Result<(), AtmError> {
    let ok = params.verify_certificate(&request.cert, Role::User)
        && request.cert.pk == request.pk_u
        && params.user_cred.zverify(&params.gens, &request.p, &request.pi_sk_u);
    if ok {
        Ok(())
    } else {
        Err(AtmError::InvalidUserProof)
    }
}

/// Checks a receipt against the session it claims to close.
pub fn check_receipt(
    request: &WithdrawRequest,
    pk_a: &GroupElement,
    nonce: &Nonce,
    receipt: &Receipt,
) -> Result<(), AtmError> {
    let msg = receipt_message(&request.pk_u, pk_a, nonce);
    let ok = receipt.pk_u == request.pk_u
        && receipt.pk_a == *pk_a
        && receipt.nonce == *nonce
        && VerifyingKey(request.cert.signing_pk).verify(&msg, &receipt.sig);
    if ok {
        Ok(())
    } else {
        Err(AtmError::InvalidReceipt)
    }
}

/// A reusable PRF key pair certified by the bank, good for `n` issuances.
pub struct CompactKeys {
    k1: Scalar,
    k2: Scalar,
    cred1: Credential,
    cred2: Credential,
    blinding1: Scalar,
    blinding2: Scalar,
    ctr: u64,
    n: u64,
}

impl CompactKeys {
    /// Samples a key pair and has the bank certify it.
    pub fn provision(bank: &Bank, id: &AtmIdentity, rng: &mut (impl RngCore + CryptoRng)) -> Result<Self, AtmError> {
        let params = bank.params();
        let (k1, k2) = (Scalar::random(&mut *rng), Scalar::random(&mut *rng));
        let o1 = Opening::<GroupElement>::random(vec![k1], rng);
        let o2 = Opening::<GroupElement>::random(vec![k2], rng);
        let (c1, c2) = (o1.commit(&params.gens)?.0, o2.commit(&params.gens)?.0);
        let pi1 = prove_opening(&params.gens, &c1, &o1, rng)?;
        let pi2 = prove_opening(&params.gens, &c2, &o2, rng)?;
        let (cred1, cred2) = bank.issue_compact_keys(&id.pk, &c1, &pi1, &c2, &pi2)?;
        Ok(CompactKeys {
            k1,
            k2,
            blinding1: o1.blinding + cred1.s,
            blinding2: o2.blinding + cred2.s,
            cred1,
            cred2,
            ctr: 0,
            n: params.compact_n,
        })
    }

    pub fn counter(&self) -> u64 {
        self.ctr
    }

    pub fn remaining(&self) -> u64 {
        self.n - self.ctr
    }

    /// Issues at counter `ctr` without advancing or checking the internal
    /// counter.
    pub fn issue_at(
        &self,
        params: &PublicParams,
        id: &AtmIdentity,
        ctr: u64,
        request: &WithdrawRequest,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(AnyCoin, AnyVoucher), AtmError> {
        let gens = &params.gens;
        let (c1, beta1) = commit1(params, self.k1, rng)?;
        let (c2, beta2) = commit1(params, self.k2, rng)?;
        let (q, delta) = commit1(params, id.sk, rng)?;
        let ctr_s = Scalar::from(ctr);
        let (j, beta4) = commit1(params, ctr_s, rng)?;
        let p = request.p;
        let r_c = rc_of(&p);
        let x = dy_prf::<GroupElement>(&PrfKey(self.k1), &ctr_s)?;
        let y = id.pk.mul(&dy_prf::<GroupElement>(&PrfKey(self.k2), &ctr_s)?.exp(&r_c));
        let st = CompactVoucherStatement { c1, c2, q, j, x, y, r_c };
        let wit = CompactVoucherWitness {
            keys: VoucherWitness { k1: self.k1, beta1, k2: self.k2, beta2, sk_a: id.sk, delta },
            ctr: ctr_s,
            beta4,
        };
        let pi_cid = prove_compact_voucher(gens, &st, &wit, rng)?;
        let pi_ctr = prove_range(gens, &j, ctr, &beta4, self.n, rng)?;
        let pi_k1 = params.key_cred.zprove(gens, &c1, &[self.k1], &beta1, &self.blinding1, &self.cred1, rng)?;
        let pi_k2 = params.key_cred.zprove(gens, &c2, &[self.k2], &beta2, &self.blinding2, &self.cred2, rng)?;
        let pi_sk_a = id.prove_q(params, &q, &delta, rng)?;
        let coin = CompactCoin { c1, c2, q, pi_k1, pi_k2, pi_sk_a, sigma_c: None };
        let voucher = CompactVoucher { j, p, pi_sk_u: request.pi_sk_u.clone(), x, y, pi_ctr, pi_cid, r_c };
        Ok((AnyCoin::Compact(coin), AnyVoucher::Compact(voucher)))
    }
}

/// Anything a user can withdraw from: honest ATMs and the harness's
/// dishonest ones.
pub trait CoinIssuer {
    fn certificate(&self) -> &Certificate;

    fn begin_issue<R: RngCore + CryptoRng>(&mut self, request: &WithdrawRequest, rng: &mut R)
        -> Result<Promise, AtmError>;

    /// Releases the coin for a valid receipt. `None` means the issuer sent
    /// nothing.
    fn complete_issue<R: RngCore + CryptoRng>(
        &mut self,
        nonce: &Nonce,
        receipt: &Receipt,
        rng: &mut R,
    ) -> Result<Option<AnyCoin>, AtmError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Promised,
    Receipted,
    Done,
    /// Expired before a receipt arrived; the coin record is retired.
    Aborted,
}

struct Session {
    request: WithdrawRequest,
    coin: AnyCoin,
    phase: Phase,
    opened: u64,
}

pub struct Atm {
    id: AtmIdentity,
    bank: Arc<Bank>,
    config: AtmConfig,
    stock: VecDeque<KsRecord>,
    compact: Option<CompactKeys>,
    sessions: BTreeMap<Nonce, Session>,
    filter: Option<LowBalanceFilter>,
    deferred: Vec<(Receipt, Nonce)>,
    now: u64,
    last_flush: u64,
    retired: u64,
    failed_debits: u64,
}

impl Atm {
    pub fn init(bank: Arc<Bank>, config: AtmConfig, rng: &mut (impl RngCore + CryptoRng)) -> Result<Atm, AtmError> {
        let id = AtmIdentity::register(&bank, rng)?;
        Ok(Atm {
            id,
            bank,
            config,
            stock: VecDeque::new(),
            compact: None,
            sessions: BTreeMap::new(),
            filter: None,
            deferred: Vec::new(),
            now: 0,
            last_flush: 0,
            retired: 0,
            failed_debits: 0,
        })
    }

    pub fn identity(&self) -> &AtmIdentity {
        &self.id
    }

    pub fn pk(&self) -> GroupElement {
        self.id.pk
    }

    pub fn config(&self) -> &AtmConfig {
        &self.config
    }

    /// Stocks `n` coins from the bank and returns the new stock size.
    pub fn req_coin(&mut self, n: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<usize, AtmError> {
        let records = stock_records(&self.bank, &self.id, n, rng)?;
        self.stock.extend(records);
        Ok(self.stock.len())
    }

    /// Obtains a fresh certified compact key pair, replacing any current one.
    pub fn provision_compact(&mut self, rng: &mut (impl RngCore + CryptoRng)) -> Result<(), AtmError> {
        self.compact = Some(CompactKeys::provision(&self.bank, &self.id, rng)?);
        Ok(())
    }

    pub fn stock(&self) -> &VecDeque<KsRecord> {
        &self.stock
    }

    /// Unissued coins: stocked records plus the remaining compact allowance.
    pub fn unissued(&self) -> u64 {
        self.stock.len() as u64 + self.compact.as_ref().map_or(0, |k| k.remaining())
    }

    /// Sessions holding a coin that has been promised but not released.
    pub fn in_flight(&self) -> u64 {
        self.sessions.values().filter(|s| s.phase == Phase::Promised).count() as u64
    }

    /// Records retired by session expiry.
    pub fn retired(&self) -> u64 {
        self.retired
    }

    pub fn compact_counter(&self) -> Option<u64> {
        self.compact.as_ref().map(|k| k.counter())
    }

    /// Receipts the bank refused when forwarded.
    pub fn failed_debits(&self) -> u64 {
        self.failed_debits
    }

    pub fn session_phase(&self, nonce: &Nonce) -> Option<Phase> {
        self.sessions.get(nonce).map(|s| s.phase)
    }

    pub fn deferred_receipts(&self) -> usize {
        self.deferred.len()
    }

    /// Installs a newer low-balance filter.
    pub fn install_filter(&mut self, filter: LowBalanceFilter) -> Result<(), AtmError> {
        if let Some(cur) = &self.filter {
            if filter.epoch <= cur.epoch {
                return Err(AtmError::StaleFilter { current: cur.epoch, offered: filter.epoch });
            }
        }
        self.filter = Some(filter);
        Ok(())
    }

    fn check_balance(&self, pk_u: &GroupElement) -> Result<(), AtmError> {
        let online = || match self.bank.balance(pk_u) {
            Some(b) if b >= self.bank.config().withdrawal_amount => Ok(()),
            _ => Err(AtmError::InsufficientBalance),
        };
        match self.config.mode {
            BalanceMode::Online => online(),
            BalanceMode::OfflineWithFallback | BalanceMode::PureOffline => {
                let filter = self.filter.as_ref().ok_or(AtmError::NoFilter)?;
                if !filter.contains_pk(pk_u) {
                    Ok(())
                } else if self.config.mode == BalanceMode::OfflineWithFallback {
                    online()
                } else {
                    Err(AtmError::InsufficientBalance)
                }
            }
        }
    }

    fn open_session(
        &mut self,
        request: &WithdrawRequest,
        coin: AnyCoin,
        voucher: AnyVoucher,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Promise, AtmError> {
        let nonce = gen_nonce(rng)?;
        let promise = make_promise(&self.id, &coin, voucher, &request.pk_u, nonce, rng);
        self.sessions
            .insert(nonce, Session { request: request.clone(), coin, phase: Phase::Promised, opened: self.now });
        Ok(promise)
    }

    /// Plain-variant issuance: reserves one stocked record.
    pub fn begin_issue_plain(
        &mut self,
        request: &WithdrawRequest,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Promise, AtmError> {
        check_request(self.bank.params(), request)?;
        self.check_balance(&request.pk_u)?;
        let rec = self.stock.pop_front().ok_or(AtmError::OutOfStock)?;
        let (coin, voucher) = match issue_voucher(self.bank.params(), &self.id, &rec, request, rng) {
            Ok(pair) => pair,
            Err(e) => {
                self.stock.push_front(rec);
                return Err(e);
            }
        };
        self.open_session(request, coin, voucher, rng)
    }

    /// Compact-variant issuance at the next counter value.
    pub fn begin_issue_compact(
        &mut self,
        request: &WithdrawRequest,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Promise, AtmError> {
        check_request(self.bank.params(), request)?;
        self.check_balance(&request.pk_u)?;
        let keys = self.compact.as_mut().ok_or(AtmError::NoCompactKeys)?;
        if keys.ctr >= keys.n {
            return Err(AtmError::KeyExhausted(keys.n));
        }
        let keys = self.compact.as_ref().expect("checked above");
        let (coin, voucher) = keys.issue_at(self.bank.params(), &self.id, keys.ctr + 1, request, rng)?;
        self.compact.as_mut().expect("checked above").ctr += 1;
        self.open_session(request, coin, voucher, rng)
    }

    /// Advances simulated time: expires stale sessions and flushes deferred
    /// receipts when the interval has elapsed.
    pub fn tick(&mut self, now: u64) {
        self.now = now;
        let ttl = self.config.session_ttl;
        for s in self.sessions.values_mut() {
            if s.phase == Phase::Promised && now.saturating_sub(s.opened) >= ttl {
                s.phase = Phase::Aborted;
                self.retired += 1;
            }
        }
        if !self.deferred.is_empty() && now.saturating_sub(self.last_flush) >= self.config.flush_interval {
            self.flush();
        }
    }

    /// Forwards all deferred receipts to the bank; returns the per-receipt
    /// results of `update_bal`.
    pub fn flush(&mut self) -> Vec<u8> {
        self.last_flush = self.now;
        let pk_a = self.id.pk;
        let out: Vec<u8> = self
            .deferred
            .drain(..)
            .map(|(r, n)| self.bank.update_bal(&r.pk_u, &r, &pk_a, &n))
            .collect();
        self.failed_debits += out.iter().filter(|&&r| r != 0).count() as u64;
        out
    }
}

impl CoinIssuer for Atm {
    fn certificate(&self) -> &Certificate {
        &self.id.cert
    }

    fn begin_issue<R: RngCore + CryptoRng>(&mut self, request: &WithdrawRequest, rng: &mut R) -> Result<Promise, AtmError> {
        match self.config.variant {
            Variant::Plain => self.begin_issue_plain(request, rng),
            Variant::Compact => self.begin_issue_compact(request, rng),
        }
    }

    fn complete_issue<R: RngCore + CryptoRng>(
        &mut self,
        nonce: &Nonce,
        receipt: &Receipt,
        _rng: &mut R,
    ) -> Result<Option<AnyCoin>, AtmError> {
        let pk_a = self.id.pk;
        let session = self.sessions.get_mut(nonce).ok_or(AtmError::UnknownSession)?;
        match session.phase {
            Phase::Promised => {}
            Phase::Receipted | Phase::Done => return Err(AtmError::AlreadyCompleted),
            Phase::Aborted => return Err(AtmError::UnknownSession),
        }
        check_receipt(&session.request, &pk_a, nonce, receipt)?;
        session.phase = Phase::Receipted;
        let coin = session.coin.clone();
        session.phase = Phase::Done;
        match self.config.mode {
            BalanceMode::Online => {
                if self.bank.update_bal(&receipt.pk_u, receipt, &pk_a, nonce) != 0 {
                    self.failed_debits += 1;
                }
            }
            _ => self.deferred.push((receipt.clone(), *nonce)),
        }
        Ok(Some(coin))
    }
}

#[cfg(test)]
mod tests;
