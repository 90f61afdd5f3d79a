//! Users and merchants: registration, withdrawal with the fair-exchange
//! checks, spending, and merchant-side transaction verification.

use std::collections::BTreeSet;

use ff::Field;
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::atm::{AtmError, CoinIssuer};
use crate::bank::{Bank, BankError, PublicParams, Verdict};
use crate::blindsig::{BlindScheme, RsaFdh};
use crate::credsig::{CredError, Credential};
use crate::group::{CyclicGroup, GroupElement, Scalar};
use crate::nizk::{
    prove_key_registration, prove_spend, verify_compact_voucher, verify_range, verify_spend, verify_voucher,
    CompactVoucherStatement, NizkError, SpendStatement, SpendWitness, VoucherStatement,
};
use crate::primitives::{dy_prf, gen_nonce, Nonce, Opening, PrfKey, PrimitiveError, SigningKey, VerifyingKey};
use crate::wire::{
    cid_of, coin_digest, compact_cid, promise_digest, promise_message, rc_of, receipt_message, rt_of, AbortRecord,
    AnyCoin, AnyVoucher, Certificate, Promise, PurseEntry, Receipt, Role, Transaction, WithdrawRequest,
};

/// Why a transaction was rejected, one variant per check in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("r_c does not match the hash of P")]
    RcMismatch,
    #[error("r_t does not match the merchant key and nonce")]
    RtMismatch,
    #[error("user credential proof rejected")]
    UserCredential,
    #[error("ATM credential proof rejected")]
    AtmCredential,
    #[error("credential proof on k1 rejected")]
    KeyCredential1,
    #[error("credential proof on k2 rejected")]
    KeyCredential2,
    #[error("bank signature on the coin rejected")]
    BankSignature,
    #[error("counter range proof rejected")]
    RangeProof,
    #[error("coin is not linked to the voucher")]
    CoinVoucherLink,
    #[error("transaction proof rejected")]
    SpendProof,
    #[error("coin and voucher are of different variants")]
    VariantMismatch,
    #[error("merchant nonce was not issued or was already used")]
    StaleNonce,
}

fn ensure(ok: bool, reason: RejectReason) -> Result<(), RejectReason> {
    if ok {
        Ok(())
    } else {
        Err(reason)
    }
}

/// Every check on a coin and voucher that does not involve a transaction.
/// With `tx` present the randomizer and spend-proof checks run too, in
/// their place in the order.
fn check(
    params: &PublicParams,
    coin: &AnyCoin,
    voucher: &AnyVoucher,
    tx: Option<(&Transaction, &GroupElement)>,
) -> Result<(), RejectReason> {
    let gens = &params.gens;
    ensure(voucher.r_c() == rc_of(&voucher.p()), RejectReason::RcMismatch)?;
    if let Some((tx, pk_m)) = tx {
        ensure(tx.r_t == rt_of(pk_m, &tx.r_v), RejectReason::RtMismatch)?;
    }
    match (coin, voucher) {
        (AnyCoin::Plain(c), AnyVoucher::Plain(v)) => {
            ensure(params.user_cred.zverify(gens, &v.p, &v.pi_sk_u), RejectReason::UserCredential)?;
            ensure(params.atm_cred.zverify(gens, &c.q, &v.pi_sk_a), RejectReason::AtmCredential)?;
            let digest = coin_digest(&c.c1, &c.c2, &c.q);
            ensure(RsaFdh::verify(&params.blind_pk, &digest, &c.sigma_c), RejectReason::BankSignature)?;
            let st = VoucherStatement { c1: c.c1, c2: c.c2, q: c.q, x: v.x, y: v.y, cid: cid_of(&v.r_c), r_c: v.r_c };
            ensure(verify_voucher(gens, &st, &v.pi_cid), RejectReason::CoinVoucherLink)?;
        }
        (AnyCoin::Compact(c), AnyVoucher::Compact(v)) => {
            ensure(params.user_cred.zverify(gens, &v.p, &v.pi_sk_u), RejectReason::UserCredential)?;
            ensure(params.atm_cred.zverify(gens, &c.q, &c.pi_sk_a), RejectReason::AtmCredential)?;
            ensure(params.key_cred.zverify(gens, &c.c1, &c.pi_k1), RejectReason::KeyCredential1)?;
            ensure(params.key_cred.zverify(gens, &c.c2, &c.pi_k2), RejectReason::KeyCredential2)?;
            if let Some(sigma) = &c.sigma_c {
                let digest = coin_digest(&c.c1, &c.c2, &c.q);
                ensure(RsaFdh::verify(&params.blind_pk, &digest, sigma), RejectReason::BankSignature)?;
            }
            ensure(verify_range(gens, &v.j, params.compact_n, &v.pi_ctr), RejectReason::RangeProof)?;
            let st = CompactVoucherStatement { c1: c.c1, c2: c.c2, q: c.q, j: v.j, x: v.x, y: v.y, r_c: v.r_c };
            ensure(verify_compact_voucher(gens, &st, &v.pi_cid), RejectReason::CoinVoucherLink)?;
        }
        _ => return Err(RejectReason::VariantMismatch),
    }
    if let Some((tx, _)) = tx {
        let st = SpendStatement { p: voucher.p(), z: tx.z, cid: voucher.cid(), r_t: tx.r_t };
        ensure(verify_spend(gens, &st, &tx.pi_t), RejectReason::SpendProof)?;
    }
    Ok(())
}

/// Merchant-side verification of a spend of `(coin, voucher)` to `pk_m`.
pub fn verify_tx(
    params: &PublicParams,
    coin: &AnyCoin,
    voucher: &AnyVoucher,
    tx: &Transaction,
    pk_m: &GroupElement,
) -> Result<(), RejectReason> {
    check(params, coin, voucher, Some((tx, pk_m)))
}

/// The checks a user runs on a freshly withdrawn coin and voucher.
pub fn verify_issued(params: &PublicParams, coin: &AnyCoin, voucher: &AnyVoucher) -> Result<(), RejectReason> {
    check(params, coin, voucher, None)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalletError {
    #[error("promise rejected before any receipt was issued")]
    PromiseInvalid,
    #[error("no purse entry at index {0}")]
    NotInPurse(usize),
    #[error("purse entry already spent")]
    AlreadySpent,
    #[error("voucher r_c does not match P")]
    VoucherInconsistent,
    #[error(transparent)]
    Issuer(#[from] AtmError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Credential(#[from] CredError),
    #[error(transparent)]
    Nizk(#[from] NizkError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

/// A message of the withdrawal exchange, as seen by the user.
#[derive(Clone, Copy, Debug)]
pub enum WithdrawMessage<'a> {
    Request(&'a WithdrawRequest),
    Promise(&'a Promise),
    Receipt(&'a Receipt),
    /// What the ATM released; `None` when nothing arrived.
    Coin(Option<&'a AnyCoin>),
    Abort(&'a AbortRecord),
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum WithdrawOutcome {
    /// Index of the new purse entry.
    Completed(usize),
    /// The ATM withheld the coin or sent one that fails the checks. The
    /// record has been filed with the bank; `retained` holds whatever coin
    /// arrived, kept for audit.
    Aborted { record: AbortRecord, retained: Option<AnyCoin> },
}

pub struct UserState {
    sk: Scalar,
    pk: GroupElement,
    s: PrfKey<Scalar>,
    signing: SigningKey<GroupElement>,
    cred: Credential,
    cred_blinding: Scalar,
    cert: Certificate,
    purse: Vec<PurseEntry>,
}

impl UserState {
    /// Samples `sk_U` and `s` and obtains the bank's credential on them.
    pub fn register(bank: &Bank, rng: &mut (impl RngCore + CryptoRng)) -> Result<UserState, WalletError> {
        let gens = &bank.params().gens;
        let sk = Scalar::random(&mut *rng);
        let s = PrfKey::<Scalar>::random(rng);
        let pk = GroupElement::generator().exp(&sk);
        let opening = Opening::<GroupElement>::random(vec![sk, s.0], rng);
        let p = opening.commit(gens)?.0;
        let proof = prove_key_registration(gens, &p, &pk, &opening, rng)?;
        let signing = SigningKey::random(rng);
        let (cred, cert) = bank.register_user(&p, &pk, &proof, &signing.verifying_key().0)?;
        Ok(UserState { sk, pk, s, signing, cred_blinding: opening.blinding + cred.s, cred, cert, purse: Vec::new() })
    }

    pub fn pk(&self) -> GroupElement {
        self.pk
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    pub fn purse(&self) -> &[PurseEntry] {
        &self.purse
    }

    pub fn unspent(&self) -> impl Iterator<Item = usize> + '_ {
        self.purse.iter().enumerate().filter(|(_, e)| !e.spent).map(|(i, _)| i)
    }

    /// A fresh commitment `P` to `(sk_U, s)` with a credential presentation.
    pub fn withdraw_request(
        &self,
        params: &PublicParams,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(WithdrawRequest, Scalar), WalletError> {
        let beta = Scalar::random(&mut *rng);
        let p = Opening::<GroupElement>::new(vec![self.sk, self.s.0], beta).commit(&params.gens)?.0;
        let pi_sk_u = params
            .user_cred
            .zprove(&params.gens, &p, &[self.sk, self.s.0], &beta, &self.cred_blinding, &self.cred, rng)?;
        Ok((WithdrawRequest { pk_u: self.pk, p, pi_sk_u, cert: self.cert.clone() }, beta))
    }

    /// Signs the withdrawal receipt after checking the ATM's promise.
    pub fn issue_receipt(
        &self,
        params: &PublicParams,
        atm_cert: &Certificate,
        promise: &Promise,
        p: &GroupElement,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Receipt, WalletError> {
        let msg = promise_message(&promise.i, &promise.voucher, &promise.nonce);
        let ok = params.verify_certificate(atm_cert, Role::Atm)
            && VerifyingKey(atm_cert.signing_pk).verify(&msg, &promise.sigma)
            && promise.voucher.p() == *p
            && promise.voucher.r_c() == rc_of(p);
        if !ok {
            return Err(WalletError::PromiseInvalid);
        }
        let sig = self.signing.sign(&receipt_message(&self.pk, &atm_cert.pk, &promise.nonce), rng);
        Ok(Receipt { pk_u: self.pk, pk_a: atm_cert.pk, nonce: promise.nonce, sig })
    }

    /// Runs one withdrawal against `issuer`. Aborts are filed with the bank
    /// before returning.
    pub fn withdraw<I: CoinIssuer + ?Sized>(
        &mut self,
        issuer: &mut I,
        bank: &Bank,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<WithdrawOutcome, WalletError> {
        self.withdraw_observed(issuer, bank, rng, &mut |_| {})
    }

    /// [`UserState::withdraw`], reporting every message as it is sent or
    /// received.
    pub fn withdraw_observed<I: CoinIssuer + ?Sized>(
        &mut self,
        issuer: &mut I,
        bank: &Bank,
        rng: &mut (impl RngCore + CryptoRng),
        observe: &mut dyn FnMut(WithdrawMessage<'_>),
    ) -> Result<WithdrawOutcome, WalletError> {
        let params = bank.params();
        let (request, beta) = self.withdraw_request(params, rng)?;
        observe(WithdrawMessage::Request(&request));
        let promise = issuer.begin_issue(&request, rng)?;
        observe(WithdrawMessage::Promise(&promise));
        let atm_cert = issuer.certificate().clone();
        let receipt = self.issue_receipt(params, &atm_cert, &promise, &request.p, rng)?;
        observe(WithdrawMessage::Receipt(&receipt));
        let coin = issuer.complete_issue(&promise.nonce, &receipt, rng)?;
        observe(WithdrawMessage::Coin(coin.as_ref()));
        let accepted = coin.as_ref().is_some_and(|c| {
            promise_digest(c, &self.pk, &atm_cert.pk) == promise.i && verify_issued(params, c, &promise.voucher).is_ok()
        });
        if !accepted {
            let record = AbortRecord {
                sigma: promise.sigma,
                i: promise.i,
                voucher: promise.voucher,
                nonce: promise.nonce,
                pk_u: self.pk,
                pk_a: atm_cert.pk,
            };
            observe(WithdrawMessage::Abort(&record));
            bank.record_abort(&record)?;
            return Ok(WithdrawOutcome::Aborted { record, retained: coin });
        }
        let coin = coin.expect("accepted implies a coin");
        self.purse.push(PurseEntry { coin, voucher: promise.voucher, blinding: beta, spent: false });
        Ok(WithdrawOutcome::Completed(self.purse.len() - 1))
    }

    /// Adds a pair obtained outside [`UserState::withdraw`], e.g. a coin
    /// delivered late after an abort.
    pub fn add_to_purse(&mut self, entry: PurseEntry) -> usize {
        self.purse.push(entry);
        self.purse.len() - 1
    }

    /// Builds a transaction for `entry` without consulting the spent flag.
    pub fn transaction_for(
        &self,
        params: &PublicParams,
        entry: &PurseEntry,
        pk_m: &GroupElement,
        r_v: &Nonce,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Transaction, WalletError> {
        let p = entry.voucher.p();
        if entry.voucher.r_c() != rc_of(&p) {
            return Err(WalletError::VoucherInconsistent);
        }
        let cid = match &entry.voucher {
            AnyVoucher::Plain(v) => cid_of(&v.r_c),
            AnyVoucher::Compact(v) => compact_cid(&v.p, &v.j),
        };
        let r_t = rt_of(pk_m, r_v);
        let z = GroupElement::generator().exp(&self.sk).mul(&dy_prf::<GroupElement>(&self.s, &cid)?.exp(&r_t));
        let st = SpendStatement { p, z, cid, r_t };
        let wit = SpendWitness { sk: self.sk, s: self.s.0, beta: entry.blinding };
        let pi_t = prove_spend(&params.gens, &st, &wit, rng)?;
        Ok(Transaction { z, pi_t, r_v: *r_v, r_t })
    }

    /// Spends purse entry `index` at merchant `pk_m` with the merchant's
    /// nonce `r_v`, marking it spent.
    pub fn spend(
        &mut self,
        params: &PublicParams,
        index: usize,
        pk_m: &GroupElement,
        r_v: &Nonce,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<(AnyCoin, AnyVoucher, Transaction), WalletError> {
        let entry = self.purse.get(index).ok_or(WalletError::NotInPurse(index))?;
        if entry.spent {
            return Err(WalletError::AlreadySpent);
        }
        let tx = self.transaction_for(params, entry, pk_m, r_v, rng)?;
        let out = (entry.coin.clone(), entry.voucher.clone(), tx);
        self.purse[index].spent = true;
        Ok(out)
    }
}

/// A user acting as merchant: hands out nonces, verifies transactions and
/// forwards accepted ones to the bank.
pub struct MerchantView {
    user: UserState,
    issued: BTreeSet<Nonce>,
    used: BTreeSet<Nonce>,
    pending: Vec<(AnyCoin, AnyVoucher, Transaction)>,
}

impl MerchantView {
    pub fn new(user: UserState) -> Self {
        MerchantView { user, issued: BTreeSet::new(), used: BTreeSet::new(), pending: Vec::new() }
    }

    pub fn pk(&self) -> GroupElement {
        self.user.pk()
    }

    pub fn user(&self) -> &UserState {
        &self.user
    }

    pub fn user_mut(&mut self) -> &mut UserState {
        &mut self.user
    }

    pub fn fresh_nonce(&mut self, rng: &mut (impl RngCore + CryptoRng)) -> Result<Nonce, WalletError> {
        let r_v = gen_nonce(rng)?;
        self.issued.insert(r_v);
        Ok(r_v)
    }

    /// Verifies a transaction and queues it for deposit.
    pub fn accept(
        &mut self,
        params: &PublicParams,
        coin: AnyCoin,
        voucher: AnyVoucher,
        tx: Transaction,
    ) -> Result<(), RejectReason> {
        if !self.issued.contains(&tx.r_v) || self.used.contains(&tx.r_v) {
            return Err(RejectReason::StaleNonce);
        }
        verify_tx(params, &coin, &voucher, &tx, &self.pk())?;
        self.used.insert(tx.r_v);
        self.pending.push((coin, voucher, tx));
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Deposits every queued transaction, in arrival order.
    pub fn deposit_all(&mut self, bank: &Bank) -> Vec<Result<Verdict, BankError>> {
        let pk = self.pk();
        self.pending
            .drain(..)
            .map(|(c, v, t)| bank.update_tx(&c, &v, &t, &pk))
            .collect()
    }
}
