//! The bank: key setup, registration, coin minting, balance updates from
//! receipts, and deposits with double-spend and double-issue attribution.
//!
//! Keys are immutable after [`Bank::init`]; all mutable state sits behind
//! one mutex so that each check-then-update is atomic. Proof verification
//! runs before the lock is taken.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard};

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blindsig::{BlindError, BlindKeypair, BlindScheme, BlindedMessage, BlindedSignature, RsaFdh, RsaPublicKey, RsaSecretKey};
use crate::credsig::{CredError, CredKeypair, CredPublicKey, Credential};
use crate::group::{derive_generators, scalar_invert, CyclicGroup, GeneratorSet, GroupElement, Scalar};
use crate::nizk::{verify_opening_proof, Proof};
use crate::offline::{build_filter, FilterError, LowBalanceFilter};
use crate::primitives::{SigningKey, VerifyingKey};
use crate::wallet::{verify_tx, RejectReason};
use crate::wire::{
    certificate_message, promise_digest, promise_message, receipt_message, tag, unframe, AbortRecord,
    AccountRecord, AnyCoin, AnyVoucher, AppliedReceipt, Certificate, RateRecord, Receipt, Role, SpentEntry,
    Transaction, VoidedRecord, WireError, WireObject,
};

mod recovery;

pub use recovery::{recover_double_issuer, recover_double_spender};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// RSA-2048 blind signatures.
    Production,
    /// RSA-1024 blind signatures, for fast tests. Not secure.
    Toy,
}

impl Profile {
    pub fn rsa_bits(self) -> usize {
        match self {
            Profile::Production => 2048,
            Profile::Toy => 1024,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Production => "production",
            Profile::Toy => "toy",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "production" => Ok(Profile::Production),
            "toy" => Ok(Profile::Toy),
            other => Err(format!("unknown profile {other:?} (expected production or toy)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BankConfig {
    pub profile: Profile,
    pub opening_balance: u64,
    pub mint_cap: u64,
    pub withdrawal_amount: u64,
    /// Issuances allowed per compact key pair.
    pub compact_n: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            profile: Profile::Production,
            opening_balance: 100,
            mint_cap: 10_000,
            withdrawal_amount: 1,
            compact_n: 16,
        }
    }
}

/// Everything a user, ATM or merchant needs to verify bank-issued material.
#[derive(Clone, Debug)]
pub struct PublicParams {
    pub gens: GeneratorSet<GroupElement>,
    pub blind_pk: RsaPublicKey,
    pub user_cred: CredPublicKey,
    pub atm_cred: CredPublicKey,
    /// Signs the reusable PRF keys of the compact variant.
    pub key_cred: CredPublicKey,
    pub cert_pk: VerifyingKey<GroupElement>,
    pub compact_n: u64,
}

pub fn protocol_generators() -> GeneratorSet<GroupElement> {
    derive_generators(b"atmcash/v1/pedersen", 2)
}

impl PublicParams {
    pub fn verify_certificate(&self, cert: &Certificate, role: Role) -> bool {
        cert.role == role
            && self
                .cert_pk
                .verify(&certificate_message(cert.role, &cert.pk, &cert.signing_pk), &cert.sig)
    }
}

/// Outcome of a deposit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    /// Second deposit of one issuance; carries the spender's `g^{sk_U}`.
    DoubleSpend(GroupElement),
    /// One coin issued twice; carries the ATM's `g^{sk_A}`.
    DoubleIssue(GroupElement),
    /// The coin belongs to a withdrawal the user reported as aborted.
    AbortedCoin(GroupElement),
}

impl Verdict {
    pub fn culprit(&self) -> Option<GroupElement> {
        match self {
            Verdict::Accepted => None,
            Verdict::DoubleSpend(pk) | Verdict::DoubleIssue(pk) | Verdict::AbortedCoin(pk) => Some(*pk),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BankError {
    #[error("randomness source failed")]
    EntropyUnavailable,
    #[error("identity already registered")]
    DuplicateIdentity,
    #[error("registration proof rejected")]
    InvalidRegistration,
    #[error("no ATM registered under this key")]
    UnknownAtm,
    #[error("no user account under this key")]
    UnknownAccount,
    #[error("mint cap reached: requested {requested}, remaining {remaining}")]
    RateLimited { requested: u64, remaining: u64 },
    #[error("abort record signature does not verify")]
    InvalidAbortSignature,
    #[error("transaction rejected: {0}")]
    VerificationFailed(RejectReason),
    #[error("detection aborted: equal randomizers")]
    DetectionAbort,
    #[error("recovered key is not a registered party of the expected kind")]
    InconsistentRecovery,
    #[error(transparent)]
    Blind(#[from] BlindError),
    #[error(transparent)]
    Credential(#[from] CredError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("snapshot line {line}: {source}")]
    Snapshot { line: usize, source: WireError },
}

type Key = Vec<u8>;

fn key_of(pk: &GroupElement) -> Key {
    pk.to_bytes()
}

#[derive(Default)]
struct Ledger {
    accounts: BTreeMap<Key, AccountRecord>,
    spent: BTreeMap<Key, SpentEntry>,
    inv_list: Vec<AbortRecord>,
    abort_nonces: BTreeSet<[u8; 32]>,
    applied: BTreeSet<Key>,
    rate: BTreeMap<Key, u64>,
    voided: Vec<VoidedRecord>,
    log: Vec<String>,
}

impl Ledger {
    fn append<T: WireObject>(&mut self, record: &T) {
        self.log.push(hex::encode(record.encode()));
    }

    fn put_account(&mut self, acct: AccountRecord) {
        self.append(&acct);
        self.accounts.insert(key_of(&acct.pk), acct);
    }

    fn put_rate(&mut self, pk_a: &GroupElement, minted: u64) {
        self.append(&RateRecord { pk_a: *pk_a, minted });
        self.rate.insert(key_of(pk_a), minted);
    }

    fn put_spent(&mut self, entry: SpentEntry) {
        self.append(&entry);
        self.spent.insert(entry.key.clone(), entry);
    }

    fn put_abort(&mut self, rec: AbortRecord) {
        self.append(&rec);
        self.abort_nonces.insert(rec.nonce);
        self.inv_list.push(rec);
    }

    fn put_applied(&mut self, a: AppliedReceipt) {
        self.append(&a);
        self.applied.insert(a.encode());
    }

    fn put_voided(&mut self, v: VoidedRecord) {
        self.append(&v);
        self.voided.push(v);
    }

    fn credit(&mut self, pk: &GroupElement, amount: u64) {
        if let Some(mut acct) = self.accounts.get(&key_of(pk)).cloned() {
            acct.balance += amount;
            self.put_account(acct);
        }
    }

    fn role_of(&self, pk: &GroupElement) -> Option<Role> {
        self.accounts.get(&key_of(pk)).map(|a| a.role)
    }

    fn replay(&mut self, line: &str) -> Result<(), WireError> {
        let bytes = hex::decode(line.trim()).map_err(|_| WireError::Malformed("hex"))?;
        match unframe(&bytes, None)?.0 {
            tag::ACCOUNT => self.put_account(AccountRecord::decode(&bytes)?),
            tag::RATE => {
                let r = RateRecord::decode(&bytes)?;
                self.put_rate(&r.pk_a, r.minted)
            }
            tag::SPENT_ENTRY => self.put_spent(SpentEntry::decode(&bytes)?),
            tag::ABORT_RECORD => self.put_abort(AbortRecord::decode(&bytes)?),
            tag::APPLIED_RECEIPT => self.put_applied(AppliedReceipt::decode(&bytes)?),
            tag::VOIDED => self.put_voided(VoidedRecord::decode(&bytes)?),
            found => return Err(WireError::UnexpectedType { expected: tag::ACCOUNT, found }),
        }
        Ok(())
    }
}

pub struct Bank {
    params: PublicParams,
    config: BankConfig,
    blind_sk: RsaSecretKey,
    user_cred: CredKeypair,
    atm_cred: CredKeypair,
    key_cred: CredKeypair,
    cert_key: SigningKey<GroupElement>,
    rng: Mutex<ChaCha20Rng>,
    ledger: Mutex<Ledger>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Bank {
    pub fn init(config: BankConfig, rng: &mut (impl RngCore + CryptoRng)) -> Result<Bank, BankError> {
        let mut seed = [0u8; 32];
        rng.try_fill_bytes(&mut seed).map_err(|_| BankError::EntropyUnavailable)?;
        let mut rng = ChaCha20Rng::from_seed(seed);
        let blind = BlindKeypair::generate(config.profile.rsa_bits(), &mut rng)?;
        let user_cred = CredKeypair::generate(2, &mut rng);
        let atm_cred = CredKeypair::generate(1, &mut rng);
        let key_cred = CredKeypair::generate(1, &mut rng);
        let cert_key = SigningKey::random(&mut rng);
        let params = PublicParams {
            gens: protocol_generators(),
            blind_pk: blind.pk,
            user_cred: user_cred.pk,
            atm_cred: atm_cred.pk,
            key_cred: key_cred.pk,
            cert_pk: cert_key.verifying_key(),
            compact_n: config.compact_n,
        };
        Ok(Bank {
            params,
            config,
            blind_sk: blind.sk,
            user_cred,
            atm_cred,
            key_cred,
            cert_key,
            rng: Mutex::new(rng),
            ledger: Mutex::new(Ledger::default()),
        })
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    fn register(
        &self,
        role: Role,
        com: &GroupElement,
        pk: &GroupElement,
        proof: &Proof<GroupElement>,
        signing_pk: &GroupElement,
    ) -> Result<(Credential, Certificate), BankError> {
        let keys = match role {
            Role::User => &self.user_cred,
            Role::Atm => &self.atm_cred,
        };
        let mut ledger = lock(&self.ledger);
        if ledger.accounts.contains_key(&key_of(pk)) {
            return Err(BankError::DuplicateIdentity);
        }
        let mut rng = lock(&self.rng);
        let cred = keys
            .issue(com, pk, proof, &self.params.gens, &mut *rng)
            .map_err(|_| BankError::InvalidRegistration)?;
        let sig = self.cert_key.sign(&certificate_message(role, pk, signing_pk), &mut *rng);
        let balance = match role {
            Role::User => self.config.opening_balance,
            Role::Atm => 0,
        };
        ledger.put_account(AccountRecord { pk: *pk, role, balance, signing_pk: *signing_pk });
        Ok((cred, Certificate { role, pk: *pk, signing_pk: *signing_pk, sig }))
    }

    /// Registers a user whose commitment opens to `(sk_U, s)`.
    pub fn register_user(
        &self,
        p: &GroupElement,
        pk_u: &GroupElement,
        proof: &Proof<GroupElement>,
        signing_pk: &GroupElement,
    ) -> Result<(Credential, Certificate), BankError> {
        self.register(Role::User, p, pk_u, proof, signing_pk)
    }

    /// Registers an ATM whose commitment opens to `sk_A`.
    pub fn register_atm(
        &self,
        q: &GroupElement,
        pk_a: &GroupElement,
        proof: &Proof<GroupElement>,
        signing_pk: &GroupElement,
    ) -> Result<(Credential, Certificate), BankError> {
        self.register(Role::Atm, q, pk_a, proof, signing_pk)
    }

    fn reserve_mint(&self, pk_a: &GroupElement, count: u64) -> Result<(), BankError> {
        let mut ledger = lock(&self.ledger);
        if ledger.role_of(pk_a) != Some(Role::Atm) {
            return Err(BankError::UnknownAtm);
        }
        let minted = ledger.rate.get(&key_of(pk_a)).copied().unwrap_or(0);
        if minted + count > self.config.mint_cap {
            return Err(BankError::RateLimited {
                requested: count,
                remaining: self.config.mint_cap.saturating_sub(minted),
            });
        }
        ledger.put_rate(pk_a, minted + count);
        Ok(())
    }

    /// Blind-signs one coin digest per entry of `blinded`.
    pub fn issue_coin(
        &self,
        pk_a: &GroupElement,
        blinded: &[BlindedMessage],
    ) -> Result<Vec<BlindedSignature>, BankError> {
        if blinded
            .iter()
            .any(|k| k.0.len() != self.params.blind_pk.modulus_len())
        {
            return Err(BlindError::InvalidBlindedMessage.into());
        }
        self.reserve_mint(pk_a, blinded.len() as u64)?;
        blinded
            .iter()
            .map(|k| RsaFdh::sign_blinded(&self.blind_sk, k).map_err(BankError::from))
            .collect()
    }

    /// Certifies a compact-variant PRF key pair, charging `compact_n` coins
    /// against the ATM's cap.
    pub fn issue_compact_keys(
        &self,
        pk_a: &GroupElement,
        c_k1: &GroupElement,
        pi_k1: &Proof<GroupElement>,
        c_k2: &GroupElement,
        pi_k2: &Proof<GroupElement>,
    ) -> Result<(Credential, Credential), BankError> {
        let gens = &self.params.gens;
        if !verify_opening_proof(gens, c_k1, 1, pi_k1) || !verify_opening_proof(gens, c_k2, 1, pi_k2) {
            return Err(BankError::InvalidRegistration);
        }
        self.reserve_mint(pk_a, self.config.compact_n)?;
        let mut rng = lock(&self.rng);
        Ok((
            self.key_cred.zsign(c_k1, gens, &mut *rng),
            self.key_cred.zsign(c_k2, gens, &mut *rng),
        ))
    }

    /// Debits one withdrawal. Returns 0 on debit and 1 when the receipt is
    /// invalid, already applied, covered by an abort record, or the balance
    /// is short; state is unchanged in the second case.
    pub fn update_bal(&self, pk_u: &GroupElement, receipt: &Receipt, pk_a: &GroupElement, nonce: &[u8; 32]) -> u8 {
        if receipt.pk_u != *pk_u || receipt.pk_a != *pk_a || receipt.nonce != *nonce {
            return 1;
        }
        let mut ledger = lock(&self.ledger);
        let Some(acct) = ledger.accounts.get(&key_of(pk_u)).cloned() else { return 1 };
        if acct.role != Role::User || ledger.role_of(pk_a) != Some(Role::Atm) {
            return 1;
        }
        let msg = receipt_message(pk_u, pk_a, nonce);
        if !VerifyingKey(acct.signing_pk).verify(&msg, &receipt.sig) {
            return 1;
        }
        let applied = AppliedReceipt { pk_u: *pk_u, pk_a: *pk_a, nonce: *nonce };
        if ledger.applied.contains(&applied.encode()) {
            return 1;
        }
        if ledger
            .inv_list
            .iter()
            .any(|r| r.pk_u == *pk_u && r.pk_a == *pk_a && r.nonce == *nonce)
        {
            return 1;
        }
        if acct.balance < self.config.withdrawal_amount {
            return 1;
        }
        ledger.put_applied(applied);
        ledger.put_account(AccountRecord { balance: acct.balance - self.config.withdrawal_amount, ..acct });
        0
    }

    /// Stores an AbortWithdrawal payload. Idempotent per nonce. If the
    /// matching receipt was already applied, the debit is refunded.
    pub fn record_abort(&self, rec: &AbortRecord) -> Result<(), BankError> {
        let mut ledger = lock(&self.ledger);
        let atm = ledger
            .accounts
            .get(&key_of(&rec.pk_a))
            .filter(|a| a.role == Role::Atm)
            .cloned()
            .ok_or(BankError::InvalidAbortSignature)?;
        let msg = promise_message(&rec.i, &rec.voucher, &rec.nonce);
        if !VerifyingKey(atm.signing_pk).verify(&msg, &rec.sigma) {
            return Err(BankError::InvalidAbortSignature);
        }
        if ledger.role_of(&rec.pk_u) != Some(Role::User) {
            return Err(BankError::UnknownAccount);
        }
        if ledger.abort_nonces.contains(&rec.nonce) {
            return Ok(());
        }
        let applied = AppliedReceipt { pk_u: rec.pk_u, pk_a: rec.pk_a, nonce: rec.nonce }.encode();
        if ledger.applied.contains(&applied) {
            ledger.credit(&rec.pk_u, self.config.withdrawal_amount);
        }
        ledger.put_abort(rec.clone());
        Ok(())
    }

    /// Verifies and deposits a spent coin on behalf of merchant `pk_m`.
    pub fn update_tx(
        &self,
        coin: &AnyCoin,
        voucher: &AnyVoucher,
        tx: &Transaction,
        pk_m: &GroupElement,
    ) -> Result<Verdict, BankError> {
        verify_tx(&self.params, coin, voucher, tx, pk_m).map_err(BankError::VerificationFailed)?;
        let mut ledger = lock(&self.ledger);
        if ledger.role_of(pk_m) != Some(Role::User) {
            return Err(BankError::UnknownAccount);
        }

        let matched = ledger
            .inv_list
            .iter()
            .find(|r| promise_digest(coin, &r.pk_u, &r.pk_a) == r.i)
            .cloned();
        if let Some(rec) = matched {
            let verdict = if rec.voucher == *voucher {
                Verdict::AbortedCoin(rec.pk_u)
            } else {
                let pk_a = recover_double_issuer(&voucher.y(), &voucher.r_c(), &rec.voucher.y(), &rec.voucher.r_c())?;
                if pk_a != rec.pk_a || ledger.role_of(&pk_a) != Some(Role::Atm) {
                    return Err(BankError::InconsistentRecovery);
                }
                Verdict::DoubleIssue(pk_a)
            };
            ledger.put_voided(VoidedRecord { coin: coin.digest(), culprit: verdict.culprit().unwrap() });
            return Ok(verdict);
        }

        let key = spent_key(coin, voucher);
        let Some(prev) = ledger.spent.get(&key).cloned() else {
            ledger.put_spent(SpentEntry {
                key,
                cid: voucher.cid(),
                x: voucher.x(),
                y: voucher.y(),
                z: tx.z,
                r_c: voucher.r_c(),
                r_t: tx.r_t,
                merchant: *pk_m,
            });
            ledger.credit(pk_m, 1);
            return Ok(Verdict::Accepted);
        };
        if prev.y == voucher.y() {
            let pk_u = recover_double_spender(&tx.z, &tx.r_t, &prev.z, &prev.r_t)?;
            if ledger.role_of(&pk_u) != Some(Role::User) {
                return Err(BankError::InconsistentRecovery);
            }
            Ok(Verdict::DoubleSpend(pk_u))
        } else {
            let pk_a = recover_double_issuer(&voucher.y(), &voucher.r_c(), &prev.y, &prev.r_c)?;
            if ledger.role_of(&pk_a) != Some(Role::Atm) {
                return Err(BankError::InconsistentRecovery);
            }
            Ok(Verdict::DoubleIssue(pk_a))
        }
    }

    pub fn balance(&self, pk: &GroupElement) -> Option<u64> {
        lock(&self.ledger).accounts.get(&key_of(pk)).map(|a| a.balance)
    }

    pub fn account(&self, pk: &GroupElement) -> Option<AccountRecord> {
        lock(&self.ledger).accounts.get(&key_of(pk)).cloned()
    }

    pub fn spent_count(&self) -> usize {
        lock(&self.ledger).spent.len()
    }

    pub fn spent_entries(&self) -> Vec<SpentEntry> {
        lock(&self.ledger).spent.values().cloned().collect()
    }

    pub fn inv_list(&self) -> Vec<AbortRecord> {
        lock(&self.ledger).inv_list.clone()
    }

    pub fn voided(&self) -> Vec<VoidedRecord> {
        lock(&self.ledger).voided.clone()
    }

    /// Coins minted for `pk_a` so far (blind signatures plus compact key
    /// allowances).
    pub fn minted_for(&self, pk_a: &GroupElement) -> u64 {
        lock(&self.ledger).rate.get(&key_of(pk_a)).copied().unwrap_or(0)
    }

    pub fn minted_total(&self) -> u64 {
        lock(&self.ledger).rate.values().sum()
    }

    /// A digest of the mutable state, for checking that a rejected input
    /// left the bank untouched.
    pub fn state_fingerprint(&self) -> [u8; 32] {
        crate::primitives::ro(b"bank-state", self.snapshot().as_bytes())
    }

    /// Users whose balance cannot cover one withdrawal, as a Bloom filter.
    pub fn low_balance_filter(&self, epsilon: f64, n_max: u64, epoch: u64) -> Result<LowBalanceFilter, BankError> {
        let low: Vec<GroupElement> = lock(&self.ledger)
            .accounts
            .values()
            .filter(|a| a.role == Role::User && a.balance < self.config.withdrawal_amount)
            .map(|a| a.pk)
            .collect();
        Ok(build_filter(&low, epsilon, n_max, epoch)?)
    }

    /// The append log of every ledger mutation, one hex wire record per line.
    pub fn snapshot(&self) -> String {
        let ledger = lock(&self.ledger);
        let mut out = ledger.log.join("\n");
        out.push('\n');
        out
    }

    /// Replaces the ledger with the state reached by replaying `log`.
    pub fn restore(&self, log: &str) -> Result<(), BankError> {
        let mut fresh = Ledger::default();
        for (i, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            fresh.replay(line).map_err(|source| BankError::Snapshot { line: i + 1, source })?;
        }
        *lock(&self.ledger) = fresh;
        Ok(())
    }

    /// The blind-signature secret exponent never leaves the bank; this
    /// exposes a sign/verify self-test over the public key.
    pub fn self_test(&self, rng: &mut (impl RngCore + CryptoRng)) -> bool {
        let (k, u) = RsaFdh::blind(&self.params.blind_pk, b"self-test", rng);
        let Ok(s) = RsaFdh::sign_blinded(&self.blind_sk, &k) else { return false };
        let Ok(sig) = RsaFdh::unblind(&self.params.blind_pk, &s, u) else { return false };
        let cert = self.cert_key.sign(b"self-test", rng);
        RsaFdh::verify(&self.params.blind_pk, b"self-test", &sig)
            && self.params.cert_pk.verify(b"self-test", &cert)
    }
}

/// Index of a deposit in the spent-coin log: the coin digest for plain
/// coins, and `X` for compact coins, whose commitments are fresh per
/// issuance.
pub fn spent_key(coin: &AnyCoin, voucher: &AnyVoucher) -> Vec<u8> {
    match coin {
        AnyCoin::Plain(_) => coin.digest().to_vec(),
        AnyCoin::Compact(_) => voucher.x().to_bytes(),
    }
}

pub(crate) fn invert_difference(a: &Scalar, b: &Scalar) -> Result<Scalar, BankError> {
    scalar_invert(&(*a - b)).map_err(|_| BankError::DetectionAbort)
}
