//! Deterministic multi-party scenario simulator.
//!
//! A [`Scenario`] names a roster of parties, a script of protocol events
//! and expected outcomes. [`run`] plays the script on one thread with
//! simulated time, logs every message, and evaluates the script's
//! expectations together with the protocol-wide invariants.

mod adversary;
mod log;
mod measure;
mod stress;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, Write as _};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adversary::{AtmBehavior, DishonestAtm, RecordSource};
pub use log::{EventLog, LogRecord};
pub use measure::{measure_steps, ObjectSizes, StepReport, StepTimings, REPORT_SCHEMA};
pub use stress::{stress, StressReport};

use crate::atm::{Atm, AtmConfig, AtmError, BalanceMode, CoinIssuer, Variant};
use crate::bank::{spent_key, Bank, BankConfig, BankError, Profile, Verdict};
use crate::group::{CyclicGroup, GroupElement};
use crate::offline::DEFAULT_EPSILON;
use crate::primitives::{Nonce, SigningKey};
use crate::wallet::{verify_tx, MerchantView, UserState, WithdrawMessage, WithdrawOutcome};
use crate::wire::{
    field_spans, receipt_message, AbortRecord, AnyCoin, AnyVoucher, Certificate, Promise, Receipt, Transaction,
    WithdrawRequest, WireObject,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("event {event}: no party named {name:?}")]
    UnknownParty { event: usize, name: String },
    #[error("event {event}: {name} cannot {action}")]
    WrongRole { event: usize, name: String, action: &'static str },
    #[error("event {event}: {user} has no purse entry {index}")]
    NotInPurse { event: usize, user: String, index: usize },
    #[error("event {event}: time cannot move back from {now} to {to}")]
    TimeReversal { event: usize, now: u64, to: u64 },
    #[error("expectation {index}: {reason}")]
    BadExpectation { index: usize, reason: String },
    #[error("setup failed: {0}")]
    Setup(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roster {
    pub honest_atms: usize,
    pub dishonest_atms: usize,
    pub honest_users: usize,
    pub dishonest_users: usize,
    pub merchants: usize,
}

impl Default for Roster {
    fn default() -> Self {
        Roster { honest_atms: 1, dishonest_atms: 0, honest_users: 1, dishonest_users: 0, merchants: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub profile: Profile,
    pub variant: Variant,
    pub mode: BalanceMode,
    pub opening_balance: u64,
    pub mint_cap: u64,
    pub compact_n: u64,
    pub session_ttl: u64,
    pub flush_interval: u64,
    pub epsilon: f64,
    pub filter_capacity: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let bank = BankConfig::default();
        let atm = AtmConfig::default();
        ScenarioConfig {
            profile: Profile::Toy,
            variant: atm.variant,
            mode: atm.mode,
            opening_balance: bank.opening_balance,
            mint_cap: bank.mint_cap,
            compact_n: bank.compact_n,
            session_ttl: atm.session_ttl,
            flush_interval: atm.flush_interval,
            epsilon: DEFAULT_EPSILON,
            filter_capacity: 1024,
        }
    }
}

/// Which serialized object a tamper event mutates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperTarget {
    Coin,
    Voucher,
    Transaction,
    All,
}

fn default_mutations() -> usize {
    10
}

/// One step of a script. Parties are named `atm<i>`, `evil_atm<i>`,
/// `user<i>`, `evil_user<i>` and `merchant<i>`; `coin` is an index into
/// the user's purse.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Event {
    Stock { atm: String, count: usize },
    ProvisionCompact { atm: String },
    Withdraw {
        user: String,
        atm: String,
        #[serde(default)]
        behavior: AtmBehavior,
    },
    Spend { user: String, coin: usize, merchant: String },
    /// A dishonest user spends a purse entry again.
    DoubleSpend { user: String, coin: usize, merchant: String },
    /// A dishonest user withdraws, receives a good coin, and reports an
    /// abort anyway.
    FalseAbort { user: String, atm: String },
    /// A dishonest user answers a promise with a receipt under the wrong key.
    ForgeReceipt { user: String, atm: String },
    /// Mutates single fields of a valid spend and submits each variant to
    /// the merchant and the bank.
    Tamper {
        user: String,
        coin: usize,
        merchant: String,
        object: TamperTarget,
        #[serde(default = "default_mutations")]
        mutations: usize,
    },
    Deposit { merchant: String },
    SubmitHeldReceipts { atm: String },
    Flush { atm: String },
    Tick { to: u64 },
    BroadcastFilter { epoch: u64 },
}

/// A scripted expectation. Exactly one group of fields is set: `event`
/// with `outcome`, `party` with `balance`, or one of the counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expect {
    pub event: Option<usize>,
    pub outcome: Option<String>,
    pub party: Option<String>,
    pub balance: Option<u64>,
    pub inv_list: Option<usize>,
    pub spent: Option<usize>,
    pub voided: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub roster: Roster,
    #[serde(default)]
    pub config: ScenarioConfig,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub expect: Vec<Expect>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScriptError> {
        toml::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }
}

/// The result of one check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// The offending script event, when one can be named.
    pub event: Option<usize>,
}

/// A transaction handed to the bank, with what the script knows about it.
#[derive(Clone, Debug, PartialEq)]
pub struct Deposit {
    pub event: usize,
    pub merchant: String,
    pub spender: String,
    pub key: Vec<u8>,
    pub result: Result<Verdict, BankError>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TamperStats {
    /// Non-empty fields mutated.
    pub fields: usize,
    pub trials: usize,
    pub decode_rejections: usize,
    pub merchant_accepts: usize,
    pub bank_accepts: usize,
    pub state_changes: usize,
}

pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub log: EventLog,
    /// One label per script event.
    pub outcomes: Vec<String>,
    pub checks: Vec<Check>,
    pub parties: BTreeMap<String, GroupElement>,
    pub deposits: Vec<Deposit>,
    pub tamper: TamperStats,
    pub bank: Arc<Bank>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn party_pk(&self, name: &str) -> Option<GroupElement> {
        self.parties.get(name).copied()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.name, self.seed);
        for (i, o) in self.outcomes.iter().enumerate() {
            let _ = writeln!(out, "  event {i}: {o}");
        }
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let at = c.event.map_or(String::new(), |e| format!(" [event {e}]"));
            let _ = writeln!(out, "  {status} {}{at}: {}", c.name, c.detail);
        }
        let _ = writeln!(out, "  messages logged: {}", self.log.len());
        out
    }
}

#[allow(clippy::large_enum_variant)]
enum AtmActor {
    Honest(Atm),
    Dishonest(DishonestAtm),
}

impl CoinIssuer for AtmActor {
    fn certificate(&self) -> &Certificate {
        match self {
            AtmActor::Honest(a) => a.certificate(),
            AtmActor::Dishonest(a) => a.certificate(),
        }
    }

    fn begin_issue<R: RngCore + CryptoRng>(&mut self, request: &WithdrawRequest, rng: &mut R) -> Result<Promise, AtmError> {
        match self {
            AtmActor::Honest(a) => a.begin_issue(request, rng),
            AtmActor::Dishonest(a) => a.begin_issue(request, rng),
        }
    }

    fn complete_issue<R: RngCore + CryptoRng>(
        &mut self,
        nonce: &Nonce,
        receipt: &Receipt,
        rng: &mut R,
    ) -> Result<Option<AnyCoin>, AtmError> {
        match self {
            AtmActor::Honest(a) => a.complete_issue(nonce, receipt, rng),
            AtmActor::Dishonest(a) => a.complete_issue(nonce, receipt, rng),
        }
    }
}

struct UserActor {
    state: UserState,
    honest: bool,
    withdrawals: u64,
}

struct MerchantActor {
    view: MerchantView,
    /// Spender and spent-coin key of each queued transaction.
    queue: Vec<(String, Vec<u8>)>,
}

/// A deviation whose deposit the bank must attribute.
struct Scripted {
    event: usize,
    key: Vec<u8>,
    culprit: String,
    /// The first deposit is already a second use (the coin was aborted or
    /// withheld before).
    attributed_on_first: bool,
}

/// A spend as seen on the wire, kept for the transcript scans.
struct SpendTranscript {
    event: usize,
    fresh: bool,
    objects: [Vec<u8>; 3],
}

fn error_label<E: Debug>(e: &E) -> String {
    const WRAPPERS: [&str; 7] = ["Issuer(", "Bank(", "Credential(", "Nizk(", "Primitive(", "Blind(", "Filter("];
    let mut s = format!("{e:?}");
    while let Some(w) = WRAPPERS.iter().find(|w| s.starts_with(**w) && s.ends_with(')')) {
        s = s[w.len()..s.len() - 1].to_string();
    }
    let end = s.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(s.len());
    s[..end].to_string()
}

struct World {
    rng: ChaCha20Rng,
    bank: Arc<Bank>,
    config: ScenarioConfig,
    atms: BTreeMap<String, AtmActor>,
    users: BTreeMap<String, UserActor>,
    merchants: BTreeMap<String, MerchantActor>,
    names: BTreeMap<Vec<u8>, String>,
    honest: BTreeSet<String>,
    log: EventLog,
    now: u64,
    sessions: usize,
    scripted: Vec<Scripted>,
    spends: Vec<SpendTranscript>,
    deposits: Vec<Deposit>,
    tamper: TamperStats,
    filter_epoch: u64,
}

impl World {
    fn new(s: &Scenario) -> Result<World, ScriptError> {
        let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
        let c = &s.config;
        let bank_config = BankConfig {
            profile: c.profile,
            opening_balance: c.opening_balance,
            mint_cap: c.mint_cap,
            withdrawal_amount: 1,
            compact_n: c.compact_n,
        };
        let bank = Arc::new(Bank::init(bank_config, &mut rng).map_err(|e| ScriptError::Setup(e.to_string()))?);
        let atm_config = AtmConfig {
            mode: c.mode,
            variant: c.variant,
            session_ttl: c.session_ttl,
            flush_interval: c.flush_interval,
        };
        let setup = |e: String| ScriptError::Setup(e);
        let mut w = World {
            rng,
            bank,
            config: c.clone(),
            atms: BTreeMap::new(),
            users: BTreeMap::new(),
            merchants: BTreeMap::new(),
            names: BTreeMap::new(),
            honest: BTreeSet::new(),
            log: EventLog::default(),
            now: 0,
            sessions: 0,
            scripted: Vec::new(),
            spends: Vec::new(),
            deposits: Vec::new(),
            tamper: TamperStats::default(),
            filter_epoch: 0,
        };
        let r = &s.roster;
        for i in 0..r.honest_atms {
            let atm = Atm::init(w.bank.clone(), atm_config.clone(), &mut w.rng).map_err(|e| setup(e.to_string()))?;
            w.add_party(format!("atm{i}"), atm.pk(), true);
            w.atms.insert(format!("atm{i}"), AtmActor::Honest(atm));
        }
        for i in 0..r.dishonest_atms {
            let atm = DishonestAtm::init(w.bank.clone(), &mut w.rng).map_err(|e| setup(e.to_string()))?;
            w.add_party(format!("evil_atm{i}"), atm.pk(), false);
            w.atms.insert(format!("evil_atm{i}"), AtmActor::Dishonest(atm));
        }
        for (prefix, count, honest) in [("user", r.honest_users, true), ("evil_user", r.dishonest_users, false)] {
            for i in 0..count {
                let state = UserState::register(&w.bank, &mut w.rng).map_err(|e| setup(e.to_string()))?;
                w.add_party(format!("{prefix}{i}"), state.pk(), honest);
                w.users.insert(format!("{prefix}{i}"), UserActor { state, honest, withdrawals: 0 });
            }
        }
        for i in 0..r.merchants {
            let state = UserState::register(&w.bank, &mut w.rng).map_err(|e| setup(e.to_string()))?;
            w.add_party(format!("merchant{i}"), state.pk(), true);
            w.merchants
                .insert(format!("merchant{i}"), MerchantActor { view: MerchantView::new(state), queue: Vec::new() });
        }
        Ok(w)
    }

    fn add_party(&mut self, name: String, pk: GroupElement, honest: bool) {
        self.names.insert(pk.to_bytes(), name.clone());
        if honest {
            self.honest.insert(name);
        }
    }

    fn name_of(&self, pk: &GroupElement) -> String {
        self.names.get(&pk.to_bytes()).cloned().unwrap_or_else(|| "unknown".to_string())
    }

    fn verdict_label(&self, res: &Result<Verdict, BankError>) -> String {
        match res {
            Ok(Verdict::Accepted) => "accepted".to_string(),
            Ok(Verdict::DoubleSpend(pk)) => format!("double_spend:{}", self.name_of(pk)),
            Ok(Verdict::DoubleIssue(pk)) => format!("double_issue:{}", self.name_of(pk)),
            Ok(Verdict::AbortedCoin(pk)) => format!("aborted_coin:{}", self.name_of(pk)),
            Err(e) => format!("error:{}", error_label(e)),
        }
    }

    fn check_user(&self, event: usize, name: &str, dishonest: bool, action: &'static str) -> Result<(), ScriptError> {
        let u = self
            .users
            .get(name)
            .ok_or_else(|| ScriptError::UnknownParty { event, name: name.to_string() })?;
        if dishonest && u.honest {
            return Err(ScriptError::WrongRole { event, name: name.to_string(), action });
        }
        Ok(())
    }

    fn check_atm(&self, event: usize, name: &str) -> Result<(), ScriptError> {
        if self.atms.contains_key(name) {
            Ok(())
        } else {
            Err(ScriptError::UnknownParty { event, name: name.to_string() })
        }
    }

    fn check_merchant(&self, event: usize, name: &str) -> Result<(), ScriptError> {
        if self.merchants.contains_key(name) {
            Ok(())
        } else {
            Err(ScriptError::UnknownParty { event, name: name.to_string() })
        }
    }

    fn entry_exists(&self, event: usize, user: &str, index: usize) -> Result<(), ScriptError> {
        if index < self.users[user].state.purse().len() {
            Ok(())
        } else {
            Err(ScriptError::NotInPurse { event, user: user.to_string(), index })
        }
    }

    fn step(&mut self, event: usize, ev: &Event) -> Result<String, ScriptError> {
        match ev {
            Event::Stock { atm, count } => {
                self.check_atm(event, atm)?;
                let res = match self.atms.get_mut(atm).expect("checked") {
                    AtmActor::Honest(a) => a.req_coin(*count, &mut self.rng),
                    AtmActor::Dishonest(a) => a.req_coin(*count, &mut self.rng),
                };
                self.log.push(self.now, event, None, atm, "bank", "IssueCoin", (*count as u64).to_be_bytes().to_vec());
                Ok(match res {
                    Ok(n) => format!("stocked:{n}"),
                    Err(e) => format!("error:{}", error_label(&e)),
                })
            }
            Event::ProvisionCompact { atm } => {
                self.check_atm(event, atm)?;
                let AtmActor::Honest(a) = self.atms.get_mut(atm).expect("checked") else {
                    return Err(ScriptError::WrongRole { event, name: atm.clone(), action: "hold compact keys" });
                };
                self.log.push(self.now, event, None, atm, "bank", "IssueCompactKeys", Vec::new());
                Ok(match a.provision_compact(&mut self.rng) {
                    Ok(()) => "provisioned".to_string(),
                    Err(e) => format!("error:{}", error_label(&e)),
                })
            }
            Event::Withdraw { user, atm, behavior } => self.withdraw(event, user, atm, *behavior),
            Event::Spend { user, coin, merchant } => self.spend(event, user, *coin, merchant, false),
            Event::DoubleSpend { user, coin, merchant } => self.spend(event, user, *coin, merchant, true),
            Event::FalseAbort { user, atm } => self.false_abort(event, user, atm),
            Event::ForgeReceipt { user, atm } => self.forge_receipt(event, user, atm),
            Event::Tamper { user, coin, merchant, object, mutations } => {
                self.tamper(event, user, *coin, merchant, *object, *mutations)
            }
            Event::Deposit { merchant } => {
                self.check_merchant(event, merchant)?;
                let m = self.merchants.get_mut(merchant).expect("checked");
                let results = m.view.deposit_all(&self.bank);
                let origins: Vec<_> = m.queue.drain(..).collect();
                let mut labels = Vec::new();
                for ((spender, key), result) in origins.into_iter().zip(results) {
                    self.log.push(self.now, event, None, merchant, "bank", "Deposit", key.clone());
                    let label = self.verdict_label(&result);
                    self.log.push(self.now, event, None, "bank", merchant, "Verdict", label.clone().into_bytes());
                    labels.push(label);
                    self.deposits.push(Deposit { event, merchant: merchant.clone(), spender, key, result });
                }
                Ok(if labels.is_empty() { "nothing".to_string() } else { labels.join(",") })
            }
            Event::SubmitHeldReceipts { atm } => {
                self.check_atm(event, atm)?;
                let AtmActor::Dishonest(a) = self.atms.get_mut(atm).expect("checked") else {
                    return Err(ScriptError::WrongRole { event, name: atm.clone(), action: "hold back receipts" });
                };
                let res = a.submit_held_receipts();
                Ok(format!("update_bal:{}", res.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")))
            }
            Event::Flush { atm } => {
                self.check_atm(event, atm)?;
                let AtmActor::Honest(a) = self.atms.get_mut(atm).expect("checked") else {
                    return Err(ScriptError::WrongRole { event, name: atm.clone(), action: "flush" });
                };
                let res = a.flush();
                Ok(format!("flushed:{}", res.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")))
            }
            Event::Tick { to } => {
                if *to < self.now {
                    return Err(ScriptError::TimeReversal { event, now: self.now, to: *to });
                }
                self.now = *to;
                for a in self.atms.values_mut() {
                    if let AtmActor::Honest(a) = a {
                        a.tick(*to);
                    }
                }
                Ok(format!("now:{to}"))
            }
            Event::BroadcastFilter { epoch } => {
                let filter = self
                    .bank
                    .low_balance_filter(self.config.epsilon, self.config.filter_capacity, *epoch)
                    .map_err(|e| ScriptError::Setup(e.to_string()))?;
                self.log.push(self.now, event, None, "bank", "atms", "Filter", filter.encode());
                let mut installed = 0;
                let mut refused = 0;
                for a in self.atms.values_mut() {
                    if let AtmActor::Honest(a) = a {
                        if a.config().mode != BalanceMode::Online {
                            match a.install_filter(filter.clone()) {
                                Ok(()) => installed += 1,
                                Err(_) => refused += 1,
                            }
                        }
                    }
                }
                self.filter_epoch = self.filter_epoch.max(*epoch);
                Ok(format!("installed:{installed},refused:{refused}"))
            }
        }
    }

    fn withdraw(&mut self, event: usize, user: &str, atm: &str, behavior: AtmBehavior) -> Result<String, ScriptError> {
        self.check_user(event, user, false, "withdraw")?;
        self.check_atm(event, atm)?;
        let issuer = self.atms.get_mut(atm).expect("checked");
        match issuer {
            AtmActor::Dishonest(a) => a.set_behavior(behavior),
            AtmActor::Honest(_) if behavior != AtmBehavior::Honest => {
                return Err(ScriptError::WrongRole { event, name: atm.to_string(), action: "deviate" });
            }
            AtmActor::Honest(_) => {}
        }
        let session = self.sessions;
        self.sessions += 1;
        let (log, now) = (&mut self.log, self.now);
        let actor = self.users.get_mut(user).expect("checked");
        let res = actor.state.withdraw_observed(issuer, &self.bank, &mut self.rng, &mut |m| {
            log_withdraw(log, now, event, session, user, atm, m)
        });
        Ok(match res {
            Ok(WithdrawOutcome::Completed(idx)) => {
                actor.withdrawals += 1;
                if behavior == AtmBehavior::Reissue {
                    let e = &actor.state.purse()[idx];
                    let from_withheld = match self.atms.get(atm) {
                        Some(AtmActor::Dishonest(a)) => a.last_source() == Some(RecordSource::Withheld),
                        _ => false,
                    };
                    self.scripted.push(Scripted {
                        event,
                        key: spent_key(&e.coin, &e.voucher),
                        culprit: atm.to_string(),
                        attributed_on_first: from_withheld,
                    });
                }
                format!("completed:{idx}")
            }
            Ok(WithdrawOutcome::Aborted { .. }) => "aborted".to_string(),
            Err(e) => format!("error:{}", error_label(&e)),
        })
    }

    fn spend(&mut self, event: usize, user: &str, coin: usize, merchant: &str, again: bool) -> Result<String, ScriptError> {
        self.check_user(event, user, again, "spend a coin twice")?;
        self.check_merchant(event, merchant)?;
        self.entry_exists(event, user, coin)?;
        let params = self.bank.params().clone();
        let m = self.merchants.get_mut(merchant).expect("checked");
        let pk_m = m.view.pk();
        let r_v = m.view.fresh_nonce(&mut self.rng).map_err(|e| ScriptError::Setup(e.to_string()))?;
        self.log.push(self.now, event, None, merchant, user, "Nonce", r_v.to_vec());
        let u = self.users.get_mut(user).expect("checked");
        let res = if again {
            let entry = u.state.purse()[coin].clone();
            u.state
                .transaction_for(&params, &entry, &pk_m, &r_v, &mut self.rng)
                .map(|t| (entry.coin, entry.voucher, t))
        } else {
            u.state.spend(&params, coin, &pk_m, &r_v, &mut self.rng)
        };
        let (c, v, t) = match res {
            Ok(x) => x,
            Err(e) => return Ok(format!("error:{}", error_label(&e))),
        };
        let objects = [c.encode(), v.encode(), t.encode()];
        for (kind, bytes) in ["Coin", "Voucher", "Transaction"].into_iter().zip(&objects) {
            self.log.push(self.now, event, None, user, merchant, kind, bytes.clone());
        }
        let key = spent_key(&c, &v);
        if again {
            self.scripted.push(Scripted { event, key: key.clone(), culprit: user.to_string(), attributed_on_first: false });
        }
        let fresh = !again && u.honest && !self.scripted.iter().any(|s| s.key == key);
        self.spends.push(SpendTranscript { event, fresh, objects });
        let m = self.merchants.get_mut(merchant).expect("checked");
        Ok(match m.view.accept(&params, c, v, t) {
            Ok(()) => {
                m.queue.push((user.to_string(), key));
                "accepted".to_string()
            }
            Err(reason) => format!("rejected:{reason:?}"),
        })
    }

    fn false_abort(&mut self, event: usize, user: &str, atm: &str) -> Result<String, ScriptError> {
        self.check_user(event, user, true, "lie about an abort")?;
        self.check_atm(event, atm)?;
        let session = self.sessions;
        self.sessions += 1;
        let (log, now) = (&mut self.log, self.now);
        let issuer = self.atms.get_mut(atm).expect("checked");
        let actor = self.users.get_mut(user).expect("checked");
        let mut promise = None;
        let res = actor.state.withdraw_observed(issuer, &self.bank, &mut self.rng, &mut |m| {
            if let WithdrawMessage::Promise(p) = m {
                promise = Some(p.clone());
            }
            log_withdraw(log, now, event, session, user, atm, m)
        });
        let idx = match res {
            Ok(WithdrawOutcome::Completed(idx)) => idx,
            Ok(WithdrawOutcome::Aborted { .. }) => return Ok("aborted".to_string()),
            Err(e) => return Ok(format!("error:{}", error_label(&e))),
        };
        actor.withdrawals += 1;
        let promise = promise.expect("a completed withdrawal saw a promise");
        let record = AbortRecord {
            sigma: promise.sigma,
            i: promise.i,
            voucher: promise.voucher,
            nonce: promise.nonce,
            pk_u: actor.state.pk(),
            pk_a: issuer.certificate().pk,
        };
        self.log.push(self.now, event, Some(session), user, "bank", "AbortWithdrawal", record.encode());
        let e = &actor.state.purse()[idx];
        self.scripted.push(Scripted {
            event,
            key: spent_key(&e.coin, &e.voucher),
            culprit: user.to_string(),
            attributed_on_first: true,
        });
        Ok(match self.bank.record_abort(&record) {
            Ok(()) => format!("false_abort:{idx}"),
            Err(e) => format!("error:{}", error_label(&e)),
        })
    }

    fn forge_receipt(&mut self, event: usize, user: &str, atm: &str) -> Result<String, ScriptError> {
        self.check_user(event, user, true, "forge a receipt")?;
        self.check_atm(event, atm)?;
        let session = self.sessions;
        self.sessions += 1;
        let params = self.bank.params().clone();
        let u = &self.users[user].state;
        let (request, _) = u.withdraw_request(&params, &mut self.rng).map_err(|e| ScriptError::Setup(e.to_string()))?;
        self.log.push(self.now, event, Some(session), user, atm, "WithdrawRequest", request.encode());
        let issuer = self.atms.get_mut(atm).expect("checked");
        let promise = match issuer.begin_issue(&request, &mut self.rng) {
            Ok(p) => p,
            Err(e) => return Ok(format!("error:{}", error_label(&e))),
        };
        self.log.push(self.now, event, Some(session), atm, user, "Promise", promise.encode());
        let pk_a = issuer.certificate().pk;
        let forger = SigningKey::<GroupElement>::random(&mut self.rng);
        let sig = forger.sign(&receipt_message(&request.pk_u, &pk_a, &promise.nonce), &mut self.rng);
        let receipt = Receipt { pk_u: request.pk_u, pk_a, nonce: promise.nonce, sig };
        self.log.push(self.now, event, Some(session), user, atm, "Receipt", receipt.encode());
        Ok(match issuer.complete_issue(&promise.nonce, &receipt, &mut self.rng) {
            Ok(Some(coin)) => {
                self.log.push(self.now, event, Some(session), atm, user, "Coin", coin.encode());
                "released".to_string()
            }
            Ok(None) => "withheld".to_string(),
            Err(e) => format!("error:{}", error_label(&e)),
        })
    }

    fn tamper(
        &mut self,
        event: usize,
        user: &str,
        coin: usize,
        merchant: &str,
        object: TamperTarget,
        mutations: usize,
    ) -> Result<String, ScriptError> {
        self.check_user(event, user, false, "tamper")?;
        self.check_merchant(event, merchant)?;
        self.entry_exists(event, user, coin)?;
        let params = self.bank.params().clone();
        let pk_m = self.merchants[merchant].view.pk();
        let entry = self.users[user].state.purse()[coin].clone();
        let r_v = self.merchants.get_mut(merchant).expect("checked").view.fresh_nonce(&mut self.rng);
        let r_v = r_v.map_err(|e| ScriptError::Setup(e.to_string()))?;
        let tx = self.users[user]
            .state
            .transaction_for(&params, &entry, &pk_m, &r_v, &mut self.rng)
            .map_err(|e| ScriptError::Setup(e.to_string()))?;
        let originals = [entry.coin.encode(), entry.voucher.encode(), tx.encode()];
        let targets: &[usize] = match object {
            TamperTarget::Coin => &[0],
            TamperTarget::Voucher => &[1],
            TamperTarget::Transaction => &[2],
            TamperTarget::All => &[0, 1, 2],
        };
        let mut stats = TamperStats::default();
        for &t in targets {
            let spans = field_spans(&originals[t]).map_err(|e| ScriptError::Setup(e.to_string()))?;
            for span in spans.iter().filter(|s| !s.value.is_empty()) {
                stats.fields += 1;
                for _ in 0..mutations {
                    let mut bytes = originals[t].clone();
                    let pos = span.value.start + (self.rng.next_u64() % span.value.len() as u64) as usize;
                    bytes[pos] ^= 1 + (self.rng.next_u32() % 255) as u8;
                    stats.trials += 1;
                    let mut objs = originals.clone();
                    objs[t] = bytes;
                    let decoded = (|| {
                        Some((
                            AnyCoin::decode(&objs[0]).ok()?,
                            AnyVoucher::decode(&objs[1]).ok()?,
                            Transaction::decode(&objs[2]).ok()?,
                        ))
                    })();
                    let Some((c, v, tx)) = decoded else {
                        stats.decode_rejections += 1;
                        continue;
                    };
                    let nonce_ok = tx.r_v == r_v;
                    if nonce_ok && verify_tx(&params, &c, &v, &tx, &pk_m).is_ok() {
                        stats.merchant_accepts += 1;
                    }
                    let before = self.bank.state_fingerprint();
                    if self.bank.update_tx(&c, &v, &tx, &pk_m).is_ok() {
                        stats.bank_accepts += 1;
                    }
                    if self.bank.state_fingerprint() != before {
                        stats.state_changes += 1;
                    }
                }
            }
        }
        self.tamper.fields += stats.fields;
        self.tamper.trials += stats.trials;
        self.tamper.decode_rejections += stats.decode_rejections;
        self.tamper.merchant_accepts += stats.merchant_accepts;
        self.tamper.bank_accepts += stats.bank_accepts;
        self.tamper.state_changes += stats.state_changes;
        let accepted = stats.merchant_accepts.max(stats.bank_accepts);
        Ok(format!("rejected:{}/{}", stats.trials - accepted, stats.trials))
    }

    fn expectation(&self, index: usize, e: &Expect, outcomes: &[String]) -> Result<Check, ScriptError> {
        let bad = |reason: &str| ScriptError::BadExpectation { index, reason: reason.to_string() };
        let name = format!("expect[{index}]");
        let check = |passed: bool, detail: String, event: Option<usize>| Check { name: name.clone(), passed, detail, event };
        let groups = [
            e.event.is_some() || e.outcome.is_some(),
            e.party.is_some() || e.balance.is_some(),
            e.inv_list.is_some(),
            e.spent.is_some(),
            e.voided.is_some(),
        ];
        if groups.iter().filter(|g| **g).count() != 1 {
            return Err(bad("set exactly one of event/outcome, party/balance, inv_list, spent, voided"));
        }
        if let (Some(ev), Some(want)) = (e.event, &e.outcome) {
            let got = outcomes.get(ev).ok_or_else(|| bad("event index out of range"))?;
            return Ok(check(got == want, format!("event {ev} outcome {got:?}, expected {want:?}"), Some(ev)));
        }
        if let (Some(party), Some(want)) = (&e.party, e.balance) {
            let pk = self
                .names
                .iter()
                .find(|(_, n)| *n == party)
                .map(|(k, _)| k.clone())
                .ok_or_else(|| bad("unknown party"))?;
            let pk = GroupElement::from_bytes(&pk).map_err(|_| bad("unknown party"))?;
            let got = self.bank.balance(&pk);
            return Ok(check(got == Some(want), format!("{party} balance {got:?}, expected {want}"), None));
        }
        let (what, got, want) = if let Some(n) = e.inv_list {
            ("inv_list", self.bank.inv_list().len(), n)
        } else if let Some(n) = e.spent {
            ("spent", self.bank.spent_count(), n)
        } else if let Some(n) = e.voided {
            ("voided", self.bank.voided().len(), n)
        } else {
            return Err(bad("incomplete expectation"));
        };
        Ok(check(got == want, format!("{what} = {got}, expected {want}"), None))
    }

    fn conservation(&self) -> Check {
        let mut store = 0u64;
        for a in self.atms.values() {
            store += match a {
                AtmActor::Honest(a) => a.unissued() + a.in_flight() + a.retired(),
                AtmActor::Dishonest(a) => a.unissued(),
            };
        }
        let cs: BTreeSet<Vec<u8>> = self.bank.spent_entries().into_iter().map(|e| e.key).collect();
        let voided: BTreeSet<[u8; 32]> = self.bank.voided().into_iter().map(|v| v.coin).collect();
        let mut held = BTreeSet::new();
        let mut key_of_digest = BTreeMap::new();
        let purses = self
            .users
            .values()
            .map(|u| u.state.purse())
            .chain(self.merchants.values().map(|m| m.view.user().purse()));
        for purse in purses {
            for e in purse {
                let key = spent_key(&e.coin, &e.voucher);
                let digest = e.coin.digest();
                key_of_digest.insert(digest, key.clone());
                if !cs.contains(&key) && !voided.contains(&digest) {
                    held.insert(key);
                }
            }
        }
        let voided_outside_cs = voided
            .iter()
            .filter(|d| !matches!(key_of_digest.get(*d), Some(k) if cs.contains(k)))
            .count() as u64;
        let minted = self.bank.minted_total();
        let total = store + held.len() as u64 + cs.len() as u64 + voided_outside_cs;
        Check {
            name: "conservation".to_string(),
            passed: minted == total,
            detail: format!(
                "minted {minted} = stores {store} + held {} + spent {} + voided {voided_outside_cs}",
                held.len(),
                cs.len()
            ),
            event: None,
        }
    }

    fn no_honest_framing(&self) -> Check {
        let framed = self.deposits.iter().find_map(|d| {
            let culprit = d.result.as_ref().ok()?.culprit()?;
            let name = self.name_of(&culprit);
            self.honest.contains(&name).then_some((d.event, name))
        });
        Check {
            name: "no_honest_framing".to_string(),
            passed: framed.is_none(),
            detail: framed.as_ref().map_or("no honest party named".to_string(), |(_, n)| format!("{n} was named")),
            event: framed.map(|(e, _)| e),
        }
    }

    fn detection_completeness(&self) -> Check {
        let mut failure = None;
        for s in &self.scripted {
            let deposits: Vec<&Deposit> = self.deposits.iter().filter(|d| d.key == s.key).collect();
            let named = |d: &Deposit| {
                d.result
                    .as_ref()
                    .ok()
                    .and_then(|v| v.culprit())
                    .is_some_and(|pk| self.name_of(&pk) == s.culprit)
            };
            let wrong = deposits.iter().find(|d| !matches!(d.result, Ok(Verdict::Accepted)) && !named(d));
            let needed = if s.attributed_on_first { deposits.first() } else { deposits.get(1) };
            if let Some(d) = wrong {
                failure = Some((d.event, format!("deviation at event {} named someone other than {}", s.event, s.culprit)));
            } else if let Some(d) = needed {
                if !named(d) {
                    failure = Some((d.event, format!("deviation at event {} not attributed to {}", s.event, s.culprit)));
                }
            }
            if failure.is_some() {
                break;
            }
        }
        Check {
            name: "detection_completeness".to_string(),
            passed: failure.is_none(),
            detail: failure
                .as_ref()
                .map_or(format!("{} scripted deviations attributed", self.scripted.len()), |(_, d)| d.clone()),
            event: failure.map(|(e, _)| e),
        }
    }

    fn exchange_ordering(&self) -> Check {
        let mut first: BTreeMap<(usize, &str), usize> = BTreeMap::new();
        for r in self.log.records() {
            if let Some(s) = r.session {
                first.entry((s, r.kind)).or_insert(r.index);
            }
        }
        let mut bad = None;
        for (&(s, kind), &idx) in &first {
            let before = match kind {
                "Receipt" => "Promise",
                "Coin" => "Receipt",
                _ => continue,
            };
            if !matches!(first.get(&(s, before)), Some(&b) if b < idx) {
                bad = Some(self.log.records()[idx].event);
                break;
            }
        }
        Check {
            name: "exchange_ordering".to_string(),
            passed: bad.is_none(),
            detail: "every receipt follows a promise and every coin follows a receipt".to_string(),
            event: bad,
        }
    }

    fn purse_accounting(&self) -> Check {
        let mut over = None;
        for (name, u) in self.users.iter().filter(|(_, u)| u.honest) {
            let accepted = self
                .deposits
                .iter()
                .filter(|d| d.spender == *name && matches!(d.result, Ok(Verdict::Accepted)))
                .count() as u64;
            if accepted > u.withdrawals {
                over = Some(format!("{name}: {accepted} deposits for {} withdrawals", u.withdrawals));
            }
        }
        Check {
            name: "purse_accounting".to_string(),
            passed: over.is_none(),
            detail: over.unwrap_or_else(|| "honest deposits never exceed withdrawals".to_string()),
            event: None,
        }
    }

    /// Byte scan for identity keys in spend transcripts. This is a
    /// surrogate for computational indistinguishability, not a proof of it.
    fn transcript_scan(&self) -> Check {
        let needles: Vec<(&Vec<u8>, &String)> = self.names.iter().collect();
        let hit = self.spends.iter().find_map(|s| {
            s.objects.iter().find_map(|bytes| {
                needles
                    .iter()
                    .find(|(pk, _)| bytes.windows(pk.len()).any(|w| w == pk.as_slice()))
                    .map(|(_, n)| (s.event, (*n).clone()))
            })
        });
        Check {
            name: "transcript_scan (surrogate)".to_string(),
            passed: hit.is_none(),
            detail: hit.as_ref().map_or(
                format!("{} spends contain no identity key", self.spends.len()),
                |(_, n)| format!("spend transcript contains the key of {n}"),
            ),
            event: hit.map(|(e, _)| e),
        }
    }

    /// Every field of every honest spend takes a value seen nowhere else.
    fn field_freshness(&self) -> Check {
        let mut seen: BTreeSet<(usize, u8, Vec<u8>)> = BTreeSet::new();
        let mut dup = None;
        'outer: for s in self.spends.iter().filter(|s| s.fresh) {
            for (obj, bytes) in s.objects.iter().enumerate() {
                let Ok(spans) = field_spans(bytes) else { continue };
                for span in spans.into_iter().filter(|sp| !sp.value.is_empty()) {
                    if !seen.insert((obj, span.tag, bytes[span.value].to_vec())) {
                        dup = Some((s.event, obj, span.tag));
                        break 'outer;
                    }
                }
            }
        }
        Check {
            name: "field_freshness (surrogate)".to_string(),
            passed: dup.is_none(),
            detail: dup.map_or("all honest spend fields distinct".to_string(), |(_, o, t)| {
                format!("object {o} field {t} repeated")
            }),
            event: dup.map(|(e, _, _)| e),
        }
    }

    fn tamper_check(&self) -> Check {
        let t = &self.tamper;
        Check {
            name: "tamper_rejection".to_string(),
            passed: t.merchant_accepts == 0 && t.bank_accepts == 0 && t.state_changes == 0,
            detail: format!(
                "{} mutations: {} undecodable, {} merchant accepts, {} bank accepts, {} state changes",
                t.trials, t.decode_rejections, t.merchant_accepts, t.bank_accepts, t.state_changes
            ),
            event: None,
        }
    }
}

fn log_withdraw(log: &mut EventLog, now: u64, event: usize, session: usize, user: &str, atm: &str, m: WithdrawMessage<'_>) {
    let s = Some(session);
    match m {
        WithdrawMessage::Request(r) => log.push(now, event, s, user, atm, "WithdrawRequest", r.encode()),
        WithdrawMessage::Promise(p) => log.push(now, event, s, atm, user, "Promise", p.encode()),
        WithdrawMessage::Receipt(r) => log.push(now, event, s, user, atm, "Receipt", r.encode()),
        WithdrawMessage::Coin(Some(c)) => log.push(now, event, s, atm, user, "Coin", c.encode()),
        WithdrawMessage::Coin(None) => log.push(now, event, s, atm, user, "Withheld", Vec::new()),
        WithdrawMessage::Abort(a) => log.push(now, event, s, user, "bank", "AbortWithdrawal", a.encode()),
    }
}

/// Plays `scenario` and evaluates its expectations and the invariants.
pub fn run(scenario: &Scenario) -> Result<RunReport, ScriptError> {
    let mut w = World::new(scenario)?;
    let mut outcomes = Vec::with_capacity(scenario.events.len());
    for (i, ev) in scenario.events.iter().enumerate() {
        outcomes.push(w.step(i, ev)?);
    }
    let mut checks = Vec::new();
    for (i, e) in scenario.expect.iter().enumerate() {
        checks.push(w.expectation(i, e, &outcomes)?);
    }
    checks.push(w.conservation());
    checks.push(w.no_honest_framing());
    checks.push(w.detection_completeness());
    checks.push(w.exchange_ordering());
    checks.push(w.purse_accounting());
    checks.push(w.transcript_scan());
    checks.push(w.field_freshness());
    if w.tamper.trials > 0 {
        checks.push(w.tamper_check());
    }
    let parties = w
        .names
        .iter()
        .map(|(pk, n)| (n.clone(), GroupElement::from_bytes(pk).expect("stored from a valid element")))
        .collect();
    Ok(RunReport {
        name: scenario.name.clone(),
        seed: scenario.seed,
        log: w.log,
        outcomes,
        checks,
        parties,
        deposits: w.deposits,
        tamper: w.tamper,
        bank: w.bank,
    })
}

/// The honest flow: stock, withdraw, spend, deposit.
pub fn honest_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "honest".to_string(),
        seed,
        roster: Roster::default(),
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "atm0".into(), count: 1 },
            Event::Withdraw { user: "user0".into(), atm: "atm0".into(), behavior: AtmBehavior::Honest },
            Event::Spend { user: "user0".into(), coin: 0, merchant: "merchant0".into() },
            Event::Deposit { merchant: "merchant0".into() },
        ],
        expect: vec![
            Expect { event: Some(3), outcome: Some("accepted".into()), ..Expect::default() },
            Expect { party: Some("user0".into()), balance: Some(99), ..Expect::default() },
            Expect { party: Some("merchant0".into()), balance: Some(101), ..Expect::default() },
        ],
    }
}

/// A dishonest user spends one coin at two merchants.
pub fn double_spend_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "double-spend".to_string(),
        seed,
        roster: Roster { honest_users: 0, dishonest_users: 1, merchants: 2, ..Roster::default() },
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "atm0".into(), count: 1 },
            Event::Withdraw { user: "evil_user0".into(), atm: "atm0".into(), behavior: AtmBehavior::Honest },
            Event::Spend { user: "evil_user0".into(), coin: 0, merchant: "merchant0".into() },
            Event::DoubleSpend { user: "evil_user0".into(), coin: 0, merchant: "merchant1".into() },
            Event::Deposit { merchant: "merchant0".into() },
            Event::Deposit { merchant: "merchant1".into() },
        ],
        expect: vec![
            Expect { event: Some(4), outcome: Some("accepted".into()), ..Expect::default() },
            Expect { event: Some(5), outcome: Some("double_spend:evil_user0".into()), ..Expect::default() },
        ],
    }
}

/// A dishonest ATM hands one coin record to two honest users.
pub fn double_issue_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "double-issue".to_string(),
        seed,
        roster: Roster { honest_atms: 0, dishonest_atms: 1, honest_users: 2, ..Roster::default() },
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "evil_atm0".into(), count: 1 },
            Event::Withdraw { user: "user0".into(), atm: "evil_atm0".into(), behavior: AtmBehavior::Honest },
            Event::Withdraw { user: "user1".into(), atm: "evil_atm0".into(), behavior: AtmBehavior::Reissue },
            Event::Spend { user: "user0".into(), coin: 0, merchant: "merchant0".into() },
            Event::Spend { user: "user1".into(), coin: 0, merchant: "merchant0".into() },
            Event::Deposit { merchant: "merchant0".into() },
        ],
        expect: vec![Expect {
            event: Some(5),
            outcome: Some("accepted,double_issue:evil_atm0".into()),
            ..Expect::default()
        }],
    }
}

/// A dishonest ATM withholds the coin after taking the receipt, later tries
/// to debit with it, then issues the same record to a second user.
pub fn withhold_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "withhold-coin".to_string(),
        seed,
        roster: Roster { honest_atms: 0, dishonest_atms: 1, honest_users: 2, ..Roster::default() },
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "evil_atm0".into(), count: 1 },
            Event::Withdraw { user: "user0".into(), atm: "evil_atm0".into(), behavior: AtmBehavior::Withhold },
            Event::SubmitHeldReceipts { atm: "evil_atm0".into() },
            Event::Withdraw { user: "user1".into(), atm: "evil_atm0".into(), behavior: AtmBehavior::Reissue },
            Event::Spend { user: "user1".into(), coin: 0, merchant: "merchant0".into() },
            Event::Deposit { merchant: "merchant0".into() },
        ],
        expect: vec![
            Expect { event: Some(1), outcome: Some("aborted".into()), ..Expect::default() },
            Expect { inv_list: Some(1), ..Expect::default() },
            Expect { event: Some(2), outcome: Some("update_bal:1".into()), ..Expect::default() },
            Expect { party: Some("user0".into()), balance: Some(100), ..Expect::default() },
            Expect { event: Some(5), outcome: Some("double_issue:evil_atm0".into()), ..Expect::default() },
        ],
    }
}

/// A dishonest user receives a good coin, reports an abort, and spends it.
pub fn false_abort_scenario(seed: u64) -> Scenario {
    Scenario {
        name: "false-abort".to_string(),
        seed,
        roster: Roster { honest_users: 0, dishonest_users: 1, ..Roster::default() },
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "atm0".into(), count: 1 },
            Event::FalseAbort { user: "evil_user0".into(), atm: "atm0".into() },
            Event::Spend { user: "evil_user0".into(), coin: 0, merchant: "merchant0".into() },
            Event::Deposit { merchant: "merchant0".into() },
        ],
        expect: vec![
            Expect { event: Some(3), outcome: Some("aborted_coin:evil_user0".into()), ..Expect::default() },
            Expect { voided: Some(1), ..Expect::default() },
        ],
    }
}

/// Single-field mutations of a valid spend, every field of every object.
pub fn tamper_scenario(seed: u64, mutations: usize) -> Scenario {
    Scenario {
        name: "tamper".to_string(),
        seed,
        roster: Roster::default(),
        config: ScenarioConfig::default(),
        events: vec![
            Event::Stock { atm: "atm0".into(), count: 1 },
            Event::Withdraw { user: "user0".into(), atm: "atm0".into(), behavior: AtmBehavior::Honest },
            Event::Tamper {
                user: "user0".into(),
                coin: 0,
                merchant: "merchant0".into(),
                object: TamperTarget::All,
                mutations,
            },
        ],
        expect: vec![Expect { spent: Some(0), ..Expect::default() }],
    }
}
