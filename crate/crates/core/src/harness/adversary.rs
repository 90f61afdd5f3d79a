//! Dishonest actors. They reuse the honest building blocks and deviate at
//! exactly one protocol point each.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::atm::{check_receipt, check_request, issue_voucher, make_promise, stock_records, AtmError, AtmIdentity, CoinIssuer};
use crate::bank::Bank;
use crate::group::GroupElement;
use crate::primitives::{gen_nonce, Nonce};
use crate::wire::{AnyCoin, Certificate, KsRecord, Promise, Receipt, WithdrawRequest};

/// What a dishonest ATM does on its next withdrawal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtmBehavior {
    #[default]
    Honest,
    /// Takes the receipt and releases nothing; keeps the receipt to try a
    /// debit later.
    Withhold,
    /// Issues a record it already used, preferring a withheld one.
    Reissue,
}

/// Where the record behind the latest reissue came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordSource {
    Withheld,
    Issued,
}

struct Pending {
    request: WithdrawRequest,
    coin: AnyCoin,
    record: KsRecord,
    behavior: AtmBehavior,
}

pub struct DishonestAtm {
    id: AtmIdentity,
    bank: Arc<Bank>,
    stock: VecDeque<KsRecord>,
    sessions: BTreeMap<Nonce, Pending>,
    next: AtmBehavior,
    issued: Vec<KsRecord>,
    withheld: Vec<KsRecord>,
    held_receipts: Vec<Receipt>,
    last_source: Option<RecordSource>,
}

impl DishonestAtm {
    pub fn init(bank: Arc<Bank>, rng: &mut (impl RngCore + CryptoRng)) -> Result<Self, AtmError> {
        Ok(DishonestAtm {
            id: AtmIdentity::register(&bank, rng)?,
            bank,
            stock: VecDeque::new(),
            sessions: BTreeMap::new(),
            next: AtmBehavior::Honest,
            issued: Vec::new(),
            withheld: Vec::new(),
            held_receipts: Vec::new(),
            last_source: None,
        })
    }

    pub fn pk(&self) -> GroupElement {
        self.id.pk()
    }

    pub fn req_coin(&mut self, n: usize, rng: &mut (impl RngCore + CryptoRng)) -> Result<usize, AtmError> {
        self.stock.extend(stock_records(&self.bank, &self.id, n, rng)?);
        Ok(self.stock.len())
    }

    pub fn last_source(&self) -> Option<RecordSource> {
        self.last_source
    }

    pub fn set_behavior(&mut self, b: AtmBehavior) {
        self.next = b;
    }

    /// Records that have not reached any user.
    pub fn unissued(&self) -> u64 {
        let promised = self
            .sessions
            .values()
            .filter(|p| p.behavior != AtmBehavior::Reissue)
            .count();
        (self.stock.len() + self.withheld.len() + promised) as u64
    }

    /// Submits withheld receipts to the bank, attempting a debit for coins
    /// the user never received.
    pub fn submit_held_receipts(&mut self) -> Vec<u8> {
        let pk_a = self.id.pk();
        self.held_receipts
            .drain(..)
            .map(|r| self.bank.update_bal(&r.pk_u, &r, &pk_a, &r.nonce))
            .collect()
    }
}

impl CoinIssuer for DishonestAtm {
    fn certificate(&self) -> &Certificate {
        self.id.certificate()
    }

    fn begin_issue<R: RngCore + CryptoRng>(&mut self, request: &WithdrawRequest, rng: &mut R) -> Result<Promise, AtmError> {
        check_request(self.bank.params(), request)?;
        let behavior = std::mem::take(&mut self.next);
        let record = match behavior {
            AtmBehavior::Reissue => {
                if let Some(r) = self.withheld.pop() {
                    self.last_source = Some(RecordSource::Withheld);
                    Some(r)
                } else {
                    self.last_source = Some(RecordSource::Issued);
                    self.issued.last().cloned()
                }
            }
            _ => self.stock.pop_front(),
        }
        .ok_or(AtmError::OutOfStock)?;
        let (coin, voucher) = issue_voucher(self.bank.params(), &self.id, &record, request, rng)?;
        let nonce = gen_nonce(rng)?;
        let promise = make_promise(&self.id, &coin, voucher, &request.pk_u, nonce, rng);
        self.sessions.insert(nonce, Pending { request: request.clone(), coin, record, behavior });
        Ok(promise)
    }

    fn complete_issue<R: RngCore + CryptoRng>(
        &mut self,
        nonce: &Nonce,
        receipt: &Receipt,
        _rng: &mut R,
    ) -> Result<Option<AnyCoin>, AtmError> {
        let pending = self.sessions.get(nonce).ok_or(AtmError::UnknownSession)?;
        check_receipt(&pending.request, &self.id.pk(), nonce, receipt)?;
        let pending = self.sessions.remove(nonce).expect("present");
        if pending.behavior == AtmBehavior::Withhold {
            self.withheld.push(pending.record);
            self.held_receipts.push(receipt.clone());
            return Ok(None);
        }
        let pk_a = self.id.pk();
        self.bank.update_bal(&receipt.pk_u, receipt, &pk_a, nonce);
        if pending.behavior == AtmBehavior::Honest {
            self.issued.push(pending.record);
        }
        Ok(Some(pending.coin))
    }
}
