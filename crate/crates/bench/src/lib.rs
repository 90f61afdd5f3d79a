//! Fixtures for timing the four protocol steps: the user's and the ATM's
//! halves of a withdrawal, spending, and verifying a transaction.

use std::sync::Arc;
use std::time::{Duration, Instant};

use atmcash_core::primitives::Nonce;
use atmcash_core::wallet::verify_tx;
use atmcash_core::wire::{Certificate, WithdrawRequest};
use atmcash_core::{
    AnyCoin, AnyVoucher, Atm, AtmConfig, AtmError, Bank, BankConfig, CoinIssuer, MerchantView, Profile, Promise,
    Receipt, Transaction, UserState, Variant, WithdrawOutcome,
};
use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};

/// Wraps an ATM and accumulates the time spent inside it.
pub struct Timed<'a> {
    pub inner: &'a mut Atm,
    pub spent: Duration,
}

impl CoinIssuer for Timed<'_> {
    fn certificate(&self) -> &Certificate {
        self.inner.certificate()
    }

    fn begin_issue<R: RngCore + CryptoRng>(&mut self, request: &WithdrawRequest, rng: &mut R) -> Result<Promise, AtmError> {
        let t = Instant::now();
        let out = self.inner.begin_issue(request, rng);
        self.spent += t.elapsed();
        out
    }

    fn complete_issue<R: RngCore + CryptoRng>(
        &mut self,
        nonce: &Nonce,
        receipt: &Receipt,
        rng: &mut R,
    ) -> Result<Option<AnyCoin>, AtmError> {
        let t = Instant::now();
        let out = self.inner.complete_issue(nonce, receipt, rng);
        self.spent += t.elapsed();
        out
    }
}

/// Time spent by each side of one batch of withdrawals.
#[derive(Clone, Copy, Debug, Default)]
pub struct Split {
    pub user: Duration,
    pub atm: Duration,
}

pub struct Fixture {
    pub rng: ChaCha20Rng,
    pub bank: Arc<Bank>,
    pub atm: Atm,
    pub user: UserState,
    pub merchant: MerchantView,
    pub variant: Variant,
    /// One issued coin, with a transaction on it, for the spend and verify
    /// steps.
    pub coin: AnyCoin,
    pub voucher: AnyVoucher,
    pub tx: Transaction,
}

impl Fixture {
    pub fn new(profile: Profile, variant: Variant, seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let config = BankConfig {
            profile,
            opening_balance: u64::MAX / 2,
            mint_cap: u64::MAX / 2,
            compact_n: 1 << 20,
            ..BankConfig::default()
        };
        let bank = Arc::new(Bank::init(config, &mut rng).expect("bank"));
        let mut atm = Atm::init(bank.clone(), AtmConfig { variant, ..AtmConfig::default() }, &mut rng).expect("atm");
        let mut user = UserState::register(&bank, &mut rng).expect("user");
        let mut merchant = MerchantView::new(UserState::register(&bank, &mut rng).expect("merchant"));
        if variant == Variant::Compact {
            atm.provision_compact(&mut rng).expect("compact keys");
        } else {
            atm.req_coin(1, &mut rng).expect("stock");
        }
        let Ok(WithdrawOutcome::Completed(idx)) = user.withdraw(&mut atm, &bank, &mut rng) else {
            panic!("fixture withdrawal failed");
        };
        let params = bank.params().clone();
        let r_v = merchant.fresh_nonce(&mut rng).expect("nonce");
        let (coin, voucher, tx) = user.spend(&params, idx, &merchant.pk(), &r_v, &mut rng).expect("spend");
        Fixture { rng, bank, atm, user, merchant, variant, coin, voucher, tx }
    }

    /// Runs `n` withdrawals and splits their wall time between user and ATM.
    pub fn withdraw_batch(&mut self, n: u64) -> Split {
        if self.variant == Variant::Plain {
            self.atm.req_coin(n as usize, &mut self.rng).expect("stock");
        }
        let mut split = Split::default();
        for _ in 0..n {
            let mut timed = Timed { inner: &mut self.atm, spent: Duration::ZERO };
            let t = Instant::now();
            let out = self.user.withdraw(&mut timed, &self.bank, &mut self.rng).expect("withdraw");
            let total = t.elapsed();
            assert!(matches!(out, WithdrawOutcome::Completed(_)));
            split.atm += timed.spent;
            split.user += total.saturating_sub(timed.spent);
        }
        split
    }

    /// Builds a fresh transaction on the fixture coin.
    pub fn spend_once(&mut self) -> Transaction {
        let params = self.bank.params().clone();
        let entry = self.user.purse()[0].clone();
        let r_v = self.merchant.fresh_nonce(&mut self.rng).expect("nonce");
        self.user
            .transaction_for(&params, &entry, &self.merchant.pk(), &r_v, &mut self.rng)
            .expect("transaction")
    }

    pub fn verify_once(&self) -> bool {
        verify_tx(self.bank.params(), &self.coin, &self.voucher, &self.tx, &self.merchant.pk()).is_ok()
    }
}
