//! Fixtures shared by the unit tests.

use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::atm::{Atm, AtmConfig, CoinIssuer};
use crate::bank::{Bank, BankConfig, Profile};
use crate::wallet::{MerchantView, UserState, WithdrawOutcome};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn toy_config() -> BankConfig {
    BankConfig { profile: Profile::Toy, compact_n: 8, ..BankConfig::default() }
}

pub fn bank(rng: &mut ChaCha20Rng) -> Arc<Bank> {
    Arc::new(Bank::init(toy_config(), rng).unwrap())
}

pub fn atm(bank: &Arc<Bank>, config: AtmConfig, stock: usize, rng: &mut ChaCha20Rng) -> Atm {
    let mut atm = Atm::init(bank.clone(), config, rng).unwrap();
    if stock > 0 {
        atm.req_coin(stock, rng).unwrap();
    }
    atm
}

pub fn user(bank: &Bank, rng: &mut ChaCha20Rng) -> UserState {
    UserState::register(bank, rng).unwrap()
}

pub fn merchant(bank: &Bank, rng: &mut ChaCha20Rng) -> MerchantView {
    MerchantView::new(user(bank, rng))
}

/// Withdraws one coin and returns its purse index.
pub fn withdraw<I: CoinIssuer>(u: &mut UserState, issuer: &mut I, bank: &Bank, rng: &mut ChaCha20Rng) -> usize {
    match u.withdraw(issuer, bank, rng).unwrap() {
        WithdrawOutcome::Completed(i) => i,
        other => panic!("withdrawal aborted: {other:?}"),
    }
}
