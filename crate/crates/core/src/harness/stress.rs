//! Concurrent deposits against one bank.

use std::sync::Arc;
use std::thread;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::ScriptError;
use crate::atm::{Atm, AtmConfig};
use crate::bank::{Bank, BankConfig, Profile, Verdict};
use crate::wallet::{MerchantView, UserState};
use crate::wire::{AnyCoin, AnyVoucher, Transaction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StressReport {
    pub deposits: usize,
    pub accepted: usize,
    pub double_spends: usize,
    pub spent: usize,
    pub balance_before: u64,
    pub balance_after: u64,
}

impl StressReport {
    /// Every coin was credited exactly once and money was conserved.
    pub fn consistent(&self, coins: usize) -> bool {
        self.accepted == coins
            && self.spent == coins
            && self.double_spends == self.deposits - coins
            && self.balance_after == self.balance_before
    }
}

/// Withdraws `coins` coins, has each spent twice at different merchants,
/// and deposits every transaction from `threads` threads at once.
pub fn stress(seed: u64, coins: usize, threads: usize) -> Result<StressReport, ScriptError> {
    let setup = |e: String| ScriptError::Setup(e);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let config = BankConfig { profile: Profile::Toy, ..BankConfig::default() };
    let bank = Arc::new(Bank::init(config, &mut rng).map_err(|e| setup(e.to_string()))?);
    let mut atm = Atm::init(bank.clone(), AtmConfig::default(), &mut rng).map_err(|e| setup(e.to_string()))?;
    atm.req_coin(coins, &mut rng).map_err(|e| setup(e.to_string()))?;
    let mut user = UserState::register(&bank, &mut rng).map_err(|e| setup(e.to_string()))?;
    let mut merchants = Vec::new();
    for _ in 0..2 {
        let m = UserState::register(&bank, &mut rng).map_err(|e| setup(e.to_string()))?;
        merchants.push(MerchantView::new(m));
    }
    for _ in 0..coins {
        user.withdraw(&mut atm, &bank, &mut rng).map_err(|e| setup(e.to_string()))?;
    }
    let params = bank.params().clone();
    let mut work: Vec<(AnyCoin, AnyVoucher, Transaction, crate::group::GroupElement)> = Vec::new();
    for idx in 0..coins {
        let entry = user.purse()[idx].clone();
        for m in merchants.iter_mut() {
            let r_v = m.fresh_nonce(&mut rng).map_err(|e| setup(e.to_string()))?;
            let tx = user
                .transaction_for(&params, &entry, &m.pk(), &r_v, &mut rng)
                .map_err(|e| setup(e.to_string()))?;
            work.push((entry.coin.clone(), entry.voucher.clone(), tx, m.pk()));
        }
    }
    let total = |b: &Bank| -> u64 {
        std::iter::once(user.pk())
            .chain(merchants.iter().map(|m| m.pk()))
            .filter_map(|pk| b.balance(&pk))
            .sum()
    };
    let balance_before = total(&bank) + coins as u64;
    let chunk = work.len().div_ceil(threads.max(1)).max(1);
    let verdicts: Vec<Verdict> = thread::scope(|s| {
        let handles: Vec<_> = work
            .chunks(chunk)
            .map(|part| {
                let bank = &bank;
                s.spawn(move || {
                    part.iter()
                        .filter_map(|(c, v, t, pk_m)| bank.update_tx(c, v, t, pk_m).ok())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("deposit thread panicked")).collect()
    });
    let accepted = verdicts.iter().filter(|v| matches!(v, Verdict::Accepted)).count();
    let double_spends = verdicts.iter().filter(|v| matches!(v, Verdict::DoubleSpend(pk) if *pk == user.pk())).count();
    Ok(StressReport {
        deposits: work.len(),
        accepted,
        double_spends,
        spent: bank.spent_count(),
        balance_before,
        balance_after: total(&bank),
    })
}
