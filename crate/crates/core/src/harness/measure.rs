//! Timings and object sizes for the four measured protocol steps: the
//! user's and the ATM's halves of a withdrawal, spending, and verifying a
//! transaction.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};
use serde::Serialize;

use super::ScriptError;
use crate::atm::{Atm, AtmConfig, AtmError, CoinIssuer, Variant};
use crate::bank::{Bank, BankConfig, Profile};
use crate::primitives::Nonce;
use crate::wallet::{verify_tx, MerchantView, UserState, WithdrawOutcome};
use crate::wire::{AnyCoin, Certificate, Promise, Receipt, WithdrawRequest, WireObject};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTimings {
    pub withdraw_user_ms: f64,
    pub issue_atm_ms: f64,
    pub spend_ms: f64,
    pub verify_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ObjectSizes {
    pub coin: usize,
    pub voucher: usize,
    pub transaction: usize,
}

/// Median-of-`samples` measurements of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub schema: u32,
    pub profile: Profile,
    pub variant: Variant,
    pub seed: u64,
    pub samples: usize,
    pub timings: StepTimings,
    pub sizes: ObjectSizes,
}

impl StepReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reports always serialize")
    }

    /// Withdrawal as seen end to end: user work plus ATM work.
    pub fn withdraw_total_ms(&self) -> f64 {
        self.timings.withdraw_user_ms + self.timings.issue_atm_ms
    }

    pub fn spend_total_ms(&self) -> f64 {
        self.timings.spend_ms + self.timings.verify_ms
    }
}

/// Accumulates the time spent inside the issuer so the user's share of a
/// withdrawal can be separated from the ATM's.
struct Timed<'a> {
    inner: &'a mut Atm,
    spent: Duration,
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

fn median_ms(mut v: Vec<Duration>) -> f64 {
    v.sort();
    let mid = v.len() / 2;
    let d = if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2 };
    d.as_secs_f64() * 1e3
}

/// Runs `samples` withdraw/spend/verify rounds on one thread. Sizes depend
/// only on the configuration; timings are wall-clock.
pub fn measure_steps(profile: Profile, variant: Variant, seed: u64, samples: usize) -> Result<StepReport, ScriptError> {
    let setup = |e: String| ScriptError::Setup(e);
    let samples = samples.max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bank_config = BankConfig {
        profile,
        compact_n: (samples as u64).max(1),
        opening_balance: samples as u64 + 1,
        ..BankConfig::default()
    };
    let bank = Arc::new(Bank::init(bank_config, &mut rng).map_err(|e| setup(e.to_string()))?);
    let config = AtmConfig { variant, ..AtmConfig::default() };
    let mut atm = Atm::init(bank.clone(), config, &mut rng).map_err(|e| setup(e.to_string()))?;
    match variant {
        Variant::Plain => atm.req_coin(samples, &mut rng).map(|_| ()),
        Variant::Compact => atm.provision_compact(&mut rng),
    }
    .map_err(|e| setup(e.to_string()))?;
    let mut user = UserState::register(&bank, &mut rng).map_err(|e| setup(e.to_string()))?;
    let mut merchant =
        MerchantView::new(UserState::register(&bank, &mut rng).map_err(|e| setup(e.to_string()))?);
    let params = bank.params().clone();
    let (mut user_t, mut atm_t, mut spend_t, mut verify_t) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut sizes = None;
    for _ in 0..samples {
        let mut timed = Timed { inner: &mut atm, spent: Duration::ZERO };
        let t = Instant::now();
        let outcome = user.withdraw(&mut timed, &bank, &mut rng).map_err(|e| setup(e.to_string()))?;
        let total = t.elapsed();
        let WithdrawOutcome::Completed(idx) = outcome else {
            return Err(setup("honest withdrawal aborted".to_string()));
        };
        atm_t.push(timed.spent);
        user_t.push(total.saturating_sub(timed.spent));
        let r_v = merchant.fresh_nonce(&mut rng).map_err(|e| setup(e.to_string()))?;
        let t = Instant::now();
        let (coin, voucher, tx) =
            user.spend(&params, idx, &merchant.pk(), &r_v, &mut rng).map_err(|e| setup(e.to_string()))?;
        spend_t.push(t.elapsed());
        let t = Instant::now();
        verify_tx(&params, &coin, &voucher, &tx, &merchant.pk()).map_err(|e| setup(format!("{e:?}")))?;
        verify_t.push(t.elapsed());
        sizes.get_or_insert(ObjectSizes {
            coin: coin.encode().len(),
            voucher: voucher.encode().len(),
            transaction: tx.encode().len(),
        });
    }
    Ok(StepReport {
        schema: REPORT_SCHEMA,
        profile,
        variant,
        seed,
        samples,
        timings: StepTimings {
            withdraw_user_ms: median_ms(user_t),
            issue_atm_ms: median_ms(atm_t),
            spend_ms: median_ms(spend_t),
            verify_ms: median_ms(verify_t),
        },
        sizes: sizes.expect("at least one sample"),
    })
}
