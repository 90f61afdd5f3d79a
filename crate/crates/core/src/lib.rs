//! Multi-issuer offline e-cash. ATMs stock bank-signed coins and hand them
//! to users together with vouchers that hide both the user and the issuing
//! ATM; users spend at merchants; the bank detects and names anyone who
//! spends or issues a coin twice.

pub mod atm;
pub mod bank;
pub mod blindsig;
pub mod credsig;
pub mod group;
pub mod harness;
pub mod nizk;
pub mod offline;
pub mod primitives;
#[cfg(test)]
mod testkit;
pub mod wallet;
pub mod wire;

pub use atm::{Atm, AtmConfig, AtmError, BalanceMode, CoinIssuer, Variant};
pub use bank::{Bank, BankConfig, BankError, Profile, PublicParams, Verdict};
pub use group::{CyclicGroup, GroupElement, Scalar};
pub use offline::LowBalanceFilter;
pub use wallet::{MerchantView, RejectReason, UserState, WalletError, WithdrawOutcome};
pub use wire::{AbortRecord, AnyCoin, AnyVoucher, Promise, Receipt, Transaction, WireError, WireObject};
