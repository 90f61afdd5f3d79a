//! Low-balance Bloom filter broadcast by the bank so ATMs can approve
//! withdrawals without contacting it.
//!
//! Sizing for a design load `n` and target false-positive rate `ε`:
//! `m = ⌈-n ln ε / (ln 2)^2⌉` bits and `h = ⌈(m/n) ln 2⌉` probes. Probe
//! positions come from double hashing `h1 + i·h2 mod m`, with `h1` and `h2`
//! read from one SHA-256 digest of the key.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{CyclicGroup, GroupElement};
use crate::wire::{tag, FieldReader, FieldWriter, WireError, WireObject};

pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter parameters: epsilon {epsilon}, n_max {n_max}")]
    InvalidParameters { epsilon: f64, n_max: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowBalanceFilter {
    bits: Vec<u8>,
    m: u64,
    h: u32,
    pub epoch: u64,
    pub insert_count: u64,
}

/// `(m, h)` for design load `n_max` and rate `epsilon`.
pub fn filter_dimensions(epsilon: f64, n_max: u64) -> Result<(u64, u32), FilterError> {
    if !(epsilon > 0.0 && epsilon < 1.0) || n_max == 0 {
        return Err(FilterError::InvalidParameters { epsilon, n_max });
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(n_max as f64) * epsilon.ln() / (ln2 * ln2)).ceil().max(8.0) as u64;
    let h = ((m as f64 / n_max as f64) * ln2).ceil().max(1.0) as u32;
    Ok((m, h))
}

fn probes(key: &[u8], m: u64, h: u32) -> impl Iterator<Item = u64> {
    let d = Sha256::new().chain(b"atmcash/bloom").chain(key).finalize();
    let h1 = u64::from_be_bytes(d[..8].try_into().unwrap());
    let h2 = u64::from_be_bytes(d[8..16].try_into().unwrap()) | 1;
    (0..h as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
}

impl LowBalanceFilter {
    pub fn new(epsilon: f64, n_max: u64, epoch: u64) -> Result<Self, FilterError> {
        let (m, h) = filter_dimensions(epsilon, n_max)?;
        Ok(LowBalanceFilter { bits: vec![0; m.div_ceil(8) as usize], m, h, epoch, insert_count: 0 })
    }

    pub fn insert(&mut self, key: &[u8]) {
        for i in probes(key, self.m, self.h) {
            self.bits[(i / 8) as usize] |= 1 << (i % 8);
        }
        self.insert_count += 1;
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        probes(key, self.m, self.h).all(|i| self.bits[(i / 8) as usize] & (1 << (i % 8)) != 0)
    }

    pub fn contains_pk(&self, pk: &GroupElement) -> bool {
        self.contains(&pk.to_bytes())
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.h
    }

    /// `(1 - e^{-h·n/m})^h` at the current load.
    pub fn expected_fpr(&self) -> f64 {
        let h = self.h as f64;
        (1.0 - (-h * self.insert_count as f64 / self.m as f64).exp()).powf(h)
    }
}

pub fn build_filter(
    low_balance: &[GroupElement],
    epsilon: f64,
    n_max: u64,
    epoch: u64,
) -> Result<LowBalanceFilter, FilterError> {
    let mut f = LowBalanceFilter::new(epsilon, n_max.max(low_balance.len() as u64), epoch)?;
    for pk in low_balance {
        f.insert(&pk.to_bytes());
    }
    Ok(f)
}

impl WireObject for LowBalanceFilter {
    const TAG: u8 = tag::FILTER;

    fn write_fields(&self, w: &mut FieldWriter) {
        w.u64(self.epoch).u64(self.m).u64(self.h as u64).u64(self.insert_count).bytes(&self.bits);
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError> {
        let epoch = r.u64()?;
        let m = r.u64()?;
        let h = r.u64()?;
        let insert_count = r.u64()?;
        let bits = r.bytes()?.to_vec();
        if m == 0 || h == 0 || h > 64 || bits.len() as u64 != m.div_ceil(8) {
            return Err(WireError::Malformed("filter dimensions"));
        }
        Ok(LowBalanceFilter { bits, m, h: h as u32, epoch, insert_count })
    }
}
