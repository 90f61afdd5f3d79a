//! Identity recovery from two uses of one coin.
//!
//! Two spends give `Z = pk_U · F^{r_t}` and `Z' = pk_U · F^{r_t'}` for the
//! same `F = F_s(cid)`, so `F = (Z/Z')^{1/(r_t - r_t')}` and
//! `pk_U = Z / F^{r_t}`. Two issuances work the same way with `Y`, `r_c`
//! and `pk_A`.

use super::{invert_difference, BankError};
use crate::group::{CyclicGroup, GroupElement, Scalar};

fn recover(a: &GroupElement, ra: &Scalar, b: &GroupElement, rb: &Scalar) -> Result<GroupElement, BankError> {
    let inv = invert_difference(ra, rb)?;
    let f = a.div(b).exp(&inv);
    Ok(a.div(&f.exp(ra)))
}

pub fn recover_double_spender(
    z: &GroupElement,
    r_t: &Scalar,
    z_prev: &GroupElement,
    r_t_prev: &Scalar,
) -> Result<GroupElement, BankError> {
    recover(z, r_t, z_prev, r_t_prev)
}

pub fn recover_double_issuer(
    y: &GroupElement,
    r_c: &Scalar,
    y_prev: &GroupElement,
    r_c_prev: &Scalar,
) -> Result<GroupElement, BankError> {
    recover(y, r_c, y_prev, r_c_prev)
}
