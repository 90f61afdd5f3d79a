//! The statement families proven by users and ATMs, each linearized for the
//! sigma engine.
//!
//! PRF outputs are never revealed, so `X = F_k(x)` is proven in the form
//! `X^k = g·X^{-(1+x)}`, and products of two secrets are carried by an
//! auxiliary witness tied back to a commitment (`1 = C^a · g_1^{-ab} · ...`).

use rand_core::{CryptoRng, RngCore};

use super::{LinearStatement, NizkError, Proof, StatementTag};
use crate::group::{scalar_to_bytes, CyclicGroup, GeneratorSet};
use crate::primitives::Opening;

fn one_plus<G: CyclicGroup>(x: &G::Scalar) -> G::Scalar {
    <G::Scalar as ff::Field>::ONE + x
}

/// Knowledge of an opening of `P` whose first message is the secret key of
/// `pk = g^{m_0}`.
pub fn key_registration_statement<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    commitment: &G,
    pk: &G,
    message_count: usize,
) -> LinearStatement<G> {
    let blinding_idx = message_count;
    let mut terms: Vec<(G, usize)> = gens.messages[..message_count]
        .iter()
        .copied()
        .zip(0..)
        .collect();
    terms.push((gens.blinding, blinding_idx));
    LinearStatement::new(StatementTag::KeyRegistration, message_count + 1)
        .relation(*commitment, terms)
        .relation(*pk, vec![(G::generator(), 0)])
}

pub fn prove_key_registration<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    commitment: &G,
    pk: &G,
    opening: &Opening<G>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    let n = opening.messages.len();
    if n == 0 || n > gens.count() {
        return Err(NizkError::WitnessMismatch);
    }
    let mut witness = opening.messages.clone();
    witness.push(opening.blinding);
    key_registration_statement(gens, commitment, pk, n).prove(&witness, rng)
}

pub fn verify_key_registration<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    commitment: &G,
    pk: &G,
    message_count: usize,
    proof: &Proof<G>,
) -> bool {
    message_count >= 1
        && message_count <= gens.count()
        && key_registration_statement(gens, commitment, pk, message_count).verify(proof)
}

/// Knowledge of an opening of `com`.
pub fn opening_statement<G: CyclicGroup>(gens: &GeneratorSet<G>, com: &G, message_count: usize) -> LinearStatement<G> {
    let mut terms: Vec<(G, usize)> = gens.messages[..message_count].iter().copied().zip(0..).collect();
    terms.push((gens.blinding, message_count));
    LinearStatement::new(StatementTag::Opening, message_count + 1).relation(*com, terms)
}

pub fn prove_opening<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    com: &G,
    opening: &Opening<G>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    let n = opening.messages.len();
    if n > gens.count() {
        return Err(NizkError::WitnessMismatch);
    }
    let mut witness = opening.messages.clone();
    witness.push(opening.blinding);
    opening_statement(gens, com, n).prove(&witness, rng)
}

pub fn verify_opening_proof<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    com: &G,
    message_count: usize,
    proof: &Proof<G>,
) -> bool {
    message_count <= gens.count() && opening_statement(gens, com, message_count).verify(proof)
}

/// Public inputs of the proof tying a coin to a voucher.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoucherStatement<G: CyclicGroup> {
    pub c1: G,
    pub c2: G,
    pub q: G,
    pub x: G,
    pub y: G,
    pub cid: G::Scalar,
    pub r_c: G::Scalar,
}

/// `(k1, β1)` opens C1, `(k2, β2)` opens C2, `(sk_A, δ)` opens Q.
#[derive(Clone, Copy, Debug)]
pub struct VoucherWitness<F> {
    pub k1: F,
    pub beta1: F,
    pub k2: F,
    pub beta2: F,
    pub sk_a: F,
    pub delta: F,
}

impl<G: CyclicGroup> VoucherStatement<G> {
    /// Witness order: k1, β1, k2, β2, sk_A, δ, μ = sk_A·k2, ν = sk_A·β2.
    pub fn linear(&self, gens: &GeneratorSet<G>) -> LinearStatement<G> {
        let (g, g1, h) = (G::generator(), gens.messages[0], gens.blinding);
        LinearStatement::new(StatementTag::Voucher, 8)
            .bind(&scalar_to_bytes(&self.cid))
            .bind(&scalar_to_bytes(&self.r_c))
            .relation(self.c1, vec![(g1, 0), (h, 1)])
            .relation(self.c2, vec![(g1, 2), (h, 3)])
            .relation(self.q, vec![(g1, 4), (h, 5)])
            .relation(g.div(&self.x.exp(&one_plus::<G>(&self.cid))), vec![(self.x, 0)])
            .relation(
                g.exp(&self.r_c).div(&self.y),
                vec![(self.y, 2), (g.inverse(), 4), (g.inverse(), 6)],
            )
            .relation(G::identity(), vec![(self.c2, 4), (g1.inverse(), 6), (h.inverse(), 7)])
    }
}

impl<F: ff::PrimeField> VoucherWitness<F> {
    /// The full witness vector in the order of the linear statement.
    pub fn vector(&self) -> Vec<F> {
        vec![
            self.k1,
            self.beta1,
            self.k2,
            self.beta2,
            self.sk_a,
            self.delta,
            self.sk_a * self.k2,
            self.sk_a * self.beta2,
        ]
    }
}

pub fn prove_voucher<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    st: &VoucherStatement<G>,
    wit: &VoucherWitness<G::Scalar>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    st.linear(gens).prove(&wit.vector(), rng)
}

pub fn verify_voucher<G: CyclicGroup>(gens: &GeneratorSet<G>, st: &VoucherStatement<G>, proof: &Proof<G>) -> bool {
    st.linear(gens).verify(proof)
}

/// Public inputs of the compact-variant voucher proof, where the PRFs are
/// evaluated at the hidden counter committed in `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompactVoucherStatement<G: CyclicGroup> {
    pub c1: G,
    pub c2: G,
    pub q: G,
    pub j: G,
    pub x: G,
    pub y: G,
    pub r_c: G::Scalar,
}

#[derive(Clone, Copy, Debug)]
pub struct CompactVoucherWitness<F> {
    pub keys: VoucherWitness<F>,
    pub ctr: F,
    pub beta4: F,
}

impl<G: CyclicGroup> CompactVoucherStatement<G> {
    /// Witness order: k1, β1, k2, β2, sk_A, δ, ctr, β4,
    /// μ = sk_A·(k2 + ctr), ν = sk_A·(β2 + β4).
    pub fn linear(&self, gens: &GeneratorSet<G>) -> LinearStatement<G> {
        let (g, g1, h) = (G::generator(), gens.messages[0], gens.blinding);
        LinearStatement::new(StatementTag::CompactVoucher, 10)
            .bind(&scalar_to_bytes(&self.r_c))
            .relation(self.c1, vec![(g1, 0), (h, 1)])
            .relation(self.c2, vec![(g1, 2), (h, 3)])
            .relation(self.q, vec![(g1, 4), (h, 5)])
            .relation(self.j, vec![(g1, 6), (h, 7)])
            .relation(g.div(&self.x), vec![(self.x, 0), (self.x, 6)])
            .relation(
                g.exp(&self.r_c).div(&self.y),
                vec![(self.y, 2), (self.y, 6), (g.inverse(), 4), (g.inverse(), 8)],
            )
            .relation(
                G::identity(),
                vec![(self.c2.mul(&self.j), 4), (g1.inverse(), 8), (h.inverse(), 9)],
            )
    }
}

impl<F: ff::PrimeField> CompactVoucherWitness<F> {
    /// The full witness vector in the order of the linear statement.
    pub fn vector(&self) -> Vec<F> {
        let k = &self.keys;
        vec![
            k.k1,
            k.beta1,
            k.k2,
            k.beta2,
            k.sk_a,
            k.delta,
            self.ctr,
            self.beta4,
            k.sk_a * (k.k2 + self.ctr),
            k.sk_a * (k.beta2 + self.beta4),
        ]
    }
}

pub fn prove_compact_voucher<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    st: &CompactVoucherStatement<G>,
    wit: &CompactVoucherWitness<G::Scalar>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    st.linear(gens).prove(&wit.vector(), rng)
}

pub fn verify_compact_voucher<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    st: &CompactVoucherStatement<G>,
    proof: &Proof<G>,
) -> bool {
    st.linear(gens).verify(proof)
}

/// Public inputs of the spend proof: `P` opens to `(sk_U, s)` and
/// `Z = g^{sk_U} · F_s(cid)^{r_t}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpendStatement<G: CyclicGroup> {
    pub p: G,
    pub z: G,
    pub cid: G::Scalar,
    pub r_t: G::Scalar,
}

#[derive(Clone, Copy, Debug)]
pub struct SpendWitness<F> {
    pub sk: F,
    pub s: F,
    pub beta: F,
}

impl<G: CyclicGroup> SpendStatement<G> {
    /// Witness order: sk, β, s, μ = sk·s, τ = s², ν = β·s.
    pub fn linear(&self, gens: &GeneratorSet<G>) -> LinearStatement<G> {
        let g = G::generator();
        let (g1, g2, h) = (gens.messages[0], gens.messages[1], gens.blinding);
        let shift = one_plus::<G>(&self.cid);
        LinearStatement::new(StatementTag::Spend, 6)
            .bind(&scalar_to_bytes(&self.cid))
            .bind(&scalar_to_bytes(&self.r_t))
            .relation(self.p, vec![(g1, 0), (g2, 2), (h, 1)])
            .relation(
                g.exp(&self.r_t).div(&self.z.exp(&shift)),
                vec![(self.z, 2), (g.exp(&shift).inverse(), 0), (g.inverse(), 3)],
            )
            .relation(
                G::identity(),
                vec![(self.p, 2), (g1.inverse(), 3), (g2.inverse(), 4), (h.inverse(), 5)],
            )
    }
}

impl<F: ff::PrimeField> SpendWitness<F> {
    /// The full witness vector in the order of the linear statement.
    pub fn vector(&self) -> Vec<F> {
        vec![self.sk, self.beta, self.s, self.sk * self.s, self.s * self.s, self.beta * self.s]
    }
}

pub fn prove_spend<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    st: &SpendStatement<G>,
    wit: &SpendWitness<G::Scalar>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    st.linear(gens).prove(&wit.vector(), rng)
}

pub fn verify_spend<G: CyclicGroup>(gens: &GeneratorSet<G>, st: &SpendStatement<G>, proof: &Proof<G>) -> bool {
    st.linear(gens).verify(proof)
}
