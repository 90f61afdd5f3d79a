//! Range proof for a committed counter: `J = g_1^{ctr} h^β` with
//! `ctr ∈ [1, n]`.
//!
//! `ctr - 1` is decomposed into `k = ⌈log2 n⌉` bits, each committed as
//! `D_i = g_1^{b_i} h^{ρ_i}` and shown to be a bit with an OR-proof. A Schnorr
//! proof on `h` shows `(J/g_1) / Π D_i^{2^i}` carries no `g_1` component.
//! When `n` is not a power of two the same is done for `n - ctr` against
//! `g_1^n / J`, which caps the counter at `n`. All sub-proofs share one
//! challenge.
//!
//! Per decomposition the proof carries `3k + 1` commitments
//! (`D_0..D_{k-1}`, then `T0_i, T1_i` pairs, then `T_lin`) and `3k + 1`
//! responses (`c0_i, s0_i, s1_i` triples, then `s_lin`).

use ff::{Field, PrimeField};
use rand_core::{CryptoRng, RngCore};

use super::{transcript_bytes, NizkError, Proof, Relation, StatementTag};
use crate::group::{CyclicGroup, GeneratorSet};

/// `⌈log2 n⌉` for `n ≥ 1`.
pub fn range_bit_count(n: u64) -> usize {
    if n <= 1 {
        0
    } else {
        (64 - (n - 1).leading_zeros()) as usize
    }
}

fn decomposition_count(n: u64) -> usize {
    if n.is_power_of_two() {
        1
    } else {
        2
    }
}

fn pow2<F: PrimeField>(i: usize) -> F {
    F::from(1u64 << i)
}

fn targets<G: CyclicGroup>(gens: &GeneratorSet<G>, j: &G, n: u64) -> Vec<G> {
    let g1 = gens.messages[0];
    let mut out = vec![j.div(&g1)];
    if decomposition_count(n) == 2 {
        out.push(g1.exp(&G::Scalar::from(n)).div(j));
    }
    out
}

fn challenge<G: CyclicGroup>(gens: &GeneratorSet<G>, j: &G, n: u64, commitments: &[G]) -> G::Scalar {
    let mut ctx = n.to_be_bytes().to_vec();
    ctx.extend(gens.messages[0].to_bytes());
    ctx.extend(gens.blinding.to_bytes());
    let rel = [Relation { image: *j, terms: Vec::new() }];
    G::hash_to_scalar(
        b"atmcash/nizk/range",
        &transcript_bytes(StatementTag::Range, &ctx, &rel, commitments),
    )
}

struct BitState<F> {
    bit: bool,
    rho: F,
    nonce: F,
    sim_c: F,
    sim_s: F,
}

struct Decomposition<G: CyclicGroup> {
    bits: Vec<BitState<G::Scalar>>,
    residual: G::Scalar,
    lin_nonce: G::Scalar,
}

/// Interactive prover: [`RangeProver::commit`] then [`RangeProver::respond`].
pub struct RangeProver<G: CyclicGroup> {
    gens: GeneratorSet<G>,
    j: G,
    n: u64,
    decomps: Vec<Decomposition<G>>,
    commitments: Vec<G>,
}

impl<G: CyclicGroup> RangeProver<G> {
    pub fn commit(
        gens: &GeneratorSet<G>,
        j: &G,
        ctr: u64,
        beta: &G::Scalar,
        n: u64,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Result<Self, NizkError> {
        if n == 0 || ctr == 0 || ctr > n {
            return Err(NizkError::OutOfRange { ctr, n });
        }
        let g1 = gens.messages[0];
        if g1.exp(&G::Scalar::from(ctr)).mul(&gens.blinding.exp(beta)) != *j {
            return Err(NizkError::WitnessMismatch);
        }
        let mut parts = vec![(ctr - 1, *beta)];
        if decomposition_count(n) == 2 {
            parts.push((n - ctr, -*beta));
        }
        Ok(Self::commit_parts(gens, j, n, &parts, range_bit_count(n), rng))
    }

    fn commit_parts(
        gens: &GeneratorSet<G>,
        j: &G,
        n: u64,
        parts: &[(u64, G::Scalar)],
        k: usize,
        rng: &mut (impl RngCore + CryptoRng),
    ) -> Self {
        let (g1, h) = (gens.messages[0], gens.blinding);
        let mut commitments = Vec::new();
        let mut decomps = Vec::new();
        for (value, blinding) in parts {
            let mut residual = *blinding;
            let mut ds = Vec::with_capacity(k);
            let mut pairs = Vec::with_capacity(2 * k);
            let mut bits = Vec::with_capacity(k);
            for i in 0..k {
                let bit = (value >> i) & 1 == 1;
                let rho = G::Scalar::random(&mut *rng);
                residual -= rho * pow2::<G::Scalar>(i);
                let d = if bit { g1.mul(&h.exp(&rho)) } else { h.exp(&rho) };
                let st = BitState {
                    bit,
                    rho,
                    nonce: G::Scalar::random(&mut *rng),
                    sim_c: G::Scalar::random(&mut *rng),
                    sim_s: G::Scalar::random(&mut *rng),
                };
                let real = h.exp(&st.nonce);
                // The other branch is simulated: T = h^s / image^c.
                let other_image = if bit { d } else { d.div(&g1) };
                let sim = h.exp(&st.sim_s).div(&other_image.exp(&st.sim_c));
                let (t0, t1) = if bit { (sim, real) } else { (real, sim) };
                ds.push(d);
                pairs.push(t0);
                pairs.push(t1);
                bits.push(st);
            }
            let lin_nonce = G::Scalar::random(&mut *rng);
            commitments.extend(ds);
            commitments.extend(pairs);
            commitments.push(h.exp(&lin_nonce));
            decomps.push(Decomposition { bits, residual, lin_nonce });
        }
        RangeProver { gens: gens.clone(), j: *j, n, decomps, commitments }
    }

    pub fn commitments(&self) -> &[G] {
        &self.commitments
    }

    pub fn respond(&self, c: &G::Scalar) -> Vec<G::Scalar> {
        let mut out = Vec::new();
        for d in &self.decomps {
            for b in &d.bits {
                let real_c = *c - b.sim_c;
                let real_s = b.nonce + real_c * b.rho;
                if b.bit {
                    out.extend([b.sim_c, b.sim_s, real_s]);
                } else {
                    out.extend([real_c, real_s, b.sim_s]);
                }
            }
            out.push(d.lin_nonce + *c * d.residual);
        }
        out
    }

    pub fn finish(self) -> Proof<G> {
        let c = challenge(&self.gens, &self.j, self.n, &self.commitments);
        let responses = self.respond(&c);
        Proof { tag: StatementTag::Range, commitments: self.commitments, challenge: c, responses }
    }
}

/// Verifier equations for a given challenge, without the Fiat-Shamir step.
pub fn range_check<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    j: &G,
    n: u64,
    commitments: &[G],
    c: &G::Scalar,
    responses: &[G::Scalar],
) -> bool {
    if n == 0 {
        return false;
    }
    let k = range_bit_count(n);
    let per = 3 * k + 1;
    let targets = targets(gens, j, n);
    if commitments.len() != per * targets.len() || responses.len() != per * targets.len() {
        return false;
    }
    let (g1, h) = (gens.messages[0], gens.blinding);
    targets.iter().enumerate().all(|(di, target)| {
        let cm = &commitments[di * per..(di + 1) * per];
        let rs = &responses[di * per..(di + 1) * per];
        let ds = &cm[..k];
        let bits_ok = (0..k).all(|i| {
            let (t0, t1) = (cm[k + 2 * i], cm[k + 2 * i + 1]);
            let (c0, s0, s1) = (rs[3 * i], rs[3 * i + 1], rs[3 * i + 2]);
            let c1 = *c - c0;
            h.exp(&s0) == t0.mul(&ds[i].exp(&c0)) && h.exp(&s1) == t1.mul(&ds[i].div(&g1).exp(&c1))
        });
        let weights: Vec<G::Scalar> = (0..k).map(pow2).collect();
        let residual = target.div(&G::product(ds, &weights));
        bits_ok && h.exp(&rs[3 * k]) == cm[3 * k].mul(&residual.exp(c))
    })
}

pub fn prove_range<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    j: &G,
    ctr: u64,
    beta: &G::Scalar,
    n: u64,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<Proof<G>, NizkError> {
    Ok(RangeProver::commit(gens, j, ctr, beta, n, rng)?.finish())
}

pub fn verify_range<G: CyclicGroup>(gens: &GeneratorSet<G>, j: &G, n: u64, proof: &Proof<G>) -> bool {
    proof.tag == StatementTag::Range
        && challenge(gens, j, n, &proof.commitments) == proof.challenge
        && range_check(gens, j, n, &proof.commitments, &proof.challenge, &proof.responses)
}

/// Adversarial prover for a counter outside `[1, n]`: runs the honest
/// prover on the out-of-range values and keeps only the bits that fit.
/// Its proofs must never verify.
pub fn forge_truncated<G: CyclicGroup>(
    gens: &GeneratorSet<G>,
    j: &G,
    ctr: u64,
    beta: &G::Scalar,
    n: u64,
    rng: &mut (impl RngCore + CryptoRng),
) -> Proof<G> {
    let mut parts = vec![(ctr.wrapping_sub(1), *beta)];
    if decomposition_count(n) == 2 {
        parts.push((n.wrapping_sub(ctr), -*beta));
    }
    RangeProver::commit_parts(gens, j, n, &parts, range_bit_count(n), rng).finish()
}
