use super::*;
use crate::group::toy::{ToyElement, ToyScalar};
use crate::group::{derive_generators, GeneratorSet, GroupElement, Scalar};
use crate::primitives::{commit, dy_prf, Opening, PrfKey};
use ff::Field;
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

type T = ToyElement;
type F = ToyScalar;

fn gens<G: CyclicGroup>() -> GeneratorSet<G> {
    derive_generators(b"nizk-test", 2)
}

struct VoucherFixture<G: CyclicGroup> {
    st: VoucherStatement<G>,
    wit: VoucherWitness<G::Scalar>,
}

fn voucher_fixture<G: CyclicGroup>(rng: &mut ChaCha20Rng) -> VoucherFixture<G> {
    let gens = gens::<G>();
    let r = |rng: &mut ChaCha20Rng| G::Scalar::random(rng);
    let wit = VoucherWitness {
        k1: r(rng),
        beta1: r(rng),
        k2: r(rng),
        beta2: r(rng),
        sk_a: r(rng),
        delta: r(rng),
    };
    let r_c = r(rng);
    let cid = r_c + G::Scalar::ONE;
    let c = |m: G::Scalar, b: G::Scalar| commit(&[m], &b, &gens).unwrap().0;
    let pk_a = G::generator().exp(&wit.sk_a);
    let st = VoucherStatement {
        c1: c(wit.k1, wit.beta1),
        c2: c(wit.k2, wit.beta2),
        q: c(wit.sk_a, wit.delta),
        x: dy_prf::<G>(&PrfKey(wit.k1), &cid).unwrap(),
        y: pk_a.mul(&dy_prf::<G>(&PrfKey(wit.k2), &G::Scalar::ZERO).unwrap().exp(&r_c)),
        cid,
        r_c,
    };
    VoucherFixture { st, wit }
}

struct CompactFixture<G: CyclicGroup> {
    st: CompactVoucherStatement<G>,
    wit: CompactVoucherWitness<G::Scalar>,
}

fn compact_fixture<G: CyclicGroup>(rng: &mut ChaCha20Rng, ctr: u64) -> CompactFixture<G> {
    let gens = gens::<G>();
    let base = voucher_fixture::<G>(rng);
    let beta4 = G::Scalar::random(&mut *rng);
    let ctr_s = G::Scalar::from(ctr);
    let k = base.wit;
    let r_c = base.st.r_c;
    let pk_a = G::generator().exp(&k.sk_a);
    let st = CompactVoucherStatement {
        c1: base.st.c1,
        c2: base.st.c2,
        q: base.st.q,
        j: commit(&[ctr_s], &beta4, &gens).unwrap().0,
        x: dy_prf::<G>(&PrfKey(k.k1), &ctr_s).unwrap(),
        y: pk_a.mul(&dy_prf::<G>(&PrfKey(k.k2), &ctr_s).unwrap().exp(&r_c)),
        r_c,
    };
    CompactFixture { st, wit: CompactVoucherWitness { keys: k, ctr: ctr_s, beta4 } }
}

struct SpendFixture<G: CyclicGroup> {
    st: SpendStatement<G>,
    wit: SpendWitness<G::Scalar>,
}

fn spend_fixture<G: CyclicGroup>(rng: &mut ChaCha20Rng) -> SpendFixture<G> {
    let gens = gens::<G>();
    let wit = SpendWitness {
        sk: G::Scalar::random(&mut *rng),
        s: G::Scalar::random(&mut *rng),
        beta: G::Scalar::random(&mut *rng),
    };
    let cid = G::Scalar::random(&mut *rng);
    let r_t = G::Scalar::random(&mut *rng);
    let z = G::generator()
        .exp(&wit.sk)
        .mul(&dy_prf::<G>(&PrfKey(wit.s), &cid).unwrap().exp(&r_t));
    let p = commit(&[wit.sk, wit.s], &wit.beta, &gens).unwrap().0;
    SpendFixture { st: SpendStatement { p, z, cid, r_t }, wit }
}

#[test]
fn completeness_toy_families() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let o = Opening::<T>::random(vec![F::random(&mut rng), F::random(&mut rng)], &mut rng);
        let p = o.commit(&g).unwrap().0;
        let pk = T::generator().exp(&o.messages[0]);
        let proof = prove_key_registration(&g, &p, &pk, &o, &mut rng).unwrap();
        assert!(verify_key_registration(&g, &p, &pk, 2, &proof));

        let v = voucher_fixture::<T>(&mut rng);
        let proof = prove_voucher(&g, &v.st, &v.wit, &mut rng).unwrap();
        assert!(verify_voucher(&g, &v.st, &proof));

        let s = spend_fixture::<T>(&mut rng);
        let proof = prove_spend(&g, &s.st, &s.wit, &mut rng).unwrap();
        assert!(verify_spend(&g, &s.st, &proof));

        let ctr = 1 + rand_core::RngCore::next_u64(&mut rng) % 16;
        let c = compact_fixture::<T>(&mut rng, ctr);
        let proof = prove_compact_voucher(&g, &c.st, &c.wit, &mut rng).unwrap();
        assert!(verify_compact_voucher(&g, &c.st, &proof));
    }
}

#[test]
fn completeness_main_group() {
    let g = gens::<GroupElement>();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..5 {
        let v = voucher_fixture::<GroupElement>(&mut rng);
        let proof = prove_voucher(&g, &v.st, &v.wit, &mut rng).unwrap();
        assert!(verify_voucher(&g, &v.st, &proof));
        let bytes = proof.to_bytes();
        assert_eq!(Proof::<GroupElement>::from_bytes(&bytes).unwrap(), proof);

        let s = spend_fixture::<GroupElement>(&mut rng);
        let proof = prove_spend(&g, &s.st, &s.wit, &mut rng).unwrap();
        assert!(verify_spend(&g, &s.st, &proof));

        let c = compact_fixture::<GroupElement>(&mut rng, 3);
        let proof = prove_compact_voucher(&g, &c.st, &c.wit, &mut rng).unwrap();
        assert!(verify_compact_voucher(&g, &c.st, &proof));
    }
}

#[test]
fn key_registration_rejects_wrong_pk_and_truncation() {
    let g = gens::<GroupElement>();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let o = Opening::<GroupElement>::random(vec![Scalar::random(&mut rng)], &mut rng);
    let p = o.commit(&g).unwrap().0;
    let pk = GroupElement::generator().exp(&o.messages[0]);
    let bad_pk = GroupElement::generator().exp(&(o.messages[0] + Scalar::ONE));
    assert_eq!(
        prove_key_registration(&g, &p, &bad_pk, &o, &mut rng),
        Err(NizkError::WitnessMismatch)
    );
    let proof = prove_key_registration(&g, &p, &pk, &o, &mut rng).unwrap();
    assert!(verify_key_registration(&g, &p, &pk, 1, &proof));
    assert!(!verify_key_registration(&g, &p, &bad_pk, 1, &proof));
    assert!(!verify_key_registration(&g, &p, &pk, 2, &proof));
    let bytes = proof.to_bytes();
    for cut in [0, 1, 5, bytes.len() - 1] {
        assert_eq!(
            Proof::<GroupElement>::from_bytes(&bytes[..cut]),
            Err(NizkError::MalformedProof)
        );
    }
}

#[test]
fn voucher_rejects_each_perturbed_input() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let v = voucher_fixture::<T>(&mut rng);
    let proof = prove_voucher(&g, &v.st, &v.wit, &mut rng).unwrap();
    let bump = |e: T| e.mul(&T::generator());
    let mut variants = Vec::new();
    for i in 0..7 {
        let mut st = v.st;
        match i {
            0 => st.c1 = bump(st.c1),
            1 => st.c2 = bump(st.c2),
            2 => st.q = bump(st.q),
            3 => st.x = bump(st.x),
            4 => st.y = bump(st.y),
            5 => st.cid += F::ONE,
            _ => st.r_c += F::ONE,
        }
        variants.push(st);
    }
    for st in variants {
        assert!(!verify_voucher(&g, &st, &proof));
    }
    let mut flipped = proof.clone();
    flipped.challenge += F::ONE;
    assert!(!verify_voucher(&g, &v.st, &flipped));
}

#[test]
fn voucher_with_wrong_cid_or_foreign_atm_key_fails() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let v = voucher_fixture::<T>(&mut rng);
    let mut shifted = v.st;
    shifted.x = dy_prf::<T>(&PrfKey(v.wit.k1), &(v.st.cid + F::ONE)).unwrap();
    assert_eq!(prove_voucher(&g, &shifted, &v.wit, &mut rng), Err(NizkError::WitnessMismatch));

    let other_key = F::random(&mut rng);
    let mut foreign = v.st;
    foreign.y = T::generator()
        .exp(&other_key)
        .mul(&dy_prf::<T>(&PrfKey(v.wit.k2), &F::ZERO).unwrap().exp(&v.st.r_c));
    assert_eq!(prove_voucher(&g, &foreign, &v.wit, &mut rng), Err(NizkError::WitnessMismatch));
    let honest = prove_voucher(&g, &v.st, &v.wit, &mut rng).unwrap();
    assert!(!verify_voucher(&g, &foreign, &honest));
}

#[test]
fn spend_rejects_foreign_key_and_wrong_rt() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let s = spend_fixture::<T>(&mut rng);
    let mut thief = s.wit;
    thief.sk = F::random(&mut rng);
    assert_eq!(prove_spend(&g, &s.st, &thief, &mut rng), Err(NizkError::WitnessMismatch));
    let proof = prove_spend(&g, &s.st, &s.wit, &mut rng).unwrap();
    let mut other = s.st;
    other.r_t += F::ONE;
    assert!(!verify_spend(&g, &other, &proof));
    let mut other = s.st;
    other.z = other.z.mul(&T::generator());
    assert!(!verify_spend(&g, &other, &proof));
}

#[test]
fn compact_voucher_binds_counter() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let c = compact_fixture::<T>(&mut rng, 4);
    let proof = prove_compact_voucher(&g, &c.st, &c.wit, &mut rng).unwrap();
    let other = compact_fixture::<T>(&mut rng, 4);
    let mut spliced = c.st;
    spliced.j = other.st.j;
    assert!(!verify_compact_voucher(&g, &spliced, &proof));
    let mut wrong = c.wit;
    wrong.ctr += F::ONE;
    assert_eq!(prove_compact_voucher(&g, &c.st, &wrong, &mut rng), Err(NizkError::WitnessMismatch));
}

fn range_setup<G: CyclicGroup>(ctr: u64, rng: &mut ChaCha20Rng) -> (GeneratorSet<G>, G, G::Scalar) {
    let g = gens::<G>();
    let beta = G::Scalar::random(&mut *rng);
    let j = commit(&[G::Scalar::from(ctr)], &beta, &g).unwrap().0;
    (g, j, beta)
}

#[test]
fn range_boundaries() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    assert_eq!(range_bit_count(1), 0);
    assert_eq!(range_bit_count(2), 1);
    assert_eq!(range_bit_count(8), 3);
    assert_eq!(range_bit_count(9), 4);
    for (ctr, n) in [(1, 8), (8, 8), (1, 1), (3, 5), (5, 5), (1, 5), (100, 100)] {
        let (g, j, beta) = range_setup::<GroupElement>(ctr, &mut rng);
        let proof = prove_range(&g, &j, ctr, &beta, n, &mut rng).unwrap();
        assert!(verify_range(&g, &j, n, &proof), "ctr={ctr} n={n}");
        let decoded = Proof::<GroupElement>::from_bytes(&proof.to_bytes()).unwrap();
        assert!(verify_range(&g, &j, n, &decoded));
    }
    let (g, j, beta) = range_setup::<GroupElement>(9, &mut rng);
    assert_eq!(
        prove_range(&g, &j, 9, &beta, 8, &mut rng),
        Err(NizkError::OutOfRange { ctr: 9, n: 8 })
    );
    assert_eq!(
        prove_range(&g, &j, 0, &beta, 8, &mut rng),
        Err(NizkError::OutOfRange { ctr: 0, n: 8 })
    );
}

#[test]
fn range_sweep_n16() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let n = 16;
    for ctr in 1..=32u64 {
        let (g, j, beta) = range_setup::<T>(ctr, &mut rng);
        if ctr <= n {
            let proof = prove_range(&g, &j, ctr, &beta, n, &mut rng).unwrap();
            assert!(verify_range(&g, &j, n, &proof));
        } else {
            assert!(prove_range(&g, &j, ctr, &beta, n, &mut rng).is_err());
            let forged = forge_truncated(&g, &j, ctr, &beta, n, &mut rng);
            assert!(!verify_range(&g, &j, n, &forged), "ctr={ctr}");
            let wide = prove_range(&g, &j, ctr, &beta, 32, &mut rng).unwrap();
            assert!(verify_range(&g, &j, 32, &wide));
            assert!(!verify_range(&g, &j, n, &wide));
        }
    }
    // Non power of two: the upper decomposition is what rejects 6..=8 for n = 5.
    for ctr in 6..=8u64 {
        let (g, j, beta) = range_setup::<T>(ctr, &mut rng);
        assert!(!verify_range(&g, &j, 5, &forge_truncated(&g, &j, ctr, &beta, 5, &mut rng)));
    }
}

#[test]
fn range_proof_is_bound_to_commitment() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let (g, j, beta) = range_setup::<T>(3, &mut rng);
    let proof = prove_range(&g, &j, 3, &beta, 16, &mut rng).unwrap();
    let (_, j2, _) = range_setup::<T>(3, &mut rng);
    assert!(!verify_range(&g, &j2, 16, &proof));
}

fn extraction_round<G: CyclicGroup>(st: &LinearStatement<G>, witness: &[G::Scalar], rng: &mut ChaCha20Rng) {
    let state = st.commit(rng);
    let c1 = G::Scalar::random(&mut *rng);
    let c2 = G::Scalar::random(&mut *rng);
    let s1 = st.respond(witness, &state, &c1);
    let s2 = st.respond(witness, &state, &c2);
    assert!(st.check(&state.commitments, &c1, &s1));
    assert!(st.check(&state.commitments, &c2, &s2));
    let w = extract(&c1, &s1, &c2, &s2).unwrap();
    assert!(st.holds(&w));
    assert_eq!(w, witness);
}

#[test]
fn extractor_recovers_witnesses() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..100 {
        let v = voucher_fixture::<T>(&mut rng);
        extraction_round(&v.st.linear(&g), &v.wit.vector(), &mut rng);
        let s = spend_fixture::<T>(&mut rng);
        extraction_round(&s.st.linear(&g), &s.wit.vector(), &mut rng);
        let c = compact_fixture::<T>(&mut rng, 7);
        extraction_round(&c.st.linear(&g), &c.wit.vector(), &mut rng);
    }
    assert_eq!(extract(&F::ONE, &[F::ONE], &F::ONE, &[F::ZERO]), Err(NizkError::EqualChallenges));
}

#[test]
fn range_extractor_recovers_counter() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for trial in 0..100u64 {
        let n = 16;
        let ctr = 1 + trial % n;
        let (g, j, beta) = range_setup::<T>(ctr, &mut rng);
        let prover = RangeProver::commit(&g, &j, ctr, &beta, n, &mut rng).unwrap();
        let (c, c2) = (F::random(&mut rng), F::random(&mut rng));
        let (r1, r2) = (prover.respond(&c), prover.respond(&c2));
        let cm = prover.commitments();
        assert!(range_check(&g, &j, n, cm, &c, &r1));
        assert!(range_check(&g, &j, n, cm, &c2, &r2));
        let k = range_bit_count(n);
        let mut value = 0u64;
        let mut rho_sum = F::ZERO;
        for i in 0..k {
            let (c0a, c0b) = (r1[3 * i], r2[3 * i]);
            let (bit, rho) = if c0a != c0b {
                (0, (r1[3 * i + 1] - r2[3 * i + 1]) * (c0a - c0b).invert().unwrap())
            } else {
                let (c1a, c1b) = (c - c0a, c2 - c0b);
                (1, (r1[3 * i + 2] - r2[3 * i + 2]) * (c1a - c1b).invert().unwrap())
            };
            value |= bit << i;
            rho_sum += rho * F::from(1u64 << i);
        }
        let lin = (r1[3 * k] - r2[3 * k]) * (c - c2).invert().unwrap();
        assert_eq!(value + 1, ctr);
        assert_eq!(lin + rho_sum, beta);
    }
}

#[test]
fn simulated_transcripts_verify_and_look_alike() {
    let g = gens::<T>();
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let v = voucher_fixture::<T>(&mut rng);
    let st = v.st.linear(&g);
    let mut honest_hist = [0u32; 16];
    let mut sim_hist = [0u32; 16];
    for _ in 0..4000 {
        let c = F::random(&mut rng);
        let (cm, rs) = st.simulate(&c, &mut rng);
        assert!(st.check(&cm, &c, &rs));
        sim_hist[(rs[0].to_u64() & 15) as usize] += 1;
        let state = st.commit(&mut rng);
        let rs = st.respond(&v.wit.vector(), &state, &c);
        honest_hist[(rs[0].to_u64() & 15) as usize] += 1;
    }
    // Both response distributions are uniform: chi-square with 15 d.o.f.
    for hist in [honest_hist, sim_hist] {
        let expected = 4000.0 / 16.0;
        let chi: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi < 37.7, "chi-square {chi}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statement_mutation_changes_challenge(seed in any::<u64>(), which in 0usize..7, delta in 1u64..1000) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = gens::<T>();
        let v = voucher_fixture::<T>(&mut rng);
        let st = v.st.linear(&g);
        let state = st.commit(&mut rng);
        let base = st.challenge(&state.commitments);
        let bump = T::generator().exp(&F::from(delta));
        let mut mutated = v.st;
        match which {
            0 => mutated.c1 = mutated.c1.mul(&bump),
            1 => mutated.c2 = mutated.c2.mul(&bump),
            2 => mutated.q = mutated.q.mul(&bump),
            3 => mutated.x = mutated.x.mul(&bump),
            4 => mutated.y = mutated.y.mul(&bump),
            5 => mutated.cid += F::from(delta),
            _ => mutated.r_c += F::from(delta),
        }
        prop_assert_ne!(mutated.linear(&g).challenge(&state.commitments), base);
    }

    #[test]
    fn proof_encoding_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = spend_fixture::<T>(&mut rng);
        let proof = prove_spend(&gens::<T>(), &s.st, &s.wit, &mut rng).unwrap();
        let bytes = proof.to_bytes();
        prop_assert_eq!(Proof::<T>::from_bytes(&bytes).unwrap(), proof);
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert_eq!(Proof::<T>::from_bytes(&longer), Err(NizkError::MalformedProof));
    }
}
