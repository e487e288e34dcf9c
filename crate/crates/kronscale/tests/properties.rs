//! Randomized invariants. Instances are drawn from a proptest seed through
//! the crate RNG so that failures shrink to a reproducible seed.

mod common;

use std::collections::HashMap;

use proptest::prelude::*;

use common::{expand, kpath_instance, longcycle_instance, poly_add, random_assignment, threedm_instance};
use kronscale::algebra::{FieldSpec, Matrix, Rng};
use kronscale::circuit::{baur_strassen, homogenize, Builder, Circuit, Name};
use kronscale::coeffx::{extract_coeff_direct, extract_coeff_tripartition, random_skew_circuit, Method, TriOptions};
use kronscale::counting::{eval_on_matrix, permanent_ryser, permanent_via_extraction};
use kronscale::matchcon::{basis_matchings, build_h, is_single_cycle, perfect_matchings};
use kronscale::scaling::TrivialProvider;
use kronscale::sieving::{
    kpath_bruteforce, kpath_detect, longcycle_bruteforce, longcycle_detect, threedm_bruteforce, threedm_detect, SieveOptions,
};
use kronscale::steinitz::{concentration_partition, steinitz_permutation, VectorFamily};
use kronscale::tensor::{generate_p, generate_p_std, kronecker, Tensor};

const P: FieldSpec = FieldSpec::Prime(1_000_000_007);

fn fields() -> impl Strategy<Value = FieldSpec> {
    prop_oneof![
        Just(FieldSpec::Prime(2)),
        Just(FieldSpec::Prime(101)),
        Just(FieldSpec::Prime(1_000_000_007)),
        Just(FieldSpec::Prime(18_446_744_073_709_551_557)),
        Just(FieldSpec::Gf2(1)),
        Just(FieldSpec::Gf2(8)),
        Just(FieldSpec::Gf2(32)),
        Just(FieldSpec::Gf2(63)),
    ]
}

fn relabel(m: u64, perm: &[u32]) -> u64 {
    (0..64).filter(|i| m >> i & 1 == 1).fold(0, |acc, i| acc | 1 << perm[i as usize])
}

fn permute_tensor(t: &Tensor, perm: &[u32]) -> Tensor {
    let mut out = Tensor::zero(t.field, relabel(t.ground, perm));
    for (&(a, b, c), &v) in &t.entries {
        out.entries.insert((relabel(a, perm), relabel(b, perm), relabel(c, perm)), v);
    }
    out
}

fn random_tensor(f: FieldSpec, ground: &[u32], rng: &mut Rng) -> Tensor {
    let g: u64 = ground.iter().map(|&i| 1u64 << i).sum();
    let mut t = Tensor::zero(f, g);
    for _ in 0..rng.range(1, 4) {
        let mut pick = || ground.iter().filter(|_| rng.coin(0.5)).map(|&i| 1u64 << i).sum::<u64>();
        let key = (pick(), pick(), pick());
        t.entries.insert(key, f.random(rng, true));
    }
    t
}

fn lookup(vals: &HashMap<Name, u64>) -> impl FnMut(&Name) -> Option<u64> + '_ {
    |n| vals.get(n).copied()
}

/// Circuit computing the sum of the single outputs of `c1` and `c2`, inputs shared by name.
fn sum_circuit(c1: &Circuit, c2: &Circuit) -> Circuit {
    let mut b = Builder::new(c1.field);
    let m1 = b.import(c1, |n, b| b.input(n.clone()));
    let m2 = b.import(c2, |n, b| b.input(n.clone()));
    let s = b.add(vec![m1[c1.outputs[0]], m2[c2.outputs[0]]]);
    b.finish(vec![s])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_laws(f in fields(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (a, b, c) = (f.from_u64(a), f.from_u64(b), f.from_u64(c));
        prop_assert!(f.is_canonical(a) && f.is_canonical(b));
        prop_assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
        prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
        prop_assert_eq!(f.sub(f.add(a, b), b), a);
        if a != 0 {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        } else {
            prop_assert!(f.inv(a).is_err());
        }
        if f.characteristic() == 2 {
            let sq = |x| f.mul(x, x);
            prop_assert_eq!(sq(f.add(a, b)), f.add(sq(a), sq(b)));
        }
    }

    #[test]
    fn circuit_text_round_trip(seed in any::<u64>(), n in 1usize..6, overshoot in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let c = random_skew_circuit(P, n, 2, 2, overshoot, &mut rng);
        let back = Circuit::from_text(&c.to_text()).unwrap();
        let vals = random_assignment(&c, &mut rng);
        prop_assert_eq!(back.evaluate(&vals).unwrap(), c.evaluate(&vals).unwrap());
        prop_assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn evaluation_matches_expansion(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = Rng::new(seed);
        let c = random_skew_circuit(P, n, 1, 2, false, &mut rng);
        let poly = &expand(&c, 1 << 14)[0];
        let vals = random_assignment(&c, &mut rng);
        let want = poly.iter().fold(0, |acc, (m, &v)| {
            let t = m.iter().fold(v, |t, (nm, e)| P.mul(t, P.pow(vals[nm], *e as u128)));
            P.add(acc, t)
        });
        prop_assert_eq!(c.evaluate(&vals).unwrap()[0], want);
    }

    #[test]
    fn homogenized_components_scale(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = Rng::new(seed);
        let c = random_skew_circuit(P, n, 1, 2, true, &mut rng);
        let is_x = |nm: &Name| nm.slot() == Some('x');
        let d = *c.degrees_in(&is_x).iter().max().unwrap();
        let h = homogenize(&c, d, &is_x).unwrap();
        let vals = random_assignment(&c, &mut rng);
        let t = P.random(&mut rng, true);
        let scaled: HashMap<Name, u64> = vals.iter().map(|(nm, &v)| (nm.clone(), if is_x(nm) { P.mul(t, v) } else { v })).collect();
        let a = h.circuit.eval_gates(lookup(&vals)).unwrap();
        let b = h.circuit.eval_gates(lookup(&scaled)).unwrap();
        for comps in &h.comp {
            for (k, g) in comps.iter().enumerate() {
                if let Some(g) = *g {
                    prop_assert_eq!(b[g], P.mul(P.pow(t, k as u128), a[g]));
                }
            }
        }
    }

    #[test]
    fn gradient_is_linear(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let xs: Vec<Name> = (0..4).map(Name::xi).collect();
        let c1 = random_skew_circuit(P, 4, 1, 2, false, &mut rng);
        let c2 = random_skew_circuit(P, 4, 1, 2, true, &mut rng);
        let g1 = baur_strassen(&c1, &xs).unwrap();
        let g2 = baur_strassen(&c2, &xs).unwrap();
        let gs = baur_strassen(&sum_circuit(&c1, &c2), &xs).unwrap();
        prop_assert_eq!(gs.outputs.len(), xs.len());
        let (e1, e2, es) = (expand(&g1, 1 << 14), expand(&g2, 1 << 14), expand(&gs, 1 << 14));
        for i in 0..xs.len() {
            prop_assert_eq!(&es[i], &poly_add(P, &e1[i], &e2[i]));
        }
    }

    #[test]
    fn p_tensor_symmetric_under_relabeling(seed in any::<u64>(), q in 1usize..4) {
        let mut rng = Rng::new(seed);
        let t = generate_p_std(P, q).unwrap();
        let mut perm: Vec<u32> = (0..3 * q as u32).collect();
        rng.shuffle(&mut perm);
        prop_assert_eq!(permute_tensor(&t, &perm), t.clone());
        for &(a, b, c) in t.entries.keys() {
            prop_assert!(a & b == 0 && a & c == 0 && b & c == 0);
            prop_assert_eq!([a.count_ones(), b.count_ones(), c.count_ones()], [q as u32; 3]);
        }
    }

    #[test]
    fn kronecker_associative(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = random_tensor(P, &[0, 1], &mut rng);
        let b = random_tensor(P, &[2, 3], &mut rng);
        let c = random_tensor(P, &[4, 5, 6], &mut rng);
        let left = kronecker(&kronecker(&a, &b).unwrap(), &c).unwrap();
        let right = kronecker(&a, &kronecker(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn p_tensor_on_any_ground(q in 1usize..3, offset in 0u32..40) {
        let ground: Vec<u32> = (0..3 * q as u32).map(|i| 2 * i + offset % 7).collect();
        let t = generate_p(P, q, &ground).unwrap();
        prop_assert_eq!(t.nnz(), generate_p_std(P, q).unwrap().nnz());
    }

    #[test]
    fn steinitz_order_is_a_bijection(seed in any::<u64>(), dim in 1usize..3, r in 1usize..12) {
        let mut rng = Rng::new(seed);
        let denom = 4;
        let vs: Vec<Vec<i64>> = (0..r).map(|_| (0..dim).map(|_| rng.range(0, 8) as i64 - 4).collect()).collect();
        let f = VectorFamily::from_integers(dim, denom, vs).unwrap();
        let sp = steinitz_permutation(&f).unwrap();
        let mut seen = sp.perm.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..r).collect::<Vec<_>>());
        prop_assert_eq!(steinitz_permutation(&f).unwrap().perm, sp.perm);
    }

    #[test]
    fn concentration_within_guarantee(seed in any::<u64>(), dim in 1usize..3, g in 1usize..4, parts in 1usize..4) {
        let mut rng = Rng::new(seed);
        let r = g * parts;
        let vs: Vec<Vec<i64>> = (0..r).map(|_| (0..dim).map(|_| rng.range(0, 6) as i64 - 3).collect()).collect();
        let f = VectorFamily::from_integers(dim, 3, vs).unwrap();
        let sizes = vec![g; parts];
        let cp = concentration_partition(&f, &sizes).unwrap();
        prop_assert!(cp.within_guarantee(dim));
        let mut all: Vec<usize> = cp.groups.concat();
        all.sort();
        prop_assert_eq!(all, (0..r).collect::<Vec<_>>());
        prop_assert_eq!(concentration_partition(&f, &sizes).unwrap().groups, cp.groups);
    }

    #[test]
    fn extraction_methods_agree(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = Rng::new(seed);
        let xs: Vec<Name> = (0..n).map(Name::xi).collect();
        let c = random_skew_circuit(P, n, 2, 2, seed % 2 == 0, &mut rng);
        let d = extract_coeff_direct(&c, &xs).unwrap();
        let t = extract_coeff_tripartition(&c, &xs, TriOptions::default(), &TrivialProvider).unwrap();
        for _ in 0..3 {
            let vals = random_assignment(&c, &mut rng);
            prop_assert_eq!(d.circuit.eval_with(lookup(&vals)).unwrap(), t.circuit.eval_with(lookup(&vals)).unwrap());
        }
    }

    #[test]
    fn permanent_invariant_under_permutations(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = Rng::new(seed);
        let (c, _) = permanent_via_extraction(P, n, Method::Direct, TriOptions::default(), &TrivialProvider).unwrap();
        let a = Matrix::random(P, n, n, &mut rng);
        let (mut rows, mut cols): (Vec<usize>, Vec<usize>) = ((0..n).collect(), (0..n).collect());
        rng.shuffle(&mut rows);
        rng.shuffle(&mut cols);
        let b = Matrix::from_rows((0..n).map(|i| (0..n).map(|j| a.get(rows[i], cols[j])).collect()).collect());
        let v = eval_on_matrix(&c, &a).unwrap();
        prop_assert_eq!(v, permanent_ryser(P, &a).unwrap());
        prop_assert_eq!(eval_on_matrix(&c, &b).unwrap(), v);
    }

    #[test]
    fn single_cycle_ignores_part_order(k in 1usize..4, i in any::<usize>(), j in any::<usize>(), l in any::<usize>()) {
        let x: Vec<u8> = (0..2 * k as u8).collect();
        let pms = perfect_matchings(&x);
        let (a, b, c) = (&pms[i % pms.len()], &pms[j % pms.len()], &pms[l % pms.len()]);
        let base = is_single_cycle(&[a, b]);
        prop_assert_eq!(is_single_cycle(&[b, a]), base);
        let three = is_single_cycle(&[a, b, c]);
        prop_assert_eq!(is_single_cycle(&[c, a, b]), three);
        prop_assert_eq!(is_single_cycle(&[b, c, a]), three);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sieve_detectors_agree_with_bruteforce(seed in any::<u64>(), plant in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let opts = SieveOptions::default();

        let (g, k) = kpath_instance(&mut rng, plant);
        let truth = kpath_bruteforce(&g, k);
        let got = kpath_detect(&g, k, &mut rng, &opts).unwrap().found;
        prop_assert!(!got || truth, "k-path false positive");
        prop_assert_eq!(got, truth);

        let (t, k) = threedm_instance(&mut rng, plant);
        let truth = threedm_bruteforce(&t, k);
        let got = threedm_detect(&t, k, &mut rng, &opts).unwrap().found;
        prop_assert!(!got || truth, "3DM false positive");
        prop_assert_eq!(got, truth);

        let (g, k) = longcycle_instance(&mut rng, plant);
        let truth = longcycle_bruteforce(&g, k);
        let got = longcycle_detect(&g, k, &mut rng, &opts).unwrap().found;
        prop_assert!(!got || truth, "long cycle false positive");
        prop_assert_eq!(got, truth);
    }
}

#[test]
fn basis_counts_and_distinctness() {
    for k in (2usize..=10).step_by(2) {
        let x: Vec<u8> = (0..k as u8).collect();
        let ms = basis_matchings(&x).unwrap();
        let want = 1usize << (k / 2).saturating_sub(1);
        assert_eq!(ms.len(), want, "|X| = {k}");
        let mut sorted = ms.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ms.len(), "duplicate basis matchings for |X| = {k}");
    }
    assert!(basis_matchings(&[0, 1, 2]).is_err());
}

#[test]
fn h_tensor_symmetric_in_first_two_slots() {
    for q in [2, 4] {
        let h = build_h(q).unwrap();
        for a in &h.fps {
            for b in &h.fps {
                for c in &h.fps {
                    assert_eq!(h.get(a, b, c), h.get(b, a, c), "q = {q}: ({a},{b},{c})");
                }
            }
        }
    }
}
