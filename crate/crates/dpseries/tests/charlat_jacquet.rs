mod common;

use std::collections::{HashMap, HashSet, VecDeque};

use common::*;
use dpseries::charlat::*;
use dpseries::jacquet::dps_exponents;
use dpseries::rootsys::{build_root_datum, LeviSpec, RootDatum};
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn pt(i: usize, s: Q, k: u32) -> DpsPoint {
    DpsPoint::new(i, s, k)
}

#[test]
fn rho_levi_examples() {
    let d = build_root_datum("E7").unwrap();
    assert_eq!(
        rho_levi(&d, LeviSpec::full(7)),
        CharacterX::from_ints(&[1; 7])
    );
    assert_eq!(rho_levi(&d, LeviSpec::empty()), CharacterX::zero(7));
    let r5 = rho_levi(&d, LeviSpec::maximal(7, 5).unwrap());
    assert_eq!(r5.re()[4], Q::from_integer(-4));
}

#[test]
fn leading_exponent_examples() {
    let d = build_root_datum("E7").unwrap();
    let l = |i, s, k| leading_exponent(&d, &pt(i, s, k)).unwrap();
    assert_eq!(
        l(5, Q::zero(), 1),
        CharacterX::from_ints(&[-1, -1, -1, -1, 4, -1, -1])
    );
    assert_eq!(
        l(2, q(-1, 1), 1),
        CharacterX::from_ints(&[-1, 5, -1, -1, -1, -1, -1])
    );
    assert_eq!(
        l(4, Q::zero(), 1),
        CharacterX::from_ints(&[-1, -1, -1, 3, -1, -1, -1])
    );
    let t = l(3, q(-1, 2), 3);
    assert_eq!(
        t.coord(2),
        (
            q(-1, 2) + Q::from_integer(d.rank() as i64 - 7) + q(0, 1)
                - rho_levi(&d, LeviSpec::maximal(7, 3).unwrap()).re()[2],
            q(1, 3)
        )
    );
    for j in [0, 1, 3, 4, 5, 6] {
        assert_eq!(t.coord(j), (q(-1, 1), Q::zero()));
    }
    assert!(leading_exponent(&d, &pt(8, Q::zero(), 1)).is_err());
    assert!(leading_exponent(&d, &pt(1, Q::zero(), 0)).is_err());
}

#[test]
fn pairing_examples() {
    let d = build_root_datum("E7").unwrap();
    let rho = CharacterX::from_ints(&[1; 7]);
    let top = d.positive_roots.len() - 1;
    assert_eq!(pairing(&d, &rho, top), (Q::from_integer(17), Q::zero()));
    // torsion 1/2 on ϖ_i and a coroot with m_i = 2 gives trivial torsion.
    let mut tors = vec![Q::zero(); 7];
    tors[0] = q(1, 2);
    let c = CharacterX::new(vec![Q::zero(); 7], tors).unwrap();
    assert_eq!(d.positive_roots[top][0], 2);
    assert_eq!(pairing(&d, &c, top).1, Q::zero());
    // simple roots of M pair to -1 with the leading exponent.
    let l0 = leading_exponent(&d, &pt(6, q(-3, 2), 2)).unwrap();
    for j in 0..7 {
        if j != 5 {
            let r = d
                .positive_roots
                .iter()
                .position(|b| b.iter().enumerate().all(|(i, &c)| c == (i == j) as i32))
                .unwrap();
            assert_eq!(pairing(&d, &l0, r), (q(-1, 1), Q::zero()));
        }
    }
}

#[test]
fn antidominant_examples() {
    let d = build_root_datum("E7").unwrap();
    let l0 = leading_exponent(&d, &pt(5, Q::zero(), 1)).unwrap();
    let ad = antidominant_with_stabilizer(&d, &l0).unwrap();
    assert_eq!(ad.lambda_ad, CharacterX::from_ints(&[0, 0, 0, -1, 0, 0, 0]));
    assert_eq!(ad.stab_order, 288);
    assert_eq!(weyl_act(&d, &ad.w, &l0).unwrap(), ad.lambda_ad);

    let l0 = leading_exponent(&d, &pt(2, q(-1, 1), 1)).unwrap();
    let ad = antidominant_with_stabilizer(&d, &l0).unwrap();
    assert_eq!(
        ad.lambda_ad,
        CharacterX::from_ints(&[-1, 0, 0, -1, 0, 0, -1])
    );
    assert_eq!(ad.stab_order, 24);
}

/// The full orbit by breadth-first search on characters.
fn orbit(d: &RootDatum, l: &CharacterX) -> HashSet<CharacterX> {
    let mut seen = HashSet::from([l.clone()]);
    let mut queue = VecDeque::from([l.clone()]);
    while let Some(c) = queue.pop_front() {
        for j in 0..d.rank() {
            let mut c2 = c.clone();
            c2.reflect(d, j);
            if seen.insert(c2.clone()) {
                queue.push_back(c2);
            }
        }
    }
    seen
}

fn is_antidominant(c: &CharacterX) -> bool {
    c.re().iter().all(|x| !x.is_positive())
}

#[test]
fn unique_antidominant_for_real_characters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for label in ["A3", "D4"] {
        let d = build_root_datum(label).unwrap();
        for _ in 0..25 {
            let c: Vec<i64> = (0..d.rank()).map(|_| rng.gen_range(-2..=2)).collect();
            let l = CharacterX::from_ints(&c);
            let orb = orbit(&d, &l);
            let ads: Vec<_> = orb.iter().filter(|c| is_antidominant(c)).collect();
            assert_eq!(ads.len(), 1);
            let ad = antidominant_with_stabilizer(&d, &l).unwrap();
            assert_eq!(&ad.lambda_ad, ads[0]);
            // orbit-stabilizer against the brute-force orbit.
            assert_eq!(ad.stab_order * orb.len() as u64, d.weyl_order());
        }
    }
}

#[test]
fn torsion_stabilizers_against_orbit() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d = build_root_datum("D4").unwrap();
    for _ in 0..40 {
        let re: Vec<Q> = (0..4)
            .map(|_| Q::from_integer(rng.gen_range(-1..=1)))
            .collect();
        let tors: Vec<Q> = (0..4).map(|_| q(rng.gen_range(0..4), 4)).collect();
        let l = CharacterX::new(re, tors).unwrap();
        let orb = orbit(&d, &l);
        let ad = antidominant_with_stabilizer(&d, &l).unwrap();
        assert_eq!(ad.stab_order * orb.len() as u64, d.weyl_order());
        assert!(orb.contains(&ad.lambda_ad));
        assert!(is_antidominant(&ad.lambda_ad));
        // least anti-dominant element of the orbit.
        let least = orb.iter().filter(|c| is_antidominant(c)).min().unwrap();
        assert_eq!(
            &ad.lambda_ad,
            least,
            "{} ads {:?}",
            l,
            orb.iter()
                .filter(|c| is_antidominant(c))
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
        );
        assert_eq!(
            weyl_act(&d, &ad.w, &l).unwrap(),
            ad.lambda_ad,
            "input {} w {}",
            l,
            ad.w.display_word()
        );
        for g in &ad.stab_gens {
            assert_eq!(weyl_act(&d, g, &ad.lambda_ad).unwrap(), ad.lambda_ad);
        }
        assert_eq!(d.weyl_order() % ad.stab_order, 0);
    }
}

#[test]
fn pairing_multiset_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = build_root_datum("E6").unwrap();
    for _ in 0..20 {
        let re: Vec<Q> = (0..6).map(|_| q(rng.gen_range(-6..=6), 2)).collect();
        let tors: Vec<Q> = (0..6).map(|_| q(rng.gen_range(0..3), 3)).collect();
        let l = CharacterX::new(re, tors).unwrap();
        let word: Vec<u8> = (0..15).map(|_| rng.gen_range(0..6)).collect();
        let w = d.element_from_word(&word).unwrap();
        let wl = weyl_act(&d, &w, &l).unwrap();
        let multiset = |c: &CharacterX| {
            let mut v: Vec<(Q, Q)> = (0..d.positive_roots.len())
                .flat_map(|r| {
                    let (a, b) = pairing(&d, c, r);
                    [(a, b), (-a, frac(-b))]
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(multiset(&l), multiset(&wl));
    }
}

#[test]
fn exponent_examples() {
    let d = build_root_datum("E7").unwrap();
    let theta5 = LeviSpec::maximal(7, 5).unwrap();
    let l0 = leading_exponent(&d, &pt(5, Q::zero(), 1)).unwrap();
    let f = dps_exponents(&d, theta5, &l0).unwrap();
    assert_eq!(f.total_mass(), 4032);
    assert_eq!(
        f.multiplicity(&CharacterX::from_ints(&[0, 0, 0, -1, 0, 0, 0])),
        288
    );
    assert_eq!(
        f.multiplicity(&CharacterX::from_ints(&[0, -1, -1, 1, -1, 0, 0])),
        216
    );
    assert_eq!(
        f.multiplicity(&CharacterX::from_ints(&[1, -1, 0, 0, -1, 0, 0])),
        72
    );
    assert_eq!(
        f.multiplicity(&CharacterX::from_ints(&[9, 9, 9, 9, 9, 9, 9])),
        0
    );

    let l0 = leading_exponent(&d, &pt(2, q(-1, 1), 1)).unwrap();
    let f = dps_exponents(&d, LeviSpec::maximal(7, 2).unwrap(), &l0).unwrap();
    assert_eq!(f.multiplicity(&l0), 2);

    let l0 = leading_exponent(&d, &pt(4, q(-1, 3), 3)).unwrap();
    let f = dps_exponents(&d, LeviSpec::maximal(7, 4).unwrap(), &l0).unwrap();
    assert_eq!(f.total_mass(), 10_080);

    let bad = CharacterX::from_ints(&[0, 5, -1, -1, -1, -1, -1]);
    assert!(dps_exponents(&d, LeviSpec::maximal(7, 2).unwrap(), &bad).is_err());
}

/// Exponents by enumerating the whole group: for every w, keep it when it
/// is the shortest element of wW_M, and count w·λ₀.
fn brute_exponents(d: &RootDatum, theta: &[usize], l0: &CharacterX) -> HashMap<CharacterX, u32> {
    let mut out = HashMap::new();
    for m in brute_min_coset_reps(d, theta) {
        // act by the matrix on the real and torsion parts separately.
        let act = |v: &[Q]| -> Vec<Q> {
            (0..d.rank())
                .map(|i| {
                    (0..d.rank()).fold(Q::zero(), |acc, j| acc + v[j] * Q::from_integer(m[i][j]))
                })
                .collect()
        };
        let c = CharacterX::new(act(l0.re()), act(l0.tors())).unwrap();
        *out.entry(c).or_insert(0) += 1;
    }
    out
}

#[test]
fn exponents_match_brute_force_on_small_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for label in ["A2", "A3", "D4"] {
        let d = build_root_datum(label).unwrap();
        for i in 1..=d.rank() {
            for _ in 0..3 {
                let p = pt(i, q(rng.gen_range(-6..=6), 2), rng.gen_range(1..=3));
                let l0 = leading_exponent(&d, &p).unwrap();
                let theta = LeviSpec::maximal(d.rank(), i).unwrap();
                let f = dps_exponents(&d, theta, &l0).unwrap();
                let brute = brute_exponents(&d, &theta.indices().collect::<Vec<_>>(), &l0);
                let ours: HashMap<CharacterX, u32> = f.sorted_entries().into_iter().collect();
                assert_eq!(ours, brute, "{label} {p}");
            }
        }
    }
}

#[test]
fn exponent_json_is_sorted() {
    let d = build_root_datum("A2").unwrap();
    let l0 = leading_exponent(&d, &pt(1, Q::zero(), 1)).unwrap();
    let f = dps_exponents(&d, LeviSpec::maximal(2, 1).unwrap(), &l0).unwrap();
    let js = f.to_json();
    let v: serde_json::Value = serde_json::from_str(&js).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
    let chars: Vec<CharacterX> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| serde_json::from_value(e["character"].clone()).unwrap())
        .collect();
    let mut sorted = chars.clone();
    sorted.sort();
    assert_eq!(chars, sorted);
}

#[test]
fn mass_and_antidominant_law_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let labels = ["A3", "D4", "E6", "E7"];
    for n in 0..50 {
        let d = build_root_datum(labels[n % 4]).unwrap();
        let i = rng.gen_range(1..=d.rank());
        let k = if n % 3 == 0 { rng.gen_range(2..=3) } else { 1 };
        let p = pt(i, q(rng.gen_range(-12..=0), 2), k);
        let theta = LeviSpec::maximal(d.rank(), i).unwrap();
        let l0 = leading_exponent(&d, &p).unwrap();
        let f = dps_exponents(&d, theta, &l0).unwrap();
        assert_eq!(
            f.total_mass(),
            d.weyl_order() / d.parabolic_order(theta),
            "{} {p}",
            d.label
        );
        let ad = antidominant_with_stabilizer(&d, &l0).unwrap();
        if k == 1 {
            assert_eq!(
                f.multiplicity(&ad.lambda_ad) as u64,
                ad.stab_order,
                "{} {p}",
                d.label
            );
        }
    }
}
