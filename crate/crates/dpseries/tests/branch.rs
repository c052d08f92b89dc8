mod common;

use dpseries::branch::*;
use dpseries::charlat::*;
use dpseries::error::Error;
use dpseries::jacquet::{dps_exponents, ExponentFunction, Packing};
use dpseries::rootsys::{build_root_datum, LeviSpec, RootDatum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn orbit_points(d: &RootDatum, lam: &CharacterX) -> Vec<CharacterX> {
    let mut out: Vec<CharacterX> = d
        .parabolic_elements(LeviSpec::full(d.rank()))
        .iter()
        .map(|w| weyl_act(d, w, lam).unwrap())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Checks `⌈f(λ)/m⌉ · weight ≤ f(μ)` for every rule, embedding and `λ` in
/// the support of `f` where the guard holds. Returns the number of firings.
fn check_sound(d: &RootDatum, lib: &RuleLibrary, f: &ExponentFunction, ctx: &str) -> usize {
    let pk = *f.packing();
    let mut fired = 0;
    let support: Vec<_> = f.iter().map(|(k, _)| *k).collect();
    for (ri, rule) in lib.rules().iter().enumerate() {
        let single = vec![vec![usize::MAX]];
        let embs = if rule.pattern.is_none() {
            &single[..]
        } else {
            lib.embeddings_of(ri)
        };
        for emb in embs {
            for lam in &support {
                let Some(ex) = expand(d, &pk, rule, emb, lam) else {
                    continue;
                };
                fired += 1;
                let c = f.get(lam).div_ceil(ex.divisor);
                for (mu, w) in &ex.targets {
                    assert!(
                        c * w <= f.get(mu),
                        "{ctx}: rule {} on {emb:?} at {} forces {} at {}, which has {}",
                        rule.name,
                        pk.unpack(lam),
                        c * w,
                        pk.unpack(mu),
                        f.get(mu)
                    );
                }
            }
        }
    }
    fired
}

#[test]
fn an_templates_equal_degenerate_series_on_the_pattern() {
    for n in 2..=6usize {
        let d = build_root_datum(&format!("A{n}")).unwrap();
        let name = if n == 3 {
            "A3a".to_string()
        } else {
            format!("A{n}")
        };
        let rule = builtin_rules()
            .into_iter()
            .find(|r| r.name == name)
            .unwrap();
        let mut lam = vec![0i64; n];
        lam[0] = -1;
        let l0 = CharacterX::from_ints(&lam);
        let f = dps_exponents(&d, LeviSpec::from_indices(&[0]), &l0).unwrap();
        let pk = *f.packing();
        let emb: Vec<usize> = (0..n).collect();
        let ex = expand(&d, &pk, &rule, &emb, &pk.pack(&l0).unwrap()).unwrap();
        let mut template = ExponentFunction::new(pk);
        for (mu, w) in &ex.targets {
            template.add(*mu, *w);
        }
        assert!(
            template.equals(&f),
            "A{n}: {} vs {}",
            template.to_json(),
            f.to_json()
        );
        let mass: u64 = (1..=n as u64 + 1).product::<u64>() / 2;
        assert_eq!(f.total_mass(), mass);
    }
}

#[test]
fn templates_are_sound_on_pattern_series() {
    let anchors: [(&str, Vec<i64>); 7] = [
        ("A2", vec![-1, 0]),
        ("A3", vec![-1, 0, 0]),
        ("A3", vec![-1, 0, 1]),
        ("A4", vec![-1, 0, 0, 0]),
        ("A5", vec![-1, 0, 0, 0, 0]),
        ("D4", vec![0, -1, 0, 0]),
        ("D5", vec![0, 0, 0, 0, 1]),
    ];
    let mut total = 0;
    for (label, anchor) in anchors {
        let d = build_root_datum(label).unwrap();
        let lib = RuleLibrary::builtin(&d);
        let orbit = orbit_points(&d, &CharacterX::from_ints(&anchor));
        let pk = Packing::for_orbits(&d, &[&orbit[0]]).unwrap();
        for mask in 0u32..(1 << d.rank()) {
            let theta = LeviSpec::from_mask(mask);
            for l0 in &orbit {
                if !theta.indices().all(|j| l0.re()[j] == Q::from_integer(-1)) {
                    continue;
                }
                let f = dps_exponents(&d, theta, l0).unwrap().repack(pk).unwrap();
                total += check_sound(&d, &lib, &f, &format!("{label} M={mask:b} λ0={l0}"));
            }
        }
    }
    assert!(total > 1000, "only {total} firings checked");
}

fn random_point(rng: &mut ChaCha8Rng, rank: usize) -> DpsPoint {
    let i = rng.gen_range(1..=rank);
    let den = rng.gen_range(1..=2);
    DpsPoint::new(i, Q::new(rng.gen_range(-5..=5), den), rng.gen_range(1..=4))
}

#[test]
fn full_exponent_function_is_a_saturation_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (label, count) in [("D5", 12), ("E6", 12), ("E7", 6)] {
        let d = build_root_datum(label).unwrap();
        let lib = RuleLibrary::builtin(&d);
        for _ in 0..count {
            let p = random_point(&mut rng, d.rank());
            let pd = PointData::new(&d, &p).unwrap();
            let fired = check_sound(&d, &lib, &pd.f_pi, &format!("{label} {p}"));
            assert!(fired > 0, "{label} {p}");
            let mut st = BranchState::new(pd.packing());
            st.f = pd.f_pi.clone();
            st.saturate(&d, &lib, &pd.f_pi, SaturationOptions::default())
                .unwrap();
            assert_eq!((st.steps, st.clamps), (0, 0), "{label} {p}");
        }
    }
}

#[test]
fn orthogonal_divisor_divides_full_multiplicities() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for label in ["A4", "D5", "E6", "E7"] {
        let d = build_root_datum(label).unwrap();
        let lib = RuleLibrary::builtin(&d);
        let or = lib.rule_index("OR").unwrap();
        for _ in 0..5 {
            let p = random_point(&mut rng, d.rank());
            let pd = PointData::new(&d, &p).unwrap();
            let pk = pd.packing();
            for (lam, &v) in pd.f_pi.iter() {
                let ex = expand(&d, &pk, &lib.rules()[or], &[usize::MAX], lam).unwrap();
                assert_eq!(v % ex.divisor, 0, "{label} {p} at {}", pk.unpack(lam));
                assert_eq!(ex.targets.len(), 1);
            }
        }
    }
}

fn final_state(
    d: &RootDatum,
    lib: &RuleLibrary,
    pd: &PointData,
    seed: &CharacterX,
    order: Order,
) -> BranchState {
    let mut st = pd.seeded(seed, 1).unwrap();
    st.saturate(
        d,
        lib,
        &pd.f_pi,
        SaturationOptions {
            order,
            trace: false,
        },
    )
    .unwrap();
    st
}

#[test]
fn saturation_is_confluent_under_random_orders() {
    let cases: [(&str, usize, Q, u32); 6] = [
        ("E6", 1, Q::new(1, 2), 1),
        ("E6", 4, Q::from_integer(0), 2),
        ("E6", 2, Q::from_integer(1), 1),
        ("E7", 7, Q::new(1, 2), 1),
        ("E7", 1, Q::from_integer(2), 1),
        ("E7", 2, Q::from_integer(-1), 1),
    ];
    for (label, i, s, k) in cases {
        let d = build_root_datum(label).unwrap();
        let lib = RuleLibrary::builtin(&d);
        let p = DpsPoint::new(i, s, k);
        let pd = PointData::new(&d, &p).unwrap();
        for seed in pd.antidominant_support().iter().take(2) {
            let base = final_state(&d, &lib, &pd, seed, Order::Fifo);
            for r in 0..10u64 {
                let st = final_state(&d, &lib, &pd, seed, Order::Random(r));
                assert!(st.f.equals(&base.f), "{label} {p} seed {seed} order {r}");
                assert_eq!(st.clamps, base.clamps, "{label} {p} seed {seed} order {r}");
            }
        }
    }
}

#[test]
fn seeds_are_bounded_by_the_full_function() {
    let d = build_root_datum("E7").unwrap();
    let pd = PointData::new(&d, &DpsPoint::new(5, Q::from_integer(0), 1)).unwrap();
    let ad = CharacterX::from_ints(&[0, 0, 0, -1, 0, 0, 0]);
    assert!(pd.seeded(&ad, 288).is_ok());
    assert!(matches!(pd.seeded(&ad, 289), Err(Error::Precondition(_))));
    assert_eq!(pd.antidominant_support()[0], pd.lambda_ad);
}

#[test]
fn apply_triple_reports_failed_guards_and_bad_nodes() {
    let d = build_root_datum("E7").unwrap();
    let lib = RuleLibrary::builtin(&d);
    let pd = PointData::new(&d, &DpsPoint::new(5, Q::from_integer(0), 1)).unwrap();
    let ad = CharacterX::from_ints(&[0, 0, 0, -1, 0, 0, 0]);
    let mut st = pd.seeded(&ad, 1).unwrap();
    // λ pairs to -1 with node 4, so A1 does not apply there.
    let e = apply_triple(&d, &lib, &mut st, &pd.f_pi, &ad, "A1", &[4]).unwrap_err();
    assert!(matches!(e, Error::RuleNotApplicable(_)), "{e}");
    // nodes 1 and 2 are not adjacent in E7.
    let e = apply_triple(&d, &lib, &mut st, &pd.f_pi, &ad, "A2", &[1, 2]).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
    let e = apply_triple(&d, &lib, &mut st, &pd.f_pi, &ad, "nope", &[]).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
    let far = CharacterX::from_ints(&[1, 0, 0, 0, 0, 0, 0]);
    let e = apply_triple(&d, &lib, &mut st, &pd.f_pi, &far, "A1", &[1]).unwrap_err();
    assert!(matches!(e, Error::RuleNotApplicable(_)), "{e}");
    // OR at the anti-dominant point reads the stabilizer of type A2 × A1 × A3.
    let ex = apply_triple(&d, &lib, &mut st, &pd.f_pi, &ad, "OR", &[]).unwrap();
    assert_eq!(ex.divisor as u64, stabilizer_order(&d, &ad).unwrap());
    assert_eq!(st.f.multiplicity(&ad), 288);
    assert_eq!(st.trace.len(), 1);
}

#[test]
fn embeddings_count_diagram_automorphisms() {
    let e7 = build_root_datum("E7").unwrap();
    let d5 = build_root_datum("D5").unwrap();
    let a2 = build_root_datum("A2").unwrap();
    let lib = RuleLibrary::builtin(&d5);
    let n = |name: &str| lib.embeddings_of(lib.rule_index(name).unwrap()).len();
    assert_eq!(n("D5"), 2);
    assert_eq!(n("A1"), 5);
    assert_eq!(n("A2"), 2 * 4);
    let lib7 = RuleLibrary::builtin(&e7);
    let n7 = |name: &str| lib7.embeddings_of(lib7.rule_index(name).unwrap()).len();
    assert_eq!(n7("A2"), 2 * 6);
    assert_eq!(n7("A6"), 2);
    assert_eq!(n7("D5"), 2 * 2);
    assert!(embeddings(&a2, dpseries::rootsys::CoxeterType::D(5)).is_empty());
}

fn script(json: &str) -> Script {
    serde_json::from_str(json).unwrap()
}

#[test]
fn replay_checks_every_expectation() {
    let d = build_root_datum("E7").unwrap();
    let lib = RuleLibrary::builtin(&d);
    let ok = script(
        r#"{"name":"t","datum":"E7","point":{"i":5,"s":"0","k":1},"steps":[
        {"op":"seed","state":"s","lambda":"[0,0,0,-1,0,0,0]","mult":1},
        {"op":"rule","state":"s","rule":"OR","from":"[0,0,0,-1,0,0,0]","to":"[0,0,0,-1,0,0,0]","expect":288},
        {"op":"assert","state":"pi","lambda":"[0,0,0,-1,0,0,0]","mult":288},
        {"op":"assert","state":"s","lambda":"[0,0,0,-1,0,0,0]"}]}"#,
    );
    let r = replay(&d, &lib, &ok).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.rows[1].k, Some(1));
    assert_eq!(r.rows[1].l, 288);
    assert!(r.kernel_requests.is_empty());

    let mut bad = ok.clone();
    if let ScriptStep::Rule { expect, .. } = &mut bad.steps[1] {
        *expect = 287;
    }
    assert!(matches!(replay(&d, &lib, &bad), Err(Error::Assertion(_))));

    let mut bad = ok.clone();
    if let ScriptStep::Rule { rule, .. } = &mut bad.steps[1] {
        *rule = "XYZ".into();
    }
    assert!(matches!(replay(&d, &lib, &bad), Err(Error::Config(_))));

    let mut bad = ok.clone();
    bad.datum = "E6".into();
    assert!(matches!(replay(&d, &lib, &bad), Err(Error::Config(_))));

    let empty = Script {
        steps: Vec::new(),
        ..ok
    };
    let r = replay(&d, &lib, &empty).unwrap();
    assert!(r.rows.is_empty() && !r.unique_subrep);
}

#[test]
fn replay_records_kernel_requests() {
    let d = build_root_datum("E7").unwrap();
    let lib = RuleLibrary::builtin(&d);
    let s = script(
        r#"{"name":"k","datum":"E7","point":{"i":2,"s":"-1","k":1},"steps":[
        {"op":"kernel","word":"s7s6s5s4s2","q":2,"lambda1":"[-1,-1,3,-1,-1,-1,-1]","rank":561,"kernel":15}]}"#,
    );
    let r = replay(&d, &lib, &s).unwrap();
    assert_eq!(r.kernel_requests.len(), 1);
    assert_eq!(r.kernel_requests[0].word, vec![6, 5, 4, 3, 1]);
    assert_eq!(r.kernel_requests[0].rank + r.kernel_requests[0].kernel, 576);

    for broken in [
        r#""word":"s7s6s5s4s2","q":2,"lambda1":"[-1,-1,3,-1,-1,-1,0]","rank":561,"kernel":15"#,
        r#""word":"s7s6s5s4s2","q":2,"rank":561,"kernel":16"#,
        r#""word":"s7s7","q":2,"rank":576,"kernel":0"#,
    ] {
        let text = format!(
            r#"{{"name":"k","datum":"E7","point":{{"i":2,"s":"-1","k":1}},"steps":[{{"op":"kernel",{broken}}}]}}"#
        );
        assert!(replay(&d, &lib, &script(&text)).is_err(), "{broken}");
    }
}
