//! Acceptance run for the E7 engine. Prints one PASS or FAIL line per
//! criterion and exits nonzero if any criterion fails.

#[path = "../../dpseries/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::process::Command;
use std::time::{Duration, Instant};

use common::brute_min_coset_reps;
use dpseries::branch::{
    check_irreducible, BranchState, Order, PointData, RuleLibrary, SaturationOptions,
    SaturationOutcome,
};
use dpseries::charlat::{antidominant_with_stabilizer, leading_exponent, CharacterX, DpsPoint, Q};
use dpseries::classify::{
    enumerate_special_points, tadic_test, Evidence, SpecialKind, TadicOutcome, Verdict,
};
use dpseries::hecke::{
    hecke_mul, kernel_dimension, module_rows, simple_intertwiner, word_intertwiner, Certification,
    FactorOrder, GroupTable, HeckeVector, KernelOptions, KernelReport, SpillConfig,
};
use dpseries::jacquet::dps_exponents;
use dpseries::rootsys::{build_root_datum, parse_word, LeviSpec, RootDatum};
use dpseries_cli::config::RunConfig;
use dpseries_cli::data::{parse_candidates, Mark, ReferenceTables, CANDIDATES_JSON};
use dpseries_cli::pipeline::Engine;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(t <= limit, || {
        format!("{what} took {t:.1?}, limit {limit:?}")
    })
}

fn engine(dir: &std::path::Path) -> Engine {
    Engine::new(RunConfig {
        cache_dir: dir.to_path_buf(),
        ..RunConfig::default()
    })
    .unwrap()
}

fn criterion_1(d: &RootDatum) -> Outcome {
    let t = Instant::now();
    let expected = [126usize, 576, 2016, 10080, 4032, 756, 56];
    let mut got = Vec::new();
    for i in 1..=7 {
        let theta = LeviSpec::maximal(7, i).map_err(|e| e.to_string())?;
        let reps = d
            .min_double_coset_reps(theta, LeviSpec::empty())
            .map_err(|e| e.to_string())?;
        got.push(reps.len());
    }
    check(got == expected, || {
        format!("coset counts {got:?}, expected {expected:?}")
    })?;
    check(d.weyl_order() == 2_903_040, || {
        format!("|W| = {}", d.weyl_order())
    })?;
    within(t.elapsed(), Duration::from_secs(60), "coset enumeration")?;
    Ok(format!(
        "|W^M| = {got:?}, |W| = {} ({:.1?})",
        d.weyl_order(),
        t.elapsed()
    ))
}

fn criterion_2(d: &RootDatum, tables: &ReferenceTables) -> Outcome {
    let t = Instant::now();
    let mut cells = 0;
    for row in &tables.rows {
        let sp = enumerate_special_points(d, row.i, row.k).map_err(|e| e.to_string())?;
        let ours: Vec<(Q, bool)> = sp
            .iter()
            .map(|p| (p.s, p.kind == SpecialKind::RegularReducible))
            .collect();
        let theirs: Vec<(Q, bool)> = row
            .cells
            .iter()
            .map(|c| (c.s, c.mark == Mark::RedStar))
            .collect();
        check(ours == theirs, || {
            format!(
                "line (i={}, k={}): got {ours:?}, expected {theirs:?}",
                row.i, row.k
            )
        })?;
        cells += theirs.len();
    }
    within(
        t.elapsed(),
        Duration::from_secs(600),
        "special point enumeration",
    )?;
    Ok(format!(
        "{} lines, {cells} special points match ({:.1?})",
        tables.rows.len(),
        t.elapsed()
    ))
}

fn criterion_3(d: &RootDatum) -> Outcome {
    let t = Instant::now();
    let (_, cands) = parse_candidates(CANDIDATES_JSON).map_err(|e| e.to_string())?;
    for c in &cands {
        let r = tadic_test(d, &c.point, &c.spec).map_err(|e| format!("{}: {e}", c.point))?;
        check(
            r.outcome == TadicOutcome::ReducibleConfirmed && r.witness.is_some(),
            || format!("{} against {}: {:?}", c.point, c.spec, r.outcome),
        )?;
    }
    Ok(format!(
        "{} candidates confirmed with witnesses ({:.1?})",
        cands.len(),
        t.elapsed()
    ))
}

fn criterion_4(d: &RootDatum, tables: &ReferenceTables, eng: &Engine) -> Outcome {
    let t = Instant::now();
    let lib = RuleLibrary::builtin(d);
    let scripted = [(5usize, 0i64, 1u32), (5, 0, 2)];
    let kernel_settled = (4usize, 0i64, 1u32);
    let mut saturated = 0;
    for row in &tables.rows {
        for c in row.cells.iter().filter(|c| c.mark == Mark::Irr) {
            let p = DpsPoint::new(row.i, c.s, row.k);
            let key = (row.i, *c.s.numer(), row.k);
            if c.s.is_integer() && (scripted.contains(&key) || key == kernel_settled) {
                continue;
            }
            let rep = check_irreducible(d, &lib, &p, SaturationOptions::default())
                .map_err(|e| format!("{p}: {e}"))?;
            check(rep.outcome == SaturationOutcome::Irreducible, || {
                format!("{p}: saturation gap {:?}", rep.gap)
            })?;
            saturated += 1;
        }
    }
    for (i, s, k) in scripted {
        let v = eng
            .classify_point(&DpsPoint::new(i, Q::from_integer(s), k))
            .map_err(|e| e.to_string())?;
        check(
            v.verdict == Verdict::Irreducible && matches!(v.evidence, Evidence::Script { .. }),
            || format!("({i},{s},{k}): {} with {:?}", v.verdict, v.evidence),
        )?;
    }
    let out = eng
        .replay(&eng.script("E7p50O1").map_err(|e| e.to_string())?, false)
        .map_err(|e| e.to_string())?;
    let chain: Vec<u32> = out
        .report
        .rows
        .iter()
        .filter(|r| r.op == "rule")
        .map(|r| r.l)
        .collect();
    let expected = [288, 216, 36, 12, 24, 24, 8, 8, 8, 4, 4, 2, 2];
    check(chain == expected, || format!("E7p50O1 chain {chain:?}"))?;
    check(out.report.unique_subrep, || {
        "E7p50O1 did not conclude".into()
    })?;
    Ok(format!(
        "{saturated} irr cells saturate; (5,0,1) and (5,0,2) by replayed scripts; (4,0,1) by the P4 kernel of criterion 5; chain {chain:?} ({:.1?})",
        t.elapsed()
    ))
}

fn run_kernel(
    d: &RootDatum,
    t: &GroupTable,
    p: DpsPoint,
    word: &str,
    spill: &std::path::Path,
) -> Result<(KernelReport, Duration), String> {
    let start = Instant::now();
    let w = parse_word(word, 7).map_err(|e| e.to_string())?;
    let rows = module_rows(d, t, &p, &w, 2, FactorOrder::Composition).map_err(|e| e.to_string())?;
    let opts = KernelOptions {
        spill: Some(SpillConfig {
            dir: spill.to_path_buf(),
            max_bytes: None,
        }),
        ..KernelOptions::default()
    };
    let r = kernel_dimension(&rows, &opts).map_err(|e| format!("{p} {word}: {e}"))?;
    Ok((r, start.elapsed()))
}

fn mb(b: u64) -> String {
    format!("{:.1} MB", b as f64 / 1e6)
}

fn criterion_5(d: &RootDatum) -> Outcome {
    let t = Instant::now();
    let table = GroupTable::build(d).map_err(|e| e.to_string())?;
    let t_table = t.elapsed();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (p2, t2) = run_kernel(
        d,
        &table,
        DpsPoint::new(2, Q::from_integer(-1), 1),
        "s7s6s5s4s2",
        &dir.path().join("p2"),
    )?;
    check(
        (p2.rows, p2.rank, p2.kernel_dim) == (576, 561, 15)
            && p2.certification == Certification::ModularUpperBoundExactNullvectors,
        || format!("P2: {p2:?}"),
    )?;
    let (p4, t4) = run_kernel(
        d,
        &table,
        DpsPoint::new(4, Q::from_integer(0), 1),
        "s7s6s5s4s3s2s4",
        &dir.path().join("p4"),
    )?;
    check(
        (p4.rows, p4.rank, p4.kernel_dim) == (10080, 10080, 0)
            && p4.certification == Certification::Exact,
        || format!("P4: {p4:?}"),
    )?;
    Ok(format!(
        "group table {t_table:.1?}; P2 rank 561 kernel 15 ({t2:.1?}, spill {}); P4 rank 10080 kernel 0 ({t4:.1?}, spill {})",
        mb(p2.spill_bytes),
        mb(p4.spill_bytes)
    ))
}

fn final_state(
    d: &RootDatum,
    lib: &RuleLibrary,
    pd: &PointData,
    seed: &CharacterX,
    order: Order,
) -> Result<BranchState, String> {
    let mut st = pd.seeded(seed, 1).map_err(|e| e.to_string())?;
    st.saturate(
        d,
        lib,
        &pd.f_pi,
        SaturationOptions {
            order,
            trace: false,
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(st)
}

/// Mass and the anti-dominant multiplicity on a grid of points.
fn suite_mass() -> Result<usize, String> {
    let mut n = 0;
    for label in ["A3", "D4", "E6", "E7"] {
        let d = build_root_datum(label).unwrap();
        for i in 1..=d.rank() {
            for (num, k) in [(0, 1), (-1, 1), (-3, 1), (-2, 2), (-5, 3)] {
                let p = DpsPoint::new(i, Q::new(num, 2), k);
                let theta = LeviSpec::maximal(d.rank(), i).unwrap();
                let l0 = leading_exponent(&d, &p).map_err(|e| e.to_string())?;
                let f = dps_exponents(&d, theta, &l0).map_err(|e| e.to_string())?;
                let mass = d.weyl_order() / d.parabolic_order(theta);
                check(f.total_mass() == mass, || {
                    format!("{label} {p}: mass {} != {mass}", f.total_mass())
                })?;
                if k == 1 {
                    let ad = antidominant_with_stabilizer(&d, &l0).map_err(|e| e.to_string())?;
                    let m = f.multiplicity(&ad.lambda_ad) as u64;
                    check(m == ad.stab_order, || {
                        format!("{label} {p}: f(λ_ad) = {m}, |Stab| = {}", ad.stab_order)
                    })?;
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Reduced-word independence of the intertwiner and its spectrum in rank one.
fn suite_intertwiners() -> Result<usize, String> {
    let mut n = 0;
    for (label, w1, w2) in [
        ("A2", vec![0u8, 1, 0], vec![1u8, 0, 1]),
        ("A3", vec![0, 2, 1, 0, 2], vec![2, 0, 1, 2, 0]),
    ] {
        let d = build_root_datum(label).unwrap();
        for lam in [[1i64, 2, 3], [2, 1, 1], [3, 3, 2], [1, 1, 2]] {
            let c = CharacterX::from_ints(&lam[..d.rank()]);
            let (Ok(a), Ok(b)) = (
                word_intertwiner(&d, &w1, &c, 2),
                word_intertwiner(&d, &w2, &c, 2),
            ) else {
                continue;
            };
            check(a == b, || format!("{label} {w1:?} vs {w2:?} at {c}"))?;
            n += 1;
        }
    }
    let d = build_root_datum("A1").unwrap();
    let s = d.simple_reflection(0).key().pack_u64();
    for (q, z) in [(2i64, 2i64), (3, 1), (5, -3), (2, 4)] {
        let nz = simple_intertwiner(&d, 0, &CharacterX::from_ints(&[z]), q)
            .map_err(|e| e.to_string())?;
        let qq = Q::from_integer(q);
        let qz = if z >= 0 {
            Q::from_integer(q.pow(z as u32))
        } else {
            Q::new(1, q.pow((-z) as u32))
        };
        let mut plus = HeckeVector::identity(&d);
        plus.add_term(s, Q::from_integer(1));
        let mut minus = HeckeVector::identity(&d).scaled(-qq);
        minus.add_term(s, Q::from_integer(1));
        let other = (qq - qz) / (qz * qq - Q::from_integer(1));
        check(
            hecke_mul(&d, &nz, &plus, q).map_err(|e| e.to_string())? == plus,
            || format!("q={q} z={z}: eigenvalue 1"),
        )?;
        check(
            hecke_mul(&d, &nz, &minus, q).map_err(|e| e.to_string())? == minus.scaled(other),
            || format!("q={q} z={z}: second eigenvalue"),
        )?;
        n += 1;
    }
    Ok(n)
}

/// Exponents against enumeration of the whole group by matrices.
fn suite_brute_exponents() -> Result<usize, String> {
    let mut n = 0;
    for label in ["A2", "A3", "D4"] {
        let d = build_root_datum(label).unwrap();
        for i in 1..=d.rank() {
            for (num, k) in [(-3, 1), (1, 2), (-4, 3)] {
                let p = DpsPoint::new(i, Q::new(num, 2), k);
                let l0 = leading_exponent(&d, &p).map_err(|e| e.to_string())?;
                let theta = LeviSpec::maximal(d.rank(), i).unwrap();
                let f = dps_exponents(&d, theta, &l0).map_err(|e| e.to_string())?;
                let mut brute: HashMap<CharacterX, u32> = HashMap::new();
                for m in brute_min_coset_reps(&d, &theta.indices().collect::<Vec<_>>()) {
                    let act = |v: &[Q]| -> Vec<Q> {
                        (0..d.rank())
                            .map(|r| {
                                (0..d.rank()).fold(Q::from_integer(0), |acc, c| {
                                    acc + v[c] * Q::from_integer(m[r][c])
                                })
                            })
                            .collect()
                    };
                    let c =
                        CharacterX::new(act(l0.re()), act(l0.tors())).map_err(|e| e.to_string())?;
                    *brute.entry(c).or_insert(0) += 1;
                }
                let ours: HashMap<CharacterX, u32> = f.sorted_entries().into_iter().collect();
                check(ours == brute, || {
                    format!("{label} {p}: exponents differ from enumeration")
                })?;
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Saturation reaches the same state under random processing orders.
fn suite_confluence() -> Result<usize, String> {
    let mut n = 0;
    for (label, i, s, k) in [
        ("E6", 1, Q::new(1, 2), 1),
        ("E7", 7, Q::new(1, 2), 1),
        ("E7", 2, Q::from_integer(-1), 1),
    ] {
        let d = build_root_datum(label).unwrap();
        let lib = RuleLibrary::builtin(&d);
        let p = DpsPoint::new(i, s, k);
        let pd = PointData::new(&d, &p).map_err(|e| e.to_string())?;
        let seed = pd.lambda_ad.clone();
        let base = final_state(&d, &lib, &pd, &seed, Order::Fifo)?;
        for r in 0..10u64 {
            let st = final_state(&d, &lib, &pd, &seed, Order::Random(r))?;
            check(st.f.equals(&base.f) && st.clamps == base.clamps, || {
                format!("{label} {p} order {r}")
            })?;
            n += 1;
        }
    }
    Ok(n)
}

/// Kernels of the rank-one intertwiner: nonzero at the unit pairing only.
fn suite_toy_kernels() -> Result<usize, String> {
    let d = build_root_datum("A1").unwrap();
    let t = GroupTable::build(&d).map_err(|e| e.to_string())?;
    for (s, kernel) in [(1i64, 1usize), (2, 0)] {
        let p = DpsPoint::new(1, Q::from_integer(s), 1);
        let rows = module_rows(&d, &t, &p, &[0], 2, FactorOrder::Composition)
            .map_err(|e| e.to_string())?;
        let r = kernel_dimension(&rows, &KernelOptions::default()).map_err(|e| e.to_string())?;
        check(r.kernel_dim == kernel, || {
            format!("A1 s={s}: kernel {}", r.kernel_dim)
        })?;
    }
    Ok(2)
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let counts = [
        ("mass", suite_mass()?),
        ("intertwiners", suite_intertwiners()?),
        ("brute exponents", suite_brute_exponents()?),
        ("confluence", suite_confluence()?),
        ("toy kernels", suite_toy_kernels()?),
    ];
    within(t.elapsed(), Duration::from_secs(300), "property suites")?;
    let parts: Vec<String> = counts.iter().map(|(n, c)| format!("{n} {c}")).collect();
    Ok(format!("{} ({:.1?})", parts.join(", "), t.elapsed()))
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let run = || -> Result<Vec<u8>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_dpseries"))
            .args([
                "--cache-dir",
                dir.path().to_str().unwrap(),
                "classify",
                "--parabolic",
                "6",
                "--chi-order",
                "1",
            ])
            .env_remove("DPSERIES_CONFIG")
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || {
            format!(
                "exit {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            )
        })?;
        Ok(out.stdout)
    };
    let a = run()?;
    let b = run()?;
    check(!a.is_empty() && a == b, || {
        "outputs differ between cold-cache runs".into()
    })?;
    Ok(format!(
        "two cold-cache runs give identical {} bytes ({:.1?})",
        a.len(),
        t.elapsed()
    ))
}

fn main() {
    let d = build_root_datum("E7").unwrap();
    let tables = ReferenceTables::bundled();
    let dir = tempfile::tempdir().unwrap();
    let eng = engine(dir.path());
    let criteria: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(|| criterion_1(&d))),
        (2, Box::new(|| criterion_2(&d, &tables))),
        (3, Box::new(|| criterion_3(&d))),
        (4, Box::new(|| criterion_4(&d, &tables, &eng))),
        (5, Box::new(|| criterion_5(&d))),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        match f() {
            Ok(msg) => println!("PASS criterion {n}: {msg}"),
            Err(msg) => {
                println!("FAIL criterion {n}: {msg}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
