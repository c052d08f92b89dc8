//! Branching rules on Levi subgroups and their saturation.
//!
//! A state is a lower bound `f ≤ r_T σ` for one irreducible constituent `σ`
//! of a degenerate principal series `π`. Each rule reads the pairings of a
//! character `λ` with the simple coroots of an embedded Levi diagram and, when
//! its guard holds, forces `c · template` into `f` where `c = ⌈f(λ)/m⌉` and `m`
//! is the template weight at `λ`. Saturation applies every rule until nothing
//! changes, clamping against `f_π`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::charlat::{
    antidominant_with_stabilizer, leading_exponent, parse_character, CharacterX, DpsPoint,
};
use crate::error::{Error, Result};
use crate::jacquet::{dps_exponents_packed, ExponentFunction, PackedChar, Packing};
use crate::rootsys::{format_word, parse_word, CoxeterType, LeviSpec, RootDatum};

/// Condition on the pairings of `λ` with the embedded simple coroots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    /// The Levi is every simple root on which `λ` pairs trivially.
    Orthogonal,
    /// One node whose pairing is not `|·|^{±1}`. With nontrivial torsion the
    /// reflection must also move `λ`.
    NotUnit,
    /// Pairings equal `ε·v` for a sign `ε`, with trivial torsion.
    SignedPattern(Vec<i32>),
    /// Pairings equal `v`, with trivial torsion.
    Exact(Vec<i32>),
}

/// A branching rule: a Levi diagram, a guard, and a template
/// `Σ weight · [word · λ]` bounding the Jacquet module of the Levi
/// representation through `λ` from below.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchRule {
    pub name: String,
    pub family: String,
    /// Diagram of the Levi; `None` when the Levi is determined by `λ`.
    pub pattern: Option<CoxeterType>,
    pub guard: Guard,
    /// Words over the pattern nodes (0-based) with their weights.
    pub template: Vec<(Vec<u8>, u32)>,
}

fn factorial(n: u32) -> u32 {
    (1..=n).product()
}

/// `A_n` at `±ϖ₁`: weights `(n − l)(n − 1)!` on `s_l ⋯ s_1 λ`.
fn an_rule(name: &str, family: &str, n: usize) -> BranchRule {
    let mut pattern = vec![0; n];
    pattern[0] = 1;
    let template = (0..n)
        .map(|l| {
            let word: Vec<u8> = (0..l as u8).rev().collect();
            (word, (n - l) as u32 * factorial(n as u32 - 1))
        })
        .collect();
    BranchRule {
        name: name.to_string(),
        family: family.to_string(),
        pattern: Some(CoxeterType::A(n)),
        guard: Guard::SignedPattern(pattern),
        template,
    }
}

/// The built-in rule library: OR, A1, A2, A3a, A3b, A4 to A6 and D5.
pub fn builtin_rules() -> Vec<BranchRule> {
    let mut rules = vec![
        BranchRule {
            name: "OR".into(),
            family: "OR".into(),
            pattern: None,
            guard: Guard::Orthogonal,
            template: vec![(Vec::new(), 1)],
        },
        BranchRule {
            name: "A1".into(),
            family: "A1".into(),
            pattern: Some(CoxeterType::A(1)),
            guard: Guard::NotUnit,
            template: vec![(Vec::new(), 1), (vec![0], 1)],
        },
        an_rule("A2", "A2", 2),
        an_rule("A3a", "A3a", 3),
        BranchRule {
            name: "A3b".into(),
            family: "A3b".into(),
            pattern: Some(CoxeterType::A(3)),
            guard: Guard::SignedPattern(vec![1, 0, -1]),
            template: vec![(Vec::new(), 2), (vec![0], 1), (vec![2], 1), (vec![0, 2], 2)],
        },
    ];
    for n in 4..=6 {
        rules.push(an_rule(&format!("A{n}"), "An", n));
    }
    let d5: [(&[u8], u32); 10] = [
        (&[], 120),
        (&[4], 96),
        (&[2, 4], 72),
        (&[1, 2, 4], 48),
        (&[3, 2, 4], 48),
        (&[3, 1, 2, 4], 32),
        (&[0, 1, 2, 4], 24),
        (&[2, 1, 3, 2, 4], 16),
        (&[0, 1, 3, 2, 4], 16),
        (&[2, 0, 1, 3, 2, 4], 8),
    ];
    rules.push(BranchRule {
        name: "D5".into(),
        family: "D5".into(),
        pattern: Some(CoxeterType::D(5)),
        guard: Guard::Exact(vec![0, 0, 0, 0, 1]),
        template: d5.iter().map(|(w, m)| (w.to_vec(), *m)).collect(),
    });
    rules
}

/// All injective maps from the pattern diagram into `d` that preserve both
/// adjacency and non-adjacency. Entry `a` is the image of pattern node `a`.
pub fn embeddings(d: &RootDatum, pattern: CoxeterType) -> Vec<Vec<usize>> {
    let p = RootDatum::new(pattern);
    let (m, n) = (p.rank(), d.rank());
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::with_capacity(m);
    fn extend(
        p: &RootDatum,
        d: &RootDatum,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        n: usize,
    ) {
        let a = cur.len();
        if a == p.rank() {
            out.push(cur.clone());
            return;
        }
        for x in 0..n {
            if cur.contains(&x) {
                continue;
            }
            if (0..a).all(|b| p.adjacent(a, b) == d.adjacent(x, cur[b])) {
                cur.push(x);
                extend(p, d, cur, out, n);
                cur.pop();
            }
        }
    }
    if m <= n {
        extend(&p, d, &mut cur, &mut out, n);
    }
    out
}

/// A rule library bound to a root datum, with every embedding precomputed.
#[derive(Debug, Clone)]
pub struct RuleLibrary {
    rules: Vec<BranchRule>,
    embeddings: Vec<Vec<Vec<usize>>>,
}

impl RuleLibrary {
    pub fn new(d: &RootDatum, rules: Vec<BranchRule>) -> Self {
        let embeddings = rules
            .iter()
            .map(|r| r.pattern.map(|t| embeddings(d, t)).unwrap_or_default())
            .collect();
        RuleLibrary { rules, embeddings }
    }

    pub fn builtin(d: &RootDatum) -> Self {
        Self::new(d, builtin_rules())
    }

    pub fn rules(&self) -> &[BranchRule] {
        &self.rules
    }

    pub fn rule_index(&self, name: &str) -> Result<usize> {
        self.rules
            .iter()
            .position(|r| r.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown branching rule {name:?}")))
    }

    pub fn embeddings_of(&self, rule: usize) -> &[Vec<usize>] {
        &self.embeddings[rule]
    }
}

/// The targets a rule forces from one character.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub divisor: u32,
    /// Distinct targets with merged weights; the first is `λ` itself.
    pub targets: Vec<(PackedChar, u32)>,
    /// The Levi the rule was read on (0-based nodes of `d`).
    pub levi: Vec<usize>,
}

fn trivial_pairing(pk: &Packing, lam: &PackedChar, j: usize) -> bool {
    pk.re_num(lam, j) == 0 && lam.tors[j] == 0
}

/// Evaluates a rule at `λ` on one embedding. `None` when the guard fails.
pub fn expand(
    d: &RootDatum,
    pk: &Packing,
    rule: &BranchRule,
    emb: &[usize],
    lam: &PackedChar,
) -> Option<Expansion> {
    let den = pk.re_den();
    match &rule.guard {
        Guard::Orthogonal => {
            let theta: Vec<usize> = (0..d.rank())
                .filter(|&j| trivial_pairing(pk, lam, j))
                .collect();
            let order = d.parabolic_order(LeviSpec::from_indices(&theta)) as u32;
            return Some(Expansion {
                divisor: order,
                targets: vec![(*lam, order)],
                levi: theta,
            });
        }
        Guard::NotUnit => {
            let j = emb[0];
            let r = pk.re_num(lam, j);
            let t = lam.tors[j];
            if t == 0 && (r == den || r == -den) {
                return None;
            }
            if t != 0 {
                let mut mu = *lam;
                pk.reflect(d, &mut mu, j);
                if mu == *lam {
                    return None;
                }
            }
        }
        Guard::SignedPattern(v) | Guard::Exact(v) => {
            if emb.iter().any(|&j| lam.tors[j] != 0) {
                return None;
            }
            let matches = |eps: i64| {
                emb.iter()
                    .zip(v)
                    .all(|(&j, &c)| pk.re_num(lam, j) == eps * c as i64 * den)
            };
            let ok = matches(1) || (matches!(rule.guard, Guard::SignedPattern(_)) && matches(-1));
            if !ok {
                return None;
            }
        }
    }
    let mut targets: Vec<(PackedChar, u32)> = Vec::with_capacity(rule.template.len());
    for (word, weight) in &rule.template {
        let mut mu = *lam;
        for &a in word.iter().rev() {
            pk.reflect(d, &mut mu, emb[a as usize]);
        }
        match targets.iter_mut().find(|(t, _)| *t == mu) {
            Some(slot) => slot.1 += weight,
            None => targets.push((mu, *weight)),
        }
    }
    let divisor = targets[0].1;
    Some(Expansion {
        divisor,
        targets,
        levi: emb.to_vec(),
    })
}

/// One forced increase, recorded when tracing.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub rule: String,
    /// 1-based nodes of the Levi the rule was read on.
    pub levi: Vec<usize>,
    pub lambda: CharacterX,
    pub lambda_mult: u32,
    pub divisor: u32,
    pub mu: CharacterX,
    pub before: u32,
    pub after: u32,
    pub bound: u32,
}

/// Worklist discipline for saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Fifo,
    /// Pops a uniformly random pending character; the seed fixes the run.
    Random(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct SaturationOptions {
    pub order: Order,
    pub trace: bool,
}

impl Default for SaturationOptions {
    fn default() -> Self {
        SaturationOptions {
            order: Order::Fifo,
            trace: false,
        }
    }
}

/// A lower-bound state for one constituent, tied to the `f_π` it lives under.
#[derive(Debug, Clone)]
pub struct BranchState {
    pub f: ExponentFunction,
    /// Rule applications that raised a value.
    pub steps: u64,
    /// Forced values that exceeded `f_π` and were cut down to it. A sound rule
    /// set starting from a sound seed never clamps.
    pub clamps: u64,
    pub trace: Vec<TraceEntry>,
}

impl BranchState {
    pub fn new(packing: Packing) -> Self {
        BranchState {
            f: ExponentFunction::new(packing),
            steps: 0,
            clamps: 0,
            trace: Vec::new(),
        }
    }

    /// Forces one expansion scaled by `⌈f(λ)/m⌉`. Returns the characters
    /// whose value rose, as `(μ, before, after)`.
    fn force(
        &mut self,
        lam: &PackedChar,
        rule: &BranchRule,
        ex: &Expansion,
        f_pi: &ExponentFunction,
        trace: bool,
    ) -> Vec<(PackedChar, u32, u32)> {
        let v = self.f.get(lam);
        if v == 0 {
            return Vec::new();
        }
        let c = v.div_ceil(ex.divisor);
        let mut raised = Vec::new();
        for (mu, w) in &ex.targets {
            let bound = f_pi.get(mu);
            let mut want = c.saturating_mul(*w);
            if want > bound {
                self.clamps += 1;
                want = bound;
            }
            let before = self.f.get(mu);
            if want > before {
                debug_assert!(want <= bound);
                self.f.set(*mu, want);
                self.steps += 1;
                raised.push((*mu, before, want));
                if trace {
                    let pk = *self.f.packing();
                    self.trace.push(TraceEntry {
                        rule: rule.name.clone(),
                        levi: ex.levi.iter().map(|j| j + 1).collect(),
                        lambda: pk.unpack(lam),
                        lambda_mult: v,
                        divisor: ex.divisor,
                        mu: pk.unpack(mu),
                        before,
                        after: want,
                        bound,
                    });
                }
            }
        }
        raised
    }

    /// Applies every rule until no value changes.
    pub fn saturate(
        &mut self,
        d: &RootDatum,
        lib: &RuleLibrary,
        f_pi: &ExponentFunction,
        opts: SaturationOptions,
    ) -> Result<()> {
        if f_pi.packing() != self.f.packing() {
            return Err(Error::Precondition(
                "state and f_π use different packings".into(),
            ));
        }
        let pk = *self.f.packing();
        let mut pending: FxHashSet<PackedChar> = FxHashSet::default();
        let mut fifo: VecDeque<PackedChar> = VecDeque::new();
        let mut pool: Vec<PackedChar> = Vec::new();
        let mut rng = match opts.order {
            Order::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            Order::Fifo => None,
        };
        let mut initial: Vec<PackedChar> = self.f.iter().map(|(k, _)| *k).collect();
        initial.sort();
        for k in initial {
            pending.insert(k);
            if rng.is_some() {
                pool.push(k);
            } else {
                fifo.push_back(k);
            }
        }
        loop {
            let lam = match rng.as_mut() {
                Some(r) => {
                    if pool.is_empty() {
                        break;
                    }
                    let i = r.gen_range(0..pool.len());
                    pool.swap_remove(i)
                }
                None => match fifo.pop_front() {
                    Some(l) => l,
                    None => break,
                },
            };
            pending.remove(&lam);
            for (ri, rule) in lib.rules.iter().enumerate() {
                let single = [usize::MAX];
                let embs: &[Vec<usize>] = &lib.embeddings[ri];
                let iter: Box<dyn Iterator<Item = &[usize]>> = if rule.pattern.is_none() {
                    Box::new(std::iter::once(&single[..]))
                } else {
                    Box::new(embs.iter().map(|e| e.as_slice()))
                };
                for emb in iter {
                    let Some(ex) = expand(d, &pk, rule, emb, &lam) else {
                        continue;
                    };
                    for (mu, _, _) in self.force(&lam, rule, &ex, f_pi, opts.trace) {
                        if pending.insert(mu) {
                            if rng.is_some() {
                                pool.push(mu);
                            } else {
                                fifo.push_back(mu);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fires one rule on one embedding at `λ`. `levi` lists the 1-based image of
/// each pattern node and is ignored for OR.
pub fn apply_triple(
    d: &RootDatum,
    lib: &RuleLibrary,
    state: &mut BranchState,
    f_pi: &ExponentFunction,
    lambda: &CharacterX,
    rule_name: &str,
    levi: &[usize],
) -> Result<Expansion> {
    let ri = lib.rule_index(rule_name)?;
    let rule = &lib.rules[ri];
    let pk = *state.f.packing();
    let lam = pk
        .pack(lambda)
        .ok_or_else(|| Error::Overflow(format!("cannot pack {lambda}")))?;
    if state.f.get(&lam) == 0 {
        return Err(Error::RuleNotApplicable(format!(
            "{lambda} is not in the support of the state"
        )));
    }
    let emb: Vec<usize> = if rule.pattern.is_none() {
        vec![usize::MAX]
    } else {
        let emb: Vec<usize> = levi.iter().map(|&j| j.wrapping_sub(1)).collect();
        if !lib.embeddings[ri].contains(&emb) {
            return Err(Error::Config(format!(
                "nodes {levi:?} do not embed the {} diagram of rule {}",
                rule.pattern.map(|t| t.to_string()).unwrap_or_default(),
                rule.name
            )));
        }
        emb
    };
    let ex = expand(d, &pk, rule, &emb, &lam).ok_or_else(|| {
        Error::RuleNotApplicable(format!(
            "guard of {} fails at {lambda} on nodes {levi:?}",
            rule.name
        ))
    })?;
    state.force(&lam, rule, &ex, f_pi, true);
    Ok(ex)
}

/// `f_π` for a point together with its leading and anti-dominant exponents.
#[derive(Debug, Clone)]
pub struct PointData {
    pub f_pi: ExponentFunction,
    pub lambda0: CharacterX,
    pub lambda_ad: CharacterX,
    pub stab_order: u64,
}

impl PointData {
    pub fn new(d: &RootDatum, p: &DpsPoint) -> Result<Self> {
        let lambda0 = leading_exponent(d, p)?;
        let ad = antidominant_with_stabilizer(d, &lambda0)?;
        let packing = Packing::for_orbits(d, &[&lambda0])?;
        let f_pi = dps_exponents_packed(d, p.levi(d)?, &lambda0, packing)?;
        Ok(PointData {
            f_pi,
            lambda0,
            lambda_ad: ad.lambda_ad,
            stab_order: ad.stab_order,
        })
    }

    pub fn packing(&self) -> Packing {
        *self.f_pi.packing()
    }

    pub fn pack(&self, c: &CharacterX) -> Result<PackedChar> {
        self.packing()
            .pack(c)
            .ok_or_else(|| Error::Overflow(format!("cannot pack {c}")))
    }

    /// A state holding `mult · δ_λ`.
    pub fn seeded(&self, lambda: &CharacterX, mult: u32) -> Result<BranchState> {
        let p = self.pack(lambda)?;
        if self.f_pi.get(&p) < mult {
            return Err(Error::Precondition(format!(
                "seed {lambda} with multiplicity {mult} exceeds f_π = {}",
                self.f_pi.get(&p)
            )));
        }
        let mut st = BranchState::new(self.packing());
        st.f.set(p, mult);
        Ok(st)
    }

    /// Anti-dominant characters of the orbit lying in the support of `f_π`,
    /// canonical one first.
    pub fn antidominant_support(&self) -> Vec<CharacterX> {
        let pk = self.packing();
        let mut out: Vec<CharacterX> = self
            .f_pi
            .iter()
            .map(|(k, _)| pk.unpack(k))
            .filter(|c| c.re() == self.lambda_ad.re())
            .collect();
        out.sort();
        if let Some(pos) = out.iter().position(|c| *c == self.lambda_ad) {
            let c = out.remove(pos);
            out.insert(0, c);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationOutcome {
    /// The constituent through the seed has all of `r_T π`.
    Irreducible,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrreducibilityReport {
    pub outcome: SaturationOutcome,
    pub seed: CharacterX,
    pub steps: u64,
    pub clamps: u64,
    pub mass: u64,
    pub pi_mass: u64,
    /// Least character where the final state falls short of `f_π`.
    pub gap: Option<(CharacterX, u32, u32)>,
}

fn saturate_from(
    d: &RootDatum,
    lib: &RuleLibrary,
    pd: &PointData,
    seed: &CharacterX,
    opts: SaturationOptions,
) -> Result<(BranchState, IrreducibilityReport)> {
    let mut st = pd.seeded(seed, 1)?;
    st.saturate(d, lib, &pd.f_pi, opts)?;
    let pk = pd.packing();
    let gap = pd
        .f_pi
        .first_excess(&st.f)
        .map(|k| (pk.unpack(&k), st.f.get(&k), pd.f_pi.get(&k)));
    let outcome = if gap.is_none() && st.clamps == 0 {
        SaturationOutcome::Irreducible
    } else {
        SaturationOutcome::Inconclusive
    };
    let report = IrreducibilityReport {
        outcome,
        seed: seed.clone(),
        steps: st.steps,
        clamps: st.clamps,
        mass: st.f.total_mass(),
        pi_mass: pd.f_pi.total_mass(),
        gap,
    };
    Ok((st, report))
}

/// Saturates from `δ_μ` for each anti-dominant `μ` in the support of `f_π`
/// (canonical first) and reports irreducibility as soon as one seed
/// reaches `f_π`. Otherwise the report for the canonical seed is returned.
pub fn check_irreducible(
    d: &RootDatum,
    lib: &RuleLibrary,
    p: &DpsPoint,
    opts: SaturationOptions,
) -> Result<IrreducibilityReport> {
    let pd = PointData::new(d, p)?;
    let mut first: Option<IrreducibilityReport> = None;
    for seed in pd.antidominant_support() {
        let (_, report) = saturate_from(d, lib, &pd, &seed, opts)?;
        if report.outcome == SaturationOutcome::Irreducible {
            return Ok(report);
        }
        first.get_or_insert(report);
    }
    first.ok_or_else(|| {
        Error::Precondition(format!("no anti-dominant exponent in the support for {p}"))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniqueSubrepReport {
    /// `Some(true)` when the unique irreducible subrepresentation is proven.
    pub unique: Option<bool>,
    pub lambda0: CharacterX,
    pub pi_mult: u32,
    pub sigma_mult: u32,
    pub seed: Option<CharacterX>,
}

/// `π` has a unique irreducible subrepresentation when `f_π(λ₀) = 1`, or when
/// the constituent through an anti-dominant seed already carries all of
/// `f_π(λ₀)`.
pub fn check_unique_subrep(
    d: &RootDatum,
    lib: &RuleLibrary,
    p: &DpsPoint,
    opts: SaturationOptions,
) -> Result<UniqueSubrepReport> {
    let pd = PointData::new(d, p)?;
    let l0 = pd.pack(&pd.lambda0)?;
    let pi_mult = pd.f_pi.get(&l0);
    if pi_mult == 1 {
        return Ok(UniqueSubrepReport {
            unique: Some(true),
            lambda0: pd.lambda0.clone(),
            pi_mult,
            sigma_mult: 1,
            seed: None,
        });
    }
    let mut best = (0u32, None);
    for seed in pd.antidominant_support() {
        let (st, _) = saturate_from(d, lib, &pd, &seed, opts)?;
        let m = st.f.get(&l0);
        if m == pi_mult && st.clamps == 0 {
            return Ok(UniqueSubrepReport {
                unique: Some(true),
                lambda0: pd.lambda0.clone(),
                pi_mult,
                sigma_mult: m,
                seed: Some(seed),
            });
        }
        if m >= best.0 {
            best = (m, Some(seed));
        }
    }
    Ok(UniqueSubrepReport {
        unique: None,
        lambda0: pd.lambda0.clone(),
        pi_mult,
        sigma_mult: best.0,
        seed: best.1,
    })
}

/// A shortest `w` with `f(w·λ₀) = f_π(w·λ₀) ≠ 0`, ties broken by the least
/// target character. Breadth-first over the orbit of `λ₀`.
pub fn minimal_projection_word(
    d: &RootDatum,
    f: &ExponentFunction,
    f_pi: &ExponentFunction,
    lambda0: &CharacterX,
) -> Result<Option<(Vec<u8>, CharacterX)>> {
    let pk = *f_pi.packing();
    let start = pk
        .pack(lambda0)
        .ok_or_else(|| Error::Overflow(format!("cannot pack {lambda0}")))?;
    let mut seen: FxHashMap<PackedChar, Vec<u8>> = FxHashMap::default();
    seen.insert(start, Vec::new());
    let mut layer = vec![start];
    while !layer.is_empty() {
        let mut hits: Vec<PackedChar> = layer
            .iter()
            .filter(|mu| {
                let v = f_pi.get(mu);
                v != 0 && f.get(mu) == v
            })
            .copied()
            .collect();
        if !hits.is_empty() {
            hits.sort();
            let mu = hits[0];
            return Ok(Some((seen[&mu].clone(), pk.unpack(&mu))));
        }
        let mut next = Vec::new();
        for mu in &layer {
            for j in 0..d.rank() {
                let mut nu = *mu;
                pk.reflect(d, &mut nu, j);
                if !seen.contains_key(&nu) {
                    let mut w = vec![j as u8];
                    w.extend_from_slice(&seen[mu]);
                    seen.insert(nu, w);
                    next.push(nu);
                }
            }
        }
        layer = next;
    }
    Ok(None)
}

/// One step of a replayable derivation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptStep {
    /// Starts or extends a named state with `mult · δ_λ`.
    Seed {
        state: String,
        lambda: String,
        mult: u32,
    },
    /// Fires a rule at `from`. For A1 the word may have several letters, each
    /// fired in turn; for other rules the word picks the reported target.
    Rule {
        state: String,
        rule: String,
        #[serde(default)]
        levi: Vec<usize>,
        #[serde(default)]
        word: String,
        from: String,
        to: String,
        expect: u32,
    },
    /// `from` is a state seeded at a single character with multiplicity one.
    /// If `into` already carries all of `f_π(via)` and `from` reaches `via`,
    /// every constituent through the seed of `from` is the constituent of
    /// `into`; that seed then gets its full `f_π` value in `into`.
    Absorb {
        into: String,
        from: String,
        via: String,
    },
    Saturate {
        state: String,
    },
    /// Checks `f(λ) = mult`, or `f(λ) = f_π(λ)` when `mult` is absent.
    Assert {
        state: String,
        lambda: String,
        #[serde(default)]
        mult: Option<u32>,
    },
    /// Checks `f(λ₀) = f_π(λ₀)`: the state's constituent is then the unique
    /// irreducible subrepresentation.
    Conclude {
        state: String,
    },
    /// Requests the kernel of `n_w(λ₀)` on the Iwahori-fixed vectors. Replay
    /// checks the word and `λ₁ = w·λ₀`; the kernel itself is computed by the
    /// caller from [`ReplayReport::kernel_requests`].
    Kernel {
        word: String,
        q: i64,
        #[serde(default)]
        lambda1: Option<String>,
        rank: usize,
        kernel: usize,
    },
}

/// The reserved state name that reads `f_π` in an `assert` step.
pub const PI_STATE: &str = "pi";

/// A kernel computation requested by a script, with its expected outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KernelRequest {
    pub step: usize,
    /// 0-based letters.
    pub word: Vec<u8>,
    pub q: i64,
    pub rank: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptPoint {
    pub i: usize,
    pub s: String,
    pub k: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Script {
    pub name: String,
    pub datum: String,
    pub point: ScriptPoint,
    pub steps: Vec<ScriptStep>,
}

impl Script {
    pub fn dps_point(&self) -> Result<DpsPoint> {
        Ok(DpsPoint::new(
            self.point.i,
            crate::charlat::parse_q(&self.point.s)?,
            self.point.k,
        ))
    }
}

/// One replayed row: `f(from) = k`, rule, word, `f(to) = l`.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayRow {
    pub step: usize,
    pub state: String,
    pub op: String,
    pub rule: Option<String>,
    pub levi: Vec<usize>,
    pub word: String,
    pub from: Option<CharacterX>,
    pub k: Option<u32>,
    pub to: CharacterX,
    pub l: u32,
}

impl fmt::Display for ReplayRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>3} {:<6} {:<8}", self.step, self.state, self.op)?;
        if let (Some(from), Some(k)) = (&self.from, self.k) {
            write!(f, " {from} ({k})")?;
        }
        if let Some(r) = &self.rule {
            write!(f, " {r}")?;
            if !self.levi.is_empty() {
                write!(f, " {:?}", self.levi)?;
            }
            if !self.word.is_empty() {
                write!(f, " {}", self.word)?;
            }
        }
        write!(f, " -> {} ({})", self.to, self.l)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub name: String,
    pub point: DpsPoint,
    pub rows: Vec<ReplayRow>,
    /// Set by a successful `conclude` step.
    pub unique_subrep: bool,
    pub kernel_requests: Vec<KernelRequest>,
}

fn state_mut<'a>(
    states: &'a mut FxHashMap<String, (BranchState, Vec<(CharacterX, u32)>)>,
    name: &str,
) -> Result<&'a mut (BranchState, Vec<(CharacterX, u32)>)> {
    states
        .get_mut(name)
        .ok_or_else(|| Error::Config(format!("state {name:?} used before it was seeded")))
}

/// Replays a script; any failed expectation is an [`Error::Assertion`].
pub fn replay(d: &RootDatum, lib: &RuleLibrary, script: &Script) -> Result<ReplayReport> {
    replay_with_states(d, lib, script).map(|(r, _)| r)
}

/// As [`replay`], also returning the final named states.
pub fn replay_with_states(
    d: &RootDatum,
    lib: &RuleLibrary,
    script: &Script,
) -> Result<(ReplayReport, BTreeMap<String, BranchState>)> {
    if script.datum != d.label.to_string() {
        return Err(Error::Config(format!(
            "script is for {} but the datum is {}",
            script.datum, d.label
        )));
    }
    let p = script.dps_point()?;
    let pd = PointData::new(d, &p)?;
    let mut states: FxHashMap<String, (BranchState, Vec<(CharacterX, u32)>)> = FxHashMap::default();
    let mut rows = Vec::new();
    let mut unique_subrep = false;
    let mut kernel_requests = Vec::new();
    let value = |st: &BranchState, c: &CharacterX| -> Result<u32> { Ok(st.f.get(&pd.pack(c)?)) };
    for (idx, step) in script.steps.iter().enumerate() {
        let n = idx + 1;
        match step {
            ScriptStep::Seed {
                state,
                lambda,
                mult,
            } => {
                let c = parse_character(lambda)?;
                let entry = states
                    .entry(state.clone())
                    .or_insert_with(|| (BranchState::new(pd.packing()), Vec::new()));
                let pc = pd.pack(&c)?;
                if pd.f_pi.get(&pc) < *mult {
                    return Err(Error::Assertion(format!(
                        "step {n}: seed {c} with multiplicity {mult} exceeds f_π = {}",
                        pd.f_pi.get(&pc)
                    )));
                }
                let v = entry.0.f.get(&pc).max(*mult);
                entry.0.f.set(pc, v);
                entry.1.push((c.clone(), *mult));
                rows.push(ReplayRow {
                    step: n,
                    state: state.clone(),
                    op: "seed".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: String::new(),
                    from: None,
                    k: None,
                    to: c,
                    l: v,
                });
            }
            ScriptStep::Rule {
                state,
                rule,
                levi,
                word,
                from,
                to,
                expect,
            } => {
                let from_c = parse_character(from)?;
                let to_c = parse_character(to)?;
                let letters = parse_word(word, d.rank())?;
                let (st, _) = state_mut(&mut states, state)?;
                let k = value(st, &from_c)?;
                let ri = lib.rule_index(rule)?;
                let mut reached = from_c.clone();
                if lib.rules[ri].family == "A1" && letters.len() != 1 {
                    for &j in letters.iter().rev() {
                        apply_triple(d, lib, st, &pd.f_pi, &reached, rule, &[j as usize + 1])
                            .map_err(|e| Error::Assertion(format!("step {n}: {e}")))?;
                        reached.reflect(d, j as usize);
                    }
                } else {
                    let nodes: Vec<usize> = if lib.rules[ri].family == "A1" {
                        vec![letters[0] as usize + 1]
                    } else {
                        levi.clone()
                    };
                    let ex = apply_triple(d, lib, st, &pd.f_pi, &from_c, rule, &nodes)
                        .map_err(|e| Error::Assertion(format!("step {n}: {e}")))?;
                    reached.apply_word(d, &letters);
                    let rp = pd.pack(&reached)?;
                    if !ex.targets.iter().any(|(t, _)| *t == rp) {
                        return Err(Error::Assertion(format!(
                            "step {n}: {} is not a target of {rule} at {from_c}",
                            format_word(&letters)
                        )));
                    }
                }
                if reached != to_c {
                    return Err(Error::Assertion(format!(
                        "step {n}: {} applied to {from_c} gives {reached}, not {to_c}",
                        format_word(&letters)
                    )));
                }
                let l = value(st, &to_c)?;
                if l != *expect {
                    return Err(Error::Assertion(format!(
                        "step {n}: f({to_c}) = {l}, expected {expect}"
                    )));
                }
                rows.push(ReplayRow {
                    step: n,
                    state: state.clone(),
                    op: "rule".into(),
                    rule: Some(lib.rules[ri].name.clone()),
                    levi: levi.clone(),
                    word: format_word(&letters),
                    from: Some(from_c),
                    k: Some(k),
                    to: to_c,
                    l,
                });
            }
            ScriptStep::Absorb { into, from, via } => {
                let via_c = parse_character(via)?;
                let vp = pd.pack(&via_c)?;
                let (from_st, from_seeds) = state_mut(&mut states, from)?.clone();
                if from_seeds.len() != 1 || from_seeds[0].1 != 1 {
                    return Err(Error::Assertion(format!(
                        "step {n}: state {from:?} must be seeded once with multiplicity one"
                    )));
                }
                let (into_st, _) = state_mut(&mut states, into)?;
                let full = pd.f_pi.get(&vp);
                if into_st.f.get(&vp) != full || from_st.f.get(&vp) == 0 {
                    return Err(Error::Assertion(format!(
                        "step {n}: cannot identify constituents at {via_c}: f_{into} = {}, f_{from} = {}, f_π = {full}",
                        into_st.f.get(&vp),
                        from_st.f.get(&vp)
                    )));
                }
                for (k, &v) in from_st.f.iter() {
                    if into_st.f.get(k) < v {
                        into_st.f.set(*k, v);
                    }
                }
                let seed = &from_seeds[0].0;
                let sp = pd.pack(seed)?;
                let l = pd.f_pi.get(&sp);
                into_st.f.set(sp, l);
                rows.push(ReplayRow {
                    step: n,
                    state: into.clone(),
                    op: "absorb".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: String::new(),
                    from: Some(via_c),
                    k: Some(full),
                    to: seed.clone(),
                    l,
                });
            }
            ScriptStep::Saturate { state } => {
                let (st, _) = state_mut(&mut states, state)?;
                st.saturate(d, lib, &pd.f_pi, SaturationOptions::default())?;
                if st.clamps > 0 {
                    return Err(Error::Assertion(format!(
                        "step {n}: saturation clamped {} values",
                        st.clamps
                    )));
                }
                rows.push(ReplayRow {
                    step: n,
                    state: state.clone(),
                    op: "saturate".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: String::new(),
                    from: None,
                    k: None,
                    to: pd.lambda0.clone(),
                    l: value(st, &pd.lambda0)?,
                });
            }
            ScriptStep::Assert {
                state,
                lambda,
                mult,
            } => {
                let c = parse_character(lambda)?;
                let got = if state == PI_STATE {
                    pd.f_pi.get(&pd.pack(&c)?)
                } else {
                    let (st, _) = state_mut(&mut states, state)?;
                    value(st, &c)?
                };
                let want = match mult {
                    Some(m) => *m,
                    None => pd.f_pi.get(&pd.pack(&c)?),
                };
                if got != want {
                    return Err(Error::Assertion(format!(
                        "step {n}: f({c}) = {got}, expected {want}"
                    )));
                }
                rows.push(ReplayRow {
                    step: n,
                    state: state.clone(),
                    op: "assert".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: String::new(),
                    from: None,
                    k: None,
                    to: c,
                    l: got,
                });
            }
            ScriptStep::Conclude { state } => {
                let (st, _) = state_mut(&mut states, state)?;
                let got = value(st, &pd.lambda0)?;
                let full = pd.f_pi.get(&pd.pack(&pd.lambda0)?);
                if got != full || st.clamps > 0 {
                    return Err(Error::Assertion(format!(
                        "step {n}: f({}) = {got} but f_π = {full}",
                        pd.lambda0
                    )));
                }
                unique_subrep = true;
                rows.push(ReplayRow {
                    step: n,
                    state: state.clone(),
                    op: "conclude".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: String::new(),
                    from: None,
                    k: None,
                    to: pd.lambda0.clone(),
                    l: got,
                });
            }
            ScriptStep::Kernel {
                word,
                q,
                lambda1,
                rank,
                kernel,
            } => {
                let letters = parse_word(word, d.rank())?;
                if d.element_from_word(&letters)?.length() != letters.len() {
                    return Err(Error::Assertion(format!("step {n}: {word} is not reduced")));
                }
                if rank + kernel
                    != d.min_double_coset_reps(LeviSpec::empty(), p.levi(d)?)?
                        .len()
                {
                    return Err(Error::Assertion(format!(
                        "step {n}: rank {rank} plus kernel {kernel} is not the module dimension"
                    )));
                }
                let mut reached = pd.lambda0.clone();
                reached.apply_word(d, &letters);
                if let Some(l1) = lambda1 {
                    let want = parse_character(l1)?;
                    if reached != want {
                        return Err(Error::Assertion(format!(
                            "step {n}: {word} maps λ₀ to {reached}, not {want}"
                        )));
                    }
                }
                kernel_requests.push(KernelRequest {
                    step: n,
                    word: letters.clone(),
                    q: *q,
                    rank: *rank,
                    kernel: *kernel,
                });
                rows.push(ReplayRow {
                    step: n,
                    state: PI_STATE.into(),
                    op: "kernel".into(),
                    rule: None,
                    levi: Vec::new(),
                    word: format_word(&letters),
                    from: Some(pd.lambda0.clone()),
                    k: Some(pd.f_pi.get(&pd.pack(&pd.lambda0)?)),
                    l: pd.f_pi.get(&pd.pack(&reached)?),
                    to: reached,
                });
            }
        }
    }
    let states = states.into_iter().map(|(k, (st, _))| (k, st)).collect();
    Ok((
        ReplayReport {
            name: script.name.clone(),
            point: p,
            rows,
            unique_subrep,
            kernel_requests,
        },
        states,
    ))
}
