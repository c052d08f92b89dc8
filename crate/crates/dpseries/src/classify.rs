//! Regularity, the regular-case reducibility criterion, enumeration of the
//! finitely many special points on a line `s ↦ (s + χ)ϖ_i`, and Tadić's
//! reducibility test against a candidate degenerate principal series.

use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::charlat::{
    antidominant_with_stabilizer, is_plus_minus_one, leading_exponent, pairing_coeffs, q_serde,
    q_to_string, rho_levi, CharacterX, DpsPoint, Q,
};
use crate::error::{Error, Result};
use crate::jacquet::{dps_exponents_packed, Packing};
use crate::rootsys::{LeviSpec, RootDatum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Regular,
    NonRegular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Irreducible,
    Reducible,
    ReducibleRegular,
    Inconclusive,
}

impl fmt::Display for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularity::Regular => "regular",
            Regularity::NonRegular => "non_regular",
        })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Irreducible => "irreducible",
            Verdict::Reducible => "reducible",
            Verdict::ReducibleRegular => "reducible_regular",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Machine-checkable support for a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Evidence {
    /// Regular and no root pairs to `±1`.
    RegularNoUnitPairing,
    /// Regular with a positive root `γ ∉ Φ_M` such that `⟨λ₀, γ̌⟩ = ±1`.
    RegularUnitPairing { root: Vec<i32>, pairing: String },
    /// Tadić's test succeeded against `candidate`.
    Tadic {
        candidate: String,
        lambda_ad: CharacterX,
        stab_order: u64,
        witness: CharacterX,
        mult_pi: u32,
        mult_sigma: u32,
    },
    /// A saturation run reached the full exponent function of `π`.
    Saturation {
        seeds: Vec<(CharacterX, u32)>,
        steps: usize,
        mass: u64,
    },
    /// A replayed proof script passed every assertion.
    Script { name: String, steps: usize },
    /// Kernel of an intertwiner on the Iwahori-fixed vectors.
    Kernel {
        word: String,
        q: u64,
        rank: usize,
        kernel_dim: usize,
        certification: String,
    },
    /// The engine does not compute this verdict; it is taken from the
    /// reference data with a citation.
    Reference { citation: String },
    /// The point is non-regular and no method produced a verdict.
    NoMethod { note: String },
}

/// Outcome for one point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub i: usize,
    #[serde(with = "q_serde")]
    pub s: Q,
    pub k: u32,
    pub regularity: Regularity,
    pub verdict: Verdict,
    pub evidence: Evidence,
}

impl PointVerdict {
    pub fn point(&self) -> DpsPoint {
        DpsPoint::new(self.i, self.s, self.k)
    }

    /// Header of [`PointVerdict::csv_row`].
    pub const CSV_HEADER: &'static str = "i,s,k,regularity,verdict,evidence";

    pub fn csv_row(&self) -> String {
        let ev = serde_json::to_value(&self.evidence).expect("serializable");
        let tag = ev
            .get("criterion")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string();
        format!(
            "{},{},{},{},{},{}",
            self.i,
            q_to_string(&self.s),
            self.k,
            self.regularity,
            self.verdict,
            tag
        )
    }
}

/// True iff `λ₀` (equivalently any element of its orbit) has trivial stabilizer.
pub fn is_regular(d: &RootDatum, p: &DpsPoint) -> Result<bool> {
    let l0 = leading_exponent(d, p)?;
    Ok(antidominant_with_stabilizer(d, &l0)?.stab_order == 1)
}

/// Witness for the regular reducibility criterion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPairing {
    /// Index into `d.positive_roots`.
    pub root: usize,
    pub pairing: Q,
}

/// The first positive root outside `Φ_M` (in datum order) whose coroot pairs
/// with `λ₀` to exactly `±1` with trivial torsion, if any.
pub fn unit_pairing_root(d: &RootDatum, p: &DpsPoint) -> Result<Option<UnitPairing>> {
    let l0 = leading_exponent(d, p)?;
    let i = p.i - 1;
    for (r, coeffs) in d.coroot_coeffs.iter().enumerate() {
        if coeffs[i] == 0 {
            continue;
        }
        let pr = pairing_coeffs(&l0, coeffs);
        if is_plus_minus_one(&pr) {
            return Ok(Some(UnitPairing {
                root: r,
                pairing: pr.0,
            }));
        }
    }
    Ok(None)
}

/// For a regular point, `Some(witness)` iff the point is reducible.
pub fn regular_reducibility(d: &RootDatum, p: &DpsPoint) -> Result<Option<UnitPairing>> {
    if !is_regular(d, p)? {
        return Err(Error::Precondition(format!("point {p} is not regular")));
    }
    unit_pairing_root(d, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialKind {
    RegularReducible,
    NonRegular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialPoint {
    #[serde(with = "q_serde")]
    pub s: Q,
    pub kind: SpecialKind,
}

/// All `s ≤ 0` for which `(i, s, k)` is regular-reducible or non-regular,
/// sorted by `s`.
///
/// For `γ ∈ Φ⁺ ∖ Φ_M` with coefficient `m_i > 0` at `α̌_i`, the real pairing
/// is `s·m_i − ⟨ρ_M, γ̌⟩`. Candidates solve it equal to `δ ∈ {0, ±1}`; the
/// `±1` equations are only relevant when `k | m_i`, since otherwise the
/// torsion part of the pairing is nonzero. Each candidate is then settled by
/// the exact stabilizer and unit-pairing tests.
pub fn enumerate_special_points(d: &RootDatum, i: usize, k: u32) -> Result<Vec<SpecialPoint>> {
    DpsPoint::new(i, Q::zero(), k).validate(d)?;
    let theta = LeviSpec::maximal(d.rank(), i)?;
    let rho_m = rho_levi(d, theta);
    let mut cands: Vec<Q> = Vec::new();
    for coeffs in &d.coroot_coeffs {
        let m = coeffs[i - 1] as i64;
        if m == 0 {
            continue;
        }
        let r = pairing_coeffs(&rho_m, coeffs).0;
        for delta in [-1i64, 0, 1] {
            if delta != 0 && m % k as i64 != 0 {
                continue;
            }
            let s = (r + Q::from_integer(delta)) / Q::from_integer(m);
            if !s.is_positive() {
                cands.push(s);
            }
        }
    }
    cands.sort();
    cands.dedup();
    let mut out = Vec::new();
    for s in cands {
        let p = DpsPoint::new(i, s, k);
        if !is_regular(d, &p)? {
            out.push(SpecialPoint {
                s,
                kind: SpecialKind::NonRegular,
            });
        } else if unit_pairing_root(d, &p)?.is_some() {
            out.push(SpecialPoint {
                s,
                kind: SpecialKind::RegularReducible,
            });
        }
    }
    Ok(out)
}

/// A degenerate principal series used as `σ` in Tadić's test.
///
/// `Corank1 { j, t, k }` is `i_{M_j}((t + χ)ϖ_j)` with `χ` of order `k`.
/// `Corank2` is induced from the Levi with `α_{j1}, α_{j2}` removed. Its
/// leading exponent `Ω|_T − ρ_L` has real coordinate `s_r` and torsion
/// `m_r / k` at `α_{j_r}`, where `k` is the order of the character of the
/// point under test; all other coordinates are `−1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "corank", rename_all = "snake_case")]
pub enum CandidateSpec {
    #[serde(rename = "1")]
    Corank1 {
        j: usize,
        #[serde(with = "q_serde")]
        t: Q,
        k: u32,
    },
    #[serde(rename = "2")]
    Corank2 {
        j: (usize, usize),
        #[serde(with = "pair_serde")]
        s: (Q, Q),
        m: (u32, u32),
    },
}

mod pair_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &(Q, Q), s: S) -> std::result::Result<S::Ok, S::Error> {
        (q_to_string(&p.0), q_to_string(&p.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<(Q, Q), D::Error> {
        let (a, b): (String, String) = Deserialize::deserialize(d)?;
        let pa = crate::charlat::parse_q(&a).map_err(serde::de::Error::custom)?;
        let pb = crate::charlat::parse_q(&b).map_err(serde::de::Error::custom)?;
        Ok((pa, pb))
    }
}

impl fmt::Display for CandidateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateSpec::Corank1 { j, t, k } => write!(f, "[{j},{t},{k}]"),
            CandidateSpec::Corank2 { j, s, m } => {
                write!(f, "[({},{}),({},{}),({},{})]", j.0, j.1, s.0, s.1, m.0, m.1)
            }
        }
    }
}

impl FromStr for CandidateSpec {
    type Err = Error;

    /// Parses `[j,t,k]` or `[(j1,j2),(s1,s2),(m1,m2)]`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad candidate {text:?}"));
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = t
            .strip_prefix('[')
            .and_then(|x| x.strip_suffix(']'))
            .ok_or_else(bad)?;
        if inner.starts_with('(') {
            let parts: Vec<&str> = inner
                .split(&['(', ')'][..])
                .map(|x| x.trim_matches(','))
                .filter(|x| !x.is_empty())
                .collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let pair = |p: &str| -> Result<(String, String)> {
                let (a, b) = p.split_once(',').ok_or_else(bad)?;
                Ok((a.to_string(), b.to_string()))
            };
            let (j1, j2) = pair(parts[0])?;
            let (s1, s2) = pair(parts[1])?;
            let (m1, m2) = pair(parts[2])?;
            Ok(CandidateSpec::Corank2 {
                j: (
                    j1.parse().map_err(|_| bad())?,
                    j2.parse().map_err(|_| bad())?,
                ),
                s: (crate::charlat::parse_q(&s1)?, crate::charlat::parse_q(&s2)?),
                m: (
                    m1.parse().map_err(|_| bad())?,
                    m2.parse().map_err(|_| bad())?,
                ),
            })
        } else {
            let parts: Vec<&str> = inner.split(',').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(CandidateSpec::Corank1 {
                j: parts[0].parse().map_err(|_| bad())?,
                t: crate::charlat::parse_q(parts[1])?,
                k: parts[2].parse().map_err(|_| bad())?,
            })
        }
    }
}

impl CandidateSpec {
    /// The Levi `Θ_L` the candidate is induced from.
    pub fn levi(&self, d: &RootDatum) -> Result<LeviSpec> {
        let n = d.rank();
        let check = |j: usize| -> Result<()> {
            if j == 0 || j > n {
                return Err(Error::Config(format!(
                    "candidate index {j} out of range 1..={n}"
                )));
            }
            Ok(())
        };
        match self {
            CandidateSpec::Corank1 { j, .. } => {
                check(*j)?;
                Ok(LeviSpec::full(n).without(j - 1))
            }
            CandidateSpec::Corank2 { j, .. } => {
                check(j.0)?;
                check(j.1)?;
                if j.0 == j.1 {
                    return Err(Error::Config(format!(
                        "candidate {self} repeats a simple root"
                    )));
                }
                Ok(LeviSpec::full(n).without(j.0 - 1).without(j.1 - 1))
            }
        }
    }

    /// `r_T^L(τ) = Ω|_T − ρ_L` for the candidate, given the order `k_pi` of
    /// the character of the point under test.
    pub fn leading_exponent(&self, d: &RootDatum, k_pi: u32) -> Result<CharacterX> {
        let theta = self.levi(d)?;
        let n = d.rank();
        let rho = rho_levi(d, theta);
        let mut re: Vec<Q> = rho.re().iter().map(|x| -*x).collect();
        let mut tors = vec![Q::zero(); n];
        match self {
            CandidateSpec::Corank1 { j, t, k } => {
                if *k == 0 {
                    return Err(Error::Config(
                        "candidate character order must be at least 1".into(),
                    ));
                }
                re[j - 1] += *t;
                tors[j - 1] = Q::new(1, *k as i64);
            }
            CandidateSpec::Corank2 { j, s, m } => {
                re[j.0 - 1] = s.0;
                re[j.1 - 1] = s.1;
                tors[j.0 - 1] = Q::new(m.0 as i64, k_pi as i64);
                tors[j.1 - 1] = Q::new(m.1 as i64, k_pi as i64);
            }
        }
        CharacterX::new(re, tors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TadicOutcome {
    ReducibleConfirmed,
    Inconclusive,
}

/// Full record of one application of Tadić's test with
/// `Π = i_T^G(λ_ad)` and `σ = i_L^G(τ)`.
#[derive(Debug, Clone)]
pub struct TadicReport {
    pub outcome: TadicOutcome,
    pub lambda_ad: CharacterX,
    pub stab_order: u64,
    /// `f_π(λ_ad)` and `f_σ(λ_ad)`; condition (2) needs their sum to exceed
    /// `stab_order = f_Π(λ_ad)`.
    pub ad_mult_pi: u32,
    pub ad_mult_sigma: u32,
    /// Least `μ` (canonical order) with `f_π(μ) > f_σ(μ)`, with both values.
    pub witness: Option<(CharacterX, u32, u32)>,
}

impl TadicReport {
    pub fn evidence(&self, candidate: &CandidateSpec) -> Option<Evidence> {
        let (w, a, b) = self.witness.clone()?;
        (self.outcome == TadicOutcome::ReducibleConfirmed).then(|| Evidence::Tadic {
            candidate: candidate.to_string(),
            lambda_ad: self.lambda_ad.clone(),
            stab_order: self.stab_order,
            witness: w,
            mult_pi: a,
            mult_sigma: b,
        })
    }
}

/// Tadić's reducibility test for `π = i_{M_i}^G(Ω)` against a candidate.
///
/// Condition (1) holds because both representations embed in `Π`'s
/// semisimplification when they share the orbit of `λ_ad`, which is checked
/// here. Condition (2) is witnessed at `λ_ad` and condition (3) by the least
/// exponent where `π` has larger multiplicity than `σ`.
pub fn tadic_test(d: &RootDatum, p: &DpsPoint, candidate: &CandidateSpec) -> Result<TadicReport> {
    let l_pi = leading_exponent(d, p)?;
    let l_sigma = candidate.leading_exponent(d, p.k)?;
    let ad_pi = antidominant_with_stabilizer(d, &l_pi)?;
    let ad_sigma = antidominant_with_stabilizer(d, &l_sigma)?;
    if ad_pi.lambda_ad != ad_sigma.lambda_ad {
        return Err(Error::Precondition(format!(
            "candidate {candidate} has anti-dominant exponent {} outside the orbit of {}",
            ad_sigma.lambda_ad, ad_pi.lambda_ad
        )));
    }
    let packing = Packing::for_orbits(d, &[&l_pi, &l_sigma])?;
    let f_pi = dps_exponents_packed(d, p.levi(d)?, &l_pi, packing)?;
    let f_sigma = dps_exponents_packed(d, candidate.levi(d)?, &l_sigma, packing)?;
    let ad_mult_pi = f_pi.multiplicity(&ad_pi.lambda_ad);
    let ad_mult_sigma = f_sigma.multiplicity(&ad_pi.lambda_ad);
    let cond2 = ad_mult_pi as u64 + ad_mult_sigma as u64 > ad_pi.stab_order;
    let witness = f_pi
        .first_excess(&f_sigma)
        .map(|m| (packing.unpack(&m), f_pi.get(&m), f_sigma.get(&m)));
    let outcome = if cond2 && witness.is_some() {
        TadicOutcome::ReducibleConfirmed
    } else {
        TadicOutcome::Inconclusive
    };
    Ok(TadicReport {
        outcome,
        lambda_ad: ad_pi.lambda_ad,
        stab_order: ad_pi.stab_order,
        ad_mult_pi,
        ad_mult_sigma,
        witness,
    })
}
