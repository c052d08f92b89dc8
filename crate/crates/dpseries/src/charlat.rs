//! Characters of the torus in fundamental-weight coordinates, with an exact
//! rational real part and a finite-order part kept modulo 1.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rootsys::{LeviSpec, RootDatum, WeylElement};

/// Exact rational used for real parts and torsion.
pub type Q = Ratio<i64>;

/// Reduces a rational into `[0, 1)`.
pub fn frac(q: Q) -> Q {
    q - q.floor()
}

/// Formats a rational as `p/q`, always with an explicit denominator.
pub fn q_to_string(q: &Q) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `p/q`, `p` or a decimal-free integer.
pub fn parse_q(text: &str) -> Result<Q> {
    let t = text.trim();
    let bad = || Error::Config(format!("not a rational number: {text:?}"));
    match t.split_once('/') {
        Some((a, b)) => {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(bad());
            }
            Ok(Q::new(a, b))
        }
        None => Ok(Q::from_integer(t.parse().map_err(|_| bad())?)),
    }
}

/// A character `λ = Σ c_i ϖ_i` of the torus. Each coordinate is a pair
/// `(real, tors)` with `tors` reduced into `[0, 1)`; torsion `j/k` stands for
/// the `j`-th power of a character of order `k`.
///
/// Ordering is lexicographic on the real tuple, then on the torsion tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharacterX {
    re: Vec<Q>,
    tors: Vec<Q>,
}

impl CharacterX {
    pub fn new(re: Vec<Q>, tors: Vec<Q>) -> Result<Self> {
        if re.len() != tors.len() {
            return Err(Error::Dimension {
                expected: re.len(),
                got: tors.len(),
            });
        }
        Ok(CharacterX {
            re,
            tors: tors.into_iter().map(frac).collect(),
        })
    }

    pub fn real(re: Vec<Q>) -> Self {
        let n = re.len();
        CharacterX {
            re,
            tors: vec![Q::zero(); n],
        }
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Self::real(c.iter().map(|&x| Q::from_integer(x)).collect())
    }

    pub fn zero(rank: usize) -> Self {
        Self::real(vec![Q::zero(); rank])
    }

    pub fn rank(&self) -> usize {
        self.re.len()
    }

    pub fn re(&self) -> &[Q] {
        &self.re
    }

    pub fn tors(&self) -> &[Q] {
        &self.tors
    }

    pub fn coord(&self, j: usize) -> (Q, Q) {
        (self.re[j], self.tors[j])
    }

    pub fn is_real(&self) -> bool {
        self.tors.iter().all(Zero::is_zero)
    }

    /// Applies `s_j`; torsion follows the same integer combination mod 1.
    pub fn reflect(&mut self, d: &RootDatum, j: usize) {
        d.reflect_weight(&mut self.re, j);
        d.reflect_weight(&mut self.tors, j);
        self.tors[j] = frac(self.tors[j]);
        for &i in d.neighbors(j) {
            self.tors[i] = frac(self.tors[i]);
        }
    }

    pub fn apply_word(&mut self, d: &RootDatum, word: &[u8]) {
        for &j in word.iter().rev() {
            self.reflect(d, j as usize);
        }
    }

    pub fn check_rank(&self, d: &RootDatum) -> Result<()> {
        if self.rank() != d.rank() {
            return Err(Error::Dimension {
                expected: d.rank(),
                got: self.rank(),
            });
        }
        Ok(())
    }

    /// Common denominator of the real coordinates.
    pub fn re_denominator(&self) -> i64 {
        self.re.iter().fold(1, |l, q| l.lcm(q.denom()))
    }

    /// Common denominator of the torsion coordinates.
    pub fn tors_denominator(&self) -> i64 {
        self.tors.iter().fold(1, |l, q| l.lcm(q.denom()))
    }
}

impl fmt::Display for CharacterX {
    /// Renders `[c1,...,cn]`; a coordinate with torsion shows as `re[t]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (j, (r, t)) in self.re.iter().zip(&self.tors).enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
            if !t.is_zero() {
                write!(f, "[{t}]")?;
            }
        }
        write!(f, "]")
    }
}

#[derive(Serialize, Deserialize)]
struct CoordJson {
    re: String,
    tors: String,
}

impl Serialize for CharacterX {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<CoordJson> = self
            .re
            .iter()
            .zip(&self.tors)
            .map(|(r, t)| CoordJson {
                re: q_to_string(r),
                tors: q_to_string(t),
            })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CharacterX {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<CoordJson> = Vec::deserialize(d)?;
        let mut re = Vec::with_capacity(v.len());
        let mut tors = Vec::with_capacity(v.len());
        for c in v {
            re.push(parse_q(&c.re).map_err(D::Error::custom)?);
            tors.push(parse_q(&c.tors).map_err(D::Error::custom)?);
        }
        CharacterX::new(re, tors).map_err(D::Error::custom)
    }
}

/// Parses the display form `[-1,5,0[1/2],...]` (torsion in brackets after a
/// coordinate) or the JSON form.
pub fn parse_character(text: &str) -> Result<CharacterX> {
    let t = text.trim();
    if t.starts_with("[{") || t.starts_with("[ {") {
        return serde_json::from_str(t)
            .map_err(|e| Error::Config(format!("bad character JSON: {e}")));
    }
    let inner = t
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .ok_or_else(|| Error::Config(format!("character {text:?} must be enclosed in brackets")))?;
    let mut re = Vec::new();
    let mut tors = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        match part.split_once('[') {
            Some((r, rest)) => {
                let tq = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("unbalanced torsion in {part:?}")))?;
                re.push(parse_q(r)?);
                tors.push(parse_q(tq)?);
            }
            None => {
                re.push(parse_q(part)?);
                tors.push(Q::zero());
            }
        }
    }
    CharacterX::new(re, tors)
}

/// `w · λ`.
pub fn weyl_act(d: &RootDatum, w: &WeylElement, lambda: &CharacterX) -> Result<CharacterX> {
    lambda.check_rank(d)?;
    let mut out = lambda.clone();
    out.apply_word(d, w.word());
    Ok(out)
}

/// `⟨λ, γ̌⟩` for the positive root with index `root` in `d.positive_roots`.
pub fn pairing(d: &RootDatum, lambda: &CharacterX, root: usize) -> (Q, Q) {
    pairing_coeffs(lambda, &d.coroot_coeffs[root])
}

/// `⟨λ, γ̌⟩` for a coroot given by its coefficients over the simple coroots.
pub fn pairing_coeffs(lambda: &CharacterX, coeffs: &[i32]) -> (Q, Q) {
    let mut re = Q::zero();
    let mut tors = Q::zero();
    for (j, &m) in coeffs.iter().enumerate() {
        if m != 0 {
            re += lambda.re[j] * Q::from_integer(m as i64);
            tors += lambda.tors[j] * Q::from_integer(m as i64);
        }
    }
    (re, frac(tors))
}

/// True when the pairing equals `±1` exactly: real part `±1` and trivial torsion.
pub fn is_plus_minus_one(p: &(Q, Q)) -> bool {
    p.1.is_zero() && p.0.abs().is_one()
}

/// Half the sum of the positive roots of `M_Θ`, in fundamental-weight coordinates.
pub fn rho_levi(d: &RootDatum, theta: LeviSpec) -> CharacterX {
    let mut sum = vec![0i64; d.rank()];
    for r in d.levi_roots(theta) {
        for (acc, x) in sum.iter_mut().zip(d.root_to_weight(&d.positive_roots[r])) {
            *acc += x as i64;
        }
    }
    CharacterX::real(sum.into_iter().map(|x| Q::new(x, 2)).collect())
}

/// A degenerate principal series point `i_{M_i}^G((s + χ) ∘ ϖ_i)` where `χ`
/// has order `k`. The index `i` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DpsPoint {
    pub i: usize,
    #[serde(with = "q_serde")]
    pub s: Q,
    pub k: u32,
}

impl DpsPoint {
    pub fn new(i: usize, s: Q, k: u32) -> Self {
        DpsPoint { i, s, k }
    }

    pub fn validate(&self, d: &RootDatum) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("character order must be at least 1".into()));
        }
        if self.i == 0 || self.i > d.rank() {
            return Err(Error::Config(format!(
                "parabolic index {} out of range 1..={}",
                self.i,
                d.rank()
            )));
        }
        Ok(())
    }

    pub fn levi(&self, d: &RootDatum) -> Result<LeviSpec> {
        LeviSpec::maximal(d.rank(), self.i)
    }
}

impl fmt::Display for DpsPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.i, self.s, self.k)
    }
}

/// Serde helper writing a rational as a `p/q` string.
pub mod q_serde {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&q_to_string(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(D::Error::custom)
    }
}

/// The leading exponent `λ₀ = (s + χ)ϖ_i − ρ_M`.
pub fn leading_exponent(d: &RootDatum, p: &DpsPoint) -> Result<CharacterX> {
    p.validate(d)?;
    let theta = p.levi(d)?;
    let rho_m = rho_levi(d, theta);
    let n = d.rank();
    let mut re: Vec<Q> = rho_m.re.iter().map(|x| -*x).collect();
    let mut tors = vec![Q::zero(); n];
    re[p.i - 1] += p.s;
    tors[p.i - 1] = Q::new(1, p.k as i64);
    CharacterX::new(re, tors)
}

/// Result of bringing a character to anti-dominant form.
#[derive(Debug, Clone)]
pub struct AntiDominant {
    pub lambda_ad: CharacterX,
    /// `w · λ = λ_ad`.
    pub w: WeylElement,
    pub stab_order: u64,
    /// Generators of the stabilizer of `λ_ad` (Schreier generators when
    /// torsion is present, simple reflections otherwise).
    pub stab_gens: Vec<WeylElement>,
    /// Simple roots on which the real part of `λ_ad` vanishes.
    pub theta_zero: LeviSpec,
}

/// Anti-dominant representative of the orbit together with its stabilizer.
///
/// The real part is made anti-dominant by descent. The stabilizer of the real
/// part is the parabolic subgroup on its zero coordinates; the torsion part is
/// then moved within that subgroup to the least representative, and the
/// stabilizer order is `|W_{Θ0}| / |orbit|`.
pub fn antidominant_with_stabilizer(d: &RootDatum, lambda: &CharacterX) -> Result<AntiDominant> {
    lambda.check_rank(d)?;
    let mut cur = lambda.clone();
    let mut applied: Vec<u8> = Vec::new();
    while let Some(j) = cur.re.iter().position(|x| x.is_positive()) {
        cur.reflect(d, j);
        applied.push(j as u8);
    }
    let theta0 = LeviSpec::from_indices(
        &(0..d.rank())
            .filter(|&j| cur.re[j].is_zero())
            .collect::<Vec<_>>(),
    );
    let w_order = d.parabolic_order(theta0);
    let word_of = |applied: &[u8]| -> Vec<u8> { applied.iter().rev().copied().collect() };

    if cur.is_real() {
        return Ok(AntiDominant {
            w: d.element_from_word(&word_of(&applied))?,
            lambda_ad: cur,
            stab_order: w_order,
            stab_gens: theta0.indices().map(|j| d.simple_reflection(j)).collect(),
            theta_zero: theta0,
        });
    }

    // Orbit of the torsion part under W_{Θ0}, with transversal words.
    let mut index: HashMap<CharacterX, usize> = HashMap::new();
    let mut points: Vec<(CharacterX, Vec<u8>)> = vec![(cur.clone(), Vec::new())];
    index.insert(cur, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(p) = queue.pop_front() {
        for j in theta0.indices() {
            let mut c = points[p].0.clone();
            c.reflect(d, j);
            if !index.contains_key(&c) {
                let mut a = points[p].1.clone();
                a.push(j as u8);
                index.insert(c.clone(), points.len());
                queue.push_back(points.len());
                points.push((c, a));
            }
        }
    }
    let best = (0..points.len())
        .min_by(|&x, &y| points[x].0.cmp(&points[y].0))
        .expect("orbit nonempty");
    let to_best = &points[best].1;
    let mut gens: Vec<WeylElement> = Vec::new();
    let mut seen_gens = std::collections::HashSet::new();
    let identity = d.identity();
    for (c, a) in &points {
        for j in theta0.indices() {
            let mut c2 = c.clone();
            c2.reflect(d, j);
            let a2 = &points[index[&c2]].1;
            // t_{c2}^{-1} s_j t_c fixes the base point; conjugating by the
            // transversal of the least point moves it to the stabilizer of λ_ad.
            let mut word: Vec<u8> = to_best.iter().rev().copied().collect();
            word.extend(a2.iter().copied());
            word.push(j as u8);
            word.extend(a.iter().rev());
            word.extend(to_best.iter().copied());
            let g = d.element_from_word(&word)?;
            if g != identity && seen_gens.insert(*g.key()) {
                gens.push(g);
            }
        }
    }
    gens.sort();
    let mut full = word_of(&points[best].1);
    full.extend(word_of(&applied));
    Ok(AntiDominant {
        lambda_ad: points[best].0.clone(),
        w: d.element_from_word(&full)?,
        stab_order: w_order / points.len() as u64,
        stab_gens: gens,
        theta_zero: theta0,
    })
}

/// Stabilizer order of `λ` in the Weyl group.
pub fn stabilizer_order(d: &RootDatum, lambda: &CharacterX) -> Result<u64> {
    Ok(antidominant_with_stabilizer(d, lambda)?.stab_order)
}
