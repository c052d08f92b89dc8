//! Exponents of degenerate principal series: `r_T^G i_M^G(Ω)` as a multiset of
//! characters, one summand `[w·λ₀]` for each `w ∈ W^{M,T}`.

use std::collections::HashSet;

use num_traits::Zero;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::charlat::{CharacterX, Q};
use crate::error::{Error, Result};
use crate::rootsys::{LeviSpec, RootDatum, MAX_RANK};

/// Fixed-point encoding of the characters in one Weyl orbit: real parts are
/// stored as numerators over `re_den`, torsion as numerators over `tors_den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packing {
    rank: usize,
    re_den: i64,
    tors_den: i64,
}

/// A character in packed form. Ordering agrees with [`CharacterX`] ordering
/// for characters packed with the same [`Packing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackedChar {
    pub re: [i16; MAX_RANK],
    pub tors: [u8; MAX_RANK],
}

impl Packing {
    /// A packing able to hold every character in the orbits of `chars`.
    pub fn for_orbits(d: &RootDatum, chars: &[&CharacterX]) -> Result<Self> {
        let mut re_den = 1i64;
        let mut tors_den = 1i64;
        for c in chars {
            c.check_rank(d)?;
            re_den = num_integer::lcm(re_den, c.re_denominator());
            tors_den = num_integer::lcm(tors_den, c.tors_denominator());
        }
        if tors_den > 255 {
            return Err(Error::Overflow(format!(
                "torsion denominator {tors_den} exceeds 255"
            )));
        }
        // Every coordinate of w·λ is ⟨λ, γ̌⟩ for some root γ, so it is bounded
        // by the largest |pairing| with a positive coroot.
        for c in chars {
            let bound = d
                .coroot_coeffs
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(c.re())
                        .map(|(&mi, x)| {
                            (x * Q::from_integer(re_den)).to_integer().abs() * mi as i64
                        })
                        .sum::<i64>()
                })
                .max()
                .unwrap_or(0);
            if bound > i16::MAX as i64 {
                return Err(Error::Overflow(format!(
                    "orbit of {c} does not fit the packed encoding"
                )));
            }
        }
        Ok(Packing {
            rank: d.rank(),
            re_den,
            tors_den,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pack(&self, c: &CharacterX) -> Option<PackedChar> {
        if c.rank() != self.rank {
            return None;
        }
        let mut p = PackedChar {
            re: [0; MAX_RANK],
            tors: [0; MAX_RANK],
        };
        for j in 0..self.rank {
            let r = c.re()[j] * Q::from_integer(self.re_den);
            let t = c.tors()[j] * Q::from_integer(self.tors_den);
            if !r.is_integer() || !t.is_integer() {
                return None;
            }
            p.re[j] = i16::try_from(r.to_integer()).ok()?;
            p.tors[j] = u8::try_from(t.to_integer()).ok()?;
        }
        Some(p)
    }

    pub fn unpack(&self, p: &PackedChar) -> CharacterX {
        let re = (0..self.rank)
            .map(|j| Q::new(p.re[j] as i64, self.re_den))
            .collect();
        let tors = (0..self.rank)
            .map(|j| Q::new(p.tors[j] as i64, self.tors_den))
            .collect();
        CharacterX::new(re, tors).expect("consistent lengths")
    }

    /// `s_j` on a packed character.
    #[inline]
    pub fn reflect(&self, d: &RootDatum, p: &mut PackedChar, j: usize) {
        let c = p.re[j];
        p.re[j] = -c;
        let t = p.tors[j] as i64;
        let den = self.tors_den;
        p.tors[j] = ((den - t) % den) as u8;
        for &i in d.neighbors(j) {
            p.re[i] += c;
            p.tors[i] = ((p.tors[i] as i64 + t) % den) as u8;
        }
    }

    pub fn apply_word(&self, d: &RootDatum, p: &mut PackedChar, word: &[u8]) {
        for &j in word.iter().rev() {
            self.reflect(d, p, j as usize);
        }
    }

    /// Real part of `⟨λ, α̌_j⟩` times `re_den`.
    #[inline]
    pub fn re_num(&self, p: &PackedChar, j: usize) -> i64 {
        p.re[j] as i64
    }

    pub fn re_den(&self) -> i64 {
        self.re_den
    }

    pub fn tors_den(&self) -> i64 {
        self.tors_den
    }

    /// Pairing of `p` with the simple coroot `α̌_j` as exact rationals.
    pub fn simple_pairing(&self, p: &PackedChar, j: usize) -> (Q, Q) {
        (
            Q::new(p.re[j] as i64, self.re_den),
            Q::new(p.tors[j] as i64, self.tors_den),
        )
    }
}

/// A finitely supported function from characters to positive integers.
#[derive(Debug, Clone)]
pub struct ExponentFunction {
    packing: Packing,
    map: FxHashMap<PackedChar, u32>,
}

#[derive(Serialize)]
struct ExponentEntry<'a> {
    character: &'a CharacterX,
    multiplicity: u32,
}

impl ExponentFunction {
    pub fn new(packing: Packing) -> Self {
        ExponentFunction {
            packing,
            map: FxHashMap::default(),
        }
    }

    pub fn packing(&self) -> &Packing {
        &self.packing
    }

    /// The multiplicity of `λ`, zero off the support.
    pub fn multiplicity(&self, lambda: &CharacterX) -> u32 {
        self.packing.pack(lambda).map_or(0, |p| self.get(&p))
    }

    #[inline]
    pub fn get(&self, p: &PackedChar) -> u32 {
        self.map.get(p).copied().unwrap_or(0)
    }

    /// Sets a value; zero removes the entry.
    pub fn set(&mut self, p: PackedChar, v: u32) {
        if v == 0 {
            self.map.remove(&p);
        } else {
            self.map.insert(p, v);
        }
    }

    pub fn add(&mut self, p: PackedChar, v: u32) {
        if v > 0 {
            *self.map.entry(p).or_insert(0) += v;
        }
    }

    pub fn total_mass(&self) -> u64 {
        self.map.values().map(|&v| v as u64).sum()
    }

    pub fn support_len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PackedChar, &u32)> {
        self.map.iter()
    }

    /// Entries sorted by canonical key.
    pub fn sorted_entries(&self) -> Vec<(CharacterX, u32)> {
        let mut keys: Vec<&PackedChar> = self.map.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| (self.packing.unpack(k), self.map[k]))
            .collect()
    }

    /// `f ≤ g` pointwise.
    pub fn le(&self, other: &ExponentFunction) -> bool {
        self.map.iter().all(|(k, &v)| other.get(k) >= v)
    }

    /// A point where `self` exceeds `other`, least in canonical order.
    pub fn first_excess(&self, other: &ExponentFunction) -> Option<PackedChar> {
        self.map
            .iter()
            .filter(|(k, &v)| other.get(k) < v)
            .map(|(k, _)| *k)
            .min()
    }

    pub fn equals(&self, other: &ExponentFunction) -> bool {
        self.map.len() == other.map.len() && self.map.iter().all(|(k, &v)| other.get(k) == v)
    }

    /// JSON list of `{character, multiplicity}` sorted by canonical key.
    pub fn to_json(&self) -> String {
        let entries = self.sorted_entries();
        let list: Vec<ExponentEntry<'_>> = entries
            .iter()
            .map(|(c, m)| ExponentEntry {
                character: c,
                multiplicity: *m,
            })
            .collect();
        serde_json::to_string(&list).expect("serializable")
    }

    /// Re-encodes with a coarser packing (needed to compare functions built
    /// from different starting characters).
    pub fn repack(&self, packing: Packing) -> Result<ExponentFunction> {
        let mut out = ExponentFunction::new(packing);
        for (k, &v) in &self.map {
            let c = self.packing.unpack(k);
            let p = packing
                .pack(&c)
                .ok_or_else(|| Error::Overflow(format!("cannot repack {c}")))?;
            out.map.insert(p, v);
        }
        Ok(out)
    }
}

/// `f(μ) = #{w ∈ W^{M,T} : w·λ₀ = μ}`.
///
/// Walks the orbit of `Σ_{i∉Θ_M} ϖ_i` (whose stabilizer is `W_M`) and carries
/// the image of `λ₀` along each step.
pub fn dps_exponents(
    d: &RootDatum,
    theta_m: LeviSpec,
    lambda0: &CharacterX,
) -> Result<ExponentFunction> {
    let packing = Packing::for_orbits(d, &[lambda0])?;
    dps_exponents_packed(d, theta_m, lambda0, packing)
}

/// As [`dps_exponents`] with an explicit packing.
pub fn dps_exponents_packed(
    d: &RootDatum,
    theta_m: LeviSpec,
    lambda0: &CharacterX,
    packing: Packing,
) -> Result<ExponentFunction> {
    lambda0.check_rank(d)?;
    for j in theta_m.indices() {
        let (r, t) = lambda0.coord(j);
        if r != -Q::from_integer(1) || !t.is_zero() {
            return Err(Error::Precondition(format!(
                "λ₀ = {lambda0} has coordinate {} ≠ -1 on a simple root of M",
                j + 1
            )));
        }
    }
    let n = d.rank();
    let start = packing
        .pack(lambda0)
        .ok_or_else(|| Error::Overflow(format!("cannot pack {lambda0}")))?;
    let mut v0 = [0i8; MAX_RANK];
    for (j, slot) in v0.iter_mut().enumerate().take(n) {
        *slot = if theta_m.contains(j) { 0 } else { 1 };
    }
    let mut f = ExponentFunction::new(packing);
    let mut seen: HashSet<[i8; MAX_RANK]> = HashSet::new();
    seen.insert(v0);
    let mut stack = vec![(v0, start)];
    while let Some((v, lam)) = stack.pop() {
        f.add(lam, 1);
        for j in 0..n {
            if v[j] > 0 {
                let mut u = v;
                d.reflect_weight(&mut u[..n], j);
                if seen.insert(u) {
                    let mut l2 = lam;
                    packing.reflect(d, &mut l2, j);
                    stack.push((u, l2));
                }
            }
        }
    }
    Ok(f)
}

/// Stored value or zero.
pub fn multiplicity(f: &ExponentFunction, lambda: &CharacterX) -> u32 {
    f.multiplicity(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rootsys::build_root_datum;

    #[test]
    fn packing_round_trip() {
        let d = build_root_datum("E7").unwrap();
        let c = CharacterX::new(
            vec![
                Q::new(-3, 2),
                Q::from_integer(2),
                Q::zero(),
                Q::zero(),
                Q::zero(),
                Q::zero(),
                Q::zero(),
            ],
            vec![
                Q::new(1, 2),
                Q::zero(),
                Q::zero(),
                Q::zero(),
                Q::zero(),
                Q::zero(),
                Q::zero(),
            ],
        )
        .unwrap();
        let p = Packing::for_orbits(&d, &[&c]).unwrap();
        let mut pc = p.pack(&c).unwrap();
        assert_eq!(p.unpack(&pc), c);
        let mut c2 = c.clone();
        c2.reflect(&d, 0);
        p.reflect(&d, &mut pc, 0);
        assert_eq!(p.unpack(&pc), c2);
    }
}
