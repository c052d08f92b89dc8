//! Root data of simply-laced types, Weyl group elements and minimal coset
//! representatives.
//!
//! Simple roots are indexed from 0 internally. Labels follow the usual
//! Bourbaki conventions: for E7 the chain is 1-3-4-5-6-7 with 2 attached to 4,
//! for D_n the chain is 1..n-1 with n attached to n-2.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest rank supported by the fixed-size element keys.
pub const MAX_RANK: usize = 16;

/// A simply-laced Coxeter type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoxeterType {
    A(usize),
    D(usize),
    E6,
    E7,
}

impl CoxeterType {
    pub fn rank(self) -> usize {
        match self {
            CoxeterType::A(n) | CoxeterType::D(n) => n,
            CoxeterType::E6 => 6,
            CoxeterType::E7 => 7,
        }
    }

    /// Edges of the Dynkin diagram, 0-based.
    fn edges(self) -> Vec<(usize, usize)> {
        match self {
            CoxeterType::A(n) => (1..n).map(|i| (i - 1, i)).collect(),
            CoxeterType::D(n) => {
                let mut e: Vec<_> = (1..n - 1).map(|i| (i - 1, i)).collect();
                e.push((n - 3, n - 1));
                e
            }
            CoxeterType::E6 => vec![(0, 2), (2, 3), (3, 4), (4, 5), (1, 3)],
            CoxeterType::E7 => vec![(0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 3)],
        }
    }
}

impl fmt::Display for CoxeterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoxeterType::A(n) => write!(f, "A{n}"),
            CoxeterType::D(n) => write!(f, "D{n}"),
            CoxeterType::E6 => write!(f, "E6"),
            CoxeterType::E7 => write!(f, "E7"),
        }
    }
}

impl FromStr for CoxeterType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace('_', "");
        let bad = || Error::Config(format!("unsupported Coxeter label {s:?}"));
        let (head, tail) = t.split_at(t.char_indices().nth(1).map(|(i, _)| i).ok_or_else(bad)?);
        let n: usize = tail.parse().map_err(|_| bad())?;
        let ty = match head.to_ascii_uppercase().as_str() {
            "A" if n >= 1 => CoxeterType::A(n),
            "D" if n >= 4 => CoxeterType::D(n),
            "E" if n == 6 => CoxeterType::E6,
            "E" if n == 7 => CoxeterType::E7,
            _ => return Err(bad()),
        };
        if ty.rank() > MAX_RANK {
            return Err(Error::Config(format!(
                "rank {} exceeds the supported maximum {MAX_RANK}",
                ty.rank()
            )));
        }
        Ok(ty)
    }
}

/// A subset of the simple roots, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LeviSpec {
    mask: u32,
}

impl LeviSpec {
    pub fn empty() -> Self {
        LeviSpec { mask: 0 }
    }

    pub fn full(rank: usize) -> Self {
        LeviSpec {
            mask: (1u32 << rank) - 1,
        }
    }

    pub fn from_mask(mask: u32) -> Self {
        LeviSpec { mask }
    }

    /// Builds the subset from 0-based indices.
    pub fn from_indices(indices: &[usize]) -> Self {
        LeviSpec {
            mask: indices.iter().fold(0, |m, &i| m | (1 << i)),
        }
    }

    /// The maximal Levi `Δ ∖ {α_i}` for a 1-based index `i`.
    pub fn maximal(rank: usize, i: usize) -> Result<Self> {
        if i == 0 || i > rank {
            return Err(Error::Config(format!(
                "parabolic index {i} out of range 1..={rank}"
            )));
        }
        Ok(LeviSpec {
            mask: Self::full(rank).mask & !(1 << (i - 1)),
        })
    }

    pub fn mask(self) -> u32 {
        self.mask
    }

    pub fn contains(self, j: usize) -> bool {
        self.mask >> j & 1 == 1
    }

    pub fn len(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.mask == 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        let m = self.mask;
        (0..32).filter(move |j| m >> j & 1 == 1)
    }

    pub fn without(self, j: usize) -> Self {
        LeviSpec {
            mask: self.mask & !(1 << j),
        }
    }

    fn validate(self, rank: usize) -> Result<()> {
        if self.mask >> rank != 0 {
            return Err(Error::Config(format!(
                "Levi subset {:#b} not inside a rank {rank} datum",
                self.mask
            )));
        }
        Ok(())
    }
}

/// Canonical key of a Weyl element: the image of ρ in fundamental-weight
/// coordinates. Unused trailing slots are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElemKey(pub [i8; MAX_RANK]);

impl ElemKey {
    /// Packs the first eight coordinates little-endian into a `u64`; each
    /// coordinate occupies one two's-complement byte.
    pub fn pack_u64(&self) -> u64 {
        let mut b = [0u8; 8];
        for (dst, src) in b.iter_mut().zip(self.0.iter()) {
            *dst = *src as u8;
        }
        u64::from_le_bytes(b)
    }

    pub fn unpack_u64(v: u64) -> Self {
        let mut k = [0i8; MAX_RANK];
        for (dst, src) in k.iter_mut().zip(v.to_le_bytes()) {
            *dst = src as i8;
        }
        ElemKey(k)
    }
}

/// An element of the Weyl group, stored by canonical key together with its
/// canonical reduced word.
///
/// The word `[j1, .., jk]` denotes the product `s_{j1} ⋯ s_{jk}`, which acts
/// on vectors rightmost letter first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeylElement {
    key: ElemKey,
    word: Vec<u8>,
}

impl WeylElement {
    pub fn key(&self) -> &ElemKey {
        &self.key
    }

    pub fn word(&self) -> &[u8] {
        &self.word
    }

    pub fn length(&self) -> usize {
        self.word.len()
    }

    /// The reduced word with 1-based labels.
    pub fn word_1based(&self) -> Vec<usize> {
        self.word.iter().map(|&j| j as usize + 1).collect()
    }

    /// Renders the element as `s7s6s5` style text (1-based); `e` for the identity.
    pub fn display_word(&self) -> String {
        format_word(&self.word)
    }
}

impl PartialOrd for WeylElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Elements sort by length, then canonical key.
impl Ord for WeylElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.word.len(), &self.key).cmp(&(other.word.len(), &other.key))
    }
}

/// Formats a 0-based word as `s1s2...`.
pub fn format_word(word: &[u8]) -> String {
    if word.is_empty() {
        return "e".to_string();
    }
    word.iter().map(|j| format!("s{}", j + 1)).collect()
}

/// Parses words like `s7s6s5`, `7,6,5` or `7 6 5` into 0-based letters.
pub fn parse_word(text: &str, rank: usize) -> Result<Vec<u8>> {
    let t = text.trim();
    if t.is_empty() || t == "e" {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = if t.contains('s') {
        t.split('s').filter(|p| !p.is_empty()).collect()
    } else {
        t.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect()
    };
    parts
        .iter()
        .map(|p| {
            let j: usize = p
                .trim_matches(|c: char| c == ',' || c.is_whitespace())
                .parse()
                .map_err(|_| Error::Config(format!("bad letter {p:?} in word {text:?}")))?;
            if j == 0 || j > rank {
                return Err(Error::Config(format!(
                    "letter {j} out of range in word {text:?}"
                )));
            }
            Ok((j - 1) as u8)
        })
        .collect()
}

/// A root datum of simply-laced type.
#[derive(Debug, Clone)]
pub struct RootDatum {
    pub label: CoxeterType,
    /// `cartan[i][j] = ⟨α_j, α̌_i⟩`.
    pub cartan: Vec<Vec<i32>>,
    /// Positive roots as coefficient vectors over the simple roots, sorted by
    /// height then lexicographically.
    pub positive_roots: Vec<Vec<i32>>,
    /// Coefficients of each positive coroot over the simple coroots. In the
    /// simply-laced case these equal `positive_roots`.
    pub coroot_coeffs: Vec<Vec<i32>>,
    neighbors: Vec<Vec<usize>>,
}

impl RootDatum {
    pub fn rank(&self) -> usize {
        self.cartan.len()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.cartan[i][j] == -1
    }

    /// `s_j` on a vector in fundamental-weight coordinates:
    /// `c_i ← c_i − A_ij c_j`.
    #[inline]
    pub fn reflect_weight<T>(&self, v: &mut [T], j: usize)
    where
        T: Copy + std::ops::Neg<Output = T> + std::ops::AddAssign,
    {
        let cj = v[j];
        v[j] = -cj;
        for &i in &self.neighbors[j] {
            v[i] += cj;
        }
    }

    /// `s_j` on a root given by simple-root coefficients.
    pub fn reflect_root(&self, b: &mut [i32], j: usize) {
        let pairing: i32 = (0..self.rank()).map(|i| b[i] * self.cartan[j][i]).sum();
        b[j] -= pairing;
    }

    /// Weight coordinates `⟨γ, α̌_j⟩` of a root with the given coefficients.
    pub fn root_to_weight(&self, coeffs: &[i32]) -> Vec<i32> {
        (0..self.rank())
            .map(|j| {
                (0..self.rank())
                    .map(|i| coeffs[i] * self.cartan[j][i])
                    .sum()
            })
            .collect()
    }

    /// ρ = sum of fundamental weights.
    pub fn rho(&self) -> Vec<i32> {
        vec![1; self.rank()]
    }

    pub fn highest_root(&self) -> &[i32] {
        self.positive_roots.last().expect("nonempty root system")
    }

    /// Applies a word to a weight vector, rightmost letter first.
    pub fn act_word<T>(&self, word: &[u8], v: &mut [T])
    where
        T: Copy + std::ops::Neg<Output = T> + std::ops::AddAssign,
    {
        for &j in word.iter().rev() {
            self.reflect_weight(v, j as usize);
        }
    }

    pub fn act<T>(&self, w: &WeylElement, v: &mut [T])
    where
        T: Copy + std::ops::Neg<Output = T> + std::ops::AddAssign,
    {
        self.act_word(&w.word, v)
    }

    fn key_of(&self, v: &[i32]) -> ElemKey {
        let mut k = [0i8; MAX_RANK];
        for (dst, &x) in k.iter_mut().zip(v) {
            *dst = x as i8;
        }
        ElemKey(k)
    }

    pub fn identity(&self) -> WeylElement {
        WeylElement {
            key: self.key_of(&self.rho()),
            word: Vec::new(),
        }
    }

    /// The element given by a word (not necessarily reduced), 0-based letters.
    pub fn element_from_word(&self, word: &[u8]) -> Result<WeylElement> {
        if let Some(&j) = word.iter().find(|&&j| j as usize >= self.rank()) {
            return Err(Error::Config(format!(
                "letter {} out of range for {}",
                j + 1,
                self.label
            )));
        }
        let mut v = self.rho();
        self.act_word(word, &mut v);
        Ok(self.element_from_key_vec(v))
    }

    pub fn simple_reflection(&self, j: usize) -> WeylElement {
        self.element_from_word(&[j as u8])
            .expect("valid simple root")
    }

    /// Rebuilds an element from its canonical key.
    pub fn element_from_key(&self, key: &ElemKey) -> WeylElement {
        let v: Vec<i32> = key.0[..self.rank()].iter().map(|&x| x as i32).collect();
        self.element_from_key_vec(v)
    }

    /// Descent: while some coordinate of `wρ` is negative, the smallest such
    /// index `j` satisfies `l(s_j w) < l(w)`; peel it off on the left.
    fn element_from_key_vec(&self, v: Vec<i32>) -> WeylElement {
        let key = self.key_of(&v);
        let mut cur = v;
        let mut word = Vec::new();
        while let Some(j) = cur.iter().position(|&c| c < 0) {
            word.push(j as u8);
            self.reflect_weight(&mut cur, j);
        }
        WeylElement { key, word }
    }

    pub fn compose(&self, a: &WeylElement, b: &WeylElement) -> WeylElement {
        let mut w = a.word.clone();
        w.extend_from_slice(&b.word);
        self.element_from_word(&w).expect("letters in range")
    }

    pub fn inverse(&self, a: &WeylElement) -> WeylElement {
        let w: Vec<u8> = a.word.iter().rev().copied().collect();
        self.element_from_word(&w).expect("letters in range")
    }

    /// Images of the fundamental weights: column `j` holds `w(ϖ_j)`.
    pub fn action_matrix(&self, w: &WeylElement) -> Vec<Vec<i32>> {
        let n = self.rank();
        let mut m = vec![vec![0; n]; n];
        for j in 0..n {
            let mut e = vec![0i32; n];
            e[j] = 1;
            self.act(w, &mut e);
            for i in 0..n {
                m[i][j] = e[i];
            }
        }
        m
    }

    /// Number of positive roots sent to negative roots, computed on roots.
    pub fn inversion_count(&self, w: &WeylElement) -> usize {
        self.positive_roots
            .iter()
            .filter(|g| {
                let mut b = (*g).clone();
                for &j in w.word.iter().rev() {
                    self.reflect_root(&mut b, j as usize);
                }
                b.iter().any(|&c| c < 0)
            })
            .count()
    }

    /// Positive roots lying in the span of `theta` (indices into `positive_roots`).
    pub fn levi_roots(&self, theta: LeviSpec) -> Vec<usize> {
        (0..self.positive_roots.len())
            .filter(|&r| {
                self.positive_roots[r]
                    .iter()
                    .enumerate()
                    .all(|(j, &c)| c == 0 || theta.contains(j))
            })
            .collect()
    }

    /// Order of the Weyl group, by orbit-stabilizer along a chain of parabolics.
    pub fn weyl_order(&self) -> u64 {
        self.parabolic_order_by_orbits(LeviSpec::full(self.rank()))
    }

    /// `|W_Θ|` computed as a product of orbit sizes: the stabilizer of `ϖ_j`
    /// in `W_Θ` is `W_{Θ∖{j}}`.
    pub fn parabolic_order_by_orbits(&self, theta: LeviSpec) -> u64 {
        let mut order = 1u64;
        let mut t = theta;
        while let Some(j) = t.indices().last() {
            let mut start = vec![0i32; self.rank()];
            start[j] = 1;
            order *= self.orbit_size(&start, t) as u64;
            t = t.without(j);
        }
        order
    }

    fn orbit_size(&self, start: &[i32], gens: LeviSpec) -> usize {
        let mut seen: HashSet<Vec<i32>> = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start.to_vec());
        queue.push_back(start.to_vec());
        while let Some(v) = queue.pop_front() {
            for j in gens.indices() {
                let mut u = v.clone();
                self.reflect_weight(&mut u, j);
                if seen.insert(u.clone()) {
                    queue.push_back(u);
                }
            }
        }
        seen.len()
    }

    /// `|W_Θ|` from the types of the connected components of `Θ`.
    pub fn parabolic_order(&self, theta: LeviSpec) -> u64 {
        let mut remaining = theta.mask();
        let mut order = 1u64;
        while remaining != 0 {
            let start = remaining.trailing_zeros() as usize;
            let mut comp = vec![start];
            let mut stack = vec![start];
            remaining &= !(1 << start);
            while let Some(v) = stack.pop() {
                for &u in &self.neighbors[v] {
                    if remaining >> u & 1 == 1 {
                        remaining &= !(1 << u);
                        comp.push(u);
                        stack.push(u);
                    }
                }
            }
            order *= component_order(self, &comp, theta);
        }
        order
    }

    /// Minimal double coset representatives
    /// `W^{M,L} = {w : w(Φ⁺_M) ⊂ Φ⁺, w⁻¹(Φ⁺_L) ⊂ Φ⁺}`, sorted by length then key.
    ///
    /// The left cosets `wW_M` are the orbit of `Σ_{i∉Θ_M} ϖ_i`, which has
    /// stabilizer `W_M`; a breadth-first search that only steps along positive
    /// pairings visits each coset through its minimal representative.
    pub fn min_double_coset_reps(
        &self,
        theta_m: LeviSpec,
        theta_l: LeviSpec,
    ) -> Result<Vec<WeylElement>> {
        theta_m.validate(self.rank())?;
        theta_l.validate(self.rank())?;
        let n = self.rank();
        let v0: Vec<i8> = (0..n)
            .map(|j| if theta_m.contains(j) { 0 } else { 1 })
            .collect();
        let rho = self.rho();
        let mut seen: HashSet<Vec<i8>> = HashSet::new();
        let mut out = Vec::new();
        let mut layer = vec![(v0.clone(), rho)];
        seen.insert(v0);
        while !layer.is_empty() {
            let mut next = Vec::new();
            for (v, key) in &layer {
                for j in 0..n {
                    if v[j] > 0 {
                        let mut u = v.clone();
                        self.reflect_weight(&mut u, j);
                        if seen.insert(u.clone()) {
                            let mut k = key.clone();
                            self.reflect_weight(&mut k, j);
                            next.push((u, k));
                        }
                    }
                }
            }
            out.extend(
                layer
                    .drain(..)
                    .filter(|(_, key)| theta_l.indices().all(|j| key[j] > 0))
                    .map(|(_, key)| self.element_from_key_vec(key)),
            );
            layer = next;
        }
        out.sort();
        Ok(out)
    }

    /// All elements of the parabolic subgroup `W_Θ`, sorted by length then key.
    pub fn parabolic_elements(&self, theta: LeviSpec) -> Vec<WeylElement> {
        let rho = self.rho();
        let mut seen: HashSet<Vec<i32>> = HashSet::new();
        seen.insert(rho.clone());
        let mut queue = VecDeque::from([rho]);
        let mut out = Vec::new();
        while let Some(v) = queue.pop_front() {
            for j in theta.indices() {
                let mut u = v.clone();
                self.reflect_weight(&mut u, j);
                if seen.insert(u.clone()) {
                    queue.push_back(u);
                }
            }
            out.push(self.element_from_key_vec(v));
        }
        out.sort();
        out
    }
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

fn component_order(d: &RootDatum, comp: &[usize], theta: LeviSpec) -> u64 {
    let n = comp.len() as u64;
    let deg = |v: usize| {
        d.neighbors[v]
            .iter()
            .filter(|&&u| theta.contains(u))
            .count()
    };
    let Some(&branch) = comp.iter().find(|&&v| deg(v) == 3) else {
        return factorial(n + 1);
    };
    let mut arms: Vec<usize> = d.neighbors[branch]
        .iter()
        .filter(|&&u| theta.contains(u))
        .map(|&first| {
            let (mut prev, mut cur, mut len) = (branch, first, 1);
            loop {
                let next = d.neighbors[cur]
                    .iter()
                    .copied()
                    .find(|&u| u != prev && theta.contains(u));
                match next {
                    Some(nx) => {
                        prev = cur;
                        cur = nx;
                        len += 1;
                    }
                    None => break len,
                }
            }
        })
        .collect();
    arms.sort();
    match arms.as_slice() {
        [1, 1, _] => (1u64 << (n - 1)) * factorial(n),
        [1, 2, 2] => 51_840,
        [1, 2, 3] => 2_903_040,
        [1, 2, 4] => 696_729_600,
        _ => unreachable!("simply-laced diagrams only"),
    }
}

/// Builds the root datum for a label such as `"E7"`, `"D6"` or `"A3"`.
pub fn build_root_datum(label: &str) -> Result<RootDatum> {
    let ty: CoxeterType = label.parse()?;
    Ok(RootDatum::new(ty))
}

impl RootDatum {
    pub fn new(ty: CoxeterType) -> Self {
        let n = ty.rank();
        let mut cartan = vec![vec![0i32; n]; n];
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            cartan[i][i] = 2;
        }
        for (a, b) in ty.edges() {
            cartan[a][b] = -1;
            cartan[b][a] = -1;
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort();
        }
        let mut d = RootDatum {
            label: ty,
            cartan,
            positive_roots: Vec::new(),
            coroot_coeffs: Vec::new(),
            neighbors,
        };
        let mut seen: HashSet<Vec<i32>> = HashSet::new();
        let mut queue = VecDeque::new();
        for j in 0..n {
            let mut e = vec![0; n];
            e[j] = 1;
            seen.insert(e.clone());
            queue.push_back(e);
        }
        while let Some(b) = queue.pop_front() {
            for j in 0..n {
                let mut c = b.clone();
                d.reflect_root(&mut c, j);
                if c.iter().all(|&x| x >= 0) && seen.insert(c.clone()) {
                    queue.push_back(c);
                }
            }
        }
        let mut roots: Vec<Vec<i32>> = seen.into_iter().collect();
        roots.sort_by(|a, b| (a.iter().sum::<i32>(), a).cmp(&(b.iter().sum::<i32>(), b)));
        d.coroot_coeffs = roots.clone();
        d.positive_roots = roots;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_labels() {
        assert_eq!("E7".parse::<CoxeterType>().unwrap(), CoxeterType::E7);
        assert_eq!("a_3".parse::<CoxeterType>().unwrap(), CoxeterType::A(3));
        assert!("D3".parse::<CoxeterType>().is_err());
        assert!("G2".parse::<CoxeterType>().is_err());
        assert!("".parse::<CoxeterType>().is_err());
    }

    #[test]
    fn word_round_trip() {
        assert_eq!(parse_word("s7s6s5s4s2", 7).unwrap(), vec![6, 5, 4, 3, 1]);
        assert_eq!(parse_word("7,6, 5", 7).unwrap(), vec![6, 5, 4]);
        assert_eq!(format_word(&[6, 5, 4, 3, 1]), "s7s6s5s4s2");
        assert!(parse_word("s8", 7).is_err());
    }

    #[test]
    fn key_packing() {
        let d = build_root_datum("E7").unwrap();
        let w = d.element_from_word(&[6, 5, 4, 3, 2, 1, 3]).unwrap();
        assert_eq!(ElemKey::unpack_u64(w.key().pack_u64()), *w.key());
    }
}

impl serde::Serialize for CoxeterType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for CoxeterType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
