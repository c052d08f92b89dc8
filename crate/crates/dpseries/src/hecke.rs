//! The finite Hecke algebra `H₀ = Span{T_w}` at a specialized `q`, the
//! normalized intertwiners `n_w(λ) ∈ H₀`, the module rows
//! `v_u = T_u · triv · n_w(λ₀)` and the rank of their span.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::charlat::{leading_exponent, q_to_string, CharacterX, DpsPoint, Q};
use crate::error::{Error, Result};
use crate::rootsys::{format_word, ElemKey, LeviSpec, RootDatum};

mod modular;

pub use modular::{is_prime_u64, random_prime_62};
use modular::{
    modular_rank_left_kernel, mulmod, random_prime_bits, rational_reconstruct, to_mod, F64Echelon,
    F64_PRIME_BITS,
};

/// A vector in the `T_w` basis, keyed by the packed canonical key of `w`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HeckeVector {
    terms: BTreeMap<u64, Q>,
}

impl HeckeVector {
    pub fn zero() -> Self {
        HeckeVector::default()
    }

    /// `T_e`.
    pub fn identity(d: &RootDatum) -> Self {
        Self::basis(d.identity().key().pack_u64())
    }

    pub fn basis(key: u64) -> Self {
        let mut v = HeckeVector::zero();
        v.terms.insert(key, Q::one());
        v
    }

    /// `T_w` for the element given by a word.
    pub fn from_word(d: &RootDatum, word: &[u8]) -> Result<Self> {
        Ok(Self::basis(d.element_from_word(word)?.key().pack_u64()))
    }

    pub fn get(&self, key: u64) -> Q {
        self.terms.get(&key).copied().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, key: u64, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(key).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&mut self, other: &HeckeVector) {
        for (&k, &c) in &other.terms {
            self.add_term(k, c);
        }
    }

    pub fn scaled(&self, c: Q) -> HeckeVector {
        let mut out = HeckeVector::zero();
        for (&k, &v) in &self.terms {
            out.add_term(k, v * c);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Q)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn q_pow(q: i64, z: i64) -> Q {
    let base = Q::from_integer(q);
    if z >= 0 {
        num_traits::pow(base, z as usize)
    } else {
        Q::one() / num_traits::pow(base, (-z) as usize)
    }
}

/// `T_x · T_s` for the element with canonical key `key`. Returns the key of
/// `xs` and whether `l(xs) > l(x)`.
fn right_simple(d: &RootDatum, key: u64, j: usize) -> (u64, bool) {
    let x = d.element_from_key(&ElemKey::unpack_u64(key));
    let mut inv = d.rho();
    let rev: Vec<u8> = x.word().iter().rev().copied().collect();
    d.act_word(&rev, &mut inv);
    let up = inv[j] > 0;
    let mut w = x.word().to_vec();
    w.push(j as u8);
    let xs = d.element_from_word(&w).expect("letters in range");
    (xs.key().pack_u64(), up)
}

fn mul_right_simple(d: &RootDatum, a: &HeckeVector, j: usize, q: i64) -> HeckeVector {
    let qq = Q::from_integer(q);
    let mut out = HeckeVector::zero();
    for (k, c) in a.iter() {
        let (k2, up) = right_simple(d, k, j);
        if up {
            out.add_term(k2, c);
        } else {
            out.add_term(k2, c * qq);
            out.add_term(k, c * (qq - Q::one()));
        }
    }
    out
}

/// Product in `H₀`: `T_x T_s = T_{xs}` when `l(xs) > l(x)`, otherwise
/// `q T_{xs} + (q − 1) T_x`, extended along reduced words of the right factor.
pub fn hecke_mul(d: &RootDatum, a: &HeckeVector, b: &HeckeVector, q: i64) -> Result<HeckeVector> {
    if q < 2 {
        return Err(Error::Config(format!("q = {q} must be at least 2")));
    }
    let mut out = HeckeVector::zero();
    for (kb, cb) in b.iter() {
        let y = d.element_from_key(&ElemKey::unpack_u64(kb));
        let mut acc = a.scaled(cb);
        for &j in y.word() {
            acc = mul_right_simple(d, &acc, j as usize, q);
        }
        out.add(&acc);
    }
    Ok(out)
}

/// One factor `n_{s_α}(μ) = c_e T_e + c_s T_{s_α}` of an intertwiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factor {
    /// 0-based simple root.
    pub letter: u8,
    pub z: i64,
    #[serde(with = "crate::charlat::q_serde")]
    pub coeff_e: Q,
    #[serde(with = "crate::charlat::q_serde")]
    pub coeff_s: Q,
}

impl Factor {
    /// Integer multiples `(a, b)` of `(c_e, c_s)` and the positive scale `m`
    /// with `(a, b) = m·(c_e, c_s)` up to sign, all coprime.
    pub fn integer_scaled(&self) -> (i64, i64, Q) {
        let l = num_integer::lcm(*self.coeff_e.denom(), *self.coeff_s.denom());
        let a = (self.coeff_e * Q::from_integer(l)).to_integer();
        let b = (self.coeff_s * Q::from_integer(l)).to_integer();
        let g = num_integer::gcd(a, b).max(1);
        (a / g, b / g, Q::new(l, g))
    }
}

/// The pairing `z = ⟨μ, α̌_j⟩` as an integer, rejecting torsion and
/// non-integral values.
fn integral_pairing(mu: &CharacterX, j: usize) -> Result<i64> {
    let (re, t) = mu.coord(j);
    if !t.is_zero() {
        return Err(Error::Ramified(format!(
            "{mu} has torsion {t} at simple root {}",
            j + 1
        )));
    }
    if !re.is_integer() {
        return Err(Error::Precondition(format!(
            "pairing {} of {mu} at simple root {} is not an integer",
            q_to_string(&re),
            j + 1
        )));
    }
    Ok(re.to_integer())
}

fn simple_factor(mu: &CharacterX, j: usize, q: i64) -> Result<Factor> {
    if q < 2 {
        return Err(Error::Config(format!("q = {q} must be at least 2")));
    }
    let z = integral_pairing(mu, j)?;
    if z == -1 {
        return Err(Error::Singular {
            root: j + 1,
            z: z.to_string(),
        });
    }
    let den = q_pow(q, z + 1) - Q::one();
    Ok(Factor {
        letter: j as u8,
        z,
        coeff_e: (Q::from_integer(q) - Q::one()) / den,
        coeff_s: (q_pow(q, z) - Q::one()) / den,
    })
}

/// `n_{s_α}(λ) = ((q − 1) T_e + (q^z − 1) T_{s_α}) / (q^{z+1} − 1)` with
/// `z = ⟨λ, α̌⟩`.
pub fn simple_intertwiner(
    d: &RootDatum,
    j: usize,
    lambda: &CharacterX,
    q: i64,
) -> Result<HeckeVector> {
    lambda.check_rank(d)?;
    if j >= d.rank() {
        return Err(Error::Config(format!("simple root {} out of range", j + 1)));
    }
    let f = simple_factor(lambda, j, q)?;
    let mut v = HeckeVector::zero();
    v.add_term(d.identity().key().pack_u64(), f.coeff_e);
    v.add_term(d.simple_reflection(j).key().pack_u64(), f.coeff_s);
    Ok(v)
}

/// The order in which the simple factors of `n_w` are multiplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorOrder {
    /// For `w = s_{a1} ⋯ s_{ak}`: `n_{ak}(λ) · n_{a(k−1)}(s_{ak}λ) ⋯ n_{a1}(⋯)`,
    /// so right multiplication applies the factor acting first on `λ` first.
    Composition,
    /// The same factors multiplied in the opposite order.
    Reversed,
}

/// The factors of `n_w(λ)` along the given word, in multiplication order.
pub fn intertwiner_factors(
    d: &RootDatum,
    word: &[u8],
    lambda: &CharacterX,
    q: i64,
    order: FactorOrder,
) -> Result<Vec<Factor>> {
    lambda.check_rank(d)?;
    d.element_from_word(word)?;
    let mut mu = lambda.clone();
    let mut out = Vec::with_capacity(word.len());
    for &j in word.iter().rev() {
        out.push(simple_factor(&mu, j as usize, q)?);
        mu.reflect(d, j as usize);
    }
    if order == FactorOrder::Reversed {
        out.reverse();
    }
    Ok(out)
}

/// `n_w(λ)` assembled along the given reduced word in the canonical order.
pub fn word_intertwiner(
    d: &RootDatum,
    word: &[u8],
    lambda: &CharacterX,
    q: i64,
) -> Result<HeckeVector> {
    word_intertwiner_ordered(d, word, lambda, q, FactorOrder::Composition)
}

pub fn word_intertwiner_ordered(
    d: &RootDatum,
    word: &[u8],
    lambda: &CharacterX,
    q: i64,
    order: FactorOrder,
) -> Result<HeckeVector> {
    let w = d.element_from_word(word)?;
    if w.length() != word.len() {
        return Err(Error::Config(format!(
            "word {} is not reduced",
            format_word(word)
        )));
    }
    let mut acc = HeckeVector::identity(d);
    for f in intertwiner_factors(d, word, lambda, q, order)? {
        let mut fv = HeckeVector::zero();
        fv.add_term(d.identity().key().pack_u64(), f.coeff_e);
        fv.add_term(
            d.simple_reflection(f.letter as usize).key().pack_u64(),
            f.coeff_s,
        );
        acc = hecke_mul(d, &acc, &fv, q)?;
    }
    Ok(acc)
}

const DOWN: u32 = 1 << 31;

/// Every element of `W` with its right multiplication table. Index 0 is the
/// identity; indices follow breadth-first order, so they increase with length.
#[derive(Debug)]
pub struct GroupTable {
    rank: usize,
    keys: Vec<u64>,
    /// `rmul[x·rank + j]` is the index of `x s_j`, with [`DOWN`] set when
    /// `l(x s_j) < l(x)`.
    rmul: Vec<u32>,
    index: FxHashMap<u64, u32>,
}

impl GroupTable {
    pub fn build(d: &RootDatum) -> Result<Self> {
        let n = d.rank();
        let order = d.weyl_order();
        if order >= DOWN as u64 {
            return Err(Error::Overflow(format!(
                "|W| = {order} is too large for the group table"
            )));
        }
        let order = order as usize;
        // Breadth-first over canonical keys by left multiplication.
        let rho: Vec<i32> = d.rho();
        let pack = |v: &[i32]| {
            let mut k = [0i8; crate::rootsys::MAX_RANK];
            for (dst, &x) in k.iter_mut().zip(v) {
                *dst = x as i8;
            }
            ElemKey(k).pack_u64()
        };
        let mut keys: Vec<u64> = Vec::with_capacity(order);
        let mut vecs: Vec<[i8; 8]> = Vec::with_capacity(order);
        let mut index: FxHashMap<u64, u32> = FxHashMap::default();
        index.reserve(order);
        let k0 = pack(&rho);
        keys.push(k0);
        vecs.push(
            ElemKey::unpack_u64(k0).0[..8]
                .try_into()
                .expect("eight bytes"),
        );
        index.insert(k0, 0);
        let mut head = 0;
        while head < keys.len() {
            let v = vecs[head];
            for j in 0..n {
                if v[j] > 0 {
                    let mut u: Vec<i32> = v[..n].iter().map(|&x| x as i32).collect();
                    d.reflect_weight(&mut u, j);
                    let k = pack(&u);
                    if !index.contains_key(&k) {
                        index.insert(k, keys.len() as u32);
                        keys.push(k);
                        vecs.push(
                            ElemKey::unpack_u64(k).0[..8]
                                .try_into()
                                .expect("eight bytes"),
                        );
                    }
                }
            }
            head += 1;
        }
        if keys.len() != order {
            return Err(Error::Precondition(format!(
                "enumerated {} elements, expected {order}",
                keys.len()
            )));
        }
        // Inverse of each element, via its reversed reduced word.
        let mut inv = vec![0u32; order];
        for (x, slot) in inv.iter_mut().enumerate() {
            let mut cur: Vec<i32> = vecs[x][..n].iter().map(|&c| c as i32).collect();
            let mut word = Vec::new();
            while let Some(j) = cur.iter().position(|&c| c < 0) {
                word.push(j as u8);
                d.reflect_weight(&mut cur, j);
            }
            let mut y = rho.clone();
            for &j in &word {
                d.reflect_weight(&mut y, j as usize);
            }
            *slot = index[&pack(&y)];
        }
        // x s = (s x⁻¹)⁻¹, and l(x s) > l(x) iff ⟨x⁻¹ρ, α̌_s⟩ > 0.
        let mut rmul = vec![0u32; order * n];
        for x in 0..order {
            let xi = inv[x] as usize;
            let v = vecs[xi];
            for j in 0..n {
                let mut u: Vec<i32> = v[..n].iter().map(|&c| c as i32).collect();
                d.reflect_weight(&mut u, j);
                let sxi = index[&pack(&u)];
                let xs = inv[sxi as usize];
                rmul[x * n + j] = if v[j] > 0 { xs } else { xs | DOWN };
            }
        }
        Ok(GroupTable {
            rank: n,
            keys,
            rmul,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `(x s_j, l(x s_j) > l(x))`.
    #[inline]
    pub fn rmul(&self, x: u32, j: usize) -> (u32, bool) {
        let e = self.rmul[x as usize * self.rank + j];
        (e & !DOWN, e & DOWN == 0)
    }

    pub fn key(&self, x: u32) -> u64 {
        self.keys[x as usize]
    }

    pub fn index_of_key(&self, key: u64) -> Option<u32> {
        self.index.get(&key).copied()
    }

    /// Index of the product of a word, starting from `x`.
    pub fn right_word(&self, mut x: u32, word: &[u8]) -> u32 {
        for &j in word {
            x = self.rmul(x, j as usize).0;
        }
        x
    }
}

/// The rows `v_u = T_u · triv · n_w(λ₀)` for `u ∈ W^{M,T}`, generated on
/// demand. Rows are kept as integer multiples of the exact rows; the common
/// scale is `scale`.
pub struct ModuleRowSet<'a> {
    pub point: DpsPoint,
    pub parabolic: LeviSpec,
    pub lambda0: CharacterX,
    pub word: Vec<u8>,
    pub q: i64,
    pub order: FactorOrder,
    pub factors: Vec<Factor>,
    /// `exact row = integer row / scale`.
    pub scale: Q,
    table: &'a GroupTable,
    reps: Vec<u32>,
    levi_elems: Vec<Vec<u8>>,
    scaled: Vec<(u8, i64, i64)>,
}

/// Builds the row generator for a point, an element `w ∈ W^{M,T}` and `q`.
pub fn module_rows<'a>(
    d: &RootDatum,
    table: &'a GroupTable,
    p: &DpsPoint,
    word: &[u8],
    q: i64,
    order: FactorOrder,
) -> Result<ModuleRowSet<'a>> {
    if p.k != 1 {
        return Err(Error::Ramified(format!(
            "{p} has a character of order {}",
            p.k
        )));
    }
    if table.len() as u64 != d.weyl_order() {
        return Err(Error::Precondition(
            "group table built for another datum".into(),
        ));
    }
    let theta = p.levi(d)?;
    let lambda0 = leading_exponent(d, p)?;
    let w = d.element_from_word(word)?;
    if w.length() != word.len() {
        return Err(Error::Config(format!(
            "word {} is not reduced",
            format_word(word)
        )));
    }
    let factors = intertwiner_factors(d, word, &lambda0, q, order)?;
    let mut scale = Q::one();
    let mut scaled = Vec::with_capacity(factors.len());
    for f in &factors {
        let (a, b, m) = f.integer_scaled();
        scale *= m;
        scaled.push((f.letter, a, b));
    }
    let reps: Vec<u32> = d
        .min_double_coset_reps(theta, LeviSpec::empty())?
        .iter()
        .map(|u| table.right_word(0, u.word()))
        .collect();
    let levi_elems = d
        .parabolic_elements(theta)
        .into_iter()
        .map(|v| v.word().to_vec())
        .collect();
    Ok(ModuleRowSet {
        point: *p,
        parabolic: theta,
        lambda0,
        word: word.to_vec(),
        q,
        order,
        factors,
        scale,
        table,
        reps,
        levi_elems,
        scaled,
    })
}

/// Reusable buffers for row generation.
pub struct RowScratch {
    dense: Vec<i64>,
    cur: Vec<u32>,
    next: Vec<u32>,
}

impl RowScratch {
    pub fn new(table: &GroupTable) -> Self {
        RowScratch {
            dense: vec![0; table.len()],
            cur: Vec::new(),
            next: Vec::new(),
        }
    }
}

fn overflow(u: usize) -> Error {
    Error::Overflow(format!(
        "row {u} has a coefficient outside the 64-bit range"
    ))
}

impl ModuleRowSet<'_> {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn table(&self) -> &GroupTable {
        self.table
    }

    /// Canonical key of the coset representative of row `u`.
    pub fn rep_key(&self, u: usize) -> u64 {
        self.table.key(self.reps[u])
    }

    /// Integer row `u` as `(column, coefficient)` sorted by column index.
    pub fn row_into(&self, u: usize, s: &mut RowScratch, out: &mut Vec<(u32, i64)>) -> Result<()> {
        let t = self.table;
        s.cur.clear();
        for v in &self.levi_elems {
            let x = t.right_word(self.reps[u], v);
            s.dense[x as usize] += 1;
            s.cur.push(x);
        }
        let qm1 = self.q - 1;
        for &(j, a, b) in &self.scaled {
            s.next.clear();
            // Read coefficients out, then write the product back.
            let terms: Vec<(u32, i64)> = s
                .cur
                .iter()
                .filter_map(|&x| {
                    let c = std::mem::take(&mut s.dense[x as usize]);
                    (c != 0).then_some((x, c))
                })
                .collect();
            for (x, c) in terms {
                let put =
                    |y: u32, v: i64, dense: &mut Vec<i64>, next: &mut Vec<u32>| -> Result<()> {
                        if v == 0 {
                            return Ok(());
                        }
                        let slot = &mut dense[y as usize];
                        if *slot == 0 {
                            next.push(y);
                        }
                        *slot = slot.checked_add(v).ok_or_else(|| overflow(u))?;
                        Ok(())
                    };
                let ac = a.checked_mul(c).ok_or_else(|| overflow(u))?;
                put(x, ac, &mut s.dense, &mut s.next)?;
                let bc = b.checked_mul(c).ok_or_else(|| overflow(u))?;
                let (y, up) = t.rmul(x, j as usize);
                if up {
                    put(y, bc, &mut s.dense, &mut s.next)?;
                } else {
                    put(
                        y,
                        bc.checked_mul(self.q).ok_or_else(|| overflow(u))?,
                        &mut s.dense,
                        &mut s.next,
                    )?;
                    put(
                        x,
                        bc.checked_mul(qm1).ok_or_else(|| overflow(u))?,
                        &mut s.dense,
                        &mut s.next,
                    )?;
                }
            }
            std::mem::swap(&mut s.cur, &mut s.next);
        }
        out.clear();
        for &x in &s.cur {
            let c = std::mem::take(&mut s.dense[x as usize]);
            if c != 0 {
                out.push((x, c));
            }
        }
        out.sort_unstable_by_key(|&(x, _)| x);
        out.dedup_by_key(|e| e.0);
        Ok(())
    }

    /// Exact row `u` as a Hecke vector.
    pub fn row_vector(&self, u: usize) -> Result<HeckeVector> {
        let mut s = RowScratch::new(self.table);
        let mut buf = Vec::new();
        self.row_into(u, &mut s, &mut buf)?;
        let mut v = HeckeVector::zero();
        for (x, c) in buf {
            v.add_term(self.table.key(x), Q::from_integer(c) / self.scale);
        }
        Ok(v)
    }
}

/// How the kernel was certified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// The rank lower bound already equals the row count.
    Exact,
    /// Modular rank bounds the kernel from above; as many exact rational null
    /// vectors were verified.
    ModularUpperBoundExactNullvectors,
    /// Bounds that do not meet.
    Uncertified {
        kernel_upper: usize,
        verified_nullvectors: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelReport {
    pub rows: usize,
    pub rank: usize,
    pub kernel_dim: usize,
    pub certification: Certification,
    /// Rows removed by singleton-column peeling (independent over any field).
    pub peeled: usize,
    pub residual_rows: usize,
    /// Primes used, in order: rank attempts, then the kernel prime if any.
    pub primes: Vec<u64>,
    pub spill_bytes: u64,
    pub block_passes: usize,
}

/// Where rows are spilled and how much storage they may take.
#[derive(Debug, Clone)]
pub struct SpillConfig {
    pub dir: PathBuf,
    pub max_bytes: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct KernelOptions {
    pub block_rows: usize,
    pub workers: usize,
    pub spill: Option<SpillConfig>,
    pub seed: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            block_rows: 64,
            workers: 1,
            spill: None,
            seed: 0x5eed,
        }
    }
}

/// Progress record written next to the spill file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub point: DpsPoint,
    pub word: String,
    pub q: i64,
    pub completed_rows: usize,
    pub block_pass: usize,
}

pub const SPILL_FILE: &str = "rows.spill";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_uvarint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn write_svarint(out: &mut Vec<u8>, v: i64) {
    write_uvarint(out, ((v << 1) ^ (v >> 63)) as u64);
}

fn read_uvarint(r: &mut impl Read) -> std::io::Result<u64> {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let mut b = [0u8];
        r.read_exact(&mut b)?;
        v |= ((b[0] & 0x7f) as u64) << shift;
        if b[0] & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift > 63 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "varint too long",
            ));
        }
    }
}

fn read_svarint(r: &mut impl Read) -> std::io::Result<i64> {
    let u = read_uvarint(r)?;
    Ok(((u >> 1) as i64) ^ -((u & 1) as i64))
}

/// One spilled row: the representative's key and exact terms sorted by key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpilledRow {
    pub rep_key: u64,
    pub terms: Vec<(u64, i64, u64)>,
}

/// Encodes a row: `u64` key and `u32` term count, then `(u64 key, signed
/// varint numerator, unsigned varint denominator)` per term, little-endian.
pub fn encode_row(row: &SpilledRow) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + row.terms.len() * 12);
    out.extend_from_slice(&row.rep_key.to_le_bytes());
    out.extend_from_slice(&(row.terms.len() as u32).to_le_bytes());
    for &(k, num, den) in &row.terms {
        out.extend_from_slice(&k.to_le_bytes());
        write_svarint(&mut out, num);
        write_uvarint(&mut out, den);
    }
    out
}

/// Decodes the next row, or `None` at a clean end of input.
pub fn decode_row(r: &mut impl Read) -> Result<Option<SpilledRow>> {
    let mut head = [0u8; 8];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let rep_key = u64::from_le_bytes(head);
    let mut cnt = [0u8; 4];
    r.read_exact(&mut cnt)
        .map_err(|_| Error::Format("truncated row header".into()))?;
    let n = u32::from_le_bytes(cnt) as usize;
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let mut kb = [0u8; 8];
        r.read_exact(&mut kb)
            .map_err(|_| Error::Format("truncated term".into()))?;
        let num = read_svarint(r).map_err(|_| Error::Format("truncated numerator".into()))?;
        let den = read_uvarint(r).map_err(|_| Error::Format("truncated denominator".into()))?;
        terms.push((u64::from_le_bytes(kb), num, den));
    }
    Ok(Some(SpilledRow { rep_key, terms }))
}

fn spilled(rows: &ModuleRowSet<'_>, u: usize, buf: &[(u32, i64)]) -> SpilledRow {
    let den = *rows.scale.numer();
    let mut terms: Vec<(u64, i64, u64)> = buf
        .iter()
        .map(|&(x, c)| {
            let v =
                Q::from_integer(c) * Q::from_integer(*rows.scale.denom()) / Q::from_integer(den);
            let v = if rows.scale.is_negative() { -v } else { v };
            let (n, dd) = (*v.numer(), *v.denom());
            (rows.table.key(x), n, dd as u64)
        })
        .collect();
    terms.sort_unstable_by_key(|t| t.0);
    SpilledRow {
        rep_key: rows.rep_key(u),
        terms,
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(
        &tmp,
        serde_json::to_vec_pretty(m).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Format(format!("bad manifest: {e}")))
}

/// Writes every row to the spill file, resuming after the rows a matching
/// manifest records as complete. Fails with a checkpoint when the size limit
/// would be exceeded.
pub fn spill_rows(rows: &ModuleRowSet<'_>, cfg: &SpillConfig) -> Result<(Manifest, u64)> {
    fs::create_dir_all(&cfg.dir)?;
    let fresh = Manifest {
        point: rows.point,
        word: format_word(&rows.word),
        q: rows.q,
        completed_rows: 0,
        block_pass: 0,
    };
    let mut manifest = match read_manifest(&cfg.dir)? {
        Some(m) if m.point == fresh.point && m.word == fresh.word && m.q == fresh.q => m,
        _ => fresh,
    };
    let spill_path = cfg.dir.join(SPILL_FILE);
    // Find the byte offset just past the completed rows.
    let mut offset = 0u64;
    if manifest.completed_rows > 0 && spill_path.exists() {
        let mut r = BufReader::new(File::open(&spill_path)?);
        for _ in 0..manifest.completed_rows {
            match decode_row(&mut r)? {
                Some(row) => {
                    offset += encode_row(&row).len() as u64;
                }
                None => {
                    manifest.completed_rows = 0;
                    offset = 0;
                    break;
                }
            }
        }
    } else {
        manifest.completed_rows = 0;
    }
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(&spill_path)?;
    file.set_len(offset)?;
    let mut w = BufWriter::new(file);
    w.seek(SeekFrom::Start(offset))?;
    let mut bytes = offset;
    let mut scratch = RowScratch::new(rows.table);
    let mut buf = Vec::new();
    for u in manifest.completed_rows..rows.len() {
        rows.row_into(u, &mut scratch, &mut buf)?;
        let enc = encode_row(&spilled(rows, u, &buf));
        if let Some(limit) = cfg.max_bytes {
            if bytes + enc.len() as u64 > limit {
                w.flush()?;
                let path = write_manifest(&cfg.dir, &manifest)?;
                return Err(Error::ResourceExhausted {
                    reason: format!(
                        "spill limit of {limit} bytes reached after {} of {} rows",
                        manifest.completed_rows,
                        rows.len()
                    ),
                    checkpoint: path,
                });
            }
        }
        w.write_all(&enc)?;
        bytes += enc.len() as u64;
        manifest.completed_rows = u + 1;
        if manifest.completed_rows % 256 == 0 {
            w.flush()?;
            write_manifest(&cfg.dir, &manifest)?;
        }
    }
    w.flush()?;
    write_manifest(&cfg.dir, &manifest)?;
    Ok((manifest, bytes))
}

/// Column hash for the random projection: bucket and nonzero weight.
#[inline]
fn column_hash(seed: u64, col: u32, buckets: usize, p: u64) -> (usize, u64) {
    let mut z = seed ^ (col as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let b = (z % buckets as u64) as usize;
    let w = (z >> 20) % (p - 1) + 1;
    (b, w)
}

/// Singleton-column peeling: a row owning a column no other live row touches
/// is independent of the rest. Returns the live mask after no row can be
/// peeled.
fn peel(rows: &ModuleRowSet<'_>) -> Result<Vec<bool>> {
    let n = rows.len();
    let mut counts = vec![0u32; rows.table.len()];
    let mut scratch = RowScratch::new(rows.table);
    let mut buf = Vec::new();
    for u in 0..n {
        rows.row_into(u, &mut scratch, &mut buf)?;
        for &(x, _) in &buf {
            counts[x as usize] = counts[x as usize].saturating_add(1);
        }
    }
    let mut live = vec![true; n];
    loop {
        let mut changed = false;
        for u in 0..n {
            if !live[u] {
                continue;
            }
            rows.row_into(u, &mut scratch, &mut buf)?;
            if buf.iter().any(|&(x, _)| counts[x as usize] == 1) {
                live[u] = false;
                changed = true;
                for &(x, _) in &buf {
                    counts[x as usize] -= 1;
                }
            }
        }
        if !changed {
            return Ok(live);
        }
    }
}

/// Checks `Σ_u x_u v_u = 0` exactly for integer combinations of rows, with
/// one pass over the rows for all candidates.
fn verify_null_vectors(
    rows: &ModuleRowSet<'_>,
    which: &[usize],
    xs: &[Vec<i128>],
) -> Result<Vec<bool>> {
    let mut acc: Vec<FxHashMap<u32, i128>> = vec![FxHashMap::default(); xs.len()];
    let mut ok = vec![true; xs.len()];
    let mut scratch = RowScratch::new(rows.table);
    let mut buf = Vec::new();
    for (pos, &u) in which.iter().enumerate() {
        if xs.iter().all(|x| x[pos] == 0) {
            continue;
        }
        rows.row_into(u, &mut scratch, &mut buf)?;
        for (k, x) in xs.iter().enumerate() {
            let xu = x[pos];
            if xu == 0 || !ok[k] {
                continue;
            }
            for &(col, c) in &buf {
                let e = acc[k].entry(col).or_insert(0);
                match (c as i128).checked_mul(xu).and_then(|v| e.checked_add(v)) {
                    Some(v) => *e = v,
                    None => ok[k] = false,
                }
            }
        }
    }
    Ok(ok
        .into_iter()
        .zip(&acc)
        .map(|(good, a)| good && a.values().all(|&v| v == 0))
        .collect())
}

/// Rank of the span of the rows and the dimension of the kernel of
/// `Σ c_u T_u·triv ↦ Σ c_u v_u`.
///
/// Peeling removes rows that are independent over every field. The remaining
/// rows are compressed by a random sparse column projection and eliminated
/// in blocks modulo a 20-bit prime in floating point; both steps can only
/// lose rank, so the result bounds the exact rank from below. When rank is
/// still missing, the projected rows are eliminated modulo a 62-bit prime,
/// the left null vectors are lifted by rational reconstruction and each one
/// is checked exactly against the full rows.
pub fn kernel_dimension(rows: &ModuleRowSet<'_>, opts: &KernelOptions) -> Result<KernelReport> {
    let mut spill_bytes = 0;
    let mut manifest = None;
    if let Some(cfg) = &opts.spill {
        let (m, b) = spill_rows(rows, cfg)?;
        spill_bytes = b;
        manifest = Some(m);
    }
    let n = rows.len();
    let live = peel(rows)?;
    let residual: Vec<usize> = (0..n).filter(|&u| live[u]).collect();
    let peeled = n - residual.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let buckets = residual.len() + 16;
    let block = opts.block_rows.max(1);
    let mut primes = Vec::new();
    let (mut residual_rank, mut passes) = (0, 0);
    for _ in 0..RANK_ATTEMPTS {
        if residual.is_empty() || residual_rank == residual.len() {
            break;
        }
        let p = random_prime_bits(&mut rng, F64_PRIME_BITS);
        let hseed: u64 = rng.gen();
        primes.push(p);
        let mut ech = F64Echelon::new(p, buckets);
        for chunk in residual.chunks(block) {
            let projected = project_rows(rows, chunk, hseed, buckets, p, opts.workers)?;
            let mut flat: Vec<f64> = projected.into_iter().flatten().map(|x| x as f64).collect();
            ech.insert_block(&mut flat);
            passes += 1;
            if let (Some(cfg), Some(m)) = (&opts.spill, manifest.as_mut()) {
                m.block_pass = passes;
                write_manifest(&cfg.dir, m)?;
            }
        }
        residual_rank = residual_rank.max(ech.rank());
    }
    let mut verified = 0;
    if residual_rank < residual.len() && residual.len() <= KERNEL_VECTOR_LIMIT {
        let p = random_prime_62(&mut rng);
        let hseed: u64 = rng.gen();
        primes.push(p);
        let projected = project_rows(rows, &residual, hseed, buckets, p, opts.workers)?;
        let (r, kernel, _) = modular_rank_left_kernel(projected, p, block);
        residual_rank = residual_rank.max(r);
        if r == residual_rank {
            let mut candidates = Vec::new();
            for kv in &kernel {
                let Some(qs) = kv
                    .iter()
                    .map(|&a| rational_reconstruct(a, p))
                    .collect::<Option<Vec<Q>>>()
                else {
                    continue;
                };
                let l = qs.iter().try_fold(1i64, |acc, x| {
                    let m = num_integer::lcm(acc, *x.denom());
                    (m > 0 && m < i64::MAX / 2).then_some(m)
                });
                let Some(l) = l else { continue };
                candidates.push(
                    qs.iter()
                        .map(|x| (*x * Q::from_integer(l)).to_integer() as i128)
                        .collect(),
                );
            }
            verified = verify_null_vectors(rows, &residual, &candidates)?
                .into_iter()
                .filter(|&b| b)
                .count();
        }
    }
    let kernel_upper = residual.len() - residual_rank;
    let certification = if kernel_upper == 0 {
        Certification::Exact
    } else if verified == kernel_upper {
        Certification::ModularUpperBoundExactNullvectors
    } else {
        Certification::Uncertified {
            kernel_upper,
            verified_nullvectors: verified,
        }
    };
    let rank = peeled + residual_rank;
    Ok(KernelReport {
        rows: n,
        rank,
        kernel_dim: n - rank,
        certification,
        peeled,
        residual_rows: residual.len(),
        primes,
        spill_bytes,
        block_passes: passes,
    })
}

/// Independent projections tried before accepting a rank deficiency.
const RANK_ATTEMPTS: usize = 2;

/// Largest residue for which exact null vectors are computed.
pub const KERNEL_VECTOR_LIMIT: usize = 4096;

/// Rows compressed by the column hash, reduced mod `p`. Work is split into
/// contiguous ranges across `workers` threads; the output does not depend on
/// the split.
fn project_rows(
    rows: &ModuleRowSet<'_>,
    which: &[usize],
    hseed: u64,
    buckets: usize,
    p: u64,
    workers: usize,
) -> Result<Vec<Vec<u64>>> {
    let run = |part: &[usize]| -> Result<Vec<Vec<u64>>> {
        let mut scratch = RowScratch::new(rows.table);
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(part.len());
        for &u in part {
            rows.row_into(u, &mut scratch, &mut buf)?;
            let mut row = vec![0u64; buckets];
            for &(col, c) in &buf {
                let (b, w) = column_hash(hseed, col, buckets, p);
                row[b] = (row[b] + mulmod(to_mod(c, p), w, p)) % p;
            }
            out.push(row);
        }
        Ok(out)
    };
    let workers = workers.clamp(1, which.len().max(1));
    if workers == 1 {
        return run(which);
    }
    let size = which.len().div_ceil(workers);
    let parts: Vec<Result<Vec<Vec<u64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = which
            .chunks(size)
            .map(|part| s.spawn(move || run(part)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(which.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
