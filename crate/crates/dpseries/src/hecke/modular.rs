//! Arithmetic modulo word-sized primes: primality, rational reconstruction
//! and two elimination routines. The `u64` routine tracks row operations and
//! yields a left kernel; the `f64` routine only computes rank and is meant for
//! large dense matrices.

use rand::Rng;

use crate::charlat::Q;

#[inline]
pub(crate) fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub(crate) fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1u64;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    r
}

pub(crate) fn invmod(a: u64, p: u64) -> u64 {
    powmod(a, p - 2, p)
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for sp in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % sp == 0 {
            return n == sp;
        }
    }
    let (mut dd, mut s) = (n - 1, 0);
    while dd % 2 == 0 {
        dd /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, dd, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A random prime in `[2⁶¹, 2⁶²)`.
pub fn random_prime_62(rng: &mut impl Rng) -> u64 {
    random_prime_bits(rng, 62)
}

/// A random prime in `[2^(bits−1), 2^bits)`.
pub fn random_prime_bits(rng: &mut impl Rng, bits: u32) -> u64 {
    assert!((3..=63).contains(&bits));
    loop {
        let c = (rng.gen::<u64>() >> (64 - bits)) | (1 << (bits - 1)) | 1;
        if is_prime_u64(c) {
            return c;
        }
    }
}

pub(crate) fn to_mod(c: i64, p: u64) -> u64 {
    if c >= 0 {
        c as u64 % p
    } else {
        p - ((c.unsigned_abs()) % p)
    }
}

/// Rational reconstruction of `a mod p` with numerator and denominator below
/// `√(p/2)`.
pub(crate) fn rational_reconstruct(a: u64, p: u64) -> Option<Q> {
    let bound = ((p / 2) as f64).sqrt() as i128;
    let (mut r0, mut r1) = (p as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 > bound {
        let qq = r0 / r1;
        (r0, r1) = (r1, r0 - qq * r1);
        (t0, t1) = (t1, t0 - qq * t1);
    }
    if t1 == 0 || t1.abs() > bound {
        return None;
    }
    let (n, d) = if t1 < 0 { (-r1, -t1) } else { (r1, t1) };
    Some(Q::new(i64::try_from(n).ok()?, i64::try_from(d).ok()?))
}

/// Gaussian elimination mod `p` on a dense matrix, processed in blocks of
/// `block_rows` rows. Returns the rank and a basis of the left kernel in
/// reduced echelon form.
pub(crate) fn modular_rank_left_kernel(
    mut m: Vec<Vec<u64>>,
    p: u64,
    block_rows: usize,
) -> (usize, Vec<Vec<u64>>, usize) {
    let r = m.len();
    let c = m.first().map_or(0, |row| row.len());
    // Augment with the identity to track row combinations.
    for (i, row) in m.iter_mut().enumerate() {
        row.extend((0..r).map(|j| u64::from(i == j)));
    }
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut passes = 0;
    let block = block_rows.max(1);
    let mut start = 0;
    while start < r {
        let end = (start + block).min(r);
        for i in start..end {
            // Reduce against the existing pivots.
            for &(pr, pc) in &pivots {
                let f = m[i][pc];
                if f != 0 {
                    let (a, b) = if pr < i {
                        let (lo, hi) = m.split_at_mut(i);
                        (&lo[pr], &mut hi[0])
                    } else {
                        unreachable!("pivot rows precede the row being reduced")
                    };
                    for k in pc..c + r {
                        if a[k] != 0 {
                            b[k] = (b[k] + p - mulmod(f, a[k], p)) % p;
                        }
                    }
                }
            }
            if let Some(pc) = (0..c).find(|&k| m[i][k] != 0) {
                let inv = invmod(m[i][pc], p);
                for k in pc..c + r {
                    m[i][k] = mulmod(m[i][k], inv, p);
                }
                pivots.push((i, pc));
            }
        }
        passes += 1;
        start = end;
    }
    let rank = pivots.len();
    let pivot_rows: std::collections::HashSet<usize> = pivots.iter().map(|&(i, _)| i).collect();
    let mut kernel: Vec<Vec<u64>> = (0..r)
        .filter(|i| !pivot_rows.contains(i))
        .map(|i| m[i][c..].to_vec())
        .collect();
    // Reduced echelon form of the kernel basis.
    let mut lead = 0;
    for i in 0..kernel.len() {
        while lead < r && (i..kernel.len()).all(|k| kernel[k][lead] == 0) {
            lead += 1;
        }
        if lead >= r {
            break;
        }
        let piv = (i..kernel.len())
            .find(|&k| kernel[k][lead] != 0)
            .expect("nonzero entry");
        kernel.swap(i, piv);
        let inv = invmod(kernel[i][lead], p);
        for x in kernel[i].iter_mut() {
            *x = mulmod(*x, inv, p);
        }
        for k in 0..kernel.len() {
            if k != i && kernel[k][lead] != 0 {
                let f = kernel[k][lead];
                let src = kernel[i].clone();
                for (x, y) in kernel[k].iter_mut().zip(&src) {
                    *x = (*x + p - mulmod(f, *y, p)) % p;
                }
            }
        }
        lead += 1;
    }
    (rank, kernel, passes)
}

/// Bit size of the primes used with [`F64Echelon`]. Reduced entries are below
/// 2²⁰, so [`DELAY`] updates of a row stay below 2⁵³ and are exact in `f64`.
pub const F64_PRIME_BITS: u32 = 20;
const DELAY: usize = 4096;

#[inline(always)]
fn reduce_f64(x: f64, p: f64) -> f64 {
    let mut r = x - p * (x / p).floor();
    if r < 0.0 {
        r += p;
    } else if r >= p {
        r -= p;
    }
    r
}

/// Row echelon form over `F_p` built one block of rows at a time. Pivot rows
/// are kept in insertion order, normalized to 1 at their pivot column, and
/// each one vanishes at the pivot columns of all earlier ones.
pub struct F64Echelon {
    p: u64,
    pf: f64,
    cols: usize,
    pivots: Vec<f64>,
    pivot_cols: Vec<usize>,
}

impl F64Echelon {
    pub fn new(p: u64, cols: usize) -> Self {
        assert!(
            p < 1 << F64_PRIME_BITS,
            "prime too large for exact f64 elimination"
        );
        F64Echelon {
            p,
            pf: p as f64,
            cols,
            pivots: Vec::new(),
            pivot_cols: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.pivot_cols.len()
    }

    /// Reduces each row of `block` (row-major, `cols` wide, entries in
    /// `[0, p)`) and keeps the independent ones. Returns the number of new
    /// pivots.
    pub fn insert_block(&mut self, block: &mut [f64]) -> usize {
        let cols = self.cols;
        assert_eq!(block.len() % cols.max(1), 0);
        let before = self.rank();
        for group in block.chunks_mut(4 * cols) {
            self.reduce_group(group, 0, before);
        }
        for row in block.chunks_mut(cols) {
            let end = self.rank();
            self.reduce_group(row, before, end);
            if let Some(pc) = row.iter().position(|&x| x != 0.0) {
                let inv = invmod(row[pc] as u64, self.p);
                for x in row[pc..].iter_mut() {
                    *x = mulmod(*x as u64, inv, self.p) as f64;
                }
                self.pivots.extend_from_slice(row);
                self.pivot_cols.push(pc);
            }
        }
        self.rank() - before
    }

    fn reduce_group(&self, group: &mut [f64], from: usize, to: usize) {
        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx2") {
                // SAFETY: the required CPU feature was detected at runtime.
                unsafe { self.reduce_group_avx2(group, from, to) };
                return;
            }
        }
        self.reduce_group_generic(group, from, to);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn reduce_group_avx2(&self, group: &mut [f64], from: usize, to: usize) {
        self.reduce_group_generic(group, from, to);
    }

    #[inline(always)]
    fn reduce_group_generic(&self, group: &mut [f64], from: usize, to: usize) {
        let cols = self.cols;
        let p = self.pf;
        let g = group.len() / cols;
        let mut pending = 0;
        for k in from..to {
            let pc = self.pivot_cols[k];
            let pv = &self.pivots[k * cols + pc..(k + 1) * cols];
            let mut f = [0.0f64; 4];
            for (r, fr) in f.iter_mut().enumerate().take(g) {
                *fr = reduce_f64(group[r * cols + pc], p);
            }
            if f.iter().all(|&x| x == 0.0) {
                continue;
            }
            if g == 4 {
                let (r0, rest) = group.split_at_mut(cols);
                let (r1, rest) = rest.split_at_mut(cols);
                let (r2, r3) = rest.split_at_mut(cols);
                for ((((a, b), c), d), &v) in r0[pc..]
                    .iter_mut()
                    .zip(r1[pc..].iter_mut())
                    .zip(r2[pc..].iter_mut())
                    .zip(r3[pc..].iter_mut())
                    .zip(pv)
                {
                    *a -= f[0] * v;
                    *b -= f[1] * v;
                    *c -= f[2] * v;
                    *d -= f[3] * v;
                }
            } else {
                for (r, row) in group.chunks_mut(cols).enumerate() {
                    for (x, &v) in row[pc..].iter_mut().zip(pv) {
                        *x -= f[r] * v;
                    }
                }
            }
            pending += 1;
            if pending == DELAY {
                group.iter_mut().for_each(|x| *x = reduce_f64(*x, p));
                pending = 0;
            }
        }
        group.iter_mut().for_each(|x| *x = reduce_f64(*x, p));
    }
}
