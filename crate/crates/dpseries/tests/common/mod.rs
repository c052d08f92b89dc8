//! Brute-force oracles shared by the integration tests. Nothing here uses the
//! engine's own orbit or descent machinery.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use dpseries::rootsys::RootDatum;

pub type Mat = Vec<Vec<i64>>;

/// Matrix of `s_j` on fundamental-weight coordinates (column convention:
/// `v' = M v`).
pub fn reflection_matrix(d: &RootDatum, j: usize) -> Mat {
    let n = d.rank();
    let mut m = vec![vec![0i64; n]; n];
    for i in 0..n {
        m[i][i] = 1;
    }
    for i in 0..n {
        m[i][j] -= d.cartan[i][j] as i64;
    }
    m
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut c = vec![vec![0i64; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

pub fn mat_vec(a: &Mat, v: &[i64]) -> Vec<i64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Every element of W as a matrix, by closure under right multiplication
/// with simple reflections.
pub fn all_matrices(d: &RootDatum) -> Vec<Mat> {
    let n = d.rank();
    let id: Mat = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as i64).collect())
        .collect();
    let gens: Vec<Mat> = (0..n).map(|j| reflection_matrix(d, j)).collect();
    let mut seen: HashSet<Mat> = HashSet::new();
    seen.insert(id.clone());
    let mut queue = VecDeque::from([id]);
    let mut out = Vec::new();
    while let Some(m) = queue.pop_front() {
        for g in &gens {
            let p = mat_mul(&m, g);
            if seen.insert(p.clone()) {
                queue.push_back(p);
            }
        }
        out.push(m);
    }
    out
}

/// Weight coordinates of each positive root.
pub fn root_weights(d: &RootDatum) -> Vec<Vec<i64>> {
    d.positive_roots
        .iter()
        .map(|b| {
            (0..d.rank())
                .map(|j| {
                    (0..d.rank())
                        .map(|i| b[i] as i64 * d.cartan[j][i] as i64)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Is a weight-coordinate vector a positive root, negative root, or neither.
pub fn root_sign(d: &RootDatum, v: &[i64]) -> Option<i32> {
    let rw = root_weights(d);
    if rw.iter().any(|r| r.as_slice() == v) {
        return Some(1);
    }
    let neg: Vec<i64> = v.iter().map(|x| -x).collect();
    if rw.iter().any(|r| *r == neg) {
        return Some(-1);
    }
    None
}

/// Length by counting inversions on roots.
pub fn matrix_length(d: &RootDatum, m: &Mat) -> usize {
    let rw = root_weights(d);
    let set: HashSet<Vec<i64>> = rw.iter().cloned().collect();
    rw.iter().filter(|r| !set.contains(&mat_vec(m, r))).count()
}

/// Minimal left coset representatives of W/W_Θ by brute force: group all
/// elements by their coset (the set m·W_Θ) and keep the shortest member.
pub fn brute_min_coset_reps(d: &RootDatum, theta: &[usize]) -> Vec<Mat> {
    let all = all_matrices(d);
    let gens: Vec<Mat> = theta.iter().map(|&j| reflection_matrix(d, j)).collect();
    let n = d.rank();
    let id: Mat = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as i64).collect())
        .collect();
    let mut sub: HashSet<Mat> = HashSet::new();
    sub.insert(id.clone());
    let mut q = VecDeque::from([id]);
    while let Some(m) = q.pop_front() {
        for g in &gens {
            let p = mat_mul(&m, g);
            if sub.insert(p.clone()) {
                q.push_back(p);
            }
        }
    }
    let mut coset_of: HashMap<Mat, usize> = HashMap::new();
    let mut reps: Vec<Mat> = Vec::new();
    for m in &all {
        if coset_of.contains_key(m) {
            continue;
        }
        let coset: Vec<Mat> = sub.iter().map(|u| mat_mul(m, u)).collect();
        let best = coset
            .iter()
            .min_by_key(|x| matrix_length(d, x))
            .unwrap()
            .clone();
        let idx = reps.len();
        for c in coset {
            coset_of.insert(c, idx);
        }
        reps.push(best);
    }
    reps
}
