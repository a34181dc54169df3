//! Γ-sparse spherically homogeneous trees and their graph Laplacians.
//!
//! A tree is described by its forward branching g_n: every vertex in shell n has
//! g_n children. The sparse rule branches only at the positions L_m, with
//! g = ⌊L_m^{(1−Γ)/Γ}⌋ there. Vertices are numbered shell by shell, children of
//! a vertex are contiguous, so parent/child maps are plain index arithmetic.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// How the sparse positions L_1 < L_2 < … are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum SparseRule {
    /// L_m = 2^{m^m}: 2, 16, 134217728, then past u64.
    Paper,
    Explicit(Vec<u64>),
    /// L_m = first · ratio^{m−1}.
    Geometric { first: u64, ratio: u64 },
    /// L_1 = first, L_{m+1} = L_m².
    Squaring { first: u64 },
}

impl SparseRule {
    /// All positions not exceeding `limit`.
    pub fn positions(&self, limit: u64) -> Vec<u64> {
        let mut out = Vec::new();
        match self {
            SparseRule::Paper => {
                for m in 1u32.. {
                    let e = m.pow(m);
                    if e >= 64 {
                        break;
                    }
                    let l = 1u64 << e;
                    if l > limit {
                        break;
                    }
                    out.push(l);
                }
            }
            SparseRule::Explicit(v) => out.extend(v.iter().copied().filter(|&l| l <= limit)),
            SparseRule::Geometric { first, ratio } => {
                let mut l = *first;
                while l <= limit {
                    out.push(l);
                    match l.checked_mul(*ratio) {
                        Some(next) if *ratio > 1 => l = next,
                        _ => break,
                    }
                }
            }
            SparseRule::Squaring { first } => {
                let mut l = *first;
                while l <= limit {
                    out.push(l);
                    match l.checked_mul(l) {
                        Some(next) if l > 1 => l = next,
                        _ => break,
                    }
                }
            }
        }
        out
    }
}

/// Γ, the sparse positions and the truncation depth D.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub gamma: f64,
    pub sparse_positions: Vec<u64>,
    pub depth: usize,
    exponent: Exponent,
}

/// (1−Γ)/Γ, kept as num/den when Γ is recognisably rational.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Exponent {
    Rational { num: u32, den: u32 },
    Real(f64),
}

impl TreeParams {
    pub fn new(gamma: f64, sparse_positions: Vec<u64>, depth: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Param(format!("gamma = {gamma} must lie in (0,1)")));
        }
        if depth < 1 {
            return Err(Error::Param("depth must be at least 1".into()));
        }
        if let Some(&first) = sparse_positions.first() {
            if first < 1 {
                return Err(Error::Param("sparse positions must be positive".into()));
            }
        }
        if sparse_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Param("sparse positions must be strictly increasing".into()));
        }
        let exponent = match rational_approx(gamma) {
            Some((p, q)) => Exponent::Rational { num: q - p, den: p },
            None => Exponent::Real((1.0 - gamma) / gamma),
        };
        Ok(TreeParams { gamma, sparse_positions, depth, exponent })
    }

    pub fn with_rule(gamma: f64, rule: &SparseRule, depth: usize) -> Result<Self> {
        Self::new(gamma, rule.positions(u64::MAX), depth)
    }

    pub fn is_sparse_position(&self, n: u64) -> bool {
        self.sparse_positions.binary_search(&n).is_ok()
    }

    /// Sparse positions inside the truncation (L ≤ D − 1, so they actually branch).
    pub fn positions_within_depth(&self) -> Vec<u64> {
        self.sparse_positions.iter().copied().filter(|&l| (l as usize) < self.depth).collect()
    }

    /// ⌊n^{(1−Γ)/Γ}⌋, saturating at u64::MAX.
    pub fn barrier_height(&self, n: u64) -> u64 {
        match self.exponent {
            Exponent::Rational { num, den } => {
                match checked_pow_u128(n as u128, num) {
                    Some(x) => {
                        let r = integer_root(x, den);
                        u64::try_from(r).unwrap_or(u64::MAX)
                    }
                    None => float_floor_pow(n, (num as f64) / (den as f64)),
                }
            }
            Exponent::Real(e) => float_floor_pow(n, e),
        }
    }
}

/// Continued-fraction match of x to p/q with q ≤ 10⁴ up to a few ulps.
fn rational_approx(x: f64) -> Option<(u32, u32)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        let ai = a as i64;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > 10_000 {
            return None;
        }
        let approx = h2 as f64 / k2 as f64;
        if (approx - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return Some((h2 as u32, k2 as u32));
        }
        let frac = r - a;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
    }
    None
}

fn checked_pow_u128(base: u128, e: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// ⌊x^{1/k}⌋ exactly.
fn integer_root(x: u128, k: u32) -> u128 {
    if k == 1 || x < 2 {
        return x;
    }
    let mut r = (x as f64).powf(1.0 / k as f64).floor() as u128;
    while r > 0 && checked_pow_u128(r, k).map_or(true, |v| v > x) {
        r -= 1;
    }
    while checked_pow_u128(r + 1, k).is_some_and(|v| v <= x) {
        r += 1;
    }
    r
}

fn float_floor_pow(n: u64, e: f64) -> u64 {
    let v = (n as f64).powf(e);
    let guarded = (v - 2.0 * v * f64::EPSILON).floor();
    if guarded >= u64::MAX as f64 {
        u64::MAX
    } else {
        guarded.max(1.0) as u64
    }
}

/// g_n: the barrier height at sparse positions, 1 elsewhere (and always at n = 0).
pub fn sparse_branching(params: &TreeParams, n: u64) -> u64 {
    if n == 0 || !params.is_sparse_position(n) {
        1
    } else {
        params.barrier_height(n).max(1)
    }
}

/// Finite truncation of the tree at shell D.
#[derive(Debug, Clone, PartialEq)]
pub struct ShTree {
    pub params: TreeParams,
    /// g_0..g_{D−1}.
    pub g: Vec<u64>,
    /// α_0..α_D.
    pub alpha: Vec<u64>,
    pub vertex_count: u64,
    /// First vertex index of each shell, plus the total at the end.
    offsets: Vec<u64>,
}

pub fn build_tree(params: &TreeParams) -> Result<ShTree> {
    let d = params.depth;
    let g: Vec<u64> = (0..d as u64).map(|n| sparse_branching(params, n)).collect();
    let mut alpha = Vec::with_capacity(d + 1);
    alpha.push(1u64);
    for (n, &gn) in g.iter().enumerate() {
        if gn == u64::MAX {
            return Err(Error::Overflow(format!("branching at shell {n} exceeds u64")));
        }
        let next = alpha[n]
            .checked_mul(gn)
            .ok_or_else(|| Error::Overflow(format!("shell size α_{} exceeds u64", n + 1)))?;
        alpha.push(next);
    }
    let mut offsets = Vec::with_capacity(d + 2);
    let mut total = 0u64;
    for &a in &alpha {
        offsets.push(total);
        total = total
            .checked_add(a)
            .ok_or_else(|| Error::Overflow("vertex count exceeds u64".into()))?;
    }
    offsets.push(total);
    Ok(ShTree { params: params.clone(), g, alpha, vertex_count: total, offsets })
}

impl ShTree {
    pub fn depth(&self) -> usize {
        self.g.len()
    }

    /// Vertex degree in shell n: g_0 at the root, g_n + 1 inside, 1 on the leaves.
    pub fn degree(&self, n: usize) -> u64 {
        let d = self.depth();
        if n == 0 {
            self.g[0]
        } else if n == d {
            1
        } else {
            self.g[n] + 1
        }
    }

    pub fn shell_offset(&self, n: usize) -> u64 {
        self.offsets[n]
    }

    /// (shell, position within shell) of a vertex.
    pub fn locate(&self, v: u64) -> Result<(usize, u64)> {
        if v >= self.vertex_count {
            return Err(Error::Index { index: v as usize, len: self.vertex_count as usize });
        }
        let n = self.offsets.partition_point(|&o| o <= v) - 1;
        Ok((n, v - self.offsets[n]))
    }

    pub fn vertex(&self, n: usize, i: u64) -> u64 {
        self.offsets[n] + i
    }

    /// Parent of vertex (n, i), n ≥ 1, as a position in shell n − 1.
    pub fn parent(&self, n: usize, i: u64) -> u64 {
        i / self.g[n - 1]
    }
}

/// H = D − A in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLaplacian {
    pub dimension: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseLaplacian {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.val[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dimension).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

/// Graph Laplacian H = D − A of the truncated tree.
pub fn assemble_laplacian(tree: &ShTree) -> Result<SparseLaplacian> {
    let dim = usize::try_from(tree.vertex_count)
        .map_err(|_| Error::Overflow("vertex count exceeds usize".into()))?;
    let d = tree.depth();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0);
    for n in 0..=d {
        for i in 0..tree.alpha[n] {
            if n > 0 {
                col.push(tree.vertex(n - 1, tree.parent(n, i)) as usize);
                val.push(-1.0);
            }
            col.push(tree.vertex(n, i) as usize);
            val.push(tree.degree(n) as f64);
            if n < d {
                let g = tree.g[n];
                for c in 0..g {
                    col.push(tree.vertex(n + 1, i * g + c) as usize);
                    val.push(-1.0);
                }
            }
            row_ptr.push(col.len());
        }
    }
    Ok(SparseLaplacian { dimension: dim, row_ptr, col, val })
}

/// Graph distance, walking both vertices up to their lowest common ancestor.
pub fn tree_distance(tree: &ShTree, u: u64, v: u64) -> Result<u64> {
    let (mut nu, mut iu) = tree.locate(u)?;
    let (mut nv, mut iv) = tree.locate(v)?;
    let mut dist = 0;
    while nu > nv {
        iu = tree.parent(nu, iu);
        nu -= 1;
        dist += 1;
    }
    while nv > nu {
        iv = tree.parent(nv, iv);
        nv -= 1;
        dist += 1;
    }
    while iu != iv {
        iu = tree.parent(nu, iu);
        iv = tree.parent(nv, iv);
        nu -= 1;
        nv -= 1;
        dist += 2;
    }
    Ok(dist)
}
