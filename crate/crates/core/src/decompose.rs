//! Orthogonal decomposition of the tree Laplacian into half-line Jacobi blocks.
//!
//! Block k starts at shell N(k), the first shell with α_{N(k)} ≥ k. Entry n of the
//! block sits on shell s = N(k) + n − 1 and carries d = deg(s), b = √g_s. The
//! off-diagonal is stored as the positive magnitude b and the block is
//! H^{(k)} = tridiag(−b; d; −b).

use crate::error::{Error, Result};
use crate::jacobi;
use crate::tree::{assemble_laplacian, ShTree};
use nalgebra::{DMatrix, SymmetricEigen};

pub const DEFAULT_DENSE_LIMIT: usize = 2000;

/// Integer data behind a tree block: d_k(n) and b_k(n)² = g before square roots.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCoeffs {
    pub d: Vec<i64>,
    pub b_sq: Vec<u64>,
}

/// One half-line Jacobi block, truncated to `d.len()` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiCoeffs {
    /// Block index; 0 for blocks not taken from a tree.
    pub k: u64,
    /// N(k).
    pub offset: usize,
    pub d: Vec<f64>,
    /// Couplings between sites n and n+1, one shorter than `d`; positive except for `diagonal` blocks.
    pub b: Vec<f64>,
    pub exact: Option<ExactCoeffs>,
}

impl JacobiCoeffs {
    pub fn new(d: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Param("empty Jacobi block".into()));
        }
        if b.len() + 1 != d.len() {
            return Err(Error::Param(format!(
                "off-diagonal length {} does not match diagonal length {}",
                b.len(),
                d.len()
            )));
        }
        if let Some(x) = b.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Param(format!("off-diagonal entry {x} is not positive")));
        }
        Ok(JacobiCoeffs { k: 0, offset: 0, d, b, exact: None })
    }

    /// Constant diagonal `d` and coupling `b`.
    pub fn uniform(n: usize, d: f64, b: f64) -> Self {
        JacobiCoeffs { k: 0, offset: 0, d: vec![d; n], b: vec![b; n.saturating_sub(1)], exact: None }
    }

    /// Decoupled sites: b = 0, so every δ_n is an eigenvector. Transfer matrices are
    /// undefined for such blocks.
    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Param("empty Jacobi block".into()));
        }
        let n = d.len();
        Ok(JacobiCoeffs { k: 0, offset: 0, d, b: vec![0.0; n - 1], exact: None })
    }

    /// The k = 1 block of the path graph: d = (1, 2, 2, …), b = 1.
    pub fn free_root_block(n: usize) -> Self {
        let mut c = Self::uniform(n, 2.0, 1.0);
        c.d[0] = 1.0;
        c.k = 1;
        c
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// First `n` sites.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.len());
        JacobiCoeffs {
            k: self.k,
            offset: self.offset,
            d: self.d[..n].to_vec(),
            b: self.b[..n.saturating_sub(1)].to_vec(),
            exact: self.exact.as_ref().map(|e| ExactCoeffs {
                d: e.d[..n].to_vec(),
                b_sq: e.b_sq[..n.saturating_sub(1)].to_vec(),
            }),
        }
    }

    /// (H f)(n) for a real vector.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.d[i] * f[i];
                if i > 0 {
                    s -= self.b[i - 1] * f[i - 1];
                }
                if i + 1 < n {
                    s -= self.b[i] * f[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.d[i];
            if i + 1 < n {
                m[(i, i + 1)] = -self.b[i];
                m[(i + 1, i)] = -self.b[i];
            }
        }
        m
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.b[i - 1] } else { 0.0 } + if i + 1 < n { self.b[i] } else { 0.0 };
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    /// Sites n (1-based) where d(n) = b(n)² + 1 − δ₁(k)δ₁(n) fails in integers.
    /// `None` when the block carries no integer data.
    pub fn eq41_failures(&self) -> Option<Vec<usize>> {
        let e = self.exact.as_ref()?;
        let mut bad = Vec::new();
        for (i, &bsq) in e.b_sq.iter().enumerate() {
            let delta = i64::from(self.k == 1 && i == 0);
            if e.d[i] != bsq as i64 + 1 - delta {
                bad.push(i + 1);
            }
        }
        Some(bad)
    }
}

/// N(k): the shell where block k starts.
pub fn level_index(tree: &ShTree, k: u64) -> Result<usize> {
    let top = *tree.alpha.last().unwrap();
    if k < 1 || k > top {
        return Err(Error::Range(format!("block index {k} outside 1..={top}")));
    }
    Ok(tree.alpha.partition_point(|&a| a < k))
}

/// Number of sites of block k inside the truncation.
pub fn block_length(tree: &ShTree, k: u64) -> Result<usize> {
    Ok(tree.depth() - level_index(tree, k)? + 1)
}

/// The first `len` sites of block k.
pub fn jacobi_coeffs(tree: &ShTree, k: u64, len: usize) -> Result<JacobiCoeffs> {
    let offset = level_index(tree, k)?;
    let full = tree.depth() - offset + 1;
    if len < 1 || len > full {
        return Err(Error::Range(format!(
            "block {k} has {full} sites in the truncation, {len} requested"
        )));
    }
    let d_int: Vec<i64> = (0..len).map(|i| tree.degree(offset + i) as i64).collect();
    let b_sq: Vec<u64> = (0..len - 1).map(|i| tree.g[offset + i]).collect();
    Ok(JacobiCoeffs {
        k,
        offset,
        d: d_int.iter().map(|&x| x as f64).collect(),
        b: b_sq.iter().map(|&g| (g as f64).sqrt()).collect(),
        exact: Some(ExactCoeffs { d: d_int, b_sq }),
    })
}

/// Every block k = 1..α_D at full truncation length.
pub fn all_blocks(tree: &ShTree) -> Result<Vec<JacobiCoeffs>> {
    let top = *tree.alpha.last().unwrap();
    (1..=top).map(|k| jacobi_coeffs(tree, k, block_length(tree, k)?)).collect()
}

/// Block k's full-length coefficients, one representative per starting shell,
/// with the number of blocks sharing it. Blocks with equal N(k) ≥ 1 coincide.
pub fn distinct_blocks(tree: &ShTree) -> Result<Vec<(JacobiCoeffs, u64)>> {
    let depth = tree.depth();
    let mut out = vec![(jacobi_coeffs(tree, 1, depth + 1)?, 1)];
    for n in 1..=depth {
        let count = tree.alpha[n] - tree.alpha[n - 1];
        if count > 0 {
            out.push((jacobi_coeffs(tree, tree.alpha[n], depth - n + 1)?, count));
        }
    }
    Ok(out)
}

/// Orthonormal basis adapted to the decomposition: column (k, n) is e_k^{(n)}.
#[derive(Debug, Clone)]
pub struct UnitaryBasis {
    pub u: DMatrix<f64>,
    /// (k, shell n) of each column.
    pub block_index: Vec<(u64, usize)>,
}

pub fn build_cons_unitary(tree: &ShTree) -> Result<UnitaryBasis> {
    build_cons_unitary_with_limit(tree, DEFAULT_DENSE_LIMIT)
}

pub fn build_cons_unitary_with_limit(tree: &ShTree, limit: usize) -> Result<UnitaryBasis> {
    let dim = tree.vertex_count as usize;
    if tree.vertex_count > limit as u64 {
        return Err(Error::DenseLimit { size: tree.vertex_count as usize, limit });
    }
    let depth = tree.depth();
    // shells[n]: the vectors e_k^{(n)} restricted to S_n, ordered by k.
    let mut shells: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.0]]];
    let mut column = 0usize;
    for n in 0..depth {
        let g = tree.g[n];
        let size = tree.alpha[n + 1] as usize;
        let scale = 1.0 / (g as f64).sqrt();
        let mut next: Vec<Vec<f64>> = shells[n]
            .iter()
            .map(|e| (0..size).map(|u| e[u / g as usize] * scale).collect())
            .collect();
        // Complement of the lifted vectors: seed with all children but the last of each parent.
        for parent in 0..tree.alpha[n] as usize {
            for c in 0..(g as usize).saturating_sub(1) {
                let mut v = vec![0.0; size];
                v[parent * g as usize + c] = 1.0;
                for _ in 0..2 {
                    for q in &next {
                        let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                        for (vi, qi) in v.iter_mut().zip(q) {
                            *vi -= dot * qi;
                        }
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-10 {
                    return Err(Error::NumericalRank { column: column + next.len(), norm });
                }
                v.iter_mut().for_each(|x| *x /= norm);
                next.push(v);
            }
        }
        column += next.len();
        shells.push(next);
    }

    let top = *tree.alpha.last().unwrap();
    let mut u = DMatrix::zeros(dim, dim);
    let mut block_index = Vec::with_capacity(dim);
    for k in 1..=top {
        let start = level_index(tree, k)?;
        for n in start..=depth {
            let c = block_index.len();
            let off = tree.shell_offset(n) as usize;
            for (i, &x) in shells[n][(k - 1) as usize].iter().enumerate() {
                u[(off + i, c)] = x;
            }
            block_index.push((k, n));
        }
    }
    Ok(UnitaryBasis { u, block_index })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub vertex_count: usize,
    pub blocks: usize,
    /// max |U*U − I|.
    pub orthogonality: f64,
    /// Largest entry of U*HU outside the pattern of ⊕H^{(k)}.
    pub off_block: f64,
    /// Largest deviation of U*HU from the Jacobi coefficients inside the pattern.
    pub in_block: f64,
    /// Sorted ℓ∞ distance between the spectra of H and ⊕H^{(k)}.
    pub eigen_distance: f64,
}

impl EquivalenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.orthogonality.max(self.off_block).max(self.in_block).max(self.eigen_distance)
    }
}

pub fn verify_equivalence(tree: &ShTree) -> Result<EquivalenceReport> {
    verify_equivalence_with_limit(tree, DEFAULT_DENSE_LIMIT)
}

pub fn verify_equivalence_with_limit(tree: &ShTree, limit: usize) -> Result<EquivalenceReport> {
    let basis = build_cons_unitary_with_limit(tree, limit)?;
    let lap = assemble_laplacian(tree)?;
    let dim = lap.dimension;
    let u = &basis.u;

    let mut hu = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let col = u.column(c);
        for i in 0..dim {
            hu[(i, c)] = lap.row(i).map(|(j, v)| v * col[j]).sum();
        }
    }
    let conj = u.transpose() * &hu;
    let gram = u.transpose() * u;
    let orthogonality = (&gram - DMatrix::<f64>::identity(dim, dim)).amax();

    let blocks = all_blocks(tree)?;
    let mut off_block = 0.0f64;
    let mut in_block = 0.0f64;
    for a in 0..dim {
        let (ka, na) = basis.block_index[a];
        for b in 0..dim {
            let (kb, nb) = basis.block_index[b];
            let x = conj[(a, b)];
            if ka != kb || na.abs_diff(nb) > 1 {
                off_block = off_block.max(x.abs());
                continue;
            }
            let blk = &blocks[(ka - 1) as usize];
            let i = na.min(nb) - blk.offset;
            let expect = if na == nb { blk.d[i] } else { -blk.b[i] };
            in_block = in_block.max((x - expect).abs());
        }
    }

    let mut tree_eigs: Vec<f64> = SymmetricEigen::new(lap.to_dense()).eigenvalues.iter().copied().collect();
    tree_eigs.sort_by(f64::total_cmp);
    let mut block_eigs = Vec::with_capacity(dim);
    for blk in &blocks {
        block_eigs.extend(jacobi::eigenvalues(blk)?);
    }
    block_eigs.sort_by(f64::total_cmp);
    let eigen_distance = tree_eigs
        .iter()
        .zip(&block_eigs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(EquivalenceReport {
        vertex_count: dim,
        blocks: blocks.len(),
        orthogonality,
        off_block,
        in_block,
        eigen_distance,
    })
}
