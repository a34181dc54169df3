//! Transfer matrices of the three-term recursion and their products.
//!
//! For H = tridiag(−b; d; −b) a solution of (H − z)f = 0 obeys
//! (f(n), f(n+1)) = T(n) (f(n−1), f(n)) with
//! T(n) = ((0, 1), (−b(n−1)/b(n), (d(n) − z)/b(n))). On the root block of a tree
//! this is the g-form T_z(n) = ((0,1), (−√(g_{n−1}/g_n), (g_n + 1 − z)/√g_n)).

use crate::decompose::JacobiCoeffs;
use crate::error::{Error, Result};
use crate::jacobi::{free_roots, m_function, resolvent_apply, spectral_measure};
use crate::tree::{sparse_branching, TreeParams};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix(pub [[C64; 2]; 2]);

impl TransferMatrix {
    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        TransferMatrix([[o, z], [z, o]])
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        TransferMatrix(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() == 0.0 {
            return Err(Error::SingularSolve { row: 0, pivot: 0.0 });
        }
        let m = &self.0;
        Ok(TransferMatrix([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]))
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value, from the closed form for 2×2 matrices.
    pub fn spectral_norm(&self) -> f64 {
        let fro2: f64 = self.0.iter().flatten().map(|x| x.norm_sqr()).sum();
        let det2 = self.det().norm_sqr();
        let disc = (fro2 * fro2 - 4.0 * det2).max(0.0).sqrt();
        ((fro2 + disc) / 2.0).sqrt()
    }

    fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= s);
    }
}

/// T_z(n) in the g-form; n = 0 uses the boundary coupling 1.
pub fn transfer_matrix(g: &[u64], z: C64, n: usize) -> Result<TransferMatrix> {
    if n >= g.len() {
        return Err(Error::Range(format!("transfer matrix at n = {n} needs g_{n}, have {} entries", g.len())));
    }
    let gn = g[n] as f64;
    let prev = if n == 0 { 1.0 } else { g[n - 1] as f64 };
    let (zero, one) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    // The root has degree g_0, every other shell g_n + 1.
    let d = if n == 0 { gn } else { gn + 1.0 };
    let lower = -(prev / gn).sqrt();
    Ok(TransferMatrix([[zero, one], [C64::new(lower, 0.0), (d - z) / gn.sqrt()]]))
}

/// Transfer matrix at site n (1-based) of a block, with b(0) = 1.
pub fn coeff_transfer(coeffs: &JacobiCoeffs, z: C64, n: usize) -> Result<TransferMatrix> {
    if n < 1 || n > coeffs.b.len() {
        return Err(Error::Range(format!("site {n} has no forward coupling")));
    }
    let bn = coeffs.b[n - 1];
    let prev = if n == 1 { 1.0 } else { coeffs.b[n - 2] };
    let (zero, one) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    Ok(TransferMatrix([[zero, one], [C64::new(-prev / bn, 0.0), (coeffs.d[n - 1] - z) / bn]]))
}

/// A matrix times 2^{exp2}, so long products never overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMatrix {
    pub mantissa: TransferMatrix,
    pub exp2: i64,
}

impl ScaledMatrix {
    pub fn identity() -> Self {
        ScaledMatrix { mantissa: TransferMatrix::identity(), exp2: 0 }
    }

    /// this ← t · this, renormalising the mantissa to max entry in [1, 2).
    pub fn left_mul(&mut self, t: &TransferMatrix) {
        self.mantissa = t.mul(&self.mantissa);
        self.renormalize();
    }

    /// this ← this · t.
    pub fn right_mul(&mut self, t: &TransferMatrix) {
        self.mantissa = self.mantissa.mul(t);
        self.renormalize();
    }

    fn renormalize(&mut self) {
        let m = self.mantissa.max_abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let e = m.log2().floor() as i64;
        if e != 0 {
            self.mantissa.scale((-e as f64).exp2());
            self.exp2 += e;
        }
    }

    pub fn log_norm(&self) -> f64 {
        self.mantissa.spectral_norm().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    pub fn log_max_abs(&self) -> f64 {
        self.mantissa.max_abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    /// Plain matrix, or an overflow error once entries pass 1e300.
    pub fn to_matrix(&self) -> Result<TransferMatrix> {
        if self.log_max_abs() > 300.0 * std::f64::consts::LN_10 {
            return Err(Error::Overflow(format!("transfer product entries exceed 1e300 (log = {:.1})", self.log_max_abs())));
        }
        let mut m = self.mantissa;
        m.scale((self.exp2 as f64).exp2());
        Ok(m)
    }
}

/// S_z(n, m) = T_z(n) ⋯ T_z(m) in scaled form, with the log-determinant and the
/// first index at which the running product passed 1e300 (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct TransferProduct {
    pub product: ScaledMatrix,
    pub log_abs_det: f64,
    pub overflow_at: Option<usize>,
}

impl TransferProduct {
    pub fn matrix(&self) -> Result<TransferMatrix> {
        self.product.to_matrix().map_err(|_| {
            Error::Overflow(format!(
                "transfer product overflows 1e300 at index {}",
                self.overflow_at.map_or("?".into(), |i| i.to_string())
            ))
        })
    }
}

pub fn transfer_product(g: &[u64], z: C64, n: usize, m: usize) -> Result<TransferProduct> {
    if n < m {
        return Err(Error::Range(format!("product S({n}, {m}) needs n ≥ m")));
    }
    let limit = 300.0 * std::f64::consts::LN_10;
    let mut product = ScaledMatrix::identity();
    let mut log_abs_det = 0.0;
    let mut overflow_at = None;
    for j in m..=n {
        let t = transfer_matrix(g, z, j)?;
        log_abs_det += t.det().norm().ln();
        product.left_mul(&t);
        if overflow_at.is_none() && product.log_max_abs() > limit {
            overflow_at = Some(j);
        }
    }
    Ok(TransferProduct { product, log_abs_det, overflow_at })
}

/// ‖S_z(n, m)^{−1}‖ in log form, multiplying inverse factors in reverse order.
pub fn log_inverse_norm(g: &[u64], z: C64, n: usize, m: usize) -> Result<f64> {
    let mut inv = ScaledMatrix::identity();
    for j in m..=n {
        inv.right_mul(&transfer_matrix(g, z, j)?.inverse()?);
    }
    Ok(inv.log_norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionReport {
    pub m: C64,
    /// max over n ≤ n_max of |f(n) − g(n)|/|g(n)|.
    pub max_rel_deviation: f64,
    pub deviations: Vec<f64>,
}

/// Propagate (f(0), f(1)) = (1, m(z)) with the block's transfer matrices and
/// compare with the resolvent column g = (H − z)^{−1}δ₁.
pub fn recursion_consistency(coeffs: &JacobiCoeffs, z: C64, n_max: usize) -> Result<RecursionReport> {
    if !(z.im > 0.0) {
        return Err(Error::Param("recursion check needs Im z > 0".into()));
    }
    let len = coeffs.len();
    if n_max < 1 || n_max > len {
        return Err(Error::Range(format!("n_max = {n_max} outside 1..={len}")));
    }
    let mut psi = vec![0.0; len];
    psi[0] = 1.0;
    let m = m_function(&spectral_measure(coeffs, &psi)?, z);
    let mut e1 = vec![C64::new(0.0, 0.0); len];
    e1[0] = C64::new(1.0, 0.0);
    let g = resolvent_apply(coeffs, z, &e1)?;

    let mut state = [C64::new(1.0, 0.0), m];
    let mut deviations = Vec::with_capacity(n_max);
    deviations.push((m - g[0]).norm() / g[0].norm());
    for n in 1..n_max {
        state = coeff_transfer(coeffs, z, n)?.apply(state);
        let f = state[1];
        if !f.is_finite() || f.norm() > 1e300 {
            return Err(Error::Overflow(format!("propagated solution overflows at n = {}", n + 1)));
        }
        deviations.push((f - g[n]).norm() / g[n].norm());
    }
    let max_rel_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(RecursionReport { m, max_rel_deviation, deviations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseNormReport {
    pub n: usize,
    /// Number of sparse positions L_j ≤ n.
    pub barriers: usize,
    pub log_inverse_norm: f64,
    /// log ∏_{j ≤ m} L_j^{(1−Γ)/(2Γ)}.
    pub log_structural: f64,
    /// (‖S^{−1}‖/∏)^{1/(m+1)}.
    pub c4_fit: f64,
}

pub fn inverse_norm_bound_check(params: &TreeParams, z: C64, k: f64, n: usize) -> Result<InverseNormReport> {
    if !(z.re > 0.0 && z.re < 4.0) {
        return Err(Error::Param(format!("E = {} must lie in (0,4)", z.re)));
    }
    if !(z.im > 0.0) || n as f64 * z.im >= k {
        return Err(Error::Param(format!("need 0 < nε < K, got n = {n}, ε = {}, K = {k}", z.im)));
    }
    let g: Vec<u64> = (0..=n as u64 + 1).map(|j| sparse_branching(params, j)).collect();
    let log_inverse_norm = log_inverse_norm(&g, z, n, 0)?;
    let positions: Vec<u64> = params.sparse_positions.iter().copied().filter(|&l| l as usize <= n).collect();
    let e = (1.0 - params.gamma) / (2.0 * params.gamma);
    let log_structural: f64 = positions.iter().map(|&l| e * (l as f64).ln()).sum();
    let barriers = positions.len();
    let c4_fit = ((log_inverse_norm - log_structural) / (barriers as f64 + 1.0)).exp();
    Ok(InverseNormReport { n, barriers, log_inverse_norm, log_structural, c4_fit })
}

/// sup_{1 ≤ n ≤ n_max} ‖Rⁿ‖ for the free matrix R = ((0,1),(−1, 2−z)).
pub fn free_power_sup(z: C64, n_max: usize) -> f64 {
    let (zero, one) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let r = TransferMatrix([[zero, one], [-one, 2.0 - z]]);
    let mut p = ScaledMatrix::identity();
    let mut sup = f64::NEG_INFINITY;
    for _ in 0..n_max {
        p.left_mul(&r);
        sup = sup.max(p.log_norm());
    }
    sup.exp()
}

/// Eigenvalues λ± of the free transfer matrix.
pub fn free_multipliers(z: C64) -> (C64, C64) {
    free_roots(z)
}
