//! Half-line Jacobi operators: shifted tridiagonal solves, the implicit QL
//! eigensolver, spectral measures and m-functions, the Δ/P/M_β algebra, the
//! resolvent kernel bound, and the free extension beyond a cut L_N.

use crate::decompose::JacobiCoeffs;
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

pub const DEFAULT_EIGEN_LIMIT: usize = 4000;

/// Pivot threshold (relative to the row norm) below which the pivoting solver takes over.
const PIVOT_FALLBACK: f64 = 1e-8;

/// Solve (H − z)u = v.
pub fn resolvent_apply(coeffs: &JacobiCoeffs, z: C64, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != coeffs.len() {
        return Err(Error::Param(format!(
            "vector length {} does not match block length {}",
            v.len(),
            coeffs.len()
        )));
    }
    let mut ws = Workspace::new(coeffs.len());
    let mut out = vec![C64::new(0.0, 0.0); coeffs.len()];
    ws.solve(&coeffs.d, &coeffs.b, None, z, v, &mut out)?;
    Ok(out)
}

/// Reusable buffers for repeated solves of the same size.
#[derive(Debug, Clone)]
pub struct Workspace {
    c: Vec<C64>,
    y: Vec<C64>,
    diag: Vec<C64>,
    sup: Vec<C64>,
    sup2: Vec<C64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        let zero = C64::new(0.0, 0.0);
        Workspace { c: vec![zero; n], y: vec![zero; n], diag: vec![zero; n], sup: vec![zero; n], sup2: vec![zero; n] }
    }

    fn ensure(&mut self, n: usize) {
        if self.c.len() < n {
            *self = Workspace::new(n);
        }
    }

    /// Solve (tridiag(−b; d; −b) − z)u = v, optionally replacing the last diagonal
    /// entry of H − z by `last`.
    pub fn solve(
        &mut self,
        d: &[f64],
        b: &[f64],
        last: Option<C64>,
        z: C64,
        v: &[C64],
        out: &mut [C64],
    ) -> Result<()> {
        let n = d.len();
        self.ensure(n);
        let diag_at = |i: usize| -> C64 {
            match last {
                Some(l) if i + 1 == n => l,
                _ => C64::new(d[i] - z.re, -z.im),
            }
        };
        // Thomas sweep without pivoting.
        let mut ok = true;
        let mut prev_c = C64::new(0.0, 0.0);
        let mut prev_y = C64::new(0.0, 0.0);
        for i in 0..n {
            let di = diag_at(i);
            let lo = if i > 0 { b[i - 1] } else { 0.0 };
            let hi = if i + 1 < n { b[i] } else { 0.0 };
            let m = di + lo * prev_c;
            if m.norm() < PIVOT_FALLBACK * (di.norm() + lo + hi) {
                ok = false;
                break;
            }
            let inv = m.inv();
            prev_c = -hi * inv;
            prev_y = (v[i] + lo * prev_y) * inv;
            self.c[i] = prev_c;
            self.y[i] = prev_y;
        }
        if ok {
            out[n - 1] = self.y[n - 1];
            for i in (0..n - 1).rev() {
                out[i] = self.y[i] - self.c[i] * out[i + 1];
            }
            return Ok(());
        }
        self.solve_pivoting(n, b, &diag_at, v, out)
    }

    /// Gaussian elimination with partial pivoting on the tridiagonal system.
    fn solve_pivoting(
        &mut self,
        n: usize,
        b: &[f64],
        diag_at: &dyn Fn(usize) -> C64,
        v: &[C64],
        out: &mut [C64],
    ) -> Result<()> {
        let zero = C64::new(0.0, 0.0);
        for i in 0..n {
            self.diag[i] = diag_at(i);
            self.sup[i] = if i + 1 < n { C64::new(-b[i], 0.0) } else { zero };
            self.sup2[i] = zero;
            self.y[i] = v[i];
        }
        for i in 0..n.saturating_sub(1) {
            let sub = C64::new(-b[i], 0.0);
            if self.diag[i].norm() >= sub.norm() {
                if self.diag[i].norm() < 1e-300 {
                    return Err(Error::SingularSolve { row: i, pivot: self.diag[i].norm() });
                }
                let fact = sub / self.diag[i];
                self.diag[i + 1] -= fact * self.sup[i];
                let yi = self.y[i];
                self.y[i + 1] -= fact * yi;
            } else {
                let fact = self.diag[i] / sub;
                self.diag[i] = sub;
                let temp = self.diag[i + 1];
                self.diag[i + 1] = self.sup[i] - fact * temp;
                if i + 2 < n {
                    self.sup2[i] = self.sup[i + 1];
                    self.sup[i + 1] = -fact * self.sup2[i];
                }
                self.sup[i] = temp;
                let yi = self.y[i];
                self.y[i] = self.y[i + 1];
                self.y[i + 1] = yi - fact * self.y[i + 1];
            }
        }
        if self.diag[n - 1].norm() < 1e-300 {
            return Err(Error::SingularSolve { row: n - 1, pivot: self.diag[n - 1].norm() });
        }
        out[n - 1] = self.y[n - 1] / self.diag[n - 1];
        if n > 1 {
            out[n - 2] = (self.y[n - 2] - self.sup[n - 2] * out[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            out[i] = (self.y[i] - self.sup[i] * out[i + 1] - self.sup2[i] * out[i + 2]) / self.diag[i];
        }
        Ok(())
    }
}

/// ‖(H − z)u − v‖ for a candidate solution.
pub fn residual(coeffs: &JacobiCoeffs, z: C64, u: &[C64], v: &[C64]) -> f64 {
    let n = coeffs.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = (coeffs.d[i] - z) * u[i] - v[i];
        if i > 0 {
            r -= coeffs.b[i - 1] * u[i - 1];
        }
        if i + 1 < n {
            r -= coeffs.b[i] * u[i + 1];
        }
        s += r.norm_sqr();
    }
    s.sqrt()
}

/// What the QL iteration accumulates alongside the eigenvalues.
enum Track<'a> {
    Nothing,
    /// The row vector ψᵀV.
    Projection(&'a mut [f64]),
    /// All eigenvectors, stored as rows.
    Vectors(&'a mut [Vec<f64>]),
}

/// Implicit QL on the symmetric tridiagonal (diag, off). `off[i]` couples i and i+1.
/// Eigenvalues are returned unsorted in `diag`.
fn tql(diag: &mut [f64], off: &[f64], mut track: Track) -> Result<()> {
    let n = diag.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(diag[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Range(format!("QL iteration did not converge at index {l}")));
                }
                let g = diag[l];
                let mut p = (diag[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                diag[l] = e[l] / (p + r);
                diag[l + 1] = e[l] * (p + r);
                let dl1 = diag[l + 1];
                let h = g - diag[l];
                for d in diag.iter_mut().skip(l + 2) {
                    *d -= h;
                }
                f += h;
                p = diag[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * diag[i] - s * g;
                    diag[i + 1] = h + s * (c * g + s * diag[i]);
                    match &mut track {
                        Track::Nothing => {}
                        Track::Projection(w) => {
                            let h = w[i + 1];
                            w[i + 1] = s * w[i] + c * h;
                            w[i] = c * w[i] - s * h;
                        }
                        Track::Vectors(z) => {
                            let (lo, hi) = z.split_at_mut(i + 1);
                            let (zi, zi1) = (&mut lo[i], &mut hi[0]);
                            for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                                let h = *b;
                                *b = s * *a + c * h;
                                *a = c * *a - s * h;
                            }
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                diag[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        diag[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::DenseLimit { size: n, limit })
    } else {
        Ok(())
    }
}

fn signed_off(coeffs: &JacobiCoeffs) -> Vec<f64> {
    let mut off: Vec<f64> = coeffs.b.iter().map(|&x| -x).collect();
    off.push(0.0);
    off
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(coeffs: &JacobiCoeffs) -> Result<Vec<f64>> {
    let mut d = coeffs.d.clone();
    tql(&mut d, &signed_off(coeffs), Track::Nothing)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues and orthonormal eigenvectors (`vectors[i]` belongs to `values[i]`).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn eigendecompose(coeffs: &JacobiCoeffs) -> Result<Eigen> {
    eigendecompose_with_limit(coeffs, DEFAULT_EIGEN_LIMIT)
}

pub fn eigendecompose_with_limit(coeffs: &JacobiCoeffs, limit: usize) -> Result<Eigen> {
    let n = coeffs.len();
    check_limit(n, limit)?;
    let mut d = coeffs.d.clone();
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            r
        })
        .collect();
    tql(&mut d, &signed_off(coeffs), Track::Vectors(&mut z))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = order.iter().map(|&i| std::mem::take(&mut z[i])).collect();
    Ok(Eigen { values, vectors })
}

/// Eigenvalues with the overlaps ⟨v_i, ψ⟩, in ascending order, without forming eigenvectors.
pub fn eigen_projection(coeffs: &JacobiCoeffs, psi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = coeffs.len();
    if psi.len() != n {
        return Err(Error::Param("state length does not match block length".into()));
    }
    let mut d = coeffs.d.clone();
    let mut w = psi.to_vec();
    tql(&mut d, &signed_off(coeffs), Track::Projection(&mut w))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok((order.iter().map(|&i| d[i]).collect(), order.iter().map(|&i| w[i]).collect()))
}

/// Atomic measure Σ w_i δ_{λ_i}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub total: f64,
}

impl SpectralMeasure {
    /// Sort atoms and merge those closer than 1e−12 times the spectral radius.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !(w >= 0.0)) {
            return Err(Error::Param("atoms need finite positions and nonnegative weights".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let radius = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let tol = 1e-12 * radius;
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if x - last.0 <= tol => {
                    let tw = last.1 + w;
                    if tw > 0.0 {
                        last.0 = (last.0 * last.1 + x * w) / tw;
                    }
                    last.1 = tw;
                }
                _ => merged.push((x, w)),
            }
        }
        let total = merged.iter().map(|a| a.1).sum();
        Ok(SpectralMeasure { atoms: merged, total })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// μ([lo, hi]).
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let a = self.atoms.partition_point(|x| x.0 < lo);
        let b = self.atoms.partition_point(|x| x.0 <= hi);
        self.atoms[a..b].iter().map(|x| x.1).sum()
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.atoms.iter().find(|a| a.1 > 0.0)?;
        let last = self.atoms.iter().rev().find(|a| a.1 > 0.0)?;
        Some((first.0, last.0))
    }
}

pub fn spectral_measure(coeffs: &JacobiCoeffs, psi: &[f64]) -> Result<SpectralMeasure> {
    spectral_measure_with_limit(coeffs, psi, DEFAULT_EIGEN_LIMIT)
}

pub fn spectral_measure_with_limit(coeffs: &JacobiCoeffs, psi: &[f64], limit: usize) -> Result<SpectralMeasure> {
    check_limit(coeffs.len(), limit)?;
    if psi.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroState);
    }
    let (values, overlaps) = eigen_projection(coeffs, psi)?;
    SpectralMeasure::from_atoms(values.into_iter().zip(overlaps.into_iter().map(|c| c * c)).collect())
}

/// m(z) = Σ w_i/(λ_i − z).
pub fn m_function(measure: &SpectralMeasure, z: C64) -> C64 {
    measure.atoms.iter().map(|&(x, w)| w / (x - z)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOpsReport {
    /// max |Hf − (ΔΔ* − δ₁·1_{k=1})f|.
    pub laplacian_identity: f64,
    /// |⟨Pg, f⟩ − ⟨g, P*f⟩|.
    pub adjoint: f64,
    /// max |M_β^{−1}ΔM_β f − (βP − I)f|.
    pub delta_beta: f64,
    /// max |M_β^{−1}Δ*M_β f − (β^{−1}P* − I)f|.
    pub delta_star_beta: f64,
}

impl ShiftOpsReport {
    pub fn max_deviation(&self) -> f64 {
        self.laplacian_identity.max(self.adjoint).max(self.delta_beta).max(self.delta_star_beta)
    }
}

/// Whether the block carries the root correction d(1) = b(1)².
fn is_root_block(coeffs: &JacobiCoeffs) -> bool {
    match coeffs.k {
        0 => coeffs.b.first().is_some_and(|&b0| (coeffs.d[0] - b0 * b0).abs() < 0.5),
        k => k == 1,
    }
}

/// Shift-operator identities on a vector supported in the first N − 1 sites.
///
/// In the tridiag(−b; d; −b) gauge the forward shift carries the positive
/// couplings, Pf(n) = b(n)f(n+1), so that ΔΔ* reproduces H.
pub fn shift_ops_check(coeffs: &JacobiCoeffs, beta: f64, f: &[f64]) -> Result<ShiftOpsReport> {
    let n = coeffs.len();
    if f.len() != n {
        return Err(Error::Param("vector length does not match block length".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Param("beta must be positive".into()));
    }
    if n < 2 || f[n - 1] != 0.0 {
        return Err(Error::Param("f must vanish at the last site of the truncation".into()));
    }
    let top = f.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
    let log_max = (top as f64 + 1.0) * beta.ln().abs();
    if log_max > 690.0 {
        return Err(Error::Overflow(format!("beta^n exceeds float range on the support (n up to {})", top + 1)));
    }

    // Index 0 is site 1; site n+1 (beyond the truncation) stays zero.
    let b_at = |i: usize| if i < n - 1 { coeffs.b[i] } else { 0.0 };
    let p = |g: &[f64]| -> Vec<f64> { (0..n).map(|i| b_at(i) * if i + 1 < n { g[i + 1] } else { 0.0 }).collect() };
    let p_star = |g: &[f64]| -> Vec<f64> { (0..n).map(|i| if i == 0 { 0.0 } else { b_at(i - 1) * g[i - 1] }).collect() };
    let minus = |a: Vec<f64>, b: &[f64]| -> Vec<f64> { a.into_iter().zip(b).map(|(x, y)| x - y).collect() };
    let maxdiff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let delta_star_f = minus(p_star(f), f);
    let mut ddf = minus(p(&delta_star_f), &delta_star_f);
    if is_root_block(coeffs) {
        ddf[0] -= f[0];
    }
    let laplacian_identity = maxdiff(&coeffs.apply(f), &ddf);

    let g: Vec<f64> = (0..n).map(|i| if i + 1 < n { ((i as f64) * 0.7).sin() + 0.5 } else { 0.0 }).collect();
    let lhs: f64 = p(&g).iter().zip(f).map(|(a, b)| a * b).sum();
    let rhs: f64 = g.iter().zip(p_star(f)).map(|(a, b)| a * b).sum();
    let adjoint = (lhs - rhs).abs();

    let pow: Vec<f64> = (0..n).map(|i| beta.powi(i as i32 + 1)).collect();
    let mf: Vec<f64> = f.iter().zip(&pow).map(|(x, w)| x * w).collect();
    let unscale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().zip(&pow).map(|(x, w)| x / w).collect() };
    let conj_delta = unscale(minus(p(&mf), &mf));
    let direct: Vec<f64> = minus(p(f).into_iter().map(|x| beta * x).collect(), f);
    let delta_beta = maxdiff(&conj_delta, &direct);
    let conj_star = unscale(minus(p_star(&mf), &mf));
    let direct_star: Vec<f64> = minus(p_star(f).into_iter().map(|x| x / beta).collect(), f);
    let delta_star_beta = maxdiff(&conj_star, &direct_star);

    Ok(ShiftOpsReport { laplacian_identity, adjoint, delta_beta, delta_star_beta })
}

/// η_z, m_z and α_z(γ) for the resolvent kernel bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBoundParams {
    pub eta: f64,
    pub m: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl KernelBoundParams {
    pub fn new(spectrum: &[f64], z: C64, gamma: f64) -> Self {
        let eta = spectrum.iter().map(|&x| (z - x).norm()).fold(f64::INFINITY, f64::min);
        let m = eta / ((eta + z.norm()).sqrt() + 1.0);
        let gm = gamma * m;
        let alpha = (gm + (gm * gm + 16.0).sqrt()) / 4.0;
        KernelBoundParams { eta, m, gamma, alpha }
    }

    /// α^{−|i−j|} η^{−1} ((1+γ)/(1−γ))².
    pub fn bound(&self, distance: usize) -> f64 {
        let q = (1.0 + self.gamma) / (1.0 - self.gamma);
        (-(distance as f64) * self.alpha.ln()).exp() / self.eta * q * q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBoundEntry {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBoundReport {
    pub params: KernelBoundParams,
    pub entries: Vec<KernelBoundEntry>,
    pub violations: usize,
    /// max lhs/rhs over the pairs.
    pub worst_ratio: f64,
}

/// Compare |⟨δ_i, (H−z)^{−1}δ_j⟩| with the explicit kernel bound. Pairs are 1-based.
pub fn kernel_bound_check(
    coeffs: &JacobiCoeffs,
    z: C64,
    gamma: f64,
    pairs: &[(usize, usize)],
) -> Result<KernelBoundReport> {
    check_limit(coeffs.len(), DEFAULT_EIGEN_LIMIT)?;
    let spectrum = eigenvalues(coeffs)?;
    kernel_bound_check_with_spectrum(coeffs, &spectrum, z, gamma, pairs)
}

pub fn kernel_bound_check_with_spectrum(
    coeffs: &JacobiCoeffs,
    spectrum: &[f64],
    z: C64,
    gamma: f64,
    pairs: &[(usize, usize)],
) -> Result<KernelBoundReport> {
    if !(z.im > 0.0) {
        return Err(Error::Param("kernel bound needs Im z > 0".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Param("gamma must lie in (0,1)".into()));
    }
    let n = coeffs.len();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i < 1 || j < 1 || i > n || j > n) {
        return Err(Error::Index { index: i.max(j), len: n });
    }
    let params = KernelBoundParams::new(spectrum, z, gamma);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&p| pairs[p].1);
    let mut entries = vec![None; pairs.len()];
    let mut ws = Workspace::new(n);
    let mut col = vec![C64::new(0.0, 0.0); n];
    let mut rhs_vec = vec![C64::new(0.0, 0.0); n];
    let mut current = usize::MAX;
    for p in order {
        let (i, j) = pairs[p];
        if j != current {
            rhs_vec.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            rhs_vec[j - 1] = C64::new(1.0, 0.0);
            ws.solve(&coeffs.d, &coeffs.b, None, z, &rhs_vec, &mut col)?;
            current = j;
        }
        let lhs = col[i - 1].norm();
        let rhs = params.bound(i.abs_diff(j));
        entries[p] = Some(KernelBoundEntry { i, j, lhs, rhs, violated: lhs > rhs * (1.0 + 1e-9) });
    }
    let entries: Vec<KernelBoundEntry> = entries.into_iter().map(|e| e.unwrap()).collect();
    let violations = entries.iter().filter(|e| e.violated).count();
    let worst_ratio = entries.iter().map(|e| e.lhs / e.rhs).fold(0.0, f64::max);
    Ok(KernelBoundReport { params, entries, violations, worst_ratio })
}

/// The block kept through site L_N, free (d = 2, b = 1) from there on.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFree {
    pub cut: usize,
    pub coeffs: JacobiCoeffs,
}

impl TruncatedFree {
    pub fn size(&self) -> usize {
        self.coeffs.len()
    }
}

/// Keep d(1..L_N) and b(1..L_N) of `coeffs`; beyond, d = 2 and b = 1, up to `size` sites.
pub fn truncated_free(coeffs: &JacobiCoeffs, cut: usize, size: usize) -> Result<TruncatedFree> {
    if cut < 1 || cut >= size {
        return Err(Error::Range(format!("cut {cut} must satisfy 1 ≤ L_N < size = {size}")));
    }
    let keep_d = cut.min(coeffs.len());
    let keep_b = cut.min(coeffs.b.len());
    let mut d = coeffs.d[..keep_d].to_vec();
    d.resize(size, 2.0);
    let mut b = coeffs.b[..keep_b].to_vec();
    b.resize(size - 1, 1.0);
    let out = JacobiCoeffs { k: coeffs.k, offset: coeffs.offset, d, b, exact: None };
    Ok(TruncatedFree { cut, coeffs: out })
}

/// Roots λ± of λ² − (2 − z)λ + 1 = 0, with |λ−| ≤ 1 ≤ |λ+|.
pub fn free_roots(z: C64) -> (C64, C64) {
    let s = 2.0 - z;
    let disc = (s * s - 4.0).sqrt();
    let (a, b) = ((s + disc) / 2.0, (s - disc) / 2.0);
    let big = if a.norm() >= b.norm() { a } else { b };
    (big.inv(), big)
}
