//! Abel-averaged transport: the profile a_ψ(n, T), its moments and escape
//! probabilities, the energy integrals I and J with the escape threshold M_T,
//! the intermittency estimator, and the moment envelopes across a barrier.

use crate::decompose::JacobiCoeffs;
use crate::error::{Error, Result};
use crate::hsfc::{self, SmoothTestFunction};
use crate::jacobi::{self, SpectralMeasure, TruncatedFree, Workspace};
use crate::quad::gauss_legendre;
use crate::tree::TreeParams;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;

pub const EIGENSUM_MASS_TOLERANCE: f64 = 1e-8;
pub const QUADRATURE_MASS_TOLERANCE: f64 = 1e-4;
/// a(N) above this fraction of max a flags the truncation.
pub const TAIL_FLAG: f64 = 1e-10;
/// Energy-grid nodes per Gauss–Legendre panel.
const PANEL_NODES: usize = 8;
/// Outer panels extend to this many ε beyond the core window.
const OUTER_REACH: f64 = 1e12;
const MAX_NODES: usize = 200_000_000;
/// Nodes per parallel work unit; fixed so sums do not depend on the thread count.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Eigensum,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeAverageProfile {
    pub t: f64,
    /// a(n, T) for n = 1..N.
    pub a: Vec<f64>,
    pub method: Method,
    pub norm_sq: f64,
    /// |Σ a − ‖ψ‖²| / ‖ψ‖².
    pub mass_error: f64,
}

/// Gauss–Legendre nodes resolving Poisson kernels of width ε on [lo, hi]: panels of
/// width ≤ ε over [lo − 10ε, hi + 10ε], then doubling panels out to 1e12 ε.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn energy_grid(lo: f64, hi: f64, eps: f64) -> Result<EnergyGrid> {
    if !(eps > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Param(format!("bad energy window [{lo}, {hi}] or ε = {eps}")));
    }
    let (a, b) = (lo - 10.0 * eps, hi + 10.0 * eps);
    let panels = ((b - a) / eps).ceil() as usize;
    if panels.saturating_mul(PANEL_NODES) > MAX_NODES {
        return Err(Error::Quadrature(format!("energy grid needs {panels} panels at ε = {eps:e}")));
    }
    let (x, w) = gauss_legendre(PANEL_NODES);
    let mut grid = EnergyGrid { nodes: Vec::new(), weights: Vec::new() };
    let mut push = |l: f64, r: f64| {
        let (c, h) = (0.5 * (l + r), 0.5 * (r - l));
        for (xi, wi) in x.iter().zip(&w) {
            grid.nodes.push(c + h * xi);
            grid.weights.push(h * wi);
        }
    };
    let width = (b - a) / panels as f64;
    for k in 0..panels {
        push(a + k as f64 * width, a + (k + 1) as f64 * width);
    }
    let (mut l, mut r, mut step) = (a, b, eps);
    while step < OUTER_REACH * eps {
        push(l - step, l);
        push(r, r + step);
        l -= step;
        r += step;
        step *= 2.0;
    }
    Ok(grid)
}

fn check_state(coeffs: &JacobiCoeffs, psi: &[f64]) -> Result<f64> {
    if psi.len() != coeffs.len() {
        return Err(Error::Param(format!("state length {} does not match block length {}", psi.len(), coeffs.len())));
    }
    let norm_sq: f64 = psi.iter().map(|x| x * x).sum();
    if norm_sq == 0.0 {
        return Err(Error::ZeroState);
    }
    Ok(norm_sq)
}

pub fn time_average_profile(coeffs: &JacobiCoeffs, psi: &[f64], t: f64, method: Method) -> Result<TimeAverageProfile> {
    time_average_profile_with(coeffs, psi, t, method, None, jacobi::DEFAULT_EIGEN_LIMIT)
}

/// `window` bounds the spectral support of ψ for the quadrature grid (default:
/// the Gershgorin interval); `limit` is the dense size limit of the eigensum.
pub fn time_average_profile_with(
    coeffs: &JacobiCoeffs,
    psi: &[f64],
    t: f64,
    method: Method,
    window: Option<(f64, f64)>,
    limit: usize,
) -> Result<TimeAverageProfile> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Param(format!("time scale {t} must be positive")));
    }
    let norm_sq = check_state(coeffs, psi)?;
    let a = match method {
        Method::Eigensum => eigensum_profile(coeffs, psi, t, limit)?,
        Method::Quadrature => quadrature_profile(coeffs, psi, t, window.unwrap_or_else(|| coeffs.gershgorin()))?,
    };
    let mass: f64 = a.iter().sum();
    let mass_error = (mass - norm_sq).abs() / norm_sq;
    let tol = match method {
        Method::Eigensum => EIGENSUM_MASS_TOLERANCE,
        Method::Quadrature => QUADRATURE_MASS_TOLERANCE,
    };
    if mass_error > tol {
        return Err(Error::Quadrature(format!("profile mass off by {mass_error:.3e} (tolerance {tol:e})")));
    }
    Ok(TimeAverageProfile { t, a, method, norm_sq, mass_error })
}

/// a(n) = Σ_{i,j} u_i(n) u_j(n) / (1 + T²(λ_i − λ_j)²) with u_i = ⟨v_i, ψ⟩ v_i;
/// the odd part of 1/(1 + iT(λ_i − λ_j)) cancels in the symmetric sum.
fn eigensum_profile(coeffs: &JacobiCoeffs, psi: &[f64], t: f64, limit: usize) -> Result<Vec<f64>> {
    let eig = jacobi::eigendecompose_with_limit(coeffs, limit)?;
    let n = psi.len();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for (i, v) in eig.vectors.iter().enumerate() {
        let c: f64 = v.iter().zip(psi).map(|(a, b)| a * b).sum();
        for (k, vk) in v.iter().enumerate() {
            u[(i, k)] = c * vk;
        }
    }
    let lam = &eig.values;
    let kernel = DMatrix::from_fn(n, n, |i, j| {
        let d = t * (lam[i] - lam[j]);
        1.0 / (1.0 + d * d)
    });
    let ku = &kernel * &u;
    Ok((0..n).map(|k| (0..n).map(|i| u[(i, k)] * ku[(i, k)]).sum::<f64>().max(0.0)).collect())
}

/// a(n) = (ε/π) ∫ |((H − E − iε)^{−1}ψ)(n)|² dE with ε = 1/(2T).
fn quadrature_profile(coeffs: &JacobiCoeffs, psi: &[f64], t: f64, window: (f64, f64)) -> Result<Vec<f64>> {
    let eps = 0.5 / t;
    let grid = energy_grid(window.0, window.1, eps)?;
    let n = psi.len();
    let rhs: Vec<C64> = psi.iter().map(|&x| C64::new(x, 0.0)).collect();
    let parts: Vec<Result<Vec<f64>>> = grid
        .nodes
        .par_chunks(CHUNK)
        .zip(grid.weights.par_chunks(CHUNK))
        .map(|(es, ws)| {
            let mut work = Workspace::new(n);
            let mut scratch = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); n];
            let mut u = vec![C64::new(0.0, 0.0); n];
            let mut acc = vec![0.0; n];
            for (&e, &w) in es.iter().zip(ws) {
                let z = C64::new(e, eps);
                if !sweep(&coeffs.d, &coeffs.b, None, z, &rhs, &mut scratch, &mut u) {
                    work.solve(&coeffs.d, &coeffs.b, None, z, &rhs, &mut u)?;
                }
                for (a, x) in acc.iter_mut().zip(&u) {
                    *a += w * x.norm_sqr();
                }
            }
            Ok(acc)
        })
        .collect();
    let mut a = vec![0.0; n];
    for part in parts {
        for (x, y) in a.iter_mut().zip(part?) {
            *x += y;
        }
    }
    for x in &mut a {
        *x *= eps / PI;
    }
    Ok(a)
}

/// Unpivoted elimination for (H − z)u = v with an optional last diagonal entry of
/// H − z; returns false on a small pivot so the caller can use the pivoting solver.
fn sweep(d: &[f64], b: &[f64], last: Option<C64>, z: C64, v: &[C64], cy: &mut [(C64, C64)], out: &mut [C64]) -> bool {
    let n = d.len();
    let (mut pc, mut py) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for i in 0..n {
        let di = match last {
            Some(l) if i + 1 == n => l,
            _ => C64::new(d[i] - z.re, -z.im),
        };
        let lo = if i > 0 { b[i - 1] } else { 0.0 };
        let hi = if i + 1 < n { b[i] } else { 0.0 };
        let m = di + lo * pc;
        let m2 = m.norm_sqr();
        if !(m2 > 1e-24 * (di.norm_sqr() + lo * lo + hi * hi)) {
            return false;
        }
        let inv = m.conj() / m2;
        pc = -hi * inv;
        py = (v[i] + lo * py) * inv;
        cy[i] = (pc, py);
    }
    out[n - 1] = cy[n - 1].1;
    for i in (0..n - 1).rev() {
        out[i] = cy[i].1 - cy[i].0 * out[i + 1];
    }
    true
}

const LANES: usize = 8;

/// `sweep` for several shifts at once; the independent recurrences overlap in the pipeline.
fn sweep_lanes(
    d: &[f64],
    b: &[f64],
    last: &[Option<C64>; LANES],
    z: &[C64; LANES],
    v: &[C64],
    cy: &mut [[(C64, C64); LANES]],
    out: &mut [[C64; LANES]],
) -> bool {
    let n = d.len();
    let zero = C64::new(0.0, 0.0);
    let (mut pc, mut py) = ([zero; LANES], [zero; LANES]);
    for i in 0..n {
        let lo = if i > 0 { b[i - 1] } else { 0.0 };
        let hi = if i + 1 < n { b[i] } else { 0.0 };
        for k in 0..LANES {
            let di = match last[k] {
                Some(l) if i + 1 == n => l,
                _ => C64::new(d[i] - z[k].re, -z[k].im),
            };
            let m = di + lo * pc[k];
            let m2 = m.norm_sqr();
            if !(m2 > 1e-24 * (di.norm_sqr() + lo * lo + hi * hi)) {
                return false;
            }
            let inv = m.conj() / m2;
            pc[k] = -hi * inv;
            py[k] = (v[i] + lo * py[k]) * inv;
            cy[i][k] = (pc[k], py[k]);
        }
    }
    for k in 0..LANES {
        out[n - 1][k] = cy[n - 1][k].1;
    }
    for i in (0..n - 1).rev() {
        for k in 0..LANES {
            out[i][k] = cy[i][k].1 - cy[i][k].0 * out[i + 1][k];
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub value: f64,
    /// a(N)/max a; the truncation is flagged when it exceeds TAIL_FLAG.
    pub edge_ratio: f64,
    pub tail_warning: bool,
}

/// Σ n^p a(n, T).
pub fn moment(profile: &TimeAverageProfile, p: f64) -> MomentReport {
    let value = profile.a.iter().enumerate().map(|(i, a)| ((i + 1) as f64).powf(p) * a).sum();
    let max = profile.a.iter().fold(0.0f64, |m, &x| m.max(x));
    let edge_ratio = if max > 0.0 { profile.a.last().copied().unwrap_or(0.0) / max } else { 0.0 };
    MomentReport { value, edge_ratio, tail_warning: edge_ratio > TAIL_FLAG }
}

/// P({lo ∼ hi}, T), with `hi = None` for {lo ∼ ∞}; indices are 1-based.
pub fn escape_mass(profile: &TimeAverageProfile, lo: usize, hi: Option<usize>) -> f64 {
    let n = profile.a.len();
    let lo = lo.max(1);
    let hi = hi.unwrap_or(n).min(n);
    if lo > hi {
        return 0.0;
    }
    profile.a[lo - 1..hi].iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyIntegrals {
    pub epsilon: f64,
    pub window: (f64, f64),
    pub i: f64,
    pub j: f64,
    /// A = μ(B).
    pub a: f64,
    /// A² / (16 J).
    pub m_t: f64,
}

/// I = ε∫_B |Im m(E + iε)|² dE and J = ∫_B μ(dx)∫ μ(dy) ε²/((x − y)² + ε²).
/// M_T of the escape lemma uses these at ε = 1/T.
pub fn energy_integrals(measure: &SpectralMeasure, eps: f64, window: (f64, f64)) -> Result<EnergyIntegrals> {
    let (lo, hi) = window;
    if !(eps > 0.0) || !(lo < hi) {
        return Err(Error::Param(format!("bad window [{lo}, {hi}] or ε = {eps}")));
    }
    let atoms = &measure.atoms;
    let e2 = eps * eps;
    let mut j = 0.0;
    for &(x, wx) in atoms.iter().filter(|(x, _)| *x >= lo && *x <= hi) {
        for &(y, wy) in atoms {
            let d = x - y;
            j += wx * wy * e2 / (d * d + e2);
        }
    }
    let a = measure.mass_in(lo, hi);
    let panels = (4.0 * (hi - lo) / eps).ceil().max(1.0) as usize;
    if panels.saturating_mul(PANEL_NODES) > MAX_NODES {
        return Err(Error::Quadrature(format!("I needs {panels} panels at ε = {eps:e}")));
    }
    let (gx, gw) = gauss_legendre(PANEL_NODES);
    let width = (hi - lo) / panels as f64;
    let i: f64 = (0..panels)
        .into_par_iter()
        .with_min_len(64)
        .map(|k| {
            let c = lo + (k as f64 + 0.5) * width;
            let mut s = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                let e = c + 0.5 * width * x;
                let im: f64 = atoms.iter().map(|&(l, wl)| wl * eps / ((l - e) * (l - e) + e2)).sum();
                s += 0.5 * width * w * im * im;
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * eps;
    let m_t = if j > 0.0 { a * a / (16.0 * j) } else { f64::INFINITY };
    Ok(EnergyIntegrals { epsilon: eps, window, i, j, a, m_t })
}

/// A block whose coefficients beyond `head` are free (d = 2, b = 1, including the
/// coupling out of the last head site), either on the half-line or truncated at `size`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineModel {
    pub head: JacobiCoeffs,
    pub size: Option<usize>,
}

impl HalfLineModel {
    pub fn new(head: JacobiCoeffs, size: Option<usize>) -> Result<Self> {
        if let Some(n) = size {
            if n < head.len() {
                return Err(Error::Param(format!("size {n} shorter than head {}", head.len())));
            }
        }
        Ok(HalfLineModel { head, size })
    }

    /// The free half-line block with d(1) = 1.
    pub fn free(size: Option<usize>) -> Self {
        HalfLineModel { head: JacobiCoeffs::free_root_block(2), size }
    }

    /// H_N-type operator: the kept part of a truncated block followed by the free tail.
    pub fn from_truncated(tf: &TruncatedFree, size: Option<usize>) -> Result<Self> {
        let h = (tf.cut + 1).min(tf.coeffs.len());
        Self::new(tf.coeffs.truncate(h), size)
    }

    /// Coefficients of the first n sites.
    pub fn leading_block(&self, n: usize) -> JacobiCoeffs {
        let h = self.head.len();
        let n = self.size.map_or(n, |s| n.min(s));
        let mut d = self.head.d[..h.min(n)].to_vec();
        d.resize(n, 2.0);
        let mut b = self.head.b[..(h.min(n)).saturating_sub(1)].to_vec();
        b.resize(n.saturating_sub(1), 1.0);
        JacobiCoeffs { k: self.head.k, offset: self.head.offset, d, b, exact: None }
    }

    /// m(z) = ⟨ψ, (H − z)^{−1}ψ⟩ for ψ supported in the first sites.
    pub fn m_function(&self, psi: &[f64], z: C64) -> Result<C64> {
        if psi.is_empty() || self.size.is_some_and(|n| psi.len() > n) {
            return Err(Error::Param(format!("state of length {} does not fit the block", psi.len())));
        }
        let model = self.extend_head(psi.len());
        let h = model.head.len();
        let (lam, _) = jacobi::free_roots(z);
        let last = match model.size {
            Some(n) if n == h => None,
            Some(n) => {
                let lk = lam.powi(2 * (n - h) as i32);
                Some(C64::new(model.head.d[h - 1], 0.0) - z - lam * (1.0 - lk) / (1.0 - lk * lam * lam))
            }
            None => Some(C64::new(model.head.d[h - 1], 0.0) - z - lam),
        };
        let mut rhs = vec![C64::new(0.0, 0.0); h];
        for (r, &x) in rhs.iter_mut().zip(psi) {
            *r = C64::new(x, 0.0);
        }
        let mut u = vec![C64::new(0.0, 0.0); h];
        Workspace::new(h).solve(&model.head.d, &model.head.b, last, z, &rhs, &mut u)?;
        Ok(psi.iter().zip(&u).map(|(p, x)| p * x).sum())
    }

    /// The same operator with a longer head (free sites appended).
    pub fn extend_head(&self, n: usize) -> Self {
        if n <= self.head.len() {
            return self.clone();
        }
        HalfLineModel { head: self.leading_block(n), size: self.size }
    }
}

/// ψ = f(H)δ₁ on a model, from eigendecompositions of leading blocks of doubling size
/// until the entries agree to `tol`·max|ψ|; entries below `tol`·max|ψ| at the end are trimmed.
pub fn filtered_state(model: &HalfLineModel, f: &SmoothTestFunction, tol: f64) -> Result<Vec<f64>> {
    let mut n = (2 * model.head.len()).max(64);
    if let Some(s) = model.size {
        n = n.min(s);
    }
    let mut prev: Option<Vec<f64>> = None;
    loop {
        let blk = model.leading_block(n);
        let eig = jacobi::eigendecompose(&blk)?;
        let psi = hsfc::eigen_apply(f, &eig, 1);
        let scale = psi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return Err(Error::ZeroState);
        }
        let exact = model.size == Some(n);
        let converged = prev.as_ref().is_some_and(|p| {
            let diff = p.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rest = psi[p.len()..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            diff <= tol * scale && rest <= tol * scale
        });
        if exact || converged {
            let keep = psi.iter().rposition(|x| x.abs() > tol * scale).map_or(1, |i| i + 1);
            let mut out = psi;
            out.truncate(keep);
            return Ok(out);
        }
        prev = Some(psi);
        n *= 2;
        if let Some(s) = model.size {
            n = n.min(s);
        }
    }
}

/// Moments at one T from the fast path.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSample {
    pub t: f64,
    /// Σ n^p a(n, T), one per requested p.
    pub moments: Vec<f64>,
    pub mass: f64,
    /// a(N, T) for truncated models, 0 on the half-line.
    pub edge: f64,
}

/// S_j = Σ_{m=1}^{k} m^j x^m for j ≤ jmax, by binary doubling of the partial sums.
fn power_geometric_sums(x: C64, k: u64, jmax: usize) -> Vec<C64> {
    let binom = binomials(jmax);
    // v[j] = Σ_{m=0}^{len−1} m^j x^m, xp = x^len.
    let mut v = vec![C64::new(0.0, 0.0); jmax + 1];
    let mut len: u64 = 0;
    let mut xp = C64::new(1.0, 0.0);
    let target = k + 1;
    for bit in (0..64 - target.leading_zeros()).rev() {
        if len > 0 {
            let lf = len as f64;
            let old = v.clone();
            for j in 0..=jmax {
                let mut s = C64::new(0.0, 0.0);
                let mut lp = 1.0;
                for i in (0..=j).rev() {
                    s += binom[j][i] * lp * old[i];
                    lp *= lf;
                }
                v[j] = old[j] + xp * s;
            }
            xp *= xp;
            len *= 2;
        }
        if (target >> bit) & 1 == 1 {
            let lf = len as f64;
            let mut lp = 1.0;
            for vj in v.iter_mut() {
                *vj += lp * xp;
                lp *= lf;
            }
            xp *= x;
            len += 1;
        }
    }
    v[0] -= 1.0;
    v
}

/// Σ_{m≥1} m^j r^m = r A_j(r)/(1 − r)^{j+1} with Eulerian polynomials A_j.
fn power_geometric_series(r: f64, jmax: usize) -> Vec<f64> {
    let one_minus = 1.0 - r;
    let mut euler: Vec<Vec<f64>> = vec![vec![1.0]];
    for n in 1..=jmax {
        let prev = &euler[n - 1];
        let mut row = vec![0.0; n.max(1)];
        for (k, slot) in row.iter_mut().enumerate() {
            let a = if k < prev.len() { (k + 1) as f64 * prev[k] } else { 0.0 };
            let b = if k >= 1 && k - 1 < prev.len() { (n - k) as f64 * prev[k - 1] } else { 0.0 };
            *slot = a + b;
        }
        euler.push(row);
    }
    (0..=jmax)
        .map(|j| {
            let poly = euler[j].iter().rev().fold(0.0, |acc, c| acc * r + c);
            r * poly / one_minus.powi(j as i32 + 1)
        })
        .collect()
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![1.0]];
    for i in 1..=n {
        let mut row = vec![1.0; i + 1];
        for k in 1..i {
            row[k] = c[i - 1][k - 1] + c[i - 1][k];
        }
        c.push(row);
    }
    c
}

/// Σ_n n^p a(n, T) for integer p on a model; the head is extended to cover ψ. The head is
/// solved directly with the free tail folded into its last diagonal entry; the tail
/// contributes through closed-form power-geometric sums.
pub fn model_moments(
    model: &HalfLineModel,
    psi: &[f64],
    t: f64,
    ps: &[u32],
    window: Option<(f64, f64)>,
) -> Result<MomentSample> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Param(format!("time scale {t} must be positive")));
    }
    if model.size.is_some_and(|n| psi.len() > n) {
        return Err(Error::Param(format!("state of length {} exceeds the block", psi.len())));
    }
    let extended;
    let model = if psi.len() > model.head.len() {
        extended = model.extend_head(psi.len());
        &extended
    } else {
        model
    };
    if psi.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroState);
    }
    let h = model.head.len();
    let jmax = ps.iter().copied().max().unwrap_or(0) as usize;
    let eps = 0.5 / t;
    let window = window.unwrap_or_else(|| {
        let (lo, hi) = model.head.gershgorin();
        (lo.min(0.0), hi.max(4.0))
    });
    let grid = energy_grid(window.0, window.1, eps)?;
    let binom = binomials(jmax);
    let mut rhs = vec![C64::new(0.0, 0.0); h];
    for (r, &x) in rhs.iter_mut().zip(psi) {
        *r = C64::new(x, 0.0);
    }
    let powers: Vec<Vec<f64>> = (1..=h).map(|n| (0..=jmax).map(|j| (n as f64).powi(j as i32)).collect()).collect();
    let n_out = ps.len() + 2;
    let closure = |z: C64| -> (C64, Option<C64>, Option<C64>) {
        let (lam, _) = jacobi::free_roots(z);
        match model.size {
            None => (lam, Some(C64::new(model.head.d[h - 1], 0.0) - z - lam), None),
            Some(n) if n == h => (lam, None, None),
            Some(n) => {
                let lk = lam.powi(2 * (n - h) as i32);
                let m_pow = lk * lam * lam;
                let rho = lam * (1.0 - lk) / (1.0 - m_pow);
                (lam, Some(C64::new(model.head.d[h - 1], 0.0) - z - rho), Some(m_pow))
            }
        }
    };
    let parts: Vec<Result<Vec<f64>>> = grid
        .nodes
        .par_chunks(CHUNK)
        .zip(grid.weights.par_chunks(CHUNK))
        .map(|(es, ws)| {
            let mut work = Workspace::new(h);
            let mut scratch = vec![[(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); LANES]; h];
            let mut u = vec![[C64::new(0.0, 0.0); LANES]; h];
            let mut single = vec![C64::new(0.0, 0.0); h];
            let mut acc = vec![0.0; n_out];
            let mut per_j = vec![[0.0; LANES]; jmax + 1];
            for (eb, wb) in es.chunks(LANES).zip(ws.chunks(LANES)) {
                let mut zs = [C64::new(eb[0], eps); LANES];
                let mut wts = [0.0; LANES];
                for k in 0..eb.len() {
                    zs[k] = C64::new(eb[k], eps);
                    wts[k] = wb[k];
                }
                let info = zs.map(closure);
                let lasts = info.map(|x| x.1);
                if !sweep_lanes(&model.head.d, &model.head.b, &lasts, &zs, &rhs, &mut scratch, &mut u) {
                    for k in 0..LANES {
                        work.solve(&model.head.d, &model.head.b, lasts[k], zs[k], &rhs, &mut single)?;
                        for (row, x) in u.iter_mut().zip(&single) {
                            row[k] = *x;
                        }
                    }
                }
                for row in per_j.iter_mut() {
                    *row = [0.0; LANES];
                }
                for (row, pw) in u.iter().zip(&powers) {
                    let a = row.map(|x| x.norm_sqr());
                    for (pj, p) in per_j.iter_mut().zip(pw) {
                        for k in 0..LANES {
                            pj[k] += a[k] * p;
                        }
                    }
                }
                for k in 0..LANES {
                    let mut lane: Vec<f64> = per_j.iter().map(|row| row[k]).collect();
                    let (lam, _, m_pow) = info[k];
                    let edge = add_tail(&mut lane, model.size, h, lam, m_pow, u[h - 1][k].norm_sqr(), &binom);
                    for (slot, &p) in acc.iter_mut().zip(ps) {
                        *slot += wts[k] * lane[p as usize];
                    }
                    acc[ps.len()] += wts[k] * lane[0];
                    acc[ps.len() + 1] += wts[k] * edge;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; n_out];
    for part in parts {
        for (x, y) in total.iter_mut().zip(part?) {
            *x += y;
        }
    }
    for x in &mut total {
        *x *= eps / PI;
    }
    let edge = total.pop().unwrap();
    let mass = total.pop().unwrap();
    Ok(MomentSample { t, moments: total, mass, edge })
}

/// Adds the free-tail part of Σ n^j |u(n)|² given |u(h)|² and the decaying root λ;
/// returns |u(N)|² (0 on the half-line).
fn add_tail(per_j: &mut [f64], size: Option<usize>, h: usize, lam: C64, m_pow: Option<C64>, uh: f64, binom: &[Vec<f64>]) -> f64 {
    let jmax = per_j.len() - 1;
    let hf = h as f64;
    match (size, m_pow) {
        (None, _) => {
            let s = power_geometric_series(lam.norm_sqr(), jmax);
            add_shifted(per_j, binom, hf, uh, |j| s[j]);
            0.0
        }
        (Some(n), Some(m_pow)) => {
            let k = (n - h) as u64;
            let r = lam.norm_sqr();
            let q = lam / lam.conj();
            let sr = power_geometric_sums(C64::new(r, 0.0), k, jmax);
            let sq = power_geometric_sums(q, k, jmax);
            let denom = (1.0 - m_pow).norm_sqr();
            let scale = uh / denom;
            let rk1 = r.powi(k as i32 + 1);
            let lm_bar = m_pow.conj();
            let nf = (n + 1) as f64;
            for (j, slot) in per_j.iter_mut().enumerate() {
                let mut t1 = 0.0;
                let mut t2 = 0.0;
                let mut t3 = C64::new(0.0, 0.0);
                let (mut hp, mut np) = (1.0, 1.0);
                for i in (0..=j).rev() {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    t1 += binom[j][i] * hp * sr[i].re;
                    t2 += sign * binom[j][i] * np * sr[i].re;
                    t3 += binom[j][i] * hp * sq[i];
                    hp *= hf;
                    np *= nf;
                }
                *slot += scale * (t1 + rk1 * t2 - 2.0 * (lm_bar * t3).re);
            }
            let tail_n = lam.powi(k as i32) - lam.powi(k as i32 + 2);
            uh * tail_n.norm_sqr() / denom
        }
        _ => uh,
    }
}

/// per_j[j] += scale Σ_i C(j, i) h^{j−i} S_i, the moment of (m + h)^j over the tail.
fn add_shifted(per_j: &mut [f64], binom: &[Vec<f64>], h: f64, scale: f64, s: impl Fn(usize) -> f64) {
    for (j, slot) in per_j.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut hp = 1.0;
        for i in (0..=j).rev() {
            acc += binom[j][i] * hp * s(i);
            hp *= h;
        }
        *slot += scale * acc;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    pub p: f64,
    /// (T, ⟨|X|^p⟩(T)) with T increasing.
    pub samples: Vec<(f64, f64)>,
}

impl MomentCurve {
    pub fn new(p: f64, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Param("T grid must be strictly increasing".into()));
        }
        if let Some(s) = samples.iter().find(|s| !(s.1 > 0.0)) {
            return Err(Error::Param(format!("non-positive moment {} at T = {}", s.1, s.0)));
        }
        Ok(MomentCurve { p, samples })
    }
}

/// `per_decade` points per decade from t_min to t_max inclusive.
pub fn geometric_grid(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_max / t_min).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=n).map(|i| t_min * (t_max / t_min).powf(i as f64 / n as f64)).collect()
}

/// One moment curve per p on the T grid.
pub fn moment_curves(
    model: &HalfLineModel,
    psi: &[f64],
    ps: &[u32],
    t_grid: &[f64],
    window: Option<(f64, f64)>,
) -> Result<Vec<MomentCurve>> {
    let mut samples = vec![Vec::with_capacity(t_grid.len()); ps.len()];
    for &t in t_grid {
        let s = model_moments(model, psi, t, ps, window)?;
        for (curve, m) in samples.iter_mut().zip(&s.moments) {
            curve.push((t, *m));
        }
    }
    ps.iter().zip(samples).map(|(&p, s)| MomentCurve::new(p as f64, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSlope {
    pub t_lo: f64,
    pub t_hi: f64,
    /// d log⟨|X|^p⟩ / d log T by least squares over the window.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub p: f64,
    /// Trailing-half minimum of local slopes, divided by p.
    pub beta_hat: f64,
    /// T range of the trailing half.
    pub window: (f64, f64),
    pub local_slopes: Vec<LocalSlope>,
    /// Trailing-half maximum of local slopes over p.
    pub beta_upper: f64,
    /// Trailing-half minimum of log⟨|X|^p⟩ / (p log T).
    pub log_ratio: f64,
    /// (p + 1)/(p + 1/Γ).
    pub target: Option<f64>,
}

pub fn target_beta(p: f64, gamma: f64) -> f64 {
    (p + 1.0) / (p + 1.0 / gamma)
}

/// Local slopes on dyadic T windows; windows with fewer than two samples use the
/// samples bracketing them.
pub fn beta_estimate(curve: &MomentCurve, gamma: Option<f64>) -> Result<BetaEstimate> {
    let s = &curve.samples;
    if s.len() < 8 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 8", s.len())));
    }
    let (t0, t1) = (s[0].0, s[s.len() - 1].0);
    if t1 / t0 < 1e3 * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!("T spans {:.2} decades, need 3", (t1 / t0).log10())));
    }
    if !(curve.p > 0.0) {
        return Err(Error::Param(format!("moment order {} must be positive", curve.p)));
    }
    let logs: Vec<(f64, f64)> = s.iter().map(|&(t, m)| (t.ln(), m.ln())).collect();
    let mut slopes = Vec::new();
    let mut lo = t0;
    while lo < t1 * (1.0 - 1e-12) {
        let hi = (2.0 * lo).min(t1);
        let tol = 1e-9 * hi;
        let mut idx: Vec<usize> = (0..s.len()).filter(|&i| s[i].0 >= lo - tol && s[i].0 <= hi + tol).collect();
        if idx.len() < 2 {
            let below = (0..s.len()).rev().find(|&i| s[i].0 <= lo + tol);
            let above = (0..s.len()).find(|&i| s[i].0 >= hi - tol);
            idx = below.into_iter().chain(above).collect();
            idx.dedup();
        }
        if idx.len() >= 2 {
            slopes.push(LocalSlope { t_lo: lo, t_hi: hi, slope: least_squares_slope(&idx.iter().map(|&i| logs[i]).collect::<Vec<_>>()) });
        }
        lo = hi;
    }
    let mid = (t0 * t1).sqrt();
    let trailing: Vec<&LocalSlope> = slopes.iter().filter(|w| (w.t_lo * w.t_hi).sqrt() >= mid).collect();
    let min_slope = trailing.iter().map(|w| w.slope).fold(f64::INFINITY, f64::min);
    let max_slope = trailing.iter().map(|w| w.slope).fold(f64::NEG_INFINITY, f64::max);
    let log_ratio = s
        .iter()
        .filter(|(t, _)| *t >= mid && *t > 1.0)
        .map(|(t, m)| m.ln() / (curve.p * t.ln()))
        .fold(f64::INFINITY, f64::min);
    Ok(BetaEstimate {
        p: curve.p,
        beta_hat: min_slope / curve.p,
        window: (mid, t1),
        local_slopes: slopes,
        beta_upper: max_slope / curve.p,
        log_ratio,
        target: gamma.map(|g| target_beta(curve.p, g)),
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub p: f64,
    pub barrier: usize,
    pub l_n: f64,
    /// A = (p + 1/Γ)/(p + 1).
    pub a_exp: f64,
    /// L_N^A, where both lower-bound branches are equal.
    pub pivot: f64,
    /// The C₅-free part of q_N: Σ_{j<N} ((Γ−1)/Γ) log L_j / log L_N.
    pub q_structural: f64,
    /// (L_N^{p+1} + T^{p+1} L_N^{(Γ−1)/Γ})^{p/(p+1)} per sample.
    pub lower_shape: Vec<f64>,
    /// L_N^p + T^{p+1} L_N^{−1/Γ} per sample, where T ≥ L_N.
    pub upper_shape: Vec<Option<f64>>,
    pub c_lower: f64,
    pub c_upper: f64,
    /// Fraction of samples with C_lower·lower ≤ M (and M ≤ C_upper·upper where defined).
    pub coverage: f64,
    /// Crossover of the two-branch fit M ≈ P + G T^{p+1} on T ≥ L_N.
    pub crossover: Option<f64>,
    /// log₂(crossover / pivot).
    pub crossover_octaves: Option<f64>,
}

/// Evaluate the lower and upper moment envelopes around barrier N (1-based) on a
/// measured curve. Samples must lie in [L_N/4, L_N^{1/Γ}]. The constants are the
/// extremal admissible ones on the first half (in log T) of the samples and coverage
/// is measured on all of them.
pub fn bound_envelopes(params: &TreeParams, p: f64, barrier: usize, measured: &MomentCurve) -> Result<EnvelopeReport> {
    let positions = params.sparse_positions.clone();
    if barrier == 0 || barrier > positions.len() {
        return Err(Error::Param(format!("barrier index {barrier} outside 1..={}", positions.len())));
    }
    let g = params.gamma;
    let l_n = positions[barrier - 1] as f64;
    let (t_lo, t_hi) = (l_n / 4.0, l_n.powf(1.0 / g));
    let s = &measured.samples;
    if s.is_empty() {
        return Err(Error::InsufficientData("empty moment curve".into()));
    }
    if let Some(&(t, _)) = s.iter().find(|(t, _)| *t < t_lo * (1.0 - 1e-12) || *t > t_hi * (1.0 + 1e-12)) {
        return Err(Error::HypothesisWindow(format!("T = {t} outside [L_N/4, L_N^(1/Γ)] = [{t_lo}, {t_hi}]")));
    }
    let a_exp = (p + 1.0 / g) / (p + 1.0);
    let pivot = l_n.powf(a_exp);
    let q_structural = positions[..barrier - 1].iter().map(|&l| (g - 1.0) / g * (l as f64).ln()).sum::<f64>() / l_n.ln();
    let lower_shape: Vec<f64> = s
        .iter()
        .map(|&(t, _)| (l_n.powf(p + 1.0) + t.powf(p + 1.0) * l_n.powf((g - 1.0) / g)).powf(p / (p + 1.0)))
        .collect();
    let upper_shape: Vec<Option<f64>> =
        s.iter().map(|&(t, _)| (t >= l_n).then(|| l_n.powf(p) + t.powf(p + 1.0) * l_n.powf(-1.0 / g))).collect();
    let mid = (s[0].0 * s[s.len() - 1].0).sqrt();
    let calib: Vec<usize> = (0..s.len()).filter(|&i| s[i].0 <= mid * (1.0 + 1e-12)).collect();
    let c_lower = calib.iter().map(|&i| s[i].1 / lower_shape[i]).fold(f64::INFINITY, f64::min);
    let c_upper = calib
        .iter()
        .filter_map(|&i| upper_shape[i].map(|u| s[i].1 / u))
        .fold(f64::NEG_INFINITY, f64::max);
    let covered = (0..s.len())
        .filter(|&i| {
            let lo_ok = c_lower * lower_shape[i] <= s[i].1 * (1.0 + 1e-12);
            let up_ok = match upper_shape[i] {
                Some(u) if c_upper.is_finite() => s[i].1 <= c_upper * u * (1.0 + 1e-12),
                _ => true,
            };
            lo_ok && up_ok
        })
        .count();
    let coverage = covered as f64 / s.len() as f64;
    let fit_pts: Vec<(f64, f64)> = s.iter().filter(|(t, _)| *t >= l_n).map(|&(t, m)| (t, m)).collect();
    let crossover = two_branch_crossover(&fit_pts, p);
    let crossover_octaves = crossover.map(|c| (c / pivot).log2());
    Ok(EnvelopeReport {
        p,
        barrier,
        l_n,
        a_exp,
        pivot,
        q_structural,
        lower_shape,
        upper_shape,
        c_lower,
        c_upper,
        coverage,
        crossover,
        crossover_octaves,
    })
}

/// Fit log M ≈ log(P + G T^{p+1}) in log space and return (P/G)^{1/(p+1)}.
fn two_branch_crossover(pts: &[(f64, f64)], p: f64) -> Option<f64> {
    if pts.len() < 4 {
        return None;
    }
    let k = p + 1.0;
    // With x = log(P/G), log G is the mean residual; minimise over x.
    let cost = |x: f64| {
        let res: Vec<f64> = pts.iter().map(|&(t, m)| m.ln() - log_add(x, k * t.ln())).collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
    };
    let lt: Vec<f64> = pts.iter().map(|&(t, _)| k * t.ln()).collect();
    let (lo, hi) = (lt[0] - 5.0 * k, lt[lt.len() - 1] + 5.0 * k);
    let steps = 2000;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let c = cost(x);
        if c < best.0 {
            best = (c, x);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best.1 - h, best.1 + h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c1 = b - phi * (b - a);
        let c2 = a + phi * (b - a);
        if cost(c1) < cost(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let x = 0.5 * (a + b);
    if x <= lo + h || x >= hi - h {
        return None;
    }
    Some((x / k).exp())
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
