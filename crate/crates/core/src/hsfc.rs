//! Helffer–Sjöstrand functional calculus on Jacobi blocks: smooth test
//! functions held as Chebyshev series, the weighted norms ⫴f⫴_n, f(H)δ_j by
//! 2D quadrature of ∂̄f̃ against the resolvent, and the kernel-decay verifier.

use crate::decompose::JacobiCoeffs;
use crate::error::{Error, Result};
use crate::jacobi::{self, Workspace};
use crate::quad::{self, AdaptiveConfig};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::{E, PI};

/// Resolution threshold for the function itself.
pub const TAIL_TOLERANCE: f64 = 1e-12;
/// Tail threshold for differentiated series.
pub const DERIVATIVE_TAIL_TOLERANCE: f64 = 1e-2;
pub const MAX_DEGREE: usize = 8192;
const CHOP: f64 = 1e-15;
/// Pieces vanishing at an end are fitted on an interval widened by this fraction of
/// their width on that side, so the end is interior to the Chebyshev grid.
pub const FIT_MARGIN: f64 = 0.3;
/// Highest derivative order precomputed for every function.
pub const MAX_ORDER: usize = 12;

/// Chebyshev series Σ c_k T_k(t) with t the affine image of [a, b] on [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ChebSeries {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
}

impl ChebSeries {
    /// Interpolate at the first-kind Chebyshev points of degree `n − 1`.
    pub fn fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Self {
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                f(0.5 * (a + b) + 0.5 * (b - a) * t)
            })
            .collect();
        // cos(π j (2k+1) / 2n) via a table of cos(π m / 2n), m mod 4n.
        let table: Vec<f64> = (0..4 * n).map(|m| (PI * m as f64 / (2 * n) as f64).cos()).collect();
        let c = (0..n)
            .map(|j| {
                let mut s = 0.0;
                for (k, v) in vals.iter().enumerate() {
                    s += v * table[(j * (2 * k + 1)) % (4 * n)];
                }
                let s = 2.0 * s / n as f64;
                if j == 0 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        ChebSeries { a, b, c }
    }

    /// Fit with doubling degree until the tail test passes, refit at twice that degree
    /// and chop trailing noise.
    pub fn fit_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, max_degree: usize) -> Result<Self> {
        let mut n = 32;
        loop {
            let s = Self::fit(&f, a, b, n);
            if s.tail_ratio() < TAIL_TOLERANCE {
                let mut s = Self::fit(&f, a, b, 2 * n);
                s.chop(CHOP);
                return Ok(s);
            }
            if n >= max_degree {
                return Err(Error::Resolution(format!(
                    "Chebyshev tail {:.3e} on [{a}, {b}] at degree {n}",
                    s.tail_ratio()
                )));
            }
            n *= 2;
        }
    }

    pub fn constant(a: f64, b: f64, v: f64) -> Self {
        ChebSeries { a, b, c: vec![v] }
    }

    /// Largest coefficient in the last tenth relative to the largest overall; 0 for
    /// series too short to have a tail.
    pub fn tail_ratio(&self) -> f64 {
        let peak = self.c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak == 0.0 || self.c.len() < 10 {
            return 0.0;
        }
        let start = self.c.len() - self.c.len().div_ceil(10);
        self.c[start..].iter().fold(0.0f64, |m, x| m.max(x.abs())) / peak
    }

    pub fn chop(&mut self, rel: f64) {
        let peak = self.c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let keep = self.c.iter().rposition(|x| x.abs() > rel * peak).map_or(1, |i| i + 1);
        self.c.truncate(keep);
    }

    /// Clenshaw evaluation; no range check.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in self.c.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.c[0]
    }

    pub fn derivative(&self) -> Self {
        let n = self.c.len();
        if n <= 1 {
            return ChebSeries { a: self.a, b: self.b, c: vec![0.0] };
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.c[k];
        }
        d[0] *= 0.5;
        d.truncate(n - 1);
        let s = 2.0 / (self.b - self.a);
        for x in &mut d {
            *x *= s;
        }
        ChebSeries { a: self.a, b: self.b, c: d }
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.c {
            *x *= s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    First,
    Second,
    Generic,
}

/// A smooth function, zero outside a finite union of pieces, each held as a
/// Chebyshev series with its derivatives.
#[derive(Debug, Clone)]
pub struct SmoothTestFunction {
    pub kind: Kind,
    pub support: (f64, f64),
    /// Declared bound on sup |f|.
    pub bound: f64,
    pub nu: Option<f64>,
    /// A point with f(x₀) ≠ 0 (first kind).
    pub x0: Option<f64>,
    /// (E₀, c) for the second kind.
    pub window: Option<(f64, f64)>,
    /// `series[r][p]` is f^{(r)} on piece p, valid on `windows[p]`.
    series: Vec<Vec<ChebSeries>>,
    windows: Vec<(f64, f64)>,
    tails: Vec<f64>,
}

impl SmoothTestFunction {
    /// Build from caller-fitted pieces, sorted and non-overlapping. The tail test is
    /// applied to the function itself.
    pub fn from_series(pieces: Vec<ChebSeries>) -> Result<Self> {
        if pieces.is_empty() || pieces.windows(2).any(|w| w[0].b > w[1].a) || pieces.iter().any(|p| !(p.a < p.b)) {
            return Err(Error::Param("pieces must be non-empty, sorted and disjoint".into()));
        }
        let windows = pieces.iter().map(|p| (p.a, p.b)).collect();
        let f = Self::from_pieces(pieces, windows, Kind::Generic);
        f.check_order(0)?;
        Ok(f)
    }

    fn from_pieces(pieces: Vec<ChebSeries>, windows: Vec<(f64, f64)>, kind: Kind) -> Self {
        let support = (windows.first().unwrap().0, windows.last().unwrap().1);
        let mut series = vec![pieces];
        for r in 1..=MAX_ORDER {
            let next = series[r - 1].iter().map(ChebSeries::derivative).collect();
            series.push(next);
        }
        let tails = series.iter().map(|s| s.iter().map(ChebSeries::tail_ratio).fold(0.0, f64::max)).collect();
        let mut f =
            SmoothTestFunction { kind, support, bound: 0.0, nu: None, x0: None, window: None, series, windows, tails };
        f.bound = f.sup_abs();
        f
    }

    /// Fit a function on [a, b]; it should vanish to all orders at both ends.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Param(format!("empty interval [{a}, {b}]")));
        }
        let m = FIT_MARGIN * (b - a);
        let g = |x: f64| if x <= a || x >= b { 0.0 } else { f(x) };
        let s = ChebSeries::fit_adaptive(g, a - m, b + m, MAX_DEGREE)?;
        Ok(Self::from_pieces(vec![s], vec![(a, b)], Kind::Generic))
    }

    pub fn zero() -> Self {
        Self::from_pieces(vec![ChebSeries::constant(0.0, 1.0, 0.0)], vec![(0.0, 1.0)], Kind::Generic)
    }

    /// Chebyshev series of f on each piece.
    pub fn pieces(&self) -> &[ChebSeries] {
        &self.series[0]
    }

    /// The sub-intervals where each piece is used; f vanishes outside their union.
    pub fn windows(&self) -> &[(f64, f64)] {
        &self.windows
    }

    /// Tail ratio of the order-r differentiated series.
    pub fn tail_ratio(&self, r: usize) -> f64 {
        self.tails.get(r).copied().unwrap_or(f64::INFINITY)
    }

    /// Highest derivative order that passes the tail test.
    pub fn resolved_order(&self) -> usize {
        (0..=MAX_ORDER).take_while(|&r| self.tails[r] < DERIVATIVE_TAIL_TOLERANCE).last().unwrap_or(0)
    }

    pub fn check_order(&self, n: usize) -> Result<()> {
        if n > MAX_ORDER {
            return Err(Error::Resolution(format!("derivative order {n} exceeds {MAX_ORDER}")));
        }
        for r in 0..=n {
            let tol = if r == 0 { TAIL_TOLERANCE } else { DERIVATIVE_TAIL_TOLERANCE };
            if self.tails[r] >= tol {
                return Err(Error::Resolution(format!(
                    "order-{r} series not resolved: tail ratio {:.3e}",
                    self.tails[r]
                )));
            }
        }
        Ok(())
    }

    fn piece_at(&self, x: f64) -> Option<usize> {
        let w = &self.windows;
        let i = w.partition_point(|p| p.1 < x);
        (i < w.len() && w[i].0 <= x).then_some(i)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.piece_at(x).map_or(0.0, |p| self.series[0][p].eval(x))
    }

    /// f^{(r)}(x) for r ≤ MAX_ORDER; no resolution check.
    pub fn derivative(&self, r: usize, x: f64) -> f64 {
        self.piece_at(x).map_or(0.0, |p| self.series[r][p].eval(x))
    }

    /// f^{(0..=n)}(x) into `out`.
    pub fn derivatives(&self, x: f64, out: &mut [f64]) {
        match self.piece_at(x) {
            Some(p) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = self.series[r][p].eval(x);
                }
            }
            None => out.fill(0.0),
        }
    }

    /// sup |f| sampled on a fine grid of each piece.
    pub fn sup_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for (p, &(a, b)) in self.series[0].iter().zip(&self.windows) {
            let n = 4 * p.c.len().max(16);
            for i in 0..=n {
                m = m.max(p.eval(a + (b - a) * i as f64 / n as f64).abs());
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut f = self.clone();
        for order in &mut f.series {
            for p in order {
                p.scale(s);
            }
        }
        f.bound *= s.abs();
        f
    }

    /// Sum of two functions with disjoint supports.
    pub fn disjoint_sum(&self, other: &Self) -> Result<Self> {
        let (lo, hi) = if self.support.1 <= other.support.0 {
            (self, other)
        } else if other.support.1 <= self.support.0 {
            (other, self)
        } else {
            return Err(Error::Param("supports overlap".into()));
        };
        let mut series = lo.series.clone();
        for (s, t) in series.iter_mut().zip(&hi.series) {
            s.extend(t.iter().cloned());
        }
        let mut windows = lo.windows.clone();
        windows.extend(hi.windows.iter().copied());
        let tails = lo.tails.iter().zip(&hi.tails).map(|(a, b)| a.max(*b)).collect();
        Ok(SmoothTestFunction {
            kind: Kind::Generic,
            support: (lo.support.0, hi.support.1),
            bound: lo.bound.max(hi.bound),
            nu: None,
            x0: lo.x0,
            window: None,
            series,
            windows,
            tails,
        })
    }
}

/// e·exp(−1/(1−u²)) on (−1, 1), peak 1 at u = 0.
pub fn bump_profile(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        E * (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Smooth step from 0 (t ≤ 0) to 1 (t ≥ 1) built from the same exponential.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

/// Bump of height `height` supported on [a, b].
pub fn bump(a: f64, b: f64, height: f64) -> Result<SmoothTestFunction> {
    let mut f = SmoothTestFunction::from_fn(|x| bump_profile((2.0 * x - a - b) / (b - a)), a, b)?;
    if height != 1.0 {
        f = f.scaled(height);
    }
    f.x0 = Some(0.5 * (a + b));
    Ok(f)
}

/// Supported on [a, b], equal to `height` on [a + ramp, b − ramp].
pub fn plateau(a: f64, b: f64, ramp: f64, height: f64) -> Result<SmoothTestFunction> {
    if !(ramp > 0.0 && a + 2.0 * ramp <= b) {
        return Err(Error::Param(format!("ramp {ramp} does not fit in [{a}, {b}]")));
    }
    let m = FIT_MARGIN * ramp;
    let up = ChebSeries::fit_adaptive(|x| smoothstep((x - a) / ramp), a - m, a + ramp + m, MAX_DEGREE)?;
    let down = ChebSeries::fit_adaptive(|x| smoothstep((b - x) / ramp), b - ramp - m, b + m, MAX_DEGREE)?;
    let mut pieces = vec![up];
    let mut windows = vec![(a, a + ramp)];
    if a + 2.0 * ramp < b {
        pieces.push(ChebSeries::constant(a + ramp, b - ramp, 1.0));
        windows.push((a + ramp, b - ramp));
    }
    pieces.push(down);
    windows.push((b - ramp, b));
    let f = SmoothTestFunction::from_pieces(pieces, windows, Kind::Generic);
    let mut f = if height != 1.0 { f.scaled(height) } else { f };
    f.x0 = Some(0.5 * (a + b));
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Bump on [center − half_width, center + half_width].
    Bump { center: f64, half_width: f64 },
    /// Plateau on all of B_ν with the given ramp width.
    Plateau { ramp: f64 },
    /// Second kind: equal to 1 on [E₀ − ν, E₀ + ν] with ramps of width ν/2 outside.
    Window { e0: f64, c: f64 },
}

/// Library constructor for the two classes of test functions on B_ν = [ν, 4 − ν].
pub fn make_test_function(kind: Kind, nu: f64, shape: Shape) -> Result<SmoothTestFunction> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Param(format!("ν = {nu} outside (0, 1)")));
    }
    let (lo, hi) = (nu, 4.0 - nu);
    let mut f = match (kind, shape) {
        (Kind::First | Kind::Generic, Shape::Bump { center, half_width }) => {
            let (a, b) = (center - half_width, center + half_width);
            if !(half_width > 0.0) || (kind == Kind::First && (a < lo || b > hi)) {
                return Err(Error::Param(format!("bump [{a}, {b}] not inside B_ν = [{lo}, {hi}]")));
            }
            bump(a, b, 1.0)?
        }
        (Kind::First | Kind::Generic, Shape::Plateau { ramp }) => plateau(lo, hi, ramp, 1.0)?,
        (Kind::Second, Shape::Window { e0, c }) => {
            if e0 - nu < lo || e0 + nu > hi {
                return Err(Error::Param(format!("window [{}, {}] not inside B_ν", e0 - nu, e0 + nu)));
            }
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Param(format!("lower bound c = {c} outside (0, 1]")));
            }
            let mut f = plateau(e0 - 1.5 * nu, e0 + 1.5 * nu, 0.5 * nu, 1.0)?;
            f.window = Some((e0, c));
            f
        }
        _ => return Err(Error::Param(format!("shape {shape:?} does not fit kind {kind:?}"))),
    };
    f.kind = kind;
    f.nu = Some(nu);
    Ok(f)
}

/// f_n: supported in [1/n, 4 − 1/n] and equal to 1 on [2/n, 4 − 2/n].
pub fn mollifier(n: u32) -> Result<SmoothTestFunction> {
    if n < 2 {
        return Err(Error::Param(format!("mollifier index {n} < 2")));
    }
    let h = 1.0 / n as f64;
    let mut f = plateau(h, 4.0 - h, h, 1.0)?;
    f.kind = Kind::First;
    f.nu = Some(h);
    Ok(f)
}

#[inline]
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Σ_{r≤n} ∫ |f^{(r)}| ⟨x⟩^{r−1} dx with the quadrature error estimate.
pub fn triple_norm_with_error(f: &SmoothTestFunction, n: usize) -> Result<(f64, f64)> {
    f.check_order(n)?;
    let (mut total, mut err) = (0.0, 0.0);
    for r in 0..=n {
        for (p, &(a, b)) in f.series[r].iter().zip(&f.windows) {
            let scale: f64 = p.c.iter().map(|c| c.abs()).sum::<f64>() * (b - a);
            if scale == 0.0 {
                continue;
            }
            let cfg = AdaptiveConfig { abs_tol: 1e-15 * scale, rel_tol: 1e-12, max_depth: 50, max_panels: 100_000 };
            let w = |x: f64| japanese(x).powi(r as i32 - 1);
            for (lo, hi) in sign_intervals(p, a, b) {
                let (v, e) = quad::integrate(|x| p.eval(x).abs() * w(x), lo, hi, &cfg)?;
                total += v;
                err += e;
            }
        }
    }
    Ok((total, err))
}

pub fn triple_norm(f: &SmoothTestFunction, n: usize) -> Result<f64> {
    triple_norm_with_error(f, n).map(|(v, _)| v)
}

/// Split [a, b] at the sign changes of a series.
fn sign_intervals(p: &ChebSeries, a: f64, b: f64) -> Vec<(f64, f64)> {
    let m = 8 * p.c.len().max(8);
    let x = |i: usize| a + (b - a) * i as f64 / m as f64;
    let mut cuts = vec![a];
    let mut prev = p.eval(a);
    for i in 1..=m {
        let (xl, xr) = (x(i - 1), x(i));
        let cur = p.eval(xr);
        if prev * cur < 0.0 {
            let (mut l, mut r, mut fl) = (xl, xr, prev);
            for _ in 0..80 {
                let mid = 0.5 * (l + r);
                let fm = p.eval(mid);
                if fm * fl <= 0.0 {
                    r = mid;
                } else {
                    l = mid;
                    fl = fm;
                }
                if r - l < 1e-15 * (1.0 + mid.abs()) {
                    break;
                }
            }
            cuts.push(0.5 * (l + r));
        }
        if cur != 0.0 {
            prev = cur;
        }
    }
    cuts.push(b);
    cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsConfig {
    /// Extension order n ≥ 1.
    pub order: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_panels: usize,
}

impl Default for HsConfig {
    fn default() -> Self {
        HsConfig { order: 2, abs_tol: 1e-7, rel_tol: 1e-7, max_depth: 40, max_panels: 20_000 }
    }
}

/// Cutoff τ(s): 1 for |s| ≤ 1, 0 for |s| ≥ 2.
pub fn cutoff(s: f64) -> f64 {
    1.0 - smoothstep(s.abs() - 1.0)
}

/// τ′(s).
pub fn cutoff_derivative(s: f64) -> f64 {
    let t = s.abs() - 1.0;
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    // S = 1/(1+e^q), q = 1/t − 1/(1−t); S′ = −S(1−S) q′.
    let q = 1.0 / t - 1.0 / (1.0 - t);
    let sv = 1.0 / (1.0 + q.exp());
    let dq = -1.0 / (t * t) - 1.0 / ((1.0 - t) * (1.0 - t));
    let ds = -sv * (1.0 - sv) * dq;
    -ds * s.signum()
}

/// ∂̄f̃(x + iy) given f^{(0..=n+1)}(x) in `derivs`.
pub fn dbar_extension(derivs: &[f64], n: usize, x: f64, y: f64) -> C64 {
    let jx = japanese(x);
    let s = y / jx;
    let tau = cutoff(s);
    let mut out = C64::new(0.0, 0.0);
    let iy = C64::new(0.0, y);
    if tau != 0.0 {
        let mut pw = C64::new(1.0, 0.0);
        for r in 1..=n {
            pw *= iy / r as f64;
        }
        out += 0.5 * derivs[n + 1] * pw * tau;
    }
    let dt = cutoff_derivative(s);
    if dt != 0.0 {
        let mut sum = C64::new(0.0, 0.0);
        let mut pw = C64::new(1.0, 0.0);
        for (r, &fr) in derivs.iter().enumerate().take(n + 1) {
            if r > 0 {
                pw *= iy / r as f64;
            }
            sum += fr * pw;
        }
        let geo = C64::new(0.0, 1.0 / jx) * C64::new(1.0, x * y / (jx * jx));
        out += 0.5 * sum * dt * geo;
    }
    out
}

/// Pointwise majorant of |∂̄f̃|: the region-A term plus the cutoff-band term.
pub fn dbar_envelope(derivs: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let jx = japanese(x);
    let s = y / jx;
    let mut fact = 1.0;
    for r in 1..=n {
        fact *= r as f64;
    }
    let a = if s.abs() < 2.0 { 0.5 * derivs[n + 1].abs() * y.abs().powi(n as i32) / fact } else { 0.0 };
    let band = if s.abs() > 1.0 && s.abs() < 2.0 {
        let mut sum = 0.0;
        let mut fr = 1.0;
        for (r, d) in derivs.iter().enumerate().take(n + 1) {
            if r > 0 {
                fr *= r as f64;
            }
            sum += d.abs() * y.abs().powi(r as i32) / fr;
        }
        0.5 * sum * cutoff_derivative(s).abs() / jx * (1.0 + (x * y).abs() / (jx * jx))
    } else {
        0.0
    };
    a + band
}

/// f(H)δ_j (j is 1-based) by the Helffer–Sjöstrand formula
/// f(H) = (1/π) ∫ ∂̄f̃(z) (H − z)^{−1} dx dy.
pub fn hs_apply(f: &SmoothTestFunction, coeffs: &JacobiCoeffs, j: usize, config: &HsConfig) -> Result<Vec<C64>> {
    let n = coeffs.len();
    if j == 0 || j > n {
        return Err(Error::Index { index: j, len: n });
    }
    if config.order == 0 {
        return Err(Error::Param("extension order must be at least 1".into()));
    }
    f.check_order(config.order + 1)?;
    let order = config.order;
    let zero = C64::new(0.0, 0.0);
    let mut rhs = vec![zero; n];
    rhs[j - 1] = C64::new(1.0, 0.0);
    let outer_cfg = AdaptiveConfig {
        abs_tol: config.abs_tol,
        rel_tol: config.rel_tol,
        max_depth: config.max_depth,
        max_panels: config.max_panels,
    };
    let inner_cfg = AdaptiveConfig { abs_tol: 0.1 * config.abs_tol, ..outer_cfg };
    let mut ws = Workspace::new(n);
    let mut sol = vec![zero; n];
    let mut derivs = vec![0.0; order + 2];
    let mut total = vec![zero; n];
    for piece in 0..f.pieces().len() {
        let (pa, pb) = f.windows[piece];
        let series: Vec<&ChebSeries> = (0..order + 2).map(|r| &f.series[r][piece]).collect();
        if series.iter().all(|s| s.c.iter().all(|&c| c == 0.0)) {
            continue;
        }
        let column = |x: f64, out: &mut [C64]| -> Result<()> {
            for (r, s) in series.iter().enumerate() {
                derivs[r] = s.eval(x);
            }
            let jx = japanese(x);
            out.fill(zero);
            for (lo, hi) in [(-2.0 * jx, -jx), (-jx, 0.0), (0.0, jx), (jx, 2.0 * jx)] {
                let (v, _) = quad::integrate_vec(
                    |y, o: &mut [C64]| {
                        let w = dbar_extension(&derivs, order, x, y);
                        if w == zero {
                            o.fill(zero);
                            return Ok(());
                        }
                        ws.solve(&coeffs.d, &coeffs.b, None, C64::new(x, y), &rhs, &mut sol)?;
                        for (oi, si) in o.iter_mut().zip(&sol) {
                            *oi = w * si;
                        }
                        Ok(())
                    },
                    n,
                    lo,
                    hi,
                    &inner_cfg,
                )?;
                for (oi, vi) in out.iter_mut().zip(&v) {
                    *oi += vi;
                }
            }
            Ok(())
        };
        let (v, _) = quad::integrate_vec(column, n, pa, pb, &outer_cfg)?;
        for (t, vi) in total.iter_mut().zip(&v) {
            *t += vi / PI;
        }
    }
    Ok(total)
}

/// Σ_i f(λ_i) v_i(·) v_i(j) from a full eigendecomposition (j is 1-based).
pub fn eigen_apply(f: &SmoothTestFunction, eig: &jacobi::Eigen, j: usize) -> Vec<f64> {
    let n = eig.values.len();
    let mut out = vec![0.0; n];
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        let w = f.eval(*lam) * v[j - 1];
        if w != 0.0 {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
    }
    out
}

/// Smallest window entering the stability test; below it the weight ⟨i−j⟩^k alone
/// moves the running maximum by up to (⟨2D⟩/⟨D⟩)^k.
pub const STABLE_FROM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecayEntry {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    /// lhs·⟨i−j⟩^k / ⫴f⫴_{2k+3}.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecayReport {
    pub k: u32,
    pub norm: f64,
    pub entries: Vec<KernelDecayEntry>,
    pub c2_fit: f64,
    /// (D, max of `scaled` over pairs with |i−j| ≤ D) for D = 1, 2, 4, …
    pub windows: Vec<(usize, f64)>,
    /// Every doubling of D from STABLE_FROM on changes the running maximum by at most a factor 2.
    pub stable: bool,
    /// Max deviation between the eigen route and hs_apply on the cross-checked columns.
    pub hs_deviation: f64,
    pub hs_columns: Vec<usize>,
}

/// |⟨δ_i, f(H)δ_j⟩| on the given 1-based pairs against C₂⫴f⫴_{2k+3}⟨i−j⟩^{−k}.
/// Up to `hs_columns` distinct columns are recomputed through hs_apply.
pub fn kernel_decay_check(
    f: &SmoothTestFunction,
    coeffs: &JacobiCoeffs,
    k: u32,
    pairs: &[(usize, usize)],
    hs_columns: usize,
    config: &HsConfig,
) -> Result<KernelDecayReport> {
    let n = coeffs.len();
    for &(i, j) in pairs {
        for x in [i, j] {
            if x == 0 || x > n {
                return Err(Error::Index { index: x, len: n });
            }
        }
    }
    let norm = triple_norm(f, 2 * k as usize + 3)?;
    let eig = jacobi::eigendecompose(coeffs)?;
    let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    cols.sort_unstable();
    cols.dedup();
    let columns: std::collections::HashMap<usize, Vec<f64>> =
        cols.iter().map(|&j| (j, eigen_apply(f, &eig, j))).collect();
    let mut entries = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let lhs = columns[&j][i - 1].abs();
        let dist = i.abs_diff(j) as f64;
        let scaled = if norm > 0.0 { lhs * japanese(dist).powi(k as i32) / norm } else { 0.0 };
        entries.push(KernelDecayEntry { i, j, lhs, scaled });
    }
    let c2_fit = entries.iter().map(|e| e.scaled).fold(0.0, f64::max);
    let max_d = entries.iter().map(|e| e.i.abs_diff(e.j)).max().unwrap_or(0);
    let mut windows = Vec::new();
    let mut d = 1;
    loop {
        let m = entries.iter().filter(|e| e.i.abs_diff(e.j) <= d).map(|e| e.scaled).fold(0.0, f64::max);
        windows.push((d, m));
        if d >= max_d {
            break;
        }
        d *= 2;
    }
    let stable = c2_fit.is_finite()
        && windows
            .windows(2)
            .filter(|w| w[0].0 >= STABLE_FROM)
            .all(|w| w[0].1 == 0.0 && w[1].1 == 0.0 || w[1].1 <= 2.0 * w[0].1);
    let picks: Vec<usize> = if cols.len() <= hs_columns {
        cols.clone()
    } else {
        (0..hs_columns).map(|t| cols[t * (cols.len() - 1) / (hs_columns - 1).max(1)]).collect()
    };
    let devs: Vec<Result<f64>> = picks
        .par_iter()
        .map(|&j| {
            let hs = hs_apply(f, coeffs, j, config)?;
            Ok(hs.iter().zip(&columns[&j]).map(|(h, e)| (h - e).norm()).fold(0.0, f64::max))
        })
        .collect();
    let mut hs_deviation = 0.0f64;
    for d in devs {
        hs_deviation = hs_deviation.max(d?);
    }
    Ok(KernelDecayReport { k, norm, entries, c2_fit, windows, stable, hs_deviation, hs_columns: picks })
}
