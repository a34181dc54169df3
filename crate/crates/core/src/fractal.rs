//! Dimension estimates for atomic measures: local scaling exponents, essential
//! bounds, uniform Hölder constants and the Abel-averaged Fourier decay.

use crate::error::{Error, Result};
use crate::hsfc::SmoothTestFunction;
use crate::jacobi::SpectralMeasure;
use crate::C64;
use rayon::prelude::*;

/// Lower and upper weighted quantiles used as essential inf / sup.
pub const LOWER_QUANTILE: f64 = 0.05;
pub const UPPER_QUANTILE: f64 = 0.95;
/// Growth exponent above which the Abel-averaged transform counts as unbounded.
pub const BOUNDED_GROWTH: f64 = 0.05;
/// Per-level growth of log₂ sup μ(I)/|I|^α that counts as divergence.
pub const HOLDER_TREND: f64 = 0.1;
/// Smoothing of the sampling density relative to the smallest radius.
const SAMPLE_REFINE: f64 = 8.0;

/// `n` radii from `lo` to `hi`, geometrically spaced.
pub fn geometric_deltas(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Median gap between consecutive atoms; below it every ball sees single atoms.
pub fn level_spacing(measure: &SpectralMeasure) -> Option<f64> {
    let mut gaps: Vec<f64> = measure.atoms.windows(2).map(|w| w[1].0 - w[0].0).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[gaps.len() / 2])
}

/// μ([x − δ, x + δ]) with atoms sorted by position.
pub fn ball_mass(measure: &SpectralMeasure, x: f64, delta: f64) -> f64 {
    measure.mass_in(x - delta, x + delta)
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.len() < 3 {
        return Err(Error::Param("need at least three radii".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Param("radii must be positive and increasing".into()));
    }
    Ok(())
}

/// Minimum over sliding windows (two thirds of the radii each) of the least-squares
/// slope of log μ(ball) against log δ. Infinite where the smallest ball is empty.
pub fn scaling_exponent(measure: &SpectralMeasure, x: f64, deltas: &[f64]) -> Result<f64> {
    check_deltas(deltas)?;
    let masses: Vec<f64> = deltas.iter().map(|&d| ball_mass(measure, x, d)).collect();
    Ok(exponent_from_masses(deltas, &masses))
}

fn exponent_from_masses(deltas: &[f64], masses: &[f64]) -> f64 {
    if masses[0] <= 0.0 {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = deltas.iter().zip(masses).map(|(d, m)| (d.ln(), m.ln())).collect();
    let width = (2 * pts.len()).div_ceil(3).max(2);
    pts.windows(width).map(slope_of).fold(f64::INFINITY, f64::min).max(0.0)
}

/// Local dimension estimate at x; the radii must stay above the level spacing.
pub fn local_dimension(measure: &SpectralMeasure, x: f64, deltas: &[f64]) -> Result<f64> {
    check_deltas(deltas)?;
    if let Some(s) = level_spacing(measure) {
        if deltas[0] < s {
            return Err(Error::Resolution(format!("radius {:.3e} below level spacing {s:.3e}", deltas[0])));
        }
    }
    scaling_exponent(measure, x, deltas)
}

fn slope_of(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionProfile {
    pub points: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub deltas: Vec<f64>,
    pub dim_lower: f64,
    pub dim_upper: f64,
}

/// Atoms picked at the weight quantiles (k + ½)/n, so samples follow μ.
fn weighted_sample(measure: &SpectralMeasure, n: usize) -> Vec<f64> {
    let total = measure.total;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut it = measure.atoms.iter().peekable();
    for k in 0..n {
        let target = (k as f64 + 0.5) / n as f64 * total;
        while let Some(&&(x, w)) = it.peek() {
            if cum + w >= target {
                out.push(x);
                break;
            }
            cum += w;
            it.next();
        }
        if out.len() <= k {
            out.push(measure.atoms.last().map_or(0.0, |a| a.0));
        }
    }
    out
}

/// Essential inf / sup proxies of the local dimension: 5% and 95% quantiles over
/// `sample_size` atoms drawn according to μ.
pub fn dim_profile(measure: &SpectralMeasure, sample_size: usize, deltas: &[f64]) -> Result<DimensionProfile> {
    if measure.atoms.is_empty() || sample_size == 0 {
        return Err(Error::InsufficientData("empty measure or sample".into()));
    }
    check_deltas(deltas)?;
    let points = weighted_sample(measure, sample_size);
    let gamma_hat = points.par_iter().map(|&x| local_dimension(measure, x, deltas)).collect::<Result<Vec<f64>>>()?;
    let mut sorted = gamma_hat.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    Ok(DimensionProfile { points, dim_lower: q(LOWER_QUANTILE), dim_upper: q(UPPER_QUANTILE), gamma_hat, deltas: deltas.to_vec() })
}

pub fn dim_bounds(measure: &SpectralMeasure, sample_size: usize, deltas: &[f64]) -> Result<(f64, f64)> {
    dim_profile(measure, sample_size, deltas).map(|p| (p.dim_lower, p.dim_upper))
}

/// δ Im m(x + iδ) = ∫ δ²/((x − y)² + δ²) μ(dy), a ball mass at scale δ that needs only
/// the Borel transform m of μ, so measures with continuous parts can be probed.
pub fn smoothed_ball_mass(m: &(dyn Fn(C64) -> Result<C64> + Sync), x: f64, delta: f64) -> Result<f64> {
    Ok(delta * m(C64::new(x, delta))?.im)
}

pub fn smoothed_scaling_exponent(m: &(dyn Fn(C64) -> Result<C64> + Sync), x: f64, deltas: &[f64]) -> Result<f64> {
    check_deltas(deltas)?;
    let masses = deltas.iter().map(|&d| smoothed_ball_mass(m, x, d)).collect::<Result<Vec<f64>>>()?;
    Ok(exponent_from_masses(deltas, &masses))
}

/// Dimension quantiles of a measure given by its Borel transform. Sample points are
/// the weight quantiles of the density smoothed at δ_min/8 on a grid of spacing
/// δ_min/16 over `window`.
pub fn smoothed_dim_profile(
    m: &(dyn Fn(C64) -> Result<C64> + Sync),
    window: (f64, f64),
    sample_size: usize,
    deltas: &[f64],
) -> Result<DimensionProfile> {
    check_deltas(deltas)?;
    let (a, b) = window;
    if !(b > a) || sample_size == 0 {
        return Err(Error::Param("need a nonempty window and sample".into()));
    }
    let sharp = deltas[0] / SAMPLE_REFINE;
    let step = 0.5 * sharp;
    let n = ((b - a) / step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * (b - a) / (n - 1) as f64).collect();
    let dens = xs
        .par_iter()
        .with_min_len(256)
        .map(|&x| smoothed_ball_mass(m, x, sharp))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = dens.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroState);
    }
    let mut points = Vec::with_capacity(sample_size);
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..sample_size {
        let target = (k as f64 + 0.5) / sample_size as f64 * total;
        while i + 1 < n && cum + dens[i] < target {
            cum += dens[i];
            i += 1;
        }
        points.push(xs[i]);
    }
    let gamma_hat = points.par_iter().map(|&x| smoothed_scaling_exponent(m, x, deltas)).collect::<Result<Vec<f64>>>()?;
    let mut sorted = gamma_hat.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    Ok(DimensionProfile { points, dim_lower: q(LOWER_QUANTILE), dim_upper: q(UPPER_QUANTILE), gamma_hat, deltas: deltas.to_vec() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum HolderVerdict {
    Finite(f64),
    Divergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub alpha: f64,
    /// (|I|, sup μ(I)/|I|^α) per dyadic level, coarsest first.
    pub levels: Vec<(f64, f64)>,
    pub verdict: HolderVerdict,
}

/// sup μ(I)/|I|^α over dyadic intervals (and their half-shifts) of lengths 2^{−j}
/// down to the level spacing. Divergent when log₂ of the supremum grows by more than
/// HOLDER_TREND per level over the last three refinements.
pub fn holder_constant(measure: &SpectralMeasure, alpha: f64) -> Result<HolderReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Param(format!("α = {alpha} outside (0, 1]")));
    }
    let (lo, hi) = measure.support().ok_or_else(|| Error::InsufficientData("empty measure".into()))?;
    let floor = level_spacing(measure).unwrap_or(0.0);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut len = 2f64.powf(span.log2().ceil());
    let origin = (lo / len).floor() * len;
    let mut levels = Vec::new();
    // Without a floor (one atom) stop after a fixed number of refinements.
    while len >= floor && levels.len() < 60 && (floor > 0.0 || levels.len() < 12) {
        let mut sup: f64 = 0.0;
        for shift in [0.0, 0.5] {
            let start = origin - shift * len;
            let mut k = 0;
            loop {
                let a = start + k as f64 * len;
                if a > hi {
                    break;
                }
                sup = sup.max(measure.mass_in(a, a + len) / len.powf(alpha));
                k += 1;
            }
        }
        levels.push((len, sup));
        len *= 0.5;
    }
    let n = levels.len();
    let tail: Vec<(f64, f64)> = levels[n.saturating_sub(4)..].iter().enumerate().map(|(i, l)| (i as f64, l.1.log2())).collect();
    let trend = if tail.len() == 4 { slope_of(&tail) } else { 0.0 };
    let verdict = if trend > HOLDER_TREND {
        HolderVerdict::Divergent
    } else {
        HolderVerdict::Finite(levels.iter().map(|l| l.1).fold(0.0, f64::max))
    };
    Ok(HolderReport { alpha, levels, verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierAbelReport {
    pub alpha: f64,
    /// ‖f‖²_{L²(μ)}.
    pub norm_sq: f64,
    /// (T, T^{α−1} ∫₀^∞ e^{−t/T}|(fμ)^(t)|² dt / ‖f‖²).
    pub values: Vec<(f64, f64)>,
    pub sup: f64,
    /// Log-log slope of the values over the trailing half of the T grid.
    pub growth: f64,
    pub bounded: bool,
}

/// ∫₀^∞ e^{−t/T} |Σ_i f_i w_i e^{−itλ_i}|² dt = Σ_{i,j} f_i f_j w_i w_j T/(1 + T²(λ_i − λ_j)²).
pub fn abel_fourier_integral(atoms: &[(f64, f64)], fvals: &[f64], t: f64) -> f64 {
    let c: Vec<f64> = atoms.iter().zip(fvals).map(|(a, f)| a.1 * f).collect();
    let total: f64 = (0..atoms.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..atoms.len() {
                let d = t * (atoms[i].0 - atoms[j].0);
                s += c[j] / (1.0 + d * d);
            }
            c[i] * s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    t * total
}

/// Abel-averaged Fourier decay of fμ (f ≡ 1 when `f` is None) on a T grid.
pub fn fourier_abel_check(
    measure: &SpectralMeasure,
    f: Option<&SmoothTestFunction>,
    alpha: f64,
    t_grid: &[f64],
) -> Result<FourierAbelReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Param(format!("α = {alpha} outside (0, 1]")));
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] <= 0.0 {
        return Err(Error::Param("T grid must be positive, increasing, with two or more points".into()));
    }
    let fvals: Vec<f64> = measure.atoms.iter().map(|&(x, _)| f.map_or(1.0, |f| f.eval(x))).collect();
    let norm_sq: f64 = measure.atoms.iter().zip(&fvals).map(|(a, f)| a.1 * f * f).sum();
    if norm_sq == 0.0 {
        return Err(Error::ZeroState);
    }
    let values: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| (t, t.powf(alpha - 1.0) * abel_fourier_integral(&measure.atoms, &fvals, t) / norm_sq))
        .collect();
    let sup = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let mid = (t_grid[0] * t_grid[t_grid.len() - 1]).sqrt();
    let tail: Vec<(f64, f64)> = values.iter().filter(|v| v.0 >= mid).map(|v| (v.0.ln(), v.1.ln())).collect();
    let growth = if tail.len() >= 2 { slope_of(&tail) } else { 0.0 };
    Ok(FourierAbelReport { alpha, norm_sq, values, sup, growth, bounded: growth <= BOUNDED_GROWTH })
}

/// Middle-thirds construction to the given depth: 2^depth equal atoms at the left
/// ends of the surviving intervals of [lo, lo + width].
pub fn cantor_measure(depth: u32, lo: f64, width: f64) -> Result<SpectralMeasure> {
    let mut ends = vec![0.0f64];
    let mut scale = 1.0;
    for _ in 0..depth {
        scale /= 3.0;
        ends = ends.iter().flat_map(|&a| [a, a + 2.0 * scale]).collect();
    }
    let w = 1.0 / ends.len() as f64;
    SpectralMeasure::from_atoms(ends.into_iter().map(|a| (lo + width * a, w)).collect())
}

/// n equal atoms at the cell midpoints of [a, b], total mass `total`.
pub fn uniform_measure(n: usize, a: f64, b: f64, total: f64) -> Result<SpectralMeasure> {
    if n == 0 || !(b > a) {
        return Err(Error::Param("need n ≥ 1 atoms on a nonempty interval".into()));
    }
    let h = (b - a) / n as f64;
    SpectralMeasure::from_atoms((0..n).map(|i| (a + (i as f64 + 0.5) * h, total / n as f64)).collect())
}
