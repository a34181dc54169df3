//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
/// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// The 15 Kronrod abscissae of [a, b], with Kronrod and embedded Gauss weights.
pub fn gk15_nodes(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, 0.0); 15];
    let mut idx = 0;
    for j in 0..7 {
        let wg = if j % 2 == 1 { WG[j / 2] * h } else { 0.0 };
        out[idx] = (c - h * XGK[j], WGK[j] * h, wg);
        out[idx + 1] = (c + h * XGK[j], WGK[j] * h, wg);
        idx += 2;
    }
    out[14] = (c, WGK[7] * h, WG[3] * h);
    out
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    err: f64,
    depth: u32,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum bisection depth of any panel.
    pub max_depth: u32,
    pub max_panels: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { abs_tol: 1e-12, rel_tol: 1e-10, max_depth: 40, max_panels: 20_000 }
    }
}

/// Adaptive GK15 for a scalar integrand. Returns (value, error estimate).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: &AdaptiveConfig) -> Result<(f64, f64)> {
    let mut rule = |a: f64, b: f64| {
        let (mut k, mut g) = (0.0, 0.0);
        for (x, wk, wg) in gk15_nodes(a, b) {
            let v = f(x);
            k += wk * v;
            g += wg * v;
        }
        (k, (k - g).abs())
    };
    let (v, e) = rule(a, b);
    let mut heap = BinaryHeap::from([Panel { a, b, value: v, err: e, depth: 0 }]);
    let (mut total, mut err) = (v, e);
    loop {
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok((total, err));
        }
        let p = heap.pop().unwrap();
        if p.depth >= cfg.max_depth || heap.len() + 2 > cfg.max_panels {
            return Err(Error::Quadrature(format!(
                "refinement exhausted on [{:.6e}, {:.6e}] with error {:.3e}",
                p.a, p.b, err
            )));
        }
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = rule(p.a, m);
        let (v2, e2) = rule(m, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, value: v1, err: e1, depth: p.depth + 1 });
        heap.push(Panel { a: m, b: p.b, value: v2, err: e2, depth: p.depth + 1 });
    }
}

/// Adaptive GK15 for a vector-valued integrand; errors are measured in the max norm.
/// `f(x, out)` writes the integrand into `out`.
pub fn integrate_vec<F: FnMut(f64, &mut [C64]) -> Result<()>>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    cfg: &AdaptiveConfig,
) -> Result<(Vec<C64>, f64)> {
    let zero = C64::new(0.0, 0.0);
    let mut buf = vec![zero; dim];
    let mut rule = |a: f64, b: f64| -> Result<(Vec<C64>, f64)> {
        let mut k = vec![zero; dim];
        let mut g = vec![zero; dim];
        for (x, wk, wg) in gk15_nodes(a, b) {
            f(x, &mut buf)?;
            for i in 0..dim {
                k[i] += wk * buf[i];
                if wg != 0.0 {
                    g[i] += wg * buf[i];
                }
            }
        }
        let e = k.iter().zip(&g).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        Ok((k, e))
    };
    let (v, e) = rule(a, b)?;
    let mut total = v.clone();
    let mut heap = BinaryHeap::from([Panel { a, b, value: v, err: e, depth: 0 }]);
    let mut err = e;
    loop {
        let scale = total.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if err <= cfg.abs_tol.max(cfg.rel_tol * scale) {
            return Ok((total, err));
        }
        let p = heap.pop().unwrap();
        if p.depth >= cfg.max_depth || heap.len() + 2 > cfg.max_panels {
            return Err(Error::Quadrature(format!(
                "refinement exhausted on [{:.6e}, {:.6e}] with error {:.3e}",
                p.a, p.b, err
            )));
        }
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = rule(p.a, m)?;
        let (v2, e2) = rule(m, p.b)?;
        for i in 0..dim {
            total[i] += v1[i] + v2[i] - p.value[i];
        }
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, value: v1, err: e1, depth: p.depth + 1 });
        heap.push(Panel { a: m, b: p.b, value: v2, err: e2, depth: p.depth + 1 });
    }
}
