use proptest::prelude::*;
use sptree::decompose::{jacobi_coeffs, JacobiCoeffs};
use sptree::hsfc::*;
use sptree::jacobi;
use sptree::tree::{build_tree, TreeParams};
use sptree::{Error, C64};
use std::f64::consts::E;

/// Coefficients (ascending) of P_r with bump^{(r)}(u) = P_r(u) (1−u²)^{−2r} bump(u).
fn bump_polys(max: usize) -> Vec<Vec<f64>> {
    let mul = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    let add = |a: &mut Vec<f64>, b: &[f64]| {
        if a.len() < b.len() {
            a.resize(b.len(), 0.0);
        }
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    };
    let q = [1.0, 0.0, -1.0];
    let mut polys = vec![vec![1.0]];
    for r in 0..max {
        let p = &polys[r];
        let dp: Vec<f64> = if p.len() > 1 { (1..p.len()).map(|i| i as f64 * p[i]).collect() } else { vec![0.0] };
        let mut next = mul(&mul(&dp, &q), &q);
        add(&mut next, &mul(&mul(&[0.0, 4.0 * r as f64], p), &q));
        add(&mut next, &mul(&[0.0, -2.0], p));
        polys.push(next);
    }
    polys
}

fn bump_derivative(polys: &[Vec<f64>], r: usize, u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - u * u;
    let f = E * (-1.0 / q).exp();
    if f == 0.0 {
        return 0.0;
    }
    let p = polys[r].iter().rev().fold(0.0, |acc, c| acc * u + c);
    p * f / q.powi(2 * r as i32)
}

/// Composite Simpson with 10⁶ intervals of Σ_r ∫|f^{(r)}|⟨x⟩^{r−1} for the bump on [1, 3].
fn brute_triple_norm_terms(n: usize) -> Vec<f64> {
    let polys = bump_polys(n);
    let m = 1_000_000;
    let h = 2.0 / m as f64;
    (0..=n)
        .map(|r| {
            let g = |x: f64| bump_derivative(&polys, r, x - 2.0).abs() * (1.0 + x * x).sqrt().powi(r as i32 - 1);
            let mut s = g(1.0) + g(3.0);
            for i in 1..m {
                let x = 1.0 + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
            }
            s * h / 3.0
        })
        .collect()
}

fn max_dev(a: &[C64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn surrogate_block(n: usize) -> JacobiCoeffs {
    let tree = build_tree(&TreeParams::new(0.5, vec![8, 24, 60, 130], 400).unwrap()).unwrap();
    jacobi_coeffs(&tree, 1, n).unwrap()
}

#[test]
fn zero_function() {
    let z = SmoothTestFunction::zero();
    assert_eq!(triple_norm(&z, 5).unwrap(), 0.0);
    let c = JacobiCoeffs::free_root_block(20);
    let v = hs_apply(&z, &c, 3, &HsConfig::default()).unwrap();
    assert!(v.iter().all(|x| x.norm() == 0.0));
}

#[test]
fn triple_norm_matches_brute_force_oracle() {
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let oracle: f64 = brute_triple_norm_terms(3).iter().sum();
    let v = triple_norm(&f, 3).unwrap();
    assert!(((v - oracle) / oracle).abs() < 1e-8, "{v} vs {oracle}");
}

#[test]
fn high_order_norm_is_resolution_limited_but_close() {
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let oracle: f64 = brute_triple_norm_terms(7).iter().sum();
    let v = triple_norm(&f, 7).unwrap();
    assert!(((v - oracle) / oracle).abs() < 1e-2, "{v} vs {oracle}");
}

#[test]
fn derivatives_match_analytic_values() {
    let polys = bump_polys(5);
    let f = bump(1.0, 3.0, 1.0).unwrap();
    for r in 0..=5 {
        let scale = (0..200).map(|i| bump_derivative(&polys, r, -1.0 + i as f64 / 100.0).abs()).fold(0.0, f64::max);
        for i in 1..40 {
            let x = 1.0 + i as f64 / 20.0;
            let err = (f.derivative(r, x) - bump_derivative(&polys, r, x - 2.0)).abs();
            assert!(err < 1e-9 * scale.max(1.0) * 10f64.powi(r as i32), "r={r} x={x} err={err:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn triple_norm_is_homogeneous(c in -5.0f64..5.0) {
        let f = bump(0.5, 2.5, 1.0).unwrap();
        let base = triple_norm(&f, 3).unwrap();
        let scaled = triple_norm(&f.scaled(c), 3).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * base.max(1.0));
    }
}

#[test]
fn under_resolved_series_are_rejected() {
    let coarse = ChebSeries::fit(|x| bump_profile(x - 2.0), 1.0, 3.0, 24);
    assert!(matches!(SmoothTestFunction::from_series(vec![coarse]), Err(Error::Resolution(_))));

    let mut c = vec![0.0; 100];
    c[0] = 1.0;
    c[1] = 1.0;
    c[99] = 1e-13;
    let f = SmoothTestFunction::from_series(vec![ChebSeries { a: 0.0, b: 1.0, c }]).unwrap();
    assert!(f.check_order(1).is_ok());
    assert!(matches!(triple_norm(&f, 9), Err(Error::Resolution(_))));
}

#[test]
fn hs_apply_matches_eigen_oracle_on_free_block() {
    let c = JacobiCoeffs::free_root_block(60);
    let eig = jacobi::eigendecompose(&c).unwrap();
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let cfg = HsConfig::default();
    let hs = hs_apply(&f, &c, 1, &cfg).unwrap();
    assert!(max_dev(&hs, &eigen_apply(&f, &eig, 1)) < 1e-4);
    let im = hs.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    assert!(im <= cfg.abs_tol);
}

#[test]
fn hs_apply_matches_oracle_for_library_functions() {
    let c = surrogate_block(60);
    let eig = jacobi::eigendecompose(&c).unwrap();
    let lib = [
        make_test_function(Kind::First, 0.5, Shape::Plateau { ramp: 0.5 }).unwrap(),
        make_test_function(Kind::First, 0.5, Shape::Bump { center: 1.5, half_width: 0.75 }).unwrap(),
        mollifier(4).unwrap(),
    ];
    for (t, f) in lib.iter().enumerate() {
        let hs = hs_apply(f, &c, 1, &HsConfig::default()).unwrap();
        let d = max_dev(&hs, &eigen_apply(f, &eig, 1));
        assert!(d < 1e-4, "function {t}: {d:e}");
    }
}

#[test]
fn hs_apply_is_additive() {
    let c = JacobiCoeffs::free_root_block(40);
    let f = bump(0.5, 1.5, 1.0).unwrap();
    let g = bump(2.5, 3.5, 0.7).unwrap();
    let fg = f.disjoint_sum(&g).unwrap();
    let cfg = HsConfig::default();
    let a = hs_apply(&f, &c, 2, &cfg).unwrap();
    let b = hs_apply(&g, &c, 2, &cfg).unwrap();
    let s = hs_apply(&fg, &c, 2, &cfg).unwrap();
    let dev = a.iter().zip(&b).zip(&s).map(|((x, y), z)| (x + y - z).norm()).fold(0.0, f64::max);
    assert!(dev < 1e-4, "{dev:e}");
}

#[test]
fn hs_kernel_is_symmetric() {
    let c = surrogate_block(40);
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let cfg = HsConfig::default();
    let col3 = hs_apply(&f, &c, 3, &cfg).unwrap();
    let col9 = hs_apply(&f, &c, 9, &cfg).unwrap();
    assert!((col3[8] - col9[2]).norm() < 1e-5);
}

#[test]
fn dbar_extension_matches_finite_differences_and_envelope() {
    let f = bump(1.0, 3.0, 1.0).unwrap();
    for n in [1usize, 2, 4] {
        let ext = |x: f64, y: f64| {
            let mut d = vec![0.0; n + 1];
            f.derivatives(x, &mut d);
            let mut s = C64::new(0.0, 0.0);
            let mut pw = C64::new(1.0, 0.0);
            for (r, dr) in d.iter().enumerate() {
                if r > 0 {
                    pw *= C64::new(0.0, y) / r as f64;
                }
                s += dr * pw;
            }
            s * cutoff(y / (1.0 + x * x).sqrt())
        };
        let mut derivs = vec![0.0; n + 2];
        for i in 1..20 {
            let x = 1.0 + i as f64 / 10.0;
            f.derivatives(x, &mut derivs);
            let jx = (1.0 + x * x).sqrt();
            for k in -39..=39 {
                let y = k as f64 / 20.0 * jx;
                let h = 1e-5;
                let fd = 0.5 * ((ext(x + h, y) - ext(x - h, y)) / (2.0 * h) + C64::i() * (ext(x, y + h) - ext(x, y - h)) / (2.0 * h));
                let w = dbar_extension(&derivs, n, x, y);
                assert!((w - fd).norm() < 1e-4 * (1.0 + fd.norm()), "n={n} x={x} y={y}: {w} vs {fd}");
                assert!(w.norm() <= dbar_envelope(&derivs, n, x, y) * (1.0 + 1e-12) + 1e-300);
            }
        }
    }
}

#[test]
fn library_examples() {
    let p = make_test_function(Kind::First, 0.5, Shape::Plateau { ramp: 0.4 }).unwrap();
    assert!(p.support.0 >= 0.5 && p.support.1 <= 3.5);
    assert!((p.sup_abs() - 1.0).abs() < 1e-12);
    assert_eq!(p.eval(0.49), 0.0);
    assert!(p.eval(p.x0.unwrap()) != 0.0);

    let m = mollifier(4).unwrap();
    assert!(m.support.0 >= 0.25 && m.support.1 <= 3.75);
    for i in 0..=300 {
        let x = 0.5 + 3.0 * i as f64 / 300.0;
        assert!((m.eval(x) - 1.0).abs() < 1e-12, "x={x}");
    }
    assert!(m.sup_abs() <= 1.0 + 1e-12);

    let s = make_test_function(Kind::Second, 0.4, Shape::Window { e0: 2.0, c: 0.5 }).unwrap();
    let g = bump(1.7, 2.3, 1.0).unwrap();
    for i in 0..=80 {
        let x = 1.6 + 0.8 * i as f64 / 80.0;
        assert!(s.eval(x).abs() >= 0.5);
        let h = g.eval(x) / s.eval(x);
        assert!((h * s.eval(x) - g.eval(x)).abs() < 1e-15);
    }
}

#[test]
fn inconsistent_windows_are_rejected() {
    let bad = [
        make_test_function(Kind::First, 1.5, Shape::Plateau { ramp: 0.1 }),
        make_test_function(Kind::First, 0.5, Shape::Bump { center: 0.6, half_width: 0.3 }),
        make_test_function(Kind::Second, 0.5, Shape::Window { e0: 0.8, c: 0.5 }),
        make_test_function(Kind::Second, 0.5, Shape::Window { e0: 2.0, c: 0.0 }),
        make_test_function(Kind::Second, 0.5, Shape::Plateau { ramp: 0.1 }),
        mollifier(1),
    ];
    for r in bad {
        assert!(matches!(r, Err(Error::Param(_))));
    }
}

#[test]
fn kernel_decay_on_free_block() {
    let c = JacobiCoeffs::free_root_block(200);
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let mut pairs = Vec::new();
    for j in [1usize, 100] {
        for i in 1..=200usize {
            if i.abs_diff(j) <= 64 {
                pairs.push((i, j));
            }
        }
    }
    let r = kernel_decay_check(&f, &c, 2, &pairs, 2, &HsConfig::default()).unwrap();
    assert!(r.c2_fit.is_finite() && r.stable, "{:?}", r.windows);
    assert_eq!(r.windows.last().unwrap().0, 64);
    assert!(r.hs_deviation < 1e-4, "{:e}", r.hs_deviation);
    let sup = f.sup_abs();
    for e in r.entries.iter().filter(|e| e.i == e.j) {
        assert!(e.lhs <= sup + 1e-12);
    }
}

#[test]
fn kernel_decay_envelope_on_surrogate() {
    let c = surrogate_block(200);
    let f = make_test_function(Kind::First, 0.5, Shape::Plateau { ramp: 0.5 }).unwrap();
    let k = 2;
    let mut near = Vec::new();
    let mut far = Vec::new();
    for j in [1usize, 9, 25, 61, 131] {
        for i in 1..=200usize {
            match i.abs_diff(j) {
                0..=32 => near.push((i, j)),
                33..=64 => far.push((i, j)),
                _ => {}
            }
        }
    }
    let fit = kernel_decay_check(&f, &c, k, &near, 0, &HsConfig::default()).unwrap();
    let check = kernel_decay_check(&f, &c, k, &far, 0, &HsConfig::default()).unwrap();
    for e in &check.entries {
        let bound = fit.c2_fit * fit.norm * (1.0 + (e.i.abs_diff(e.j) as f64).powi(2)).sqrt().powi(-(k as i32));
        assert!(e.lhs <= bound, "({}, {}) {} > {}", e.i, e.j, e.lhs, bound);
    }
}
