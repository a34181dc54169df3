//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sptree::decompose::{block_length, jacobi_coeffs, verify_equivalence, JacobiCoeffs};
use sptree::dynamics::{energy_integrals, escape_mass, time_average_profile, Method};
use sptree::fractal::{abel_fourier_integral, cantor_measure, dim_profile, geometric_deltas, local_dimension, uniform_measure};
use sptree::hsfc::{bump, eigen_apply, hs_apply, kernel_decay_check, make_test_function, mollifier, HsConfig, Kind, Shape};
use sptree::jacobi::{eigendecompose, kernel_bound_check, spectral_measure, SpectralMeasure};
use sptree::transfer::recursion_consistency;
use sptree::tree::{build_tree, SparseRule, TreeParams};
use sptree::C64;
use sptree_cli::cache::Cache;
use sptree_cli::config::RunConfig;
use sptree_cli::dynamics::{dynamics, Summary};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> JacobiCoeffs {
    let d = (0..n).map(|_| rng.random_range(-1.0..5.0)).collect();
    let b = (0..n - 1).map(|_| rng.random_range(0.1..2.0)).collect();
    JacobiCoeffs::new(d, b).unwrap()
}

fn delta1(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

fn tree_block(gamma: f64, positions: Vec<u64>, depth: usize, len: usize) -> JacobiCoeffs {
    let tree = build_tree(&TreeParams::new(gamma, positions, depth).unwrap()).unwrap();
    jacobi_coeffs(&tree, 1, len).unwrap()
}

fn rules() -> Vec<SparseRule> {
    vec![
        SparseRule::Paper,
        SparseRule::Explicit(vec![1, 3, 5]),
        SparseRule::Explicit(vec![2, 3, 4, 5, 6, 7]),
        SparseRule::Geometric { first: 2, ratio: 2 },
        SparseRule::Squaring { first: 2 },
    ]
}

fn c1_decomposition() -> Outcome {
    let start = Instant::now();
    let (mut trees, mut worst_eig, mut worst_off, mut largest) = (0, 0.0f64, 0.0f64, 0u64);
    for gamma in [1.0 / 3.0, 0.5] {
        for rule in rules() {
            for depth in 1..=8 {
                let tree = build_tree(&TreeParams::with_rule(gamma, &rule, depth).unwrap()).unwrap();
                if tree.vertex_count > 2000 {
                    continue;
                }
                let r = verify_equivalence(&tree).unwrap();
                worst_eig = worst_eig.max(r.eigen_distance);
                worst_off = worst_off.max(r.off_block);
                largest = largest.max(tree.vertex_count);
                trees += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_eig <= 1e-10 && worst_off <= 1e-10 && secs < 30.0,
        format!("{trees} trees up to {largest} vertices: spectral distance {worst_eig:.1e}, off-block {worst_off:.1e}, {secs:.1} s"),
    )
}

fn c2_integer_identity() -> Outcome {
    let (mut trees, mut blocks, mut failures) = (0, 0u64, 0usize);
    for gamma in [1.0 / 3.0, 0.5] {
        for rule in rules() {
            for depth in 1..=20 {
                let tree = match build_tree(&TreeParams::with_rule(gamma, &rule, depth).unwrap()) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
                let top = *tree.alpha.last().unwrap();
                if top > 2_000_000 {
                    continue;
                }
                trees += 1;
                for k in 1..=top {
                    let blk = jacobi_coeffs(&tree, k, block_length(&tree, k).unwrap()).unwrap();
                    failures += blk.eq41_failures().map_or(1, |f| f.len());
                    blocks += 1;
                }
            }
        }
    }
    outcome(failures == 0, format!("{blocks} blocks in {trees} trees, {failures} integer mismatches"))
}

fn c3_abel_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut blocks: Vec<JacobiCoeffs> = (0..6).map(|_| random_coeffs(&mut rng, 200)).collect();
    blocks.push(tree_block(0.5, vec![8, 24, 60, 130], 400, 200));
    let (mut worst_rel, mut worst_eig_mass, mut worst_quad_mass) = (0.0f64, 0.0f64, 0.0f64);
    for c in &blocks {
        let psi = delta1(200);
        for t in [1.0, 10.0, 100.0] {
            let e = time_average_profile(c, &psi, t, Method::Eigensum).unwrap();
            let q = time_average_profile(c, &psi, t, Method::Quadrature).unwrap();
            let diff: f64 = e.a.iter().zip(&q.a).map(|(x, y)| (x - y).abs()).sum();
            worst_rel = worst_rel.max(diff / e.a.iter().sum::<f64>());
            worst_eig_mass = worst_eig_mass.max(e.mass_error);
            worst_quad_mass = worst_quad_mass.max(q.mass_error);
        }
    }
    outcome(
        worst_rel <= 1e-6 && worst_eig_mass <= 1e-8 && worst_quad_mass <= 1e-4,
        format!(
            "{} blocks of 200 sites: profile l1 {worst_rel:.1e}, mass {worst_eig_mass:.1e} (eigensum) / {worst_quad_mass:.1e} (quadrature)",
            blocks.len()
        ),
    )
}

fn recursion_worst(blocks: &[JacobiCoeffs], z: C64) -> f64 {
    blocks.iter().map(|c| recursion_consistency(c, z, 100).map_or(f64::INFINITY, |r| r.max_rel_deviation)).fold(0.0, f64::max)
}

fn tree_blocks(trees: Vec<TreeParams>) -> Vec<JacobiCoeffs> {
    let mut blocks = Vec::new();
    for params in trees {
        let tree = build_tree(&params).unwrap();
        for k in [1, 2, *tree.alpha.last().unwrap()] {
            let len = block_length(&tree, k).unwrap().min(500);
            if len > 100 {
                blocks.push(jacobi_coeffs(&tree, k, len).unwrap());
            }
        }
    }
    blocks
}

fn c4_recursion() -> Outcome {
    let z = C64::new(2.0, 1.0 / 50.0);
    let mut blocks = vec![JacobiCoeffs::uniform(500, 2.0, 1.0), JacobiCoeffs::free_root_block(500)];
    let mut trees: Vec<TreeParams> =
        [0.5, 1.0 / 3.0, 0.25].iter().map(|&g| TreeParams::with_rule(g, &SparseRule::Paper, 600).unwrap()).collect();
    trees.push(TreeParams::new(0.5, vec![8, 24, 60, 130], 600).unwrap());
    trees.push(TreeParams::new(0.45, vec![16, 256], 600).unwrap());
    blocks.extend(tree_blocks(trees));
    let worst = recursion_worst(&blocks, z);

    // Reported only: forward propagation of the decaying solution amplifies rounding by the growth ratio.
    let steep = recursion_worst(&tree_blocks(vec![TreeParams::new(1.0 / 3.0, vec![4, 20, 90], 600).unwrap()]), z);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random: Vec<JacobiCoeffs> = (0..3).map(|_| random_coeffs(&mut rng, 500)).collect();
    let disordered = recursion_worst(&random, z);
    outcome(
        worst <= 1e-8,
        format!(
            "{} free and tree blocks of up to 500 sites at z = 2 + i/50: max relative deviation {worst:.1e} \
             (not gated: G=1/3 barriers at 4,20,90 {steep:.1e}, disordered random blocks {disordered:.1e})",
            blocks.len()
        ),
    )
}

fn c5_kernel_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut tuples, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    for draw in 0..120 {
        let c = if draw % 4 == 0 {
            tree_block(0.5, vec![8, 24, 60, 130], 400, rng.random_range(20..200))
        } else {
            let n = rng.random_range(10..200);
            random_coeffs(&mut rng, n)
        };
        let n = c.len();
        let (lo, hi) = c.gershgorin();
        let z = C64::new(rng.random_range(lo - 1.0..hi + 1.0), 10f64.powf(rng.random_range(-3.0..0.5)));
        let gamma = rng.random_range(0.01..0.99);
        let pairs: Vec<(usize, usize)> = (0..100).map(|_| (rng.random_range(1..=n), rng.random_range(1..=n))).collect();
        let r = kernel_bound_check(&c, z, gamma, &pairs).unwrap();
        tuples += pairs.len();
        violations += r.violations;
        worst = worst.max(r.worst_ratio);
    }
    outcome(violations == 0 && tuples >= 10_000, format!("{tuples} tuples, {violations} violations, worst lhs/rhs {worst:.3}"))
}

fn c6_functional_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut blocks = vec![JacobiCoeffs::free_root_block(60), tree_block(0.5, vec![8, 24, 60, 130], 400, 60)];
    blocks.extend((0..2).map(|_| random_coeffs(&mut rng, 60)));
    let library = [
        make_test_function(Kind::First, 0.25, Shape::Plateau { ramp: 0.5 }).unwrap(),
        make_test_function(Kind::First, 0.5, Shape::Plateau { ramp: 0.5 }).unwrap(),
        make_test_function(Kind::First, 0.25, Shape::Bump { center: 2.0, half_width: 1.5 }).unwrap(),
        make_test_function(Kind::First, 0.5, Shape::Bump { center: 1.5, half_width: 0.75 }).unwrap(),
        mollifier(4).unwrap(),
    ];
    let cfg = HsConfig::default();
    let mut worst = 0.0f64;
    for c in &blocks {
        let eig = eigendecompose(c).unwrap();
        for f in &library {
            for j in [1, 30] {
                let hs = hs_apply(f, c, j, &cfg).unwrap();
                let oracle = eigen_apply(f, &eig, j);
                worst = worst.max(hs.iter().zip(&oracle).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max));
            }
        }
    }
    let f = bump(1.0, 3.0, 1.0).unwrap();
    let mut stable = true;
    let mut spreads = Vec::new();
    for c in [JacobiCoeffs::free_root_block(200), tree_block(0.5, vec![8, 24, 60, 130], 400, 200)] {
        let pairs: Vec<(usize, usize)> =
            [1usize, 100].iter().flat_map(|&j| (1..=200usize).filter(move |i| i.abs_diff(j) <= 64).map(move |i| (i, j))).collect();
        let r = kernel_decay_check(&f, &c, 2, &pairs, 0, &cfg).unwrap();
        stable &= r.stable && r.windows.last().unwrap().0 == 64;
        let tail: Vec<f64> = r.windows.iter().filter(|w| w.0 >= sptree::hsfc::STABLE_FROM).map(|w| w.1).collect();
        spreads.push(tail.last().unwrap() / tail[0]);
    }
    outcome(
        worst <= 1e-4 && stable,
        format!("hs_apply vs eigen max error {worst:.1e} on 60-site blocks; C2 fit growth over windows 4..64: {spreads:.2?}"),
    )
}

fn c7_escape() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut failed) = (0, 0);
    for _ in 0..400 {
        let n = rng.random_range(2..60);
        let coeffs = random_coeffs(&mut rng, n);
        let psi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let measure = spectral_measure(&coeffs, &psi).unwrap();
        let (lo, hi) = measure.support().unwrap();
        let a = rng.random_range(lo - 0.5..hi);
        let b = a + rng.random_range(0.01..(hi - lo + 1.0));
        if measure.mass_in(a, b) <= 0.0 {
            continue;
        }
        let t = 10f64.powf(rng.random_range(-1.0..3.0));
        let e = energy_integrals(&measure, 1.0 / t, (a, b)).unwrap();
        let prof = time_average_profile(&coeffs, &psi, t, Method::Eigensum).unwrap();
        if escape_mass(&prof, e.m_t.ceil() as usize, None) < e.a / 2.0 {
            failed += 1;
        }
        checked += 1;
    }
    let mut fits = Vec::new();
    let mut max_ratio = 0.0f64;
    for c in [random_coeffs(&mut rng, 400), tree_block(0.5, vec![8, 24, 60, 130], 600, 400)] {
        let m = spectral_measure(&c, &delta1(400)).unwrap();
        let mut run_max = 0.0f64;
        let mut first = None;
        for k in 0..=12 {
            let eps = 10f64.powf(-1.0 - k as f64 / 4.0);
            let e = energy_integrals(&m, eps, (1.0, 3.0)).unwrap();
            max_ratio = max_ratio.max(e.j / e.i);
            run_max = run_max.max(e.j / e.i);
            first.get_or_insert(run_max);
        }
        fits.push(run_max / first.unwrap());
    }
    let stable = fits.iter().all(|&s| s <= 2.0);
    outcome(
        failed == 0 && checked >= 200 && stable,
        format!(
            "escape bound held on {}/{checked} sweeps; J/I max {max_ratio:.3} (2/pi = {:.3}), C3 fit growth over eps in [1e-4, 1e-1]: {fits:.2?}",
            checked - failed,
            2.0 / PI
        ),
    )
}

struct Run {
    name: String,
    summary: Summary,
    secs: f64,
}

fn e2e(name: &str, config: &str) -> Run {
    let cfg = RunConfig::from_json(config).unwrap();
    let start = Instant::now();
    let out = dynamics(&cfg, &Cache::disabled()).unwrap_or_else(|e| panic!("{name}: {e}"));
    Run { name: name.into(), summary: out.summary, secs: start.elapsed().as_secs_f64() }
}

fn beta(run: &Run) -> f64 {
    run.summary.betas[0].beta_hat
}

const FIRST_KIND: &str = r#""state": {"kind": "first_kind", "nu": 0.25, "center": 2.0, "half_width": 1.5}, "window_nu": 0.5"#;

fn transport_runs() -> Vec<Run> {
    let bound = r#"{"tree": {"gamma": 0.5, "depth": 4},
        "operator": {"kind": "explicit", "d": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25],
                     "b": [0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3]},
        "t_grid": {"t_min": 1, "t_max": 10000, "points": 25}, "p": [2], "method": "eigensum"}"#;
    let free = |size: &str| {
        format!(
            r#"{{"tree": {{"gamma": 0.5, "depth": 4}}, "operator": {{"kind": "free", "size": {size}}}, {FIRST_KIND},
            "t_grid": {{"t_min": 10, "t_max": 10000, "points": 31}}, "p": [2]}}"#
        )
    };
    let surrogate = |gamma: f64| {
        format!(
            r#"{{"tree": {{"gamma": {gamma}, "rule": {{"explicit": [16, 256]}}, "depth": 400}},
            "operator": {{"kind": "truncated_free", "cut": 257}}, {FIRST_KIND},
            "t_grid": {{"t_min": 1, "t_max": 65536, "points": 49}}, "p": [2]}}"#
        )
    };
    vec![
        e2e("bound state", bound),
        e2e("free N=1e5", &free("100000")),
        e2e("free half-line", &free("null")),
        e2e("surrogate G=0.5", &surrogate(0.5)),
        e2e("surrogate G=0.45", &surrogate(0.45)),
        e2e("surrogate G=0.4", &surrogate(0.4)),
    ]
}

fn c8_transport(runs: &[Run]) -> Outcome {
    let secs: f64 = runs.iter().map(|r| r.secs).sum();
    let b: Vec<f64> = runs.iter().map(beta).collect();
    let bound_ok = b[0].abs() <= 0.02;
    let free_ok = (b[1] - 1.0).abs() <= 0.05;
    let half_ok = (b[2] - 1.0).abs() <= 0.05;
    let window_ok = b[3] > 0.05 && b[3] < 0.95;
    let decreasing = b[3] > b[4] && b[4] > b[5];
    let env = runs[3].summary.envelopes.first();
    let coverage = env.map_or(0.0, |e| e.coverage);
    let octaves = env.and_then(|e| e.crossover_octaves).unwrap_or(f64::NAN);
    let env_ok = coverage >= 0.95;
    let cross_ok = octaves.abs() <= 0.5;
    let pass = bound_ok && free_ok && half_ok && window_ok && decreasing && env_ok && cross_ok && secs <= 600.0;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    outcome(
        pass,
        format!(
            "bound {:.3} [{}]; free N=1e5 {:.3} [{}]; free half-line {:.3} [{}]; surrogate G=1/2 {:.3} [{}], G=0.45 {:.3}, G=0.4 {:.3} decreasing [{}]; \
             envelope coverage {:.0}% [{}]; crossover {:+.2} octaves from L_N^A [{}]; {secs:.0} s",
            b[0],
            mark(bound_ok),
            b[1],
            mark(free_ok),
            b[2],
            mark(half_ok),
            b[3],
            mark(window_ok),
            b[4],
            b[5],
            mark(decreasing),
            100.0 * coverage,
            mark(env_ok),
            octaves,
            mark(cross_ok)
        ),
    )
}

/// ∫₀^∞ e^{−t/T} |Σ c_i e^{−itλ_i}|² dt by 8-point Gauss–Legendre panels on [0, 60T].
fn abel_by_time_quadrature(atoms: &[(f64, f64)], fvals: &[f64], t: f64) -> f64 {
    let nodes = [
        (-0.9602898564975363, 0.1012285362903763),
        (-0.7966664774136267, 0.2223810344533745),
        (-0.5255324099163290, 0.3137066458778873),
        (-0.1834346424956498, 0.3626837833783620),
        (0.1834346424956498, 0.3626837833783620),
        (0.5255324099163290, 0.3137066458778873),
        (0.7966664774136267, 0.2223810344533745),
        (0.9602898564975363, 0.1012285362903763),
    ];
    let spread = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max) * 2.0;
    let end = 60.0 * t;
    let panels = ((end * (spread + 1.0)).ceil() as usize).max(200) * 2;
    let h = end / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let c = (k as f64 + 0.5) * h;
        for (x, w) in nodes {
            let time = c + 0.5 * h * x;
            let (mut re, mut im) = (0.0, 0.0);
            for ((lam, wt), f) in atoms.iter().zip(fvals) {
                re += f * wt * (time * lam).cos();
                im -= f * wt * (time * lam).sin();
            }
            total += 0.5 * h * w * (-time / t).exp() * (re * re + im * im);
        }
    }
    total
}

fn c9_dimensions(runs: &[Run]) -> Outcome {
    let leb = uniform_measure(4000, 0.0, 4.0, 1.0).unwrap();
    let lp = dim_profile(&leb, 400, &geometric_deltas(1e-2, 1e-1, 16)).unwrap();
    let leb_ok = (lp.dim_lower - 1.0).abs() <= 0.05 && (lp.dim_upper - 1.0).abs() <= 0.05;

    let atom = SpectralMeasure::from_atoms(vec![(1.3, 0.7)]).unwrap();
    let atom_dim = local_dimension(&atom, 1.3, &geometric_deltas(1e-6, 1e-1, 12)).unwrap();
    let atom_ok = atom_dim == 0.0;

    let target = 2f64.ln() / 3f64.ln();
    let cantor = cantor_measure(8, 0.0, 1.0).unwrap();
    let cp = dim_profile(&cantor, 256, &geometric_deltas(3f64.powi(-7), 3f64.powi(-1), 7)).unwrap();
    let cantor_ok = (cp.dim_lower - target).abs() <= 0.05 && (cp.dim_upper - target).abs() <= 0.05;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fourier_err = 0.0f64;
    for _ in 0..12 {
        let n = rng.random_range(1..=50);
        let atoms: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..4.0), rng.random_range(0.01..1.0))).collect();
        let m = SpectralMeasure::from_atoms(atoms).unwrap();
        let fvals: Vec<f64> = (0..m.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for t in [0.5, 3.0, 20.0] {
            let closed = abel_fourier_integral(&m.atoms, &fvals, t);
            let direct = abel_by_time_quadrature(&m.atoms, &fvals, t);
            fourier_err = fourier_err.max((closed - direct).abs() / closed);
        }
    }
    let fourier_ok = fourier_err <= 1e-8;

    let mut proxy_ok = true;
    let mut proxies = Vec::new();
    for r in runs {
        match (&r.summary.dimension, r.summary.betas.first()) {
            (Some(d), Some(b)) => {
                proxy_ok &= d.dim_upper <= b.beta_hat + 0.1;
                proxies.push(format!("{} {:.2}<={:.2}", r.name, d.dim_upper, b.beta_hat + 0.1));
            }
            _ => {
                proxy_ok = false;
                proxies.push(format!("{} missing", r.name));
            }
        }
    }
    outcome(
        leb_ok && atom_ok && cantor_ok && fourier_ok && proxy_ok,
        format!(
            "Lebesgue [{:.3}, {:.3}]; atom {atom_dim}; Cantor [{:.3}, {:.3}] vs {target:.3}; Fourier closed form rel. error {fourier_err:.1e}; dim proxy: {}",
            lp.dim_lower,
            lp.dim_upper,
            cp.dim_lower,
            cp.dim_upper,
            proxies.join(", ")
        ),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"tree": {"gamma": 0.5, "rule": {"explicit": [8, 64]}, "depth": 120},
            "operator": {"kind": "truncated_free", "cut": 65},
            "state": {"kind": "first_kind", "nu": 0.25, "center": 2.0, "half_width": 1.5},
            "t_grid": {"t_min": 1, "t_max": 4096, "points": 25}, "p": [1, 2, 4]}"#,
    )
    .unwrap();
    let cache = dir.path().join("cache");
    let run = |name: &str, workers: &str, cached: bool| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sptree"));
        cmd.args(["dynamics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers, "--seed", "11"]);
        if cached {
            cmd.env("SPTREE_CACHE_DIR", &cache);
        } else {
            cmd.env_remove("SPTREE_CACHE_DIR");
        }
        let status = cmd.output().unwrap().status.code();
        (out, status)
    };
    let runs = [run("cold", "8", true), run("warm", "1", true), run("again", "3", false)];
    let read = |p: &Path, f: &str| fs::read(p.join(f)).unwrap_or_default();
    let codes_ok = runs.iter().all(|(_, c)| c.is_some_and(|c| c <= 1));
    let csv_same = ["profile.csv", "moments.csv"]
        .iter()
        .all(|f| runs[1..].iter().all(|(p, _)| read(p, f) == read(&runs[0].0, f) && !read(p, f).is_empty()));
    let summary_same = runs[1..].iter().all(|(p, _)| read(p, "summary.json") == read(&runs[0].0, "summary.json"));
    let entries = fs::read_dir(&cache).map(|d| d.count()).unwrap_or(0);
    outcome(
        codes_ok && csv_same && summary_same && entries == 25,
        format!("CSV identical across 3 runs: {csv_same}; cold vs cached summary identical: {summary_same}; {entries} cache entries"),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "decomposition equivalence", c1_decomposition()),
        (2, "integer coefficient identity", c2_integer_identity()),
        (3, "Abel/resolvent identity", c3_abel_identity()),
        (4, "resolvent/transfer consistency", c4_recursion()),
        (5, "resolvent kernel bound", c5_kernel_bound()),
        (6, "functional calculus", c6_functional_calculus()),
        (7, "escape threshold and J/I", c7_escape()),
    ];
    let runs = transport_runs();
    results.push((8, "transport exponents", c8_transport(&runs)));
    results.push((9, "dimension toolkit", c9_dimensions(&runs)));
    results.push((10, "CLI determinism", c10_determinism()));
    for (n, name, o) in &results {
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} of {} criteria pass ({:.0} s)", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
