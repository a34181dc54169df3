use crate::config::{Fault, RunConfig};
use crate::{format, output_dir, tree_params, verdict_code, Failure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sptree::decompose::{block_length, distinct_blocks, jacobi_coeffs, verify_equivalence_with_limit, JacobiCoeffs};
use sptree::hsfc::{bump, kernel_decay_check, HsConfig};
use sptree::jacobi::{eigenvalues, kernel_bound_check_with_spectrum, shift_ops_check};
use sptree::transfer::recursion_consistency;
use sptree::tree::build_tree;
use sptree::C64;

const EQUIVALENCE_TOL: f64 = 1e-10;
const PAIRS_PER_POINT: usize = 100;
/// Largest |i − j| in the functional-calculus decay check.
const DECAY_REACH: usize = 64;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub seed: u64,
    pub block: u64,
    pub checks: Vec<Check>,
}

fn failed(name: &'static str, e: sptree::Error) -> Check {
    Check { name, pass: false, detail: json!({ "error": e.to_string() }) }
}

pub fn verify(cfg: &RunConfig) -> Result<VerifyReport, Failure> {
    let params = tree_params(cfg)?;
    let tree = build_tree(&params)?;
    let k = cfg.block;
    let len = block_length(&tree, k)?;
    let mut checks = Vec::new();

    let mut bad_blocks = Vec::new();
    let blocks = distinct_blocks(&tree)?;
    for (blk, _) in &blocks {
        let mut blk = blk.clone();
        if cfg.fault_injection == Some(Fault::Eq41Sign) {
            if let Some(e) = blk.exact.as_mut() {
                e.d[0] = -e.d[0];
            }
            blk.d[0] = -blk.d[0];
        }
        if let Some(sites) = blk.eq41_failures().filter(|s| !s.is_empty()) {
            bad_blocks.push(json!({ "k": blk.k, "sites": sites }));
        }
    }
    checks.push(Check {
        name: "integer_identity",
        pass: bad_blocks.is_empty(),
        detail: json!({ "distinct_blocks": blocks.len(), "failures": bad_blocks }),
    });

    let eq = verify_equivalence_with_limit(&tree, cfg.tolerances.dense_limit)?;
    checks.push(Check {
        name: "unitary_equivalence",
        pass: eq.eigen_distance <= EQUIVALENCE_TOL && eq.off_block <= EQUIVALENCE_TOL,
        detail: json!({
            "vertex_count": eq.vertex_count,
            "blocks": eq.blocks,
            "eigen_distance": eq.eigen_distance,
            "off_block": eq.off_block,
            "in_block": eq.in_block,
            "orthogonality": eq.orthogonality,
        }),
    });

    let sites = len.min(cfg.verify.block_sites);
    let blk = jacobi_coeffs(&tree, k, sites)?;
    checks.push(shift_check(&blk));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    checks.push(kernel_bound_sweep(&blk, cfg.verify.kernel_tuples, &mut rng));

    let rec_sites = len.min(cfg.verify.block_sites.max(cfg.verify.recursion_n));
    let rblk = jacobi_coeffs(&tree, k, rec_sites)?;
    let z = C64::new(cfg.verify.recursion_z[0], cfg.verify.recursion_z[1]);
    let n_max = cfg.verify.recursion_n.min(rec_sites);
    checks.push(match recursion_consistency(&rblk, z, n_max) {
        Ok(r) => Check {
            name: "resolvent_transfer_consistency",
            pass: r.max_rel_deviation <= cfg.tolerances.recursion,
            detail: json!({ "sites": rec_sites, "n_max": n_max, "z": [z.re, z.im], "max_rel_deviation": r.max_rel_deviation }),
        },
        Err(e) => failed("resolvent_transfer_consistency", e),
    });

    let hblk = jacobi_coeffs(&tree, k, len.min(cfg.verify.hs_sites))?;
    checks.push(decay_check(&hblk, cfg.verify.hs_k, cfg.tolerances.hs));

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { pass, seed: cfg.seed, block: k, checks })
}

fn shift_check(blk: &JacobiCoeffs) -> Check {
    let n = blk.len();
    let support = (n - 1).min(30);
    let f: Vec<f64> = (0..n).map(|i| if i < support { 1.0 / (1.0 + i as f64) } else { 0.0 }).collect();
    let scale = 1.0 + blk.d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for beta in [0.5, 1.0, 1.7] {
        match shift_ops_check(blk, beta, &f) {
            Ok(r) => worst = worst.max(r.max_deviation()),
            Err(e) => return failed("shift_operator_identities", e),
        }
    }
    Check {
        name: "shift_operator_identities",
        pass: worst <= 1e-9 * scale,
        detail: json!({ "sites": n, "max_deviation": worst, "threshold": 1e-9 * scale }),
    }
}

fn kernel_bound_sweep(blk: &JacobiCoeffs, tuples: usize, rng: &mut ChaCha8Rng) -> Check {
    let name = "resolvent_kernel_bound";
    let spectrum = match eigenvalues(blk) {
        Ok(s) => s,
        Err(e) => return failed(name, e),
    };
    let n = blk.len();
    let (lo, hi) = blk.gershgorin();
    let points = tuples.div_ceil(PAIRS_PER_POINT);
    let draws: Vec<(C64, f64, Vec<(usize, usize)>)> = (0..points)
        .map(|_| {
            let z = C64::new(rng.random_range(lo - 1.0..hi + 1.0), 10f64.powf(rng.random_range(-3.0..0.0)));
            let gamma = rng.random_range(0.05..0.95);
            let pairs = (0..PAIRS_PER_POINT).map(|_| (rng.random_range(1..=n), rng.random_range(1..=n))).collect();
            (z, gamma, pairs)
        })
        .collect();
    let results: Vec<_> = draws
        .par_iter()
        .map(|(z, gamma, pairs)| kernel_bound_check_with_spectrum(blk, &spectrum, *z, *gamma, pairs))
        .collect();
    let (mut violations, mut worst) = (0usize, 0.0f64);
    for r in results {
        match r {
            Ok(r) => {
                violations += r.violations;
                worst = worst.max(r.worst_ratio);
            }
            Err(e) => return failed(name, e),
        }
    }
    Check {
        name,
        pass: violations == 0,
        detail: json!({ "sites": n, "tuples": points * PAIRS_PER_POINT, "violations": violations, "worst_ratio": worst }),
    }
}

fn decay_check(blk: &JacobiCoeffs, k: u32, tol: f64) -> Check {
    let name = "functional_calculus_decay";
    let n = blk.len();
    let f = match bump(1.0, 3.0, 1.0) {
        Ok(f) => f,
        Err(e) => return failed(name, e),
    };
    let mut pairs = Vec::new();
    for j in [1, n.div_ceil(2)] {
        for i in 1..=n {
            if i.abs_diff(j) <= DECAY_REACH {
                pairs.push((i, j));
            }
        }
    }
    match kernel_decay_check(&f, blk, k, &pairs, 2, &HsConfig::default()) {
        Ok(r) => Check {
            name,
            pass: r.stable && r.hs_deviation <= tol,
            detail: json!({
                "sites": n,
                "k": k,
                "c2_fit": r.c2_fit,
                "windows": r.windows,
                "stable": r.stable,
                "hs_deviation": r.hs_deviation,
            }),
        },
        Err(e) => failed(name, e),
    }
}

pub fn run(cfg: &RunConfig) -> Result<i32, Failure> {
    let report = verify(cfg)?;
    let dir = output_dir(cfg)?;
    format::write_json(&dir.join("verify.json"), &report)?;
    for c in &report.checks {
        log::info!("{}: {}", c.name, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(verdict_code(report.pass))
}
