use crate::cache::{self, Cache};
use crate::config::{MethodChoice, OperatorSpec, RunConfig, StateSpec};
use crate::format::{self, Cell};
use crate::{output_dir, tree_params, verdict_code, Failure};
use serde::Serialize;
use sptree::decompose::{block_length, jacobi_coeffs, JacobiCoeffs};
use sptree::dynamics::{
    beta_estimate, bound_envelopes, filtered_state, model_moments, moment, time_average_profile_with, HalfLineModel,
    Method, MomentCurve, MomentSample, TAIL_FLAG,
};
use sptree::fractal::{geometric_deltas, smoothed_dim_profile};
use sptree::hsfc::{make_test_function, Kind, Shape};
use sptree::jacobi::truncated_free;
use sptree::tree::{build_tree, TreeParams};
use sptree::{Error, C64};
use std::path::PathBuf;

/// Bump in the cache key whenever the engine's numbers change.
const ENGINE_TAG: &[u8] = b"model_moments/1";
/// Quadrature profiles costing more node-site products than this are skipped.
const PROFILE_WORK: f64 = 4e9;
/// Largest sampling grid for the dimension proxy.
const DIM_GRID_LIMIT: f64 = 5e7;
const DIM_RADII: usize = 16;
const DIM_MAX_RADIUS: f64 = 0.1;

#[derive(Debug, Serialize)]
pub struct OperatorInfo {
    pub kind: &'static str,
    pub head_sites: usize,
    /// None on the half-line.
    pub size: Option<usize>,
    pub state_sites: usize,
    pub norm_sq: f64,
    pub energy_window: Option<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct BetaSummary {
    pub p: u32,
    pub beta_hat: f64,
    pub beta_upper: f64,
    pub log_ratio: f64,
    pub target: Option<f64>,
    /// T range of the trailing half used for beta_hat.
    pub validity_window: (f64, f64),
}

#[derive(Debug, Serialize)]
pub struct DimensionSummary {
    pub dim_lower: f64,
    pub dim_upper: f64,
    pub radii: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Serialize)]
pub struct DimCheck {
    pub p: u32,
    pub beta_hat: f64,
    pub dim_upper: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct EnvelopeSummary {
    pub p: u32,
    pub barrier: usize,
    pub l_n: f64,
    /// [L_N/4, L_N^{1/Γ}].
    pub validity_window: (f64, f64),
    pub points: usize,
    pub a_exp: f64,
    pub pivot: f64,
    pub q_structural: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub coverage: f64,
    pub crossover: Option<f64>,
    pub crossover_octaves: Option<f64>,
    /// Coverage and crossover both within tolerance.
    pub sandwich: bool,
}

#[derive(Debug, Serialize)]
pub struct ProfileSummary {
    pub t: f64,
    pub method: &'static str,
    pub mass_error: f64,
    /// Σ|a_eigensum − a_quadrature| / Σ a_eigensum in `both` mode.
    pub discrepancy: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub operator: OperatorInfo,
    pub method: MethodChoice,
    pub t_range: (f64, f64),
    pub p: Vec<u32>,
    pub betas: Vec<BetaSummary>,
    pub dimension: Option<DimensionSummary>,
    pub dim_checks: Vec<DimCheck>,
    pub envelopes: Vec<EnvelopeSummary>,
    pub profile: Option<ProfileSummary>,
    /// Largest |Σa − ‖ψ‖²|/‖ψ‖² over the moment sweep.
    pub mass_error: f64,
    /// max relative moment deviation between the two methods in `both` mode.
    pub method_deviation: Option<f64>,
    pub warnings: Vec<String>,
    pub assertions: Vec<String>,
    pub pass: bool,
}

pub struct Outputs {
    pub summary: Summary,
    pub profile: Vec<(usize, f64)>,
    /// (T, p, moment, local slope).
    pub moments: Vec<(f64, u32, f64, f64)>,
}

fn operator(cfg: &RunConfig) -> Result<(HalfLineModel, Option<TreeParams>, &'static str), Failure> {
    let from_tree = |sites: Option<usize>| -> Result<(JacobiCoeffs, TreeParams, usize), Failure> {
        let params = tree_params(cfg)?;
        let tree = build_tree(&params)?;
        let len = block_length(&tree, cfg.block)?;
        let want = sites.unwrap_or(len);
        if want > len {
            return Err(Failure::Config(crate::config::ConfigError {
                field: "operator.cut".into(),
                message: format!("block {} has {len} sites, {want} needed", cfg.block),
            }));
        }
        Ok((jacobi_coeffs(&tree, cfg.block, want)?, params, len))
    };
    Ok(match &cfg.operator {
        OperatorSpec::Block => {
            let (c, params, len) = from_tree(None)?;
            (HalfLineModel::new(c, Some(len))?, Some(params), "block")
        }
        OperatorSpec::TruncatedFree { cut, size } => {
            let (c, params, _) = from_tree(Some(cut + 1))?;
            let tf = truncated_free(&c, *cut, cut + 1)?;
            (HalfLineModel::from_truncated(&tf, *size)?, Some(params), "truncated_free")
        }
        OperatorSpec::Free { size } => (HalfLineModel::free(*size), None, "free"),
        OperatorSpec::Explicit { d, b } => {
            let c = if b.iter().all(|&x| x == 0.0) {
                JacobiCoeffs::diagonal(d.clone())?
            } else {
                JacobiCoeffs::new(d.clone(), b.clone())?
            };
            let n = c.len();
            (HalfLineModel::new(c, Some(n))?, None, "explicit")
        }
    })
}

fn state(cfg: &RunConfig, model: &HalfLineModel) -> Result<(Vec<f64>, Option<(f64, f64)>), Failure> {
    let f = match cfg.state {
        StateSpec::Delta1 => return Ok((vec![1.0], None)),
        StateSpec::FirstKind { nu, center, half_width } => {
            make_test_function(Kind::First, nu, Shape::Bump { center, half_width })?
        }
        StateSpec::SecondKind { e0, nu, c } => make_test_function(Kind::Second, nu, Shape::Window { e0, c })?,
    };
    let psi = filtered_state(model, &f, cfg.tolerances.state_tol)?;
    Ok((psi, Some((cfg.window_nu, 4.0 - cfg.window_nu))))
}

fn spectral_range(model: &HalfLineModel) -> (f64, f64) {
    let (lo, hi) = model.head.gershgorin();
    (lo.min(0.0), hi.max(4.0))
}

fn engine_key(model: &HalfLineModel, psi: &[f64], ps: &[u32], window: Option<(f64, f64)>, t: f64) -> String {
    let size = model.size.map_or(u64::MAX, |s| s as u64).to_le_bytes();
    let ps: Vec<u8> = ps.iter().flat_map(|p| p.to_le_bytes()).collect();
    let w = window.map_or(vec![f64::NAN, f64::NAN], |(a, b)| vec![a, b]);
    cache::key(&[
        ENGINE_TAG,
        &cache::f64_bytes(&model.head.d),
        &cache::f64_bytes(&model.head.b),
        &size,
        &cache::f64_bytes(psi),
        &ps,
        &cache::f64_bytes(&w),
        &t.to_le_bytes(),
    ])
}

fn engine_sweep(
    model: &HalfLineModel,
    psi: &[f64],
    ps: &[u32],
    window: Option<(f64, f64)>,
    ts: &[f64],
    cache: &Cache,
    warnings: &mut Vec<String>,
) -> Result<Vec<MomentSample>, Failure> {
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let key = engine_key(model, psi, ps, window, t);
        if let Some(v) = cache.load(&key).filter(|v| v.len() == 3 + ps.len() && v[0].to_bits() == t.to_bits()) {
            out.push(MomentSample { t, mass: v[1], edge: v[2], moments: v[3..].to_vec() });
            continue;
        }
        match model_moments(model, psi, t, ps, window) {
            Ok(s) => {
                let mut v = vec![s.t, s.mass, s.edge];
                v.extend_from_slice(&s.moments);
                if let Err(e) = cache.store(&key, &v) {
                    log::warn!("cache write failed: {e}");
                }
                out.push(s);
            }
            Err(Error::Quadrature(m)) => warnings.push(format!("quadrature at T = {t}: {m}")),
            Err(e) => return Err(e.into()),
        }
        log::debug!("T = {t} done");
    }
    Ok(out)
}

/// Eigensum moments on a finite model, one eigendecomposition per T.
fn eigensum_sweep(
    coeffs: &JacobiCoeffs,
    psi: &[f64],
    ps: &[u32],
    ts: &[f64],
    limit: usize,
    warnings: &mut Vec<String>,
) -> Result<Vec<MomentSample>, Failure> {
    let mut tail_flagged = false;
    ts.iter()
        .map(|&t| {
            let prof = time_average_profile_with(coeffs, psi, t, Method::Eigensum, None, limit)?;
            let reports: Vec<_> = ps.iter().map(|&p| moment(&prof, p as f64)).collect();
            if !tail_flagged && reports.iter().any(|r| r.tail_warning) {
                warnings.push(format!("eigensum profile reaches the truncation edge at T = {t}"));
                tail_flagged = true;
            }
            let mass = prof.a.iter().sum();
            Ok(MomentSample { t, moments: reports.iter().map(|r| r.value).collect(), mass, edge: *prof.a.last().unwrap() })
        })
        .collect()
}

fn local_slopes(samples: &[(f64, f64)]) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return f64::NAN;
            }
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (samples[b].1.ln() - samples[a].1.ln()) / (samples[b].0.ln() - samples[a].0.ln())
        })
        .collect()
}

pub fn dynamics(cfg: &RunConfig, cache: &Cache) -> Result<Outputs, Failure> {
    let (model, params, kind) = operator(cfg)?;
    let (psi, window) = state(cfg, &model)?;
    let norm_sq: f64 = psi.iter().map(|x| x * x).sum();
    let ts = cfg.t_grid.values();
    let ps = cfg.p.clone();
    let tol = &cfg.tolerances;
    let mut warnings = Vec::new();
    let mut assertions = Vec::new();

    let finite = model.size.map(|n| (n, model.leading_block(n)));
    let padded = |n: usize| {
        let mut v = psi.clone();
        v.resize(n, 0.0);
        v
    };

    let wants_eigensum = matches!(cfg.method, MethodChoice::Eigensum | MethodChoice::Both);
    let wants_engine = matches!(cfg.method, MethodChoice::Quadrature | MethodChoice::Both);
    let eig_samples = if wants_eigensum {
        let Some((n, coeffs)) = &finite else {
            return Err(Failure::Config(crate::config::ConfigError {
                field: "method".into(),
                message: "eigensum needs a finite operator".into(),
            }));
        };
        Some(eigensum_sweep(coeffs, &padded(*n), &ps, &ts, tol.eigen_limit, &mut warnings)?)
    } else {
        None
    };
    let engine_samples =
        if wants_engine { Some(engine_sweep(&model, &psi, &ps, window, &ts, cache, &mut warnings)?) } else { None };

    let mut method_deviation = None;
    if let (Some(e), Some(q)) = (&eig_samples, &engine_samples) {
        let mut worst = 0.0f64;
        for se in e {
            if let Some(sq) = q.iter().find(|s| s.t == se.t) {
                for (a, b) in se.moments.iter().zip(&sq.moments) {
                    worst = worst.max((a - b).abs() / a.abs());
                }
            }
        }
        if worst > tol.method_agreement {
            assertions.push(format!("moment deviation between methods {worst:e} > {:e}", tol.method_agreement));
        }
        method_deviation = Some(worst);
    }
    let samples = eig_samples.or(engine_samples).unwrap_or_default();
    let mass_error = samples.iter().map(|s| (s.mass - norm_sq).abs() / norm_sq).fold(0.0, f64::max);
    if let Some(s) = samples.iter().find(|s| s.edge > TAIL_FLAG * norm_sq) {
        warnings.push(format!("mass reaches the truncation edge from T = {} on", s.t));
    }

    let gamma = params.as_ref().map(|p| p.gamma);
    let mut curves = Vec::new();
    let mut moments_rows = Vec::new();
    for (j, &p) in ps.iter().enumerate() {
        let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.moments[j])).collect();
        for ((t, m), slope) in pts.iter().zip(local_slopes(&pts)) {
            moments_rows.push((*t, p, *m, slope));
        }
        match MomentCurve::new(p as f64, pts) {
            Ok(c) => curves.push((p, c)),
            Err(e) => warnings.push(format!("p = {p}: {e}")),
        }
    }

    let mut betas = Vec::new();
    for (p, c) in &curves {
        match beta_estimate(c, gamma) {
            Ok(b) => betas.push(BetaSummary {
                p: *p,
                beta_hat: b.beta_hat,
                beta_upper: b.beta_upper,
                log_ratio: b.log_ratio,
                target: b.target,
                validity_window: b.window,
            }),
            Err(e) => warnings.push(format!("beta for p = {p}: {e}")),
        }
    }

    let t_max = cfg.t_grid.t_max;
    let dimension = dimension_proxy(&model, &psi, window, t_max, tol.dim_samples, &mut warnings)?;
    let mut dim_checks = Vec::new();
    if let Some(d) = &dimension {
        for b in &betas {
            let pass = d.dim_upper <= b.beta_hat + tol.dim_slack;
            if !pass {
                assertions.push(format!("dim_upper {} > beta_hat {} + {} at p = {}", d.dim_upper, b.beta_hat, tol.dim_slack, b.p));
            }
            dim_checks.push(DimCheck { p: b.p, beta_hat: b.beta_hat, dim_upper: d.dim_upper, pass });
        }
    }

    let envelopes = match &params {
        Some(params) if cfg.block == 1 => envelopes(cfg, params, &model, &curves, &mut warnings)?,
        Some(_) => {
            warnings.push("envelopes are evaluated for block 1 only".into());
            Vec::new()
        }
        None => Vec::new(),
    };

    let mut profile_rows = Vec::new();
    let profile = match &finite {
        Some((n, coeffs)) if *n <= tol.profile_limit => {
            let t = cfg.t_grid.profile_t.unwrap_or(t_max);
            let psi_n = padded(*n);
            let range = window.unwrap_or_else(|| spectral_range(&model));
            let eps = 0.5 / t;
            let work = 8.0 * ((range.1 - range.0) / eps + 40.0) * *n as f64;
            let quad = if wants_engine && work <= PROFILE_WORK {
                Some(time_average_profile_with(coeffs, &psi_n, t, Method::Quadrature, window, tol.eigen_limit)?)
            } else {
                if wants_engine {
                    warnings.push(format!("quadrature profile at T = {t} skipped: {work:.2e} node-site products"));
                }
                None
            };
            let eig = if wants_eigensum {
                Some(time_average_profile_with(coeffs, &psi_n, t, Method::Eigensum, None, tol.eigen_limit)?)
            } else {
                None
            };
            let discrepancy = match (&eig, &quad) {
                (Some(e), Some(q)) => {
                    let num: f64 = e.a.iter().zip(&q.a).map(|(x, y)| (x - y).abs()).sum();
                    let d = num / e.a.iter().sum::<f64>();
                    if d > tol.method_agreement {
                        assertions.push(format!("profile discrepancy {d:e} > {:e}", tol.method_agreement));
                    }
                    Some(d)
                }
                _ => None,
            };
            match eig.or(quad) {
                Some(prof) => {
                    profile_rows = prof.a.iter().enumerate().map(|(i, &a)| (i + 1, a)).collect();
                    let method = if prof.method == Method::Eigensum { "eigensum" } else { "quadrature" };
                    Some(ProfileSummary { t, method, mass_error: prof.mass_error, discrepancy })
                }
                None => None,
            }
        }
        Some((n, _)) => {
            warnings.push(format!("profile skipped: {n} sites exceed profile_limit"));
            None
        }
        None => {
            warnings.push("profile skipped: half-line operator".into());
            None
        }
    };

    let pass = assertions.is_empty();
    let summary = Summary {
        operator: OperatorInfo {
            kind,
            head_sites: model.head.len(),
            size: model.size,
            state_sites: psi.len(),
            norm_sq,
            energy_window: window,
        },
        method: cfg.method,
        t_range: (cfg.t_grid.t_min, t_max),
        p: ps,
        betas,
        dimension,
        dim_checks,
        envelopes,
        profile,
        mass_error,
        method_deviation,
        warnings,
        assertions,
        pass,
    };
    Ok(Outputs { summary, profile: profile_rows, moments: moments_rows })
}

/// Local-dimension quantiles from the Poisson-smoothed measure, with radii from 1/T_max
/// up to 0.1 so the scales match the times probed by the moment sweep.
fn dimension_proxy(
    model: &HalfLineModel,
    psi: &[f64],
    window: Option<(f64, f64)>,
    t_max: f64,
    samples: usize,
    warnings: &mut Vec<String>,
) -> Result<Option<DimensionSummary>, Failure> {
    let r0 = 1.0 / t_max;
    if r0 > 0.01 * DIM_MAX_RADIUS {
        warnings.push(format!("dimension proxy skipped: T_max = {t_max} gives fewer than two decades of radii"));
        return Ok(None);
    }
    let range = window.unwrap_or_else(|| spectral_range(model));
    if (range.1 - range.0) / r0 * 16.0 > DIM_GRID_LIMIT {
        warnings.push("dimension proxy skipped: sampling grid too large".into());
        return Ok(None);
    }
    let model = model.extend_head(psi.len());
    let m = |z: C64| model.m_function(psi, z);
    let prof = smoothed_dim_profile(&m, range, samples, &geometric_deltas(r0, DIM_MAX_RADIUS, DIM_RADII))?;
    Ok(Some(DimensionSummary { dim_lower: prof.dim_lower, dim_upper: prof.dim_upper, radii: (r0, DIM_MAX_RADIUS), samples }))
}

fn envelopes(
    cfg: &RunConfig,
    params: &TreeParams,
    model: &HalfLineModel,
    curves: &[(u32, MomentCurve)],
    warnings: &mut Vec<String>,
) -> Result<Vec<EnvelopeSummary>, Failure> {
    let head = model.head.len() as u64;
    let barrier = match cfg.barrier {
        Some(b) => b,
        None => match params.sparse_positions.iter().rposition(|&l| l < head) {
            Some(i) => i + 1,
            None => {
                warnings.push("no barrier inside the operator head; envelopes skipped".into());
                return Ok(Vec::new());
            }
        },
    };
    if barrier > params.sparse_positions.len() {
        return Err(Failure::Config(crate::config::ConfigError {
            field: "barrier".into(),
            message: format!("only {} sparse positions", params.sparse_positions.len()),
        }));
    }
    let l_n = params.sparse_positions[barrier - 1] as f64;
    let valid = (l_n / 4.0, l_n.powf(1.0 / params.gamma));
    let tol = &cfg.tolerances;
    let mut out = Vec::new();
    for (p, c) in curves {
        let sub: Vec<(f64, f64)> = c
            .samples
            .iter()
            .copied()
            .filter(|(t, _)| *t >= valid.0 * (1.0 - 1e-12) && *t <= valid.1 * (1.0 + 1e-12))
            .collect();
        if sub.len() < 8 {
            warnings.push(format!("p = {p}: {} samples inside the envelope window, need 8", sub.len()));
            continue;
        }
        let points = sub.len();
        let e = bound_envelopes(params, *p as f64, barrier, &MomentCurve::new(*p as f64, sub)?)?;
        let sandwich = e.coverage >= tol.coverage && e.crossover_octaves.is_some_and(|o| o.abs() <= tol.crossover_octaves);
        out.push(EnvelopeSummary {
            p: *p,
            barrier,
            l_n,
            validity_window: valid,
            points,
            a_exp: e.a_exp,
            pivot: e.pivot,
            q_structural: e.q_structural,
            c_lower: e.c_lower,
            c_upper: e.c_upper,
            coverage: e.coverage,
            crossover: e.crossover,
            crossover_octaves: e.crossover_octaves,
            sandwich,
        });
    }
    Ok(out)
}

/// SPTREE_CACHE_DIR, else `<out>/cache`; None when caching is off.
pub fn cache_dir(cfg: &RunConfig) -> Option<PathBuf> {
    if !cfg.cache {
        return None;
    }
    match std::env::var_os("SPTREE_CACHE_DIR") {
        Some(d) if !d.is_empty() => Some(PathBuf::from(d)),
        _ => Some(cfg.output_dir.join("cache")),
    }
}

pub fn run(cfg: &RunConfig) -> Result<i32, Failure> {
    let cache = Cache::new(cache_dir(cfg));
    let out = dynamics(cfg, &cache)?;
    let dir = output_dir(cfg)?;
    let profile: Vec<Vec<Cell>> = out.profile.iter().map(|&(n, a)| vec![Cell::Int(n as u64), Cell::Float(a)]).collect();
    format::write_csv(&dir.join("profile.csv"), &["n", "a"], &profile)?;
    let moments: Vec<Vec<Cell>> = out
        .moments
        .iter()
        .map(|&(t, p, m, s)| vec![Cell::Float(t), Cell::Int(p as u64), Cell::Float(m), Cell::Float(s)])
        .collect();
    format::write_csv(&dir.join("moments.csv"), &["T", "p", "moment", "local_slope"], &moments)?;
    format::write_json(&dir.join("summary.json"), &out.summary)?;
    let (hits, misses) = cache.stats();
    log::info!("cache hits {hits}, misses {misses}");
    for w in &out.summary.warnings {
        log::warn!("{w}");
    }
    for a in &out.summary.assertions {
        log::error!("{a}");
    }
    Ok(verdict_code(out.summary.pass))
}
