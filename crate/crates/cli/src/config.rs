//! Run configuration: JSON on disk, checked against documented ranges after parsing.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sptree::tree::SparseRule;
use std::fmt;
use std::path::{Path, PathBuf};

/// Largest truncation depth accepted; deeper trees are a resource limit, not a config error.
pub const MAX_DEPTH: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tree: TreeConfig,
    /// Block index k ≥ 1.
    #[serde(default = "one")]
    pub block: u64,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub state: StateSpec,
    /// Energy window B_ν = [ν, 4 − ν] used for filtered states.
    #[serde(default = "default_window_nu")]
    pub window_nu: f64,
    #[serde(default)]
    pub t_grid: TimeGrid,
    #[serde(default = "default_p")]
    pub p: Vec<u32>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Barrier index N (1-based) for the moment envelopes; omitted means the last
    /// sparse position inside the operator's head.
    #[serde(default)]
    pub barrier: Option<usize>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub cache: bool,
    /// Deliberate corruption for testing the verifier.
    #[serde(default)]
    pub fault_injection: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// Γ in (0, 1).
    pub gamma: f64,
    #[serde(default)]
    pub rule: RuleSpec,
    /// Truncation depth D.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RuleSpec {
    /// L_m = 2^{m^m}.
    #[default]
    Paper,
    Explicit(Vec<u64>),
    Geometric { first: u64, ratio: u64 },
    Squaring { first: u64 },
}

impl RuleSpec {
    pub fn to_rule(&self) -> SparseRule {
        match self {
            RuleSpec::Paper => SparseRule::Paper,
            RuleSpec::Explicit(v) => SparseRule::Explicit(v.clone()),
            RuleSpec::Geometric { first, ratio } => SparseRule::Geometric { first: *first, ratio: *ratio },
            RuleSpec::Squaring { first } => SparseRule::Squaring { first: *first },
        }
    }
}

/// Which operator the dynamics run uses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Block k of the tree at its full truncation length.
    #[default]
    Block,
    /// Block k up to site `cut`, free beyond; `size` omitted means the half-line.
    TruncatedFree { cut: usize, size: Option<usize> },
    /// The free k = 1 block, d = (1, 2, 2, …), b = 1.
    Free { size: Option<usize> },
    /// A finite Jacobi matrix given directly. All-zero `b` gives decoupled sites.
    Explicit { d: Vec<f64>, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    #[default]
    Delta1,
    /// f(H)δ₁ for a bump on [center − half_width, center + half_width] ⊂ B_ν.
    FirstKind {
        nu: f64,
        center: f64,
        #[serde(default = "default_half_width")]
        half_width: f64,
    },
    /// f(H)δ₁ for a window function equal to 1 near E₀.
    SecondKind { e0: f64, nu: f64, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    /// Number of grid points including both ends.
    pub points: usize,
    #[serde(default = "yes")]
    pub geometric: bool,
    /// Time scale of the profile CSV; defaults to t_max.
    #[serde(default)]
    pub profile_t: Option<f64>,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { t_min: 10.0, t_max: 1e4, points: 31, geometric: true, profile_t: None }
    }
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                if i == n {
                    self.t_max
                } else if self.geometric {
                    self.t_min * (self.t_max / self.t_min).powf(s)
                } else {
                    self.t_min + (self.t_max - self.t_min) * s
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Eigensum,
    #[default]
    Quadrature,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Entries of f(H)δ₁ below this fraction of the largest are dropped.
    pub state_tol: f64,
    pub eigen_limit: usize,
    pub dense_limit: usize,
    /// Largest finite operator for which the profile CSV is written.
    pub profile_limit: usize,
    /// Relative agreement required between eigensum and quadrature in `both` mode.
    pub method_agreement: f64,
    pub recursion: f64,
    pub hs: f64,
    /// Sample points for the dimension proxy.
    pub dim_samples: usize,
    /// Slack in dim_upper ≤ β̂ + slack.
    pub dim_slack: f64,
    /// Required envelope coverage.
    pub coverage: f64,
    /// Allowed distance of the branch crossover from L_N^A, in octaves.
    pub crossover_octaves: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            state_tol: 1e-12,
            eigen_limit: sptree::jacobi::DEFAULT_EIGEN_LIMIT,
            dense_limit: sptree::decompose::DEFAULT_DENSE_LIMIT,
            profile_limit: 4000,
            method_agreement: 1e-6,
            recursion: 1e-8,
            hs: 1e-4,
            dim_samples: 200,
            dim_slack: 0.1,
            coverage: 0.95,
            crossover_octaves: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Random (z, γ, i, j) tuples for the resolvent kernel bound.
    pub kernel_tuples: usize,
    /// Block sites used by the single-block checks.
    pub block_sites: usize,
    /// Recursion check at z = re + i·im over n ≤ recursion_n.
    pub recursion_z: [f64; 2],
    pub recursion_n: usize,
    /// Sites of the block used for the functional-calculus decay check.
    pub hs_sites: usize,
    /// Decay order k of the functional-calculus kernel check.
    pub hs_k: u32,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { kernel_tuples: 10_000, block_sites: 200, recursion_z: [2.0, 0.02], recursion_n: 100, hs_sites: 60, hs_k: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the sign of d(1) in every block before the integer identity check.
    Eq41Sign,
}

fn one() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_window_nu() -> f64 {
    0.5
}
fn default_half_width() -> f64 {
    1.5
}
fn default_p() -> Vec<u32> {
    vec![2]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A rejected configuration, pointing at the offending field or source position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted field path, or "line L column C" for syntax errors.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let at = format!("line {} column {}", e.line(), e.column());
            let full = e.to_string();
            let message = full.strip_suffix(&format!(" at {at}")).unwrap_or(&full).to_string();
            ConfigError { field: at, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Range checks that the schema cannot express. Depths beyond MAX_DEPTH pass here
    /// and are refused later as a resource limit.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = self.tree.gamma;
        if !(g > 0.0 && g < 1.0) {
            return Err(bad("tree.gamma", format!("{g} must lie in (0, 1)")));
        }
        if self.tree.depth < 1 {
            return Err(bad("tree.depth", "must be at least 1"));
        }
        match &self.tree.rule {
            RuleSpec::Explicit(v) => {
                if v.first() == Some(&0) || v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad("tree.rule.explicit", "positions must be positive and strictly increasing"));
                }
            }
            RuleSpec::Geometric { first, ratio } => {
                if *first < 1 || *ratio < 2 {
                    return Err(bad("tree.rule.geometric", "need first ≥ 1 and ratio ≥ 2"));
                }
            }
            RuleSpec::Squaring { first } => {
                if *first < 2 {
                    return Err(bad("tree.rule.squaring.first", "must be at least 2"));
                }
            }
            RuleSpec::Paper => {}
        }
        if self.block < 1 {
            return Err(bad("block", "block index starts at 1"));
        }
        match &self.operator {
            OperatorSpec::TruncatedFree { cut, size } => {
                if *cut < 1 {
                    return Err(bad("operator.cut", "must be at least 1"));
                }
                if size.is_some_and(|s| s <= *cut) {
                    return Err(bad("operator.size", "must exceed cut"));
                }
            }
            OperatorSpec::Free { size: Some(0) } => return Err(bad("operator.size", "must be positive")),
            OperatorSpec::Explicit { d, b } => {
                if d.is_empty() || b.len() + 1 != d.len() {
                    return Err(bad("operator.b", "need len(b) = len(d) − 1 ≥ 0"));
                }
                let all_zero = b.iter().all(|&x| x == 0.0);
                if !all_zero && b.iter().any(|&x| !(x > 0.0)) {
                    return Err(bad("operator.b", "couplings must be all positive or all zero"));
                }
                if d.iter().any(|x| !x.is_finite()) {
                    return Err(bad("operator.d", "entries must be finite"));
                }
            }
            _ => {}
        }
        let nu = self.window_nu;
        if !(nu > 0.0 && nu < 1.0) {
            return Err(bad("window_nu", format!("{nu} must lie in (0, 1)")));
        }
        match self.state {
            StateSpec::Delta1 => {}
            StateSpec::FirstKind { nu: fnu, center, half_width } => {
                if !(fnu > 0.0 && fnu < 1.0) {
                    return Err(bad("state.nu", "must lie in (0, 1)"));
                }
                if !(half_width > 0.0) {
                    return Err(bad("state.half_width", "must be positive"));
                }
                if center - half_width < nu || center + half_width > 4.0 - nu {
                    return Err(bad("state.center", "bump must lie inside the window B_ν"));
                }
            }
            StateSpec::SecondKind { e0, nu: fnu, c } => {
                if !(fnu > 0.0 && fnu < 1.0) {
                    return Err(bad("state.nu", "must lie in (0, 1)"));
                }
                if !(c > 0.0 && c <= 1.0) {
                    return Err(bad("state.c", "must lie in (0, 1]"));
                }
                if e0 - 1.5 * fnu < nu || e0 + 1.5 * fnu > 4.0 - nu {
                    return Err(bad("state.e0", "window function must lie inside B_ν"));
                }
            }
        }
        let t = &self.t_grid;
        if !(t.t_min > 0.0 && t.t_max > t.t_min && t.t_max.is_finite()) {
            return Err(bad("t_grid", "need 0 < t_min < t_max < ∞"));
        }
        if t.points < 2 {
            return Err(bad("t_grid.points", "need at least 2 points"));
        }
        if t.profile_t.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
            return Err(bad("t_grid.profile_t", "must be positive"));
        }
        if self.p.is_empty() || self.p.iter().any(|&p| p == 0 || p > 16) {
            return Err(bad("p", "need a nonempty list of moments in 1..=16"));
        }
        let tol = &self.tolerances;
        for (name, x) in [
            ("tolerances.state_tol", tol.state_tol),
            ("tolerances.method_agreement", tol.method_agreement),
            ("tolerances.recursion", tol.recursion),
            ("tolerances.hs", tol.hs),
        ] {
            if !(x > 0.0 && x < 1.0) {
                return Err(bad(name, format!("{x} must lie in (0, 1)")));
            }
        }
        if !(tol.coverage > 0.0 && tol.coverage <= 1.0) {
            return Err(bad("tolerances.coverage", "must lie in (0, 1]"));
        }
        if !(tol.dim_slack >= 0.0) || !(tol.crossover_octaves > 0.0) {
            return Err(bad("tolerances", "dim_slack must be ≥ 0 and crossover_octaves > 0"));
        }
        if tol.dim_samples < 1 {
            return Err(bad("tolerances.dim_samples", "must be positive"));
        }
        if self.barrier == Some(0) {
            return Err(bad("barrier", "barrier index starts at 1"));
        }
        let v = &self.verify;
        if v.block_sites < 2 || v.hs_sites < 2 || v.recursion_n < 1 {
            return Err(bad("verify", "block_sites and hs_sites need ≥ 2 sites, recursion_n ≥ 1"));
        }
        if !(v.recursion_z[1] > 0.0) {
            return Err(bad("verify.recursion_z", "imaginary part must be positive"));
        }
        Ok(())
    }
}

/// The published JSON schema of RunConfig.
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}
