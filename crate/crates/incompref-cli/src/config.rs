//! Experiment configuration: TOML schema, presets and validation.
//!
//! A config file may name a `preset`; its own keys are then merged over the
//! preset table by table before the result is checked against the schema.

use serde::{Deserialize, Serialize};

use incompref::preferences::{ParamFn, UtilityFamily, Weight};
use incompref::solver::Problem;
use incompref::stochastic::{MarketParams, TimeGrid, VolModel};

use crate::error::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("example1_case1", include_str!("../presets/example1_case1.toml")),
    ("example1_case2", include_str!("../presets/example1_case2.toml")),
    ("example1_case3", include_str!("../presets/example1_case3.toml")),
    ("example2", include_str!("../presets/example2.toml")),
    ("example2_lambda0", include_str!("../presets/example2_lambda0.toml")),
    ("example3", include_str!("../presets/example3.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub market: MarketConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub family: FamilyConfig,
    pub weights: WeightsConfig,
    #[serde(default)]
    pub frontier: FrontierConfig,
    #[serde(default)]
    pub index_set: IndexSetConfigBlock,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolModelName {
    Constant,
    ExpOu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub r: f64,
    pub mu: f64,
    pub sigma0: f64,
    /// Initial wealth.
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub varsigma: f64,
    #[serde(default = "constant_vol")]
    pub vol_model: VolModelName,
}

fn default_x0() -> f64 {
    100.0
}

fn constant_vol() -> VolModelName {
    VolModelName::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Paths whose consumption is written out.
    #[serde(default = "default_keep")]
    pub keep_paths: usize,
}

fn default_keep() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Case1 { p: f64 },
    Case2 { p: f64, chi: f64 },
    Case3 { p: f64, kappa: [f64; 2] },
    Example2 { p: f64, beta: f64, lambda: f64, chi_cap: f64 },
    Example3 { beta: f64, lambda: f64, p_circ: f64, chi_cap: f64, p_scale: f64, p_cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub grid_size: usize,
    #[serde(default)]
    pub atom: Option<f64>,
    #[serde(default)]
    pub w1_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontierConfig {
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Risk-aversion weights; `inf` gives the minimum-variance portfolio.
    pub p_list: Vec<f64>,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            mu: vec![0.02, 0.05],
            cov: vec![vec![0.36 * 0.36, 0.02], vec![0.02, 0.25]],
            p_list: vec![0.5, 1.0, 2.0, 5.0, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSetConfigBlock {
    /// 2 or 3; defaults to the family's example.
    #[serde(default)]
    pub example: Option<u32>,
    /// Which simulated path to record.
    #[serde(default)]
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub k_list: Vec<usize>,
    pub n_paths: usize,
    pub t: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { k_list: vec![32, 64, 128, 256, 512], n_paths: 100, t: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioConfig {
    /// Outer paths on which the portfolio is evaluated.
    pub paths: usize,
    pub inner_samples: usize,
    /// Indices into the weight grid; empty means first, middle and last.
    pub weight_ids: Vec<usize>,
    /// Replication grids; each must divide `grid.steps`.
    pub levels: Vec<usize>,
    /// Pathwise running-max derivative inside the inner expectation.
    pub pathwise_max: bool,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig { paths: 8, inner_samples: 100, weight_ids: vec![], levels: vec![], pathwise_max: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub out: Option<String>,
}

pub fn preset_source(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("unknown preset `{name}`; available: {}", names.join(", ")))
        })
}

fn parse_table(src: &str, what: &str) -> Result<toml::Table, CliError> {
    src.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn from_table(table: toml::Table) -> Result<ExperimentConfig, CliError> {
    let de = toml::Value::Table(table);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

/// Load a config from an optional preset and an optional TOML source. A
/// `preset = "..."` key in the source selects the base when `preset` is
/// `None`.
pub fn load(preset: Option<&str>, source: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut over = match source {
        Some(s) => parse_table(s, "config")?,
        None => toml::Table::new(),
    };
    let named = match over.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::Config("at `preset`: expected a string".into())),
        None => None,
    };
    let base_name = preset.map(str::to_owned).or(named);
    let mut table = match &base_name {
        Some(n) => parse_table(preset_source(n)?, n)?,
        None => toml::Table::new(),
    };
    if source.is_none() && base_name.is_none() {
        return Err(CliError::Config("give --preset or --config".into()));
    }
    merge(&mut table, over);
    let cfg = from_table(table)?;
    cfg.validate()?;
    Ok(cfg)
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("at `{path}`: {msg}"))
}

impl ExperimentConfig {
    /// Apply command-line overrides; on error `self` is left untouched.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        let mut next = self.clone();
        if let Some(s) = o.seed {
            next.mc.seed = s;
        }
        if let Some(n) = o.paths {
            next.mc.n_paths = n;
        }
        if let Some(k) = o.steps {
            next.grid.steps = k;
        }
        if let Some(d) = &o.out {
            next.output.dir = d.clone();
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Portfolio weight ids; an empty list means first, middle and last.
    pub fn portfolio_weight_ids(&self) -> Vec<usize> {
        if !self.portfolio.weight_ids.is_empty() {
            return self.portfolio.weight_ids.clone();
        }
        let n = self.weights.grid_size;
        let mut ids = vec![0, n / 2, n - 1];
        ids.dedup();
        ids
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.market;
        if !(m.sigma0 > 0.0) {
            return Err(bad("market.sigma0", "must be positive"));
        }
        if !(m.x0 > 0.0 && m.x0.is_finite()) {
            return Err(bad("market.x0", "must be positive"));
        }
        if !(m.r.is_finite() && m.mu.is_finite()) {
            return Err(bad("market", "r and mu must be finite"));
        }
        if m.vol_model == VolModelName::ExpOu && !(m.kappa >= 0.0) {
            return Err(bad("market.kappa", "must be nonnegative"));
        }
        if !(self.grid.horizon > 0.0) {
            return Err(bad("grid.horizon", "must be positive"));
        }
        if self.grid.steps == 0 {
            return Err(bad("grid.steps", "must be positive"));
        }
        if self.mc.n_paths < 2 {
            return Err(bad("mc.n_paths", "need at least two paths"));
        }
        if self.weights.grid_size == 0 {
            return Err(bad("weights.grid_size", "must be positive"));
        }
        if let FamilyConfig::Example3 { .. } = self.family {
            if self.weights.atom.is_none() {
                return Err(bad("weights.atom", "Example 3 needs the atom location"));
            }
        }
        self.family()?;
        if let Some(w) = self.portfolio.weight_ids.iter().find(|w| **w >= self.weights.grid_size) {
            return Err(bad("portfolio.weight_ids", format!("{w} is outside the {}-weight grid", self.weights.grid_size)));
        }
        if self.portfolio.inner_samples == 0 {
            return Err(bad("portfolio.inner_samples", "must be positive"));
        }
        if self.portfolio.paths == 0 || self.portfolio.paths > self.mc.n_paths {
            return Err(bad("portfolio.paths", "must lie in 1..=mc.n_paths"));
        }
        if let Some(k) = self.portfolio.levels.iter().find(|k| **k == 0 || self.grid.steps % **k != 0) {
            return Err(bad("portfolio.levels", format!("{k} does not divide grid.steps = {}", self.grid.steps)));
        }
        if self.convergence.k_list.is_empty() || self.convergence.k_list.contains(&0) {
            return Err(bad("convergence.k_list", "needs positive step counts"));
        }
        if !(self.convergence.t > 0.0) {
            return Err(bad("convergence.t", "must be positive"));
        }
        let f = &self.frontier;
        if f.cov.len() != f.mu.len() || f.cov.iter().any(|row| row.len() != f.mu.len()) {
            return Err(bad("frontier.cov", format!("must be {0} x {0}", f.mu.len())));
        }
        if f.p_list.iter().any(|p| !(*p > 0.0)) {
            return Err(bad("frontier.p_list", "entries must be positive"));
        }
        Ok(())
    }

    pub fn market_params(&self) -> MarketParams {
        let m = &self.market;
        MarketParams {
            r: m.r,
            mu: m.mu,
            sigma0: m.sigma0,
            kappa: m.kappa,
            varsigma: m.varsigma,
            vol_model: match m.vol_model {
                VolModelName::Constant => VolModel::Constant,
                VolModelName::ExpOu => VolModel::ExpOu,
            },
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| bad("grid", e))
    }

    pub fn family(&self) -> Result<UtilityFamily, CliError> {
        let fam = match self.family {
            FamilyConfig::Case1 { p } => UtilityFamily::case1(p),
            FamilyConfig::Case2 { p, chi } => UtilityFamily::case2(p, chi),
            FamilyConfig::Case3 { p, kappa } => UtilityFamily::case3(p, kappa[0], kappa[1]),
            FamilyConfig::Example2 { p, beta, lambda, chi_cap } => UtilityFamily::ex2(p, beta, lambda, ParamFn::id_min(chi_cap)),
            FamilyConfig::Example3 { beta, lambda, p_circ, chi_cap, p_scale, p_cap } => UtilityFamily::ex3(
                beta,
                lambda,
                p_circ,
                ParamFn::id_min(chi_cap),
                ParamFn::ScaledIdMin { scale: p_scale, cap: p_cap },
            ),
        };
        fam.validate().map_err(|e| bad("family", e))?;
        Ok(fam)
    }

    /// The solver problem on `grid` (usually [`Self::time_grid`] or a coarsening).
    pub fn problem(&self, grid: TimeGrid) -> Result<Problem, CliError> {
        let p = Problem { market: self.market_params(), family: self.family()?, x0: self.market.x0, grid };
        p.validate()?;
        Ok(p)
    }

    pub fn lambda(&self) -> f64 {
        match self.family {
            FamilyConfig::Example2 { lambda, .. } | FamilyConfig::Example3 { lambda, .. } => lambda,
            _ => 0.0,
        }
    }

    /// The weight grid and a per-weight label (`w2` for finite weights, the
    /// sweep parameter for Example 3).
    pub fn weight_grid(&self) -> Result<Vec<(Weight, f64)>, CliError> {
        let n = self.weights.grid_size;
        let param = |k: usize| if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
        match self.family {
            FamilyConfig::Example3 { .. } => {
                let atom = self.weights.atom.ok_or_else(|| bad("weights.atom", "missing"))?;
                let nodes = self.weights.w1_nodes.unwrap_or(101);
                (0..n)
                    .map(|k| {
                        Weight::ex3_member(param(k), nodes, atom)
                            .map(|w| (w, param(k)))
                            .map_err(|e| bad("weights", e))
                    })
                    .collect()
            }
            _ => Ok(Weight::simplex_grid(n).into_iter().enumerate().map(|(k, w)| (w, param(k))).collect()),
        }
    }
}
