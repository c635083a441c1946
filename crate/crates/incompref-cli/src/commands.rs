//! The five experiment commands. Each is a pure function of the config
//! (seed included) to rendered artifacts.

use nalgebra::DMatrix;
use serde_json::json;

use incompref::index_set::{
    assemble, convergence_study, example2_config, example3_config, exact_index_set, IndexExample, IndexSetConfig,
    IndexSetPath,
};
use incompref::portfolio::{portfolio_selector, replicate, ConditionalEstimator};
use incompref::preferences::FamilyKind;
use incompref::solver::{frontier, solve, sweep, SolveOptions};
use incompref::stochastic::{sample_path, simulate, Scenario, Seed, TimeGrid};

use crate::config::{ExperimentConfig, FamilyConfig};
use crate::error::CliError;
use crate::output::{Artifacts, Cell, Table};


fn paths(cfg: &ExperimentConfig) -> Result<Vec<Scenario>, CliError> {
    Ok(simulate(&cfg.time_grid()?, &cfg.market_params(), cfg.mc.seed, 0, cfg.mc.n_paths)?)
}

fn label_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.family {
        FamilyConfig::Example3 { .. } => "alpha",
        _ => "w2",
    }
}

/// `frontier.csv`: `p, w_1..w_n, mean, variance`.
pub fn cmd_frontier(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let f = &cfg.frontier;
    let n = f.mu.len();
    let cov = DMatrix::from_fn(n, n, |i, j| f.cov[i][j]);
    let points = frontier(&f.mu, &cov, &f.p_list)?;
    let mut header = vec!["p".to_string()];
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.extend(["mean".to_string(), "variance".to_string()]);
    let mut t = Table::with_header("frontier.csv", header);
    for pt in &points {
        let mut row: Vec<Cell> = vec![pt.p.into()];
        row.extend(pt.pi.iter().map(|w| Cell::from(*w)));
        row.extend([pt.mean.into(), pt.variance.into()]);
        t.push(row);
    }
    let mut a = Artifacts::default();
    a.table(&t)?;
    Ok(a)
}

fn index_example(cfg: &ExperimentConfig) -> Result<(IndexExample, IndexSetConfig), CliError> {
    let id = match (cfg.index_set.example, &cfg.family) {
        (Some(id), _) => id,
        (None, FamilyConfig::Example2 { .. }) => 2,
        (None, FamilyConfig::Example3 { .. }) => 3,
        (None, _) => 1,
    };
    let ex = IndexExample::from_id(id).map_err(|e| CliError::Config(format!("at `index_set.example`: {e}")))?;
    let market = cfg.market_params();
    let lambda = cfg.lambda();
    let ic = match ex {
        IndexExample::Two => example2_config(lambda),
        IndexExample::Three => example3_config(&market, lambda),
    };
    Ok((ex, ic))
}

fn set_table(name: &str, sets: &IndexSetPath) -> Table {
    let d = sets.sets.first().map(|b| b.dim()).unwrap_or(1);
    let mut header = vec!["t".to_string()];
    for k in 1..=d {
        header.push(format!("lo{k}"));
        header.push(format!("hi{k}"));
    }
    let mut t = Table::with_header(name, header);
    for (l, b) in sets.sets.iter().enumerate() {
        let mut row: Vec<Cell> = vec![sets.grid.t(l).into()];
        for k in 0..d {
            row.push(b.lo()[k].into());
            row.push(b.hi()[k].into());
        }
        t.push(row);
    }
    t
}

/// `index_set.csv` from the Euler scheme and `exact_index_set.csv` from the
/// closed form, on one realized path.
pub fn cmd_index_set(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let (ex, ic) = index_example(cfg)?;
    let path = sample_path(&cfg.time_grid()?, Seed::new(cfg.mc.seed, cfg.index_set.path_index))?;
    let scheme = assemble(&ic, &path)?;
    let exact = exact_index_set(ex, &path, cfg.lambda(), &cfg.market_params())?;
    let mut a = Artifacts::default();
    a.table(&set_table("index_set.csv", &scheme))?;
    a.table(&set_table("exact_index_set.csv", &exact))?;
    Ok(a)
}

/// `convergence.csv`: mean Hausdorff distance between the scheme and the
/// closed form at `t`, per step count.
pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let (ex, ic) = index_example(cfg)?;
    let c = &cfg.convergence;
    let rows = convergence_study(&ic, ex, cfg.lambda(), &cfg.market_params(), c.t, &c.k_list, c.n_paths, cfg.mc.seed)?;
    let mut t = Table::new("convergence.csv", &["steps", "mean_dh", "stderr", "n_paths", "seed"]);
    for r in rows {
        t.push(vec![r.steps.into(), r.mean_dh.into(), r.stderr.into(), r.n_paths.into(), r.seed.into()]);
    }
    let mut a = Artifacts::default();
    a.table(&t)?;
    Ok(a)
}

fn opt(x: Option<f64>) -> Cell {
    match x {
        Some(v) => Cell::F(v),
        None => Cell::S(String::new()),
    }
}

/// Sweep the weight grid: `selectors.csv`, `consumption.csv` and
/// `summary.json`.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let grid = cfg.time_grid()?;
    let pr = cfg.problem(grid)?;
    let paths = paths(cfg)?;
    let weights = cfg.weight_grid()?;
    let ws: Vec<_> = weights.iter().map(|(w, _)| w.clone()).collect();
    let set = sweep(&pr, &ws, &paths, &SolveOptions { keep_paths: cfg.mc.keep_paths })?;
    let label = label_name(cfg);
    let mut sel = Table::new(
        "selectors.csv",
        &[
            "weight_id",
            label,
            "eta",
            "budget",
            "budget_se",
            "budget_residual",
            "quotient_min",
            "quotient_max",
            "quotient_violations",
            "eta_se",
            "eta_quadrature",
            "proviso_violation",
        ],
    );
    let mut cons = Table::new("consumption.csv", &["weight_id", "path", "t", "c1", "c2", "expenditure", "x_terminal"]);
    let mut per_weight = vec![];
    let mut warnings = vec![];
    for (id, (s, (_, lab))) in set.selectors.iter().zip(&weights).enumerate() {
        let d = &s.diagnostics;
        sel.push(vec![
            id.into(),
            (*lab).into(),
            s.eta.into(),
            d.budget.into(),
            d.budget_se.into(),
            d.budget_residual.into(),
            d.quotient_range.0.into(),
            d.quotient_range.1.into(),
            d.quotient_violations.into(),
            opt(d.eta_se),
            opt(d.eta_quadrature),
            opt(d.proviso_violation),
        ]);
        for (pi, (cp, ep)) in s.c_paths.iter().zip(&s.expenditure_paths).enumerate() {
            for (l, (c, e)) in cp.iter().zip(ep).enumerate() {
                let xt = if l == grid.steps { s.x_terminal[pi] } else { 0.0 };
                cons.push(vec![id.into(), pi.into(), grid.t(l).into(), c[0].into(), c[1].into(), (*e).into(), xt.into()]);
            }
        }
        let mut entry = json!({
            "weight_id": id,
            "eta": s.eta,
            "budget_residual": d.budget_residual,
            "budget_se": d.budget_se,
            "quotient_min": d.quotient_range.0,
            "quotient_max": d.quotient_range.1,
            "quotient_violations": d.quotient_violations,
            "eta_se": d.eta_se,
            "eta_quadrature": d.eta_quadrature,
        });
        entry[label] = json!(lab);
        per_weight.push(entry);
        for w in &d.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    let max_res = set.selectors.iter().map(|s| s.diagnostics.budget_residual.abs()).fold(0.0, f64::max);
    let violations: usize = set.selectors.iter().map(|s| s.diagnostics.quotient_violations).sum();
    let summary = json!({
        "name": cfg.name,
        "command": "solve",
        "seed": cfg.mc.seed,
        "n_paths": cfg.mc.n_paths,
        "steps": grid.steps,
        "n_weights": set.selectors.len(),
        "max_abs_budget_residual": max_res,
        "quotient_violations": violations,
        "warnings": warnings,
        "selectors": per_weight,
    });
    let mut a = Artifacts::default();
    a.table(&sel)?;
    a.table(&cons)?;
    a.json("summary.json", &summary)?;
    Ok(a)
}

/// Portfolios and their decomposition on the first `portfolio.paths` paths
/// for the chosen weights, plus Euler wealth replication on each level.
pub fn cmd_portfolio(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let grid = cfg.time_grid()?;
    let pc = &cfg.portfolio;
    let all = paths(cfg)?;
    let weights = cfg.weight_grid()?;
    let market = cfg.market_params();
    let mut est = ConditionalEstimator::nested(pc.inner_samples, cfg.mc.seed);
    est.pathwise_max = pc.pathwise_max;
    let mut levels = pc.levels.clone();
    if !levels.contains(&grid.steps) {
        levels.push(grid.steps);
    }
    levels.sort_unstable();
    let mut port = Table::new(
        "portfolio.csv",
        &["weight_id", "path", "t", "pi", "pi_theta", "pi_h", "pi_p", "pi_indec", "se"],
    );
    let mut rep = Table::new("replication.csv", &["weight_id", "steps", "path", "x_terminal", "target", "min_wealth"]);
    let mut stats = vec![];
    for &k in &levels {
        let g = TimeGrid::new(grid.horizon, k)?;
        let pr = cfg.problem(g)?;
        let level_paths: Vec<Scenario> = if k == grid.steps {
            all.clone()
        } else {
            all.iter().map(|sc| sc.restrict(k, &market)).collect::<Result<_, _>>()?
        };
        let outer = &level_paths[..pc.paths];
        for &id in &cfg.portfolio_weight_ids() {
            let sel = solve(&pr, &weights[id].0, &level_paths, &SolveOptions { keep_paths: 0 })?;
            let ps = portfolio_selector(&pr, &sel, outer, &est)?;
            if k == grid.steps {
                for (pi, row) in ps.pi_paths.iter().enumerate() {
                    for (l, v) in row.iter().enumerate() {
                        let c = ps.components[pi][l];
                        port.push(vec![
                            id.into(),
                            pi.into(),
                            g.t(l).into(),
                            (*v).into(),
                            c.theta.into(),
                            c.hedge_h.into(),
                            c.hedge_p.into(),
                            c.indecisiveness.into(),
                            ps.se[pi][l].into(),
                        ]);
                    }
                }
            }
            let mut err = 0.0;
            for (pi, (sc, row)) in outer.iter().zip(&ps.pi_paths).enumerate() {
                let r = replicate(&pr, &sel, row, sc)?;
                err += (r.x_terminal - r.target).abs();
                rep.push(vec![id.into(), k.into(), pi.into(), r.x_terminal.into(), r.target.into(), r.min_wealth.into()]);
            }
            stats.push(json!({
                "weight_id": id,
                "steps": k,
                "mean_abs_replication_error": err / outer.len() as f64,
            }));
        }
    }
    let summary = json!({
        "name": cfg.name,
        "command": "portfolio",
        "seed": cfg.mc.seed,
        "n_paths": cfg.mc.n_paths,
        "outer_paths": pc.paths,
        "inner_samples": pc.inner_samples,
        "pathwise_max": pc.pathwise_max,
        "example1_mean_variance_only": matches!(
            cfg.family()?.kind,
            FamilyKind::Case1Independent | FamilyKind::Case2Attention | FamilyKind::Case3Substitution
        ),
        "replication": stats,
    });
    let mut a = Artifacts::default();
    a.table(&port)?;
    a.table(&rep)?;
    a.json("portfolio_summary.json", &summary)?;
    Ok(a)
}
