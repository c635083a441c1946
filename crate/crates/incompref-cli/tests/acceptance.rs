//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs the shipped presets at full size (10^4 paths, 200 steps, 100
//! weights), so expect several minutes in an optimized build.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use incompref::index_set::{convergence_study, example2_config, example3_config, mean_se, IndexExample};
use incompref::portfolio::{pi_at, portfolio_selector, replicate, ConditionalEstimator};
use incompref::preferences::{ParamFn, UtilityFamily, Weight};
use incompref::solver::duality::{bequest_utility, conjugate, fenchel_check};
use incompref::solver::example1::case3_residual;
use incompref::solver::{budget_on, foc_residual, frontier, solve, sweep, Policy, PolicySelector, Problem, SolveOptions};
use incompref::stochastic::{simulate, stream_rng, MarketParams, Scenario, TimeGrid, VolModel};
use incompref_cli::{load, run, run_and_write, Command, ExperimentConfig, Overrides};

const OOS_SEED: u64 = 4242;

struct Report {
    lines: Vec<(u32, bool, String)>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id, pass, detail));
    }
}

fn preset(name: &str) -> ExperimentConfig {
    load(Some(name), None).expect("shipped preset")
}

struct Swept {
    problem: Problem,
    paths: Vec<Scenario>,
    selectors: Vec<PolicySelector>,
    worst_oos: f64,
    elapsed: Duration,
}

// Solve the whole weight grid of a preset and check the budget on an
// independent path set.
fn sweep_preset(name: &str) -> Swept {
    let start = Instant::now();
    let cfg = preset(name);
    let grid = cfg.time_grid().unwrap();
    let problem = cfg.problem(grid).unwrap();
    let paths = simulate(&grid, &problem.market, cfg.mc.seed, 0, cfg.mc.n_paths).unwrap();
    let weights: Vec<Weight> = cfg.weight_grid().unwrap().into_iter().map(|w| w.0).collect();
    let set = sweep(&problem, &weights, &paths, &SolveOptions::default()).unwrap();
    let oos = simulate(&grid, &problem.market, OOS_SEED, 0, cfg.mc.n_paths).unwrap();
    let worst_oos = set
        .selectors
        .iter()
        .map(|s| ((budget_on(&s.policy, &oos).0 - problem.x0) / problem.x0).abs())
        .fold(0.0, f64::max);
    Swept { problem, paths, selectors: set.selectors, worst_oos, elapsed: start.elapsed() }
}

fn criterion1(rep: &mut Report) {
    let start = Instant::now();
    let mut rng = stream_rng(1, 0, 0, 0);
    let p_list = [0.5, 1.0, 2.0, 5.0, f64::INFINITY];
    let (mut worst_w, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..3 {
        let (s1, s2, rho): (f64, f64, f64) =
            (rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(-0.9..0.9));
        let c = rho * s1 * s2;
        let cov = DMatrix::from_row_slice(2, 2, &[s1 * s1, c, c, s2 * s2]);
        let mu = [rng.random_range(0.0..0.1), rng.random_range(0.0..0.1)];
        for pt in frontier(&mu, &cov, &p_list).unwrap() {
            // Weighted-sum maximization along pi_2 = 1 - pi_1 by bisection
            // on a central-difference slope.
            let f = |x: f64| {
                let var = x * x * s1 * s1 + 2.0 * x * (1.0 - x) * c + (1.0 - x) * (1.0 - x) * s2 * s2;
                if pt.p.is_infinite() {
                    -var
                } else {
                    x * mu[0] + (1.0 - x) * mu[1] - 0.5 * pt.p * var
                }
            };
            let (mut lo, mut hi) = (-100.0, 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid + 1e-3) > f(mid - 1e-3) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            worst_w = worst_w.max((pt.pi[0] - 0.5 * (lo + hi)).abs());
            worst_sum = worst_sum.max((pt.pi.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.record(
        1,
        "frontier",
        worst_w < 1e-8 && worst_sum < 1e-12 && secs < 5.0,
        format!("max weight gap {worst_w:.2e}, max |sum - 1| {worst_sum:.2e}, {secs:.2}s"),
    );
}

fn criterion2(rep: &mut Report, swept: &[(&str, &Swept)]) {
    let mut pass = true;
    let mut parts = vec![];
    for (name, s) in swept {
        pass &= s.worst_oos < 5e-3 && s.elapsed.as_secs_f64() < 120.0;
        parts.push(format!("{name} {:.1e} in {:.0}s", s.worst_oos, s.elapsed.as_secs_f64()));
    }
    rep.record(2, "budget (out of sample, worst weight)", pass, parts.join("; "));
}

fn worst_foc(s: &Swept, n_paths: usize) -> f64 {
    s.selectors
        .iter()
        .flat_map(|sel| s.paths[..n_paths].iter().map(move |sc| foc_residual(&s.problem, sel, sc).unwrap()))
        .fold(0.0, f64::max)
}

fn criterion3(rep: &mut Report, ex1: &[&Swept], ex2: &Swept, ex3: &Swept) {
    let a = ex1.iter().map(|s| worst_foc(s, 10)).fold(worst_foc(ex2, 10), f64::max);
    let b = worst_foc(ex3, 3);
    rep.record(
        3,
        "first-order conditions",
        a < 1e-9 && b < 1e-6,
        format!("Examples 1-2 {a:.1e} (< 1e-9), Example 3 {b:.1e} (< 1e-6)"),
    );
}

fn criterion4(rep: &mut Report, case2: &Swept, ex2: &Swept) {
    let v2: usize = case2.selectors.iter().map(|s| s.diagnostics.quotient_violations).sum();
    let ve: usize = ex2.selectors.iter().map(|s| s.diagnostics.quotient_violations).sum();
    let nodes = ex2.paths.len() * ex2.problem.grid.steps * ex2.selectors.len();
    rep.record(
        4,
        "consumption quotient bounds",
        v2 == 0 && ve == 0,
        format!("Case II {v2} violations, Example 2 {ve} violations over {nodes} nodes each"),
    );
}

fn criterion5(rep: &mut Report, case3: &Swept) {
    let mut rng = stream_rng(5, 0, 0, 0);
    let (k1, k2) = case3.problem.family.kappa_range;
    let p = case3.problem.family.p;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        // A random selector evaluated at a random node of a random path.
        let sel = &case3.selectors[rng.random_range(0..case3.selectors.len())];
        let sc = &case3.paths[rng.random_range(0..case3.paths.len())];
        let l = rng.random_range(0..=case3.problem.grid.steps);
        let (table, k, eta) = match &sel.policy {
            Policy::Substitution { table, k, eta } => (table, *k, *eta),
            _ => unreachable!("Case III policy"),
        };
        assert!((k1..=k2).contains(&k));
        let y = eta * sc.xi(l);
        worst = worst.max(case3_residual(p, k, y, table.psi(k, y)).abs());
    }

    // Example 3 with p_circ equal to p at the atom: eta = ((A + B) / X0)^q.
    let cfg = preset("example3");
    let mut problem = cfg.problem(cfg.time_grid().unwrap()).unwrap();
    let q = problem.family.p_fn.eval(cfg.weights.atom.unwrap());
    problem.family.p_circ = q;
    let paths = simulate(&problem.grid, &problem.market, cfg.mc.seed, 0, 2_000).unwrap();
    let mut eta_gap = 0.0f64;
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let sel = solve(&problem, &Weight::ex3_member(a, 101, 2.2).unwrap(), &paths, &SolveOptions::default()).unwrap();
        let unit = match &sel.policy {
            Policy::Hybrid { q, p_circ, beta, lambda, horizon, integrals, .. } => Policy::Hybrid {
                q: *q,
                p_circ: *p_circ,
                beta: *beta,
                lambda: *lambda,
                horizon: *horizon,
                integrals: integrals.clone(),
                eta: 1.0,
            },
            _ => unreachable!("Example 3 policy"),
        };
        let closed = (budget_on(&unit, &paths).0 / problem.x0).powf(q);
        eta_gap = eta_gap.max((sel.eta / closed - 1.0).abs());
    }
    rep.record(
        5,
        "Case III residual and Example 3 eta",
        worst < 1e-10 && eta_gap < 1e-10,
        format!("max residual {worst:.1e} over 1000 draws, eta relative gap {eta_gap:.1e}"),
    );
}

fn criterion6(rep: &mut Report, ex2: &Swept) {
    let mut worst = 0.0f64;
    for s in &ex2.selectors {
        let d = &s.diagnostics;
        // Only the path average carries Monte Carlo error.
        let z = (s.eta - d.eta_quadrature.unwrap()) / d.eta_se.unwrap();
        worst = worst.max(z.abs());
    }
    rep.record(6, "Example 2 quadrature vs Monte Carlo eta", worst < 2.0, format!("max |z| {worst:.2} over 100 weights"));
}

fn criterion7(rep: &mut Report) {
    let start = Instant::now();
    let ks = [32, 64, 128, 256, 512];
    let ex3_cfg = preset("example3");
    let ex3_market = ex3_cfg.market_params();
    let ex2_market = preset("example2").market_params();
    let studies = [
        ("Example 2", convergence_study(&example2_config(0.2), IndexExample::Two, 0.2, &ex2_market, 1.0, &ks, 100, 42)),
        (
            "Example 3",
            convergence_study(&example3_config(&ex3_market, 0.2), IndexExample::Three, 0.2, &ex3_market, 1.0, &ks, 100, 42),
        ),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (name, rows) in studies {
        let rows = rows.unwrap();
        let mono = rows.windows(2).all(|w| w[1].mean_dh <= w[0].mean_dh + 2.0 * (w[0].stderr + w[1].stderr));
        let last = rows.last().unwrap().mean_dh;
        pass &= mono && last < 0.05;
        let trail: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.mean_dh)).collect();
        parts.push(format!("{name} [{}]{}", trail.join(", "), if mono { "" } else { " not monotone" }));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    rep.record(7, "index-set convergence", pass, format!("{}; {secs:.1}s", parts.join("; ")));
}

fn criterion8(rep: &mut Report, case1: &Swept) {
    let n = 200;
    let sel = &case1.selectors[50];
    let ps = portfolio_selector(&case1.problem, sel, &case1.paths[..n], &ConditionalEstimator::default()).unwrap();
    let errs: Vec<f64> = case1.paths[..n]
        .iter()
        .zip(&ps.pi_paths)
        .map(|(sc, pi)| replicate(&case1.problem, sel, pi, sc).unwrap().x_terminal.abs())
        .collect();
    let case1_err = mean_se(&errs).0 / case1.problem.x0;

    let cfg = preset("example3");
    let fine = cfg.time_grid().unwrap();
    let market = cfg.market_params();
    let all = simulate(&fine, &market, cfg.mc.seed, 0, cfg.mc.n_paths).unwrap();
    let w = Weight::ex3_member(0.5, 101, cfg.weights.atom.unwrap()).unwrap();
    let est = ConditionalEstimator::nested(400, 7);
    let outer = 32;
    let mut errs3 = vec![];
    for k in [50, 100, 200] {
        let problem = cfg.problem(TimeGrid::new(fine.horizon, k).unwrap()).unwrap();
        let paths: Vec<Scenario> = all.iter().map(|sc| sc.restrict(k, &market).unwrap()).collect();
        let sel = solve(&problem, &w, &paths, &SolveOptions::default()).unwrap();
        let ps = portfolio_selector(&problem, &sel, &paths[..outer], &est).unwrap();
        let e: Vec<f64> = paths[..outer]
            .iter()
            .zip(&ps.pi_paths)
            .map(|(sc, pi)| {
                let r = replicate(&problem, &sel, pi, sc).unwrap();
                (r.x_terminal - r.target).abs()
            })
            .collect();
        errs3.push(mean_se(&e).0 / problem.x0);
    }
    let mono = errs3.windows(2).all(|w| w[1] < w[0]);
    rep.record(
        8,
        "wealth replication",
        case1_err < 0.01 && errs3[2] < 0.02 && mono,
        format!(
            "Case I mean |X_T| {:.3}% of X0; Example 3 mean |X_T - X*_T| at K = 50, 100, 200: {:.3}%, {:.3}%, {:.3}%",
            100.0 * case1_err,
            100.0 * errs3[0],
            100.0 * errs3[1],
            100.0 * errs3[2]
        ),
    );
}

fn criterion9(rep: &mut Report) {
    // Example 2 with lambda = 0 and chi = 3 id against Case II with chi = 3.
    let market = MarketParams::constant(0.001, 0.02, 0.36);
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let chi = ParamFn::ScaledIdMin { scale: 3.0, cap: 1e6 };
    let ex2 = Problem { market, family: UtilityFamily::ex2(6.0, 0.0, 0.0, chi), x0: 100.0, grid };
    let case2 = Problem { family: UtilityFamily::case2(6.0, 3.0), ..ex2 };
    let paths = simulate(&grid, &market, 42, 0, 10_000).unwrap();
    let est = ConditionalEstimator::nested(200, 9);
    let (mut z_eta, mut z_pi) = (0.0f64, 0.0f64);
    for w in Weight::simplex_grid(11).into_iter().skip(1) {
        let a = solve(&case2, &w, &paths, &SolveOptions::default()).unwrap();
        let b = solve(&ex2, &w, &paths, &SolveOptions::default()).unwrap();
        let eta_se = b.diagnostics.eta_se.unwrap();
        z_eta = z_eta.max((a.eta - b.eta).abs() / eta_se);
        for (sc, l) in [(&paths[0], 0), (&paths[1], 100), (&paths[2], 190)] {
            let (va, vb) = (pi_at(&case2, &a, sc, l, &est).unwrap(), pi_at(&ex2, &b, sc, l, &est).unwrap());
            // Both the inner average and eta^{-1/p} carry error.
            let se = (vb.se.powi(2) + (va.total * eta_se / (6.0 * b.eta)).powi(2)).sqrt();
            z_pi = z_pi.max((va.total - vb.total).abs() / se);
        }
    }

    // Example 3 with lambda = 0 and a frozen volatility against constant sigma.
    let cfg = preset("example3");
    let mut frozen = cfg.problem(grid).unwrap();
    frozen.family.lambda = 0.0;
    frozen.market.varsigma = 1e-8;
    frozen.market.kappa = 0.0;
    let constant = Problem { market: MarketParams { vol_model: VolModel::Constant, ..frozen.market }, ..frozen };
    let paths_f = simulate(&grid, &frozen.market, 42, 0, 10_000).unwrap();
    let paths_c = simulate(&grid, &constant.market, 42, 0, 10_000).unwrap();
    let w = Weight::ex3_member(0.5, 101, 2.2).unwrap();
    let a = solve(&frozen, &w, &paths_f, &SolveOptions::default()).unwrap();
    let b = solve(&constant, &w, &paths_c, &SolveOptions::default()).unwrap();
    let (bud, bud_se) = budget_on(&a.policy, &paths_c);
    let z3 = (bud - constant.x0).abs() / bud_se;
    let mut z3_pi = 0.0f64;
    for l in [0, 100] {
        let va = pi_at(&frozen, &a, &paths_f[0], l, &est).unwrap();
        let vb = pi_at(&constant, &b, &paths_c[0], l, &est).unwrap();
        z3_pi = z3_pi.max((va.total - vb.total).abs() / (va.se.powi(2) + vb.se.powi(2)).sqrt());
    }
    rep.record(
        9,
        "degenerate cases",
        z_eta < 2.0 && z_pi < 2.0 && z3 < 2.0 && z3_pi < 2.0,
        format!(
            "Example 2 vs Case II: eta {z_eta:.2} SE, portfolio {z_pi:.2} SE; \
             Example 3 vs constant sigma: budget {z3:.2} SE, portfolio {z3_pi:.2} SE"
        ),
    );
}

fn criterion10(rep: &mut Report) {
    let cfg = preset("example3");
    let fam = cfg.family().unwrap();
    let d = (-fam.beta * cfg.grid.horizon).exp();
    let mut rng = stream_rng(10, 0, 0, 0);
    let mut gap = 0.0f64;
    let mut violations = 0;
    for _ in 0..1000 {
        let y = rng.random_range(-6.0f64..6.0).exp();
        let x = rng.random_range(-6.0f64..6.0).exp();
        gap = gap.max(fenchel_check(fam.p_circ, d, y).unwrap().0.abs());
        let lhs = bequest_utility(fam.p_circ, d, x) - y * x;
        let rhs = conjugate(fam.p_circ, d, y).unwrap();
        if lhs > rhs + 1e-12 * (1.0 + rhs.abs()) {
            violations += 1;
        }
    }
    rep.record(
        10,
        "Fenchel-Young",
        gap < 1e-12 && violations == 0,
        format!("max gap at the maximizer {gap:.1e}, {violations} violations at 1000 random points"),
    );
}

fn criterion11(rep: &mut Report) {
    let extra = "[weights]\ngrid_size = 10\n[portfolio]\npaths = 4\ninner_samples = 50\nweight_ids = [2, 7]\nlevels = [50]";
    let mut identical = true;
    let mut files = 0;
    for name in ["example2", "example3"] {
        let mut cfg = load(Some(name), Some(extra)).unwrap();
        cfg.apply(&Overrides { paths: Some(2_000), steps: Some(100), ..Default::default() }).unwrap();
        for cmd in [Command::Solve, Command::Portfolio, Command::IndexSet] {
            let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
            let mut outputs = vec![];
            for (dir, threads) in dirs.iter().zip([1, 1, 8]) {
                cfg.output.dir = dir.path().display().to_string();
                let written = run_and_write(cmd, &cfg, Some(threads)).unwrap();
                let bytes: Vec<Vec<u8>> = written.iter().map(|p| std::fs::read(p).unwrap()).collect();
                outputs.push(bytes);
            }
            files += outputs[0].len();
            identical &= outputs[0] == outputs[1] && outputs[0] == outputs[2];
        }
        // The in-memory artifacts agree with the files as well.
        identical &= run(Command::Solve, &cfg, Some(8)).unwrap().files == run(Command::Solve, &cfg, Some(1)).unwrap().files;
    }
    rep.record(11, "determinism", identical, format!("{files} files byte-identical across two runs and 1 vs 8 threads"));
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { lines: vec![] };
    criterion1(&mut rep);
    criterion10(&mut rep);
    criterion7(&mut rep);
    criterion11(&mut rep);

    let case1 = sweep_preset("example1_case1");
    let case2 = sweep_preset("example1_case2");
    let case3 = sweep_preset("example1_case3");
    let ex2 = sweep_preset("example2");
    let ex3 = sweep_preset("example3");
    criterion2(
        &mut rep,
        &[("Case I", &case1), ("Case II", &case2), ("Case III", &case3), ("Example 2", &ex2), ("Example 3", &ex3)],
    );
    criterion3(&mut rep, &[&case1, &case2, &case3], &ex2, &ex3);
    criterion4(&mut rep, &case2, &ex2);
    criterion5(&mut rep, &case3);
    criterion6(&mut rep, &ex2);
    drop((case2, case3, ex2, ex3));
    criterion8(&mut rep, &case1);
    criterion9(&mut rep);

    rep.lines.sort_by_key(|l| l.0);
    let failed: Vec<u32> = rep.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        rep.lines.len() - failed.len(),
        rep.lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
