use std::process::Command as Process;

use incompref_cli::{load, run, Artifacts, CliError, Command, ExperimentConfig, Overrides};

fn small(preset: &str, extra: &str) -> ExperimentConfig {
    let mut cfg = load(Some(preset), Some(extra)).unwrap();
    cfg.apply(&Overrides { paths: Some(300), steps: Some(40), ..Default::default() }).unwrap();
    cfg
}

fn table(a: &Artifacts, name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let bytes = &a.files.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no {name}")).1;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(a: &Artifacts, name: &str, col: &str) -> Vec<f64> {
    let (h, rows) = table(a, name);
    let k = h.iter().position(|x| x == col).unwrap_or_else(|| panic!("no column {col}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn every_preset_loads_and_validates() {
    for name in ["example1_case1", "example1_case2", "example1_case3", "example2", "example2_lambda0", "example3"] {
        let cfg = load(Some(name), None).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.steps, 200);
        assert_eq!(cfg.mc.n_paths, 10_000);
        assert_eq!(cfg.weight_grid().unwrap().len(), 100);
    }
}

#[test]
fn config_errors_name_the_offending_key() {
    let e = load(Some("example2"), Some("[market]\nr = \"high\"")).unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
    assert!(e.to_string().contains("market.r"), "{e}");
    let e = load(Some("example2"), Some("[grid]\nsteps = 0")).unwrap_err();
    assert!(e.to_string().contains("grid.steps"), "{e}");
    let e = load(Some("example2"), Some("[family]\nkind = \"example2\"\np = -1.0\nbeta = 0.0\nlambda = 0.2\nchi_cap = 5.0"))
        .unwrap_err();
    assert!(e.to_string().contains("family"), "{e}");
    assert!(load(Some("missing"), None).is_err());
    assert!(load(None, None).is_err());
    assert_eq!(e.exit_code(), 1);
    assert_eq!(CliError::from(incompref::Error::Bracket("x".into())).exit_code(), 2);
    assert_eq!(CliError::from(incompref::Error::InvalidInput("x".into())).exit_code(), 1);
}

#[test]
fn overrides_are_checked() {
    let mut cfg = load(Some("example2"), None).unwrap();
    assert!(cfg.apply(&Overrides { steps: Some(0), ..Default::default() }).is_err());
    assert_eq!(cfg.grid.steps, 200);
    let mut cfg2 = cfg.clone();
    cfg2.apply(&Overrides { seed: Some(9), out: Some("x".into()), ..Default::default() }).unwrap();
    assert_eq!((cfg2.mc.seed, cfg2.output.dir.as_str()), (9, "x"));
    assert!(run(Command::Solve, &cfg, Some(0)).is_err());
    cfg.portfolio.inner_samples = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn floats_round_trip_with_seventeen_digits() {
    let cfg = load(Some("example1_case1"), None).unwrap();
    let a = run(Command::Frontier, &cfg, Some(1)).unwrap();
    let (h, rows) = table(&a, "frontier.csv");
    assert_eq!(h, ["p", "w1", "w2", "mean", "variance"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][0], "inf");
    for r in &rows {
        let w1: f64 = r[1].parse().unwrap();
        let w2: f64 = r[2].parse().unwrap();
        assert!((w1 + w2 - 1.0).abs() < 1e-12);
        // 1 digit, point, 16 decimals.
        assert_eq!(r[1].split('e').next().unwrap().len(), 18, "{}", r[1]);
    }
}

#[test]
fn index_set_properties() {
    let a = run(Command::IndexSet, &small("example2", ""), Some(1)).unwrap();
    let hi = column(&a, "index_set.csv", "hi1");
    assert!(hi.windows(2).all(|w| w[1] >= w[0]));
    assert!(column(&a, "index_set.csv", "lo1").iter().all(|x| *x == 0.0));

    let a = run(Command::IndexSet, &small("example3", ""), Some(1)).unwrap();
    for file in ["index_set.csv", "exact_index_set.csv"] {
        let (lo, hi) = (column(&a, file, "lo2"), column(&a, file, "hi2"));
        assert!(lo.iter().zip(&hi).all(|(l, h)| (h - l - 1.0).abs() < 1e-12));
    }

    let a = run(Command::IndexSet, &small("example2_lambda0", ""), Some(1)).unwrap();
    assert!(column(&a, "index_set.csv", "hi1").iter().all(|x| *x == 1.0));

    let e = run(Command::IndexSet, &small("example1_case1", ""), Some(1)).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn solve_writes_selectors_and_consumption() {
    let cfg = small("example2", "[weights]\ngrid_size = 5");
    let a = run(Command::Solve, &cfg, Some(1)).unwrap();
    let res = column(&a, "selectors.csv", "budget_residual");
    assert_eq!(res.len(), 5);
    assert!(res.iter().all(|r| r.abs() < 1e-12));
    assert!(column(&a, "selectors.csv", "quotient_violations").iter().all(|v| *v == 0.0));
    let (h, rows) = table(&a, "consumption.csv");
    assert_eq!(h[..4], ["weight_id", "path", "t", "c1"]);
    assert_eq!(rows.len(), 5 * 8 * 41);
    let summary = &a.files.iter().find(|(n, _)| n == "summary.json").unwrap().1;
    let v: serde_json::Value = serde_json::from_slice(summary).unwrap();
    assert_eq!(v["n_weights"], 5);
}

#[test]
fn example1_portfolios_have_no_hedging_terms() {
    let extra = "[weights]\ngrid_size = 3\n[portfolio]\npaths = 2\nweight_ids = [0, 1, 2]";
    for preset in ["example1_case1", "example1_case2", "example1_case3"] {
        let a = run(Command::Portfolio, &small(preset, extra), Some(1)).unwrap();
        for col in ["pi_h", "pi_p", "pi_indec"] {
            assert!(column(&a, "portfolio.csv", col).iter().all(|x| *x == 0.0), "{preset} {col}");
        }
    }
}

#[test]
fn example2_indecisiveness_is_active_for_positive_second_weight() {
    let extra = "[weights]\ngrid_size = 3\n[portfolio]\npaths = 2\ninner_samples = 20\nweight_ids = [0, 1, 2]";
    let a = run(Command::Portfolio, &small("example2", extra), Some(1)).unwrap();
    let w = column(&a, "portfolio.csv", "weight_id");
    let t = column(&a, "portfolio.csv", "t");
    let ind = column(&a, "portfolio.csv", "pi_indec");
    for ((w, t), x) in w.iter().zip(&t).zip(&ind) {
        if *w == 0.0 {
            assert_eq!(*x, 0.0);
        } else if *t == 0.0 {
            // W = W^max at the start, so every inner path sets a new maximum.
            assert!(*x != 0.0, "weight {w}");
        }
    }
}

#[test]
fn convergence_table() {
    let a = run(Command::Convergence, &small("example3", "[convergence]\nk_list = [16, 32]\nn_paths = 8"), Some(1)).unwrap();
    let dh = column(&a, "convergence.csv", "mean_dh");
    assert_eq!(dh.len(), 2);
    assert!(dh.iter().all(|x| *x >= 0.0));
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let extra = "[weights]\ngrid_size = 4\n[portfolio]\npaths = 2\ninner_samples = 10\nweight_ids = [1]\nlevels = [20]";
    let cfg = small("example3", extra);
    for cmd in [Command::Solve, Command::Portfolio] {
        let a = run(cmd, &cfg, Some(1)).unwrap();
        assert_eq!(a.files, run(cmd, &cfg, Some(1)).unwrap().files);
        assert_eq!(a.files, run(cmd, &cfg, Some(8)).unwrap().files);
    }
}

#[test]
fn binary_writes_files_and_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_incompref");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let st = Process::new(bin).args(["frontier", "--preset", "example1_case1", "--out"]).arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("frontier.csv").exists());

    let st = Process::new(bin).args(["solve", "--preset", "nope"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("unknown preset"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "preset = \"example2\"\n[grid]\nsteps = \"many\"\n").unwrap();
    let st = Process::new(bin).args(["solve", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("grid.steps"));

    let st = Process::new(bin).args(["solve", "--preset", "example2", "--threads", "0"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
}
