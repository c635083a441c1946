use approx::assert_abs_diff_eq;
use incompref::index_set::mean_se;
use incompref::stochastic::*;
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn market() -> MarketParams {
    MarketParams::constant(0.001, 0.02, 0.36)
}

fn exp_ou() -> MarketParams {
    MarketParams { kappa: 0.1, varsigma: -0.8, vol_model: VolModel::ExpOu, ..market() }
}

#[test]
fn grid_rejects_bad_input() {
    assert!(TimeGrid::new(1.0, 0).is_err());
    assert!(TimeGrid::new(0.0, 10).is_err());
    assert!(TimeGrid::new(f64::NAN, 10).is_err());
    let g = TimeGrid::new(2.0, 8).unwrap();
    assert_eq!(g.dt(), 0.25);
    assert_eq!(g.t(8), 2.0);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let a: Vec<u64> = (0..4).map(|_| stream_rng(1, 2, 3, 4).random()).collect();
    let b: Vec<u64> = (0..4).map(|_| stream_rng(1, 2, 3, 4).random()).collect();
    assert_eq!(a, b);
    let mut r1 = stream_rng(1, 2, 3, 4);
    let mut r2 = stream_rng(1, 2, 3, 5);
    let mut r3 = stream_rng(1, 2, 4, 4);
    let mut r4 = stream_rng(2, 2, 3, 4);
    let x: u64 = r1.random();
    assert_ne!(x, r2.random::<u64>());
    assert_ne!(x, r3.random::<u64>());
    assert_ne!(x, r4.random::<u64>());
}

#[test]
fn brownian_terminal_variance() {
    let g = TimeGrid::new(1.0, 50).unwrap();
    let xs: Vec<f64> = (0..20_000).map(|i| sample_path(&g, Seed::new(7, i)).unwrap().w[50]).collect();
    let (m, se) = mean_se(&xs);
    assert!(m.abs() < 4.0 * se);
    let v: f64 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    // Var of the sample second moment of N(0,1) is 2/n.
    assert!((v - 1.0).abs() < 4.0 * (2.0f64 / 20_000.0).sqrt());
}

#[test]
fn discounted_state_price_density_is_a_martingale() {
    let g = TimeGrid::new(1.0, 200).unwrap();
    for p in [market(), exp_ou()] {
        let sc = simulate(&g, &p, 11, 0, 10_000).unwrap();
        let xs: Vec<f64> = sc.iter().map(|s| s.xi(200)).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - (-p.r).exp()).abs() < 4.0 * se, "{m} vs {} (se {se})", (-p.r).exp());
    }
}

#[test]
fn deflated_asset_price_has_constant_mean() {
    let g = TimeGrid::new(1.0, 100).unwrap();
    let p = market();
    let xs: Vec<f64> = (0..10_000)
        .map(|i| {
            let path = sample_path(&g, Seed::new(3, i)).unwrap();
            let xi = state_price_density(&path, &p).unwrap();
            gbm_asset(&path, &p, 1.0).unwrap()[100] * xi[100]
        })
        .collect();
    let (m, se) = mean_se(&xs);
    assert!((m - 1.0).abs() < 4.0 * se);
}

#[test]
fn exp_ou_log_vol_moments() {
    let p = exp_ou();
    let g = TimeGrid::new(1.0, 200).unwrap();
    let xs: Vec<f64> = simulate(&g, &p, 5, 0, 10_000).unwrap().iter().map(|s| s.sigma[200].ln()).collect();
    let (m, se) = mean_se(&xs);
    let mean = p.sigma0.ln() * (-p.kappa).exp();
    assert!((m - mean).abs() < 4.0 * se);
    let var = p.varsigma * p.varsigma * (1.0 - (-2.0 * p.kappa).exp()) / (2.0 * p.kappa);
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((v / var - 1.0).abs() < 0.05, "{v} vs {var}");
}

#[test]
fn joint_density_has_unit_mass_and_reflection_marginal() {
    // Midpoint rule over (x1, s) with x2 = x1 - s, so cells align with the
    // boundary x2 = x1 of the support.
    let t = 0.7;
    let n = 800;
    let h = 8.0 / n as f64;
    let (mut mass, mut below) = (0.0, 0.0);
    let m_star = 0.5;
    for i in 0..n {
        let x1 = (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in 0..n {
            let s = (j as f64 + 0.5) * h;
            row += joint_density_max_bm(x1, x1 - s, t).unwrap() * h * h;
        }
        mass += row;
        if x1 < m_star {
            below += row;
        }
    }
    assert_abs_diff_eq!(mass, 1.0, epsilon = 2e-3);
    let phi = Normal::new(0.0, 1.0).unwrap();
    assert_abs_diff_eq!(below, 2.0 * phi.cdf(m_star / t.sqrt()) - 1.0, epsilon = 5e-3);
    assert_eq!(joint_density_max_bm(-0.1, -0.2, t).unwrap(), 0.0);
    assert!(joint_density_max_bm(0.1, 0.0, 0.0).is_err());
}

#[test]
fn restriction_keeps_observations() {
    let g = TimeGrid::new(1.0, 200).unwrap();
    let sc = simulate(&g, &exp_ou(), 9, 17, 1).unwrap().remove(0);
    assert_eq!(sc.id, 17);
    let coarse = sc.restrict(50, &exp_ou()).unwrap();
    assert_eq!(coarse.id, 17);
    for l in 0..=50 {
        assert_eq!(coarse.path.w[l], sc.path.w[4 * l]);
        assert!(coarse.path.wmax[l] <= sc.path.wmax[4 * l]);
    }
    assert!(sc.restrict(3, &exp_ou()).is_err());
}

#[test]
fn simulation_is_independent_of_thread_count() {
    let g = TimeGrid::new(1.0, 64).unwrap();
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| simulate(&g, &exp_ou(), 21, 0, 300).unwrap())
    };
    let (a, b) = (run(1), run(8));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.path, y.path);
        assert_eq!(x.ln_xi, y.ln_xi);
        assert_eq!(x.sigma, y.sigma);
    }
}

#[test]
fn invalid_market_is_rejected() {
    let g = TimeGrid::new(1.0, 4).unwrap();
    let bad = MarketParams::constant(0.0, 0.02, -0.1);
    assert!(simulate(&g, &bad, 0, 0, 2).is_err());
    let path = sample_path(&g, Seed::new(0, 0)).unwrap();
    assert!(exp_ou_vol(&path, &market()).is_err());
    assert!(gbm_asset(&path, &market(), 0.0).is_err());
}

proptest! {
    #[test]
    fn running_max_dominates_and_grows(dw in prop::collection::vec(-1.0f64..1.0, 1..60)) {
        let g = TimeGrid::new(1.0, dw.len()).unwrap();
        let p = BrownianPath::from_increments(g, &dw).unwrap();
        prop_assert_eq!(p.wmax[0], 0.0);
        for l in 0..dw.len() {
            prop_assert!(p.wmax[l + 1] >= p.wmax[l]);
            prop_assert!(p.wmax[l + 1] >= p.w[l + 1]);
            prop_assert!((p.dw(l) - dw[l]).abs() < 1e-12);
        }
    }
}
