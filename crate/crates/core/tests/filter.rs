use approx::assert_relative_eq;
use levy_filter::filter::{
    ks_residual, normalize_ks, pathwise_uniqueness_probe, zakai_filter, zakai_residual, FilterOptions, FilterTrajectory,
};
use levy_filter::model::{build_family, test_functions, Params, Scenario};
use levy_filter::oracle::{kalman_bucy, mc_conditional_oracle};
use levy_filter::simulate::{project_observation, simulate_path, ObservationRecord, TimeGrid};
use levy_filter::{Error, Exec};

fn family(name: &str, pairs: &[(&str, f64)]) -> Scenario {
    let p: Params = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    build_family(name, &p).unwrap()
}

fn record(sc: &Scenario, steps: usize, seed: u64) -> ObservationRecord {
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    project_observation(&simulate_path(&sc.spec, grid, &sc.prior, &sc.y0, seed).unwrap())
}

fn run(sc: &Scenario, obs: &ObservationRecord, opts: FilterOptions) -> FilterTrajectory {
    zakai_filter(obs, &sc.spec, &sc.prior, &opts).unwrap()
}

#[test]
fn starts_from_the_prior_with_unit_mass() {
    let sc = family("saturated_affine", &[]);
    let obs = record(&sc, 50, 3);
    let traj = run(&sc, &obs, FilterOptions::new(500, 9).with_clouds(10));
    let first = &traj.nodes[0];
    assert_eq!(first.t, 0.0);
    assert_relative_eq!(first.mass, 1.0, epsilon = 1e-14);
    assert_relative_eq!(first.ess, 500.0, epsilon = 1e-9);
    let cloud = traj.cloud_at(0).unwrap();
    let w = cloud.weights().unwrap();
    assert!(w.iter().all(|v| (v - w[0]).abs() < 1e-15));
    assert_eq!(traj.len(), obs.nodes());
}

#[test]
fn ks_identity_holds_at_every_node() {
    let sc = family("trigonometric", &[]);
    let obs = record(&sc, 100, 4);
    let traj = run(&sc, &obs, FilterOptions::new(400, 1).with_tests(test_functions::standard_family(1)));
    for s in &traj.nodes {
        for (pi, z) in s.tests.iter().zip(&s.zakai_tests) {
            assert_relative_eq!(pi * s.mass, *z, max_relative = 1e-12);
        }
    }
}

#[test]
fn normalization_keeps_summaries_and_rejects_zero_mass() {
    let sc = family("saturated_affine", &[]);
    let obs = record(&sc, 40, 5);
    let traj = run(&sc, &obs, FilterOptions::new(300, 2).with_clouds(8));
    let norm = normalize_ks(&traj).unwrap();
    assert!(norm.normalized && !traj.normalized);
    assert_eq!(norm.nodes, traj.nodes);
    for (_, c) in &norm.clouds {
        assert_relative_eq!(c.mass().unwrap(), 1.0, epsilon = 1e-12);
    }
    let mut broken = traj.clone();
    broken.nodes[7].mass = 0.0;
    assert!(matches!(normalize_ks(&broken), Err(Error::Degeneracy { .. })));
}

#[test]
fn constant_test_has_zero_ks_residual() {
    let sc = family("saturated_affine", &[("jump2_rate", 5.0)]);
    let obs = record(&sc, 100, 6);
    let opts = FilterOptions::new(500, 3).with_tests(test_functions::standard_family(1)).with_residuals(true);
    let traj = run(&sc, &obs, opts);
    assert!(ks_residual(&traj, &obs, &sc.spec, "one").unwrap().max_abs() <= 1e-10);
    let z = zakai_residual(&traj, &obs, &sc.spec, "one").unwrap();
    assert!(z.rms().is_finite());
    assert!(ks_residual(&traj, &obs, &sc.spec, "nope").is_err());
}

#[test]
fn noiseless_signal_tracks_the_euler_solution() {
    // All particles start at the same point and move deterministically, so
    // the posterior mean is the Euler path of dx = (a x + c) dt.
    let (a, c, x0) = (-1.0, 0.5, 1.0);
    let sc = family("linear_gaussian", &[("a", a), ("c", c), ("sigma0", 0.0), ("sigma1", 0.0), ("x0_mean", x0), ("x0_std", 0.0)]);
    let exact = -c / a + (x0 + c / a) * a.exp();
    let defect = |steps: usize| {
        let obs = record(&sc, steps, 7);
        let traj = run(&sc, &obs, FilterOptions::new(50, 1));
        let s = traj.nodes.last().unwrap();
        assert!(s.variance(0).abs() < 1e-12);
        (s.mean[0] - exact).abs()
    };
    let (coarse, fine) = (defect(200), defect(400));
    assert!(coarse < 2e-3, "{coarse}");
    assert!((fine / coarse - 0.5).abs() < 0.05, "{coarse} {fine}");
}

#[test]
fn backends_agree_exactly() {
    let sc = family("trigonometric", &[]);
    let obs = record(&sc, 60, 8);
    let opts = FilterOptions::new(3000, 4).with_tests(test_functions::standard_family(1)).with_clouds(20);
    let par = run(&sc, &obs, opts.clone().with_exec(Exec::Parallel));
    let seq = run(&sc, &obs, opts.with_exec(Exec::Sequential));
    assert_eq!(par.nodes, seq.nodes);
    assert_eq!(par.clouds.len(), seq.clouds.len());
    for ((_, a), (_, b)) in par.clouds.iter().zip(&seq.clouds) {
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.log_weights, b.log_weights);
    }
}

#[test]
fn probe_is_zero_for_identical_seeds_and_positive_otherwise() {
    let sc = family("saturated_affine", &[]);
    let obs = record(&sc, 40, 9);
    let opts = FilterOptions::new(400, 0).with_clouds(10);
    let same = pathwise_uniqueness_probe(&obs, &sc.spec, &sc.prior, &opts, (5, 5), 0.5).unwrap();
    assert!(same.distance.iter().all(|d| *d == 0.0));
    let diff = pathwise_uniqueness_probe(&obs, &sc.spec, &sc.prior, &opts, (5, 6), 0.5).unwrap();
    assert!(diff.sup() > 0.0 && diff.sup().is_finite());
    assert_eq!(same.times, diff.times);
}

#[test]
fn importance_sampling_oracle_matches_kalman() {
    let sc = family("linear_gaussian", &[]);
    let obs = record(&sc, 100, 10);
    let kb = kalman_bucy(sc.linear.as_ref().unwrap(), &obs).unwrap();
    for node in [25, 100] {
        let est = mc_conditional_oracle(&sc.spec, &sc.prior, &obs, &|x| x[0], 20_000, 11, node).unwrap();
        let z = (est.value - kb.mean_at(node)[0]) / est.se;
        assert!(z.abs() < 4.0, "node {node}: {} vs {} (se {})", est.value, kb.mean_at(node)[0], est.se);
    }
}
