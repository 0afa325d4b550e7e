use levy_filter::filter::{resample, systematic_indices, ParticleCloud, ResamplePolicy};
use levy_filter::io::{read_observation_csv, write_observation_csv};
use levy_filter::model::{apply_generator, build_family, test_functions, Params, SharedTest, TestFunction};
use levy_filter::mollify::{energy_distance, Atoms, QuadGrid};
use levy_filter::simulate::{project_observation, simulate_path, TimeGrid};
use proptest::prelude::*;

/// `a F + b G`
struct Combo {
    a: f64,
    f: SharedTest,
    b: f64,
    g: SharedTest,
}

impl TestFunction for Combo {
    fn name(&self) -> String {
        "combo".into()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.a * self.f.value(x) + self.b * self.g.value(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let mut tmp = vec![0.0; grad.len()];
        self.f.gradient(x, grad);
        self.g.gradient(x, &mut tmp);
        for (o, t) in grad.iter_mut().zip(&tmp) {
            *o = self.a * *o + self.b * t;
        }
    }
    fn hessian(&self, x: &[f64], hess: &mut [f64]) {
        let mut tmp = vec![0.0; hess.len()];
        self.f.hessian(x, hess);
        self.g.hessian(x, &mut tmp);
        for (o, t) in hess.iter_mut().zip(&tmp) {
            *o = self.a * *o + self.b * t;
        }
    }
}

fn atoms(max: usize) -> impl Strategy<Value = Atoms> {
    prop::collection::vec((-2.0..2.0f64, -1.0..1.0f64), 1..max)
        .prop_map(|v| Atoms::new(1, v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect()).unwrap())
}

const NAMES: [&str; 5] = ["bump", "hermite1", "hermite2", "x", "x2"];
const FAMILIES: [&str; 4] = ["saturated_affine", "trigonometric", "uninformative", "linear_gaussian"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_linear(
        fam in 0..FAMILIES.len(), i in 0..NAMES.len(), j in 0..NAMES.len(),
        a in -2.0..2.0f64, b in -2.0..2.0f64, x in -2.0..2.0f64, t in 0.0..1.0f64,
    ) {
        let spec = build_family(FAMILIES[fam], &Params::new()).unwrap().spec;
        let f = test_functions::by_name(NAMES[i], 1).unwrap();
        let g = test_functions::by_name(NAMES[j], 1).unwrap();
        let lf = apply_generator(&spec, f.as_ref(), t, &[x]).unwrap().value;
        let lg = apply_generator(&spec, g.as_ref(), t, &[x]).unwrap().value;
        let combo = Combo { a, f, b, g };
        let lc = apply_generator(&spec, &combo, t, &[x]).unwrap().value;
        let expected = a * lf + b * lg;
        prop_assert!((lc - expected).abs() <= 1e-9 * (1.0 + expected.abs()), "{} vs {}", lc, expected);
    }

    #[test]
    fn energy_distance_is_a_pseudometric(m1 in atoms(5), m2 in atoms(5), m3 in atoms(5), eps in 0.2..1.5f64) {
        let grid = QuadGrid::auto(&[&m1, &m2, &m3], eps).unwrap();
        let d = |p: &Atoms, q: &Atoms| energy_distance(p, q, eps, &grid).unwrap();
        prop_assert_eq!(d(&m1, &m1), 0.0);
        prop_assert_eq!(d(&m1, &m2), d(&m2, &m1));
        prop_assert!(d(&m1, &m3) <= d(&m1, &m2) + d(&m2, &m3) + 1e-12);
    }

    #[test]
    fn ess_lies_between_one_and_n(lw in prop::collection::vec(-30.0..5.0f64, 1..200)) {
        let n = lw.len();
        let cloud = ParticleCloud { log_weights: lw, ..ParticleCloud::uniform(0.0, 1, vec![0.0; n]) };
        let ess = cloud.ess().unwrap();
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= n as f64 + 1e-9, "ess {} of {}", ess, n);
    }

    #[test]
    fn systematic_counts_are_floor_or_ceil(raw in prop::collection::vec(0.01..1.0f64, 1..100), u in 0.0..1.0f64) {
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let n = w.len();
        let mut idx = Vec::new();
        systematic_indices(&w, u, &mut idx);
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        let mut counts = vec![0usize; n];
        for i in idx {
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let e = wi * n as f64;
            prop_assert!((*c as f64) >= (e - 1e-9).floor() && (*c as f64) <= (e + 1e-9).ceil(), "count {} expected {}", c, e);
        }
    }

    #[test]
    fn resampling_preserves_mass(lw in prop::collection::vec(-8.0..0.0f64, 2..100), seed in any::<u64>()) {
        let n = lw.len();
        let positions: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let cloud = ParticleCloud { log_weights: lw, ..ParticleCloud::uniform(0.3, 1, positions) };
        let out = resample(&cloud, ResamplePolicy { ess_threshold: 1.1 }, seed).unwrap();
        prop_assert_eq!(out.len(), n);
        let (a, b) = (cloud.mass().unwrap(), out.mass().unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a, "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn observation_files_round_trip(fam in 0..FAMILIES.len(), steps in 2usize..40, seed in any::<u64>()) {
        let sc = build_family(FAMILIES[fam], &Params::new()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let obs = project_observation(&simulate_path(&sc.spec, grid, &sc.prior, &sc.y0, seed).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        write_observation_csv(&path, &obs).unwrap();
        prop_assert_eq!(read_observation_csv(&path).unwrap(), obs);
    }
}
