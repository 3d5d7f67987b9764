//! Randomized invariants that need no experiment data. Each check runs a
//! fixed number of cases from a deterministic generator.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseResult, TestRng, TestRunner};

use wrom::config::ExperimentConfig;
use wrom::diagnostics::{polygon_vertices, wachspress_weights};
use wrom::flow::{Simulator, SECONDS_PER_YEAR};
use wrom::greedy::cayley_menger_volume;
use wrom::pod;
use wrom::simplex::{project_to_simplex, solve, AtomSystem, QpSettings, SimplexWeights};
use wrom::transport::{barycenter, profile_to_icdf, w2_distance, DiscreteIcdf, Domain};

pub type Check = (&'static str, fn() -> Result<(), String>);

pub const ALL: [Check; 9] = [
    ("simplex projection optimality", projection_is_closest_simplex_point),
    ("QP vs exhaustive active-set oracle", qp_matches_exhaustive_oracle),
    (
        "residual nonincreasing with more atoms",
        residual_is_nonincreasing_with_exact_solves,
    ),
    ("barycenter vertex identity", barycenter_at_vertex_is_the_atom),
    ("W2 metric axioms", w2_is_a_metric),
    (
        "Wachspress partition of unity and linear precision",
        wachspress_partition_and_precision,
    ),
    ("POD projection error monotone", pod_projection_error_is_nonincreasing),
    (
        "Cayley-Menger volume vs Gram determinant",
        cayley_menger_matches_gram_determinant,
    ),
    (
        "flow mass balance and maximum principle",
        flow_conserves_water_and_stays_in_bounds,
    ),
];

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> TestCaseResult) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn unit() -> Domain {
    Domain::new(0.0, 1.0).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Nondecreasing vector from nonnegative increments.
fn monotone(start: f64, steps: &[f64]) -> DiscreteIcdf {
    let mut acc = start;
    let mut values = vec![acc];
    for s in steps {
        acc += s;
        values.push(acc);
    }
    DiscreteIcdf { values }
}

fn icdf_strategy(m: usize) -> impl Strategy<Value = DiscreteIcdf> {
    (-1.0..1.0f64, prop::collection::vec(0.0..0.3f64, m - 1)).prop_map(|(s, d)| monotone(s, &d))
}

fn profile_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_filter("positive mass", |v| v.iter().sum::<f64>() > 1e-3)
}

/// Minimum of `(1/M)||A w - f||^2` on the simplex, by enumerating supports and
/// solving the equality-constrained problem on each.
pub fn exhaustive_qp(atoms: &[DiscreteIcdf], target: &DiscreteIcdf) -> f64 {
    let n = atoms.len();
    let m = target.len();
    let a = DMatrix::from_fn(m, n, |i, j| atoms[j].values[i]);
    let f = DVector::from_column_slice(&target.values);
    let objective = |w: &DVector<f64>| (&a * w - &f).norm_squared() / m as f64;
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        // [2 G  1; 1^T 0] [w; mu] = [2 b; 1]
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(r, c)] = 2.0 * a.column(i).dot(&a.column(j));
            }
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
            rhs[r] = 2.0 * a.column(i).dot(&f);
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if (0..k).any(|r| sol[r] < -1e-12 || !sol[r].is_finite()) {
            continue;
        }
        let mut w = DVector::zeros(n);
        for (r, &i) in support.iter().enumerate() {
            w[i] = sol[r].max(0.0);
        }
        w /= w.sum();
        best = best.min(objective(&w));
    }
    best
}

pub fn projection_is_closest_simplex_point() -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-3.0..3.0f64, 1..8),
        prop::collection::vec(0.0..1.0f64, 8),
    );
    check(1000, strategy, |(v, raw)| {
        let p = project_to_simplex(&v);
        let sum: f64 = p.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.values().iter().all(|&x| x >= 0.0));
        let u = &raw[..v.len()];
        let total: f64 = u.iter().sum();
        prop_assume!(total > 1e-9);
        let u: Vec<f64> = u.iter().map(|x| x / total).collect();
        prop_assert!(dist(p.values(), &v) <= dist(&u, &v) + 1e-12);
        Ok(())
    })
}

pub fn qp_matches_exhaustive_oracle() -> Result<(), String> {
    let strategy = (
        1usize..=3,
        prop::collection::vec(icdf_strategy(12), 3),
        icdf_strategy(12),
    );
    check(200, strategy, |(n, atoms, target)| {
        let atoms = &atoms[..n];
        let system = AtomSystem::new(atoms).unwrap();
        let problem = system.problem(&target).unwrap();
        let res = solve(&problem, &SimplexWeights::uniform(n), QpSettings::default()).unwrap();
        let oracle = exhaustive_qp(atoms, &target);
        prop_assert!(
            (res.objective - oracle).abs() < 1e-8,
            "solver {} oracle {}",
            res.objective,
            oracle
        );
        Ok(())
    })
}

pub fn residual_is_nonincreasing_with_exact_solves() -> Result<(), String> {
    check(200, prop::collection::vec(icdf_strategy(10), 4..8), |train| {
        let mut prev = f64::INFINITY;
        for n in 1..=3 {
            let atoms = &train[..n];
            let worst = train.iter().map(|t| exhaustive_qp(atoms, t)).fold(0.0, f64::max);
            prop_assert!(worst <= prev + 1e-14);
            prev = worst;
        }
        Ok(())
    })
}

pub fn barycenter_at_vertex_is_the_atom() -> Result<(), String> {
    let strategy = (prop::collection::vec(icdf_strategy(20), 1..6), 0usize..6);
    check(200, strategy, |(atoms, pick)| {
        let i = pick % atoms.len();
        let b = barycenter(&atoms, &SimplexWeights::vertex(atoms.len(), i)).unwrap();
        prop_assert_eq!(&b, &atoms[i]);
        Ok(())
    })
}

pub fn w2_is_a_metric() -> Result<(), String> {
    let strategy = (profile_strategy(40), profile_strategy(40), profile_strategy(40));
    check(200, strategy, |(a, b, c)| {
        let m = 42;
        let [a, b, c] = [a, b, c].map(|p| profile_to_icdf(&p, m, unit()).unwrap());
        let ab = w2_distance(&a, &b).unwrap();
        let bc = w2_distance(&b, &c).unwrap();
        let ac = w2_distance(&a, &c).unwrap();
        prop_assert_eq!(w2_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, w2_distance(&b, &a).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
        Ok(())
    })
}

pub fn wachspress_partition_and_precision() -> Result<(), String> {
    let strategy = (3usize..10, prop::collection::vec(0.0..1.0f64, 10));
    check(500, strategy, |(n, raw)| {
        let total: f64 = raw[..n].iter().sum();
        prop_assume!(total > 1e-6);
        let v = polygon_vertices(n);
        let x = raw[..n].iter().zip(&v).fold([0.0, 0.0], |acc, (r, p)| {
            [acc[0] + r / total * p[0], acc[1] + r / total * p[1]]
        });
        let w = wachspress_weights(x, n).unwrap();
        let sum: f64 = w.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        let y = w
            .values()
            .iter()
            .zip(&v)
            .fold([0.0, 0.0], |acc, (wi, p)| [acc[0] + wi * p[0], acc[1] + wi * p[1]]);
        prop_assert!((y[0] - x[0]).abs() < 1e-10 && (y[1] - x[1]).abs() < 1e-10);
        Ok(())
    })
}

pub fn pod_projection_error_is_nonincreasing() -> Result<(), String> {
    let strategy = prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 15), 1..10);
    check(200, strategy, |snaps| {
        let basis = pod::compute(&snaps).unwrap();
        for s in &snaps {
            let mut prev = f64::INFINITY;
            for n in 0..=basis.n_modes() {
                let r = pod::reconstruct(&basis, s, n).unwrap();
                let e = dist(s, &r);
                prop_assert!(e <= prev + 1e-12);
                prev = e;
            }
            prop_assert!(prev <= 1e-9 * (1.0 + dist(s, &vec![0.0; s.len()])));
        }
        Ok(())
    })
}

pub fn cayley_menger_matches_gram_determinant() -> Result<(), String> {
    check(200, prop::collection::vec(icdf_strategy(8), 2..6), |atoms| {
        let k = atoms.len() - 1;
        let m = atoms[0].len() as f64;
        let e = DMatrix::from_fn(atoms[0].len(), k, |i, j| {
            (atoms[j + 1].values[i] - atoms[0].values[i]) / m.sqrt()
        });
        let det = (e.transpose() * &e).determinant().max(0.0);
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let volume = det.sqrt() / fact;
        let regular = ((k + 1) as f64).sqrt() / (fact * 2f64.powf(k as f64 / 2.0));
        let oracle = volume / regular;
        prop_assume!(oracle > 1e-6);
        let cm = cayley_menger_volume(&atoms);
        prop_assert!((cm - oracle).abs() <= 1e-6 * oracle, "cm {} oracle {}", cm, oracle);
        Ok(())
    })
}

/// Random draws inside the parameter boxes of both bundled setups.
pub fn flow_conserves_water_and_stays_in_bounds() -> Result<(), String> {
    let strategy = (any::<bool>(), 0.0..1.0f64, 0.0..1.0f64, 0.2..5.0f64);
    check(50, strategy, |(second, u, v, years)| {
        let config = if second {
            ExperimentConfig::example2()
        } else {
            ExperimentConfig::example1()
        };
        let y: Vec<f64> = config
            .axes
            .iter()
            .zip([u, v])
            .map(|(axis, r)| {
                let lo = axis.values[0];
                let hi = axis.values[axis.values.len() - 1];
                lo + r * (hi - lo)
            })
            .collect();
        let problem = config.problem_for(&y).unwrap();
        let mut sim = Simulator::new(&problem).unwrap();
        let dx = problem.grid.dx_meters();
        let stored = |s: &[f64]| -> f64 { s.iter().zip(&problem.rock.porosity).map(|(s, phi)| s * phi * dx).sum() };
        let initial = stored(sim.saturation());
        let end = years * SECONDS_PER_YEAR;
        let mut inflow = 0.0;
        let mut scale = 0.0;
        while sim.time() < end {
            let r = sim.step(end - sim.time()).unwrap();
            inflow += r.net_inflow;
            scale += r.net_inflow.abs();
        }
        let change = stored(sim.saturation()) - initial;
        prop_assert!(
            (change - inflow).abs() <= 1e-8 * scale,
            "change {} inflow {}",
            change,
            inflow
        );
        let lo = problem.bc.s_initial.min(problem.bc.s_inflow);
        let hi = problem.bc.s_initial.max(problem.bc.s_inflow);
        prop_assert!(sim.saturation().iter().all(|&s| s >= lo - 1e-12 && s <= hi + 1e-12));
        Ok(())
    })
}
