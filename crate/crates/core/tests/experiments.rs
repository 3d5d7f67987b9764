//! Behaviour of the full pipeline on the two bundled setups.

mod common;

use wrom::config::ExperimentConfig;
use wrom::experiment;
use wrom::pod;
use wrom::snapshot::relative_l1_error;
use wrom::Snapshot;

use common::{example1, example2};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

fn find<'a>(snaps: &'a [Snapshot], t: f64, y: &[f64]) -> &'a Snapshot {
    snaps
        .iter()
        .find(|s| {
            close(s.z.t, t)
                && s.z
                    .y
                    .iter()
                    .zip(y)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1e-30))
        })
        .expect("snapshot at requested parameters")
}

/// Mean slope magnitude over `w` cells ending just before (`left`) or
/// starting at cell `i`.
fn slope(s: &[f64], i: usize, w: usize, left: bool) -> f64 {
    let (a, b) = if left { (i - w, i - 1) } else { (i, i + w - 1) };
    (s[b] - s[a]).abs() / (b - a) as f64
}

#[test]
fn sweeps_have_the_expected_sizes() {
    assert_eq!(example1().snapshots.len(), 750);
    assert_eq!(example2().snapshots.len(), 700);
    assert_eq!(ExperimentConfig::example1().n_snapshots(), 750);
    assert_eq!(ExperimentConfig::example2().n_snapshots(), 700);
}

#[test]
fn two_and_three_atoms_reach_the_coarse_tolerances() {
    let t = &example1().offline.training;
    assert_eq!(t[0].n_atoms, 2);
    assert!(t[0].mean_l1 < 0.1, "n=2: {}", t[0].mean_l1);
    assert_eq!(t[1].n_atoms, 3);
    assert!(t[1].mean_l1 < 0.05, "n=3: {}", t[1].mean_l1);
}

#[test]
fn online_at_training_nodes_matches_offline_errors() {
    let d = example1();
    let mut settings = d.config.greedy;
    settings.n_max = 3;
    let small = experiment::offline(&d.config, &d.snapshots, &settings).unwrap();
    let errors: Vec<f64> = d
        .snapshots
        .iter()
        .map(|s| relative_l1_error(&s.values, &small.model.reconstruct(&s.z).unwrap().values))
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let offline = small.training.last().unwrap();
    assert_eq!(offline.n_atoms, 3);
    assert!((mean - offline.mean_l1).abs() < 1e-9, "{mean} vs {}", offline.mean_l1);
    assert!(mean < 0.05);

    // atoms are reproduced up to the transport pipeline floor
    for &i in &small.run.dictionary.indices {
        assert!(errors[i] < 1e-2, "atom {i}: {}", errors[i]);
    }
}

#[test]
fn three_atom_weights_vary_smoothly_in_time() {
    let d = example1();
    let mut settings = d.config.greedy;
    settings.n_max = 3;
    let model = experiment::offline(&d.config, &d.snapshots, &settings).unwrap().model;
    let axes = &model.grid_axes;
    let mut strides = vec![1; axes.len()];
    for k in (0..axes.len() - 1).rev() {
        strides[k] = strides[k + 1] * axes[k + 1].len();
    }
    let mut worst: f64 = 0.0;
    for flat in 0..model.weight_tables.len() {
        // axis 0 is time
        let i = flat / strides[0];
        if i + 1 < axes[0].len() {
            let (a, b) = (&model.weight_tables[flat], &model.weight_tables[flat + strides[0]]);
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst <= 0.5, "largest jump between adjacent times {worst}");
}

#[test]
fn greedy_residual_decreases() {
    let r = &example1().offline.run.report;
    assert_eq!(r.n_atoms.last(), Some(&example1().config.greedy.n_max));
    assert!(r.delta.last().unwrap() < &(0.01 * r.delta[0]));
    let increases = r.delta.windows(2).filter(|w| w[1] > w[0]).count();
    let nonconverged = r.nonconverged.iter().filter(|&&k| k > 0).count();
    assert!(
        increases <= nonconverged,
        "{increases} increases, {nonconverged} steps with unconverged solves"
    );
}

#[test]
fn pod_modes_for_coarse_tolerance() {
    let n = example1().n_pod(0.1).unwrap();
    assert!((30..=55).contains(&n), "{n}");
}

#[test]
fn pod_error_gathers_at_the_front() {
    let d = example1();
    let cols: Vec<Vec<f64>> = d.snapshots.iter().map(|s| s.values.clone()).collect();
    let basis = pod::compute(&cols).unwrap();
    let half = 10;
    let share = (2 * half + 1) as f64 / cols[0].len() as f64;
    for n in [10, 20, 30, 40, 50] {
        let mut fractions: Vec<f64> = cols
            .iter()
            .step_by(5)
            .map(|s| {
                let front = (1..s.len())
                    .max_by(|&a, &b| (s[a - 1] - s[a]).abs().total_cmp(&(s[b - 1] - s[b]).abs()))
                    .unwrap();
                let r = pod::reconstruct(&basis, s, n).unwrap();
                let e: Vec<f64> = s.iter().zip(&r).map(|(a, b)| (a - b).abs()).collect();
                let near: f64 = e[front.saturating_sub(half)..(front + half + 1).min(e.len())]
                    .iter()
                    .sum();
                near / e.iter().sum::<f64>()
            })
            .collect();
        fractions.sort_by(f64::total_cmp);
        let median = fractions[fractions.len() / 2];
        assert!(median > 10.0 * share, "n={n}: median front share {median}");
    }
}

#[test]
fn interface_produces_a_kink_that_the_barycenter_misses() {
    let d = example2();
    let mut settings = d.config.greedy;
    settings.n_max = 3;
    let model = experiment::offline(&d.config, &d.snapshots, &settings).unwrap().model;
    let gamma = 0.2;
    let i = (gamma / d.config.grid.dx()).round() as usize;
    for t in [9.0, 10.0] {
        let s = find(&d.snapshots, t, &[7e-14, gamma]);
        let truth = slope(&s.values, i, 5, true) / slope(&s.values, i, 5, false);
        assert!(truth > 1.5, "t={t}: slope ratio {truth}");

        let r = model.reconstruct(&s.z).unwrap();
        let approx = slope(&r.values, i, 5, true) / slope(&r.values, i, 5, false);
        assert!(approx < truth / 2.0, "t={t}: reconstructed ratio {approx} vs {truth}");

        // error per cell near the interface exceeds the average over the wetted region
        let e: Vec<f64> = s.values.iter().zip(&r.values).map(|(a, b)| (a - b).abs()).collect();
        let wetted = s.values.iter().filter(|&&v| v > 1e-6).count();
        let near: f64 = e[i - 25..i + 25].iter().sum::<f64>() / 50.0;
        let mean = e.iter().sum::<f64>() / wetted as f64;
        assert!(near > mean, "t={t}: {near} vs {mean}");
    }
}

#[test]
fn tolerance_one_needs_minimal_sizes() {
    for d in [example1(), example2()] {
        assert_eq!(d.n_gbar(1.0), Some(2));
        // one uncentered mode can miss a sharp early front by more than its own mass
        let n = d.n_pod(1.0).unwrap();
        assert!(d.pod[..n - 1].iter().all(|&(mean, _)| mean >= 1.0));
        assert!(n <= 5, "{n}");
    }
}
