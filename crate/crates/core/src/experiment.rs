//! Experiment commands: each reads its inputs from an output directory,
//! computes one stage and writes its artifacts next to them.
//!
//! Layout under the output directory:
//!
//! ```text
//! store/      manifest.json, snapshots.csv, parts/
//! offline/    dictionary.json, atoms.csv, model.json, tables.csv,
//!             report.csv, training_errors.csv
//! pod/        singular_values.csv, modes.csv, errors.csv
//! tables.csv
//! diag/       condition.csv, volume.csv
//! landscape/  n{atoms}_snapshot{index}.csv
//! online/     reconstructions.csv, errors.csv
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::diagnostics::{self, condition_curve, energy_landscape, series_table, volume_curve, LandscapeGrid};
use crate::error::{Error, Result};
use crate::greedy::{self, Dictionary, GreedyReport, GreedyRun};
use crate::online::{self, Extrapolation, ProfileLayout, ReducedModel};
use crate::pod::{self, ErrorStat};
use crate::simplex::{self, init_weights};
use crate::snapshot::{relative_l1_error, ParameterPoint, Snapshot};
use crate::store::{format_f64, generate_store, SnapshotStore, Table, MANIFEST_FILE};
use crate::transport::{profile_to_icdf, w2_distance, DiscreteIcdf, Domain};

pub const STORE_DIR: &str = "store";
pub const OFFLINE_DIR: &str = "offline";
pub const POD_DIR: &str = "pod";
pub const DIAG_DIR: &str = "diag";
pub const LANDSCAPE_DIR: &str = "landscape";
pub const ONLINE_DIR: &str = "online";
pub const TABLES_FILE: &str = "tables.csv";
const TRAINING_ERRORS_FILE: &str = "training_errors.csv";
const REPORT_FILE: &str = "report.csv";

/// Marker written in tables where a tolerance is not reached.
pub const UNREACHED: &str = "-";

/// A preset name (`example1`, `example2`) or a path to a JSON config.
pub fn load_config(spec: &str) -> Result<ExperimentConfig> {
    match spec {
        "example1" => Ok(ExperimentConfig::example1()),
        "example2" => Ok(ExperimentConfig::example2()),
        path => {
            let cfg = ExperimentConfig::load(Path::new(path))?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

/// Explicit directory, else the config's `output_dir`, else `out/<name>`.
pub fn output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name))
}

pub fn profile_layout(config: &ExperimentConfig) -> ProfileLayout {
    ProfileLayout {
        n_cells: config.grid.n_cells,
        dx: config.grid.dx(),
        domain: Domain {
            x_min: config.grid.x_min,
            x_max: config.grid.x_max,
        },
    }
}

pub fn cmd_generate(config: &ExperimentConfig, out: &Path) -> Result<SnapshotStore> {
    config.validate()?;
    generate_store(config, &out.join(STORE_DIR), None)
}

pub fn load_store(out: &Path) -> Result<SnapshotStore> {
    let dir = out.join(STORE_DIR);
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(Error::InvalidInput(format!(
            "no snapshot store in {}; run `generate` first",
            dir.display()
        )));
    }
    SnapshotStore::read(&dir)
}

/// Icdfs of the given snapshots.
pub fn training_icdfs(snapshots: &[Snapshot], config: &ExperimentConfig) -> Result<Vec<DiscreteIcdf>> {
    let m = config.icdf_nodes();
    let domain = profile_layout(config).domain;
    snapshots
        .par_iter()
        .map(|s| profile_to_icdf(&s.values, m, domain))
        .collect()
}

/// Relative L1 training errors with a given dictionary size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingErrors {
    pub n_atoms: usize,
    pub mean_l1: f64,
    pub max_l1: f64,
    pub mean_w2: f64,
    pub max_w2: f64,
}

fn training_errors_table(rows: &[TrainingErrors]) -> Table {
    let mut t = Table::new(["n_atoms", "mean_l1", "max_l1", "mean_w2", "max_w2"]);
    for r in rows {
        t.push(vec![
            r.n_atoms.to_string(),
            format_f64(r.mean_l1),
            format_f64(r.max_l1),
            format_f64(r.mean_w2),
            format_f64(r.max_w2),
        ]);
    }
    t
}

pub fn read_training_errors(path: &Path) -> Result<Vec<TrainingErrors>> {
    let rows = Table::read(path)?.numeric_rows(path)?;
    rows.into_iter()
        .map(|r| {
            if r.len() != 5 {
                return Err(Error::format(path, "training error rows need 5 columns"));
            }
            Ok(TrainingErrors {
                n_atoms: r[0] as usize,
                mean_l1: r[1],
                max_l1: r[2],
                mean_w2: r[3],
                max_w2: r[4],
            })
        })
        .collect()
}

/// Smallest dictionary size whose mean relative L1 training error is below `eps`.
pub fn n_gbar(errors: &[TrainingErrors], eps: f64) -> Option<usize> {
    errors.iter().find(|e| e.mean_l1 < eps).map(|e| e.n_atoms)
}

#[derive(Debug, Clone)]
pub struct OfflineOutput {
    pub run: GreedyRun,
    pub training: Vec<TrainingErrors>,
    pub model: ReducedModel,
}

/// Greedy training, per-size training errors and the fitted reduced model,
/// written to `offline/`.
pub fn cmd_offline(config: &ExperimentConfig, out: &Path, n_max: Option<usize>) -> Result<OfflineOutput> {
    config.validate()?;
    let store = load_store(out)?;
    let mut settings = config.greedy;
    if let Some(n) = n_max {
        settings.n_max = n;
    }
    let result = offline(config, &store.snapshots, &settings)?;
    let dir = out.join(OFFLINE_DIR);
    result.model.save(&dir)?;
    result.run.report.save(&dir.join(REPORT_FILE))?;
    training_errors_table(&result.training).write(&dir.join(TRAINING_ERRORS_FILE))?;
    Ok(result)
}

/// The offline stage without any file output.
pub fn offline(
    config: &ExperimentConfig,
    snapshots: &[Snapshot],
    settings: &greedy::GreedySettings,
) -> Result<OfflineOutput> {
    let train = training_icdfs(snapshots, config)?;
    let params: Vec<ParameterPoint> = snapshots.iter().map(|s| s.z.clone()).collect();
    let layout = profile_layout(config);
    let mut training = Vec::new();
    let mut failure = None;
    let run = greedy::run(&train, &params, settings, config.qp, |dict, step| {
        if failure.is_some() {
            return;
        }
        match l1_errors(dict, &step.weights, snapshots, layout) {
            Ok(l1) => training.push(TrainingErrors {
                n_atoms: dict.len(),
                mean_l1: mean(&l1),
                max_l1: l1.iter().copied().fold(0.0, f64::max),
                mean_w2: step.mean,
                max_w2: step.errors.iter().copied().fold(0.0, f64::max),
            }),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let masses: Vec<f64> = snapshots.iter().map(|s| s.mass).collect();
    let model = online::fit(run.dictionary.clone(), &params, &run.weights, &masses, layout)?;
    Ok(OfflineOutput { run, training, model })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Relative L1 error of every stored snapshot against its barycentric
/// reconstruction with the given weights and the exact mass.
pub fn l1_errors(
    dict: &Dictionary,
    weights: &[simplex::SimplexWeights],
    snapshots: &[Snapshot],
    layout: ProfileLayout,
) -> Result<Vec<f64>> {
    snapshots
        .par_iter()
        .zip(weights)
        .map(|(s, w)| {
            let r = online::reconstruct_profile(dict, w, s.mass, layout)?;
            Ok(relative_l1_error(&s.values, &r))
        })
        .collect()
}

/// POD modes-to-tolerance statistics.
#[derive(Debug, Clone)]
pub struct PodOutput {
    pub basis: pod::PodBasis,
    /// `(mean, max)` relative L1 error per mode count, starting at one mode.
    pub summary: Vec<(f64, f64)>,
}

pub fn cmd_pod(config: &ExperimentConfig, out: &Path, tolerances: &[f64]) -> Result<PodOutput> {
    config.validate()?;
    check_tolerances(tolerances)?;
    let store = load_store(out)?;
    let cols: Vec<Vec<f64>> = store.snapshots.iter().map(|s| s.values.clone()).collect();
    let basis = pod::compute(&cols)?;
    let summary = pod::summarize(&pod::error_table(&basis, &cols));
    let dir = out.join(POD_DIR);

    let mut sv = Table::new(["mode", "singular_value"]);
    for (i, s) in basis.singular_values.iter().enumerate() {
        sv.push(vec![(i + 1).to_string(), format_f64(*s)]);
    }
    sv.write(&dir.join("singular_values.csv"))?;
    let mut modes = Table::new((1..=basis.n_modes()).map(|i| format!("mode_{i}")));
    for k in 0..basis.dim() {
        let row: Vec<f64> = basis.modes.iter().map(|m| m[k]).collect();
        modes.push_numbers(&row);
    }
    modes.write(&dir.join("modes.csv"))?;
    pod_errors_table(&summary).write(&dir.join("errors.csv"))?;

    let mut t = Table::new(["epsilon", "n_pod_mean", "n_pod_max"]);
    for &eps in tolerances {
        t.push(vec![
            format_f64(eps),
            count_cell(pod::first_below(&summary, eps, ErrorStat::Mean)),
            count_cell(pod::first_below(&summary, eps, ErrorStat::Max)),
        ]);
    }
    t.write(&dir.join("modes_for_tolerance.csv"))?;
    Ok(PodOutput { basis, summary })
}

fn pod_errors_table(summary: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["n_modes", "mean_l1", "max_l1"]);
    for (i, (mean, max)) in summary.iter().enumerate() {
        t.push(vec![(i + 1).to_string(), format_f64(*mean), format_f64(*max)]);
    }
    t
}

fn read_pod_errors(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = Table::read(path)?.numeric_rows(path)?;
    rows.into_iter()
        .map(|r| {
            if r.len() != 3 {
                return Err(Error::format(path, "POD error rows need 3 columns"));
            }
            Ok((r[1], r[2]))
        })
        .collect()
}

fn count_cell(n: Option<usize>) -> String {
    n.map_or_else(|| UNREACHED.to_string(), |n| n.to_string())
}

fn check_tolerances(tolerances: &[f64]) -> Result<()> {
    if tolerances.is_empty() || tolerances.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput(
            "tolerances must be a nonempty list of positive numbers".into(),
        ));
    }
    Ok(())
}

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub epsilon: f64,
    pub n_gbar: Option<usize>,
    pub n_pod: Option<usize>,
    pub n_pod_max: Option<usize>,
}

/// Atoms and POD modes needed per tolerance, from the offline and POD outputs.
/// POD statistics are computed first when missing.
pub fn cmd_tables(config: &ExperimentConfig, out: &Path, tolerances: &[f64]) -> Result<Vec<ComparisonRow>> {
    config.validate()?;
    check_tolerances(tolerances)?;
    let training_path = out.join(OFFLINE_DIR).join(TRAINING_ERRORS_FILE);
    if !training_path.exists() {
        return Err(Error::InvalidInput(format!(
            "{} is missing; run `offline` first",
            training_path.display()
        )));
    }
    let training = read_training_errors(&training_path)?;
    let pod_path = out.join(POD_DIR).join("errors.csv");
    let summary = if pod_path.exists() {
        read_pod_errors(&pod_path)?
    } else {
        cmd_pod(config, out, tolerances)?.summary
    };
    let rows: Vec<ComparisonRow> = tolerances
        .iter()
        .map(|&eps| ComparisonRow {
            epsilon: eps,
            n_gbar: n_gbar(&training, eps),
            n_pod: pod::first_below(&summary, eps, ErrorStat::Mean),
            n_pod_max: pod::first_below(&summary, eps, ErrorStat::Max),
        })
        .collect();
    let mut t = Table::new(["epsilon", "n_gbar", "n_pod", "n_pod_max"]);
    for r in &rows {
        t.push(vec![
            format_f64(r.epsilon),
            count_cell(r.n_gbar),
            count_cell(r.n_pod),
            count_cell(r.n_pod_max),
        ]);
    }
    t.write(&out.join(TABLES_FILE))?;
    Ok(rows)
}

/// Conditioning and simplex-volume series from the greedy report.
pub fn cmd_diag(out: &Path) -> Result<GreedyReport> {
    let path = out.join(OFFLINE_DIR).join(REPORT_FILE);
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "{} is missing; run `offline` first",
            path.display()
        )));
    }
    let report = GreedyReport::load(&path)?;
    let dir = out.join(DIAG_DIR);
    series_table("condition", &condition_curve(&report)?).write(&dir.join("condition.csv"))?;
    series_table("volume", &volume_curve(&report)?).write(&dir.join("volume.csv"))?;
    Ok(report)
}

/// Landscape of one stored snapshot against the first `n_atoms` atoms of the
/// trained dictionary, with the QP optimum for comparison.
#[derive(Debug, Clone)]
pub struct LandscapeOutput {
    pub grid: LandscapeGrid,
    pub qp_weights: Vec<f64>,
    /// `log10` of the optimal W2 error.
    pub qp_log10_w2: f64,
}

pub fn cmd_landscape(
    config: &ExperimentConfig,
    out: &Path,
    snapshot: usize,
    n_atoms: usize,
    resolution: usize,
) -> Result<LandscapeOutput> {
    config.validate()?;
    let store = load_store(out)?;
    let dict = Dictionary::load(&out.join(OFFLINE_DIR))?;
    if n_atoms < 3 || n_atoms > dict.len() {
        return Err(Error::InvalidInput(format!(
            "landscape needs between 3 and {} atoms, got {n_atoms}",
            dict.len()
        )));
    }
    let s = store.snapshots.get(snapshot).ok_or_else(|| {
        Error::InvalidInput(format!(
            "snapshot index {snapshot} out of range (store has {})",
            store.len()
        ))
    })?;
    let target = profile_to_icdf(&s.values, config.icdf_nodes(), profile_layout(config).domain)?;
    let atoms = &dict.atoms[..n_atoms];
    let result = landscape(atoms, &target, resolution, config.qp)?;
    result.grid.to_table().write(
        &out.join(LANDSCAPE_DIR)
            .join(format!("n{n_atoms}_snapshot{snapshot}.csv")),
    )?;
    Ok(result)
}

/// Landscape and QP optimum of `target` against `atoms`.
pub fn landscape(
    atoms: &[DiscreteIcdf],
    target: &DiscreteIcdf,
    resolution: usize,
    qp: simplex::QpSettings,
) -> Result<LandscapeOutput> {
    let grid = energy_landscape(atoms, target, resolution)?;
    let system = simplex::AtomSystem::new(atoms)?;
    let problem = system.problem(target)?;
    let d = atoms
        .iter()
        .map(|a| w2_distance(a, target))
        .collect::<Result<Vec<_>>>()?;
    let res = simplex::solve(&problem, &init_weights(&d), qp)?;
    Ok(LandscapeOutput {
        grid,
        qp_log10_w2: res.objective.max(0.0).sqrt().log10(),
        qp_weights: res.weights.into_inner(),
    })
}

/// Reconstructions at the given points, with errors against stored truth
/// where a snapshot with the same parameters exists.
#[derive(Debug, Clone)]
pub struct OnlineOutput {
    pub reconstructions: Vec<Snapshot>,
    /// `(point index, relative L1 error)` for points with a stored truth.
    pub errors: Vec<(usize, f64)>,
}

pub fn cmd_online(
    out: &Path,
    points: &[ParameterPoint],
    truth: Option<&SnapshotStore>,
    extrapolation: Extrapolation,
) -> Result<OnlineOutput> {
    let model = ReducedModel::load(&out.join(OFFLINE_DIR))?.with_extrapolation(extrapolation);
    let reconstructions = points
        .par_iter()
        .map(|z| model.reconstruct(z))
        .collect::<Result<Vec<_>>>()?;
    let mut errors = Vec::new();
    if let Some(store) = truth {
        for (k, (z, r)) in points.iter().zip(&reconstructions).enumerate() {
            if let Some(s) = store.snapshots.iter().find(|s| s.z == *z) {
                errors.push((k, relative_l1_error(&s.values, &r.values)));
            }
        }
    }
    let dir = out.join(ONLINE_DIR);
    let dim = points.first().map_or(1, |p| p.y.len() + 1);
    let n_cells = model.layout.n_cells;
    let mut header = vec!["t".to_string()];
    header.extend((1..dim).map(|d| format!("y{d}")));
    header.push("mass".into());
    header.extend((0..n_cells).map(|i| format!("s{i}")));
    let mut t = Table::new(header);
    for r in &reconstructions {
        let mut row = r.z.coords();
        row.push(r.mass);
        row.extend_from_slice(&r.values);
        t.push_numbers(&row);
    }
    t.write(&dir.join("reconstructions.csv"))?;
    let mut e = Table::new(["point", "relative_l1"]);
    for &(k, err) in &errors {
        e.push(vec![k.to_string(), format_f64(err)]);
    }
    e.write(&dir.join("errors.csv"))?;
    Ok(OnlineOutput {
        reconstructions,
        errors,
    })
}

/// Parameter points from a CSV file with columns `t, y1, ...`.
pub fn read_points(path: &Path) -> Result<Vec<ParameterPoint>> {
    let rows = Table::read(path)?.numeric_rows(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no points", path.display())));
    }
    Ok(rows.iter().map(|r| ParameterPoint::from_coords(r)).collect())
}

pub use diagnostics::polygon_point;
