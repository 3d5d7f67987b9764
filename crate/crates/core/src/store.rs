//! On-disk formats: snapshot stores, numeric CSV tables and atomic writes.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! table reads back bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::flow::run_simulation;
use crate::snapshot::{ParameterPoint, Snapshot};

pub const STORE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
const PARTS_DIR: &str = "parts";

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// A header plus rows of string cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| format_f64(*v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header = r.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_owned).collect());
        }
        Ok(Self { header, rows })
    }

    /// All cells parsed as `f64`.
    pub fn numeric_rows(&self, path: &Path) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| Error::format(path, format!("row {k}: not a number: {c:?}")))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn format_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

/// Grid, physics and sweep metadata of a snapshot store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub config: ExperimentConfig,
    pub axis_names: Vec<String>,
    pub n_cells: usize,
    /// Cell width in domain units (km).
    pub dx: f64,
    pub n_snapshots: usize,
    /// Column layout of the snapshot table.
    pub columns: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotStore {
    pub manifest: StoreManifest,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotStore {
    pub fn dx(&self) -> f64 {
        self.manifest.dx
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn params(&self) -> Vec<ParameterPoint> {
        self.snapshots.iter().map(|s| s.z.clone()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let table = snapshot_table(&self.manifest.axis_names, self.manifest.n_cells, &self.snapshots);
        table.write(&dir.join(SNAPSHOTS_FILE))?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: StoreManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let path = dir.join(SNAPSHOTS_FILE);
        let snapshots = read_snapshot_table(&path, manifest.axis_names.len(), manifest.n_cells, manifest.dx)?;
        if snapshots.len() != manifest.n_snapshots {
            return Err(Error::format(
                &path,
                format!("expected {} snapshots, found {}", manifest.n_snapshots, snapshots.len()),
            ));
        }
        Ok(Self { manifest, snapshots })
    }
}

fn snapshot_header(axis_names: &[String], n_cells: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(axis_names.iter().cloned());
    h.push("mass".into());
    h.extend((0..n_cells).map(|i| format!("s{i}")));
    h
}

fn snapshot_table(axis_names: &[String], n_cells: usize, snapshots: &[Snapshot]) -> Table {
    let mut t = Table::new(snapshot_header(axis_names, n_cells));
    for s in snapshots {
        let mut row = s.z.coords();
        row.push(s.mass);
        row.extend_from_slice(&s.values);
        t.push_numbers(&row);
    }
    t
}

fn read_snapshot_table(path: &Path, n_axes: usize, n_cells: usize, dx: f64) -> Result<Vec<Snapshot>> {
    let table = Table::read(path)?;
    let width = n_axes + 2 + n_cells;
    if table.header.len() != width {
        return Err(Error::format(
            path,
            format!("expected {width} columns, found {}", table.header.len()),
        ));
    }
    table
        .numeric_rows(path)?
        .into_iter()
        .map(|row| {
            let z = ParameterPoint::from_coords(&row[..=n_axes]);
            let mass = row[n_axes + 1];
            let values = row[n_axes + 2..].to_vec();
            let s = Snapshot { z, values, mass };
            let recomputed = crate::snapshot::profile_mass(&s.values, dx);
            if (recomputed - mass).abs() > 1e-12 * mass.abs().max(1e-300) {
                return Err(Error::format(
                    path,
                    format!("stored mass {mass} disagrees with profile"),
                ));
            }
            Ok(s)
        })
        .collect()
}

/// Progress callback for [`generate_store`]: `(point index, total points)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Run the full tensor sweep of `config` and write the store to `dir`.
///
/// Every parameter point is written to its own part file first; parts that
/// already exist and parse are reused, which makes interrupted runs resumable.
pub fn generate_store(config: &ExperimentConfig, dir: &Path, progress: Option<Progress<'_>>) -> Result<SnapshotStore> {
    use rayon::prelude::*;

    config.validate()?;
    let points = config.parameter_points();
    let axis_names = config.axis_names();
    let n_cells = config.grid.n_cells;
    let dx = config.grid.dx();
    let parts = dir.join(PARTS_DIR);
    fs::create_dir_all(&parts).map_err(|e| Error::io(&parts, e))?;

    let chunks: Vec<Result<Vec<Snapshot>>> = points
        .par_iter()
        .enumerate()
        .map(|(k, y)| {
            let part = parts.join(format!("point_{k:05}.csv"));
            if part.exists() {
                if let Ok(s) = read_snapshot_table(&part, y.len(), n_cells, dx) {
                    if s.len() == config.snapshot_times.len() && s.iter().all(|s| s.z.y == *y) {
                        return Ok(s);
                    }
                }
            }
            let problem = config.problem_for(y)?;
            let snaps = run_simulation(&problem, y, &config.snapshot_times)
                .map_err(|e| Error::InvalidInput(format!("parameter point {y:?}: {e}")))?;
            snapshot_table(&axis_names, n_cells, &snaps).write(&part)?;
            if let Some(cb) = progress {
                cb(k, points.len());
            }
            Ok(snaps)
        })
        .collect();

    let mut snapshots = Vec::with_capacity(config.n_snapshots());
    let mut failures = Vec::new();
    for chunk in chunks {
        match chunk {
            Ok(s) => snapshots.extend(s),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} of {} simulations failed (completed parts are kept for resume):\n  {}",
            failures.len(),
            points.len(),
            failures.join("\n  ")
        )));
    }
    let store = SnapshotStore {
        manifest: StoreManifest {
            version: STORE_VERSION,
            config: config.clone(),
            axis_names,
            n_cells,
            dx,
            n_snapshots: snapshots.len(),
            columns: "t, parameter axes, mass, then one saturation value per cell".into(),
        },
        snapshots,
    };
    store.write(dir)?;
    Ok(store)
}

/// Snapshots of `config` computed in memory, without touching the disk.
pub fn simulate_all(config: &ExperimentConfig) -> Result<Vec<Snapshot>> {
    use rayon::prelude::*;

    config.validate()?;
    let chunks: Result<Vec<Vec<Snapshot>>> = config
        .parameter_points()
        .par_iter()
        .map(|y| run_simulation(&config.problem_for(y)?, y, &config.snapshot_times))
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}
