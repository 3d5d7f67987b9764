//! Greedy barycenter algorithm: grow a dictionary of training icdfs by
//! repeatedly adding the snapshot worst approximated by barycenters of the
//! current atoms.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{self, gram_condition, init_weights, AtomSystem, QpSettings, SimplexWeights};
use crate::snapshot::ParameterPoint;
use crate::store::{read_json, write_json, Table};
use crate::transport::{w2_distance, DiscreteIcdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedySettings {
    #[serde(default)]
    pub eps_abs: f64,
    /// Relative-decrease criterion; `None` disables it.
    #[serde(default)]
    pub eps_rel: Option<f64>,
    pub n_max: usize,
}

impl Default for GreedySettings {
    fn default() -> Self {
        Self {
            eps_abs: 0.0,
            eps_rel: None,
            n_max: 50,
        }
    }
}

impl GreedySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_abs >= 0.0) {
            return Err(Error::Config("greedy eps_abs must be >= 0".into()));
        }
        if let Some(r) = self.eps_rel {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config("greedy eps_rel must lie in [0, 1)".into()));
            }
        }
        if self.n_max < 2 {
            return Err(Error::Config("greedy n_max must be at least 2".into()));
        }
        Ok(())
    }
}

/// Selected atoms with their training indices and cached Gram data.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub atoms: Vec<DiscreteIcdf>,
    /// Positions of the atoms in the training set.
    pub indices: Vec<usize>,
    pub atom_params: Vec<ParameterPoint>,
    system: AtomSystem,
}

#[derive(Serialize, Deserialize)]
struct DictionaryManifest {
    indices: Vec<usize>,
    atom_params: Vec<ParameterPoint>,
    n_nodes: usize,
}

impl Dictionary {
    pub fn new(atoms: Vec<DiscreteIcdf>, indices: Vec<usize>, atom_params: Vec<ParameterPoint>) -> Result<Self> {
        if atoms.len() != indices.len() || atoms.len() != atom_params.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: indices.len().min(atom_params.len()),
            });
        }
        let system = AtomSystem::new(&atoms)?;
        Ok(Self {
            atoms,
            indices,
            atom_params,
            system,
        })
    }

    pub fn from_training(train: &[DiscreteIcdf], params: &[ParameterPoint], indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| train[i].clone()).collect(),
            indices.to_vec(),
            indices.iter().map(|&i| params[i].clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn system(&self) -> &AtomSystem {
        &self.system
    }

    /// `A^T A / M` of the atoms.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.system.gram()
    }

    pub fn push(&mut self, atom: DiscreteIcdf, index: usize, param: ParameterPoint) -> Result<()> {
        self.system.push(&atom)?;
        self.atoms.push(atom);
        self.indices.push(index);
        self.atom_params.push(param);
        Ok(())
    }

    /// Write `dictionary.json` and `atoms.csv` (one column per atom) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let n_nodes = self.system.n_nodes();
        let mut t = Table::new((0..self.len()).map(|i| format!("atom_{i}")));
        for k in 0..n_nodes {
            let row: Vec<f64> = self.atoms.iter().map(|a| a.values[k]).collect();
            t.push_numbers(&row);
        }
        t.write(&dir.join("atoms.csv"))?;
        write_json(
            &dir.join("dictionary.json"),
            &DictionaryManifest {
                indices: self.indices.clone(),
                atom_params: self.atom_params.clone(),
                n_nodes,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DictionaryManifest = read_json(&dir.join("dictionary.json"))?;
        let path = dir.join("atoms.csv");
        let rows = Table::read(&path)?.numeric_rows(&path)?;
        let n = manifest.indices.len();
        if rows.len() != manifest.n_nodes || rows.iter().any(|r| r.len() != n) {
            return Err(Error::format(&path, "atom table does not match dictionary.json"));
        }
        let atoms = (0..n)
            .map(|i| DiscreteIcdf {
                values: rows.iter().map(|r| r[i]).collect(),
            })
            .collect();
        Self::new(atoms, manifest.indices, manifest.atom_params)
    }
}

/// Pair of training icdfs at maximal L2 distance; the lexicographically
/// smallest pair wins ties.
pub fn init_pair(train: &[DiscreteIcdf]) -> Result<(usize, usize)> {
    if train.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: train.len(),
        });
    }
    let best = (0..train.len() - 1)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, i, i + 1);
            for j in i + 1..train.len() {
                let d: f64 = train[i]
                    .values
                    .iter()
                    .zip(&train[j].values)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d > best.0 {
                    best = (d, i, j);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            },
        );
    Ok((best.1, best.2))
}

/// Result of projecting every training icdf onto the current atoms.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Training index with the largest error among non-atoms, if any remain.
    pub next: Option<usize>,
    /// Largest W2 error over the non-atom training icdfs.
    pub delta: f64,
    /// Mean W2 error over the whole training set.
    pub mean: f64,
    /// Per-snapshot W2 error `sqrt(min_w (1/M)||A w - f||^2)`.
    pub errors: Vec<f64>,
    pub weights: Vec<SimplexWeights>,
    /// Training indices whose QP did not meet the optimality tolerance.
    pub nonconverged: Vec<usize>,
}

/// Best barycentric weights of every training icdf against `dict`.
///
/// `warm[k]`, when given, starts the solve for snapshot `k`; otherwise the
/// inverse-distance weights of [`init_weights`] are used. A warm start that
/// fails to converge is retried from the inverse-distance start and the
/// better result kept.
pub fn greedy_step(
    dict: &Dictionary,
    train: &[DiscreteIcdf],
    qp: QpSettings,
    warm: Option<&[SimplexWeights]>,
) -> Result<StepOutcome> {
    if dict.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: dict.len(),
        });
    }
    let n = dict.len();
    let system = dict.system();
    let solved: Vec<(SimplexWeights, f64, bool)> = train
        .par_iter()
        .enumerate()
        .map(|(k, target)| -> Result<_> {
            let problem = system.problem(target)?;
            let cold = || -> Result<SimplexWeights> {
                let d = dict
                    .atoms
                    .iter()
                    .map(|a| w2_distance(a, target))
                    .collect::<Result<Vec<_>>>()?;
                Ok(init_weights(&d))
            };
            let warm_start = warm.and_then(|w| w.get(k)).filter(|w| w.len() == n);
            let mut res = match warm_start {
                Some(w) => simplex::solve(&problem, w, qp)?,
                None => simplex::solve(&problem, &cold()?, qp)?,
            };
            if !res.converged && warm_start.is_some() {
                let retry = simplex::solve(&problem, &cold()?, qp)?;
                if retry.converged || retry.objective < res.objective {
                    res = retry;
                }
            }
            Ok((res.weights, res.objective.max(0.0).sqrt(), res.converged))
        })
        .collect::<Result<_>>()?;

    let mut errors = Vec::with_capacity(train.len());
    let mut weights = Vec::with_capacity(train.len());
    let mut nonconverged = Vec::new();
    for (k, (w, e, ok)) in solved.into_iter().enumerate() {
        if !ok {
            nonconverged.push(k);
        }
        errors.push(e);
        weights.push(w);
    }
    let mut next = None;
    let mut delta = 0.0;
    for (k, &e) in errors.iter().enumerate() {
        if dict.indices.contains(&k) {
            continue;
        }
        if next.is_none() || e > delta {
            next = Some(k);
            delta = e;
        }
    }
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    Ok(StepOutcome {
        next,
        delta,
        mean,
        errors,
        weights,
        nonconverged,
    })
}

/// Which criterion stopped the greedy loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Absolute,
    Relative,
    MaxAtoms,
    /// Every training snapshot is already an atom.
    Exhausted,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Absolute => "absolute",
            Termination::Relative => "relative",
            Termination::MaxAtoms => "max_atoms",
            Termination::Exhausted => "exhausted",
        }
    }
}

/// Per-iteration diagnostics; entry `i` describes a dictionary of `i + 2` atoms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GreedyReport {
    pub n_atoms: Vec<usize>,
    pub delta: Vec<f64>,
    pub avg_error: Vec<f64>,
    pub condition: Vec<f64>,
    pub simplex_volume: Vec<f64>,
    pub nonconverged: Vec<usize>,
    pub termination: Option<Termination>,
}

impl GreedyReport {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            "n_atoms",
            "delta",
            "mean_error",
            "condition",
            "volume",
            "nonconverged",
            "criterion",
        ]);
        for i in 0..self.len() {
            let last = i + 1 == self.len();
            let criterion = match (last, self.termination) {
                (true, Some(c)) => c.as_str().to_string(),
                _ => String::new(),
            };
            t.push(vec![
                self.n_atoms[i].to_string(),
                crate::store::format_f64(self.delta[i]),
                crate::store::format_f64(self.avg_error[i]),
                crate::store::format_f64(self.condition[i]),
                crate::store::format_f64(self.simplex_volume[i]),
                self.nonconverged[i].to_string(),
                criterion,
            ]);
        }
        t
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_table().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        let mut r = GreedyReport::default();
        let parse = |c: &str| -> Result<f64> {
            c.parse::<f64>()
                .map_err(|_| Error::format(path, format!("not a number: {c:?}")))
        };
        for row in &t.rows {
            if row.len() != 7 {
                return Err(Error::format(path, "report rows need 7 columns"));
            }
            r.n_atoms.push(parse(&row[0])? as usize);
            r.delta.push(parse(&row[1])?);
            r.avg_error.push(parse(&row[2])?);
            r.condition.push(parse(&row[3])?);
            r.simplex_volume.push(parse(&row[4])?);
            r.nonconverged.push(parse(&row[5])? as usize);
            if !row[6].is_empty() {
                r.termination = Some(
                    serde_json::from_value(serde_json::Value::String(row[6].clone()))
                        .map_err(|e| Error::format(path, e.to_string()))?,
                );
            }
        }
        Ok(r)
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct GreedyRun {
    pub dictionary: Dictionary,
    pub report: GreedyReport,
    /// Optimal weights of every training icdf against the final dictionary.
    pub weights: Vec<SimplexWeights>,
    /// W2 errors of every training icdf against the final dictionary.
    pub errors: Vec<f64>,
}

/// Run the greedy loop until a termination criterion fires.
///
/// `observer` sees the dictionary and the step outcome of every iteration,
/// before the next atom is appended.
pub fn run(
    train: &[DiscreteIcdf],
    params: &[ParameterPoint],
    settings: &GreedySettings,
    qp: QpSettings,
    mut observer: impl FnMut(&Dictionary, &StepOutcome),
) -> Result<GreedyRun> {
    settings.validate()?;
    if params.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            got: params.len(),
        });
    }
    let (i, j) = init_pair(train)?;
    let mut dict = Dictionary::from_training(train, params, &[i, j])?;
    let mut report = GreedyReport::default();
    let mut warm: Option<Vec<SimplexWeights>> = None;
    loop {
        let step = greedy_step(&dict, train, qp, warm.as_deref())?;
        observer(&dict, &step);
        report.n_atoms.push(dict.len());
        report.delta.push(step.delta);
        report.avg_error.push(step.mean);
        report.condition.push(gram_condition(dict.system()));
        report.simplex_volume.push(cayley_menger_volume(&dict.atoms));
        report.nonconverged.push(step.nonconverged.len());

        let prev = report.delta.len().checked_sub(2).map(|p| report.delta[p]);
        let termination = if step.next.is_none() {
            Some(Termination::Exhausted)
        } else if step.delta <= settings.eps_abs {
            Some(Termination::Absolute)
        } else if let (Some(r), Some(prev)) = (settings.eps_rel, prev) {
            (prev - step.delta < r * prev).then_some(Termination::Relative)
        } else {
            None
        }
        .or_else(|| (dict.len() >= settings.n_max).then_some(Termination::MaxAtoms));

        if let Some(t) = termination {
            report.termination = Some(t);
            return Ok(GreedyRun {
                dictionary: dict,
                report,
                weights: step.weights,
                errors: step.errors,
            });
        }
        let next = step.next.expect("checked above");
        dict.push(train[next].clone(), next, params[next].clone())?;
        warm = Some(step.weights.iter().map(SimplexWeights::extended).collect());
    }
}

/// Volume of the simplex spanned by the atoms, divided by the volume of the
/// regular simplex with unit edges of the same dimension.
///
/// Evaluated from the Cayley-Menger determinant of squared L2 distances.
/// Degenerate simplices give 0.
pub fn cayley_menger_volume(atoms: &[DiscreteIcdf]) -> f64 {
    let n = atoms.len();
    if n < 2 {
        return 0.0;
    }
    let k = n - 1;
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = w2_distance(&atoms[i], &atoms[j]).unwrap_or(f64::NAN);
            d2[(i, j)] = d * d;
            d2[(j, i)] = d * d;
        }
    }
    let scale = d2.max();
    if !(scale > 0.0) {
        return 0.0;
    }
    let mut cm = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=n {
        cm[(0, i)] = 1.0;
        cm[(i, 0)] = 1.0;
        for j in 1..=n {
            cm[(i, j)] = d2[(i - 1, j - 1)] / scale;
        }
    }
    // V^2 = (-1)^(k+1) det(CM) / (2^k (k!)^2)
    let det = cm.lu().determinant();
    let signed = if k.is_multiple_of(2) { -det } else { det };
    if !(signed > 0.0) {
        return 0.0;
    }
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    let kf = k as f64;
    let ln_v2 = signed.ln() + kf * scale.ln() - kf * 2f64.ln() - 2.0 * ln_fact;
    let ln_regular = 0.5 * (kf + 1.0).ln() - ln_fact - 0.5 * kf * 2f64.ln();
    (0.5 * ln_v2 - ln_regular).exp()
}
