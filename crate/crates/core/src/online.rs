//! Online phase: interpolate barycentric weights and mass over the training
//! tensor grid, then rebuild a saturation profile from the barycenter.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::Dictionary;
use crate::simplex::{project_to_simplex, SimplexWeights};
use crate::snapshot::{ParameterPoint, Snapshot};
use crate::store::{format_f64, read_json, write_json, Table};
use crate::transport::{barycenter, icdf_to_profile, Domain};

/// Behavior of [`ReducedModel::evaluate_raw`] outside the training box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    #[default]
    Error,
    /// Clamp each coordinate to the nearest training value.
    Clamp,
}

/// Geometry needed to turn a reconstructed icdf back into a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileLayout {
    pub n_cells: usize,
    /// Cell width in domain units.
    pub dx: f64,
    pub domain: Domain,
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub dictionary: Dictionary,
    /// Sorted unique coordinates per axis; axis 0 is time.
    pub grid_axes: Vec<Vec<f64>>,
    /// Optimal weights per grid node, first axis slowest.
    pub weight_tables: Vec<Vec<f64>>,
    pub mass_table: Vec<f64>,
    pub layout: ProfileLayout,
    pub extrapolation: Extrapolation,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    grid_axes: Vec<Vec<f64>>,
    layout: ProfileLayout,
    extrapolation: Extrapolation,
    n_atoms: usize,
}

const TABLE_FILE: &str = "tables.csv";
const MODEL_FILE: &str = "model.json";

fn strides(axes: &[Vec<f64>]) -> Vec<usize> {
    let mut s = vec![1; axes.len()];
    for d in (0..axes.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * axes[d + 1].len();
    }
    s
}

fn node_coords(axes: &[Vec<f64>], mut flat: usize) -> Vec<f64> {
    let st = strides(axes);
    axes.iter()
        .zip(&st)
        .map(|(a, &s)| {
            let i = flat / s;
            flat %= s;
            a[i]
        })
        .collect()
}

/// Build the interpolation tables from the training set.
///
/// `params`, `weights` and `masses` are aligned per training snapshot; the
/// parameters must cover a full tensor grid.
pub fn fit(
    dictionary: Dictionary,
    params: &[ParameterPoint],
    weights: &[SimplexWeights],
    masses: &[f64],
    layout: ProfileLayout,
) -> Result<ReducedModel> {
    if params.is_empty() {
        return Err(Error::TooFewSnapshots { needed: 1, got: 0 });
    }
    if weights.len() != params.len() || masses.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: weights.len().min(masses.len()),
        });
    }
    let n = dictionary.len();
    if let Some(w) = weights.iter().find(|w| w.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let coords: Vec<Vec<f64>> = params.iter().map(ParameterPoint::coords).collect();
    let dim = coords[0].len();
    if coords.iter().any(|c| c.len() != dim) {
        return Err(Error::InvalidInput("parameter points differ in dimension".into()));
    }
    let grid_axes: Vec<Vec<f64>> = (0..dim)
        .map(|d| {
            let mut v: Vec<f64> = coords.iter().map(|c| c[d]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let st = strides(&grid_axes);
    let total: usize = grid_axes.iter().map(Vec::len).product();
    let mut slot: Vec<Option<usize>> = vec![None; total];
    for (k, c) in coords.iter().enumerate() {
        let flat: usize = c
            .iter()
            .zip(&grid_axes)
            .zip(&st)
            .map(|((v, a), s)| a.binary_search_by(|x| x.total_cmp(v)).expect("value taken from axis") * s)
            .sum();
        if slot[flat].is_some() {
            return Err(Error::InvalidInput(format!("duplicate training parameter {c:?}")));
        }
        slot[flat] = Some(k);
    }
    let missing: Vec<Vec<f64>> = slot
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(flat, _)| node_coords(&grid_axes, flat))
        .collect();
    if !missing.is_empty() {
        return Err(Error::NotTensorGrid(missing));
    }
    let order: Vec<usize> = slot.into_iter().map(|s| s.expect("all present")).collect();
    Ok(ReducedModel {
        dictionary,
        weight_tables: order.iter().map(|&k| weights[k].values().to_vec()).collect(),
        mass_table: order.iter().map(|&k| masses[k]).collect(),
        grid_axes,
        layout,
        extrapolation: Extrapolation::Error,
    })
}

impl ReducedModel {
    pub fn n_atoms(&self) -> usize {
        self.dictionary.len()
    }

    pub fn with_extrapolation(mut self, mode: Extrapolation) -> Self {
        self.extrapolation = mode;
        self
    }

    /// Corner nodes and multilinear weights around `coords`.
    fn stencil(&self, coords: &[f64]) -> Result<Vec<(usize, f64)>> {
        if coords.len() != self.grid_axes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid_axes.len(),
                got: coords.len(),
            });
        }
        let st = strides(&self.grid_axes);
        let mut stencil = vec![(0usize, 1.0f64)];
        for (d, (axis, &v)) in self.grid_axes.iter().zip(coords).enumerate() {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coordinate on axis {d}")));
            }
            let v = if v < lo || v > hi {
                match self.extrapolation {
                    Extrapolation::Error => {
                        return Err(Error::OutOfRange {
                            axis: d,
                            value: v,
                            lo,
                            hi,
                        })
                    }
                    Extrapolation::Clamp => v.clamp(lo, hi),
                }
            } else {
                v
            };
            let (i, theta) = if axis.len() == 1 {
                (0, 0.0)
            } else {
                let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
                (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
            };
            let mut next = Vec::with_capacity(stencil.len() * 2);
            for &(flat, w) in &stencil {
                if theta < 1.0 {
                    next.push((flat + i * st[d], w * (1.0 - theta)));
                }
                if theta > 0.0 {
                    next.push((flat + (i + 1) * st[d], w * theta));
                }
            }
            stencil = next;
        }
        Ok(stencil)
    }

    /// Interpolated weights and mass at `z`, before any projection.
    pub fn evaluate_raw(&self, z: &ParameterPoint) -> Result<(Vec<f64>, f64)> {
        let stencil = self.stencil(&z.coords())?;
        let mut lambda = vec![0.0; self.n_atoms()];
        let mut mass = 0.0;
        for (flat, w) in stencil {
            for (l, t) in lambda.iter_mut().zip(&self.weight_tables[flat]) {
                *l += w * t;
            }
            mass += w * self.mass_table[flat];
        }
        Ok((lambda, mass))
    }

    /// Profile at `z`: project the weights, clamp the mass and invert the barycenter.
    pub fn reconstruct(&self, z: &ParameterPoint) -> Result<Snapshot> {
        let (lambda, mass) = self.evaluate_raw(z)?;
        let w = project_to_simplex(&lambda);
        let values = reconstruct_profile(&self.dictionary, &w, mass.max(0.0), self.layout)?;
        Ok(Snapshot::new(z.clone(), values, self.layout.dx))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.dictionary.save(dir)?;
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..self.grid_axes.len()).map(|d| format!("y{d}")));
        header.push("mass".into());
        header.extend((0..self.n_atoms()).map(|i| format!("w{i}")));
        let mut t = Table::new(header);
        for (flat, (w, m)) in self.weight_tables.iter().zip(&self.mass_table).enumerate() {
            let mut row: Vec<String> = node_coords(&self.grid_axes, flat).into_iter().map(format_f64).collect();
            row.push(format_f64(*m));
            row.extend(w.iter().map(|v| format_f64(*v)));
            t.push(row);
        }
        t.write(&dir.join(TABLE_FILE))?;
        write_json(
            &dir.join(MODEL_FILE),
            &ModelManifest {
                grid_axes: self.grid_axes.clone(),
                layout: self.layout,
                extrapolation: self.extrapolation,
                n_atoms: self.n_atoms(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ModelManifest = read_json(&dir.join(MODEL_FILE))?;
        let dictionary = Dictionary::load(dir)?;
        let path = dir.join(TABLE_FILE);
        let rows = Table::read(&path)?.numeric_rows(&path)?;
        let dim = manifest.grid_axes.len();
        let total: usize = manifest.grid_axes.iter().map(Vec::len).product();
        if dictionary.len() != manifest.n_atoms || rows.len() != total {
            return Err(Error::format(&path, "model tables do not match model.json"));
        }
        let mut weight_tables = Vec::with_capacity(total);
        let mut mass_table = Vec::with_capacity(total);
        for (flat, row) in rows.into_iter().enumerate() {
            if row.len() != dim + 1 + manifest.n_atoms || row[..dim] != node_coords(&manifest.grid_axes, flat)[..] {
                return Err(Error::format(&path, format!("row {flat} is out of place")));
            }
            mass_table.push(row[dim]);
            weight_tables.push(row[dim + 1..].to_vec());
        }
        Ok(Self {
            dictionary,
            grid_axes: manifest.grid_axes,
            weight_tables,
            mass_table,
            layout: manifest.layout,
            extrapolation: manifest.extrapolation,
        })
    }

    /// Parameter points of all grid nodes, first axis slowest.
    pub fn nodes(&self) -> Vec<ParameterPoint> {
        (0..self.mass_table.len())
            .map(|flat| ParameterPoint::from_coords(&node_coords(&self.grid_axes, flat)))
            .collect()
    }
}

/// Profile of the barycenter of `dict` with weights `w`, carrying `mass`.
pub fn reconstruct_profile(
    dict: &Dictionary,
    w: &SimplexWeights,
    mass: f64,
    layout: ProfileLayout,
) -> Result<Vec<f64>> {
    let ic = barycenter(&dict.atoms, w)?;
    icdf_to_profile(&ic, layout.n_cells, mass, layout.dx, layout.domain)
}
