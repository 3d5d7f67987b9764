//! Analysis data: conditioning and simplex-volume series of a greedy run,
//! and energy-landscape cuts through the weight simplex drawn on a regular
//! polygon with Wachspress coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::GreedyReport;
use crate::simplex::SimplexWeights;
use crate::store::Table;
use crate::transport::{barycenter, w2_distance, DiscreteIcdf};

const BOUNDARY_TOL: f64 = 1e-12;

/// Vertices of the regular `n`-gon inscribed in the unit circle, counterclockwise
/// starting at angle 90 degrees.
pub fn polygon_vertices(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * i as f64 / n as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Signed area of the triangle `(a, b, c)`.
fn area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Wachspress coordinates of `x` in the regular `n`-gon.
///
/// Uses the product form `w_i = C_i * prod_{j != i-1, i} A_j(x)`, where `A_j` is
/// the area of `(x, v_j, v_{j+1})` and `C_i` the area of `(v_{i-1}, v_i, v_{i+1})`.
/// It stays finite on edges and vertices, where it reduces to linear
/// interpolation along the edge.
pub fn wachspress_weights(x: [f64; 2], n: usize) -> Result<SimplexWeights> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "polygon needs at least 3 vertices, got {n}"
        )));
    }
    let v = polygon_vertices(n);
    let edge_area: Vec<f64> = (0..n).map(|j| area(x, v[j], v[(j + 1) % n])).collect();
    if edge_area.iter().any(|&a| a < -BOUNDARY_TOL) {
        return Err(Error::OutsidePolygon(x[0], x[1]));
    }
    let edge_area: Vec<f64> = edge_area.into_iter().map(|a| a.max(0.0)).collect();
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            let prev = (i + n - 1) % n;
            let corner = area(v[prev], v[i], v[(i + 1) % n]);
            let others: f64 = (0..n).filter(|&j| j != prev && j != i).map(|j| edge_area[j]).product();
            corner * others
        })
        .collect();
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::OutsidePolygon(x[0], x[1]));
    }
    w.iter_mut().for_each(|v| *v /= sum);
    SimplexWeights::new(w)
}

/// Planar image of simplex weights: `sum_i w_i v_i`.
pub fn polygon_point(w: &[f64]) -> [f64; 2] {
    let v = polygon_vertices(w.len());
    w.iter()
        .zip(&v)
        .fold([0.0, 0.0], |acc, (wi, vi)| [acc[0] + wi * vi[0], acc[1] + wi * vi[1]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    /// Raster position `(row, col)`.
    pub pixel: (usize, usize),
    pub x: [f64; 2],
    pub weights: Vec<f64>,
    pub log10_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub n: usize,
    pub resolution: usize,
    pub points: Vec<LandscapePoint>,
}

/// Raster spacing of a landscape with `resolution` samples across `[-1, 1]`.
pub fn grid_spacing(resolution: usize) -> f64 {
    2.0 / (resolution - 1) as f64
}

/// `log10 W2(target, barycenter)` on all raster points of `[-1, 1]^2` that lie
/// in the closed polygon of the atoms.
pub fn energy_landscape(atoms: &[DiscreteIcdf], target: &DiscreteIcdf, resolution: usize) -> Result<LandscapeGrid> {
    let n = atoms.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "landscape needs at least 3 atoms, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidInput("landscape resolution must be at least 2".into()));
    }
    let h = grid_spacing(resolution);
    let pixels: Vec<(usize, usize)> = (0..resolution)
        .flat_map(|r| (0..resolution).map(move |c| (r, c)))
        .collect();
    let points: Vec<Option<LandscapePoint>> = pixels
        .par_iter()
        .map(|&(r, c)| -> Result<Option<LandscapePoint>> {
            let x = [-1.0 + c as f64 * h, 1.0 - r as f64 * h];
            let w = match wachspress_weights(x, n) {
                Ok(w) => w,
                Err(Error::OutsidePolygon(..)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let d = w2_distance(target, &barycenter(atoms, &w)?)?;
            Ok(Some(LandscapePoint {
                pixel: (r, c),
                x,
                weights: w.into_inner(),
                log10_w2: d.log10(),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(LandscapeGrid {
        n,
        resolution,
        points: points.into_iter().flatten().collect(),
    })
}

impl LandscapeGrid {
    /// Point with the smallest value; the first one in raster order wins ties.
    pub fn minimum(&self) -> Option<&LandscapePoint> {
        self.points
            .iter()
            .reduce(|a, b| if b.log10_w2 < a.log10_w2 { b } else { a })
    }

    /// Number of 8-connected raster components of `{log10 W2 <= level}`.
    pub fn sublevel_components(&self, level: f64) -> usize {
        let r = self.resolution;
        let mut mask = vec![false; r * r];
        for p in &self.points {
            if p.log10_w2 <= level {
                mask[p.pixel.0 * r + p.pixel.1] = true;
            }
        }
        let mut seen = vec![false; r * r];
        let mut components = 0;
        for start in 0..r * r {
            if !mask[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(k) = stack.pop() {
                let (i, j) = ((k / r) as isize, (k % r) as isize);
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (a, b) = (i + di, j + dj);
                        if a < 0 || b < 0 || a >= r as isize || b >= r as isize {
                            continue;
                        }
                        let q = a as usize * r + b as usize;
                        if mask[q] && !seen[q] {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        components
    }

    /// CSV rows `x, y, lambda_1..lambda_n, log10_W2`.
    pub fn to_table(&self) -> Table {
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend((1..=self.n).map(|i| format!("lambda_{i}")));
        header.push("log10_w2".into());
        let mut t = Table::new(header);
        for p in &self.points {
            let mut row = vec![p.x[0], p.x[1]];
            row.extend_from_slice(&p.weights);
            row.push(p.log10_w2);
            t.push_numbers(&row);
        }
        t
    }
}

/// `(n_atoms, condition)` per greedy iteration.
pub fn condition_curve(report: &GreedyReport) -> Result<Vec<(usize, f64)>> {
    if report.is_empty() {
        return Err(Error::InvalidInput("greedy report is empty".into()));
    }
    Ok(report
        .n_atoms
        .iter()
        .copied()
        .zip(report.condition.iter().copied())
        .collect())
}

/// `(n_atoms, normalized volume)` per greedy iteration.
pub fn volume_curve(report: &GreedyReport) -> Result<Vec<(usize, f64)>> {
    if report.is_empty() {
        return Err(Error::InvalidInput("greedy report is empty".into()));
    }
    Ok(report
        .n_atoms
        .iter()
        .copied()
        .zip(report.simplex_volume.iter().copied())
        .collect())
}

pub fn series_table(name: &str, series: &[(usize, f64)]) -> Table {
    let mut t = Table::new(["n_atoms", name]);
    for &(n, v) in series {
        t.push(vec![n.to_string(), crate::store::format_f64(v)]);
    }
    t
}
