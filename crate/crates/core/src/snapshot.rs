use serde::{Deserialize, Serialize};

/// A point `z = (t, y)` of the parametrized solution set. Time is in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub t: f64,
    pub y: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(t: f64, y: Vec<f64>) -> Self {
        Self { t, y }
    }

    /// Coordinates in interpolation order: time first, then `y`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.y.len() + 1);
        c.push(self.t);
        c.extend_from_slice(&self.y);
        c
    }

    pub fn from_coords(coords: &[f64]) -> Self {
        Self {
            t: coords[0],
            y: coords[1..].to_vec(),
        }
    }
}

/// One saturation profile on the spatial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub z: ParameterPoint,
    pub values: Vec<f64>,
    /// `sum(values) * dx`, with `dx` in domain units.
    pub mass: f64,
}

impl Snapshot {
    pub fn new(z: ParameterPoint, values: Vec<f64>, dx: f64) -> Self {
        let mass = profile_mass(&values, dx);
        Self { z, values, mass }
    }
}

pub fn profile_mass(values: &[f64], dx: f64) -> f64 {
    values.iter().sum::<f64>() * dx
}

/// `||a - b||_1 / ||a||_1` on a uniform grid. Returns the absolute error if `a` is zero.
pub fn relative_l1_error(reference: &[f64], approx: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(approx).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = reference.iter().map(|a| a.abs()).sum();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
