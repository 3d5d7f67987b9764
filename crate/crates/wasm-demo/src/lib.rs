//! Browser bindings: simulate a homogeneous displacement, interpolate two
//! profiles along the Wasserstein geodesic, and map the error landscape of a
//! target over the triangle of three atoms.
//!
//! The plain functions are usable (and tested) natively; the `wasm_bindgen`
//! wrappers only convert errors into JavaScript exceptions.

use wasm_bindgen::prelude::*;

use wrom::config::ExperimentConfig;
use wrom::diagnostics::{energy_landscape, polygon_point};
use wrom::flow::run_simulation;
use wrom::simplex::{self, init_weights, AtomSystem, SimplexWeights};
use wrom::snapshot::profile_mass;
use wrom::transport::{barycenter, icdf_to_profile, profile_to_icdf, w2_distance, DiscreteIcdf, Domain};
use wrom::{Error, Result};

/// Largest grid offered to the page; keeps one simulation interactive.
pub const MAX_CELLS: usize = 1002;
pub const MAX_RESOLUTION: usize = 301;

fn unit() -> Domain {
    Domain::UNIT
}

fn dx(n: usize) -> f64 {
    1.0 / n as f64
}

fn icdf_of(profile: &[f64]) -> Result<DiscreteIcdf> {
    profile_to_icdf(profile, profile.len() + 2, unit())
}

/// Saturation after `years` on `n_cells` cells for the first bundled setup
/// with the given viscosity ratio and relative-permeability exponent.
pub fn simulate_profile(viscosity_ratio: f64, exponent: f64, years: f64, n_cells: usize) -> Result<Vec<f64>> {
    if !(2..=MAX_CELLS).contains(&n_cells) {
        return Err(Error::InvalidInput(format!("cell count must lie in [2, {MAX_CELLS}]")));
    }
    let mut config = ExperimentConfig::example1();
    config.grid.n_cells = n_cells;
    let problem = config.problem_for(&[viscosity_ratio, exponent])?;
    let snaps = run_simulation(&problem, &[viscosity_ratio, exponent], &[years])?;
    Ok(snaps.into_iter().next().map(|s| s.values).unwrap_or_default())
}

/// Profile on the Wasserstein geodesic from `a` (`t = 0`) to `b` (`t = 1`),
/// with linearly interpolated mass.
pub fn geodesic(a: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let t = t.clamp(0.0, 1.0);
    let n = a.len();
    let atoms = [icdf_of(a)?, icdf_of(b)?];
    let w = SimplexWeights::new(vec![1.0 - t, t])?;
    let mass = (1.0 - t) * profile_mass(a, dx(n)) + t * profile_mass(b, dx(n));
    icdf_to_profile(&barycenter(&atoms, &w)?, n, mass, dx(n), unit())
}

/// Row-major `resolution x resolution` raster of `log10 W2` between `target`
/// and the barycenters of the three atoms (NaN outside the triangle), followed
/// by the optimal weights and their planar position.
pub fn landscape_raster(
    atoms: [&[f64]; 3],
    target: &[f64],
    resolution: usize,
) -> Result<(Vec<f64>, Vec<f64>, [f64; 2])> {
    if !(2..=MAX_RESOLUTION).contains(&resolution) {
        return Err(Error::InvalidInput(format!(
            "resolution must lie in [2, {MAX_RESOLUTION}]"
        )));
    }
    let atoms: Vec<DiscreteIcdf> = atoms.iter().map(|a| icdf_of(a)).collect::<Result<_>>()?;
    let target = icdf_of(target)?;
    let grid = energy_landscape(&atoms, &target, resolution)?;
    let mut raster = vec![f64::NAN; resolution * resolution];
    for p in &grid.points {
        raster[p.pixel.0 * resolution + p.pixel.1] = p.log10_w2;
    }
    let system = AtomSystem::new(&atoms)?;
    let problem = system.problem(&target)?;
    let d: Vec<f64> = atoms.iter().map(|a| w2_distance(a, &target)).collect::<Result<_>>()?;
    let best = simplex::solve(&problem, &init_weights(&d), Default::default())?;
    let at = polygon_point(best.weights.values());
    Ok((raster, best.weights.into_inner(), at))
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn simulate(
    viscosity_ratio: f64,
    exponent: f64,
    years: f64,
    n_cells: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    simulate_profile(viscosity_ratio, exponent, years, n_cells).map_err(js)
}

#[wasm_bindgen]
pub fn interpolate(a: &[f64], b: &[f64], t: f64) -> std::result::Result<Vec<f64>, JsError> {
    geodesic(a, b, t).map_err(js)
}

/// Raster followed by five trailing values: the three optimal weights and the
/// optimum's planar coordinates.
#[wasm_bindgen]
pub fn landscape(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    target: &[f64],
    resolution: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    let (mut raster, w, at) = landscape_raster([a, b, c], target, resolution).map_err(js)?;
    raster.extend(w);
    raster.extend(at);
    Ok(raster)
}
