//! Finite-volume IMPES solver for 1D incompressible two-phase Darcy flow.
//!
//! Pressure is solved implicitly with a two-point flux approximation and the
//! wetting saturation is advanced explicitly with first-order upwinding.
//! Gravity and capillarity are neglected. Positions are stored in km and
//! converted to meters for all Darcy quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshot::{ParameterPoint, Snapshot};

pub const METERS_PER_KM: f64 = 1000.0;
/// Julian year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

const SATURATION_TOL: f64 = 1e-12;
const MAX_PRINCIPLE_TOL: f64 = 1e-10;
const SLOPE_SAMPLES: usize = 1001;

/// Uniform cell-centered grid on `(x_min, x_max)` in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid bounds must satisfy x_min < x_max, got ({x_min}, {x_max})"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    /// Cell width in km.
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn dx_meters(&self) -> f64 {
        self.dx() * METERS_PER_KM
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_center(i)).collect()
    }
}

/// Per-cell porosity and absolute permeability (m^2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RockField {
    pub porosity: Vec<f64>,
    pub permeability: Vec<f64>,
}

impl RockField {
    pub fn new(porosity: Vec<f64>, permeability: Vec<f64>) -> Result<Self> {
        if porosity.len() != permeability.len() {
            return Err(Error::DimensionMismatch {
                expected: porosity.len(),
                got: permeability.len(),
            });
        }
        if let Some(phi) = porosity.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidInput(format!("porosity {phi} not in (0, 1]")));
        }
        if let Some(k) = permeability.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidInput(format!("permeability {k} must be > 0")));
        }
        Ok(Self { porosity, permeability })
    }

    pub fn homogeneous(n_cells: usize, porosity: f64, permeability: f64) -> Result<Self> {
        Self::new(vec![porosity; n_cells], vec![permeability; n_cells])
    }

    pub fn len(&self) -> usize {
        self.porosity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.porosity.is_empty()
    }
}

/// Phase viscosities (Pa s) and the relative-permeability exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub mu_w: f64,
    pub mu_nw: f64,
    pub beta: f64,
}

impl FluidParams {
    pub fn new(mu_w: f64, mu_nw: f64, beta: f64) -> Result<Self> {
        let fluids = Self { mu_w, mu_nw, beta };
        fluids.validate()?;
        Ok(fluids)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_w > 0.0 && self.mu_nw > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "fluid parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Wetting and non-wetting mobilities at wetting saturation `s`.
    pub fn phase_mobilities(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        (s.powf(self.beta) / self.mu_w, (1.0 - s).powf(self.beta) / self.mu_nw)
    }

    fn total_mobility_unchecked(&self, s: f64) -> f64 {
        let (lw, lnw) = self.phase_mobilities(s);
        lw + lnw
    }

    fn fractional_flow_unchecked(&self, s: f64) -> f64 {
        let (lw, lnw) = self.phase_mobilities(s);
        lw / (lw + lnw)
    }
}

fn check_saturation(s: f64) -> Result<()> {
    if s.is_nan() || !(-SATURATION_TOL..=1.0 + SATURATION_TOL).contains(&s) {
        return Err(Error::SaturationDomain(s));
    }
    Ok(())
}

/// `lambda_w(s) + lambda_nw(1 - s)`.
pub fn total_mobility(s: f64, fluids: &FluidParams) -> Result<f64> {
    check_saturation(s)?;
    Ok(fluids.total_mobility_unchecked(s))
}

/// Wetting fractional flow `lambda_w / (lambda_w + lambda_nw)`.
pub fn fractional_flow(s: f64, fluids: &FluidParams) -> Result<f64> {
    check_saturation(s)?;
    Ok(fluids.fractional_flow_unchecked(s))
}

/// Analytic derivative of the fractional flow. May be infinite at the
/// endpoints when `beta < 1`.
pub fn fractional_flow_derivative(s: f64, fluids: &FluidParams) -> f64 {
    let s = s.clamp(0.0, 1.0);
    let b = fluids.beta;
    let a = s.powf(b) / fluids.mu_w;
    let c = (1.0 - s).powf(b) / fluids.mu_nw;
    let da = b * s.powf(b - 1.0) / fluids.mu_w;
    let dc = -b * (1.0 - s).powf(b - 1.0) / fluids.mu_nw;
    (da * c - a * dc) / ((a + c) * (a + c))
}

/// Largest `|f_w'|` over a uniform 1001-point sample of `[0, 1]`.
pub fn max_fractional_flow_slope(fluids: &FluidParams) -> f64 {
    (0..SLOPE_SAMPLES)
        .map(|k| fractional_flow_derivative(k as f64 / (SLOPE_SAMPLES - 1) as f64, fluids).abs())
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max)
}

/// Dirichlet pressures (Pa) at both ends, injected saturation and initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub p_left: f64,
    pub p_right: f64,
    pub s_inflow: f64,
    pub s_initial: f64,
}

impl BoundaryConditions {
    pub fn validate(&self) -> Result<()> {
        if self.p_left == self.p_right || !self.p_left.is_finite() || !self.p_right.is_finite() {
            return Err(Error::InvalidInput(format!(
                "boundary pressures must differ, got {} and {}",
                self.p_left, self.p_right
            )));
        }
        for s in [self.s_inflow, self.s_initial] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidInput(format!("boundary saturation {s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// +1 when flow runs left to right.
    fn orientation(&self) -> f64 {
        if self.p_left >= self.p_right {
            1.0
        } else {
            -1.0
        }
    }
}

/// Everything the solver needs about one physical configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProblem {
    pub grid: Grid1D,
    pub rock: RockField,
    pub fluids: FluidParams,
    pub bc: BoundaryConditions,
    pub cfl_safety: f64,
}

impl FlowProblem {
    pub fn new(grid: Grid1D, rock: RockField, fluids: FluidParams, bc: BoundaryConditions) -> Result<Self> {
        let problem = Self {
            grid,
            rock,
            fluids,
            bc,
            cfl_safety: 0.9,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_cfl_safety(mut self, safety: f64) -> Result<Self> {
        self.cfl_safety = safety;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rock.len() != self.grid.n_cells {
            return Err(Error::DimensionMismatch {
                expected: self.grid.n_cells,
                got: self.rock.len(),
            });
        }
        self.fluids.validate()?;
        self.bc.validate()?;
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "CFL safety factor must be in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.grid.n_cells
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Direction of flow at each of the `n + 1` faces used for upwinding:
    /// the sign of the previous flux, or the boundary-pressure orientation.
    fn face_directions(&self, prev_flux: Option<&[f64]>) -> Vec<f64> {
        let default = self.bc.orientation();
        match prev_flux {
            Some(f) => f
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        default
                    }
                })
                .collect(),
            None => vec![default; self.n() + 1],
        }
    }

    /// Saturation upwind of face `f` (face `f` sits between cells `f - 1` and `f`).
    fn upwind_saturation(&self, s: &[f64], face: usize, direction: f64) -> f64 {
        let n = self.n();
        if direction > 0.0 {
            if face == 0 {
                self.bc.s_inflow
            } else {
                s[face - 1]
            }
        } else if face == n {
            self.bc.s_inflow
        } else {
            s[face]
        }
    }

    /// Face transmissibilities including the upwinded total mobility,
    /// in m^3 / (Pa s) per m^2 of cross section.
    pub fn transmissibilities(&self, s: &[f64], prev_flux: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_len(s)?;
        if let Some(f) = prev_flux {
            if f.len() != self.n() + 1 {
                return Err(Error::DimensionMismatch {
                    expected: self.n() + 1,
                    got: f.len(),
                });
            }
        }
        let n = self.n();
        let dx = self.grid.dx_meters();
        let k = &self.rock.permeability;
        let dirs = self.face_directions(prev_flux);
        let mut t = Vec::with_capacity(n + 1);
        for face in 0..=n {
            let geometric = if face == 0 {
                2.0 * k[0] / dx
            } else if face == n {
                2.0 * k[n - 1] / dx
            } else {
                let (a, b) = (k[face - 1], k[face]);
                2.0 * a * b / (a + b) / dx
            };
            let s_up = self.upwind_saturation(s, face, dirs[face]);
            t.push(geometric * self.fluids.total_mobility_unchecked(s_up));
        }
        if let Some(face) = t.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::SingularSystem(format!(
                "transmissibility {} at face {face}",
                t[face]
            )));
        }
        Ok(t)
    }
}

/// Solve the two-point pressure system `div(v) = 0` with Dirichlet ends.
pub fn solve_pressure(problem: &FlowProblem, s: &[f64], prev_flux: Option<&[f64]>) -> Result<Vec<f64>> {
    let t = problem.transmissibilities(s, prev_flux)?;
    let p = solve_tridiagonal_pressure(&t, problem.bc.p_left, problem.bc.p_right)?;
    let residual = pressure_residual(&t, &p, problem.bc.p_left, problem.bc.p_right);
    let scale = t.iter().fold(0.0_f64, |m, &v| m.max(v)) * (problem.bc.p_left - problem.bc.p_right).abs();
    if residual > 1e-8 * scale {
        return Err(Error::SingularSystem(format!(
            "pressure residual {residual:e} exceeds tolerance (scale {scale:e})"
        )));
    }
    Ok(p)
}

/// Thomas algorithm for the cell-balance equations
/// `(t_i + t_{i+1}) p_i - t_i p_{i-1} - t_{i+1} p_{i+1} = 0`.
fn solve_tridiagonal_pressure(t: &[f64], p_left: f64, p_right: f64) -> Result<Vec<f64>> {
    let n = t.len() - 1;
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 0..n {
        let lower = if i > 0 { -t[i] } else { 0.0 };
        let upper = if i + 1 < n { -t[i + 1] } else { 0.0 };
        let diag = t[i] + t[i + 1];
        let mut rhs = 0.0;
        if i == 0 {
            rhs += t[0] * p_left;
        }
        if i + 1 == n {
            rhs += t[n] * p_right;
        }
        let denom = if i > 0 { diag - lower * c_prime[i - 1] } else { diag };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem(format!("zero pivot in row {i}")));
        }
        c_prime[i] = upper / denom;
        d_prime[i] = if i > 0 {
            (rhs - lower * d_prime[i - 1]) / denom
        } else {
            rhs / denom
        };
    }
    let mut p = vec![0.0; n];
    p[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        p[i] = d_prime[i] - c_prime[i] * p[i + 1];
    }
    Ok(p)
}

/// Max-norm of the cell balance residual.
pub fn pressure_residual(t: &[f64], p: &[f64], p_left: f64, p_right: f64) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let pl = if i == 0 { p_left } else { p[i - 1] };
            let pr = if i + 1 == n { p_right } else { p[i + 1] };
            (t[i + 1] * (p[i] - pr) - t[i] * (pl - p[i])).abs()
        })
        .fold(0.0, f64::max)
}

/// Total Darcy flux (m/s) at each of the `n + 1` faces, positive left to right.
pub fn total_velocity(problem: &FlowProblem, p: &[f64], s: &[f64], prev_flux: Option<&[f64]>) -> Result<Vec<f64>> {
    problem.check_len(p)?;
    let t = problem.transmissibilities(s, prev_flux)?;
    Ok(fluxes_from_pressure(&t, p, problem.bc.p_left, problem.bc.p_right))
}

fn fluxes_from_pressure(t: &[f64], p: &[f64], p_left: f64, p_right: f64) -> Vec<f64> {
    let n = p.len();
    (0..=n)
        .map(|face| {
            let pl = if face == 0 { p_left } else { p[face - 1] };
            let pr = if face == n { p_right } else { p[face] };
            t[face] * (pl - pr)
        })
        .collect()
}

/// Largest stable explicit step (s) for upwind transport with the given fluxes.
///
/// `slope` is `max |f_w'|`; pass `None` to sample it from the fluids.
pub fn cfl_timestep(problem: &FlowProblem, v: &[f64], slope: Option<f64>) -> Result<f64> {
    let n = problem.n();
    if v.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: v.len(),
        });
    }
    let slope = slope.unwrap_or_else(|| max_fractional_flow_slope(&problem.fluids));
    let dx = problem.grid.dx_meters();
    let mut dt = f64::INFINITY;
    for i in 0..n {
        let speed = v[i].abs().max(v[i + 1].abs()) * slope;
        if speed > 0.0 {
            dt = dt.min(problem.rock.porosity[i] * dx / speed);
        }
    }
    if dt.is_infinite() {
        return Err(Error::ZeroVelocity);
    }
    Ok(problem.cfl_safety * dt)
}

/// Wetting-phase flux through every face for the given total fluxes.
pub fn wetting_fluxes(problem: &FlowProblem, s: &[f64], v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|face| {
            let dir = if v[face] >= 0.0 { 1.0 } else { -1.0 };
            let s_up = problem.upwind_saturation(s, face, dir);
            v[face] * problem.fluids.fractional_flow_unchecked(s_up)
        })
        .collect()
}

/// One explicit upwind update of the wetting saturation.
pub fn advance_saturation(problem: &FlowProblem, s: &[f64], v: &[f64], dt: f64) -> Result<Vec<f64>> {
    problem.check_len(s)?;
    let n = problem.n();
    if v.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: v.len(),
        });
    }
    if dt == 0.0 {
        return Ok(s.to_vec());
    }
    let fw = wetting_fluxes(problem, s, v);
    let dx = problem.grid.dx_meters();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let value = s[i] - dt / (problem.rock.porosity[i] * dx) * (fw[i + 1] - fw[i]);
        if !(-MAX_PRINCIPLE_TOL..=1.0 + MAX_PRINCIPLE_TOL).contains(&value) {
            return Err(Error::CflViolation { cell: i, value });
        }
        out.push(value.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Water volume balance of one step (per m^2 of cross section).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// Net wetting volume entering through the boundaries during the step.
    pub net_inflow: f64,
    /// Change of `sum(phi * dx * s)` over the step.
    pub storage_change: f64,
}

/// Stateful IMPES time stepper.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    problem: &'a FlowProblem,
    saturation: Vec<f64>,
    flux: Option<Vec<f64>>,
    time: f64,
    steps: usize,
    slope: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(problem: &'a FlowProblem) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem,
            saturation: vec![problem.bc.s_initial; problem.grid.n_cells],
            flux: None,
            time: 0.0,
            steps: 0,
            slope: max_fractional_flow_slope(&problem.fluids),
        })
    }

    pub fn with_initial(problem: &'a FlowProblem, saturation: Vec<f64>) -> Result<Self> {
        let mut sim = Self::new(problem)?;
        problem.check_len(&saturation)?;
        for &s in &saturation {
            check_saturation(s)?;
        }
        sim.saturation = saturation;
        Ok(sim)
    }

    pub fn saturation(&self) -> &[f64] {
        &self.saturation
    }

    /// Elapsed time in seconds.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Pressure, then fluxes, then one saturation update with
    /// `dt = min(cfl, dt_max)`.
    pub fn step(&mut self, dt_max: f64) -> Result<StepReport> {
        let problem = self.problem;
        let s = &self.saturation;
        let prev = self.flux.as_deref();
        let t = problem.transmissibilities(s, prev)?;
        let p = solve_tridiagonal_pressure(&t, problem.bc.p_left, problem.bc.p_right)?;
        let v = fluxes_from_pressure(&t, &p, problem.bc.p_left, problem.bc.p_right);
        let dt = match cfl_timestep(problem, &v, Some(self.slope)) {
            Ok(dt) => dt.min(dt_max),
            Err(Error::ZeroVelocity) => dt_max,
            Err(e) => return Err(e),
        };
        let next = advance_saturation(problem, s, &v, dt)?;
        let fw = wetting_fluxes(problem, s, &v);
        let n = problem.n();
        let dx = problem.grid.dx_meters();
        let storage_change = (0..n).map(|i| problem.rock.porosity[i] * dx * (next[i] - s[i])).sum();
        let report = StepReport {
            dt,
            net_inflow: (fw[0] - fw[n]) * dt,
            storage_change,
        };
        self.saturation = next;
        self.flux = Some(v);
        self.time += dt;
        self.steps += 1;
        Ok(report)
    }

    /// Step until `target` seconds, landing exactly on it.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.time < target {
            let remaining = target - self.time;
            let report = self.step(remaining).map_err(|e| Error::Simulation {
                time_s: self.time,
                step: self.steps,
                source: Box::new(e),
            })?;
            if report.dt >= remaining {
                self.time = target;
            }
        }
        Ok(())
    }
}

/// Run one simulation and record a snapshot at every requested time (years).
///
/// `y` is attached to every snapshot as the non-time part of the parameter point.
pub fn run_simulation(problem: &FlowProblem, y: &[f64], snapshot_times: &[f64]) -> Result<Vec<Snapshot>> {
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("snapshot times must be sorted".into()));
    }
    if snapshot_times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("snapshot times must be nonnegative".into()));
    }
    let mut sim = Simulator::new(problem)?;
    let dx = problem.grid.dx();
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        sim.advance_to(t * SECONDS_PER_YEAR)?;
        out.push(Snapshot::new(
            ParameterPoint::new(t, y.to_vec()),
            sim.saturation().to_vec(),
            dx,
        ));
    }
    Ok(out)
}
