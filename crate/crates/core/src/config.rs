//! Experiment configuration: physical setup, parameter sweep and solver settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{BoundaryConditions, FlowProblem, FluidParams, Grid1D, RockField};
use crate::greedy::GreedySettings;
use crate::simplex::QpSettings;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RockType {
    pub porosity: f64,
    /// m^2
    pub permeability: f64,
}

/// Two rock types separated at `interface` (km): `upstream` for cell
/// centers left of it, `downstream` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RockSpec {
    pub upstream: RockType,
    pub downstream: RockType,
    pub interface: f64,
}

impl RockSpec {
    pub fn homogeneous(rock: RockType) -> Self {
        Self {
            upstream: rock,
            downstream: rock,
            interface: 0.0,
        }
    }

    pub fn field(&self, grid: &Grid1D) -> Result<RockField> {
        let (phi, k): (Vec<f64>, Vec<f64>) = grid
            .cell_centers()
            .into_iter()
            .map(|x| {
                let r = if x < self.interface {
                    self.upstream
                } else {
                    self.downstream
                };
                (r.porosity, r.permeability)
            })
            .unzip();
        RockField::new(phi, k)
    }
}

/// Which physical quantity a parameter axis overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    /// `mu_nw / mu_w`, keeping `mu_w` fixed.
    ViscosityRatio,
    Beta,
    MuW,
    MuNw,
    UpstreamPermeability,
    UpstreamPorosity,
    DownstreamPermeability,
    DownstreamPorosity,
    /// Interface position (km).
    Interface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterAxis {
    pub parameter: ParameterKind,
    pub values: Vec<f64>,
}

fn default_safety() -> f64 {
    0.9
}

fn default_tolerances() -> Vec<f64> {
    vec![0.1, 0.05, 0.01, 0.005]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub grid: Grid1D,
    pub boundary: BoundaryConditions,
    pub rock: RockSpec,
    pub fluids: FluidParams,
    pub axes: Vec<ParameterAxis>,
    /// Snapshot instants in years.
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    #[serde(default)]
    pub greedy: GreedySettings,
    #[serde(default)]
    pub qp: QpSettings,
    /// Probability nodes of the icdf; defaults to `n_cells + 2`.
    #[serde(default)]
    pub icdf_nodes: Option<usize>,
    /// Tolerances reported in the comparison tables.
    #[serde(default = "default_tolerances")]
    pub tolerances: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub const EXAMPLE1_JSON: &str = include_str!("../presets/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../presets/example2.json");

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Homogeneous medium, varying viscosity ratio and exponent.
    pub fn example1() -> Self {
        Self::from_json(EXAMPLE1_JSON).expect("bundled preset is valid")
    }

    /// Two rock types, varying downstream permeability and interface position.
    pub fn example2() -> Self {
        Self::from_json(EXAMPLE2_JSON).expect("bundled preset is valid")
    }

    pub fn icdf_nodes(&self) -> usize {
        self.icdf_nodes.unwrap_or(self.grid.n_cells + 2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return fail(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n_cells)
            .map_err(|e| Error::Config(format!("grid: {e}")))?;
        self.boundary
            .validate()
            .map_err(|e| Error::Config(format!("boundary: {e}")))?;
        self.fluids
            .validate()
            .map_err(|e| Error::Config(format!("fluids: {e}")))?;
        for (name, r) in [("upstream", self.rock.upstream), ("downstream", self.rock.downstream)] {
            if !(r.porosity > 0.0 && r.porosity <= 1.0 && r.permeability > 0.0) {
                return fail(format!("rock.{name}: porosity must be in (0, 1] and permeability > 0"));
            }
        }
        if self.axes.is_empty() {
            return fail("at least one parameter axis is required".into());
        }
        for (k, axis) in self.axes.iter().enumerate() {
            if axis.values.is_empty() {
                return fail(format!("axis {k} ({:?}) has no values", axis.parameter));
            }
            if axis.values.windows(2).any(|w| !(w[1] > w[0])) {
                return fail(format!(
                    "axis {k} ({:?}) values must be strictly increasing",
                    axis.parameter
                ));
            }
            if self.axes[..k].iter().any(|a| a.parameter == axis.parameter) {
                return fail(format!("parameter {:?} appears on two axes", axis.parameter));
            }
            let positive = !matches!(axis.parameter, ParameterKind::Interface);
            if positive && axis.values.iter().any(|&v| !(v > 0.0)) {
                return fail(format!("axis {k} ({:?}) values must be positive", axis.parameter));
            }
        }
        if self.snapshot_times.is_empty() {
            return fail("snapshot_times is empty".into());
        }
        if self.snapshot_times.windows(2).any(|w| !(w[1] > w[0])) || self.snapshot_times[0] < 0.0 {
            return fail("snapshot_times must be nonnegative and strictly increasing".into());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return fail(format!("cfl_safety {} not in (0, 1]", self.cfl_safety));
        }
        if self.greedy.n_max < 2 {
            return fail("greedy.n_max must be at least 2".into());
        }
        if !(self.greedy.eps_abs >= 0.0) {
            return fail("greedy.eps_abs must be nonnegative".into());
        }
        if let Some(r) = self.greedy.eps_rel {
            if !(0.0..1.0).contains(&r) {
                return fail("greedy.eps_rel must be in [0, 1)".into());
            }
        }
        if !(self.qp.tol > 0.0) || self.qp.max_iter == 0 {
            return fail("qp.tol must be positive and qp.max_iter nonzero".into());
        }
        if self.icdf_nodes() < 2 {
            return fail("icdf_nodes must be at least 2".into());
        }
        if self.tolerances.iter().any(|&e| !(e > 0.0)) {
            return fail("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(|a| {
                serde_json::to_value(a.parameter)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            })
            .collect()
    }

    /// Tensor product of the axes, first axis slowest.
    pub fn parameter_points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn n_snapshots(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product::<usize>() * self.snapshot_times.len()
    }

    /// The flow problem at parameter values `y` (one value per axis).
    pub fn problem_for(&self, y: &[f64]) -> Result<FlowProblem> {
        if y.len() != self.axes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.axes.len(),
                got: y.len(),
            });
        }
        let mut fluids = self.fluids;
        let mut rock = self.rock;
        let mut ratio = None;
        for (axis, &v) in self.axes.iter().zip(y) {
            match axis.parameter {
                ParameterKind::ViscosityRatio => ratio = Some(v),
                ParameterKind::Beta => fluids.beta = v,
                ParameterKind::MuW => fluids.mu_w = v,
                ParameterKind::MuNw => fluids.mu_nw = v,
                ParameterKind::UpstreamPermeability => rock.upstream.permeability = v,
                ParameterKind::UpstreamPorosity => rock.upstream.porosity = v,
                ParameterKind::DownstreamPermeability => rock.downstream.permeability = v,
                ParameterKind::DownstreamPorosity => rock.downstream.porosity = v,
                ParameterKind::Interface => rock.interface = v,
            }
        }
        if let Some(r) = ratio {
            fluids.mu_nw = r * fluids.mu_w;
        }
        let grid = Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n_cells)?;
        FlowProblem::new(grid, rock.field(&grid)?, fluids, self.boundary)?.with_cfl_safety(self.cfl_safety)
    }
}
