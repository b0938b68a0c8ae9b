//! Declarative experiment descriptions.
//!
//! A [`Scenario`] bundles everything one run needs: mesh resolution,
//! material parameters, the time grid, linear-ramp boundary clauses, an
//! optional seeded pre-crack and an optional circular hole, solver controls,
//! and output options. Three built-in scenarios cover the benchmark
//! geometries; custom ones load from JSON with unknown keys rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::energy::MaterialParams;
use crate::fem::NodalField;
use crate::mesh::{Mesh, Side};
use crate::solvers::DirichletData;
use crate::{Error, Result};

/// One Dirichlet clause: `u = rate * t` on a closed interval of one side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryClause {
    pub side: Side,
    /// Closed sub-interval of the side's arc-length coordinate, inside [0,1].
    pub interval: [f64; 2],
    /// Prescribed value per unit time.
    pub rate: f64,
}

/// A straight seeded crack, described by its centerline and half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Precrack {
    pub start: [f64; 2],
    pub end: [f64; 2],
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

/// A circular hole removed from the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Solver tolerances and iteration caps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveControls {
    /// Sup-norm tolerance on phase changes (inner and outer loops).
    pub tol_v: f64,
    /// Relative residual target of the elastic linear solve.
    pub tol_lin: f64,
    /// Cap on alternating-minimization sweeps per time step.
    pub max_outer: usize,
    /// Cap on Newton iterations per phase solve.
    pub max_newton: usize,
}

impl Default for SolveControls {
    fn default() -> Self {
        SolveControls {
            tol_v: 2e-3,
            tol_lin: 1e-10,
            max_outer: 10,
            max_newton: 50,
        }
    }
}

/// What a run writes besides the trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Write a field snapshot every k-th step; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Stop once the elastic energy has collapsed (specimen broken).
    pub early_stop: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            snapshot_every: 0,
            early_stop: true,
        }
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Subdivisions per side of the unit square.
    #[serde(default = "default_h")]
    pub mesh_h: usize,
    #[serde(default)]
    pub params: MaterialParams,
    /// Time step.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Time horizon; the run visits t = tau, 2 tau, ... up to t_end.
    pub t_end: f64,
    pub boundary: Vec<BoundaryClause>,
    #[serde(default)]
    pub precrack: Option<Precrack>,
    #[serde(default)]
    pub hole: Option<Hole>,
    #[serde(default)]
    pub controls: SolveControls,
    #[serde(default)]
    pub output: OutputOptions,
}

fn default_h() -> usize {
    64
}

fn default_tau() -> f64 {
    0.01
}

fn default_half_width() -> f64 {
    5e-4
}

/// Half-width of the slit mouths in the built-in scenarios.
const BUILTIN_HALF_WIDTH: f64 = 5e-4;

impl Scenario {
    /// The built-in benchmark scenarios.
    ///
    /// All three share the default material parameters and tau = 0.01.
    /// `example1`: horizontal seeded crack from the middle of the left edge,
    /// antisymmetric tearing load above/below the slit mouth. `example2`:
    /// the crack tilted upward along y = x/2 + 2/5 with its mouth at
    /// y = 0.4, same loading split at the mouth. `example3`: the first
    /// geometry with a circular hole of radius 0.1 at (0.7, 0.3).
    pub fn builtin(name: &str) -> Result<Scenario> {
        let mouth = |c: f64| {
            vec![
                BoundaryClause {
                    side: Side::Left,
                    interval: [0.0, c - BUILTIN_HALF_WIDTH],
                    rate: 1.0,
                },
                BoundaryClause {
                    side: Side::Left,
                    interval: [c + BUILTIN_HALF_WIDTH, 1.0],
                    rate: -1.0,
                },
            ]
        };
        let base = |name: &str, t_end: f64| Scenario {
            name: name.to_owned(),
            mesh_h: default_h(),
            params: MaterialParams::default(),
            tau: default_tau(),
            t_end,
            boundary: mouth(0.5),
            precrack: Some(Precrack {
                start: [0.0, 0.5],
                end: [0.125, 0.5],
                half_width: BUILTIN_HALF_WIDTH,
            }),
            hole: None,
            controls: SolveControls::default(),
            output: OutputOptions::default(),
        };
        match name {
            "example1" => Ok(base("example1", 1.3)),
            "example2" => Ok(Scenario {
                boundary: mouth(0.4),
                precrack: Some(Precrack {
                    start: [0.0, 0.4],
                    end: [0.125, 0.4625],
                    half_width: BUILTIN_HALF_WIDTH,
                }),
                ..base("example2", 1.0)
            }),
            "example3" => Ok(Scenario {
                hole: Some(Hole {
                    center: [0.7, 0.3],
                    radius: 0.1,
                }),
                ..base("example3", 1.5)
            }),
            other => Err(Error::InvalidScenario(format!(
                "unknown built-in scenario {other:?}; expected example1, example2, or example3"
            ))),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_file(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidScenario(format!("tau = {}", self.tau)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.tau) {
            return Err(Error::InvalidScenario(format!(
                "t_end = {} must be at least tau = {}",
                self.t_end, self.tau
            )));
        }
        if self.mesh_h < 2 {
            return Err(Error::InvalidScenario(format!(
                "mesh_h = {} is too coarse",
                self.mesh_h
            )));
        }
        if self.boundary.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one boundary clause is required".into(),
            ));
        }
        for (k, clause) in self.boundary.iter().enumerate() {
            let [lo, hi] = clause.interval;
            let ok = lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0 && hi <= 1.0;
            if !ok {
                return Err(Error::InvalidScenario(format!(
                    "boundary clause {k}: interval [{lo}, {hi}] is not a sub-interval of [0, 1]"
                )));
            }
            if !clause.rate.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "boundary clause {k}: rate = {}",
                    clause.rate
                )));
            }
        }
        if let Some(pc) = &self.precrack {
            for c in pc.start.iter().chain(pc.end.iter()) {
                if !(c.is_finite() && (0.0..=1.0).contains(c)) {
                    return Err(Error::InvalidScenario(format!(
                        "precrack endpoint coordinate {c} outside the unit square"
                    )));
                }
            }
            if !(pc.half_width.is_finite() && pc.half_width > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "precrack half_width = {}",
                    pc.half_width
                )));
            }
        }
        if let Some(hole) = &self.hole {
            // Full geometric checks happen in carve_hole; catch the obvious here.
            if !(hole.radius.is_finite() && hole.radius > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "hole radius = {}",
                    hole.radius
                )));
            }
        }
        let c = &self.controls;
        if !(c.tol_v.is_finite() && c.tol_v > 0.0) {
            return Err(Error::InvalidScenario(format!("tol_v = {}", c.tol_v)));
        }
        if !(c.tol_lin.is_finite() && c.tol_lin > 0.0) {
            return Err(Error::InvalidScenario(format!("tol_lin = {}", c.tol_lin)));
        }
        if c.max_outer == 0 || c.max_newton == 0 {
            return Err(Error::InvalidScenario(
                "max_outer and max_newton must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of time steps the run will take (after the initial state).
    pub fn n_steps(&self) -> usize {
        // Robust against t_end not being an exact multiple of tau.
        ((self.t_end / self.tau) + 1e-9).floor() as usize
    }

    /// Builds the mesh, carving the hole if the scenario has one.
    pub fn build_mesh(&self) -> Result<Mesh> {
        self.validate()?;
        let mesh = Mesh::uniform(self.mesh_h)?;
        match &self.hole {
            Some(hole) => mesh.carve_hole(hole.center, hole.radius),
            None => Ok(mesh),
        }
    }

    /// The initial phase: intact except for a zeroed band along the pre-crack.
    ///
    /// The band radius is `max(half_width, 1/(2 h))` so the seed stays at
    /// least one half grid-spacing wide even when the physical slit is
    /// thinner than a cell.
    pub fn seed_initial_phase(&self, mesh: &Mesh) -> Result<NodalField> {
        let mut v = NodalField::constant(mesh, 1.0);
        if let Some(pc) = &self.precrack {
            let radius = pc.half_width.max(0.5 / mesh.h() as f64);
            for l in 0..mesh.n_vertices() {
                if !mesh.is_active(l) {
                    continue;
                }
                if segment_distance(mesh.vertex(l), pc.start, pc.end) <= radius {
                    v.set(l, 0.0);
                }
            }
        }
        Ok(v)
    }

    /// Samples the boundary schedule at time `t`.
    ///
    /// Each clause prescribes `rate * t` on its vertices. Vertices within
    /// the slit mouth (closer than the pre-crack half-width to a pre-crack
    /// endpoint lying on the boundary) stay unconstrained so the two ramp
    /// signs never meet. Clauses assigning different values to one vertex
    /// are rejected with the vertex named.
    pub fn dirichlet_at(&self, mesh: &Mesh, t: f64) -> Result<DirichletData> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidBoundaryData(format!("time t = {t}")));
        }
        let mut pairs = Vec::new();
        for clause in &self.boundary {
            for l in mesh.boundary_vertices(clause.side, clause.interval) {
                if self.in_slit_mouth(mesh, l) {
                    continue;
                }
                pairs.push((l, clause.rate * t));
            }
        }
        DirichletData::new(mesh, pairs)
    }

    fn in_slit_mouth(&self, mesh: &Mesh, l: usize) -> bool {
        let Some(pc) = &self.precrack else {
            return false;
        };
        let [x, y] = mesh.vertex(l);
        for end in [pc.start, pc.end] {
            let on_vertical = (end[0] == 0.0 && x == 0.0) || (end[0] == 1.0 && x == 1.0);
            let on_horizontal = (end[1] == 0.0 && y == 0.0) || (end[1] == 1.0 && y == 1.0);
            if on_vertical && (y - end[1]).abs() < pc.half_width {
                return true;
            }
            if on_horizontal && (x - end[0]).abs() < pc.half_width {
                return true;
            }
        }
        false
    }
}

/// Euclidean distance from a point to a closed segment.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let cx = a[0] + t * dx;
    let cy = a[1] + t * dy;
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}
