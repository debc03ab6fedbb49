//! Well placement problem on a synthetic reservoir: genome decoding, geometric
//! feasibility, a production proxy and NPV scoring.

pub mod econ;
pub mod geometry;
pub mod grid;
pub mod sim;

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use econ::{drilling_cost, npv, EconomicParams, FT_PER_M};
pub use geometry::{decode_wells, encode_wells, genome_dimension, WellGeometry, WellLayout};
pub use grid::{generate_grid, ReservoirGrid};
pub use sim::{simulate, ProductionProfile, ProxyParams, WellKind};

use crate::constraints::{should_reject, SumConstraint};
use crate::error::{Error, Result};
use crate::problem::Problem;

/// One well of the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub kind: WellKind,
    #[serde(default = "one")]
    pub n_deviations: usize,
    #[serde(default)]
    pub n_branches: usize,
}

fn one() -> usize {
    1
}

impl WellConfig {
    pub fn layout(&self) -> WellLayout {
        WellLayout {
            n_deviations: self.n_deviations,
            n_branches: self.n_branches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WellProblemConfig {
    pub wells: Vec<WellConfig>,
    pub economics: EconomicParams,
    pub proxy: ProxyParams,
    /// Grid file; the bundled grid when absent.
    pub grid: Option<PathBuf>,
    /// Lower bound of every segment length (m).
    pub min_segment_length: f64,
    /// Objective penalty per meter of geometric violation.
    pub geometry_penalty: f64,
}

impl Default for WellProblemConfig {
    fn default() -> Self {
        Self {
            wells: vec![
                WellConfig {
                    kind: WellKind::Injector,
                    n_deviations: 1,
                    n_branches: 0,
                },
                WellConfig {
                    kind: WellKind::Producer,
                    n_deviations: 1,
                    n_branches: 0,
                },
            ],
            economics: EconomicParams::default(),
            proxy: ProxyParams::default(),
            grid: None,
            min_segment_length: 50.0,
            geometry_penalty: 1e6,
        }
    }
}

/// Result of the geometric feasibility test of one well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryCheck {
    pub length: f64,
    /// `max(0, length - L_max)`.
    pub length_excess: f64,
    /// Sum over defining points of the distance to the grid box.
    pub outside_distance: f64,
    pub feasible: bool,
}

impl GeometryCheck {
    pub fn violation(&self) -> f64 {
        self.length_excess + self.outside_distance
    }
}

/// Feasible iff the total length is below `max_length` and every defining
/// point lies in the grid box.
pub fn check_geometry(well: &WellGeometry, grid: &ReservoirGrid, max_length: f64) -> GeometryCheck {
    let length = well.total_length();
    let outside_distance: f64 = well
        .defining_points()
        .iter()
        .map(|p| grid.outside_distance(*p))
        .sum();
    GeometryCheck {
        length,
        length_excess: (length - max_length).max(0.0),
        outside_distance,
        feasible: length < max_length && outside_distance == 0.0,
    }
}

/// Distance kept from the box faces by [`clamp_to_feasible`], so that the
/// clamped geometry survives an encode/decode round trip.
pub const CLAMP_MARGIN: f64 = 1e-6;

/// Nearest-in-spirit feasible well: shrink about the heel below `max_length`,
/// then project the defining points into the box (less a tiny margin).
/// Neither step lengthens any segment.
pub fn clamp_to_feasible(
    well: &WellGeometry,
    grid: &ReservoirGrid,
    max_length: f64,
) -> WellGeometry {
    let e = grid.extent();
    let project = |p: geometry::Point| -> geometry::Point {
        std::array::from_fn(|a| p[a].clamp(CLAMP_MARGIN, e[a] - CLAMP_MARGIN))
    };
    let length = well.total_length();
    let s = if length >= max_length {
        max_length * (1.0 - 1e-9) / length
    } else {
        1.0
    };
    let heel = project(well.heel());
    let scale = |p: geometry::Point| {
        let d = geometry::sub(p, well.heel());
        [heel[0] + s * d[0], heel[1] + s * d[1], heel[2] + s * d[2]]
    };
    let mut out = WellGeometry {
        mainbore: well.mainbore.iter().map(|p| project(scale(*p))).collect(),
        branches: Vec::with_capacity(well.branches.len()),
    };
    out.mainbore[0] = heel;
    let total = out.mainbore_length();
    for b in &well.branches {
        let offset = (b.offset * s).min(total);
        let start = out.point_at(offset);
        let v = geometry::sub(b.end, b.start);
        let end = project([
            start[0] + s * v[0],
            start[1] + s * v[1],
            start[2] + s * v[2],
        ]);
        out.branches.push(geometry::Branch { offset, start, end });
    }
    out
}

/// Everything reported for one scored configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct WellEvaluation {
    pub wells: Vec<WellGeometry>,
    pub checks: Vec<GeometryCheck>,
    /// Geometry actually simulated (clamped where infeasible).
    pub simulated: Vec<WellGeometry>,
    pub profile: ProductionProfile,
    pub cost: f64,
    pub npv: f64,
    /// Value minimized by the optimizers.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct WellProblem {
    wells: Vec<WellConfig>,
    grid: ReservoirGrid,
    economics: EconomicParams,
    proxy: ProxyParams,
    min_segment_length: f64,
    geometry_penalty: f64,
}

impl WellProblem {
    pub fn new(config: &WellProblemConfig) -> Result<Self> {
        let grid = match &config.grid {
            Some(path) => ReservoirGrid::load(path)?,
            None => ReservoirGrid::bundled(),
        };
        Self::with_grid(config, grid)
    }

    pub fn with_grid(config: &WellProblemConfig, grid: ReservoirGrid) -> Result<Self> {
        grid.validate()?;
        config.economics.validate()?;
        if config.wells.is_empty() {
            return Err(Error::Config("well problem needs at least one well".into()));
        }
        if !config.wells.iter().any(|w| w.kind == WellKind::Producer) {
            return Err(Error::Config(
                "well problem needs at least one producer".into(),
            ));
        }
        if !(config.min_segment_length > 0.0
            && config.min_segment_length < config.economics.max_well_length)
        {
            return Err(Error::Config(
                "min_segment_length must lie in (0, max_well_length)".into(),
            ));
        }
        if !(config.geometry_penalty >= 0.0) {
            return Err(Error::Config(
                "geometry_penalty must be non-negative".into(),
            ));
        }
        Ok(Self {
            wells: config.wells.clone(),
            grid,
            economics: config.economics,
            proxy: config.proxy,
            min_segment_length: config.min_segment_length,
            geometry_penalty: config.geometry_penalty,
        })
    }

    /// Default configuration on the bundled grid: one injector and one
    /// producer, each with a single deviation.
    pub fn bundled() -> Self {
        Self::new(&WellProblemConfig::default()).expect("default well problem is valid")
    }

    pub fn grid(&self) -> &ReservoirGrid {
        &self.grid
    }

    pub fn economics(&self) -> &EconomicParams {
        &self.economics
    }

    pub fn layouts(&self) -> Vec<WellLayout> {
        self.wells.iter().map(WellConfig::layout).collect()
    }

    pub fn decode(&self, genome: &[f64]) -> Result<Vec<WellGeometry>> {
        decode_wells(genome, &self.layouts())
    }

    /// Genome of the clamped geometry.
    pub fn clamp_genome(&self, genome: &[f64]) -> Result<Vec<f64>> {
        let wells = self.decode(genome)?;
        let clamped: Vec<WellGeometry> = wells
            .iter()
            .map(|w| clamp_to_feasible(w, &self.grid, self.economics.max_well_length))
            .collect();
        Ok(encode_wells(&clamped))
    }

    pub fn score(&self, wells: &[WellGeometry]) -> (ProductionProfile, f64, f64) {
        let pairs: Vec<(WellKind, WellGeometry)> = self
            .wells
            .iter()
            .map(|c| c.kind)
            .zip(wells.iter().cloned())
            .collect();
        let profile = simulate(&pairs, &self.grid, &self.proxy, self.economics.periods + 1);
        let cost = drilling_cost(wells, &self.economics);
        let value = npv(&profile, &self.economics, cost);
        (profile, cost, value)
    }

    pub fn evaluate_detailed(&self, genome: &[f64]) -> Result<WellEvaluation> {
        let wells = self.decode(genome)?;
        let max_length = self.economics.max_well_length;
        let checks: Vec<GeometryCheck> = wells
            .iter()
            .map(|w| check_geometry(w, &self.grid, max_length))
            .collect();
        let simulated: Vec<WellGeometry> = wells
            .iter()
            .zip(&checks)
            .map(|(w, c)| {
                if c.feasible {
                    w.clone()
                } else {
                    clamp_to_feasible(w, &self.grid, max_length)
                }
            })
            .collect();
        let (profile, cost, value) = self.score(&simulated);
        let violation: f64 = checks.iter().map(GeometryCheck::violation).sum();
        let objective = -value + self.geometry_penalty * violation;
        Ok(WellEvaluation {
            wells,
            checks,
            simulated,
            profile,
            cost,
            npv: value,
            objective,
        })
    }

    /// Indices of every segment length in the genome, per well.
    fn radius_indices(&self) -> Vec<Vec<usize>> {
        let mut at = 0;
        self.wells
            .iter()
            .map(|w| {
                let mut idx: Vec<usize> = (0..w.n_deviations).map(|d| at + 3 + 3 * d).collect();
                let base = at + 3 * (1 + w.n_deviations);
                idx.extend((0..w.n_branches).map(|b| base + 4 * b + 1));
                at += w.layout().dimension();
                idx
            })
            .collect()
    }
}

impl Problem for WellProblem {
    fn dimension(&self) -> usize {
        self.wells.iter().map(|w| w.layout().dimension()).sum()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let e = self.grid.extent();
        let l = self.economics.max_well_length;
        let r = (self.min_segment_length, l);
        let mut b = Vec::with_capacity(self.dimension());
        for w in &self.wells {
            b.extend([(0.0, e[0]), (0.0, e[1]), (0.0, e[2])]);
            for _ in 0..w.n_deviations {
                b.extend([r, (0.0, PI), (-PI, PI)]);
            }
            for _ in 0..w.n_branches {
                b.extend([(0.0, l), r, (0.0, PI), (-PI, PI)]);
            }
        }
        b
    }

    /// Negated NPV of the (clamped) geometry plus the geometry penalty.
    fn evaluate(&self, x: &[f64]) -> f64 {
        match self.evaluate_detailed(x) {
            Ok(e) => e.objective,
            Err(_) => f64::NAN,
        }
    }

    /// Heel coordinates within the box and the per-well length budget.
    fn constraints(&self) -> Vec<SumConstraint> {
        let e = self.grid.extent();
        let mut out = Vec::new();
        let mut at = 0;
        for (w, radii) in self.wells.iter().zip(self.radius_indices()) {
            for (a, extent) in e.iter().enumerate() {
                out.push(
                    SumConstraint::new(vec![at + a], 0.0, *extent).expect("valid heel constraint"),
                );
            }
            if !radii.is_empty() {
                out.push(
                    SumConstraint::new(radii, 0.0, self.economics.max_well_length)
                        .expect("valid length constraint"),
                );
            }
            at += w.layout().dimension();
        }
        out
    }

    fn is_feasible(&self, x: &[f64]) -> bool {
        match self.decode(x) {
            Ok(wells) => wells
                .iter()
                .all(|w| check_geometry(w, &self.grid, self.economics.max_well_length).feasible),
            Err(_) => false,
        }
    }

    /// Any defining-point coordinate out of the box by more than `p` times
    /// its magnitude.
    fn far_infeasible(&self, x: &[f64], p: f64) -> bool {
        let Ok(wells) = self.decode(x) else {
            return true;
        };
        let e = self.grid.extent();
        wells
            .iter()
            .flat_map(WellGeometry::defining_points)
            .any(|pt| (0..3).any(|a| should_reject(pt[a], pt[a].clamp(0.0, e[a]), p)))
    }

    /// Wells spread along x, each running horizontally along +y through the
    /// middle layer, branches along +x from the heel.
    fn reference_point(&self) -> Option<Vec<f64>> {
        let e = self.grid.extent();
        let n = self.wells.len() as f64;
        let mut g = Vec::with_capacity(self.dimension());
        for (k, w) in self.wells.iter().enumerate() {
            let pieces = (w.n_deviations + w.n_branches).max(1) as f64;
            let r = (self.economics.max_well_length / (4.0 * pieces))
                .min(0.4 * e[1] / pieces)
                .max(self.min_segment_length);
            g.extend([e[0] * (k as f64 + 1.0) / (n + 1.0), 0.3 * e[1], 0.5 * e[2]]);
            for _ in 0..w.n_deviations {
                g.extend([r, PI / 2.0, PI / 2.0]);
            }
            for _ in 0..w.n_branches {
                g.extend([0.0, r.min(0.4 * e[0] / (n + 1.0)), PI / 2.0, 0.0]);
            }
        }
        self.is_feasible(&g).then_some(g)
    }
}
