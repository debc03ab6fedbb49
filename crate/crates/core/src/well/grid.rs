//! Synthetic reservoir grid.
//!
//! Cell `(i, j, k)` covers `[i dx, (i+1) dx] x [j dy, (j+1) dy] x [k dz, (k+1) dz]`
//! with depth `z` measured downward from the top of the grid. Per-cell arrays
//! are flat and row-major with `i` fastest: `index = (k ny + j) nx + i`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::Point;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Seed of the bundled grid.
pub const BUNDLED_SEED: u64 = 42;

const BUNDLED: &str = include_str!("../../data/synthetic_grid.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirGrid {
    pub dims: [usize; 3],
    /// Cell sizes in meters.
    pub cell_size: [f64; 3],
    pub porosity: Vec<f64>,
    pub oil_saturation: Vec<f64>,
    /// Permeability proxy (mD), positive.
    pub permeability: Vec<f64>,
    /// Top-structure depth map in meters, `nx * ny` values.
    pub elevation: Vec<f64>,
}

impl ReservoirGrid {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled grid parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let grid: Self =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        crate::harness::record::write_atomic(path, text.as_bytes())
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_size.iter().product()
    }

    /// Extent of the bounding box along each axis.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.cell_size[0],
            self.dims[1] as f64 * self.cell_size[1],
            self.dims[2] as f64 * self.cell_size[2],
        ]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point {
        [
            (i as f64 + 0.5) * self.cell_size[0],
            (j as f64 + 0.5) * self.cell_size[1],
            (k as f64 + 0.5) * self.cell_size[2],
        ]
    }

    /// Cell containing `p`, `None` outside the box.
    pub fn locate(&self, p: Point) -> Option<(usize, usize, usize)> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let v = p[a] / self.cell_size[a];
            if !(v >= 0.0 && v <= self.dims[a] as f64) {
                return None;
            }
            c[a] = (v.floor() as usize).min(self.dims[a] - 1);
        }
        Some((c[0], c[1], c[2]))
    }

    pub fn contains(&self, p: Point) -> bool {
        let e = self.extent();
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= e[a])
    }

    /// Euclidean distance from `p` to the box, 0 inside.
    pub fn outside_distance(&self, p: Point) -> f64 {
        let e = self.extent();
        (0..3)
            .map(|a| {
                let d = (-p[a]).max(p[a] - e[a]).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn project(&self, p: Point) -> Point {
        let e = self.extent();
        [
            p[0].clamp(0.0, e[0]),
            p[1].clamp(0.0, e[1]),
            p[2].clamp(0.0, e[2]),
        ]
    }

    /// `phi * S_o` per cell.
    pub fn oil_fraction(&self, idx: usize) -> f64 {
        self.porosity[idx] * self.oil_saturation[idx]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        if n == 0 || self.cell_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(
                "grid dimensions and cell sizes must be positive".into(),
            ));
        }
        for (name, v) in [
            ("porosity", &self.porosity),
            ("oil_saturation", &self.oil_saturation),
            ("permeability", &self.permeability),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "{name} holds {} values, expected {n}",
                    v.len()
                )));
            }
        }
        if self.elevation.len() != self.dims[0] * self.dims[1] {
            return Err(Error::Config("elevation must hold nx * ny values".into()));
        }
        if self.porosity.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Config("porosity must lie in (0, 1)".into()));
        }
        if self.oil_saturation.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config("oil saturation must lie in [0, 1]".into()));
        }
        if self
            .permeability
            .iter()
            .any(|k| !(k.is_finite() && *k > 0.0))
        {
            return Err(Error::Config("permeability must be positive".into()));
        }
        if self.elevation.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("elevation must be finite".into()));
        }
        Ok(())
    }
}

struct Lobe {
    center: [f64; 2],
    radius: f64,
    layer: f64,
    strength: f64,
}

impl Lobe {
    fn weight(&self, x: f64, y: f64, k: f64) -> f64 {
        let d2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        let lateral = (-d2 / (2.0 * self.radius * self.radius)).exp();
        let vertical = (-(k - self.layer).powi(2) / 4.0).exp();
        self.strength * lateral * vertical
    }
}

/// 19 x 28 x 5 grid of 100 m x 100 m x 10 m cells with two high `phi * S_o`
/// lobes at seeded positions and mild seeded noise.
pub fn generate_grid(seed: u64) -> ReservoirGrid {
    let dims = [19usize, 28, 5];
    let cell_size = [100.0, 100.0, 10.0];
    let mut rng = seeded(seed);
    let (lx, ly) = (dims[0] as f64 * cell_size[0], dims[1] as f64 * cell_size[1]);
    let lobes = [
        Lobe {
            center: [
                rng.random_range(0.2..0.45) * lx,
                rng.random_range(0.15..0.4) * ly,
            ],
            radius: rng.random_range(250.0..400.0),
            layer: rng.random_range(1.0..3.0),
            strength: 1.0,
        },
        Lobe {
            center: [
                rng.random_range(0.55..0.8) * lx,
                rng.random_range(0.6..0.85) * ly,
            ],
            radius: rng.random_range(200.0..350.0),
            layer: rng.random_range(1.0..3.0),
            strength: 0.8,
        },
    ];
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let n = dims.iter().product();
    let (mut porosity, mut oil_saturation, mut permeability) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let (x, y) = (
                    (i as f64 + 0.5) * cell_size[0],
                    (j as f64 + 0.5) * cell_size[1],
                );
                let w: f64 = lobes
                    .iter()
                    .map(|l| l.weight(x, y, k as f64))
                    .sum::<f64>()
                    .min(1.0);
                let phi = (0.08 + 0.2 * w + 0.01 * noise.sample(&mut rng)).clamp(0.02, 0.35);
                let so = (0.15 + 0.65 * w + 0.03 * noise.sample(&mut rng)).clamp(0.0, 0.9);
                let perm = (3.0 + 3.0 * w + 0.3 * noise.sample(&mut rng)).exp();
                porosity.push(phi);
                oil_saturation.push(so);
                permeability.push(perm);
            }
        }
    }
    let mut elevation = Vec::with_capacity(dims[0] * dims[1]);
    for j in 0..dims[1] {
        for i in 0..dims[0] {
            let (u, v) = (
                (i as f64 + 0.5) / dims[0] as f64 - 0.5,
                (j as f64 + 0.5) / dims[1] as f64 - 0.5,
            );
            elevation.push(2350.0 + 120.0 * (u * u + v * v) + 2.0 * noise.sample(&mut rng));
        }
    }
    ReservoirGrid {
        dims,
        cell_size,
        porosity,
        oil_saturation,
        permeability,
        elevation,
    }
}
