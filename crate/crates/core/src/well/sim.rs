//! Deterministic production proxy standing in for a reservoir simulator.
//!
//! For each well:
//!
//! * `PI = Σ_cells perm_c · L_c`, with `L_c` the length of the well inside
//!   cell `c` (all segments, branches included).
//!
//! For each producer `w`:
//!
//! * drainage weight of cell `c`: `K_wc = exp(-d_wc / ℓ)`, `d_wc` the distance
//!   from the cell center to the well. Cells are shared between producers:
//!   `share_wc = K_wc / max(1, Σ_v K_vc)`.
//! * drainable oil `N_w = B Σ_c V φ_c S_o,c share_wc` (barrels, `B` converts m³).
//! * injector support `S_w = min(1, Σ_i PI_i / (PI_i + PI_half) · exp(-s_wi / ℓ_s))`
//!   with `s_wi` the producer-injector distance, and connectivity
//!   `conn_w = c_min + (1 - c_min) S_w`.
//! * decline `a_w = 1 - exp(-PI_w conn_w / PI_scale)`; liquid in period `n` is
//!   `RF_max N_w a_w (1 - a_w)^n`.
//! * water cut `f_n = 1 / (1 + exp(-(R_n - r50_w) / width))` with `R_n` the
//!   recovered fraction of `RF_max N_w` before period `n` and
//!   `r50_w = r50_max (1 - exp(-s_w / s_bt))`, `s_w` the distance to the
//!   nearest injector (`r50_max` without injectors).
//! * oil `= liquid (1 - f_n)`, water `= liquid f_n`, gas `= GOR · oil`.
//!
//! Injectors produce nothing. A well with no cell intersections has zero PI
//! and therefore zero production.

use serde::{Deserialize, Serialize};

use super::geometry::{Point, WellGeometry};
use super::grid::ReservoirGrid;

/// Cubic meters to barrels.
pub const BBL_PER_M3: f64 = 6.2898;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKind {
    Injector,
    Producer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyParams {
    /// Drainage decay length ℓ (m).
    pub drainage_length: f64,
    /// Injector support decay length ℓ_s (m).
    pub support_length: f64,
    pub pi_half: f64,
    pub min_connectivity: f64,
    pub pi_scale: f64,
    pub max_recovery: f64,
    pub max_breakthrough_recovery: f64,
    pub water_cut_width: f64,
    /// Injector spacing scale of water breakthrough (m).
    pub breakthrough_spacing: f64,
    pub gas_oil_ratio: f64,
}

impl Default for ProxyParams {
    fn default() -> Self {
        Self {
            drainage_length: 250.0,
            support_length: 800.0,
            pi_half: 5e4,
            min_connectivity: 0.3,
            pi_scale: 3e5,
            max_recovery: 0.35,
            max_breakthrough_recovery: 0.6,
            water_cut_width: 0.08,
            breakthrough_spacing: 400.0,
            gas_oil_ratio: 0.8,
        }
    }
}

/// Field production per period `n = 0..=Y`, barrels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionProfile {
    pub oil: Vec<f64>,
    pub water: Vec<f64>,
    pub gas: Vec<f64>,
}

impl ProductionProfile {
    pub fn zeros(periods: usize) -> Self {
        Self {
            oil: vec![0.0; periods],
            water: vec![0.0; periods],
            gas: vec![0.0; periods],
        }
    }

    pub fn periods(&self) -> usize {
        self.oil.len()
    }

    pub fn total_oil(&self) -> f64 {
        self.oil.iter().sum()
    }
}

/// `(cell index, length inside the cell)` for every cell a segment crosses.
pub fn segment_cells(a: Point, b: Point, grid: &ReservoirGrid) -> Vec<(usize, f64)> {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if len == 0.0 {
        return Vec::new();
    }
    let mut ts = vec![0.0, 1.0];
    for axis in 0..3 {
        if d[axis] == 0.0 {
            continue;
        }
        let h = grid.cell_size[axis];
        let (lo, hi) = if d[axis] > 0.0 {
            (a[axis], b[axis])
        } else {
            (b[axis], a[axis])
        };
        let first = (lo / h).ceil() as i64;
        let last = (hi / h).floor() as i64;
        for m in first.max(0)..=last.min(grid.dims[axis] as i64) {
            let t = (m as f64 * h - a[axis]) / d[axis];
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in ts.windows(2) {
        let piece = (w[1] - w[0]) * len;
        if piece <= 0.0 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let mid = [a[0] + tm * d[0], a[1] + tm * d[1], a[2] + tm * d[2]];
        if let Some((i, j, k)) = grid.locate(mid) {
            out.push((grid.index(i, j, k), piece));
        }
    }
    out
}

pub fn productivity_index(well: &WellGeometry, grid: &ReservoirGrid) -> f64 {
    well.segments()
        .iter()
        .flat_map(|&(a, b)| segment_cells(a, b, grid))
        .map(|(c, l)| grid.permeability[c] * l)
        .sum()
}

/// Length of the well inside the grid box.
pub fn length_in_grid(well: &WellGeometry, grid: &ReservoirGrid) -> f64 {
    well.segments()
        .iter()
        .flat_map(|&(a, b)| segment_cells(a, b, grid))
        .map(|(_, l)| l)
        .sum()
}

/// Drainable oil in barrels for each producer, with shared cells split by
/// drainage weight.
pub fn drainable_oil(
    producers: &[&WellGeometry],
    grid: &ReservoirGrid,
    params: &ProxyParams,
) -> Vec<f64> {
    let mut oil = vec![0.0; producers.len()];
    if producers.is_empty() {
        return oil;
    }
    let volume = grid.cell_volume();
    let mut weights = vec![0.0; producers.len()];
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let c = grid.cell_center(i, j, k);
                for (w, p) in weights.iter_mut().zip(producers) {
                    *w = (-p.distance_to(c) / params.drainage_length).exp();
                }
                let total: f64 = weights.iter().sum();
                let scale = 1.0 / total.max(1.0);
                let in_place = BBL_PER_M3 * volume * grid.oil_fraction(grid.index(i, j, k));
                for (o, w) in oil.iter_mut().zip(&weights) {
                    *o += in_place * w * scale;
                }
            }
        }
    }
    oil
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Production profile over `periods` periods.
pub fn simulate(
    wells: &[(WellKind, WellGeometry)],
    grid: &ReservoirGrid,
    params: &ProxyParams,
    periods: usize,
) -> ProductionProfile {
    let mut profile = ProductionProfile::zeros(periods);
    let injectors: Vec<(&WellGeometry, f64)> = wells
        .iter()
        .filter(|(k, _)| *k == WellKind::Injector)
        .map(|(_, w)| (w, productivity_index(w, grid)))
        .collect();
    let producers: Vec<&WellGeometry> = wells
        .iter()
        .filter(|(k, _)| *k == WellKind::Producer)
        .map(|(_, w)| w)
        .collect();
    let reserves = drainable_oil(&producers, grid, params);

    for (well, n_oil) in producers.iter().zip(reserves) {
        let pi = productivity_index(well, grid);
        let reserve = params.max_recovery * n_oil;
        if pi <= 0.0 || reserve <= 0.0 {
            continue;
        }
        let mut support = 0.0;
        let mut nearest = f64::INFINITY;
        for (inj, pi_inj) in &injectors {
            let s = well.distance_between(inj);
            nearest = nearest.min(s);
            support += pi_inj / (pi_inj + params.pi_half) * (-s / params.support_length).exp();
        }
        let conn = params.min_connectivity + (1.0 - params.min_connectivity) * support.min(1.0);
        let a = 1.0 - (-pi * conn / params.pi_scale).exp();
        let r50 = if nearest.is_finite() {
            params.max_breakthrough_recovery
                * (1.0 - (-nearest / params.breakthrough_spacing).exp())
        } else {
            params.max_breakthrough_recovery
        };
        let mut cumulative = 0.0;
        let mut remaining = 1.0;
        for n in 0..periods {
            let liquid = reserve * a * remaining;
            remaining *= 1.0 - a;
            let cut = logistic((cumulative / reserve - r50) / params.water_cut_width);
            let oil = liquid * (1.0 - cut);
            profile.oil[n] += oil;
            profile.water[n] += liquid * cut;
            profile.gas[n] += params.gas_oil_ratio * oil;
            cumulative += oil;
        }
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::well::geometry::{decode_well, WellLayout};
    use std::f64::consts::PI;

    const UNILATERAL: WellLayout = WellLayout {
        n_deviations: 1,
        n_branches: 0,
    };

    fn horizontal(x: f64, y: f64, z: f64, r: f64, phi: f64) -> WellGeometry {
        decode_well(&[x, y, z, r, PI / 2.0, phi], UNILATERAL).unwrap()
    }

    #[test]
    fn intersections_sum_to_inside_length() {
        let g = ReservoirGrid::bundled();
        let w = decode_well(&[33.0, 71.0, 3.0, 700.0, 1.52, 0.7], UNILATERAL).unwrap();
        let cells = segment_cells(w.heel(), w.toe(), &g);
        let total: f64 = cells.iter().map(|c| c.1).sum();
        assert!((total - 700.0).abs() < 1e-9);
        // brute force: fine sampling along the segment
        let steps = 200_000;
        let mut pi = 0.0;
        for s in 0..steps {
            let t = (s as f64 + 0.5) / steps as f64;
            let p = [
                w.heel()[0] + t * (w.toe()[0] - w.heel()[0]),
                w.heel()[1] + t * (w.toe()[1] - w.heel()[1]),
                w.heel()[2] + t * (w.toe()[2] - w.heel()[2]),
            ];
            let (i, j, k) = g.locate(p).unwrap();
            pi += g.permeability[g.index(i, j, k)] * 700.0 / steps as f64;
        }
        assert!((productivity_index(&w, &g) - pi).abs() < 1e-3 * pi);
    }

    #[test]
    fn segment_leaving_the_box_is_clipped() {
        let g = ReservoirGrid::bundled();
        let w = horizontal(1800.0, 500.0, 25.0, 300.0, 0.0);
        assert!((length_in_grid(&w, &g) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_pi_producer_yields_nothing() {
        let g = ReservoirGrid::bundled();
        let outside = horizontal(-500.0, -500.0, 25.0, 200.0, PI);
        let inj = horizontal(500.0, 500.0, 25.0, 500.0, 0.0);
        let p = simulate(
            &[(WellKind::Injector, inj), (WellKind::Producer, outside)],
            &g,
            &ProxyParams::default(),
            11,
        );
        assert!(p.oil.iter().all(|&q| q == 0.0));
        assert_eq!(p.periods(), 11);
    }

    #[test]
    fn doubling_saturation_doubles_first_period_oil() {
        let g = ReservoirGrid::bundled();
        let mut g2 = g.clone();
        g2.oil_saturation.iter_mut().for_each(|s| *s *= 2.0);
        let wells = [
            (
                WellKind::Injector,
                horizontal(300.0, 300.0, 25.0, 600.0, 0.3),
            ),
            (
                WellKind::Producer,
                horizontal(900.0, 1200.0, 15.0, 800.0, 1.2),
            ),
        ];
        let a = simulate(&wells, &g, &ProxyParams::default(), 11);
        let b = simulate(&wells, &g2, &ProxyParams::default(), 11);
        assert!((b.oil[0] - 2.0 * a.oil[0]).abs() <= 1e-12 * b.oil[0]);
    }

    #[test]
    fn profile_is_non_negative_and_bounded_by_reserves() {
        let g = ReservoirGrid::bundled();
        let prod = horizontal(900.0, 1200.0, 15.0, 800.0, 1.2);
        let reserve = drainable_oil(&[&prod], &g, &ProxyParams::default())[0];
        let p = simulate(
            &[(WellKind::Producer, prod)],
            &g,
            &ProxyParams::default(),
            11,
        );
        for v in p.oil.iter().chain(&p.water).chain(&p.gas) {
            assert!(*v >= 0.0);
        }
        assert!(p.total_oil() <= 0.35 * reserve);
        assert!(p.total_oil() > 0.0);
    }

    #[test]
    fn shared_drainage_never_exceeds_oil_in_place() {
        let g = ReservoirGrid::bundled();
        let a = horizontal(500.0, 500.0, 25.0, 600.0, 0.0);
        let b = horizontal(520.0, 520.0, 25.0, 600.0, 0.0);
        let total_in_place: f64 = (0..g.n_cells())
            .map(|c| BBL_PER_M3 * g.cell_volume() * g.oil_fraction(c))
            .sum();
        let n = drainable_oil(&[&a, &b], &g, &ProxyParams::default());
        assert!(n[0] + n[1] <= total_in_place);
        let alone = drainable_oil(&[&a], &g, &ProxyParams::default())[0];
        assert!(n[0] < alone);
    }

    #[test]
    fn simulation_is_deterministic() {
        let g = ReservoirGrid::bundled();
        let wells = [
            (
                WellKind::Injector,
                horizontal(300.0, 300.0, 25.0, 600.0, 0.3),
            ),
            (
                WellKind::Producer,
                horizontal(900.0, 1200.0, 15.0, 800.0, 1.2),
            ),
        ];
        let a = simulate(&wells, &g, &ProxyParams::default(), 11);
        let b = simulate(&wells, &g, &ProxyParams::default(), 11);
        assert_eq!(a, b);
    }

    /// Sum of `phi * S_o` over a column footprint, all layers.
    fn column_oil(g: &ReservoirGrid, i: usize, j: usize) -> f64 {
        (0..g.dims[2])
            .map(|k| g.oil_fraction(g.index(i, j, k)))
            .sum()
    }

    #[test]
    fn rich_region_out_produces_poor_region() {
        let g = ReservoirGrid::bundled();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        let mut worst = (f64::INFINITY, 0, 0);
        for j in 2..g.dims[1] - 2 {
            for i in 2..g.dims[0] - 2 {
                let v = column_oil(&g, i, j);
                if v > best.0 {
                    best = (v, i, j);
                }
                if v < worst.0 {
                    worst = (v, i, j);
                }
            }
        }
        let through = |i: usize, j: usize| {
            let c = g.cell_center(i, j, 2);
            horizontal(c[0] - 150.0, c[1], c[2], 300.0, 0.0)
        };
        let rich = simulate(
            &[(WellKind::Producer, through(best.1, best.2))],
            &g,
            &ProxyParams::default(),
            11,
        );
        let poor = simulate(
            &[(WellKind::Producer, through(worst.1, worst.2))],
            &g,
            &ProxyParams::default(),
            11,
        );
        assert!(rich.total_oil() > poor.total_oil());
    }
}
