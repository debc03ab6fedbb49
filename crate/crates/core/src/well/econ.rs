//! Drilling cost and net present value.

use serde::{Deserialize, Serialize};

use super::geometry::WellGeometry;
use super::sim::ProductionProfile;
use crate::error::{Error, Result};

pub const FT_PER_M: f64 = 3.28084;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomicParams {
    /// Oil price per barrel.
    pub oil_price: f64,
    /// Water price per barrel (negative: a disposal cost).
    pub water_price: f64,
    pub gas_price: f64,
    /// Discount rate per period.
    pub apr: f64,
    /// Last period index `Y`; profiles cover periods `0..=Y`.
    pub periods: usize,
    /// Cost constant `A`.
    pub cost_constant: f64,
    /// Wellbore diameter in meters.
    pub wellbore_diameter: f64,
    pub junction_cost: f64,
    /// Maximum total length per well in meters.
    pub max_well_length: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            oil_price: 60.0,
            water_price: -4.0,
            gas_price: 0.0,
            apr: 0.0,
            periods: 10,
            cost_constant: 1000.0,
            wellbore_diameter: 0.1,
            junction_cost: 1e5,
            max_well_length: 1000.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 1 {
            return Err(Error::Config(
                "economics: periods must be at least 1".into(),
            ));
        }
        if !(self.wellbore_diameter > 0.0) {
            return Err(Error::Config(
                "economics: wellbore_diameter must be positive".into(),
            ));
        }
        if !(self.max_well_length > 0.0) {
            return Err(Error::Config(
                "economics: max_well_length must be positive".into(),
            ));
        }
        if !(self.apr > -1.0) {
            return Err(Error::Config("economics: apr must exceed -1".into()));
        }
        Ok(())
    }
}

/// `A d_w ln(l) l` with `l` and `d_w` in feet; `ln` floored at 0.
pub fn bore_cost_ft(length_ft: f64, econ: &EconomicParams) -> f64 {
    if length_ft <= 0.0 {
        return 0.0;
    }
    econ.cost_constant * econ.wellbore_diameter * FT_PER_M * length_ft.ln().max(0.0) * length_ft
}

/// Mainbore and branch costs of every well plus one junction cost per branch.
pub fn drilling_cost(wells: &[WellGeometry], econ: &EconomicParams) -> f64 {
    wells
        .iter()
        .map(|w| {
            bore_cost_ft(w.mainbore_length() * FT_PER_M, econ)
                + w.branches
                    .iter()
                    .map(|b| bore_cost_ft(b.length() * FT_PER_M, econ) + econ.junction_cost)
                    .sum::<f64>()
        })
        .sum()
}

/// `Σ_n (Q_o C_o + Q_g C_g + Q_w C_w) / (1 + APR)^n - C_d`.
pub fn npv(profile: &ProductionProfile, econ: &EconomicParams, cost: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for n in 0..profile.periods() {
        total += discount
            * (profile.oil[n] * econ.oil_price
                + profile.gas[n] * econ.gas_price
                + profile.water[n] * econ.water_price);
        discount /= 1.0 + econ.apr;
    }
    total - cost
}
