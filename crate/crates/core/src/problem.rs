//! The interface every optimized problem implements.

use crate::constraints::SumConstraint;

/// A minimization problem over a box-bounded real vector.
///
/// `evaluate` returns the raw objective (before adaptive penalties). Sum
/// constraints returned by [`Problem::constraints`] are handled by the
/// optimizer's constraint machinery; anything else is expressed through
/// [`Problem::is_feasible`] and [`Problem::far_infeasible`].
pub trait Problem: Sync {
    fn dimension(&self) -> usize;

    /// Per-coordinate search bounds, used for initialization and by the GA.
    fn bounds(&self) -> Vec<(f64, f64)>;

    fn evaluate(&self, x: &[f64]) -> f64;

    fn constraints(&self) -> Vec<SumConstraint> {
        Vec::new()
    }

    /// Problem-specific feasibility beyond the sum constraints.
    fn is_feasible(&self, _x: &[f64]) -> bool {
        true
    }

    /// Problem-specific rejection test with rejection fraction `p`.
    fn far_infeasible(&self, _x: &[f64], _p: f64) -> bool {
        false
    }

    /// A known feasible point, used to seed repair-based constraint handling.
    fn reference_point(&self) -> Option<Vec<f64>> {
        None
    }
}
