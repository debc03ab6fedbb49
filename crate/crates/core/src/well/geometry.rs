//! Well genomes and their Cartesian geometry.
//!
//! Genome layout per well: heel `(x0, y0, z0)`, then one `(r, θ, φ)` triple
//! per mainbore deviation, then one `(l, r, θ, φ)` quadruple per branch, where
//! `l` is the arc length along the mainbore at which the branch starts.
//!
//! Spherical offsets are expressed in the global frame: θ is the polar angle
//! from +z (depth, positive downward) and φ the azimuth from +x, so
//! `Δ = r (sinθ cosφ, sinθ sinφ, cosθ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Shape of one well in the genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellLayout {
    pub n_deviations: usize,
    pub n_branches: usize,
}

impl WellLayout {
    pub fn dimension(&self) -> usize {
        well_dimension(self.n_deviations, self.n_branches)
    }
}

/// `3 (1 + n_deviations) + 4 n_branches`.
pub fn well_dimension(n_deviations: usize, n_branches: usize) -> usize {
    3 * (1 + n_deviations) + 4 * n_branches
}

/// Genome length for `n_wells` wells of identical layout.
pub fn genome_dimension(n_deviations: usize, n_branches: usize, n_wells: usize) -> usize {
    n_wells * well_dimension(n_deviations, n_branches)
}

/// `r (sinθ cosφ, sinθ sinφ, cosθ)`.
pub fn spherical_offset(r: f64, theta: f64, phi: f64) -> Point {
    [
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    ]
}

/// Canonical `(r, θ, φ)` of a vector: θ in `[0, π]`, φ in `(-π, π]`. The zero
/// vector maps to `(0, 0, 0)`.
pub fn to_spherical(v: Point) -> (f64, f64, f64) {
    let r = norm(v);
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    (r, theta, phi)
}

pub fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    if len2 == 0.0 {
        return distance(p, a);
    }
    let ap = sub(p, a);
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

/// Minimum distance between segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_segment_distance(p0: Point, p1: Point, q0: Point, q1: Point) -> f64 {
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let dot = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (a, e, f) = (dot(d1, d1), dot(d2, d2), dot(d2, r));
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return norm(r);
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    let cp = [p0[0] + s * d1[0], p0[1] + s * d1[1], p0[2] + s * d1[2]];
    let cq = [q0[0] + t * d2[0], q0[1] + t * d2[1], q0[2] + t * d2[2]];
    distance(cp, cq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Arc length along the mainbore where the branch starts.
    pub offset: f64,
    pub start: Point,
    pub end: Point,
}

impl Branch {
    pub fn length(&self) -> f64 {
        distance(self.start, self.end)
    }
}

/// Decoded well: mainbore polyline from heel to toe plus straight branches.
#[derive(Debug, Clone, PartialEq)]
pub struct WellGeometry {
    pub mainbore: Vec<Point>,
    pub branches: Vec<Branch>,
}

impl WellGeometry {
    pub fn heel(&self) -> Point {
        self.mainbore[0]
    }

    pub fn toe(&self) -> Point {
        *self.mainbore.last().expect("mainbore has a heel")
    }

    pub fn mainbore_length(&self) -> f64 {
        self.mainbore.windows(2).map(|w| distance(w[0], w[1])).sum()
    }

    /// Mainbore plus all branches.
    pub fn total_length(&self) -> f64 {
        self.mainbore_length() + self.branches.iter().map(Branch::length).sum::<f64>()
    }

    /// Every straight piece of the well.
    pub fn segments(&self) -> Vec<(Point, Point)> {
        let mut s: Vec<(Point, Point)> = self.mainbore.windows(2).map(|w| (w[0], w[1])).collect();
        s.extend(self.branches.iter().map(|b| (b.start, b.end)));
        s
    }

    /// Points the in-reservoir test applies to: heel, deviation points and
    /// branch ends.
    pub fn defining_points(&self) -> Vec<Point> {
        let mut p = self.mainbore.clone();
        p.extend(self.branches.iter().map(|b| b.end));
        p
    }

    /// Point at arc length `l` along the mainbore, `l` clamped to
    /// `[0, mainbore_length]`.
    pub fn point_at(&self, l: f64) -> Point {
        let mut remaining = l.max(0.0);
        for w in self.mainbore.windows(2) {
            let len = distance(w[0], w[1]);
            if remaining <= len {
                let t = if len > 0.0 { remaining / len } else { 0.0 };
                return [
                    w[0][0] + t * (w[1][0] - w[0][0]),
                    w[0][1] + t * (w[1][1] - w[0][1]),
                    w[0][2] + t * (w[1][2] - w[0][2]),
                ];
            }
            remaining -= len;
        }
        self.toe()
    }

    /// Distance from `p` to the nearest point of the well.
    pub fn distance_to(&self, p: Point) -> f64 {
        let segs = self.segments();
        if segs.is_empty() {
            return distance(p, self.heel());
        }
        segs.iter()
            .map(|&(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum distance between two wells.
    pub fn distance_between(&self, other: &WellGeometry) -> f64 {
        let mut a = self.segments();
        let mut b = other.segments();
        if a.is_empty() {
            a.push((self.heel(), self.heel()));
        }
        if b.is_empty() {
            b.push((other.heel(), other.heel()));
        }
        let mut best = f64::INFINITY;
        for &(p0, p1) in &a {
            for &(q0, q1) in &b {
                best = best.min(segment_segment_distance(p0, p1, q0, q1));
            }
        }
        best
    }
}

/// Decode one well's genome slice.
pub fn decode_well(genes: &[f64], layout: WellLayout) -> Result<WellGeometry> {
    if genes.len() != layout.dimension() {
        return Err(Error::DimensionMismatch {
            expected: layout.dimension(),
            got: genes.len(),
        });
    }
    let mut mainbore = Vec::with_capacity(layout.n_deviations + 1);
    let mut p = [genes[0], genes[1], genes[2]];
    mainbore.push(p);
    for d in 0..layout.n_deviations {
        let g = &genes[3 + 3 * d..6 + 3 * d];
        p = add(p, spherical_offset(g[0], g[1], g[2]));
        mainbore.push(p);
    }
    let mut geometry = WellGeometry {
        mainbore,
        branches: Vec::with_capacity(layout.n_branches),
    };
    let base = 3 * (1 + layout.n_deviations);
    let total = geometry.mainbore_length();
    for b in 0..layout.n_branches {
        let g = &genes[base + 4 * b..base + 4 * b + 4];
        let offset = g[0].clamp(0.0, total);
        let start = geometry.point_at(offset);
        let end = add(start, spherical_offset(g[1], g[2], g[3]));
        geometry.branches.push(Branch { offset, start, end });
    }
    Ok(geometry)
}

/// Inverse of [`decode_well`] with canonical angles.
pub fn encode_well(geometry: &WellGeometry) -> Vec<f64> {
    let mut genes = geometry.heel().to_vec();
    for w in geometry.mainbore.windows(2) {
        let (r, t, p) = to_spherical(sub(w[1], w[0]));
        genes.extend([r, t, p]);
    }
    for b in &geometry.branches {
        let (r, t, p) = to_spherical(sub(b.end, b.start));
        genes.extend([b.offset, r, t, p]);
    }
    genes
}

/// Decode a full genome into one geometry per well.
pub fn decode_wells(genome: &[f64], layouts: &[WellLayout]) -> Result<Vec<WellGeometry>> {
    let expected: usize = layouts.iter().map(WellLayout::dimension).sum();
    if genome.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: genome.len(),
        });
    }
    let mut at = 0;
    layouts
        .iter()
        .map(|l| {
            let w = decode_well(&genome[at..at + l.dimension()], *l);
            at += l.dimension();
            w
        })
        .collect()
}

pub fn encode_wells(wells: &[WellGeometry]) -> Vec<f64> {
    wells.iter().flat_map(encode_well).collect()
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut a = phi.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const UNILATERAL: WellLayout = WellLayout {
        n_deviations: 1,
        n_branches: 0,
    };

    #[test]
    fn dimension_formula() {
        assert_eq!(genome_dimension(1, 0, 1), 6);
        assert_eq!(genome_dimension(1, 0, 2), 12);
        assert_eq!(well_dimension(0, 0), 3);
        assert_eq!(well_dimension(2, 1), 13);
    }

    #[test]
    fn axis_aligned_deviation() {
        let g = decode_well(&[0.0, 0.0, 0.0, 10.0, PI / 2.0, 0.0], UNILATERAL).unwrap();
        let toe = g.toe();
        assert_abs_diff_eq!(toe[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(toe[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(toe[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pole_is_vertical_downward() {
        let g = decode_well(&[1.0, 2.0, 3.0, 7.0, 0.0, 1.3], UNILATERAL).unwrap();
        assert_eq!(g.toe(), [1.0, 2.0, 10.0]);
    }

    #[test]
    fn wrong_slice_length_is_rejected() {
        assert!(matches!(
            decode_well(&[0.0; 5], UNILATERAL),
            Err(Error::DimensionMismatch {
                expected: 6,
                got: 5
            })
        ));
    }

    fn random_genes(rng: &mut impl Rng, layout: WellLayout) -> Vec<f64> {
        let mut g: Vec<f64> = (0..3).map(|_| rng.random_range(-100.0..100.0)).collect();
        for _ in 0..layout.n_deviations {
            g.extend([
                rng.random_range(1.0..300.0),
                rng.random_range(0.05..PI - 0.05),
                rng.random_range(-3.1..3.1),
            ]);
        }
        let total: f64 = (0..layout.n_deviations).map(|d| g[3 + 3 * d]).sum();
        for _ in 0..layout.n_branches {
            g.extend([
                rng.random_range(0.0..total),
                rng.random_range(1.0..300.0),
                rng.random_range(0.05..PI - 0.05),
                rng.random_range(-3.1..3.1),
            ]);
        }
        g
    }

    #[test]
    fn mainbore_length_is_the_sum_of_radii() {
        let mut rng = seeded(4);
        let layout = WellLayout {
            n_deviations: 4,
            n_branches: 0,
        };
        for _ in 0..100 {
            let g = random_genes(&mut rng, layout);
            let w = decode_well(&g, layout).unwrap();
            let sum_r: f64 = (0..4).map(|d| g[3 + 3 * d]).sum();
            let seg_norms: f64 = w.mainbore.windows(2).map(|p| norm(sub(p[1], p[0]))).sum();
            assert!((seg_norms - sum_r).abs() <= 1e-9 * sum_r);
        }
    }

    #[test]
    fn encode_inverts_decode() {
        let mut rng = seeded(5);
        for layout in [
            UNILATERAL,
            WellLayout {
                n_deviations: 3,
                n_branches: 2,
            },
            WellLayout {
                n_deviations: 0,
                n_branches: 0,
            },
        ] {
            for _ in 0..200 {
                let g = random_genes(&mut rng, layout);
                let back = encode_well(&decode_well(&g, layout).unwrap());
                assert_eq!(back.len(), g.len());
                for (a, b) in g.iter().zip(&back) {
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn branch_start_interpolates_inside_a_segment() {
        let layout = WellLayout {
            n_deviations: 2,
            n_branches: 1,
        };
        let g = [
            0.0,
            0.0,
            0.0,
            10.0,
            PI / 2.0,
            0.0,
            10.0,
            PI / 2.0,
            PI / 2.0,
            15.0,
            5.0,
            0.0,
            0.0,
        ];
        let w = decode_well(&g, layout).unwrap();
        let s = w.branches[0].start;
        assert_abs_diff_eq!(s[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.branches[0].end[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_offset_is_clamped_to_the_mainbore() {
        let layout = WellLayout {
            n_deviations: 1,
            n_branches: 1,
        };
        let w = decode_well(
            &[0.0, 0.0, 0.0, 10.0, PI / 2.0, 0.0, 50.0, 1.0, 0.0, 0.0],
            layout,
        )
        .unwrap();
        assert_eq!(w.branches[0].offset, 10.0);
        assert_abs_diff_eq!(w.branches[0].start[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn segment_distance_matches_sampling() {
        let mut rng = seeded(8);
        for _ in 0..200 {
            let mut p = || {
                [
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ]
            };
            let (a, b, c, d) = (p(), p(), p(), p());
            let exact = segment_segment_distance(a, b, c, d);
            let mut sampled = f64::INFINITY;
            for i in 0..=200 {
                let s = i as f64 / 200.0;
                let x = [
                    a[0] + s * (b[0] - a[0]),
                    a[1] + s * (b[1] - a[1]),
                    a[2] + s * (b[2] - a[2]),
                ];
                sampled = sampled.min(point_segment_distance(x, c, d));
            }
            assert!(exact <= sampled + 1e-12);
            assert!(sampled - exact < 0.1);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.5), 0.5, epsilon = 1e-12);
    }
}
