//! Preimages `f^{-1}(z)` with multiplicity.
//!
//! Every supported family has fibers that reduce to one-variable root
//! finding (or, for monomial maps, to an exact lattice enumeration), so the
//! full fiber of `d_t` points is always computable.

pub mod roots;

use num_complex::Complex64;
use rand::Rng;

use crate::dynamics::{monomial_data, DynMap, MapData, INDETERMINACY_TOL};
use crate::error::{EqdError, Result};
use crate::projective::ProjPoint;

pub use roots::{roots, Root, Roots};

/// Forward residual (chordal) a fiber point must meet to count as accurate.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Fiber points closer than this (chordal) are merged.
pub const MERGE_TOL: f64 = 1e-9;
/// Leading coefficients below this fraction of the largest one are treated as zero.
const LEADING_ZERO_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberPoint {
    pub point: ProjPoint,
    pub multiplicity: usize,
    /// Chordal distance from `f(point)` to the base point.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub base: ProjPoint,
    pub points: Vec<FiberPoint>,
    /// Low-precision fiber: an ill-conditioned root cluster or a residual
    /// above [`RESIDUAL_TOL`].
    pub flagged: bool,
}

impl Fiber {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.points.iter().map(|p| p.residual).fold(0.0, f64::max)
    }

    /// All preimages coincide (the base is totally ramified).
    pub fn is_collapsed(&self) -> bool {
        self.points.len() == 1
    }

    /// Draw a point with probability `multiplicity / d_t`.
    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> ProjPoint {
        let total = self.total_multiplicity();
        let mut k = rng.random_range(0..total);
        for p in &self.points {
            if k < p.multiplicity {
                return p.point;
            }
            k -= p.multiplicity;
        }
        self.points[self.points.len() - 1].point
    }
}

fn sub_constant(ascending: &[Complex64], value: Complex64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = ascending.iter().rev().copied().collect();
    let last = out.len() - 1;
    out[last] -= value;
    out
}

/// Roots with multiplicity of a polynomial given highest power first.
fn solve(coeffs: &[Complex64]) -> Result<Roots> {
    roots::roots(coeffs)
}

/// Points of P¹ solving `z1·N(w) - z0·D(w) = 0`.
fn rational_fiber(
    num: &[Complex64],
    den: &[Complex64],
    base: &ProjPoint,
) -> Result<(Vec<(ProjPoint, usize)>, bool)> {
    let z = base.coords();
    let form: Vec<Complex64> = num
        .iter()
        .zip(den)
        .map(|(n, d)| z[1] * n - z[0] * d)
        .collect();
    let scale = form.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let at_infinity = form
        .iter()
        .take_while(|c| c.norm() <= LEADING_ZERO_TOL * scale)
        .count();
    let mut out = Vec::new();
    if at_infinity > 0 {
        out.push((ProjPoint::infinity(), at_infinity));
    }
    let mut ill = false;
    if at_infinity < form.len() - 1 {
        let rs = solve(&form[at_infinity..])?;
        ill = rs.ill_conditioned;
        for r in rs.roots {
            out.push((ProjPoint::normalize(&[r.value, Complex64::new(1.0, 0.0)])?, r.multiplicity));
        }
    }
    Ok((out, ill))
}

fn affine_base(base: &ProjPoint, d_t: usize) -> Result<[Complex64; 2]> {
    base.affine()
        .map(|a| [a[0], a[1]])
        .ok_or(EqdError::DegenerateFiber {
            expected: d_t,
            got: 0,
        })
}

fn monomial_fiber(map: &DynMap, base: &ProjPoint) -> Result<Vec<(ProjPoint, usize)>> {
    let (a, det, cosets) = monomial_data(map).expect("monomial map");
    if base.coords().iter().any(|c| c.norm() < INDETERMINACY_TOL) {
        return Err(EqdError::IndeterminacyPoint { step: 0 });
    }
    let z = base.coords();
    let logs = [(z[0] / z[2]).ln(), (z[1] / z[2]).ln()];
    let detf = det as f64;
    // A^{-1} = adj(A) / det
    let inv = [
        [a[1][1] as f64 / detf, -a[0][1] as f64 / detf],
        [-a[1][0] as f64 / detf, a[0][0] as f64 / detf],
    ];
    let base_log = [
        logs[0] * inv[0][0] + logs[1] * inv[0][1],
        logs[0] * inv[1][0] + logs[1] * inv[1][1],
    ];
    let tau = std::f64::consts::TAU;
    cosets
        .iter()
        .map(|key| {
            let shifted = [
                base_log[0] + Complex64::new(0.0, tau * key[0] as f64 / detf),
                base_log[1] + Complex64::new(0.0, tau * key[1] as f64 / detf),
            ];
            Ok((crate::dynamics::from_log_affine(shifted)?, 1))
        })
        .collect()
}

fn merge(points: Vec<(ProjPoint, usize)>) -> Vec<(ProjPoint, usize)> {
    let mut out: Vec<(ProjPoint, usize)> = Vec::with_capacity(points.len());
    for (p, m) in points {
        match out
            .iter_mut()
            .find(|(q, _)| q.chordal_unchecked(&p) < MERGE_TOL)
        {
            Some(entry) => entry.1 += m,
            None => out.push((p, m)),
        }
    }
    out
}

/// All `d_t` preimages of `z` with multiplicity and forward residuals.
pub fn fiber(map: &DynMap, z: &ProjPoint) -> Result<Fiber> {
    if z.dim() != map.dim() {
        return Err(EqdError::DimMismatch {
            expected: map.dim(),
            got: z.dim(),
        });
    }
    let d_t = map.topological_degree();
    let (raw, ill) = match &map.data {
        MapData::Rational1D { num, den } => rational_fiber(num, den, z)?,
        MapData::Product2D { p, q } => {
            let [zz, ww] = affine_base(z, d_t)?;
            let xs = solve(&sub_constant(p, zz))?;
            let ys = solve(&sub_constant(q, ww))?;
            let mut out = Vec::with_capacity(d_t);
            for x in &xs.roots {
                for y in &ys.roots {
                    out.push((
                        ProjPoint::from_affine(&[x.value, y.value])?,
                        x.multiplicity * y.multiplicity,
                    ));
                }
            }
            (out, xs.ill_conditioned || ys.ill_conditioned)
        }
        MapData::Skew2D { p, q, .. } => {
            let [zz, ww] = affine_base(z, d_t)?;
            let d = map.algebraic_degree();
            let xs = solve(&sub_constant(p, zz))?;
            let mut ill = xs.ill_conditioned;
            let mut out = Vec::with_capacity(d_t);
            for x in &xs.roots {
                // q(x, w) - ww as a polynomial in w, ascending
                let mut poly = vec![Complex64::new(0.0, 0.0); d + 1];
                for t in q {
                    poly[t.b] += t.coeff * x.value.powi(t.a as i32);
                }
                let ys = solve(&sub_constant(&poly, ww))?;
                ill |= ys.ill_conditioned;
                for y in &ys.roots {
                    out.push((
                        ProjPoint::from_affine(&[x.value, y.value])?,
                        x.multiplicity * y.multiplicity,
                    ));
                }
            }
            (out, ill)
        }
        MapData::Monomial2D { .. } => (monomial_fiber(map, z)?, false),
    };
    let merged = merge(raw);
    let got: usize = merged.iter().map(|(_, m)| m).sum();
    if got != d_t {
        return Err(EqdError::DegenerateFiber { expected: d_t, got });
    }
    let mut flagged = ill;
    let mut points = Vec::with_capacity(merged.len());
    for (point, multiplicity) in merged {
        let residual = match map.evaluate(&point) {
            Ok(image) => image.chordal_unchecked(z),
            Err(_) => f64::INFINITY,
        };
        flagged |= !(residual < RESIDUAL_TOL);
        points.push(FiberPoint {
            point,
            multiplicity,
            residual,
        });
    }
    Ok(Fiber {
        base: *z,
        points,
        flagged,
    })
}

/// One preimage of `z`, drawn with probability `multiplicity / d_t`.
pub fn random_preimage<R: Rng + ?Sized>(map: &DynMap, z: &ProjPoint, rng: &mut R) -> Result<ProjPoint> {
    Ok(fiber(map, z)?.choose(rng))
}
