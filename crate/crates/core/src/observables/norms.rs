//! Norm estimators: sampled Lipschitz constants and, on P¹, the `‖·‖_*`
//! quasi-norm computed on a triangulated sphere.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::Observable;
use crate::error::{EqdError, Result};
use crate::projective::{sample_fubini_study, ProjPoint};
use crate::rng;

/// Grid vertices closer than this (chordally) to a pole are excluded.
pub const POLE_TOL: f64 = 1e-6;

/// Pairs closer than this are ignored by the Lipschitz search.
const MIN_PAIR_DIST: f64 = 1e-9;
const CLIMB_STARTS: usize = 10;
const CLIMB_STEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// True when `value` is a sampled lower bound of the true constant.
    pub lower_bound: bool,
}

fn perturb<R: Rng + ?Sized>(p: &ProjPoint, scale: f64, rng: &mut R) -> ProjPoint {
    let z = p.coords();
    let moved: Vec<Complex64> = z
        .iter()
        .map(|c| {
            let g = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            c + g * scale
        })
        .collect();
    ProjPoint::normalize(&moved).unwrap_or(*p)
}

fn ratio(phi: &Observable, x: &ProjPoint, y: &ProjPoint) -> f64 {
    let d = x.chordal_unchecked(y);
    if d < MIN_PAIR_DIST {
        return 0.0;
    }
    let r = (phi.eval(x) - phi.eval(y)).abs() / d;
    if r.is_nan() {
        0.0
    } else {
        r
    }
}

/// Sampled lower bound of `sup |φ(x)-φ(y)| / dist(x,y)` on P^dim.
///
/// Half of the pairs are independent Fubini–Study pairs, half are local
/// pairs at random scales; the best pairs are then refined by hill climbing.
/// Observables with a pole get `+∞` (not a lower bound).
pub fn lipschitz_estimate(phi: &Observable, dim: usize, pairs: usize, seed: u64) -> LipschitzEstimate {
    if phi.expr.unbounded() {
        return LipschitzEstimate {
            value: f64::INFINITY,
            lower_bound: false,
        };
    }
    let chunks = pairs.div_ceil(rng::CHUNK).max(1);
    let mut scored: Vec<(f64, ProjPoint, ProjPoint)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut r = rng::stream(seed, rng::tag::LIPSCHITZ, chunk as u64);
            let lo = chunk * rng::CHUNK;
            let hi = (lo + rng::CHUNK).min(pairs);
            (lo..hi)
                .map(|i| {
                    let x = sample_fubini_study(&mut r, dim);
                    let y = if i % 2 == 0 {
                        sample_fubini_study(&mut r, dim)
                    } else {
                        let scale = 10f64.powf(r.random_range(-4.0..-1.0));
                        perturb(&x, scale, &mut r)
                    };
                    (ratio(phi, &x, &y), x, y)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(CLIMB_STARTS);

    let best = scored
        .into_par_iter()
        .enumerate()
        .map(|(k, (mut best, mut x, mut y))| {
            let mut r = rng::stream(seed ^ 0x9e37_79b9, rng::tag::LIPSCHITZ, k as u64);
            let mut scale = (0.5 * x.chordal_unchecked(&y)).max(1e-3);
            for _ in 0..CLIMB_STEPS {
                let (nx, ny) = match r.random_range(0..3) {
                    0 => (perturb(&x, scale, &mut r), y),
                    1 => (x, perturb(&y, scale, &mut r)),
                    _ => (perturb(&x, scale, &mut r), perturb(&y, scale, &mut r)),
                };
                let cand = ratio(phi, &nx, &ny);
                if cand > best {
                    best = cand;
                    x = nx;
                    y = ny;
                    scale = (scale * 1.5).min(1.0);
                } else {
                    scale = (scale * 0.9).max(1e-7);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    LipschitzEstimate {
        value: best,
        lower_bound: true,
    }
}

/// Octahedral triangulation of the unit sphere, projected radially, seen
/// as P¹ through stereographic projection.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    verts: Vec<[f64; 3]>,
    points: Vec<ProjPoint>,
    tris: Vec<[usize; 3]>,
    areas: Vec<f64>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Inverse stereographic projection `S² → P¹`, `[x+iy : 1-Z] = [1+Z : x-iy]`.
pub fn sphere_to_p1(v: [f64; 3]) -> ProjPoint {
    let [x, y, z] = v;
    let coords = if z <= 0.0 {
        [Complex64::new(x, y), Complex64::new(1.0 - z, 0.0)]
    } else {
        [Complex64::new(1.0 + z, 0.0), Complex64::new(x, -y)]
    };
    ProjPoint::normalize(&coords).expect("nonzero by construction")
}

impl SphereGrid {
    /// Grid with about `grid_n` triangular cells.
    pub fn new(grid_n: usize) -> Self {
        let m = ((grid_n as f64 / 8.0).sqrt().round() as usize).max(1);
        let axes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, -1.0],
        ];
        let faces = [
            [0, 1, 2],
            [1, 3, 2],
            [3, 4, 2],
            [4, 0, 2],
            [1, 0, 5],
            [3, 1, 5],
            [4, 3, 5],
            [0, 4, 5],
        ];
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        for face in faces {
            let [a, b, c] = face.map(|i| axes[i]);
            // vertex (i, j) with i + j <= m sits at a + (b-a) i/m + (c-a) j/m
            let mut row_start = Vec::with_capacity(m + 1);
            for i in 0..=m {
                row_start.push(verts.len());
                for j in 0..=(m - i) {
                    let (s, t) = (i as f64 / m as f64, j as f64 / m as f64);
                    let p = [
                        a[0] + (b[0] - a[0]) * s + (c[0] - a[0]) * t,
                        a[1] + (b[1] - a[1]) * s + (c[1] - a[1]) * t,
                        a[2] + (b[2] - a[2]) * s + (c[2] - a[2]) * t,
                    ];
                    let n = dot(p, p).sqrt();
                    verts.push([p[0] / n, p[1] / n, p[2] / n]);
                }
            }
            let at = |i: usize, j: usize| row_start[i] + j;
            for i in 0..m {
                for j in 0..(m - i) {
                    tris.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
                    if j + 1 < m - i {
                        tris.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
                    }
                }
            }
        }
        let areas = tris
            .iter()
            .map(|t| {
                let e1 = sub(verts[t[1]], verts[t[0]]);
                let e2 = sub(verts[t[2]], verts[t[0]]);
                let c = cross(e1, e2);
                0.5 * dot(c, c).sqrt()
            })
            .collect();
        let points = verts.iter().map(|v| sphere_to_p1(*v)).collect();
        SphereGrid {
            verts,
            points,
            tris,
            areas,
        }
    }

    pub fn cells(&self) -> usize {
        self.tris.len()
    }

    pub fn points(&self) -> &[ProjPoint] {
        &self.points
    }

    fn analyze(&self, phi: &Observable) -> GridStats {
        let values: Vec<Option<f64>> = self
            .points
            .par_iter()
            .map(|p| {
                let v = phi.eval(p);
                (v.is_finite() && phi.pole_distance(p) >= POLE_TOL).then_some(v)
            })
            .collect();
        let total: f64 = self.areas.iter().sum();
        let mut cells = Vec::with_capacity(self.tris.len());
        let mut excluded = 0.0;
        let mut energy = 0.0;
        for (t, &area) in self.tris.iter().zip(&self.areas) {
            let (Some(f0), Some(f1), Some(f2)) = (values[t[0]], values[t[1]], values[t[2]]) else {
                excluded += area;
                continue;
            };
            // gradient of the linear interpolant: |g|² = df^T G^{-1} df
            let e1 = sub(self.verts[t[1]], self.verts[t[0]]);
            let e2 = sub(self.verts[t[2]], self.verts[t[0]]);
            let (g11, g12, g22) = (dot(e1, e1), dot(e1, e2), dot(e2, e2));
            let det = g11 * g22 - g12 * g12;
            let (d1, d2) = (f1 - f0, f2 - f0);
            let grad2 = (g22 * d1 * d1 - 2.0 * g12 * d1 * d2 + g11 * d2 * d2) / det;
            energy += 0.5 * area * grad2;
            cells.push((area, (f0 + f1 + f2) / 3.0));
        }
        let kept = total - excluded;
        let mean = cells.iter().map(|(a, v)| a * v).sum::<f64>() / kept;
        GridStats {
            cells,
            kept,
            mean,
            // the unit sphere has area 4π; the Dirichlet energy is scale free
            energy,
            excluded_fraction: excluded / total,
        }
    }
}

struct GridStats {
    cells: Vec<(f64, f64)>,
    kept: f64,
    mean: f64,
    energy: f64,
    excluded_fraction: f64,
}

impl GridStats {
    /// `‖φ - c‖_{L^p}` for the normalized area measure.
    fn lp_dev(&self, p: f64, c: f64) -> f64 {
        let s: f64 = self.cells.iter().map(|(a, v)| a * (v - c).abs().powf(p)).sum();
        (s / self.kept).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarNorm {
    /// `|m(φ)| + (∫ i∂φ∧∂̄φ)^{1/2}`.
    pub value: f64,
    pub mean: f64,
    /// `(∫ i∂φ∧∂̄φ)^{1/2}`.
    pub gradient: f64,
    /// Fraction of the sphere area dropped around poles.
    pub excluded_fraction: f64,
    pub cells: usize,
}

/// `‖φ‖_*` for an observable on P¹.
pub fn star_norm_p1(phi: &Observable, grid_n: usize) -> Result<StarNorm> {
    star_norm_on(phi, &SphereGrid::new(grid_n))
}

/// [`star_norm_p1`] on a prebuilt grid.
pub fn star_norm_on(phi: &Observable, grid: &SphereGrid) -> Result<StarNorm> {
    if let Some(d) = phi.dim() {
        if d != 1 {
            return Err(EqdError::DimMismatch { expected: 1, got: d });
        }
    }
    phi.check_dim(1)?;
    let st = grid.analyze(phi);
    if !(st.kept > 0.0) {
        return Err(EqdError::NormUnavailable("every grid cell touches a pole".into()));
    }
    let gradient = st.energy.sqrt();
    Ok(StarNorm {
        value: st.mean.abs() + gradient,
        mean: st.mean,
        gradient,
        excluded_fraction: st.excluded_fraction,
        cells: grid.cells(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareEntry {
    pub spec: String,
    pub ratio_l1: f64,
    pub ratio_l2: f64,
    /// `‖φ‖_{L²}` on the grid.
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareReport {
    pub entries: Vec<PoincareEntry>,
    /// Observables with vanishing gradient, for which the ratio is undefined.
    pub skipped: Vec<String>,
    pub max_ratio_l1: f64,
    pub max_ratio_l2: f64,
}

/// Ratios `‖φ - m(φ)‖_{L^p} / ‖dφ‖_{L²}` for `p = 1, 2` over a panel.
pub fn poincare_sobolev_check(phis: &[Observable], grid_n: usize) -> Result<PoincareReport> {
    let grid = SphereGrid::new(grid_n);
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for phi in phis {
        phi.check_dim(1)?;
        let st = grid.analyze(phi);
        let grad = st.energy.sqrt();
        if !(grad > 1e-12 * (1.0 + st.mean.abs())) {
            skipped.push(phi.spec().to_string());
            continue;
        }
        entries.push(PoincareEntry {
            spec: phi.spec().to_string(),
            ratio_l1: st.lp_dev(1.0, st.mean) / grad,
            ratio_l2: st.lp_dev(2.0, st.mean) / grad,
            l2: st.lp_dev(2.0, 0.0),
        });
    }
    let max = |f: fn(&PoincareEntry) -> f64| entries.iter().map(f).fold(0.0, f64::max);
    Ok(PoincareReport {
        max_ratio_l1: max(|e| e.ratio_l1),
        max_ratio_l2: max(|e| e.ratio_l2),
        entries,
        skipped,
    })
}
