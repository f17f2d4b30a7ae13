//! The Perron–Frobenius operator `Λφ(z) = d_t^{-1} Σ_{f(w)=z} φ(w)` and the
//! decomposition `φ = c_0 + Σ c_n …` defining `c_φ = ⟨μ, φ⟩`.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::DynMap;
use crate::error::{EqdError, Result};
use crate::fibers::fiber;
use crate::measure::{fubini_study_points, mean_of_values, Estimate, SampleSet};
use crate::observables::Observable;
use crate::projective::ProjPoint;
use crate::rng;
use crate::stats::batch::{batch_means, weighted_mean};

/// Cap on fiber-tree leaves summed over all quadrature nodes.
pub const LEAF_BUDGET: f64 = 1e7;
/// Default truncation of the decomposition.
pub const DEFAULT_TRUNCATION: usize = 8;

/// `Λφ(z)`, multiplicity weighted.
pub fn apply_pf(map: &DynMap, phi: &Observable, z: &ProjPoint) -> Result<f64> {
    let fib = fiber(map, z)?;
    let dt = map.topological_degree() as f64;
    let mut s = 0.0;
    for fp in &fib.points {
        let v = phi.eval(&fp.point);
        if v == f64::NEG_INFINITY {
            return Err(EqdError::PolarValue);
        }
        s += fp.multiplicity as f64 * v;
    }
    Ok(s / dt)
}

/// `Λ^k φ(z)` for `k = 0..=depth` from one fiber tree rooted at `z`.
///
/// Levels are expanded exactly while they hold at most `leaf_cap` points;
/// past that each point follows one random preimage, which keeps every
/// level an unbiased estimate. Returns the values and the number of
/// low-accuracy fibers met.
pub fn pf_tower<R: Rng + ?Sized>(
    map: &DynMap,
    phi: &Observable,
    z: &ProjPoint,
    depth: usize,
    leaf_cap: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let dt = map.topological_degree();
    let mut level = vec![(*z, 1.0f64)];
    let mut out = Vec::with_capacity(depth + 1);
    let mut flagged = 0;
    let eval = |level: &[(ProjPoint, f64)]| -> Result<f64> {
        let mut s = 0.0;
        for (p, w) in level {
            let v = phi.eval(p);
            if v == f64::NEG_INFINITY {
                return Err(EqdError::PolarValue);
            }
            s += w * v;
        }
        Ok(s)
    };
    out.push(eval(&level)?);
    for _ in 0..depth {
        let exact = level.len() * dt <= leaf_cap;
        let mut next = Vec::with_capacity(if exact { level.len() * dt } else { level.len() });
        for (p, w) in &level {
            let fib = fiber(map, p)?;
            flagged += fib.flagged as usize;
            if exact {
                for fp in &fib.points {
                    next.push((fp.point, w * fp.multiplicity as f64 / dt as f64));
                }
            } else {
                next.push((fib.choose(rng), *w));
            }
        }
        level = next;
        out.push(eval(&level)?);
    }
    Ok((out, flagged))
}

/// `m(φ) = ∫ φ dL` by Monte Carlo against Fubini–Study measure.
pub fn lebesgue_mean(phi: &Observable, dim: usize, nodes: usize, seed: u64) -> Result<Estimate> {
    phi.check_dim(dim)?;
    let pts = fubini_study_points(dim, nodes, seed, rng::tag::LEBESGUE);
    let values: Vec<f64> = pts.par_iter().map(|p| phi.eval(p)).collect();
    mean_of_values(&values, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMeta {
    pub scheme: String,
    pub nodes: usize,
    pub seed: u64,
    /// Exact fiber-tree leaves allowed per node.
    pub leaf_cap: usize,
    /// True when some level was subsampled rather than expanded exactly.
    pub subsampled: bool,
    /// Fibers computed with reduced accuracy.
    pub flagged_fibers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTrace {
    pub c: Vec<f64>,
    /// Standard error of each `c_n`.
    pub stderr: Vec<f64>,
    /// `b_n = -Σ_{m>n} c_m` within the truncation.
    pub b: Vec<f64>,
    /// `‖φ_n‖` in `L²(L)` over the quadrature nodes.
    pub phi_tail_l2: Vec<f64>,
    /// `sup |φ_n|` over the quadrature nodes.
    pub phi_tail_sup: Vec<f64>,
    /// `Σ_{n≤N} c_n`.
    pub c_phi: f64,
    pub c_phi_stderr: f64,
    pub quadrature: QuadratureMeta,
}

impl DecompositionTrace {
    /// CSV with columns `n,c_n,b_n,phi_tail_L2,phi_tail_sup,stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,c_n,b_n,phi_tail_L2,phi_tail_sup,stderr\n");
        for n in 0..self.c.len() {
            s.push_str(&format!(
                "{n},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.c[n], self.b[n], self.phi_tail_l2[n], self.phi_tail_sup[n], self.stderr[n]
            ));
        }
        s
    }
}

fn leaf_cap(nodes: usize) -> Result<usize> {
    let cap = (LEAF_BUDGET / nodes.max(1) as f64).floor();
    if cap < 1.0 {
        return Err(EqdError::BudgetExceeded(format!(
            "{nodes} nodes exceed the budget of {LEAF_BUDGET} fiber evaluations"
        )));
    }
    Ok(cap as usize)
}

fn towers(
    map: &DynMap,
    phi: &Observable,
    nodes: &[ProjPoint],
    depth: usize,
    seed: u64,
    tag: u64,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let cap = leaf_cap(nodes.len())?;
    let chunks: Vec<Result<(Vec<Vec<f64>>, usize)>> = nodes
        .par_chunks(rng::CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut r = rng::stream(seed, tag, c as u64);
            let mut out = Vec::with_capacity(chunk.len());
            let mut flagged = 0;
            for z in chunk {
                let (t, f) = pf_tower(map, phi, z, depth, cap, &mut r)?;
                out.push(t);
                flagged += f;
            }
            Ok((out, flagged))
        })
        .collect();
    let mut all = Vec::with_capacity(nodes.len());
    let mut flagged = 0;
    for c in chunks {
        let (t, f) = c?;
        all.extend(t);
        flagged += f;
    }
    Ok((all, flagged))
}

/// Estimate `c_0 .. c_N` with common quadrature nodes for every `n`.
///
/// With `V_n = Λⁿφ` at a node, `Σ_{m≤n} c_m = m(Λⁿφ)`, so `c_0 = m(V_0)` and
/// `c_n = m(V_n - V_{n-1})`; the tail `φ_n = Λⁿφ - Σ_{m≤n} c_m`.
pub fn decompose(map: &DynMap, phi: &Observable, n_trunc: usize, nodes: usize, seed: u64) -> Result<DecompositionTrace> {
    map.require_hypothesis()?;
    phi.check_dim(map.dim())?;
    if nodes < 2 {
        return Err(EqdError::Invalid("decompose needs at least 2 quadrature nodes".into()));
    }
    let dt = map.topological_degree() as f64;
    if n_trunc as f64 * dt.ln() > LEAF_BUDGET.ln() * 4.0 {
        return Err(EqdError::BudgetExceeded(format!(
            "truncation {n_trunc} is too deep for d_t = {dt}"
        )));
    }
    let cap = leaf_cap(nodes)?;
    let pts = fubini_study_points(map.dim(), nodes, seed, rng::tag::DECOMPOSE_NODES);
    let (v, flagged) = towers(map, phi, &pts, n_trunc, seed, rng::tag::DECOMPOSE_BRANCHES)?;

    let mut c = Vec::with_capacity(n_trunc + 1);
    let mut stderr = Vec::with_capacity(n_trunc + 1);
    let mut tail_l2 = Vec::with_capacity(n_trunc + 1);
    let mut tail_sup = Vec::with_capacity(n_trunc + 1);
    let mut partial = 0.0;
    for n in 0..=n_trunc {
        let inc: Vec<f64> = v.iter().map(|t| if n == 0 { t[0] } else { t[n] - t[n - 1] }).collect();
        let (cn, se) = batch_means(&inc);
        c.push(cn);
        stderr.push(se);
        partial += cn;
        let dev: Vec<f64> = v.iter().map(|t| t[n] - partial).collect();
        tail_l2.push((dev.iter().map(|x| x * x).sum::<f64>() / dev.len() as f64).sqrt());
        tail_sup.push(dev.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
    let mut b = vec![0.0; n_trunc + 1];
    for n in (0..n_trunc).rev() {
        b[n] = b[n + 1] - c[n + 1];
    }
    let last: Vec<f64> = v.iter().map(|t| t[n_trunc]).collect();
    let (_, c_phi_stderr) = batch_means(&last);
    let subsampled = (dt.powi(n_trunc as i32)) > cap as f64;
    Ok(DecompositionTrace {
        c_phi: c.iter().sum(),
        c_phi_stderr,
        c,
        stderr,
        b,
        phi_tail_l2: tail_l2,
        phi_tail_sup: tail_sup,
        quadrature: QuadratureMeta {
            scheme: "fubini_study_monte_carlo".into(),
            nodes,
            seed,
            leaf_cap: cap,
            subsampled,
            flagged_fibers: flagged,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GordinTerm {
    pub n: usize,
    /// Estimate of `‖Λⁿφ‖_{L¹(μ)}`.
    pub l1: f64,
    pub stderr: f64,
    /// `Σ_{m≤n} ‖Λ^m φ‖_{L¹(μ)}`.
    pub partial_sum: f64,
    pub partial_stderr: f64,
}

/// Terms of the series `Σ_n ‖Λⁿφ‖_{L¹(μ)}` for an already centered `φ`.
pub fn gordin_series(map: &DynMap, phi: &Observable, mu: &SampleSet, n_trunc: usize) -> Result<Vec<GordinTerm>> {
    phi.check_dim(map.dim())?;
    let seed = mu.provenance().seed;
    let (v, _) = towers(map, phi, mu.points(), n_trunc, seed, rng::tag::GORDIN)?;
    let exact = mu.exact_weights();
    let stat = |vals: &[f64]| match exact {
        Some(w) => (weighted_mean(vals, w), 0.0),
        None => batch_means(vals),
    };
    let mut out = Vec::with_capacity(n_trunc + 1);
    let mut running = vec![0.0; v.len()];
    for n in 0..=n_trunc {
        let abs: Vec<f64> = v.iter().map(|t| t[n].abs()).collect();
        for (r, a) in running.iter_mut().zip(&abs) {
            *r += a;
        }
        let (l1, stderr) = stat(&abs);
        let (partial_sum, partial_stderr) = stat(&running);
        out.push(GordinTerm {
            n,
            l1,
            stderr,
            partial_sum,
            partial_stderr,
        });
    }
    Ok(out)
}
