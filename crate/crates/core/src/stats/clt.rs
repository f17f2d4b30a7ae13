//! Normalized Birkhoff sums and their Gaussian limit.
//!
//! Forward orbits of length 1000 lose all accuracy after about 50 steps of a
//! degree-2 map, so the harness runs the stationary chain backwards: from
//! `x_0 ~ μ`, `x_{i+1}` is a uniformly chosen preimage of `x_i` (weighted by
//! multiplicity). Because `f^*μ = d_t μ`, every `x_i` is μ-distributed and
//! `(x_{n-1}, …, x_0)` has the law of the forward orbit `(y, f(y), …)` of a
//! μ-random `y`, so the Birkhoff sums have exactly the forward law.

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::correlation::green_kubo_sigma2;
use super::ks;
use crate::dynamics::DynMap;
use crate::error::{EqdError, Result};
use crate::fibers::random_preimage;
use crate::measure::SampleSet;
use crate::observables::Observable;
use crate::rng;

/// Lags of the Green–Kubo estimate used as the CLT null variance.
pub const GK_LAGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub sigma2_gk: f64,
    pub sigma2_gk_stderr: f64,
    /// Sample variance of the normalized sums.
    pub sigma2_emp: f64,
    pub sigma2_emp_stderr: f64,
    /// KS statistic against `Normal(0, sigma2_gk)`; NaN if `sigma2_gk ≤ 0`.
    pub ks_stat: f64,
    pub ks_p: f64,
    pub n_block: usize,
    pub trajectories: usize,
    pub degenerate: bool,
    /// Trajectories lost to fiber failures or non-finite values.
    pub dropped: usize,
    /// Mean of `φ` over all trajectory points, subtracted from the sums.
    pub centering: f64,
    /// `(S_n - n·centering) / √n` per kept trajectory, in trajectory order.
    pub stats: Vec<f64>,
}

struct Traj {
    sum: f64,
    sum_sq: f64,
}

fn trajectory<R: Rng>(
    map: &DynMap,
    mu: &SampleSet,
    cumulative: Option<&[f64]>,
    phi: &Observable,
    n_block: usize,
    r: &mut R,
) -> Result<Option<Traj>> {
    let start = match cumulative {
        None => r.random_range(0..mu.len()),
        Some(c) => {
            let u = r.random::<f64>() * c[c.len() - 1];
            c.partition_point(|x| *x <= u).min(c.len() - 1)
        }
    };
    let mut x = mu.points()[start];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..n_block {
        if i > 0 {
            x = match random_preimage(map, &x, r) {
                Ok(p) => p,
                Err(e) if e.is_numerical() => return Ok(None),
                Err(e) => return Err(e),
            };
        }
        let v = phi.eval(&x);
        if !v.is_finite() {
            return Ok(None);
        }
        sum += v;
        sum_sq += v * v;
    }
    Ok(Some(Traj { sum, sum_sq }))
}

/// Distribution of `S_n φ / √n` over `trajectories` μ-distributed orbits.
pub fn birkhoff_clt(
    map: &DynMap,
    mu: &SampleSet,
    phi: &Observable,
    n_block: usize,
    trajectories: usize,
    seed: u64,
) -> Result<CltReport> {
    phi.check_dim(map.dim())?;
    if n_block == 0 || trajectories < 2 || mu.is_empty() {
        return Err(EqdError::Invalid(
            "need n_block >= 1, at least 2 trajectories and a nonempty sample set".into(),
        ));
    }
    let cumulative: Option<Vec<f64>> = (!mu.is_uniform()).then(|| {
        mu.weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    });
    let chunks = trajectories.div_ceil(rng::CHUNK);
    let results: Vec<Result<Vec<Option<Traj>>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, rng::tag::CLT, c as u64);
            let len = rng::CHUNK.min(trajectories - c * rng::CHUNK);
            (0..len)
                .map(|_| trajectory(map, mu, cumulative.as_deref(), phi, n_block, &mut r))
                .collect()
        })
        .collect();
    let mut kept = Vec::with_capacity(trajectories);
    let mut dropped = 0;
    for chunk in results {
        for t in chunk? {
            match t {
                Some(t) => kept.push(t),
                None => dropped += 1,
            }
        }
    }
    if kept.len() < 2 {
        return Err(EqdError::Invalid("fewer than two trajectories survived".into()));
    }
    let n = n_block as f64;
    let points = n * kept.len() as f64;
    let centering = kept.iter().map(|t| t.sum).sum::<f64>() / points;
    let point_var = (kept.iter().map(|t| t.sum_sq).sum::<f64>() / points - centering * centering).max(0.0);
    let stats: Vec<f64> = kept.iter().map(|t| (t.sum - n * centering) / n.sqrt()).collect();
    let m = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / m;
    let sigma2_emp = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let sigma2_emp_stderr = sigma2_emp * (2.0 / (m - 1.0)).sqrt();
    // a genuine CLT keeps S_n/√n of order σ; a coboundary leaves O(1/n)
    let floor = point_var * (10.0 / n).max(1e-9);
    let degenerate = sigma2_emp <= floor;

    let gk = green_kubo_sigma2(map, mu, phi, GK_LAGS)?;
    let (ks_stat, ks_p) = if gk.sigma2 > 0.0 {
        let normal = Normal::new(0.0, gk.sigma2.sqrt()).map_err(|e| EqdError::Invalid(e.to_string()))?;
        ks::one_sample(&stats, |x| normal.cdf(x))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CltReport {
        sigma2_gk: gk.sigma2,
        sigma2_gk_stderr: gk.stderr + gk.tail,
        sigma2_emp,
        sigma2_emp_stderr,
        ks_stat,
        ks_p,
        n_block,
        trajectories,
        degenerate,
        dropped,
        centering,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::backward_orbit_sample;
    use crate::observables::make_observable;
    use crate::projective::ProjPoint;
    use num_complex::Complex64;

    fn setup() -> (DynMap, SampleSet) {
        let map: DynMap = "rational1d: num=[1,0,0] den=[0,0,1]".parse().unwrap();
        let a = ProjPoint::from_affine(&[Complex64::new(2.0, 0.0)]).unwrap();
        let mu = backward_orbit_sample(&map, &a, 40, 4000, 3).unwrap();
        (map, mu)
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let (map, mu) = setup();
        let r = birkhoff_clt(&map, &mu, &Observable::constant(0.0), 50, 200, 1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.sigma2_emp, 0.0);
    }

    #[test]
    fn cos_arg_is_gaussian_and_coboundary_degenerate() {
        let (map, mu) = setup();
        let cos = make_observable("cos_arg(1)").unwrap();
        let r = birkhoff_clt(&map, &mu, &cos, 200, 1500, 5).unwrap();
        assert!(!r.degenerate);
        assert!((r.sigma2_emp - 0.5).abs() < 3.0 * r.sigma2_emp_stderr, "{}", r.sigma2_emp);
        assert!(r.ks_p > 0.01, "{}", r.ks_p);
        let cob = make_observable("sum(cos_arg(2), scale(-1, cos_arg(1)))").unwrap();
        let r = birkhoff_clt(&map, &mu, &cob, 200, 1500, 5).unwrap();
        assert!(r.degenerate, "{}", r.sigma2_emp);
    }

    #[test]
    fn deterministic() {
        let (map, mu) = setup();
        let cos = make_observable("cos_arg(1)").unwrap();
        let a = birkhoff_clt(&map, &mu, &cos, 30, 300, 8).unwrap();
        let b = birkhoff_clt(&map, &mu, &cos, 30, 300, 8).unwrap();
        assert_eq!(a.stats, b.stats);
    }
}
