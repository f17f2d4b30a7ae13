//! Exponential-rate fits with bootstrap confidence intervals.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{EqdError, Result};
use crate::rng;

/// Number of bootstrap resamples.
pub const BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Decay rate in nats per step: `|v_n| ≈ exp(intercept - rate·n)`.
    pub rate: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval for `rate`.
    pub rate_ci: (f64, f64),
}

fn wls(pts: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Weighted least squares of `log|v|` against `n`.
///
/// Weights are `(v/stderr)²` (inverse delta-method variance of `log|v|`)
/// when every stderr is positive, uniform otherwise. With stderrs the
/// bootstrap is parametric (each value redrawn from `N(v, stderr²)`), which
/// stays meaningful for the three or four lags a decay fit often has;
/// without them the points themselves are resampled.
pub fn log_linear_fit(ns: &[f64], values: &[f64], stderrs: &[f64], seed: u64) -> Result<RateFit> {
    let usable = ns.len();
    if usable < 3 {
        return Err(EqdError::InsufficientSignal { usable });
    }
    let weighted = stderrs.iter().all(|s| *s > 0.0);
    let pts: Vec<(f64, f64, f64)> = (0..usable)
        .map(|i| {
            let w = if weighted { (values[i] / stderrs[i]).powi(2) } else { 1.0 };
            (ns[i], values[i].abs().ln(), w)
        })
        .collect();
    let (slope, intercept) = wls(&pts).ok_or(EqdError::InsufficientSignal { usable })?;
    let mut r = rng::stream(seed, rng::tag::BOOTSTRAP, 0);
    let mut rates = Vec::with_capacity(BOOTSTRAP);
    let mut pick = Vec::with_capacity(usable);
    for _ in 0..BOOTSTRAP {
        pick.clear();
        if weighted {
            pick.extend(pts.iter().zip(values.iter().zip(stderrs)).map(|(p, (v, se))| {
                let z: f64 = r.sample(StandardNormal);
                (p.0, (v + se * z).abs().ln(), p.2)
            }));
        } else {
            pick.extend((0..usable).map(|_| pts[r.random_range(0..usable)]));
        }
        if let Some((s, _)) = wls(&pick) {
            rates.push(-s);
        }
    }
    rates.sort_by(f64::total_cmp);
    let q = |p: f64| rates[((p * (rates.len() - 1) as f64).round() as usize).min(rates.len() - 1)];
    let rate_ci = if rates.is_empty() {
        (-slope, -slope)
    } else {
        (q(0.025), q(0.975))
    };
    Ok(RateFit {
        rate: -slope,
        intercept,
        rate_ci,
    })
}
