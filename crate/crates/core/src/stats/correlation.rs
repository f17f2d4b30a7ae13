//! Correlation series by forward iteration on μ-samples, decay fits, the
//! mixing-bound check and the Green–Kubo variance.

use rayon::prelude::*;

use super::batch::{batch_means, weighted_mean};
use super::fit::{log_linear_fit, RateFit};
use crate::dynamics::DynMap;
use crate::error::{EqdError, Result};
use crate::measure::{Estimate, Provenance, SampleSet};
use crate::observables::Observable;
use crate::projective::ProjPoint;

/// Seed of the bootstrap used by [`decay_fit`].
const FIT_SEED: u64 = 0x00c0_ffee;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrEntry {
    pub n: usize,
    pub corr: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrMeta {
    pub map_hash: String,
    pub psi_spec: String,
    pub phi_spec: String,
    pub provenance: Option<Provenance>,
    /// `⟨μ, φ⟩` used for centering.
    pub phi_mean: f64,
    /// `⟨μ, ψ∘fⁿ⟩` for each lag, with its standard error.
    pub psi_means: Vec<Estimate>,
    /// Samples whose orbit or values could not be computed.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub entries: Vec<CorrEntry>,
    pub meta: CorrMeta,
}

impl CorrelationSeries {
    /// A series with given values, e.g. for testing fits.
    pub fn synthetic(corr: &[f64], stderr: &[f64]) -> Self {
        CorrelationSeries {
            entries: corr
                .iter()
                .zip(stderr)
                .enumerate()
                .map(|(n, (c, s))| CorrEntry {
                    n,
                    corr: *c,
                    stderr: *s,
                })
                .collect(),
            meta: CorrMeta {
                map_hash: "-".into(),
                psi_spec: "-".into(),
                phi_spec: "-".into(),
                provenance: None,
                phi_mean: 0.0,
                psi_means: vec![],
                dropped: 0,
            },
        }
    }

    /// First lag `n ≥ 1` at or below the noise floor `2·stderr`.
    pub fn floor_index(&self) -> usize {
        self.entries
            .iter()
            .skip(1)
            .find(|e| !above_floor(e))
            .map_or(self.entries.len(), |e| e.n)
    }
}

fn above_floor(e: &CorrEntry) -> bool {
    e.corr.is_finite() && e.corr.abs() > 2.0 * e.stderr && e.corr != 0.0
}

/// Values `(φ_0(x), ψ_0(x) .. ψ_n(x))` along forward orbits, where
/// `φ_k = φ∘f^k`. Rows are `None` when the orbit or a value fails.
fn orbit_rows(
    map: &DynMap,
    points: &[ProjPoint],
    fs: &[&Observable],
    n_max: usize,
) -> Vec<Option<Vec<Vec<f64>>>> {
    points
        .par_iter()
        .map(|x| {
            let mut rows = vec![Vec::with_capacity(n_max + 1); fs.len()];
            let mut y = *x;
            for n in 0..=n_max {
                if n > 0 {
                    y = map.evaluate(&y).ok()?;
                }
                for (row, f) in rows.iter_mut().zip(fs) {
                    let v = f.eval(&y);
                    if !v.is_finite() {
                        return None;
                    }
                    row.push(v);
                }
            }
            Some(rows)
        })
        .collect()
}

struct Kept {
    rows: Vec<Vec<Vec<f64>>>,
    weights: Option<Vec<f64>>,
    dropped: usize,
}

fn keep(mu: &SampleSet, rows: Vec<Option<Vec<Vec<f64>>>>) -> Result<Kept> {
    let total = rows.len();
    let mut kept = Vec::with_capacity(total);
    let mut w = Vec::with_capacity(total);
    let exact = mu.exact_weights().is_some();
    for (r, wi) in rows.into_iter().zip(mu.weights()) {
        if let Some(r) = r {
            kept.push(r);
            w.push(*wi);
        }
    }
    if kept.is_empty() {
        return Err(EqdError::Invalid("no sample has a computable orbit".into()));
    }
    Ok(Kept {
        dropped: total - kept.len(),
        rows: kept,
        weights: exact.then_some(w),
    })
}

impl Kept {
    fn mean(&self, values: &[f64]) -> Estimate {
        let (mean, stderr) = match &self.weights {
            None => batch_means(values),
            Some(w) => (weighted_mean(values, w), 0.0),
        };
        Estimate {
            mean,
            stderr,
            dropped: 0,
        }
    }

    fn column(&self, obs: usize, n: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[obs][n]).collect()
    }
}

/// `corr_n = ⟨μ, (ψ∘fⁿ) φ⟩ - ⟨μ, ψ∘fⁿ⟩⟨μ, φ⟩` for `n = 0..=n_max`.
pub fn correlation_series(
    map: &DynMap,
    mu: &SampleSet,
    psi: &Observable,
    phi: &Observable,
    n_max: usize,
) -> Result<CorrelationSeries> {
    psi.check_dim(map.dim())?;
    phi.check_dim(map.dim())?;
    let rows = orbit_rows(map, mu.points(), &[phi, psi], n_max);
    let kept = keep(mu, rows)?;
    let phi0 = kept.column(0, 0);
    let phi_mean = kept.mean(&phi0).mean;
    let mut entries = Vec::with_capacity(n_max + 1);
    let mut psi_means = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let psin = kept.column(1, n);
        let m = kept.mean(&psin);
        let prod: Vec<f64> = psin
            .iter()
            .zip(&phi0)
            .map(|(a, b)| (a - m.mean) * (b - phi_mean))
            .collect();
        let c = kept.mean(&prod);
        psi_means.push(m);
        entries.push(CorrEntry {
            n,
            corr: c.mean,
            stderr: c.stderr,
        });
    }
    Ok(CorrelationSeries {
        entries,
        meta: CorrMeta {
            map_hash: map.spec_hash(),
            psi_spec: psi.spec().to_string(),
            phi_spec: phi.spec().to_string(),
            provenance: Some(mu.provenance().clone()),
            phi_mean,
            psi_means,
            dropped: kept.dropped,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub rate_ci: (f64, f64),
    pub intercept: f64,
    pub floor_index: usize,
    /// Lags entering the fit.
    pub used: Vec<usize>,
}

/// Exponential rate of `|corr_n|` over the lags `1 ≤ n < floor_index`.
pub fn decay_fit(series: &CorrelationSeries) -> Result<DecayFit> {
    let floor = series.floor_index();
    let used: Vec<&CorrEntry> = series.entries.iter().filter(|e| e.n >= 1 && e.n < floor).collect();
    let ns: Vec<f64> = used.iter().map(|e| e.n as f64).collect();
    let v: Vec<f64> = used.iter().map(|e| e.corr).collect();
    let s: Vec<f64> = used.iter().map(|e| e.stderr).collect();
    let RateFit {
        rate,
        intercept,
        rate_ci,
    } = log_linear_fit(&ns, &v, &s, FIT_SEED)?;
    Ok(DecayFit {
        rate,
        rate_ci,
        intercept,
        floor_index: floor,
        used: used.iter().map(|e| e.n).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingEntry {
    pub n: usize,
    pub corr: f64,
    pub stderr: f64,
    /// `‖ψ‖_∞ ‖φ‖_* δ_n^{1/2} d_t^{-n/2}`.
    pub bound: f64,
    /// `|corr_n| / bound`.
    pub ratio: f64,
    pub above_floor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub entries: Vec<MixingEntry>,
    /// `sup_n ratio_n`.
    pub a_emp: f64,
    /// Fitted growth of the ratios past the floor, nats per step
    /// (negative = ratios decay); `None` with fewer than three usable lags.
    pub ratio_growth: Option<RateFit>,
    /// Ratios grow significantly with `n`: the bound's exponent is violated.
    pub exponent_violation: bool,
}

/// Compare a correlation series with the exponential mixing bound.
pub fn mixing_bound_check(
    series: &CorrelationSeries,
    map: &DynMap,
    phi_star_norm: f64,
    psi_sup: f64,
) -> Result<MixingReport> {
    if !(phi_star_norm.is_finite() && phi_star_norm > 0.0) {
        return Err(EqdError::NormUnavailable(format!("‖φ‖_* = {phi_star_norm}")));
    }
    if !(psi_sup.is_finite() && psi_sup > 0.0) {
        return Err(EqdError::NormUnavailable(format!("‖ψ‖_∞ = {psi_sup}")));
    }
    let deg = map.degrees();
    let dt = deg.d_t as f64;
    let floor = series.floor_index();
    let entries: Vec<MixingEntry> = series
        .entries
        .iter()
        .map(|e| {
            let bound = psi_sup * phi_star_norm * deg.delta(e.n as u32).sqrt() * dt.powf(-(e.n as f64) / 2.0);
            MixingEntry {
                n: e.n,
                corr: e.corr,
                stderr: e.stderr,
                bound,
                ratio: e.corr.abs() / bound,
                above_floor: e.n < floor && above_floor(e),
            }
        })
        .collect();
    let a_emp = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let fit_on: Vec<&MixingEntry> = entries.iter().filter(|e| e.n >= 1 && e.above_floor).collect();
    let ns: Vec<f64> = fit_on.iter().map(|e| e.n as f64).collect();
    let rs: Vec<f64> = fit_on.iter().map(|e| e.ratio).collect();
    let ss: Vec<f64> = fit_on.iter().map(|e| e.stderr / e.bound).collect();
    let ratio_growth = log_linear_fit(&ns, &rs, &ss, FIT_SEED).ok().map(|f| RateFit {
        rate: -f.rate,
        intercept: f.intercept,
        rate_ci: (-f.rate_ci.1, -f.rate_ci.0),
    });
    let exponent_violation = ratio_growth.as_ref().is_some_and(|g| g.rate_ci.0 > 1e-9);
    Ok(MixingReport {
        entries,
        a_emp,
        ratio_growth,
        exponent_violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenKubo {
    /// `⟨μ,φ²⟩ + 2 Σ_{1≤n≤n_max} ⟨μ, φ(φ∘fⁿ)⟩` for centered `φ`.
    pub sigma2: f64,
    /// Batch-means error of the estimator.
    pub stderr: f64,
    /// Truncation estimate from the fitted decay (0 without usable decay).
    pub tail: f64,
    /// Autocovariances `⟨μ, φ(φ∘fⁿ)⟩`, `n = 0..=n_max`.
    pub autocov: Vec<CorrEntry>,
    /// `⟨μ, φ⟩` subtracted before everything else.
    pub mean: f64,
    pub dropped: usize,
}

/// Green–Kubo variance of the Birkhoff sums of `φ`, centered internally.
///
/// Each sample contributes `φ(x)² + 2 Σ φ(x) φ(fⁿx)`, so the error bar
/// accounts for the correlation between lags.
pub fn green_kubo_sigma2(map: &DynMap, mu: &SampleSet, phi: &Observable, n_max: usize) -> Result<GreenKubo> {
    phi.check_dim(map.dim())?;
    let rows = orbit_rows(map, mu.points(), &[phi], n_max);
    let kept = keep(mu, rows)?;
    let mean = kept.mean(&kept.column(0, 0)).mean;
    let per_sample: Vec<f64> = kept
        .rows
        .iter()
        .map(|r| {
            let c0 = r[0][0] - mean;
            c0 * c0 + 2.0 * r[0][1..].iter().map(|v| c0 * (v - mean)).sum::<f64>()
        })
        .collect();
    let total = kept.mean(&per_sample);
    let autocov: Vec<CorrEntry> = (0..=n_max)
        .map(|n| {
            let prod: Vec<f64> = kept.rows.iter().map(|r| (r[0][0] - mean) * (r[0][n] - mean)).collect();
            let e = kept.mean(&prod);
            CorrEntry {
                n,
                corr: e.mean,
                stderr: e.stderr,
            }
        })
        .collect();
    let series = CorrelationSeries {
        entries: autocov.clone(),
        meta: CorrelationSeries::synthetic(&[], &[]).meta,
    };
    let tail = match decay_fit(&series) {
        Ok(fit) if fit.rate > 0.0 && fit.floor_index > n_max => {
            let r = (-fit.rate).exp();
            2.0 * autocov[n_max].corr.abs() * r / (1.0 - r)
        }
        _ => 0.0,
    };
    Ok(GreenKubo {
        sigma2: total.mean,
        stderr: total.stderr,
        tail,
        autocov,
        mean,
        dropped: kept.dropped,
    })
}
