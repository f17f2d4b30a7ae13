//! All roots of a complex polynomial.
//!
//! Initial approximations come from the eigenvalues of the companion matrix
//! (closed forms for degrees 1 and 2). They are refined simultaneously by
//! Aberth iteration, which keeps approximations of distinct roots apart, and
//! clusters that behave like a multiple root are merged and polished on the
//! appropriate derivative.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{EqdError, Result};

/// Backward-error target for polished roots, relative to coefficient scale.
pub const BACKWARD_TOL: f64 = 1e-12;
/// Relative backward error of `p^(j)`, `0 < j < m`, below which a cluster of
/// `m` approximations is accepted as one root of multiplicity `m`.
const DERIVATIVE_TOL: f64 = 1e-9;
/// Backward error of `p` itself at a merged multiple root. Two simple roots
/// `δ` apart give about `δ²/4` at their midpoint, so this keeps roots more
/// than about `1e-7` apart separate.
const MULTIPLE_TOL: f64 = 1e-14;
/// Single-linkage radius, relative to `max(1, |z|)`, for candidate clusters.
const CLUSTER_RADIUS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: Complex64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roots {
    pub roots: Vec<Root>,
    /// Set when some root could not be polished to [`BACKWARD_TOL`].
    pub ill_conditioned: bool,
}

impl Roots {
    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// Roots listed with repetition.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value, r.multiplicity))
            .collect()
    }
}

/// Horner evaluation of `p` and `p'` (coefficients highest degree first).
fn eval_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = coeffs[0];
    let mut dp = Complex64::new(0.0, 0.0);
    for c in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// `|p(z)| / sum |a_i| |z|^i`.
pub fn backward_error(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let scale = coeffs.iter().fold(0.0, |acc, c| acc * r + c.norm());
    if scale == 0.0 {
        return 0.0;
    }
    eval(coeffs, z).norm() / scale
}

fn derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    coeffs[..n]
        .iter()
        .enumerate()
        .map(|(i, c)| c * (n - i) as f64)
        .collect()
}

fn initial_guesses(monic: &[Complex64]) -> Vec<Complex64> {
    let degree = monic.len() - 1;
    match degree {
        1 => vec![-monic[1]],
        2 => {
            let b = monic[1];
            let c = monic[2];
            let disc = (b * b - 4.0 * c).sqrt();
            // pick the sign that avoids cancellation
            let q = if (b.conj() * disc).re >= 0.0 {
                -(b + disc) / 2.0
            } else {
                -(b - disc) / 2.0
            };
            if q.norm() == 0.0 {
                vec![q, q]
            } else {
                vec![q, c / q]
            }
        }
        _ => {
            let mut companion = DMatrix::<Complex64>::zeros(degree, degree);
            for j in 0..degree {
                companion[(0, j)] = -monic[j + 1];
            }
            for i in 1..degree {
                companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
            }
            match Schur::try_new(companion, f64::EPSILON, 10_000) {
                Some(schur) => {
                    let (_, t) = schur.unpack();
                    (0..degree).map(|i| t[(i, i)]).collect()
                }
                // fall back to points on a circle of the Cauchy radius
                None => {
                    let radius = 1.0 + monic[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
                    (0..degree)
                        .map(|k| {
                            Complex64::from_polar(radius, 0.4 + std::f64::consts::TAU * k as f64 / degree as f64)
                        })
                        .collect()
                }
            }
        }
    }
}

fn aberth(coeffs: &[Complex64], zs: &mut [Complex64]) {
    let n = zs.len();
    if n < 2 {
        return;
    }
    for _ in 0..80 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = eval_with_derivative(coeffs, zs[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            if !ratio.re.is_finite() || !ratio.im.is_finite() {
                continue;
            }
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| {
                    let d = zs[k] - zs[j];
                    if d.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { d.inv() }
                })
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                zs[k] -= step;
                max_step = max_step.max(step.norm() / zs[k].norm().max(1.0));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
}

/// Newton iteration keeping the iterate with the smallest backward error.
fn newton_polish(coeffs: &[Complex64], start: Complex64) -> Complex64 {
    let mut best = start;
    let mut best_err = backward_error(coeffs, start);
    let mut z = start;
    for _ in 0..30 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        let err = backward_error(coeffs, z);
        if err < best_err {
            best = z;
            best_err = err;
        } else if step.norm() <= 1e-16 * z.norm() {
            break;
        }
    }
    best
}

fn clusters(zs: &[Complex64]) -> Vec<Vec<usize>> {
    let n = zs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let scale = zs[i].norm().max(zs[j].norm()).max(1.0);
            if (zs[i] - zs[j]).norm() < CLUSTER_RADIUS * scale {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Try to certify `members` as one root of multiplicity `members.len()`.
fn merge_cluster(coeffs: &[Complex64], members: &[Complex64]) -> Option<Complex64> {
    let m = members.len();
    let centroid = members.iter().sum::<Complex64>() / m as f64;
    let mut derivs = vec![coeffs.to_vec()];
    for _ in 1..m {
        let next = derivative(derivs.last().unwrap());
        derivs.push(next);
    }
    let candidate = newton_polish(&derivs[m - 1], centroid);
    if backward_error(coeffs, candidate) > MULTIPLE_TOL {
        return None;
    }
    for d in &derivs[1..m] {
        if backward_error(d, candidate) > DERIVATIVE_TOL {
            return None;
        }
    }
    Some(candidate)
}

/// All complex roots of `coeffs` (highest degree first) with multiplicity.
pub fn roots(coeffs: &[Complex64]) -> Result<Roots> {
    let first = coeffs.iter().position(|c| c.norm() != 0.0).ok_or(EqdError::NoRoots)?;
    let coeffs = &coeffs[first..];
    if coeffs.len() < 2 {
        return Err(EqdError::NoRoots);
    }
    let lead = coeffs[0];
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();

    let mut zs = initial_guesses(&monic);
    aberth(&monic, &mut zs);

    let mut out = Vec::with_capacity(zs.len());
    let mut ill_conditioned = false;
    for group in clusters(&zs) {
        let members: Vec<Complex64> = group.iter().map(|&i| zs[i]).collect();
        if members.len() > 1 {
            if let Some(value) = merge_cluster(&monic, &members) {
                out.push(Root {
                    value,
                    multiplicity: members.len(),
                });
                continue;
            }
        }
        for z in members {
            let value = newton_polish(&monic, z);
            if backward_error(&monic, value) > BACKWARD_TOL || !value.re.is_finite() {
                ill_conditioned = true;
            }
            out.push(Root {
                value,
                multiplicity: 1,
            });
        }
    }
    Ok(Roots {
        roots: out,
        ill_conditioned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut rs: Vec<Root>) -> Vec<Root> {
        rs.sort_by(|a, b| {
            a.value
                .re
                .partial_cmp(&b.value.re)
                .unwrap()
                .then(a.value.im.partial_cmp(&b.value.im).unwrap())
        });
        rs
    }

    #[test]
    fn quadratic_examples() {
        let r = sorted(roots(&[c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap().roots);
        assert!((r[0].value - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((r[1].value - c(1.0, 0.0)).norm() < 1e-15);

        let r = sorted(roots(&[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap().roots);
        assert!((r[0].value - c(0.0, -1.0)).norm() < 1e-15);
        assert!((r[1].value - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn double_root_is_merged() {
        // (z-2)^2 (z+1) = z^3 - 3z^2 + 4
        let coeffs = [c(1.0, 0.0), c(-3.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)];
        let out = roots(&coeffs).unwrap();
        assert!(!out.ill_conditioned);
        let r = sorted(out.roots);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].multiplicity, 1);
        assert!((r[0].value - c(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(r[1].multiplicity, 2);
        assert!((r[1].value - c(2.0, 0.0)).norm() < 1e-12);
        for root in &r {
            assert!(backward_error(&coeffs, root.value) < BACKWARD_TOL);
        }
    }

    #[test]
    fn triple_root_at_origin() {
        let out = roots(&[c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(out.total_multiplicity(), 4);
        let zero = out.roots.iter().find(|r| r.value.norm() < 1e-9).unwrap();
        assert_eq!(zero.multiplicity, 3);
    }

    #[test]
    fn close_simple_roots_stay_separate() {
        // (z - 1)(z - 1 - 1e-6)
        let a = c(1.0, 0.0);
        let b = c(1.0 + 1e-6, 0.0);
        let out = roots(&[c(1.0, 0.0), -(a + b), a * b]).unwrap();
        assert_eq!(out.roots.len(), 2);
    }

    #[test]
    fn degree_zero_has_no_roots() {
        assert_eq!(roots(&[c(3.0, 0.0)]), Err(EqdError::NoRoots));
        assert_eq!(roots(&[c(0.0, 0.0), c(3.0, 0.0)]), Err(EqdError::NoRoots));
    }

    proptest! {
        #[test]
        fn recovers_random_roots(vals in proptest::collection::vec(-3.0f64..3.0, 2..13)) {
            // roots built from pairs of reals, degree 1..6
            let zs: Vec<Complex64> = vals.chunks(2).filter(|p| p.len() == 2).map(|p| c(p[0], p[1])).collect();
            let mut coeffs = vec![c(1.0, 0.0)];
            for z in &zs {
                let mut next = coeffs.clone();
                next.push(c(0.0, 0.0));
                for (i, a) in coeffs.iter().enumerate() {
                    next[i + 1] -= a * z;
                }
                coeffs = next;
            }
            let out = roots(&coeffs).unwrap();
            prop_assert_eq!(out.total_multiplicity(), zs.len());
            for r in &out.roots {
                prop_assert!(backward_error(&coeffs, r.value) < 1e-11);
            }
        }
    }
}
