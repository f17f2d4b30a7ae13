//! Points of P¹ and P² in canonical homogeneous coordinates.
//!
//! The last coordinate is the homogenizing one: the affine point `z` of P¹
//! is `[z : 1]` and `(z, w)` in C² is `[z : w : 1]` in P².

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;

use crate::error::{EqdError, Result};

/// A point of P¹ (`dim == 1`) or P² (`dim == 2`).
///
/// Coordinates are stored in canonical form: unit Euclidean norm, with the
/// largest-modulus coordinate (lowest index on ties) a positive real.
#[derive(Clone, Copy, PartialEq)]
pub struct ProjPoint {
    coords: [Complex64; 3],
    dim: usize,
}

impl ProjPoint {
    /// Canonical representative of the line spanned by `raw` (2 or 3 entries).
    pub fn normalize(raw: &[Complex64]) -> Result<Self> {
        let dim = match raw.len() {
            2 => 1,
            3 => 2,
            n => {
                return Err(EqdError::Invalid(format!(
                    "expected 2 or 3 homogeneous coordinates, got {n}"
                )))
            }
        };
        // scale by the largest modulus first so the norm cannot overflow
        let max_abs = raw.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(max_abs > 0.0) || !max_abs.is_finite() {
            return Err(EqdError::InvalidPoint);
        }
        // near-ties resolve to the lowest index, so renormalizing a
        // canonical point never moves the phase anchor
        let lead = raw
            .iter()
            .position(|c| c.norm() >= max_abs * (1.0 - 1e-12))
            .unwrap_or(0);
        let lead_abs = max_abs;
        let mut coords = [Complex64::new(0.0, 0.0); 3];
        for (dst, src) in coords.iter_mut().zip(raw) {
            *dst = src / lead_abs;
        }
        let norm = coords.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let phase = coords[lead] / coords[lead].norm();
        let scale = phase.conj() / norm;
        for c in coords.iter_mut().take(dim + 1) {
            *c *= scale;
        }
        coords[lead] = Complex64::new(coords[lead].norm(), 0.0);
        Ok(ProjPoint { coords, dim })
    }

    /// Like [`normalize`](Self::normalize), but coordinates that are already
    /// canonical to rounding are kept bit for bit, so stored samples reload
    /// exactly.
    pub(crate) fn from_stored(raw: &[Complex64]) -> Result<Self> {
        let p = Self::normalize(raw)?;
        let close = raw
            .iter()
            .zip(p.coords())
            .all(|(a, b)| (a - b).norm() <= 4.0 * f64::EPSILON);
        if !close {
            return Ok(p);
        }
        let mut coords = [Complex64::new(0.0, 0.0); 3];
        coords[..raw.len()].copy_from_slice(raw);
        Ok(ProjPoint { coords, dim: p.dim })
    }

    /// Point with affine coordinates `affine` (one or two entries).
    pub fn from_affine(affine: &[Complex64]) -> Result<Self> {
        let mut raw = affine.to_vec();
        raw.push(Complex64::new(1.0, 0.0));
        Self::normalize(&raw)
    }

    /// The point at infinity `[1 : 0]` of P¹.
    pub fn infinity() -> Self {
        Self::normalize(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
            .expect("nonzero")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords[..self.dim + 1]
    }

    /// Affine coordinates `z_i / z_last`, or `None` on the hyperplane at infinity.
    pub fn affine(&self) -> Option<Vec<Complex64>> {
        let last = self.coords[self.dim];
        if last.norm() == 0.0 {
            return None;
        }
        Some(self.coords[..self.dim].iter().map(|c| c / last).collect())
    }

    /// Hermitian product of the canonical representatives.
    pub fn inner(&self, other: &ProjPoint) -> Complex64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    /// Fubini–Study chordal distance `sqrt(1 - |<p,q>|^2)`, in `[0, 1]`.
    pub fn chordal_distance(&self, other: &ProjPoint) -> Result<f64> {
        if self.dim != other.dim {
            return Err(EqdError::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(self.chordal_unchecked(other))
    }

    pub(crate) fn chordal_unchecked(&self, other: &ProjPoint) -> f64 {
        // Lagrange identity: 1 - |<p,q>|^2 = sum_{i<j} |p_i q_j - p_j q_i|^2
        // for unit vectors, without the cancellation of the direct form.
        let p = self.coords();
        let q = other.coords();
        let mut s = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                s += (p[i] * q[j] - p[j] * q[i]).norm_sqr();
            }
        }
        s.sqrt().min(1.0)
    }
}

impl fmt::Debug for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, " : ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, "]")
    }
}

/// Free-function form of [`ProjPoint::normalize`].
pub fn normalize(raw: &[Complex64]) -> Result<ProjPoint> {
    ProjPoint::normalize(raw)
}

/// Free-function form of [`ProjPoint::chordal_distance`].
pub fn chordal_distance(p: &ProjPoint, q: &ProjPoint) -> Result<f64> {
    p.chordal_distance(q)
}

/// Draw a point from the normalized Fubini–Study volume of P^dim.
///
/// A standard complex Gaussian vector is uniform in direction on the unit
/// sphere of C^(dim+1); its projective class is Fubini–Study distributed.
pub fn sample_fubini_study<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ProjPoint {
    assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
    loop {
        let mut raw = [Complex64::new(0.0, 0.0); 3];
        for c in raw.iter_mut().take(dim + 1) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *c = Complex64::new(re, im);
        }
        if let Ok(p) = ProjPoint::normalize(&raw[..dim + 1]) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn normalize_examples() {
        let p = ProjPoint::normalize(&[c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(close(p.coords(), &[c(1.0, 0.0), c(0.0, 0.0)], 1e-15));

        let p = ProjPoint::normalize(&[c(0.0, 0.0), c(0.0, 3.0)]).unwrap();
        assert!(close(p.coords(), &[c(0.0, 0.0), c(1.0, 0.0)], 1e-15));

        let p = ProjPoint::normalize(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(p.coords(), &[c(h, 0.0), c(h, 0.0)], 1e-15));
    }

    #[test]
    fn normalize_rejects_zero_and_bad_length() {
        assert_eq!(
            ProjPoint::normalize(&[c(0.0, 0.0), c(0.0, 0.0)]),
            Err(EqdError::InvalidPoint)
        );
        assert!(ProjPoint::normalize(&[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let p = ProjPoint::normalize(&[c(0.0, 1.0), c(-1.0, 0.0)]).unwrap();
        assert_eq!(p.coords()[0].im, 0.0);
        assert!(p.coords()[0].re > 0.0);
    }

    #[test]
    fn same_point_same_coordinates() {
        let p = ProjPoint::normalize(&[c(1.0, 2.0), c(-0.5, 0.25), c(3.0, -1.0)]).unwrap();
        let scale = c(-0.3, 1.7);
        let raw: Vec<_> = p.coords().iter().map(|z| z * scale).collect();
        let q = ProjPoint::normalize(&raw).unwrap();
        assert!(close(p.coords(), q.coords(), 1e-12));
    }

    #[test]
    fn chordal_examples() {
        let e0 = ProjPoint::normalize(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let e1 = ProjPoint::normalize(&[c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let mid = ProjPoint::normalize(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(e0.chordal_distance(&e0).unwrap(), 0.0);
        assert!((e0.chordal_distance(&e1).unwrap() - 1.0).abs() < 1e-15);
        let expected = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e0.chordal_distance(&mid).unwrap() - expected).abs() < 1e-15);
        let p2 = ProjPoint::normalize(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(
            e0.chordal_distance(&p2),
            Err(EqdError::DimMismatch { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_fubini_study(&mut a, 2), sample_fubini_study(&mut b, 2));
        }
    }

    fn mean_abs_z0_sq(dim: usize, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_fubini_study(&mut rng, dim).coords()[0].norm_sqr())
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, (var / n as f64).sqrt())
    }

    #[test]
    fn fubini_study_moments() {
        let (m, se) = mean_abs_z0_sq(1, 100_000, 11);
        assert!((m - 0.5).abs() < 3.0 * se, "{m} ± {se}");
        let (m, se) = mean_abs_z0_sq(2, 100_000, 12);
        assert!((m - 1.0 / 3.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn fubini_study_unitary_invariance() {
        // |z0|^2 of U·x versus of fresh samples: a fixed unitary must not
        // change the distribution.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rotated: Vec<f64> = (0..4000)
            .map(|_| {
                let p = sample_fubini_study(&mut rng, 1);
                let z = p.coords();
                let u0 = (z[0] + z[1] * c(0.0, 1.0)) * h;
                let u1 = (z[0] * c(0.0, 1.0) + z[1]) * h;
                ProjPoint::normalize(&[u0, u1]).unwrap().coords()[0].norm_sqr()
            })
            .collect();
        let plain: Vec<f64> = (0..4000)
            .map(|_| sample_fubini_study(&mut rng, 1).coords()[0].norm_sqr())
            .collect();
        let (_, p) = crate::stats::ks::two_sample(&rotated, &plain);
        assert!(p > 0.001, "p = {p}");
    }

    fn point2() -> impl Strategy<Value = ProjPoint> {
        proptest::collection::vec(-10.0f64..10.0, 6).prop_filter_map("nonzero", |v| {
            ProjPoint::normalize(&[c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5])]).ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn normalize_is_idempotent(p in point2()) {
            let q = ProjPoint::normalize(p.coords()).unwrap();
            prop_assert!(close(p.coords(), q.coords(), 1e-14));
        }

        #[test]
        fn chordal_triangle_inequality(a in point2(), b in point2(), x in point2()) {
            let ab = a.chordal_distance(&b).unwrap();
            let ax = a.chordal_distance(&x).unwrap();
            let xb = x.chordal_distance(&b).unwrap();
            prop_assert!(ab <= ax + xb + 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - b.chordal_distance(&a).unwrap()).abs() < 1e-15);
        }
    }
}
