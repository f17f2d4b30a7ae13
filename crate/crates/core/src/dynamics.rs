//! Map families on P¹ and P², forward evaluation, and degree data.
//!
//! Map specs follow a small grammar:
//!
//! ```text
//! rational1d: num=[c_d,...,c_0] den=[b_d,...,b_0]
//! product2d:  p=[...] q=[...]
//! skew2d:     p=[...] q=[[...],...]
//! monomial2d: A=[[a,b],[c,d]]
//! ```
//!
//! Coefficient lists run from the highest power down and complex numbers are
//! written `re+imj`. For `skew2d`, row `j` of `q` is a polynomial in `z`
//! (highest power first, degree at most `j`) multiplying `w^(d-j)`; row 0 is
//! the nonzero constant in front of `w^d`.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::error::{EqdError, Result};
use crate::grammar::{fmt_complex_list, Cursor};
use crate::projective::ProjPoint;

/// Chordal distance to the indeterminacy set below which evaluation fails.
pub const INDETERMINACY_TOL: f64 = 1e-10;
/// Relative tolerance on the resultant of a rational map.
pub const RESULTANT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapFamily {
    Rational1D,
    Product2D,
    Skew2D,
    Monomial2D,
}

/// Monomial term `coeff · z^a · w^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub a: usize,
    pub b: usize,
    pub coeff: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum MapData {
    /// Degree-`d` binary forms, coefficients of `z0^d .. z0^0` (highest first).
    Rational1D { num: Vec<Complex64>, den: Vec<Complex64> },
    /// One-variable polynomials of exact degree `d`, ascending powers.
    Product2D { p: Vec<Complex64>, q: Vec<Complex64> },
    Skew2D {
        p: Vec<Complex64>,
        q: Vec<Term>,
        rows: Vec<Vec<Complex64>>,
    },
    Monomial2D {
        a: [[i64; 2]; 2],
        det: i64,
        /// Integer vectors `adj(A)·m mod |det|` for coset representatives of Z²/A·Z².
        cosets: Vec<[i64; 2]>,
    },
}

/// A dominant rational or meromorphic self-map of P¹ or P². Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct DynMap {
    pub(crate) data: MapData,
    degree: usize,
}

/// Growth law of `δ_n = d_{k-1,n}`, always `base^n` for the supported families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaLaw {
    pub base: f64,
    /// False when `base^n` is only the leading-order growth (monomial maps).
    pub exact: bool,
}

impl DeltaLaw {
    pub fn delta(&self, n: u32) -> f64 {
        self.base.powi(n as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeReport {
    pub d_t: u64,
    /// Dynamical degrees `d_0 .. d_k`.
    pub d_list: Vec<f64>,
    pub delta: DeltaLaw,
    /// `d_t - d_{k-1}`.
    pub hypothesis_margin: f64,
}

impl DegreeReport {
    pub fn delta(&self, n: u32) -> f64 {
        self.delta.delta(n)
    }
}

fn c0() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn strip_leading_zeros(v: &[Complex64]) -> &[Complex64] {
    let first = v.iter().position(|c| c.norm() != 0.0).unwrap_or(v.len());
    &v[first..]
}

/// `p` given highest power first, returned ascending.
fn ascending(p: &[Complex64]) -> Vec<Complex64> {
    strip_leading_zeros(p).iter().rev().copied().collect()
}

fn sylvester_resultant(f: &[Complex64], g: &[Complex64]) -> Complex64 {
    let d = f.len() - 1;
    let e = g.len() - 1;
    let n = d + e;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for row in 0..e {
        for (k, c) in f.iter().enumerate() {
            m[(row, row + k)] = *c;
        }
    }
    for row in 0..d {
        for (k, c) in g.iter().enumerate() {
            m[(e + row, row + k)] = *c;
        }
    }
    m.determinant()
}

fn spectral_radius(a: &[[i64; 2]; 2]) -> f64 {
    let m = Matrix2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
    } else {
        det.abs().sqrt()
    }
}

impl DynMap {
    /// `z ↦ num(z)/den(z)` as a pair of degree-`d` binary forms.
    pub fn rational1d(num: &[Complex64], den: &[Complex64]) -> Result<Self> {
        let len = num.len().max(den.len());
        let pad = |v: &[Complex64]| {
            let mut out = vec![c0(); len - v.len()];
            out.extend_from_slice(v);
            out
        };
        let (mut num, mut den) = (pad(num), pad(den));
        while num.len() > 1 && num[0].norm() == 0.0 && den[0].norm() == 0.0 {
            num.remove(0);
            den.remove(0);
        }
        let d = num.len().saturating_sub(1);
        if d < 2 {
            return Err(EqdError::InvalidMap(format!(
                "rational map must have degree >= 2, got {d}"
            )));
        }
        let scale = num.iter().chain(&den).map(|c| c.norm()).fold(0.0, f64::max);
        let nf: Vec<Complex64> = num.iter().map(|c| c / scale).collect();
        let df: Vec<Complex64> = den.iter().map(|c| c / scale).collect();
        let res = sylvester_resultant(&nf, &df).norm();
        if !(res > RESULTANT_TOL) {
            return Err(EqdError::InvalidMap(format!(
                "numerator and denominator share a root (|resultant| = {res:.3e})"
            )));
        }
        Ok(DynMap {
            data: MapData::Rational1D { num, den },
            degree: d,
        })
    }

    /// Polynomial map `z ↦ p(z)` of degree `d ≥ 2`.
    pub fn polynomial1d(p: &[Complex64]) -> Result<Self> {
        let p = strip_leading_zeros(p);
        let mut den = vec![c0(); p.len()];
        if let Some(last) = den.last_mut() {
            *last = Complex64::new(1.0, 0.0);
        }
        Self::rational1d(p, &den)
    }

    /// `(z, w) ↦ (p(z), q(w))`, both of exact degree `d ≥ 2`.
    pub fn product2d(p: &[Complex64], q: &[Complex64]) -> Result<Self> {
        let p = ascending(p);
        let q = ascending(q);
        if p.len() != q.len() {
            return Err(EqdError::InvalidMap(
                "product map needs p and q of equal exact degree".into(),
            ));
        }
        let d = p.len().saturating_sub(1);
        if d < 2 {
            return Err(EqdError::InvalidMap(format!("degree must be >= 2, got {d}")));
        }
        Ok(DynMap {
            data: MapData::Product2D { p, q },
            degree: d,
        })
    }

    /// `(z, w) ↦ (p(z), q(z, w))`; see the module docs for the layout of `rows`.
    pub fn skew2d(p: &[Complex64], rows: &[Vec<Complex64>]) -> Result<Self> {
        let p = ascending(p);
        let d = p.len().saturating_sub(1);
        if d < 2 {
            return Err(EqdError::InvalidMap(format!("degree must be >= 2, got {d}")));
        }
        if rows.len() != d + 1 {
            return Err(EqdError::InvalidMap(format!(
                "q needs {} rows (powers w^{d} .. w^0), got {}",
                d + 1,
                rows.len()
            )));
        }
        let mut terms = Vec::new();
        for (j, row) in rows.iter().enumerate() {
            let row = strip_leading_zeros(row);
            if row.len() > j + 1 {
                return Err(EqdError::InvalidMap(format!(
                    "row {j} of q has z-degree {} > {j}: total degree would exceed {d}",
                    row.len() - 1
                )));
            }
            for (k, c) in row.iter().enumerate() {
                if c.norm() != 0.0 {
                    terms.push(Term {
                        a: row.len() - 1 - k,
                        b: d - j,
                        coeff: *c,
                    });
                }
            }
        }
        let lead_ok = strip_leading_zeros(&rows[0]).len() == 1;
        if !lead_ok {
            return Err(EqdError::InvalidMap(
                "coefficient of w^d in q must be a nonzero constant".into(),
            ));
        }
        let rows = rows.iter().map(|r| strip_leading_zeros(r).to_vec()).collect();
        Ok(DynMap {
            data: MapData::Skew2D {
                p,
                q: terms,
                rows,
            },
            degree: d,
        })
    }

    /// `(z1, z2) ↦ (z1^a11 z2^a12, z1^a21 z2^a22)` with `det A ≠ 0`.
    pub fn monomial2d(a: [[i64; 2]; 2]) -> Result<Self> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0 {
            return Err(EqdError::InvalidMap("exponent matrix is singular".into()));
        }
        let n = det.abs();
        if n > 10_000 {
            return Err(EqdError::InvalidMap(format!("|det A| = {n} too large")));
        }
        // adj(A)·m mod |det| identifies the coset of m in Z²/A·Z²
        let adj = [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]];
        let mut cosets: Vec<[i64; 2]> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        'scan: for m0 in 0..n {
            for m1 in 0..n {
                let key = [
                    (adj[0][0] * m0 + adj[0][1] * m1).rem_euclid(n),
                    (adj[1][0] * m0 + adj[1][1] * m1).rem_euclid(n),
                ];
                if seen.insert(key) {
                    cosets.push(key);
                    if cosets.len() == n as usize {
                        break 'scan;
                    }
                }
            }
        }
        Ok(DynMap {
            data: MapData::Monomial2D { a, det, cosets },
            degree: spectral_radius(&a).ceil() as usize,
        })
    }

    pub fn family(&self) -> MapFamily {
        match self.data {
            MapData::Rational1D { .. } => MapFamily::Rational1D,
            MapData::Product2D { .. } => MapFamily::Product2D,
            MapData::Skew2D { .. } => MapFamily::Skew2D,
            MapData::Monomial2D { .. } => MapFamily::Monomial2D,
        }
    }

    /// Dimension of the projective space acted on.
    pub fn dim(&self) -> usize {
        match self.family() {
            MapFamily::Rational1D => 1,
            _ => 2,
        }
    }

    /// Algebraic degree (for monomial maps, the ceiling of ρ(A)).
    pub fn algebraic_degree(&self) -> usize {
        self.degree
    }

    /// Number of preimages of a generic point.
    pub fn topological_degree(&self) -> usize {
        match &self.data {
            MapData::Rational1D { .. } => self.degree,
            MapData::Product2D { .. } | MapData::Skew2D { .. } => self.degree * self.degree,
            MapData::Monomial2D { det, .. } => det.unsigned_abs() as usize,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical spec.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    fn check_dim(&self, p: &ProjPoint) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(EqdError::DimMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        Ok(())
    }

    /// Whether `p` lies within [`INDETERMINACY_TOL`] of the indeterminacy set.
    pub fn near_indeterminacy(&self, p: &ProjPoint) -> bool {
        match self.data {
            MapData::Monomial2D { .. } => p.coords().iter().any(|c| c.norm() < INDETERMINACY_TOL),
            _ => false,
        }
    }

    /// Image of `p`, normalized.
    pub fn evaluate(&self, p: &ProjPoint) -> Result<ProjPoint> {
        self.check_dim(p)?;
        let z = p.coords();
        match &self.data {
            MapData::Rational1D { num, den } => {
                let image = [binary_form(num, z[0], z[1]), binary_form(den, z[0], z[1])];
                ProjPoint::normalize(&image)
            }
            MapData::Product2D { p: pp, q } => {
                let d = self.degree as i32;
                let image = [
                    homogenized(pp, z[0], z[2]),
                    homogenized(q, z[1], z[2]),
                    z[2].powi(d),
                ];
                ProjPoint::normalize(&image)
            }
            MapData::Skew2D { p: pp, q, .. } => {
                let d = self.degree;
                let image = [
                    homogenized(pp, z[0], z[2]),
                    eval_terms(q, d, z[0], z[1], z[2]),
                    z[2].powi(d as i32),
                ];
                ProjPoint::normalize(&image)
            }
            MapData::Monomial2D { a, .. } => {
                if self.near_indeterminacy(p) {
                    return Err(EqdError::IndeterminacyPoint { step: 0 });
                }
                let logs = [(z[0] / z[2]).ln(), (z[1] / z[2]).ln()];
                let image_log = [
                    logs[0] * a[0][0] as f64 + logs[1] * a[0][1] as f64,
                    logs[0] * a[1][0] as f64 + logs[1] * a[1][1] as f64,
                ];
                from_log_affine(image_log)
            }
        }
    }

    /// `n`-fold iterate; errors carry the index of the failing step.
    pub fn iterate(&self, p: &ProjPoint, n: usize) -> Result<ProjPoint> {
        let mut x = *p;
        for step in 0..n {
            x = self.evaluate(&x).map_err(|e| match e {
                EqdError::IndeterminacyPoint { .. } => EqdError::IndeterminacyPoint { step },
                other => other,
            })?;
        }
        Ok(x)
    }

    /// Closed-form degree data.
    pub fn degrees(&self) -> DegreeReport {
        let d_t = self.topological_degree() as u64;
        let (d_list, delta) = match &self.data {
            MapData::Rational1D { .. } => (
                vec![1.0, d_t as f64],
                DeltaLaw {
                    base: 1.0,
                    exact: true,
                },
            ),
            MapData::Product2D { .. } | MapData::Skew2D { .. } => {
                let d = self.degree as f64;
                (
                    vec![1.0, d, d_t as f64],
                    DeltaLaw {
                        base: d,
                        exact: true,
                    },
                )
            }
            MapData::Monomial2D { a, .. } => {
                let rho = spectral_radius(a);
                (
                    vec![1.0, rho, d_t as f64],
                    DeltaLaw {
                        base: rho,
                        exact: false,
                    },
                )
            }
        };
        let k = d_list.len() - 1;
        DegreeReport {
            d_t,
            hypothesis_margin: d_t as f64 - d_list[k - 1],
            d_list,
            delta,
        }
    }

    /// `(d_t > d_{k-1}, d_t - d_{k-1})`.
    pub fn check_hypothesis(&self) -> (bool, f64) {
        let margin = self.degrees().hypothesis_margin;
        (margin > 0.0, margin)
    }

    /// Error unless the map satisfies `d_t > d_{k-1}`.
    pub fn require_hypothesis(&self) -> Result<()> {
        match self.check_hypothesis() {
            (true, _) => Ok(()),
            (false, margin) => Err(EqdError::HypothesisViolated { margin }),
        }
    }
}

/// `sum_j c_j z0^(d-j) z1^j` for `c` listed from `z0^d` down.
pub(crate) fn binary_form(c: &[Complex64], z0: Complex64, z1: Complex64) -> Complex64 {
    let d = c.len() - 1;
    let mut z0_pows = vec![Complex64::new(1.0, 0.0); d + 1];
    let mut z1_pows = vec![Complex64::new(1.0, 0.0); d + 1];
    for i in 1..=d {
        z0_pows[i] = z0_pows[i - 1] * z0;
        z1_pows[i] = z1_pows[i - 1] * z1;
    }
    (0..=d).map(|i| c[i] * z0_pows[d - i] * z1_pows[i]).sum()
}

/// `t^d p(z/t)` for `p` in ascending powers.
pub(crate) fn homogenized(p: &[Complex64], z: Complex64, t: Complex64) -> Complex64 {
    let d = p.len() - 1;
    let mut zp = vec![Complex64::new(1.0, 0.0); d + 1];
    let mut tp = vec![Complex64::new(1.0, 0.0); d + 1];
    for i in 1..=d {
        zp[i] = zp[i - 1] * z;
        tp[i] = tp[i - 1] * t;
    }
    (0..=d).map(|i| p[i] * zp[i] * tp[d - i]).sum()
}

pub(crate) fn eval_terms(terms: &[Term], d: usize, z: Complex64, w: Complex64, t: Complex64) -> Complex64 {
    terms
        .iter()
        .map(|tm| tm.coeff * z.powi(tm.a as i32) * w.powi(tm.b as i32) * t.powi((d - tm.a - tm.b) as i32))
        .sum()
}

/// Point `[e^l0 : e^l1 : 1]` computed without overflow.
pub(crate) fn from_log_affine(l: [Complex64; 2]) -> Result<ProjPoint> {
    let top = l[0].re.max(l[1].re).max(0.0);
    let image = [
        Complex64::from_polar((l[0].re - top).exp(), l[0].im),
        Complex64::from_polar((l[1].re - top).exp(), l[1].im),
        Complex64::new((-top).exp(), 0.0),
    ];
    ProjPoint::normalize(&image)
}

type MonomialData<'a> = (&'a [[i64; 2]; 2], i64, &'a [[i64; 2]]);

/// Exponent matrix, determinant and coset keys of a monomial map.
pub(crate) fn monomial_data(map: &DynMap) -> Option<MonomialData<'_>> {
    match &map.data {
        MapData::Monomial2D { a, det, cosets } => Some((a, *det, cosets)),
        _ => None,
    }
}

impl fmt::Display for DynMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let desc = |p: &[Complex64]| -> Vec<Complex64> { p.iter().rev().copied().collect() };
        match &self.data {
            MapData::Rational1D { num, den } => write!(
                f,
                "rational1d: num={} den={}",
                fmt_complex_list(num),
                fmt_complex_list(den)
            ),
            MapData::Product2D { p, q } => write!(
                f,
                "product2d: p={} q={}",
                fmt_complex_list(&desc(p)),
                fmt_complex_list(&desc(q))
            ),
            MapData::Skew2D { p, rows, .. } => {
                let zero = [c0()];
                let rows: Vec<String> = rows
                    .iter()
                    .map(|r| fmt_complex_list(if r.is_empty() { &zero } else { r }))
                    .collect();
                write!(
                    f,
                    "skew2d: p={} q=[{}]",
                    fmt_complex_list(&desc(p)),
                    rows.join(",")
                )
            }
            MapData::Monomial2D { a, .. } => write!(
                f,
                "monomial2d: A=[[{},{}],[{},{}]]",
                a[0][0], a[0][1], a[1][0], a[1][1]
            ),
        }
    }
}

impl FromStr for DynMap {
    type Err = EqdError;

    fn from_str(s: &str) -> Result<Self> {
        let mut cur = Cursor::new(s);
        let family_pos = {
            cur.skip_ws();
            cur.pos()
        };
        let family = cur.ident()?;
        cur.expect(':')?;
        let mut lists = std::collections::HashMap::new();
        let mut matrices = std::collections::HashMap::new();
        while !cur.at_end() {
            let key = cur.ident()?.to_string();
            cur.expect('=')?;
            cur.skip_ws();
            // a second '[' before any value means a matrix
            let after = s[cur.pos()..].trim_start_matches('[');
            let depth = s[cur.pos()..].len() - after.len();
            let nested = depth >= 2 || (depth == 1 && after.trim_start().starts_with('['));
            if nested {
                matrices.insert(key, cur.complex_matrix()?);
            } else {
                lists.insert(key, cur.complex_list()?);
            }
        }
        let (mut get_list, mut get_mat) = (lists, matrices);
        let missing = |name: &str| EqdError::parse_at(s, s.len(), format!("missing field '{name}'"));
        let built = match family {
            "rational1d" => {
                let num = get_list.remove("num").ok_or_else(|| missing("num"))?;
                let den = get_list.remove("den").ok_or_else(|| missing("den"))?;
                DynMap::rational1d(&num, &den)
            }
            "product2d" => {
                let p = get_list.remove("p").ok_or_else(|| missing("p"))?;
                let q = get_list.remove("q").ok_or_else(|| missing("q"))?;
                DynMap::product2d(&p, &q)
            }
            "skew2d" => {
                let p = get_list.remove("p").ok_or_else(|| missing("p"))?;
                let q = get_mat.remove("q").ok_or_else(|| missing("q"))?;
                DynMap::skew2d(&p, &q)
            }
            "monomial2d" => {
                let m = get_mat.remove("A").ok_or_else(|| missing("A"))?;
                if m.len() != 2 || m.iter().any(|r| r.len() != 2) {
                    return Err(EqdError::parse_at(s, s.len(), "A must be 2x2"));
                }
                let mut a = [[0i64; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let v = m[i][j];
                        if v.im != 0.0 || v.re.fract() != 0.0 {
                            return Err(EqdError::parse_at(s, s.len(), "A must have integer entries"));
                        }
                        a[i][j] = v.re as i64;
                    }
                }
                DynMap::monomial2d(a)
            }
            other => {
                return Err(EqdError::parse_at(
                    s,
                    family_pos,
                    format!("unknown map family '{other}'"),
                ))
            }
        };
        if let Some(key) = get_list.keys().chain(get_mat.keys()).next() {
            return Err(EqdError::parse_at(s, s.len(), format!("unexpected field '{key}'")));
        }
        built
    }
}
