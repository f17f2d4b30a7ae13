//! Test functions on P¹ and P².
//!
//! Observables are built from a textual spec:
//!
//! ```text
//! const(c)                      chordal_re(i,j)          dist_to([..])
//! bump([..], r)                 qpsh_log(a0,a1[,a2])     loglog(a0,a1[,a2]; M)
//! lip_of(clip(lo,hi)|abs|pos, <spec>)
//! sum(<spec>, <spec>)           scale(c, <spec>)
//! cos_arg(k)                    dsh(a0,a1[,a2]; b0,b1[,b2]; M)
//! ```
//!
//! All formulas are evaluated on the unit representative of a point.
//! `cos_arg(k)` is `cos(k·arg(z_0 / z_last))`; `dsh(a; b; M)` is the bounded
//! difference `max(qpsh_log(a), -M) - max(qpsh_log(b), -M)`.

pub mod norms;
mod parse;

use num_complex::Complex64;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{EqdError, Result};
use crate::projective::ProjPoint;

pub use norms::{
    lipschitz_estimate, poincare_sobolev_check, star_norm_p1, LipschitzEstimate, PoincareReport,
    SphereGrid, StarNorm,
};

/// Regularity class of an observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Lipschitz,
    Smooth,
    QpshLog,
    DshDiff,
    Composed,
}

/// Lipschitz post-composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chi {
    Clip(f64, f64),
    Abs,
    Pos,
}

impl Chi {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Chi::Clip(lo, hi) => x.clamp(lo, hi),
            Chi::Abs => x.abs(),
            Chi::Pos => x.max(0.0),
        }
    }

    /// `‖χ‖_Lip`.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }
}

type Custom = Arc<dyn Fn(&ProjPoint) -> f64 + Send + Sync>;

#[derive(Clone)]
pub(crate) enum Expr {
    Const(f64),
    ChordalRe(usize, usize),
    CosArg(i32),
    DistTo(ProjPoint),
    Bump(ProjPoint, f64),
    QpshLog(Vec<Complex64>),
    LogLog(Vec<Complex64>, f64),
    Dsh(Vec<Complex64>, Vec<Complex64>, f64),
    LipOf(Chi, Box<Expr>),
    Sum(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Custom { f: Custom, kind: Kind, sup: Option<f64> },
}

fn linear_form(l: &[Complex64], z: &[Complex64]) -> Complex64 {
    l.iter().zip(z).map(|(a, b)| a * b).sum()
}

fn qpsh(l: &[Complex64], z: &[Complex64]) -> f64 {
    linear_form(l, z).norm().ln()
}

impl Expr {
    fn eval(&self, p: &ProjPoint) -> f64 {
        let z = p.coords();
        match self {
            Expr::Const(c) => *c,
            Expr::ChordalRe(i, j) => 2.0 * (z[*i] * z[*j].conj()).re,
            Expr::CosArg(k) => {
                let last = z[z.len() - 1];
                (*k as f64 * (z[0] * last.conj()).arg()).cos()
            }
            Expr::DistTo(q) => p.chordal_unchecked(q),
            Expr::Bump(q, r) => {
                let t = p.chordal_unchecked(q) / r;
                if t >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            }
            Expr::QpshLog(l) => qpsh(l, z),
            Expr::LogLog(l, m) => -(-(qpsh(l, z) - m).min(-1.0)).ln(),
            Expr::Dsh(a, b, m) => qpsh(a, z).max(-m) - qpsh(b, z).max(-m),
            Expr::LipOf(chi, inner) => chi.apply(inner.eval(p)),
            Expr::Sum(a, b) => a.eval(p) + b.eval(p),
            Expr::Scale(c, a) => c * a.eval(p),
            Expr::Custom { f, .. } => f(p),
        }
    }

    fn kind(&self) -> Kind {
        match self {
            Expr::Const(_) | Expr::ChordalRe(..) | Expr::Bump(..) => Kind::Smooth,
            Expr::DistTo(_) | Expr::CosArg(_) => Kind::Lipschitz,
            Expr::QpshLog(_) => Kind::QpshLog,
            Expr::Dsh(..) => Kind::DshDiff,
            Expr::Scale(_, a) => a.kind(),
            Expr::Custom { kind, .. } => *kind,
            Expr::LogLog(..) | Expr::LipOf(..) | Expr::Sum(..) => Kind::Composed,
        }
    }

    /// Dimension forced by the expression, if any.
    fn dim(&self) -> Option<usize> {
        match self {
            Expr::DistTo(q) | Expr::Bump(q, _) => Some(q.dim()),
            Expr::QpshLog(l) | Expr::LogLog(l, _) | Expr::Dsh(l, _, _) => Some(l.len() - 1),
            Expr::LipOf(_, a) | Expr::Scale(_, a) => a.dim(),
            Expr::Sum(a, b) => a.dim().or(b.dim()),
            _ => None,
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let bad = |expected: usize| Err(EqdError::DimMismatch { expected, got: dim });
        match self {
            Expr::ChordalRe(i, j) if (*i).max(*j) > dim => {
                Err(EqdError::Invalid(format!("chordal_re({i},{j}) needs dimension >= {}", i.max(j))))
            }
            Expr::DistTo(q) | Expr::Bump(q, _) if q.dim() != dim => bad(q.dim()),
            Expr::QpshLog(l) | Expr::LogLog(l, _) if l.len() != dim + 1 => bad(l.len() - 1),
            Expr::Dsh(a, b, _) if a.len() != dim + 1 || b.len() != dim + 1 => bad(a.len() - 1),
            Expr::LipOf(_, a) | Expr::Scale(_, a) => a.check_dim(dim),
            Expr::Sum(a, b) => {
                a.check_dim(dim)?;
                b.check_dim(dim)
            }
            _ => Ok(()),
        }
    }

    /// Analytic bound on `sup |φ|`, `None` when unbounded.
    fn sup_bound(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(c.abs()),
            Expr::ChordalRe(..) | Expr::CosArg(_) | Expr::DistTo(_) | Expr::Bump(..) => Some(1.0),
            Expr::QpshLog(_) | Expr::LogLog(..) => None,
            Expr::Dsh(a, b, m) => {
                let top = |l: &[Complex64]| l.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().ln();
                Some(top(a).abs().max(top(b).abs()) + m.abs())
            }
            Expr::LipOf(Chi::Clip(lo, hi), _) => Some(lo.abs().max(hi.abs())),
            Expr::LipOf(_, a) => a.sup_bound(),
            Expr::Sum(a, b) => Some(a.sup_bound()? + b.sup_bound()?),
            Expr::Scale(c, a) => Some(c.abs() * a.sup_bound()?),
            Expr::Custom { sup, .. } => *sup,
        }
    }

    /// True when the expression is unbounded below near a pole.
    pub(crate) fn unbounded(&self) -> bool {
        match self {
            Expr::QpshLog(_) | Expr::LogLog(..) => true,
            Expr::LipOf(Chi::Clip(..), _) => false,
            Expr::LipOf(_, a) | Expr::Scale(_, a) => a.unbounded(),
            Expr::Sum(a, b) => a.unbounded() || b.unbounded(),
            Expr::Custom { kind, .. } => *kind == Kind::QpshLog,
            _ => false,
        }
    }

    /// Chordal distance to the nearest pole (the zero set of a linear form).
    fn pole_distance(&self, p: &ProjPoint) -> f64 {
        let z = p.coords();
        let dist = |l: &[Complex64]| {
            linear_form(l, z).norm() / l.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
        };
        match self {
            Expr::QpshLog(l) | Expr::LogLog(l, _) => dist(l),
            Expr::LipOf(_, a) | Expr::Scale(_, a) => a.pole_distance(p),
            Expr::Sum(a, b) => a.pole_distance(p).min(b.pole_distance(p)),
            _ => f64::INFINITY,
        }
    }
}

/// Cached norm estimates attached to an observable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormCache {
    pub lip_est: Option<f64>,
    pub star_est: Option<f64>,
    pub mean_est: Option<f64>,
}

/// A real-valued test function, possibly `-∞` on a pole set.
#[derive(Clone)]
pub struct Observable {
    pub(crate) expr: Expr,
    spec: String,
    pub norms: NormCache,
}

impl Observable {
    pub(crate) fn from_expr(expr: Expr, spec: String) -> Self {
        Observable {
            expr,
            spec,
            norms: NormCache::default(),
        }
    }

    /// Parse an observable spec.
    pub fn parse(spec: &str) -> Result<Self> {
        let expr = parse::parse(spec)?;
        Ok(Self::from_expr(expr, spec.trim().to_string()))
    }

    /// Wrap a closure; `sup` is an optional bound on `|f|`.
    pub fn from_fn<F>(name: &str, kind: Kind, sup: Option<f64>, f: F) -> Self
    where
        F: Fn(&ProjPoint) -> f64 + Send + Sync + 'static,
    {
        Self::from_expr(
            Expr::Custom {
                f: Arc::new(f),
                kind,
                sup,
            },
            name.to_string(),
        )
    }

    pub fn constant(c: f64) -> Self {
        Self::from_expr(Expr::Const(c), format!("const({c})"))
    }

    pub fn eval(&self, p: &ProjPoint) -> f64 {
        self.expr.eval(p)
    }

    pub fn kind(&self) -> Kind {
        self.expr.kind()
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn dim(&self) -> Option<usize> {
        self.expr.dim()
    }

    /// Error unless the observable can be evaluated on points of P^dim.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        self.expr.check_dim(dim)
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.expr.sup_bound()
    }

    pub fn pole_distance(&self, p: &ProjPoint) -> f64 {
        self.expr.pole_distance(p)
    }

    /// `c · self`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_expr(
            Expr::Scale(c, Box::new(self.expr.clone())),
            format!("scale({c}, {})", self.spec),
        )
    }

    /// `self + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self::from_expr(
            Expr::Sum(Box::new(self.expr.clone()), Box::new(Expr::Const(c))),
            format!("sum({}, const({c}))", self.spec),
        )
    }

    pub fn plus(&self, other: &Observable) -> Self {
        Self::from_expr(
            Expr::Sum(Box::new(self.expr.clone()), Box::new(other.expr.clone())),
            format!("sum({}, {})", self.spec, other.spec),
        )
    }

    /// `χ ∘ self`.
    pub fn post_compose(&self, chi: Chi) -> Self {
        let name = match chi {
            Chi::Clip(lo, hi) => format!("clip({lo},{hi})"),
            Chi::Abs => "abs".into(),
            Chi::Pos => "pos".into(),
        };
        Self::from_expr(
            Expr::LipOf(chi, Box::new(self.expr.clone())),
            format!("lip_of({name}, {})", self.spec),
        )
    }

    /// `self ∘ f`, evaluated as `NaN` where `f` is undefined.
    pub fn compose_map(&self, map: &crate::dynamics::DynMap) -> Self {
        let inner = self.clone();
        let map = map.clone();
        let kind = Kind::Composed;
        let sup = self.sup_bound();
        Self::from_fn(&format!("({}) o f", self.spec), kind, sup, move |p| {
            map.evaluate(p).map_or(f64::NAN, |q| inner.eval(&q))
        })
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.spec)
    }
}

impl FromStr for Observable {
    type Err = EqdError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Free-function form of [`Observable::parse`].
pub fn make_observable(spec: &str) -> Result<Observable> {
    Observable::parse(spec)
}
