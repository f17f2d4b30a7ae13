//! Empirical approximations of the equilibrium measure: exact pullback trees,
//! backward-orbit Monte Carlo, and Fubini–Study reference samples.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::DynMap;
use crate::error::{EqdError, Result};
use crate::fibers::fiber;
use crate::observables::Observable;
use crate::projective::{sample_fubini_study, ProjPoint};
use crate::rng;
use crate::stats::batch::{batch_means, weighted_mean};

/// Largest pullback tree built exactly.
pub const TREE_LIMIT: f64 = 1e6;
/// Default length of backward walks.
pub const DEFAULT_BURN_IN: usize = 40;
/// A walk meeting this many collapsed fibers is counted as collapsed.
const COLLAPSE_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tree,
    Backward,
    FubiniStudy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Tree => "tree",
            Method::Backward => "backward",
            Method::FubiniStudy => "fubini_study",
        })
    }
}

impl FromStr for Method {
    type Err = EqdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Method::Tree),
            "backward" => Ok(Method::Backward),
            "fubini_study" => Ok(Method::FubiniStudy),
            other => Err(EqdError::Invalid(format!("unknown sampling method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// `DynMap::spec_hash` of the map, `-` for map-free samples.
    pub map_hash: String,
    pub method: Method,
    pub depth: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub count: usize,
}

/// Weighted atoms approximating a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<ProjPoint>,
    weights: Vec<f64>,
    uniform: bool,
    provenance: Provenance,
    /// Walks discarded because a fiber could not be computed.
    pub dropped: usize,
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Points where the integrand was `-∞` or undefined.
    pub dropped: usize,
}

impl SampleSet {
    fn new(points: Vec<ProjPoint>, weights: Option<Vec<f64>>, mut provenance: Provenance) -> Self {
        let n = points.len();
        provenance.count = n;
        let (weights, uniform) = match weights {
            Some(w) => {
                let uniform = w.iter().all(|x| *x == w[0]) && ((w[0] * n as f64) - 1.0).abs() < 1e-12;
                (w, uniform)
            }
            None => (vec![1.0 / n as f64; n], true),
        };
        SampleSet {
            points,
            weights,
            uniform,
            provenance,
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.dim())
    }

    pub fn points(&self) -> &[ProjPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Weights to use for exact (non-random) averages: atoms of a pullback
    /// tree or an explicitly weighted set. `None` for Monte Carlo samples.
    pub fn exact_weights(&self) -> Option<&[f64]> {
        (self.provenance.method == Method::Tree || !self.uniform).then_some(&self.weights[..])
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Write in the `EQD1` text format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let p = &self.provenance;
        writeln!(
            out,
            "EQD1 {} {} {} {} {} {}",
            self.dim(),
            self.len(),
            p.method,
            p.depth,
            p.seed,
            p.map_hash
        )?;
        for (pt, w) in self.points.iter().zip(&self.weights) {
            let mut line = if self.uniform {
                "*".to_string()
            } else {
                format!("{w:.16e}")
            };
            for c in pt.coords() {
                line.push_str(&format!(" {:.16e} {:.16e}", c.re, c.im));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    /// Read the `EQD1` text format.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| EqdError::Invalid("empty sample file".into()))??;
        let bad = |line: usize, msg: &str| EqdError::Parse {
            line,
            column: 1,
            message: msg.to_string(),
        };
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 7 || h[0] != "EQD1" {
            return Err(bad(1, "expected header 'EQD1 <dim> <count> <method> <depth> <seed> <maphash>'"));
        }
        let dim: usize = h[1].parse().map_err(|_| bad(1, "bad dimension"))?;
        let count: usize = h[2].parse().map_err(|_| bad(1, "bad count"))?;
        let method: Method = h[3].parse()?;
        let depth: usize = h[4].parse().map_err(|_| bad(1, "bad depth"))?;
        let seed: u64 = h[5].parse().map_err(|_| bad(1, "bad seed"))?;
        if !(1..=2).contains(&dim) {
            return Err(bad(1, "dimension must be 1 or 2"));
        }
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut any_weight = false;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 1 + 2 * (dim + 1) {
                return Err(bad(lineno, "wrong number of columns"));
            }
            let nums: std::result::Result<Vec<f64>, _> = tok[1..].iter().map(|t| t.parse::<f64>()).collect();
            let nums = nums.map_err(|_| bad(lineno, "bad number"))?;
            let coords: Vec<Complex64> = nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            points.push(ProjPoint::from_stored(&coords)?);
            if tok[0] == "*" {
                weights.push(f64::NAN);
            } else {
                any_weight = true;
                weights.push(tok[0].parse().map_err(|_| bad(lineno, "bad weight"))?);
            }
        }
        if points.len() != count {
            return Err(EqdError::Invalid(format!(
                "header announces {count} samples, file has {}",
                points.len()
            )));
        }
        let weights = if any_weight {
            if weights.iter().any(|w| !(*w > 0.0)) {
                return Err(EqdError::Invalid("weights must all be given and positive".into()));
            }
            Some(weights)
        } else {
            None
        };
        let provenance = Provenance {
            map_hash: h[6].to_string(),
            method,
            depth,
            burn_in: if method == Method::Backward { depth } else { 0 },
            seed,
            count,
        };
        Ok(SampleSet::new(points, weights, provenance))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Atoms of `d_t^{-n} (f^n)^* δ_a`, multiplicities included.
pub fn pullback_tree(map: &DynMap, a: &ProjPoint, n: usize) -> Result<SampleSet> {
    if a.dim() != map.dim() {
        return Err(EqdError::DimMismatch {
            expected: map.dim(),
            got: a.dim(),
        });
    }
    let dt = map.topological_degree() as f64;
    let leaves = dt.powi(n as i32);
    if leaves > TREE_LIMIT {
        return Err(EqdError::TreeTooLarge {
            leaves,
            limit: TREE_LIMIT,
        });
    }
    // each level remembers (parent, branch) so failures can report a path
    let mut parents: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    let mut level = vec![(*a, 1.0f64)];
    for depth in 0..n {
        let fibers: Vec<_> = level.par_iter().map(|(z, _)| fiber(map, z)).collect();
        let mut next = Vec::with_capacity(level.len() * map.topological_degree());
        let mut links = Vec::with_capacity(next.capacity());
        for (k, (fib, (_, w))) in fibers.into_iter().zip(&level).enumerate() {
            let fib = fib.map_err(|e| {
                let mut path = vec![];
                let mut node = k;
                for l in (0..depth).rev() {
                    let (p, b) = parents[l][node];
                    path.push(b);
                    node = p;
                }
                path.reverse();
                EqdError::Branch {
                    path,
                    source: Box::new(e),
                }
            })?;
            for (b, fp) in fib.points.iter().enumerate() {
                next.push((fp.point, w * fp.multiplicity as f64 / dt));
                links.push((k, b));
            }
        }
        parents.push(links);
        level = next;
    }
    let (points, weights): (Vec<_>, Vec<_>) = level.into_iter().unzip();
    Ok(SampleSet::new(
        points,
        Some(weights),
        Provenance {
            map_hash: map.spec_hash(),
            method: Method::Tree,
            depth: n,
            burn_in: 0,
            seed: 0,
            count: 0,
        },
    ))
}

enum Walk {
    Done(ProjPoint, bool),
    Failed,
}

fn walk(map: &DynMap, a: &ProjPoint, burn_in: usize, r: &mut rand_chacha::ChaCha8Rng) -> Result<Walk> {
    let mut x = *a;
    let mut collapsed = 0;
    for _ in 0..burn_in {
        match fiber(map, &x) {
            Ok(fib) => {
                if fib.is_collapsed() {
                    collapsed += 1;
                }
                x = fib.choose(r);
            }
            Err(e) if e.is_numerical() => return Ok(Walk::Failed),
            Err(e) => return Err(e),
        }
    }
    Ok(Walk::Done(x, collapsed >= COLLAPSE_STEPS))
}

/// `count` endpoints of independent random inverse-branch walks of length
/// `burn_in` started at `a`, with equal weights.
///
/// Walks whose fibers cannot be computed are dropped and counted.
pub fn backward_orbit_sample(
    map: &DynMap,
    a: &ProjPoint,
    burn_in: usize,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if a.dim() != map.dim() {
        return Err(EqdError::DimMismatch {
            expected: map.dim(),
            got: a.dim(),
        });
    }
    if count == 0 {
        return Err(EqdError::Invalid("sample count must be positive".into()));
    }
    let chunks = count.div_ceil(rng::CHUNK);
    let results: Vec<Result<Vec<Walk>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, rng::tag::BACKWARD, c as u64);
            let len = rng::CHUNK.min(count - c * rng::CHUNK);
            (0..len).map(|_| walk(map, a, burn_in, &mut r)).collect()
        })
        .collect();
    let mut points = Vec::with_capacity(count);
    let (mut collapsed, mut dropped) = (0, 0);
    for chunk in results {
        for w in chunk? {
            match w {
                Walk::Done(p, c) => {
                    collapsed += c as usize;
                    points.push(p);
                }
                Walk::Failed => dropped += 1,
            }
        }
    }
    if collapsed * 100 > count {
        return Err(EqdError::ExceptionalStart {
            collapsed,
            walks: count,
        });
    }
    if points.is_empty() {
        return Err(EqdError::Invalid("every backward walk failed".into()));
    }
    let mut s = SampleSet::new(
        points,
        None,
        Provenance {
            map_hash: map.spec_hash(),
            method: Method::Backward,
            depth: burn_in,
            burn_in,
            seed,
            count: 0,
        },
    );
    s.dropped = dropped;
    Ok(s)
}

/// `count` independent Fubini–Study points of P^dim.
pub fn fubini_study_sample(dim: usize, count: usize, seed: u64) -> SampleSet {
    let points = fubini_study_points(dim, count, seed, rng::tag::FUBINI_STUDY);
    SampleSet::new(
        points,
        None,
        Provenance {
            map_hash: "-".into(),
            method: Method::FubiniStudy,
            depth: 0,
            burn_in: 0,
            seed,
            count: 0,
        },
    )
}

pub(crate) fn fubini_study_points(dim: usize, count: usize, seed: u64, tag: u64) -> Vec<ProjPoint> {
    (0..count.div_ceil(rng::CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, tag, c as u64);
            let len = rng::CHUNK.min(count - c * rng::CHUNK);
            (0..len).map(move |_| sample_fubini_study(&mut r, dim)).collect::<Vec<_>>()
        })
        .collect()
}

/// Mean and standard error of an already evaluated integrand; non-finite
/// values are dropped and more than 1% of them is an error.
pub(crate) fn mean_of_values(values: &[f64], weights: Option<&[f64]>) -> Result<Estimate> {
    let total = values.len();
    let keep: Vec<usize> = (0..total).filter(|&i| values[i].is_finite()).collect();
    let dropped = total - keep.len();
    if dropped * 100 > total {
        return Err(EqdError::PolarMass { dropped, total });
    }
    let v: Vec<f64> = keep.iter().map(|&i| values[i]).collect();
    let (mean, stderr) = match weights {
        None => batch_means(&v),
        Some(w) => {
            let w: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
            (weighted_mean(&v, &w), 0.0)
        }
    };
    Ok(Estimate {
        mean,
        stderr,
        dropped,
    })
}

/// `⟨s, φ⟩`: batch-means error for equal-weight sets, none for trees.
pub fn integrate(s: &SampleSet, phi: &Observable) -> Result<Estimate> {
    phi.check_dim(s.dim())?;
    let values: Vec<f64> = s.points.par_iter().map(|p| phi.eval(p)).collect();
    mean_of_values(&values, s.exact_weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn square() -> DynMap {
        "rational1d: num=[1,0,0] den=[0,0,1]".parse().unwrap()
    }

    fn chebyshev() -> DynMap {
        "rational1d: num=[1,0,-2] den=[0,0,1]".parse().unwrap()
    }

    #[test]
    fn tree_depth_zero_and_one() {
        let a = ProjPoint::from_affine(&[c(1.0)]).unwrap();
        let t0 = pullback_tree(&square(), &a, 0).unwrap();
        assert_eq!(t0.len(), 1);
        assert_eq!(t0.weights(), &[1.0]);
        let t1 = pullback_tree(&square(), &a, 1).unwrap();
        let mut xs: Vec<f64> = t1.points().iter().map(|p| p.affine().unwrap()[0].re).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-14 && (xs[1] - 1.0).abs() < 1e-14);
        assert!(t1.is_uniform());
    }

    #[test]
    fn tree_roots_of_unity() {
        let a = ProjPoint::from_affine(&[c(1.0)]).unwrap();
        let t = pullback_tree(&square(), &a, 10).unwrap();
        assert_eq!(t.len(), 1024);
        assert!(t.weights().iter().all(|w| *w == 1.0 / 1024.0));
        let re = Observable::from_fn("re(z/|z|)", crate::observables::Kind::Smooth, Some(1.0), |p| {
            let z = p.affine().unwrap()[0];
            z.re / z.norm()
        });
        let e = integrate(&t, &re).unwrap();
        assert!(e.mean.abs() < 1e-12 && e.stderr == 0.0);
    }

    #[test]
    fn tree_guard() {
        let a = ProjPoint::from_affine(&[c(1.0)]).unwrap();
        assert!(matches!(
            pullback_tree(&square(), &a, 20),
            Err(EqdError::TreeTooLarge { .. })
        ));
    }

    #[test]
    fn backward_square_on_circle() {
        let a = ProjPoint::from_affine(&[c(2.0)]).unwrap();
        let s = backward_orbit_sample(&square(), &a, 40, 10_000, 11).unwrap();
        assert_eq!(s.len(), 10_000);
        let mut angles = Vec::new();
        for p in s.points() {
            let z = p.affine().unwrap()[0];
            assert!((z.norm() - 1.0).abs() < 1e-6);
            angles.push((z.arg() + std::f64::consts::PI) / (2.0 * std::f64::consts::PI));
        }
        let (_, pval) = ks::one_sample(&angles, |x| x.clamp(0.0, 1.0));
        assert!(pval > 0.01, "{pval}");
    }

    #[test]
    fn backward_chebyshev_arcsine() {
        let a = ProjPoint::from_affine(&[c(0.3)]).unwrap();
        let s = backward_orbit_sample(&chebyshev(), &a, 40, 10_000, 5).unwrap();
        let xs: Vec<f64> = s.points().iter().map(|p| p.affine().unwrap()[0].re).collect();
        for p in s.points() {
            assert!(p.affine().unwrap()[0].im.abs() < 1e-9);
        }
        let cdf = |x: f64| (-(x / 2.0).clamp(-1.0, 1.0)).acos() / std::f64::consts::PI;
        let (_, pval) = ks::one_sample(&xs, cdf);
        assert!(pval > 0.01, "{pval}");
        let x2 = Observable::from_fn("x^2", crate::observables::Kind::Smooth, None, |p| {
            p.affine().map_or(f64::NAN, |z| z[0].norm_sqr())
        });
        let e = integrate(&s, &x2).unwrap();
        assert!((e.mean - 2.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn exceptional_start_detected() {
        let zero = ProjPoint::from_affine(&[c(0.0)]).unwrap();
        assert!(matches!(
            backward_orbit_sample(&square(), &zero, 40, 500, 1),
            Err(EqdError::ExceptionalStart { .. })
        ));
    }

    #[test]
    fn seed_determinism() {
        let a = ProjPoint::from_affine(&[c(0.2)]).unwrap();
        let s1 = backward_orbit_sample(&chebyshev(), &a, 30, 1000, 9).unwrap();
        let s2 = backward_orbit_sample(&chebyshev(), &a, 30, 1000, 9).unwrap();
        assert_eq!(s1, s2);
        let s3 = backward_orbit_sample(&chebyshev(), &a, 30, 1000, 10).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn constant_integrates_exactly() {
        let s = fubini_study_sample(2, 500, 3);
        let e = integrate(&s, &Observable::constant(1.0)).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn polar_points_dropped() {
        let a = ProjPoint::from_affine(&[c(1.0)]).unwrap();
        let t = pullback_tree(&square(), &a, 2).unwrap();
        // qpsh_log(1,-1) has its pole at z = 1, one of the four atoms
        let q = crate::observables::make_observable("qpsh_log(1,-1)").unwrap();
        assert!(matches!(integrate(&t, &q), Err(EqdError::PolarMass { dropped: 1, total: 4 })));
    }

    #[test]
    fn file_roundtrip() {
        let a = ProjPoint::from_affine(&[c(1.0)]).unwrap();
        let p2: DynMap = "product2d: p=[1,0,0] q=[1,0,-1]".parse().unwrap();
        let b = ProjPoint::from_affine(&[c(0.5), c(0.25)]).unwrap();
        for s in [
            pullback_tree(&square(), &a, 3).unwrap(),
            backward_orbit_sample(&p2, &b, 20, 300, 4).unwrap(),
        ] {
            let mut buf = Vec::new();
            s.write_to(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("EQD1 "));
            let back = SampleSet::read_from(&buf[..]).unwrap();
            assert_eq!(back.provenance(), s.provenance());
            assert_eq!(back.is_uniform(), s.is_uniform());
            for (x, y) in back.points().iter().zip(s.points()) {
                assert!(x.chordal_distance(y).unwrap() < 1e-15);
            }
        }
        assert!(SampleSet::read_from(&b"EQD1 1 2 tree 0 0 x\n* 1 0 0 0\n"[..]).is_err());
    }
}
