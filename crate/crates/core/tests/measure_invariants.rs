use std::f64::consts::PI;

use eqd_core::measure::{backward_orbit_sample, fubini_study_sample, integrate, pullback_tree};
use eqd_core::observables::make_observable;
use eqd_core::{DynMap, ProjPoint, SampleSet};
use num_complex::Complex64 as C;

fn map(s: &str) -> DynMap {
    s.parse().unwrap()
}

fn start() -> ProjPoint {
    ProjPoint::from_affine(&[C::new(0.37, 0.21)]).unwrap()
}

const CHEBYSHEV: &str = "rational1d: num=[1,0,-2] den=[0,0,1]";

const PANEL: [&str; 5] = [
    "dist_to([0.5,1])",
    "dist_to([-1+0.2j,1])",
    "chordal_re(0,1)",
    "bump([1.2,1], 0.4)",
    "lip_of(abs, dist_to([0.1j,1]))",
];

#[test]
fn pushforward_invariance_on_chebyshev() {
    let m = map(CHEBYSHEV);
    let s = backward_orbit_sample(&m, &start(), 40, 20_000, 31).unwrap();
    for spec in PANEL {
        let psi = make_observable(spec).unwrap();
        // paired difference ψ∘f - ψ on the same samples
        let gap = integrate(&s, &psi.compose_map(&m).plus(&psi.scaled(-1.0))).unwrap();
        assert!(gap.mean.abs() < 3.0 * gap.stderr.max(1e-12), "{spec}: {gap:?}");
    }
}

#[test]
fn tree_and_backward_sampling_agree() {
    let m = map(CHEBYSHEV);
    let tree = pullback_tree(&m, &start(), 10).unwrap();
    let mc = backward_orbit_sample(&m, &start(), 40, 20_000, 32).unwrap();
    for spec in PANEL {
        let phi = make_observable(spec).unwrap();
        let a = integrate(&tree, &phi).unwrap();
        let b = integrate(&mc, &phi).unwrap();
        assert_eq!(a.stderr, 0.0);
        assert!((a.mean - b.mean).abs() < 3.0 * b.stderr, "{spec}: {} vs {}", a.mean, b.mean);
    }
}

/// `⟨Haar, ψ⟩` on the torus `|z0| = |z1| = |z2|`, the equilibrium measure
/// of a monomial map, by the midpoint rule.
fn haar_mean(spec: &str) -> f64 {
    let psi = make_observable(spec).unwrap();
    let k = 300;
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let a = 2.0 * PI * (i as f64 + 0.5) / k as f64;
            let b = 2.0 * PI * (j as f64 + 0.5) / k as f64;
            let p = ProjPoint::normalize(&[C::from_polar(1.0, a), C::from_polar(1.0, b), C::new(1.0, 0.0)]).unwrap();
            sum += psi.eval(&p);
        }
    }
    sum / (k * k) as f64
}

#[test]
fn monomial_backward_samples_match_haar_and_errors_are_calibrated() {
    let m = map("monomial2d: A=[[3,1],[1,2]]");
    let a = ProjPoint::normalize(&[C::new(0.6, 0.3), C::new(-0.2, 0.7), C::new(1.0, 0.0)]).unwrap();
    let spec = "dist_to([0.5,0.5j,1])";
    let exact = haar_mean(spec);
    let psi = make_observable(spec).unwrap();
    let z: Vec<f64> = (0..24)
        .map(|seed| {
            let s = backward_orbit_sample(&m, &a, 40, 4_000, 500 + seed).unwrap();
            let e = integrate(&s, &psi).unwrap();
            (e.mean - exact) / e.stderr
        })
        .collect();
    let rms = (z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64).sqrt();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    // 24 standard normals: rms within [0.6, 1.45] and mean within 4/sqrt(24)
    assert!((0.6..1.45).contains(&rms), "rms z = {rms}");
    assert!(mean.abs() < 0.82, "mean z = {mean}");
}

fn same(a: &SampleSet, b: &SampleSet) -> bool {
    let bits = |s: &SampleSet| -> Vec<u64> {
        s.points()
            .iter()
            .flat_map(|p| p.coords().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]))
            .collect()
    };
    bits(a) == bits(b) && a.weights() == b.weights() && a.provenance() == b.provenance()
}

#[test]
fn samples_do_not_depend_on_worker_count() {
    let m = map("rational1d: num=[1,0,0.25j] den=[0,0,1]");
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                backward_orbit_sample(&m, &start(), 40, 3_000, 9).unwrap(),
                fubini_study_sample(2, 1_000, 9),
                pullback_tree(&m, &start(), 8).unwrap(),
            )
        })
    };
    let (a1, b1, c1) = run(1);
    let (a5, b5, c5) = run(5);
    assert!(same(&a1, &a5));
    assert!(same(&b1, &b5));
    assert!(same(&c1, &c5));
}

#[test]
fn saved_samples_reload_bit_for_bit() {
    let m = map(CHEBYSHEV);
    let s = backward_orbit_sample(&m, &start(), 40, 500, 3).unwrap();
    let t = pullback_tree(&m, &start(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, set) in [("b.eqd", &s), ("t.eqd", &t)] {
        let path = dir.path().join(name);
        set.save(&path).unwrap();
        assert!(same(set, &SampleSet::load(&path).unwrap()));
    }
}
