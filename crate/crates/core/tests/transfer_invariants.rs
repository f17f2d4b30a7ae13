use eqd_core::fibers::fiber;
use eqd_core::measure::{backward_orbit_sample, integrate};
use eqd_core::observables::{make_observable, Kind};
use eqd_core::projective::sample_fubini_study;
use eqd_core::transfer::{apply_pf, decompose};
use eqd_core::{DynMap, Observable, ProjPoint};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn map(s: &str) -> DynMap {
    s.parse().unwrap()
}

const MAPS: [&str; 4] = [
    "rational1d: num=[1,0,-2] den=[0,0,1]",
    "rational1d: num=[1,0,0.25j] den=[0,0,1]",
    "rational1d: num=[1,0,1,0] den=[0,2,0,1]",
    "product2d: p=[1,0,-1] q=[1,0,0.3]",
];

/// `Λφ` as an observable, so it can be integrated like any other.
fn lambda_of(m: &DynMap, phi: &Observable) -> Observable {
    let (m, phi) = (m.clone(), phi.clone());
    Observable::from_fn("pf", Kind::Composed, phi.sup_bound(), move |z| {
        apply_pf(&m, &phi, z).unwrap_or(f64::NAN)
    })
}

#[test]
fn pf_duality_against_mu() {
    let m = map(MAPS[1]);
    let a = ProjPoint::from_affine(&[C::new(0.37, 0.21)]).unwrap();
    let s = backward_orbit_sample(&m, &a, 40, 20_000, 21).unwrap();
    for spec in ["dist_to([0.5,1])", "bump([0.8j,1], 0.5)", "lip_of(pos, chordal_re(0,1))"] {
        let phi = make_observable(spec).unwrap();
        // paired difference Λφ - φ on the same samples
        let gap = integrate(&s, &lambda_of(&m, &phi).plus(&phi.scaled(-1.0))).unwrap();
        assert!(gap.mean.abs() < 3.0 * gap.stderr, "{spec}: {gap:?}");
    }
}

#[test]
fn pf_of_one_is_one_across_families() {
    let one = Observable::constant(1.0);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for spec in MAPS {
        let m = map(spec);
        for _ in 0..200 {
            let z = sample_fubini_study(&mut r, m.dim());
            assert!((apply_pf(&m, &one, &z).unwrap() - 1.0).abs() < 1e-12, "{spec}");
        }
    }
}

#[test]
fn decompose_is_linear() {
    let m = map(MAPS[0]);
    let phi = make_observable("dist_to([0.5,1])").unwrap();
    let psi = make_observable("bump([1.5,1], 0.5)").unwrap();
    let (nodes, seed) = (2_000, 17);
    let a = decompose(&m, &phi, 6, nodes, seed).unwrap();
    let b = decompose(&m, &psi, 6, nodes, seed).unwrap();
    let ab = decompose(&m, &phi.plus(&psi.scaled(2.0)), 6, nodes, seed).unwrap();
    // common random numbers make the estimator exactly linear up to rounding
    assert!((ab.c_phi - (a.c_phi + 2.0 * b.c_phi)).abs() < 1e-12);
    for n in 0..=6 {
        assert!((ab.c[n] - (a.c[n] + 2.0 * b.c[n])).abs() < 1e-12);
    }
    // and independent streams agree within Monte Carlo error
    let other = decompose(&m, &phi, 6, nodes, seed + 1).unwrap();
    let se = (a.c_phi_stderr.powi(2) + other.c_phi_stderr.powi(2)).sqrt();
    assert!((a.c_phi - other.c_phi).abs() < 4.0 * se);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pf_is_markov(re in -3.0f64..3.0, im in -3.0f64..3.0, pr in -2.0f64..2.0, pi in -2.0f64..2.0, which in 0usize..3) {
        let m = map(MAPS[which]);
        let phi = make_observable(&format!("dist_to([{pr}{pi:+}j,1])")).unwrap();
        let z = ProjPoint::from_affine(&[C::new(re, im)]).unwrap();
        let f = fiber(&m, &z).unwrap();
        let vals: Vec<f64> = f.points.iter().map(|p| phi.eval(&p.point)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = apply_pf(&m, &phi, &z).unwrap();
        prop_assert!(lo - 1e-12 <= l && l <= hi + 1e-12);
    }
}
