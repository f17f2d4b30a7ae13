use eqd_core::observables::norms::star_norm_on;
use eqd_core::observables::{lipschitz_estimate, make_observable, poincare_sobolev_check, SphereGrid};
use eqd_core::Observable;

const PANEL: [&str; 6] = [
    "dist_to([0.5,1])",
    "chordal_re(0,1)",
    "sum(chordal_re(0,1), const(-0.3))",
    "bump([0.2+0.1j,1], 0.7)",
    "sum(dist_to([1j,1]), scale(-0.8, dist_to([-1,1])))",
    "scale(2, sum(chordal_re(0,1), const(0.5)))",
];

#[test]
fn truncations_stay_in_the_sobolev_class() {
    let grid = SphereGrid::new(20_000);
    for spec in PANEL {
        let phi = make_observable(spec).unwrap();
        let base = star_norm_on(&phi, &grid).unwrap().value;
        for chi in ["pos", "abs"] {
            let t = make_observable(&format!("lip_of({chi}, {spec})")).unwrap();
            let v = star_norm_on(&t, &grid).unwrap().value;
            assert!(v <= 3.0 * base, "{chi} of {spec}: {v} vs {base}");
        }
    }
}

#[test]
fn lipschitz_constant_of_composition() {
    for spec in PANEL {
        let phi = make_observable(spec).unwrap();
        let lip = lipschitz_estimate(&phi, 1, 4_000, 3).value;
        for (chi, k) in [("pos", 1.0), ("abs", 1.0), ("clip(-0.1,0.2)", 1.0)] {
            let t = make_observable(&format!("lip_of({chi}, {spec})")).unwrap();
            let l = lipschitz_estimate(&t, 1, 4_000, 3).value;
            assert!(l <= k * lip * 1.05, "{chi} of {spec}: {l} vs {lip}");
        }
        let scaled = lipschitz_estimate(&phi.scaled(-2.5), 1, 4_000, 3).value;
        assert!((scaled - 2.5 * lip).abs() <= 0.05 * 2.5 * lip);
    }
}

#[test]
fn star_norm_dominates_l2() {
    let phis: Vec<Observable> = PANEL.iter().map(|s| make_observable(s).unwrap()).collect();
    let grid_n = 20_000;
    let report = poincare_sobolev_check(&phis, grid_n).unwrap();
    assert!(report.skipped.is_empty());
    let c = report.max_ratio_l2;
    // x on the sphere: ‖x‖_2 = 1/√3 over the normalized area and ‖dx‖ = √(4π/3)
    assert!(c > 0.0 && c < 1.0, "{c}");
    let grid = SphereGrid::new(grid_n);
    for (phi, e) in phis.iter().zip(&report.entries) {
        let star = star_norm_on(phi, &grid).unwrap().value;
        assert!(e.l2 <= (1.0 + c) * star, "{}: {} vs {}", e.spec, e.l2, star);
    }
}
