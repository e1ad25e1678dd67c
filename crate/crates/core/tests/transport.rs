use std::sync::Arc;

use eitlab::dn_backends::{dn_fem_extrapolated, make_one_holed_torus_mesh};
use eitlab::holomorphic_structure::{
    complete_trace, dn_distance, projections_for, random_probes, transport_immersion, TraceTuple, TAU_RANK,
};
use eitlab::SobolevIndex;

#[test]
fn torus_immersion_survives_a_metric_perturbation() {
    let n = 64;
    let lam = Arc::new(dn_fem_extrapolated(make_one_holed_torus_mesh, None, 24, n).unwrap());
    let rho = |p: &[f64; 3]| (0.05 * (p[0] + 0.5 * p[1])).exp();
    let lam2 = dn_fem_extrapolated(make_one_holed_torus_mesh, Some(&rho), 24, n).unwrap();
    let (est, pp) = projections_for(&lam, TAU_RANK, 1).unwrap();
    let (est2, pp2) = projections_for(&lam2, TAU_RANK, 1).unwrap();
    assert_eq!((est.kappa, est2.kappa), (2, 2));

    let traces = random_probes(n, lam.length(), 2, 6, 5)
        .unwrap()
        .iter()
        .map(|f| complete_trace(f, 0.0, &lam, &pp).unwrap())
        .collect();
    let e = TraceTuple::certify(traces, lam.clone(), pp.cert_tol()).unwrap();
    let e2 = transport_immersion(&e, &lam2, &pp2).unwrap();
    assert!(Arc::ptr_eq(&e.source_dn, &lam));
    assert_eq!(e2.len(), 2);

    // transported traces stay holomorphic on the new surface and move by O(t)
    let t = dn_distance(&lam, &lam2).unwrap();
    assert!(t > 0.0);
    let again = TraceTuple::certify(e2.traces.clone(), Arc::new(lam2.clone()), pp2.cert_tol());
    assert!(again.is_ok());
    for (a, b) in e.traces.iter().zip(&e2.traces) {
        let moved = b.sub(a).unwrap().sobolev_norm(SobolevIndex(1.0));
        assert!(moved < 50.0 * t * a.sobolev_norm(SobolevIndex(3.0)), "{moved} {t}");
    }
}
