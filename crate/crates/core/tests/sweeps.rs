use std::f64::consts::TAU;
use std::fs;

use eitlab::dn_backends::{dn_conformal, dn_disk};
use eitlab::experiments::{
    emit_outputs, loglog_slope, run_sweep, sweep_csv, ExperimentConfig, ExperimentError, FamilyKind,
    NearBoundaryConfig, PerturbationFamily, SurfaceConfig, SweepOutcome, SWEEP_HEADER,
};
use eitlab::holomorphic_structure::dn_distance;
use num_complex::Complex64;

fn config(base: SurfaceConfig, kind: FamilyKind, params: Vec<f64>, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        base_surface: base,
        perturbation_family: PerturbationFamily { kind, parameter_list: params, degree: 2 },
        immersion: "z,z2".into(),
        n_modes: n,
        epsilon: 0.2,
        grid_resolution: 24,
        seed: 4,
        output_dir: None,
        tau_rank: 1e-3,
        near_boundary: NearBoundaryConfig { n_anchors: 8, depth: 0.05, n_depths: 3 },
    }
}

fn t_of(degree: usize, s: f64) -> f64 {
    let base = dn_disk(64, TAU).unwrap();
    let mut c = vec![Complex64::new(0.0, 0.0); degree - 1];
    c[degree - 2] = Complex64::new(s, 0.0);
    dn_distance(&base, &dn_conformal(&c, 64, true).unwrap().op).unwrap()
}

#[test]
fn dn_distance_scaling_by_degree() {
    // the quadratic coefficient only enters the rescaled DN map at second order
    let params = [0.08, 0.04, 0.02, 0.01];
    let quad: Vec<(f64, f64)> = params.iter().map(|&s| (s, t_of(2, s))).collect();
    let cubic: Vec<(f64, f64)> = params.iter().map(|&s| (s, t_of(3, s))).collect();
    let q = loglog_slope(&quad).unwrap();
    let c = loglog_slope(&cubic).unwrap();
    assert!((q - 2.0).abs() < 0.1, "{q}");
    assert!((c - 1.0).abs() < 0.15, "{c}");
}

fn small_sweep() -> SweepOutcome {
    let cfg = config(SurfaceConfig::AnalyticDisk, FamilyKind::ConformalPolynomial, vec![0.04, 0.02, 0.0], 64);
    run_sweep(&cfg, |_| {}).unwrap()
}

#[test]
fn sweep_records_and_invariants() {
    let out = small_sweep();
    assert_eq!(out.records.len(), 3);
    for r in &out.records {
        assert!(r.valid, "{:?}", r.reason);
        assert!(r.d_h_full >= r.d_h_interior - 2.0 * r.fill_distance);
        if r.t > 0.0 {
            let ratio = r.t_alt / r.t;
            assert!((1.0 / 50.0..=50.0).contains(&ratio));
        }
    }
    let last = out.records.last().unwrap();
    assert_eq!(last.t, 0.0);
    assert!(last.transport_ratio.is_none());
    let summary = out.summary.unwrap();
    assert_eq!(summary.n_valid, 3);
    assert!(summary.slope_d_h_interior_vs_t.is_some());
}

#[test]
fn outputs_are_complete_and_deterministic() {
    let root = std::env::temp_dir().join(format!("eitlab-sweep-{}", std::process::id()));
    let (a, b) = (root.join("a"), root.join("b"));
    emit_outputs(&small_sweep(), &a).unwrap();
    emit_outputs(&small_sweep(), &b).unwrap();
    for name in ["sweep.csv", "summary.json", "plotdata/dh_interior.tsv", "plots/clouds_00.svg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let clouds = fs::read_dir(a.join("clouds")).unwrap().count();
    assert_eq!(clouds, 6);
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().next().unwrap(), SWEEP_HEADER.join(","));
    // the t = 0 row has no transport ratio
    assert!(csv.lines().nth(3).unwrap().split(',').nth(3) == Some("NaN"));
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn empty_sweep_writes_header_only() {
    assert_eq!(sweep_csv(&[]), SWEEP_HEADER.join(",") + "\n");
}

#[test]
fn fem_family_matches_conformal_domain() {
    // rho = |1 + 2 s z|^2 on the mesh disk is the image domain of z + s z^2
    let s = 0.08;
    let fem = config(
        SurfaceConfig::TriangulatedSurface { mesh: "disk".into(), resolution: 24 },
        FamilyKind::FemMetric,
        vec![s],
        64,
    );
    let conf = config(SurfaceConfig::AnalyticDisk, FamilyKind::ConformalPolynomial, vec![s], 64);
    let (rf, rc) = (run_sweep(&fem, |_| {}).unwrap(), run_sweep(&conf, |_| {}).unwrap());
    let (f, c) = (&rf.records[0], &rc.records[0]);
    assert!(f.valid && c.valid);
    assert!((f.t - c.t).abs() < 0.1 * c.t, "{} {}", f.t, c.t);
    assert!((f.d_h_interior - c.d_h_interior).abs() < 0.05 * c.d_h_interior);
}

#[test]
fn config_errors() {
    let torus = config(
        SurfaceConfig::TriangulatedSurface { mesh: "one_holed_torus".into(), resolution: 24 },
        FamilyKind::FemMetric,
        vec![0.1],
        64,
    );
    assert!(matches!(run_sweep(&torus, |_| {}), Err(ExperimentError::ConfigInvalid(_))));
    let mixed = config(SurfaceConfig::AnalyticDisk, FamilyKind::FemMetric, vec![0.1], 64);
    assert!(matches!(mixed.validate(), Err(ExperimentError::ConfigInvalid(_))));
    let odd = config(SurfaceConfig::AnalyticDisk, FamilyKind::ConformalPolynomial, vec![0.1], 63);
    assert!(odd.validate().is_err());
    let missing = config(
        SurfaceConfig::TriangulatedSurface { mesh: "/nonexistent/mesh.off".into(), resolution: 4 },
        FamilyKind::FemMetric,
        vec![0.1],
        64,
    );
    let err = run_sweep(&missing, |_| {}).err().unwrap();
    assert!(err.is_config(), "{err}");
}
