//! Perturbation sweeps: for each parameter of a surface family, transport a
//! reference immersion to the perturbed surface and measure how far the
//! reconstructed images move.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argument_principle::{
    boundary_samples, classify_chart, immersion_check, merge_duplicates, reconstruct, reconstruct_at, ApError,
    CloudPoint, PointTag, ReconstructedCloud, CONSISTENCY_TOL, MERGE_TOL,
};
use crate::boundary_calculus::{basis_value_l2, BoundaryFunction, BoundaryOperator, SobolevIndex};
use crate::dn_backends::{
    dn_conformal, dn_disk, dn_fem, dn_fem_extrapolated, make_disk_mesh, make_one_holed_torus_mesh, DnError, FemOptions,
    TriMesh,
};
use crate::geometry_metrics::{fill_distance, hausdorff, MetricError, PointCloud};
use crate::holomorphic_structure::{
    complete_trace, dn_distance, estimate_kappa, projections_for, transport_immersion, HoloError, ProjectionPair,
    TraceTuple,
};
use crate::near_boundary::{default_delta, near_boundary_diagnostic, DiagnosticOptions, NearBoundaryError};

/// Header of `sweep.csv`.
pub const SWEEP_HEADER: [&str; 13] = [
    "parameter",
    "t",
    "t_alt",
    "lemma1_ratio",
    "d_h_interior",
    "d_h_full",
    "near_boundary_sup",
    "kappa",
    "kappa_prime",
    "immersion_margin",
    "fill_distance",
    "valid",
    "reason",
];

/// Names of the ambient functions available as immersion components.
pub const RECIPES: [&str; 5] = ["z", "z2", "z3", "expz", "inv2mz"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("{}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dn(#[from] DnError),
    #[error(transparent)]
    Holo(#[from] HoloError),
    #[error(transparent)]
    Ap(#[from] ApError),
    #[error(transparent)]
    NearBoundary(#[from] NearBoundaryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl ExperimentError {
    /// True for problems with the input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::ConfigInvalid(_) | ExperimentError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::ConfigInvalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceConfig {
    AnalyticDisk,
    /// `z + sum a_k z^k` with `coeffs = [[re, im] of a_2, a_3, ...]`.
    ConformalPolynomialDomain { coeffs: Vec<[f64; 2]> },
    /// `mesh` is `disk`, `one_holed_torus` or a path to an OFF file.
    TriangulatedSurface {
        mesh: String,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
}

fn default_resolution() -> usize {
    24
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Adds `s z^degree` to the conformal map of the base domain.
    ConformalPolynomial,
    /// Conformal factor `|1 + degree s z^{degree-1}|^2` on a planar mesh.
    FemMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub kind: FamilyKind,
    pub parameter_list: Vec<f64>,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_degree() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearBoundaryConfig {
    pub n_anchors: usize,
    pub depth: f64,
    pub n_depths: usize,
}

impl Default for NearBoundaryConfig {
    fn default() -> Self {
        NearBoundaryConfig { n_anchors: 16, depth: 0.05, n_depths: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub base_surface: SurfaceConfig,
    pub perturbation_family: PerturbationFamily,
    /// Comma separated recipe names, e.g. `z,z2`.
    pub immersion: String,
    pub n_modes: usize,
    pub epsilon: f64,
    pub grid_resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_tau")]
    pub tau_rank: f64,
    #[serde(default)]
    pub near_boundary: NearBoundaryConfig,
}

fn default_tau() -> f64 {
    crate::holomorphic_structure::TAU_RANK
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Deserializes without the sweep checks; see [`Self::validate_surface`].
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Checks needed to build the base DN map alone.
    pub fn validate_surface(&self) -> Result<()> {
        if self.n_modes < 8 || self.n_modes % 2 != 0 {
            return Err(invalid("n_modes must be even and >= 8"));
        }
        match &self.base_surface {
            SurfaceConfig::TriangulatedSurface { resolution, .. } if *resolution < 2 => {
                Err(invalid("mesh resolution must be >= 2"))
            }
            _ => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        Self::from_json_str(&text)
    }

    /// [`Self::load`] with only [`Self::validate_surface`] applied.
    pub fn load_surface(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        let cfg = Self::parse(&text)?;
        cfg.validate_surface()?;
        Ok(cfg)
    }

    pub fn recipes(&self) -> Vec<String> {
        self.immersion.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.perturbation_family.parameter_list;
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("parameters must be finite and non-negative"));
        }
        if p.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("parameter_list must be strictly decreasing toward 0"));
        }
        self.validate_surface()?;
        if !(self.epsilon > 0.0) || self.grid_resolution < 4 || !(self.tau_rank > 0.0) {
            return Err(invalid("epsilon and tau_rank must be positive, grid_resolution >= 4"));
        }
        let recipes = self.recipes();
        if recipes.is_empty() {
            return Err(invalid("immersion needs at least one recipe"));
        }
        if let Some(bad) = recipes.iter().find(|r| !RECIPES.contains(&r.as_str())) {
            return Err(invalid(format!("unknown recipe `{bad}` (known: {})", RECIPES.join(", "))));
        }
        if self.perturbation_family.degree < 2 {
            return Err(invalid("perturbation degree must be >= 2"));
        }
        let nb = &self.near_boundary;
        if nb.n_anchors == 0 || nb.n_depths == 0 || !(nb.depth > 0.0) {
            return Err(invalid("near_boundary needs positive anchors, depths and depth"));
        }
        match (&self.base_surface, self.perturbation_family.kind) {
            (SurfaceConfig::AnalyticDisk | SurfaceConfig::ConformalPolynomialDomain { .. }, FamilyKind::ConformalPolynomial) => Ok(()),
            (SurfaceConfig::TriangulatedSurface { mesh, .. }, FamilyKind::FemMetric) if mesh != "one_holed_torus" => Ok(()),
            (SurfaceConfig::TriangulatedSurface { .. }, FamilyKind::FemMetric) => {
                Err(invalid("immersion recipes need a planar base surface"))
            }
            _ => Err(invalid("conformal_polynomial needs a disk or conformal base; fem_metric needs a planar mesh")),
        }
    }
}

fn recipe(name: &str) -> fn(Complex64) -> Complex64 {
    match name {
        "z" => |z| z,
        "z2" => |z| z * z,
        "z3" => |z| z * z * z,
        "expz" => |z| z.exp(),
        _ => |z| 1.0 / (2.0 - z),
    }
}

fn mesh_for(name: &str, resolution: usize) -> Result<TriMesh> {
    match name {
        "disk" => Ok(make_disk_mesh(resolution)?),
        "one_holed_torus" => Ok(make_one_holed_torus_mesh(resolution)?),
        path => {
            let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
            Ok(TriMesh::from_off(&text)?)
        }
    }
}

fn complex_coeffs(c: &[[f64; 2]]) -> Vec<Complex64> {
    c.iter().map(|v| Complex64::new(v[0], v[1])).collect()
}

/// DN map of the surface rescaled to boundary length `2 pi`. Generated meshes
/// are Richardson-extrapolated from resolutions `r` and `2r`.
pub fn surface_dn(surface: &SurfaceConfig, n: usize, rho: Option<&dyn Fn(&[f64; 3]) -> f64>) -> Result<BoundaryOperator> {
    match surface {
        SurfaceConfig::AnalyticDisk => Ok(dn_disk(n, 2.0 * PI)?),
        SurfaceConfig::ConformalPolynomialDomain { coeffs } => Ok(dn_conformal(&complex_coeffs(coeffs), n, true)?.op),
        SurfaceConfig::TriangulatedSurface { mesh, resolution } => match mesh.as_str() {
            "disk" | "one_holed_torus" => {
                let name = mesh.clone();
                Ok(dn_fem_extrapolated(move |r| mesh_for(&name, r).map_err(|e| match e {
                    ExperimentError::Dn(d) => d,
                    other => DnError::InvalidParameter(other.to_string()),
                }), rho, *resolution, n)?)
            }
            _ => {
                let m = mesh_for(mesh, *resolution)?;
                let rv: Option<Vec<f64>> = rho.map(|f| m.vertices().iter().map(f).collect());
                Ok(dn_fem(&m, rv.as_deref(), n, FemOptions::default())?)
            }
        },
    }
}

/// Least-squares trigonometric fit of complex samples at arclengths `pos`.
fn fit_curve(pos: &[f64], values: &[Complex64], n: usize, modes: usize) -> Result<BoundaryFunction> {
    let length = 2.0 * PI;
    let kept: Vec<usize> = (0..n).filter(|&i| crate::boundary_calculus::basis_mode(i, n) <= modes).collect();
    let v = DMatrix::from_fn(pos.len(), kept.len(), |r, c| basis_value_l2(kept[c], n, length, pos[r]));
    let svd = v.svd(true, true);
    let solve = |rhs: DVector<f64>| -> Result<DVector<f64>> {
        let x = svd.solve(&rhs, 1e-12).map_err(|e| invalid(format!("boundary fit failed: {e}")))?;
        let mut full = DVector::zeros(n);
        for (c, &i) in kept.iter().enumerate() {
            full[i] = x[c];
        }
        Ok(full)
    };
    let re = solve(DVector::from_iterator(values.len(), values.iter().map(|z| z.re)))?;
    let im = solve(DVector::from_iterator(values.len(), values.iter().map(|z| z.im)))?;
    Ok(BoundaryFunction::from_real_coords(&re, Some(&im), length).map_err(HoloError::from)?)
}

/// The boundary curve of a planar base surface as a function of rescaled arclength.
pub fn base_boundary_curve(surface: &SurfaceConfig, n: usize) -> Result<BoundaryFunction> {
    match surface {
        SurfaceConfig::AnalyticDisk => {
            Ok(BoundaryFunction::from_fn(n, 2.0 * PI, |t| Complex64::from_polar(1.0, t)).map_err(HoloError::from)?)
        }
        SurfaceConfig::ConformalPolynomialDomain { coeffs } => {
            let c = dn_conformal(&complex_coeffs(coeffs), n, true)?;
            fit_curve(&c.arclength, &c.boundary, n, n / 2 - 1)
        }
        SurfaceConfig::TriangulatedSurface { mesh, resolution } => {
            let res = if matches!(mesh.as_str(), "disk") { 2 * resolution } else { *resolution };
            let m = mesh_for(mesh, res)?;
            if m.is_periodic() || m.euler_char() != 1 {
                return Err(invalid("immersion recipes need a planar disk-type mesh"));
            }
            let scale = 2.0 * PI / m.perimeter();
            let pos: Vec<f64> = m.boundary_arclength().iter().map(|p| p * scale).collect();
            let pts: Vec<Complex64> = m
                .boundary_loop()
                .iter()
                .map(|&v| Complex64::new(m.vertices()[v][0], m.vertices()[v][1]) * scale)
                .collect();
            let modes = (n / 2 - 1).min(pts.len() / 4);
            fit_curve(&pos, &pts, n, modes)
        }
    }
}

/// Trace of the ambient function `name` completed from its real part with `lambda`.
pub fn recipe_trace(
    name: &str,
    curve: &BoundaryFunction,
    lambda: &BoundaryOperator,
    proj: &ProjectionPair,
) -> Result<BoundaryFunction> {
    let f = recipe(name);
    let n = curve.n();
    let samples: Vec<Complex64> = curve.samples().iter().map(|&z| f(z)).collect();
    let amb = BoundaryFunction::from_samples(&samples, curve.length()).map_err(HoloError::from)?;
    Ok(complete_trace(&amb.re().truncated(n / 2 - 1), amb.im().mean().re, lambda, proj)?)
}

/// The base DN map and the certified immersion built from the configured recipes.
pub struct ReferenceImmersion {
    pub lambda: Arc<BoundaryOperator>,
    pub kappa: usize,
    pub proj: ProjectionPair,
    pub curve: BoundaryFunction,
    pub immersion: TraceTuple,
}

pub fn reference_immersion(config: &ExperimentConfig) -> Result<ReferenceImmersion> {
    config.validate()?;
    let n = config.n_modes;
    let lambda = Arc::new(surface_dn(&config.base_surface, n, None)?);
    let (est, proj) = projections_for(&lambda, config.tau_rank, config.seed)?;
    let curve = base_boundary_curve(&config.base_surface, n)?;
    let traces = config
        .recipes()
        .iter()
        .map(|r| recipe_trace(r, &curve, &lambda, &proj))
        .collect::<Result<Vec<_>>>()?;
    let immersion = TraceTuple::certify(traces, lambda.clone(), proj.cert_tol())?;
    Ok(ReferenceImmersion { lambda, kappa: est.kappa, proj, curve, immersion })
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub parameter: f64,
    pub t: f64,
    pub t_alt: f64,
    /// Undefined at `t = 0`.
    #[serde(rename = "lemma1_ratio")]
    pub transport_ratio: Option<f64>,
    pub d_h_interior: f64,
    pub d_h_full: f64,
    pub near_boundary_sup: f64,
    pub kappa: usize,
    pub kappa_prime: Option<usize>,
    pub immersion_margin: f64,
    pub fill_distance: f64,
    pub valid: bool,
    pub reason: Option<String>,
    /// Seconds; kept out of `sweep.csv`.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SweepRecord {
    fn failed(parameter: f64, kappa: usize, fill: f64, reason: String) -> Self {
        SweepRecord {
            parameter,
            t: f64::NAN,
            t_alt: f64::NAN,
            transport_ratio: None,
            d_h_interior: f64::NAN,
            d_h_full: f64::NAN,
            near_boundary_sup: f64::NAN,
            kappa,
            kappa_prime: None,
            immersion_margin: f64::NAN,
            fill_distance: fill,
            valid: false,
            reason: Some(reason),
            wall_time: 0.0,
        }
    }
}

/// Reference data shared by every sweep point.
pub struct BaseContext {
    pub config: ExperimentConfig,
    pub lambda: Arc<BoundaryOperator>,
    pub kappa: usize,
    pub proj: ProjectionPair,
    pub immersion: TraceTuple,
    pub test_set: Vec<BoundaryFunction>,
    pub reference_cloud: ReconstructedCloud,
    /// Winding-1 targets of each chart of the reference immersion.
    pub targets: Vec<Vec<Complex64>>,
    pub fill_distance: f64,
    consistency_tol: f64,
}

impl BaseContext {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let ReferenceImmersion { lambda, kappa, proj, curve, immersion } = reference_immersion(config)?;
        let n = config.n_modes;
        let test_set = RECIPES.iter().map(|r| recipe_trace(r, &curve, &lambda, &proj)).collect::<Result<Vec<_>>>()?;
        let reference_cloud = reconstruct(&immersion, config.epsilon, config.grid_resolution)?;
        let mut targets = vec![Vec::new(); immersion.len()];
        for p in reference_cloud.interior() {
            if let (PointTag::Interior(j), Some(z)) = (p.tag, p.source_z) {
                targets[j].push(z);
            }
        }
        let interior = interior_cloud(&reference_cloud)?;
        if interior.is_empty() {
            return Err(ExperimentError::Ap(ApError::InvalidParameter(
                "reference immersion has no winding-1 region at this clearance".into(),
            )));
        }
        let fill = fill_distance(&interior);
        let diam = cloud_diameter(&boundary_samples(&immersion.traces, 4 * n));
        Ok(BaseContext {
            config: config.clone(),
            lambda,
            kappa,
            proj,
            immersion,
            test_set,
            reference_cloud,
            targets,
            fill_distance: fill,
            consistency_tol: CONSISTENCY_TOL * diam,
        })
    }
}

fn cloud_diameter(points: &[Vec<Complex64>]) -> f64 {
    let cloud = PointCloud::from_complex(points).expect("uniform dimension");
    let d = cloud.dim();
    let mut acc = 0.0;
    for c in 0..d {
        let (lo, hi) = (0..cloud.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = cloud.point(i)[c];
            (lo.min(v), hi.max(v))
        });
        acc += (hi - lo).powi(2);
    }
    acc.sqrt()
}

fn interior_cloud(c: &ReconstructedCloud) -> Result<PointCloud> {
    let pts: Vec<Vec<Complex64>> = c.interior().map(|p| p.coords.clone()).collect();
    Ok(PointCloud::from_complex(&pts)?)
}

fn full_cloud(c: &ReconstructedCloud) -> Result<PointCloud> {
    let pts: Vec<Vec<Complex64>> = c.points.iter().map(|p| p.coords.clone()).collect();
    Ok(PointCloud::from_complex(&pts)?)
}

/// Clouds produced for one sweep point.
#[derive(Debug, Clone)]
pub struct RecordArtifacts {
    pub perturbed_cloud: ReconstructedCloud,
}

/// `sup_eta |beta' eta - eta|_{C^2} / (t |eta|_{H^3})` over the test set.
pub fn transport_ratio(test_set: &[BoundaryFunction], transported: &[BoundaryFunction], t: f64) -> Option<f64> {
    if !(t > 0.0) {
        return None;
    }
    test_set
        .iter()
        .zip(transported)
        .map(|(a, b)| b.sub(a).expect("same shape").ck_norm(2) / (t * a.sobolev_norm(SobolevIndex(3.0))))
        .reduce(f64::max)
}

/// Runs one sweep point against `lambda2`, the DN map of the perturbed surface.
pub fn evaluate_parameter(ctx: &BaseContext, s: f64, lambda2: &BoundaryOperator) -> (SweepRecord, Option<RecordArtifacts>) {
    let start = Instant::now();
    let mut rec = match evaluate_inner(ctx, s, lambda2) {
        Ok((rec, art)) => (rec, Some(art)),
        Err((partial, reason)) => {
            let mut r = partial.unwrap_or_else(|| SweepRecord::failed(s, ctx.kappa, ctx.fill_distance, String::new()));
            r.valid = false;
            r.reason = Some(reason);
            (r, None)
        }
    };
    rec.0.wall_time = start.elapsed().as_secs_f64();
    rec
}

type Partial = (Option<SweepRecord>, String);

fn evaluate_inner(ctx: &BaseContext, s: f64, lambda2: &BoundaryOperator) -> std::result::Result<(SweepRecord, RecordArtifacts), Partial> {
    let cfg = &ctx.config;
    let msg = |e: &dyn std::fmt::Display| (None, e.to_string());
    let lam = &ctx.lambda;
    let t = dn_distance(lam, lambda2).map_err(|e| msg(&e))?;
    let t_alt = lambda2.sub(lam).map_err(|e| msg(&e))?.operator_norm(SobolevIndex(3.0), SobolevIndex(2.0));
    let mut rec = SweepRecord::failed(s, ctx.kappa, ctx.fill_distance, String::new());
    rec.t = t;
    rec.t_alt = t_alt;
    let est2 = match estimate_kappa(lambda2, cfg.tau_rank) {
        Ok(e) => e,
        Err(e) => return Err((Some(rec), e.to_string())),
    };
    rec.kappa_prime = Some(est2.kappa);
    if est2.kappa != ctx.kappa {
        return Err((Some(rec), format!("euler characteristic mismatch: kappa {} vs {}", ctx.kappa, est2.kappa)));
    }
    let fail = |rec: &SweepRecord, e: &dyn std::fmt::Display| (Some(rec.clone()), e.to_string());
    let (_, proj2) = projections_for(lambda2, cfg.tau_rank, cfg.seed).map_err(|e| fail(&rec, &e))?;
    let e2 = transport_immersion(&ctx.immersion, lambda2, &proj2).map_err(|e| fail(&rec, &e))?;
    let moved = ctx
        .test_set
        .iter()
        .map(|eta| crate::holomorphic_structure::beta_gamma(eta, lambda2, &proj2))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fail(&rec, &e))?;
    rec.transport_ratio = transport_ratio(&ctx.test_set, &moved, t);

    // perturbed interior on the reference targets
    let mut points = Vec::new();
    for (j, zs) in ctx.targets.iter().enumerate() {
        let (pts, _) = reconstruct_at(&e2.traces, j, zs, ctx.consistency_tol).map_err(|e| fail(&rec, &e))?;
        points.extend(pts);
    }
    let n = cfg.n_modes;
    let bnd = boundary_samples(&e2.traces, 4 * n);
    let n_interior = points.len();
    points.extend(bnd.into_iter().map(|coords| CloudPoint { coords, tag: PointTag::Boundary, source_z: None }));
    let points = merge_duplicates(points, MERGE_TOL * ctx.consistency_tol / CONSISTENCY_TOL);
    let perturbed = ReconstructedCloud {
        points,
        epsilon: cfg.epsilon,
        source: format!("transported immersion, parameter {s}"),
        diagnostics: Default::default(),
    };
    if n_interior == 0 {
        return Err((Some(rec), "perturbed immersion has no winding-1 targets".into()));
    }
    let metric = |a: &ReconstructedCloud, b: &ReconstructedCloud, interior: bool| -> std::result::Result<f64, MetricError> {
        let (ca, cb) = if interior {
            (interior_cloud(a).map_err(|_| MetricError::EmptyCloud)?, interior_cloud(b).map_err(|_| MetricError::EmptyCloud)?)
        } else {
            (full_cloud(a).map_err(|_| MetricError::EmptyCloud)?, full_cloud(b).map_err(|_| MetricError::EmptyCloud)?)
        };
        Ok(hausdorff(&ca, &cb)?.d_h)
    };
    rec.d_h_interior = metric(&ctx.reference_cloud, &perturbed, true).map_err(|e| fail(&rec, &e))?;
    rec.d_h_full = metric(&ctx.reference_cloud, &perturbed, false).map_err(|e| fail(&rec, &e))?;

    let nb = cfg.near_boundary;
    let opts = DiagnosticOptions { n_anchors: nb.n_anchors, depth: nb.depth, n_depths: nb.n_depths, delta: default_delta(n, lam.length(), t) };
    rec.near_boundary_sup = near_boundary_diagnostic(&ctx.immersion, &e2, &opts).map_err(|e| fail(&rec, &e))?.global_sup;

    let fields = (0..e2.len())
        .map(|j| classify_chart(&e2.traces, j, cfg.grid_resolution, cfg.epsilon, None))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fail(&rec, &e))?;
    let report = immersion_check(&e2, &fields, e2.len()).map_err(|e| fail(&rec, &e))?;
    rec.immersion_margin = report.min_margin;
    rec.valid = true;
    rec.reason = None;
    if !report.applicable || !report.full_rank {
        rec.valid = false;
        rec.reason = Some("transported map is not an immersion on the sampled region".into());
    }
    Ok((rec, RecordArtifacts { perturbed_cloud: perturbed }))
}

/// DN map of the perturbed surface at parameter `s`.
pub fn perturbed_dn(config: &ExperimentConfig, s: f64) -> Result<BoundaryOperator> {
    let fam = &config.perturbation_family;
    let n = config.n_modes;
    if s == 0.0 {
        return surface_dn(&config.base_surface, n, None);
    }
    match fam.kind {
        FamilyKind::ConformalPolynomial => {
            let mut coeffs = match &config.base_surface {
                SurfaceConfig::ConformalPolynomialDomain { coeffs } => complex_coeffs(coeffs),
                _ => Vec::new(),
            };
            let slot = fam.degree - 2;
            if coeffs.len() <= slot {
                coeffs.resize(slot + 1, Complex64::new(0.0, 0.0));
            }
            coeffs[slot] += s;
            Ok(dn_conformal(&coeffs, n, true)?.op)
        }
        FamilyKind::FemMetric => {
            let k = fam.degree as i32;
            let rho = move |p: &[f64; 3]| {
                let z = Complex64::new(p[0], p[1]);
                (1.0 + k as f64 * s * z.powi(k - 1)).norm_sqr()
            };
            surface_dn(&config.base_surface, n, Some(&rho))
        }
    }
}

/// Summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n_records: usize,
    pub n_valid: usize,
    pub slope_d_h_interior_vs_t: Option<f64>,
    pub slope_d_h_full_vs_t: Option<f64>,
    pub slope_near_boundary_vs_t: Option<f64>,
    pub transport_ratio_min: Option<f64>,
    pub transport_ratio_max: Option<f64>,
    pub d_h_full_monotone: bool,
    pub near_boundary_monotone: bool,
    pub t_alt_over_t: Option<(f64, f64)>,
    pub immersion_margin_min: Option<f64>,
    pub fill_distance: f64,
    pub grid_spacing: f64,
    pub kappa: usize,
    pub note: String,
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// True when each value is at most 10% above its predecessor.
pub fn monotone_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= 1.1 * w[0])
}

pub fn summarize(ctx: &BaseContext, records: &[SweepRecord]) -> SweepSummary {
    let valid: Vec<&SweepRecord> = records.iter().filter(|r| r.valid).collect();
    let pairs = |f: fn(&SweepRecord) -> f64| valid.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>();
    let ratios: Vec<f64> = valid.iter().filter_map(|r| r.transport_ratio).collect();
    let alt: Vec<f64> = valid.iter().filter(|r| r.t > 0.0).map(|r| r.t_alt / r.t).collect();
    let fold = |v: &[f64], f: fn(f64, f64) -> f64| v.iter().copied().reduce(f);
    SweepSummary {
        n_records: records.len(),
        n_valid: valid.len(),
        slope_d_h_interior_vs_t: loglog_slope(&pairs(|r| r.d_h_interior)),
        slope_d_h_full_vs_t: loglog_slope(&pairs(|r| r.d_h_full)),
        slope_near_boundary_vs_t: loglog_slope(&pairs(|r| r.near_boundary_sup)),
        transport_ratio_min: fold(&ratios, f64::min),
        transport_ratio_max: fold(&ratios, f64::max),
        d_h_full_monotone: monotone_decreasing(&valid.iter().map(|r| r.d_h_full).collect::<Vec<_>>()),
        near_boundary_monotone: monotone_decreasing(&valid.iter().map(|r| r.near_boundary_sup).collect::<Vec<_>>()),
        t_alt_over_t: fold(&alt, f64::min).zip(fold(&alt, f64::max)),
        immersion_margin_min: fold(&valid.iter().map(|r| r.immersion_margin).collect::<Vec<_>>(), f64::min),
        fill_distance: ctx.fill_distance,
        grid_spacing: grid_spacing(ctx),
        kappa: ctx.kappa,
        note: "perturbed images come from the transported reference immersion, an upper bound for the infimum over immersions; surface families are illustrative choices".into(),
    }
}

fn grid_spacing(ctx: &BaseContext) -> f64 {
    let zs: Vec<Complex64> = ctx.immersion.traces[0].samples_at(4 * ctx.config.n_modes);
    crate::argument_principle::GridFrame::around(&zs, ctx.config.grid_resolution).map_or(f64::NAN, |f| f.spacing())
}

/// Records, per-record clouds and the summary of a sweep.
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub artifacts: Vec<Option<RecordArtifacts>>,
    pub reference_cloud: Option<ReconstructedCloud>,
    pub summary: Option<SweepSummary>,
}

/// Prepares the reference data and evaluates every parameter in order.
pub fn run_sweep(config: &ExperimentConfig, mut progress: impl FnMut(&SweepRecord)) -> Result<SweepOutcome> {
    let ctx = BaseContext::prepare(config)?;
    let mut records = Vec::new();
    let mut artifacts = Vec::new();
    for &s in &config.perturbation_family.parameter_list {
        let start = Instant::now();
        let (mut rec, art) = match perturbed_dn(config, s) {
            Ok(l2) => evaluate_parameter(&ctx, s, &l2),
            Err(e) => (SweepRecord::failed(s, ctx.kappa, ctx.fill_distance, e.to_string()), None),
        };
        rec.wall_time = start.elapsed().as_secs_f64();
        progress(&rec);
        records.push(rec);
        artifacts.push(art);
    }
    let summary = summarize(&ctx, &records);
    Ok(SweepOutcome { records, artifacts, reference_cloud: Some(ctx.reference_cloud), summary: Some(summary) })
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.12e}")
    }
}

/// `sweep.csv` contents.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            num(r.parameter),
            num(r.t),
            num(r.t_alt),
            r.transport_ratio.map_or("NaN".into(), num),
            num(r.d_h_interior),
            num(r.d_h_full),
            num(r.near_boundary_sup),
            r.kappa.to_string(),
            r.kappa_prime.map_or(String::new(), |k| k.to_string()),
            num(r.immersion_margin),
            num(r.fill_distance),
            r.valid.to_string(),
            r.reason.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn svg_scatter(reference: &ReconstructedCloud, perturbed: &ReconstructedCloud) -> String {
    let pts = |c: &ReconstructedCloud| c.points.iter().map(|p| p.coords[0]).collect::<Vec<_>>();
    let (a, b) = (pts(reference), pts(perturbed));
    let all: Vec<&Complex64> = a.iter().chain(&b).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &all {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y0 = y0.min(p.im);
        y1 = y1.max(p.im);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let size = 600.0;
    let map = |p: &Complex64| (20.0 + (p.re - x0) / span * (size - 40.0), size - 20.0 - (p.im - y0) / span * (size - 40.0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (cloud, color) in [(&a, "#1f77b4"), (&b, "#d62728")] {
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.6">"#);
        for p in cloud.iter() {
            let (x, y) = map(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

/// Writes `sweep.csv`, `timing.csv`, `summary.json`, `clouds/`, `plotdata/`
/// and `plots/` under `dir`. Everything except `timing.csv` is a
/// deterministic function of the config.
pub fn emit_outputs(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    mkdir(dir)?;
    write(&dir.join("sweep.csv"), sweep_csv(&outcome.records))?;
    let mut timing = String::from("parameter,wall_time\n");
    for r in &outcome.records {
        let _ = writeln!(timing, "{},{:.6}", num(r.parameter), r.wall_time);
    }
    write(&dir.join("timing.csv"), timing)?;
    if let Some(summary) = &outcome.summary {
        let text = serde_json::to_string_pretty(summary).expect("plain data serializes");
        write(&dir.join("summary.json"), text + "\n")?;
    }
    let clouds = dir.join("clouds");
    let plots = dir.join("plots");
    let plotdata = dir.join("plotdata");
    for d in [&clouds, &plots, &plotdata] {
        mkdir(d)?;
    }
    let mut interior = String::from("log10_t\tlog10_d_h_interior\n");
    let mut full = String::from("log10_t\tlog10_d_h_full\n");
    for r in outcome.records.iter().filter(|r| r.valid && r.t > 0.0) {
        let _ = writeln!(interior, "{:.12e}\t{:.12e}", r.t.log10(), r.d_h_interior.log10());
        let _ = writeln!(full, "{:.12e}\t{:.12e}", r.t.log10(), r.d_h_full.log10());
    }
    write(&plotdata.join("dh_interior.tsv"), interior)?;
    write(&plotdata.join("dh_full.tsv"), full)?;
    let Some(reference) = &outcome.reference_cloud else { return Ok(()) };
    for (i, art) in outcome.artifacts.iter().enumerate() {
        let Some(art) = art else { continue };
        let csv_of = |c: &ReconstructedCloud| -> Result<Vec<u8>> {
            let mut buf = Vec::new();
            c.write_csv(&mut buf)?;
            Ok(buf)
        };
        write(&clouds.join(format!("param_{i:02}_reference.csv")), csv_of(reference)?)?;
        write(&clouds.join(format!("param_{i:02}_perturbed.csv")), csv_of(&art.perturbed_cloud)?)?;
        write(&plots.join(format!("clouds_{i:02}.svg")), svg_scatter(reference, &art.perturbed_cloud))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(params: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            base_surface: SurfaceConfig::AnalyticDisk,
            perturbation_family: PerturbationFamily { kind: FamilyKind::ConformalPolynomial, parameter_list: params, degree: 2 },
            immersion: "z,z2".into(),
            n_modes: 64,
            epsilon: 0.2,
            grid_resolution: 20,
            seed: 3,
            output_dir: None,
            tau_rank: 1e-3,
            near_boundary: NearBoundaryConfig { n_anchors: 8, depth: 0.05, n_depths: 2 },
        }
    }

    #[test]
    fn validation() {
        assert!(config(vec![0.08, 0.04]).validate().is_ok());
        assert!(config(vec![0.04, 0.08]).validate().is_err());
        let mut c = config(vec![0.1]);
        c.immersion = "z,w".into();
        assert!(matches!(c.validate(), Err(ExperimentError::ConfigInvalid(_))));
        let text = r#"{"base_surface": {"kind": "analytic_disk"},
            "perturbation_family": {"kind": "conformal_polynomial", "parameter_list": [0.02, 0.01]},
            "immersion": "z", "n_modes": 32, "epsilon": 0.2, "grid_resolution": 16}"#;
        let c = ExperimentConfig::from_json_str(text).unwrap();
        assert_eq!(c.perturbation_family.degree, 2);
        assert_eq!(c.near_boundary, NearBoundaryConfig::default());
    }

    #[test]
    fn unperturbed_point() {
        let ctx = BaseContext::prepare(&config(vec![0.0])).unwrap();
        let (rec, art) = evaluate_parameter(&ctx, 0.0, &ctx.lambda.clone());
        assert!(rec.valid, "{:?}", rec.reason);
        assert_eq!(rec.t, 0.0);
        assert!(rec.transport_ratio.is_none());
        assert!(rec.d_h_interior <= 2.0 * ctx.fill_distance);
        assert!(rec.near_boundary_sup < 1e-7);
        assert!(art.is_some());
    }

    #[test]
    fn kappa_mismatch_is_flagged() {
        let ctx = BaseContext::prepare(&config(vec![0.0])).unwrap();
        let torus = surface_dn(&SurfaceConfig::TriangulatedSurface { mesh: "one_holed_torus".into(), resolution: 8 }, 64, None).unwrap();
        let (rec, art) = evaluate_parameter(&ctx, 1.0, &torus);
        assert!(!rec.valid);
        assert_eq!(rec.kappa_prime, Some(2));
        assert!(rec.reason.unwrap().contains("mismatch"));
        assert!(art.is_none());
    }

    #[test]
    fn slope_and_monotone_helpers() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(monotone_decreasing(&[1.0, 0.5, 0.54, 0.2]));
        assert!(!monotone_decreasing(&[1.0, 1.2]));
        assert_eq!(sweep_csv(&[]).trim_end(), SWEEP_HEADER.join(","));
    }
}
