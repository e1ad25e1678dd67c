//! Piecewise-linear DN maps by the cotangent Laplacian and a Schur complement.

use std::f64::consts::PI;

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use nalgebra::DMatrix;

use super::mesh::TriMesh;
use super::DnError;
use crate::boundary_calculus::{basis_mode, basis_value, BoundaryOperator, OperatorKind};

/// Smallest admissible triangle angle, degrees.
pub const MIN_ANGLE_DEG: f64 = 15.0;

/// Options for [`dn_fem`].
#[derive(Debug, Clone, Copy)]
pub struct FemOptions {
    /// Rescale so the boundary has length `2 pi` (the DN map picks up `L/2pi`).
    pub rescale: bool,
    pub min_angle_deg: f64,
}

impl Default for FemOptions {
    fn default() -> Self {
        FemOptions { rescale: true, min_angle_deg: MIN_ANGLE_DEG }
    }
}

/// Cotangent stiffness triplets. With `rho`, edge lengths are those of the
/// metric `rho g`, `l'^2 = l^2 (rho_i + rho_j) / 2`.
pub fn cotangent_stiffness(mesh: &TriMesh, rho: Option<&[f64]>) -> Result<Vec<(usize, usize, f64)>, DnError> {
    let mut out = Vec::with_capacity(mesh.triangles().len() * 12);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut l2 = [0.0; 3];
        for e in 0..3 {
            let (i, j) = (tri[(e + 1) % 3], tri[(e + 2) % 3]);
            l2[e] = mesh.edge_length(i, j).powi(2);
            if let Some(r) = rho {
                l2[e] *= 0.5 * (r[i] + r[j]);
            }
        }
        let [a, b, c] = l2;
        let area = 0.25 * (2.0 * (a * b + b * c + c * a) - (a * a + b * b + c * c)).max(0.0).sqrt();
        if !(area > 0.0) {
            return Err(DnError::NonManifoldMesh(format!("triangle {t} is degenerate")));
        }
        for e in 0..3 {
            let (i, j) = (tri[(e + 1) % 3], tri[(e + 2) % 3]);
            let cot = (l2[(e + 1) % 3] + l2[(e + 2) % 3] - l2[e]) / (4.0 * area);
            let w = 0.5 * cot;
            out.push((i, j, -w));
            out.push((j, i, -w));
            out.push((i, i, w));
            out.push((j, j, w));
        }
    }
    Ok(out)
}

/// Nodal DN matrix `K_BB - K_BI K_II^{-1} K_IB`, rows in boundary-loop order.
pub fn schur_dn(mesh: &TriMesh, rho: Option<&[f64]>) -> Result<DMatrix<f64>, DnError> {
    let nv = mesh.vertices().len();
    let bl = mesh.boundary_loop();
    let nb = bl.len();
    // local numbering: boundary first (loop order), interior after
    let mut local = vec![usize::MAX; nv];
    let mut is_b = vec![false; nv];
    for (k, &v) in bl.iter().enumerate() {
        local[v] = k;
        is_b[v] = true;
    }
    let mut ni = 0;
    for v in 0..nv {
        if !is_b[v] {
            local[v] = ni;
            ni += 1;
        }
    }
    let trip = cotangent_stiffness(mesh, rho)?;
    let mut kbb = DMatrix::zeros(nb, nb);
    let mut ii = Vec::new();
    let mut ib = Vec::new();
    for (i, j, w) in trip {
        match (is_b[i], is_b[j]) {
            (true, true) => kbb[(local[i], local[j])] += w,
            (false, false) => ii.push(Triplet::new(local[i], local[j], w)),
            (false, true) => ib.push((local[i], local[j], w)),
            (true, false) => {}
        }
    }
    if ni == 0 {
        return Ok(kbb);
    }
    let kii = SparseColMat::<usize, f64>::try_new_from_triplets(ni, ni, &ii)
        .map_err(|e| DnError::SingularInterior(format!("{e:?}")))?;
    let llt = kii
        .sp_cholesky(Side::Lower)
        .map_err(|e| DnError::SingularInterior(format!("{e:?}")))?;
    let mut x = Mat::<f64>::zeros(ni, nb);
    for &(i, b, w) in &ib {
        x[(i, b)] += w;
    }
    let rhs = x.clone();
    llt.solve_in_place_with_conj(Conj::No, x.as_mut());
    if (0..nb).any(|b| (0..ni).any(|i| !x[(i, b)].is_finite())) {
        return Err(DnError::SingularInterior("solve produced non-finite values".into()));
    }
    let xt = rhs.transpose() * &x;
    let mut s = kbb;
    for a in 0..nb {
        for b in 0..nb {
            s[(a, b)] -= xt[(a, b)];
        }
    }
    Ok(s)
}

/// Arclength of the boundary nodes and the perimeter in the metric `rho g`.
pub fn boundary_arclength(mesh: &TriMesh, rho: Option<&[f64]>) -> (Vec<f64>, f64) {
    let Some(r) = rho else {
        return (mesh.boundary_arclength().to_vec(), mesh.perimeter());
    };
    let bl = mesh.boundary_loop();
    let mut pos = Vec::with_capacity(bl.len());
    let mut acc = 0.0;
    for k in 0..bl.len() {
        pos.push(acc);
        let (i, j) = (bl[k], bl[(k + 1) % bl.len()]);
        acc += mesh.edge_length(i, j) * (0.5 * (r[i] + r[j])).sqrt();
    }
    (pos, acc)
}

/// Highest mode trusted in a FEM DN map with `vb` boundary vertices.
pub fn fem_band(vb: usize, n: usize) -> usize {
    (vb / 32).max(2).min(n / 2 - 1).min(vb / 4)
}

/// DN map of a triangulated surface, converted to `n` Fourier modes.
///
/// The nodal co-normal data are turned into a function with the lumped
/// boundary mass `W` and fitted by weighted least squares on modes up to
/// `min(n/2, vb/4)`; the fit is written in the symmetric form
/// `G^{-1/2} V^T S V G^{-1/2}`, `G = V^T W V`, which coincides with the
/// least-squares operator on uniform boundary nodes.
pub fn dn_fem(mesh: &TriMesh, rho: Option<&[f64]>, n: usize, opts: FemOptions) -> Result<BoundaryOperator, DnError> {
    if n < 8 || n % 2 != 0 {
        return Err(DnError::InvalidParameter(format!("mode count {n} must be even and >= 8")));
    }
    if let Some(r) = rho {
        if r.len() != mesh.vertices().len() {
            return Err(DnError::InvalidParameter("rho needs one value per vertex".into()));
        }
        if r.iter().any(|&x| !(x >= 1e-6) || !x.is_finite()) {
            return Err(DnError::InvalidParameter("rho must be finite and >= 1e-6".into()));
        }
    }
    let ang = mesh.min_angle_deg();
    if ang < opts.min_angle_deg {
        return Err(DnError::PoorMesh(ang));
    }
    let s = schur_dn(mesh, rho)?;
    let vb = mesh.boundary_loop().len();
    let (pos, len) = boundary_arclength(mesh, rho);
    let pos = &pos[..];
    let cap = (n / 2).min(vb / 4);
    let kept: Vec<usize> = (0..n).filter(|&i| basis_mode(i, n) <= cap).collect();
    let v = DMatrix::from_fn(vb, kept.len(), |k, c| basis_value(kept[c], n, len, pos[k]));
    let w: Vec<f64> = (0..vb)
        .map(|k| {
            let prev = if k == 0 { len - pos[vb - 1] } else { pos[k] - pos[k - 1] };
            let next = if k + 1 == vb { len - pos[k] } else { pos[k + 1] - pos[k] };
            0.5 * (prev + next)
        })
        .collect();
    let mut wv = v.clone();
    for k in 0..vb {
        for c in 0..kept.len() {
            wv[(k, c)] *= w[k];
        }
    }
    let g = v.transpose() * &wv;
    let eig = g.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&x| !(x > 1e-12)) {
        return Err(DnError::InvalidParameter("boundary nodes cannot resolve the requested modes".into()));
    }
    let gih = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()))
        * eig.eigenvectors.transpose();
    let core = &gih * v.transpose() * &s * &v * &gih;
    let mut a = DMatrix::zeros(n, n);
    for (r, &i) in kept.iter().enumerate() {
        for (c, &j) in kept.iter().enumerate() {
            a[(i, j)] = 0.5 * (core[(r, c)] + core[(c, r)]);
        }
    }
    let band = fem_band(vb, n);
    let op = if opts.rescale {
        BoundaryOperator::from_matrix(a * (len / (2.0 * PI)), 2.0 * PI, OperatorKind::Dn)?
    } else {
        BoundaryOperator::from_matrix(a, len, OperatorKind::Dn)?
    };
    Ok(op.with_band(band))
}

/// Richardson extrapolation `(4 fine - coarse) / 3` of two FEM DN maps whose
/// meshes differ by one uniform refinement; removes the `O(h^2)` term.
pub fn richardson(coarse: &BoundaryOperator, fine: &BoundaryOperator) -> Result<BoundaryOperator, DnError> {
    let op = fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0))?;
    Ok(op.with_kind(OperatorKind::Dn).with_band(fine.band()))
}

/// FEM DN map extrapolated from meshes at `resolution` and `2 * resolution`.
pub fn dn_fem_extrapolated(
    build: impl Fn(usize) -> Result<TriMesh, DnError>,
    rho: Option<&dyn Fn(&[f64; 3]) -> f64>,
    resolution: usize,
    n: usize,
) -> Result<BoundaryOperator, DnError> {
    let run = |r: usize| -> Result<BoundaryOperator, DnError> {
        let mesh = build(r)?;
        let rv: Option<Vec<f64>> = rho.map(|f| mesh.vertices().iter().map(f).collect());
        dn_fem(&mesh, rv.as_deref(), n, FemOptions::default())
    };
    let coarse = run(resolution)?;
    let fine = run(2 * resolution)?;
    richardson(&coarse, &fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dn_backends::mesh::{make_disk_mesh, make_one_holed_torus_mesh};
    use crate::dn_backends::dn_disk;
    use crate::boundary_calculus::SobolevIndex;

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let mesh = make_one_holed_torus_mesh(8).unwrap();
        let trip = cotangent_stiffness(&mesh, None).unwrap();
        let mut rows = vec![0.0; mesh.vertices().len()];
        for (i, _, w) in trip {
            rows[i] += w;
        }
        assert!(rows.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn disk_fem_is_symmetric_and_kills_constants() {
        let mesh = make_disk_mesh(12).unwrap();
        let op = dn_fem(&mesh, None, 32, FemOptions::default()).unwrap();
        let a = op.matrix();
        assert!((a - a.transpose()).amax() < 1e-8 * a.amax());
        let norm = op.operator_norm(SobolevIndex(0.0), SobolevIndex(0.0));
        assert!(a.column(0).norm() < 1e-8 * norm);
        assert!(a.row(0).norm() < 1e-8 * norm);
    }

    #[test]
    fn disk_fem_converges() {
        let exact = dn_disk(32, 2.0 * PI).unwrap();
        let err = |m: usize| {
            let op = dn_fem(&make_disk_mesh(m).unwrap(), None, 32, FemOptions::default()).unwrap();
            op.sub(&exact).unwrap().operator_norm(SobolevIndex(1.0), SobolevIndex(0.0))
        };
        let (e1, e2) = (err(12), err(24));
        assert!(e1 / e2 >= 1.7, "{e1} {e2}");
    }

    #[test]
    fn rejects_poor_mesh_and_bad_rho() {
        let mesh = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.01, 0.0]],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        assert!(matches!(dn_fem(&mesh, None, 8, FemOptions::default()), Err(DnError::PoorMesh(_))));
        let disk = make_disk_mesh(3).unwrap();
        let rho = vec![0.0; disk.vertices().len()];
        assert!(matches!(dn_fem(&disk, Some(&rho), 8, FemOptions::default()), Err(DnError::InvalidParameter(_))));
    }
}
