//! Triangle meshes with one boundary loop, generators and OFF ingestion.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::DnError;

/// Oriented triangle mesh with exactly one boundary loop.
///
/// `period` marks a flat torus `R^2 / (p_x Z x p_y Z)`; edge vectors then use
/// the minimum image convention in the first two coordinates.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    period: Option<[f64; 2]>,
    boundary_loop: Vec<usize>,
    boundary_arclength: Vec<f64>,
    perimeter: f64,
    euler_char: i64,
}

impl TriMesh {
    /// Validates the mesh and extracts the boundary loop, oriented by the
    /// triangles and started at its lowest-index vertex.
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>, period: Option<[f64; 2]>) -> Result<Self, DnError> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(DnError::NonManifoldMesh("no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(DnError::NonManifoldMesh(format!("triangle {t} has an out-of-range vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(DnError::NonManifoldMesh(format!("triangle {t} repeats a vertex")));
            }
            for e in 0..3 {
                let key = (tri[e], tri[(e + 1) % 3]);
                if directed.insert(key, t).is_some() {
                    return Err(DnError::NonManifoldMesh(format!(
                        "directed edge {key:?} used twice (inconsistent winding or non-manifold edge)"
                    )));
                }
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut n_edges = 0usize;
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                if next.insert(a, b).is_some() {
                    return Err(DnError::NonManifoldMesh(format!("boundary pinches at vertex {a}")));
                }
                n_edges += 2;
            } else {
                n_edges += 1;
            }
        }
        let n_edges = n_edges / 2;
        if next.is_empty() {
            return Err(DnError::NonManifoldMesh("mesh has no boundary".into()));
        }
        let start = *next.keys().min().unwrap();
        let mut boundary_loop = vec![start];
        let mut v = next[&start];
        while v != start {
            if boundary_loop.len() > next.len() {
                return Err(DnError::NonManifoldMesh("boundary is not a simple loop".into()));
            }
            boundary_loop.push(v);
            v = *next
                .get(&v)
                .ok_or_else(|| DnError::NonManifoldMesh(format!("boundary stops at vertex {v}")))?;
        }
        if boundary_loop.len() != next.len() {
            return Err(DnError::NonManifoldMesh(format!(
                "expected one boundary loop, found {} boundary vertices outside the first loop",
                next.len() - boundary_loop.len()
            )));
        }
        let used: std::collections::HashSet<usize> = triangles.iter().flatten().copied().collect();
        let euler_char = used.len() as i64 - n_edges as i64 + triangles.len() as i64;
        let mut mesh = TriMesh {
            vertices,
            triangles,
            period,
            boundary_loop,
            boundary_arclength: Vec::new(),
            perimeter: 0.0,
            euler_char,
        };
        let mut acc = 0.0;
        let nb = mesh.boundary_loop.len();
        for k in 0..nb {
            mesh.boundary_arclength.push(acc);
            acc += mesh.edge_length(mesh.boundary_loop[k], mesh.boundary_loop[(k + 1) % nb]);
        }
        mesh.perimeter = acc;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    /// Arclength position of each boundary-loop vertex, starting at 0.
    pub fn boundary_arclength(&self) -> &[f64] {
        &self.boundary_arclength
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// `V - E + F`.
    pub fn euler_char(&self) -> i64 {
        self.euler_char
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Edge vector from `i` to `j`.
    pub fn edge_vector(&self, i: usize, j: usize) -> [f64; 3] {
        let (p, q) = (self.vertices[i], self.vertices[j]);
        let mut d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        if let Some(per) = self.period {
            for c in 0..2 {
                d[c] -= per[c] * (d[c] / per[c]).round();
            }
        }
        d
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        let d = self.edge_vector(i, j);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Smallest triangle angle in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut best = 180.0f64;
        for t in &self.triangles {
            let l2: Vec<f64> = (0..3).map(|e| self.edge_length(t[(e + 1) % 3], t[(e + 2) % 3]).powi(2)).collect();
            for e in 0..3 {
                let (a, b, c) = (l2[e], l2[(e + 1) % 3], l2[(e + 2) % 3]);
                let cosv = (b + c - a) / (2.0 * (b * c).sqrt());
                best = best.min(cosv.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    /// Largest triangle angle in degrees.
    pub fn max_angle_deg(&self) -> f64 {
        let mut best = 0.0f64;
        for t in &self.triangles {
            let l2: Vec<f64> = (0..3).map(|e| self.edge_length(t[(e + 1) % 3], t[(e + 2) % 3]).powi(2)).collect();
            for e in 0..3 {
                let (a, b, c) = (l2[e], l2[(e + 1) % 3], l2[(e + 2) % 3]);
                let cosv = (b + c - a) / (2.0 * (b * c).sqrt());
                best = best.max(cosv.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    /// Reads an OFF file (header `OFF`, counts line, vertex lines, face lines).
    /// Polygonal faces are fan-triangulated.
    pub fn from_off(text: &str) -> Result<Self, DnError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let bad = |m: &str| DnError::OffFormat(m.to_string());
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let mut rest_of_header: Vec<&str> = Vec::new();
        if let Some(tail) = header.strip_prefix("OFF") {
            rest_of_header.extend(tail.split_whitespace());
        } else {
            return Err(bad("missing OFF header"));
        }
        let counts: Vec<usize> = if rest_of_header.len() >= 2 {
            rest_of_header.iter().map(|s| s.parse().map_err(|_| bad("bad counts"))).collect::<Result<_, _>>()?
        } else {
            lines
                .next()
                .ok_or_else(|| bad("missing counts line"))?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad counts")))
                .collect::<Result<_, _>>()?
        };
        if counts.len() < 2 {
            return Err(bad("counts line needs vertex and face counts"));
        }
        let (nv, nf) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let l = lines.next().ok_or_else(|| bad(&format!("missing vertex {i}")))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .take(3)
                .map(|s| s.parse().map_err(|_| bad(&format!("bad vertex {i}"))))
                .collect::<Result<_, _>>()?;
            if c.len() < 2 {
                return Err(bad(&format!("vertex {i} needs at least two coordinates")));
            }
            vertices.push([c[0], c[1], c.get(2).copied().unwrap_or(0.0)]);
        }
        let mut triangles = Vec::with_capacity(nf);
        for f in 0..nf {
            let l = lines.next().ok_or_else(|| bad(&format!("missing face {f}")))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(&format!("bad face {f}"))))
                .collect::<Result<_, _>>()?;
            let k = *idx.first().ok_or_else(|| bad(&format!("empty face {f}")))?;
            if k < 3 || idx.len() < k + 1 {
                return Err(bad(&format!("face {f} is malformed")));
            }
            for j in 1..k - 1 {
                triangles.push([idx[1], idx[1 + j], idx[2 + j]]);
            }
        }
        TriMesh::new(vertices, triangles, None)
    }

    /// Writes the mesh as OFF text (periodic identification is not representable).
    pub fn to_off(&self) -> String {
        let mut s = format!("OFF\n{} {} 0\n", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            s.push_str(&format!("{} {} {}\n", v[0], v[1], v[2]));
        }
        for t in &self.triangles {
            s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }
}

/// Unit disk triangulated by hexagonal rings: ring `i` holds `6i` vertices at
/// radius `i/m`. The boundary has `6m` vertices.
pub fn make_disk_mesh(m: usize) -> Result<TriMesh, DnError> {
    if m < 2 {
        return Err(DnError::InvalidParameter(format!("disk mesh needs at least 2 rings, got {m}")));
    }
    let mut pts = vec![[0.0, 0.0, 0.0]];
    let mut start = vec![0usize];
    for i in 1..=m {
        start.push(pts.len());
        for k in 0..6 * i {
            let a = 2.0 * PI * k as f64 / (6 * i) as f64;
            let r = i as f64 / m as f64;
            pts.push([r * a.cos(), r * a.sin(), 0.0]);
        }
    }
    let mut tris = Vec::new();
    for k in 0..6 {
        tris.push([0, start[1] + k, start[1] + (k + 1) % 6]);
    }
    for i in 2..=m {
        let (ni, no) = (6 * i, 6 * (i - 1));
        let inner = |p: usize| start[i - 1] + p % no;
        let outer = |q: usize| start[i] + q % ni;
        let (mut p, mut q) = (0usize, 0usize);
        while p < no || q < ni {
            // advance whichever ring reaches the next angle first
            let next_in = if p < no { (p + 1) as f64 / no as f64 } else { f64::INFINITY };
            let next_out = if q < ni { (q + 1) as f64 / ni as f64 } else { f64::INFINITY };
            if q < ni && next_out <= next_in + 1e-12 {
                tris.push([inner(p), outer(q), outer(q + 1)]);
                q += 1;
            } else {
                tris.push([inner(p), outer(q), inner(p + 1)]);
                p += 1;
            }
        }
    }
    TriMesh::new(pts, tris, None)
}

/// Flat unit torus with a round hole of radius `1/4` at `(1/2, 1/2)`.
///
/// Log-polar layout around the hole: `8 * resolution` angles and
/// `resolution` rings, blending geometrically from the hole circle to the
/// square `[0,1]^2`, whose sides are then identified. The boundary loop
/// (hole circle) has `8 * resolution` vertices and `V - E + F = -1`.
pub fn make_one_holed_torus_mesh(resolution: usize) -> Result<TriMesh, DnError> {
    if resolution < 8 {
        return Err(DnError::InvalidParameter(format!("torus resolution must be >= 8, got {resolution}")));
    }
    torus_mesh(8 * resolution, resolution, 0.25)
}

fn torus_mesh(vb: usize, m: usize, hole: f64) -> Result<TriMesh, DnError> {
    let square = |phi: f64| 0.5 / phi.cos().abs().max(phi.sin().abs());
    let raw = |i: usize, k: usize| i * vb + k;
    let mut pts = Vec::with_capacity((m + 1) * vb);
    for i in 0..=m {
        for k in 0..vb {
            let phi = 2.0 * PI * k as f64 / vb as f64;
            let rad = hole * (square(phi) / hole).powf(i as f64 / m as f64);
            pts.push([0.5 + rad * phi.cos(), 0.5 + rad * phi.sin(), 0.0]);
        }
    }
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    let mut union = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    let eighth = vb / 8;
    for k in 0..vb {
        if k % eighth == 0 && (k / eighth) % 2 == 1 {
            union(raw(m, k), raw(m, eighth));
        } else {
            let phi = 2.0 * PI * k as f64 / vb as f64;
            let partner = if phi.cos().abs() > phi.sin().abs() { (vb / 2 + vb - k) % vb } else { (vb - k) % vb };
            union(raw(m, k), raw(m, partner));
        }
    }
    let mut id = vec![usize::MAX; pts.len()];
    let mut vertices = Vec::new();
    for a in 0..pts.len() {
        let r = find(&mut parent, a);
        if id[r] == usize::MAX {
            id[r] = vertices.len();
            vertices.push(pts[r]);
        }
        id[a] = id[r];
    }
    let mut tris = Vec::with_capacity(2 * m * vb);
    for i in 0..m {
        for k in 0..vb {
            let a = id[raw(i, k)];
            let b = id[raw(i, (k + 1) % vb)];
            let c = id[raw(i + 1, (k + 1) % vb)];
            let d = id[raw(i + 1, k)];
            if (k + i) % 2 == 0 {
                tris.push([a, c, b]);
                tris.push([a, d, c]);
            } else {
                tris.push([a, d, b]);
                tris.push([b, d, c]);
            }
        }
    }
    TriMesh::new(vertices, tris, Some([1.0, 1.0]))
}
