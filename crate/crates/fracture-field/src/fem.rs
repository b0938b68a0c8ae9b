//! P1 finite element plumbing: nodal fields, lumped integration, sparse
//! stiffness assembly, and interpolation error measurement.
//!
//! Fields store one value per mesh vertex, including inactive vertices, whose
//! entries are pinned to zero and ignored by every integral. Assembly walks
//! triangles in storage order and accumulates into ordered per-row maps, so
//! identical inputs give bitwise-identical matrices.

use std::collections::BTreeMap;

use crate::mesh::{Mesh, MeshId};
use crate::{Error, Result};

/// A scalar P1 finite element function given by its vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    mesh_id: MeshId,
}

impl NodalField {
    /// Constant field on active vertices (inactive entries stay zero).
    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        let mut values = vec![0.0; mesh.n_vertices()];
        for (l, v) in values.iter_mut().enumerate() {
            if mesh.is_active(l) {
                *v = value;
            }
        }
        NodalField {
            values,
            mesh_id: mesh.id(),
        }
    }

    /// Wraps raw vertex values. Inactive entries are zeroed; non-finite
    /// active entries are rejected.
    pub fn from_values(mesh: &Mesh, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidMesh(format!(
                "field length {} does not match vertex count {}",
                values.len(),
                mesh.n_vertices()
            )));
        }
        for (l, v) in values.iter_mut().enumerate() {
            if !mesh.is_active(l) {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(format!("field value at vertex {l}")));
            }
        }
        Ok(NodalField {
            values,
            mesh_id: mesh.id(),
        })
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, l: usize) -> f64 {
        self.values[l]
    }

    pub fn set(&mut self, l: usize, value: f64) {
        self.values[l] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max-norm of the difference over active vertices.
    pub fn max_diff(&self, mesh: &Mesh, other: &NodalField) -> Result<f64> {
        check_field(mesh, self)?;
        check_field(mesh, other)?;
        let mut worst = 0.0_f64;
        for l in 0..self.values.len() {
            if mesh.is_active(l) {
                worst = worst.max((self.values[l] - other.values[l]).abs());
            }
        }
        Ok(worst)
    }
}

/// Fails with [`Error::MeshMismatch`] unless the field was built on `mesh`.
pub fn check_field(mesh: &Mesh, field: &NodalField) -> Result<()> {
    if field.mesh_id != mesh.id() || field.values.len() != mesh.n_vertices() {
        return Err(Error::MeshMismatch);
    }
    Ok(())
}

/// Nodal interpolant of a pointwise function, evaluated at active vertices.
pub fn interpolate<F: Fn(f64, f64) -> f64>(mesh: &Mesh, f: F) -> Result<NodalField> {
    let mut values = vec![0.0; mesh.n_vertices()];
    for l in 0..mesh.n_vertices() {
        if mesh.is_active(l) {
            let [x, y] = mesh.vertex(l);
            let v = f(x, y);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "interpolated function at vertex {l} ({x}, {y})"
                )));
            }
            values[l] = v;
        }
    }
    Ok(NodalField {
        values,
        mesh_id: mesh.id(),
    })
}

/// Applies `g` to each active nodal value, i.e. the interpolant of `g(v)`.
pub fn nodal_map<G: Fn(f64) -> f64>(mesh: &Mesh, v: &NodalField, g: G) -> Result<NodalField> {
    check_field(mesh, v)?;
    let mut values = vec![0.0; mesh.n_vertices()];
    for l in 0..mesh.n_vertices() {
        if mesh.is_active(l) {
            let w = g(v.values[l]);
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("nodal map at vertex {l}")));
            }
            values[l] = w;
        }
    }
    Ok(NodalField {
        values,
        mesh_id: mesh.id(),
    })
}

/// Per-triangle constant gradient of a P1 field, in triangle storage order.
pub fn element_gradient(mesh: &Mesh, v: &NodalField) -> Result<Vec<[f64; 2]>> {
    check_field(mesh, v)?;
    let mut grads = Vec::with_capacity(mesh.triangles().len());
    for tri in mesh.triangles() {
        let mut g = [0.0, 0.0];
        for (k, &l) in tri.vertices.iter().enumerate() {
            let val = v.values[l];
            g[0] += val * tri.basis_gradients[k][0];
            g[1] += val * tri.basis_gradients[k][1];
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Lumped (vertex quadrature) integral: sum of `w_l * m_l` with `m_l` the
/// basis function integrals. Exact for piecewise affine integrands.
pub fn lumped_integral(mesh: &Mesh, w: &NodalField) -> Result<f64> {
    check_field(mesh, w)?;
    let mut total = 0.0;
    for (l, &value) in w.values.iter().enumerate() {
        if mesh.is_active(l) {
            total += value * mesh.lumped_weight(l);
        }
    }
    Ok(total)
}

/// Sparse symmetric matrix in compressed row storage (both triangles kept).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    fn from_row_maps(n: usize, rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseSymmetric {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Builds from raw compressed-row arrays; columns must be strictly
    /// ascending within each row.
    pub fn from_raw(n: usize, row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Self {
        assert_eq!(row_ptr.len(), n + 1);
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        assert_eq!(cols.len(), vals.len());
        for i in 0..n {
            let span = &cols[row_ptr[i]..row_ptr[i + 1]];
            assert!(span.windows(2).all(|w| w[0] < w[1]), "unsorted row {i}");
            assert!(span.iter().all(|&c| c < n));
        }
        SparseSymmetric {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Extracts the square submatrix over `keep` (indices ascending), with
    /// entries outside `keep` dropped.
    pub fn restrict(&self, keep: &[usize]) -> SparseSymmetric {
        let mut place = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            place[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &old in keep {
            let (rc, rv) = self.row(old);
            for (&c, &v) in rc.iter().zip(rv) {
                if place[c] != usize::MAX {
                    cols.push(place[c]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseSymmetric {
            n: keep.len(),
            row_ptr,
            cols,
            vals,
        }
    }

    /// Adds `delta` to the diagonal entry (i, i), which must exist.
    pub fn add_to_diagonal(&mut self, i: usize, delta: f64) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        let k = self.cols[span.clone()]
            .binary_search(&i)
            .expect("diagonal entry missing");
        self.vals[span.start + k] += delta;
    }

    /// Scales every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.vals {
            *v *= factor;
        }
    }
}

/// Assembles the stiffness matrix with one nonnegative coefficient per
/// triangle: entries `sum_K c_K grad(xi_l) . grad(xi_m) |K|`.
///
/// Rows of inactive vertices are empty. Triangle order fixes the floating
/// point summation order, so assembly is deterministic.
pub fn assemble_stiffness(mesh: &Mesh, coeff: &[f64]) -> Result<SparseSymmetric> {
    if coeff.len() != mesh.triangles().len() {
        return Err(Error::InvalidMesh(format!(
            "coefficient count {} does not match triangle count {}",
            coeff.len(),
            mesh.triangles().len()
        )));
    }
    for (t, &c) in coeff.iter().enumerate() {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::NonFinite(format!(
                "stiffness coefficient {c} on triangle {t} (must be finite and >= 0)"
            )));
        }
    }
    let n = mesh.n_vertices();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (tri, &c) in mesh.triangles().iter().zip(coeff) {
        for a in 0..3 {
            for b in 0..3 {
                let ga = tri.basis_gradients[a];
                let gb = tri.basis_gradients[b];
                let entry = c * (ga[0] * gb[0] + ga[1] * gb[1]) * tri.area;
                *rows[tri.vertices[a]].entry(tri.vertices[b]).or_insert(0.0) += entry;
            }
        }
    }
    Ok(SparseSymmetric::from_row_maps(n, rows))
}

/// Unit-coefficient stiffness matrix.
pub fn assemble_unit_stiffness(mesh: &Mesh) -> Result<SparseSymmetric> {
    assemble_stiffness(mesh, &vec![1.0; mesh.triangles().len()])
}

// Six point triangle quadrature, exact through polynomial degree 4.
// Barycentric coordinates and weights (weights sum to 1).
const QUAD_DEG4: [([f64; 3], f64); 6] = [
    (
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        0.223381589678011,
    ),
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        0.109951743655322,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

/// Uniform refinement depth for the interpolation error quadrature. Depth 2
/// splits each element into 16 congruent subtriangles, which keeps the
/// integral of |g(v) - interp(g(v))| accurate even when the sign of the
/// integrand changes inside an element.
const INTERP_SUBDIV_DEPTH: usize = 2;

/// L1 distance between `g(v)` and its nodal interpolant.
///
/// On each triangle `v` is affine, so for polynomial `g` the integrand is a
/// polynomial minus its affine interpolant; the subdivided degree 4 rule
/// integrates the quadratic case exactly (up to rounding).
pub fn interpolation_error_l1<G: Fn(f64) -> f64>(
    mesh: &Mesh,
    v: &NodalField,
    g: G,
) -> Result<f64> {
    check_field(mesh, v)?;
    let mut total = 0.0;
    for tri in mesh.triangles() {
        let vv = [
            v.values[tri.vertices[0]],
            v.values[tri.vertices[1]],
            v.values[tri.vertices[2]],
        ];
        let gv = [g(vv[0]), g(vv[1]), g(vv[2])];
        if !gv.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("g(v) at a triangle vertex".into()));
        }
        // Subtriangles in barycentric coordinates relative to this element.
        let mut subs = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 0..INTERP_SUBDIV_DEPTH {
            let mut next = Vec::with_capacity(subs.len() * 4);
            for s in &subs {
                let mid = |a: [f64; 3], b: [f64; 3]| {
                    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
                };
                let m01 = mid(s[0], s[1]);
                let m12 = mid(s[1], s[2]);
                let m02 = mid(s[0], s[2]);
                next.push([s[0], m01, m02]);
                next.push([m01, s[1], m12]);
                next.push([m02, m12, s[2]]);
                next.push([m01, m12, m02]);
            }
            subs = next;
        }
        let sub_area = tri.area / (subs.len() as f64);
        for s in &subs {
            for (bary, weight) in QUAD_DEG4 {
                // Barycentric point within the subtriangle, then within K.
                let mut lam = [0.0; 3];
                for c in 0..3 {
                    lam[c] =
                        bary[0] * s[0][c] + bary[1] * s[1][c] + bary[2] * s[2][c];
                }
                let v_at = lam[0] * vv[0] + lam[1] * vv[1] + lam[2] * vv[2];
                let interp_at = lam[0] * gv[0] + lam[1] * gv[1] + lam[2] * gv[2];
                let exact_at = g(v_at);
                total += weight * sub_area * (exact_at - interp_at).abs();
            }
        }
    }
    Ok(total)
}
