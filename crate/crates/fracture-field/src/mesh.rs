//! Structured triangulations of the unit square.
//!
//! The uniform mesh with resolution `h` places vertices at (i/h, j/h) and
//! splits every grid cell along its antidiagonal into a lower-left and an
//! upper-right right triangle. All angles are at most 90 degrees, which makes
//! the off-diagonal entries of the P1 stiffness matrix nonpositive; the phase
//! solver relies on that sign structure for its discrete maximum principle.
//!
//! Conventions:
//! - vertex index `l = j * (h + 1) + i` for the vertex at (i/h, j/h)
//! - triangles are stored cell by cell, row by row, lower half first
//! - carving a hole removes triangles but keeps the vertex index space; the
//!   `active` mask tells which vertices still carry degrees of freedom

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Off-diagonal stiffness entries above this value fail the angle condition.
pub const STIFFNESS_OFFDIAG_TOL: f64 = 1e-14;

/// Slack used when matching boundary coordinates against closed intervals.
const COORD_TOL: f64 = 1e-12;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Identity token tying nodal fields to the mesh they were built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshId(u64);

fn fresh_mesh_id() -> MeshId {
    MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
}

/// One of the four outer sides of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Boundary classification of a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Left,
    Right,
    Bottom,
    Top,
    /// Vertex on the staircase boundary left behind by a carved hole.
    Hole,
}

/// Which half of a grid cell a structured triangle covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellHalf {
    /// Lower-left half, right angle at the cell's lower-left corner.
    Lower,
    /// Upper-right half, right angle at the cell's upper-right corner.
    Upper,
}

/// A triangle with precomputed geometry.
///
/// `basis_gradients[i]` is the constant gradient of the P1 basis function of
/// `vertices[i]` on this element, so element loops never recompute geometry.
#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub vertices: [usize; 3],
    /// `None` for meshes assembled from explicit triangle lists.
    pub half: Option<CellHalf>,
    pub area: f64,
    pub basis_gradients: [[f64; 2]; 3],
}

/// Triangulation of (a subset of) the unit square.
#[derive(Clone, Debug)]
pub struct Mesh {
    h: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    active: Vec<bool>,
    boundary_tag: Vec<BoundaryTag>,
    lumped_weight: Vec<f64>,
    id: MeshId,
}

fn triangle_geometry(p: [[f64; 2]; 3]) -> Result<(f64, [[f64; 2]; 3])> {
    let d1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let d2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let det = d1[0] * d2[1] - d1[1] * d2[0];
    if !det.is_finite() || det == 0.0 {
        return Err(Error::InvalidMesh(format!(
            "degenerate triangle with vertices {:?}",
            p
        )));
    }
    let g1 = [d2[1] / det, -d2[0] / det];
    let g2 = [-d1[1] / det, d1[0] / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    Ok((det.abs() / 2.0, [g0, g1, g2]))
}

impl Mesh {
    /// Builds the uniform mesh with `h` subdivisions per side.
    ///
    /// The result has (h+1)^2 vertices and 2 h^2 triangles of area 1/(2 h^2).
    /// Construction is fully deterministic: identical inputs produce
    /// bitwise-identical vertex, triangle, and weight arrays.
    pub fn uniform(h: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidMesh("resolution h must be at least 1".into()));
        }
        let n = (h + 1) * (h + 1);
        let hf = h as f64;
        let mut vertices = Vec::with_capacity(n);
        for j in 0..=h {
            for i in 0..=h {
                vertices.push([i as f64 / hf, j as f64 / hf]);
            }
        }
        let idx = |i: usize, j: usize| j * (h + 1) + i;
        let mut triangles = Vec::with_capacity(2 * h * h);
        for j in 1..=h {
            for k in 1..=h {
                // Lower-left half: corners (k-1,j-1), (k-1,j), (k,j-1).
                let lower = [idx(k - 1, j - 1), idx(k - 1, j), idx(k, j - 1)];
                // Upper-right half: corners (k-1,j), (k,j-1), (k,j).
                let upper = [idx(k - 1, j), idx(k, j - 1), idx(k, j)];
                for (verts, half) in [(lower, CellHalf::Lower), (upper, CellHalf::Upper)] {
                    let coords = [vertices[verts[0]], vertices[verts[1]], vertices[verts[2]]];
                    let (area, basis_gradients) = triangle_geometry(coords)?;
                    triangles.push(Triangle {
                        vertices: verts,
                        half: Some(half),
                        area,
                        basis_gradients,
                    });
                }
            }
        }
        let mut mesh = Mesh {
            h,
            vertices,
            triangles,
            active: vec![true; n],
            boundary_tag: vec![BoundaryTag::Interior; n],
            lumped_weight: vec![0.0; n],
            id: fresh_mesh_id(),
        };
        mesh.recompute_lumped_weights();
        mesh.assign_outer_tags();
        Ok(mesh)
    }

    /// Builds a mesh from an explicit vertex and triangle list.
    ///
    /// Meant for test fixtures and irregular geometries; vertices not
    /// referenced by any triangle come out inactive. The structured `half`
    /// marker is not available here.
    pub fn from_triangles(vertices: Vec<[f64; 2]>, tris: &[[usize; 3]]) -> Result<Self> {
        let n = vertices.len();
        for (t, verts) in tris.iter().enumerate() {
            for &l in verts {
                if l >= n {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {l} out of {n}"
                    )));
                }
            }
            if verts[0] == verts[1] || verts[1] == verts[2] || verts[0] == verts[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} repeats a vertex: {:?}",
                    verts
                )));
            }
        }
        let mut triangles = Vec::with_capacity(tris.len());
        for verts in tris {
            let coords = [vertices[verts[0]], vertices[verts[1]], vertices[verts[2]]];
            let (area, basis_gradients) = triangle_geometry(coords)?;
            triangles.push(Triangle {
                vertices: *verts,
                half: None,
                area,
                basis_gradients,
            });
        }
        let mut active = vec![false; n];
        for tri in &triangles {
            for &l in &tri.vertices {
                active[l] = true;
            }
        }
        let mut mesh = Mesh {
            h: 0,
            vertices,
            triangles,
            active,
            boundary_tag: vec![BoundaryTag::Interior; n],
            lumped_weight: vec![0.0; n],
            id: fresh_mesh_id(),
        };
        mesh.recompute_lumped_weights();
        mesh.assign_outer_tags();
        Ok(mesh)
    }

    /// Removes every triangle whose barycenter lies strictly inside the disk.
    ///
    /// The vertex index space is preserved; vertices that lose all incident
    /// triangles are deactivated, and active vertices that lost at least one
    /// triangle are tagged [`BoundaryTag::Hole`]. Radius 0 is a no-op copy.
    ///
    /// # Errors
    ///
    /// Rejects disks that are not strictly inside the unit square and holes
    /// that would disconnect the remaining triangulation or swallow it whole.
    pub fn carve_hole(&self, center: [f64; 2], radius: f64) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() || radius < 0.0 {
            return Err(Error::InvalidHole(format!(
                "center {center:?}, radius {radius} must be finite with radius >= 0"
            )));
        }
        let inside = center[0] - radius > 0.0
            && center[0] + radius < 1.0
            && center[1] - radius > 0.0
            && center[1] + radius < 1.0;
        if !inside {
            return Err(Error::InvalidHole(format!(
                "disk at {center:?} with radius {radius} is not strictly inside the unit square"
            )));
        }
        let r2 = radius * radius;
        let mut incident_before = vec![0usize; self.vertices.len()];
        for tri in &self.triangles {
            for &l in &tri.vertices {
                incident_before[l] += 1;
            }
        }
        let kept: Vec<Triangle> = self
            .triangles
            .iter()
            .filter(|tri| {
                let [a, b, c] = tri.vertices;
                let bx = (self.vertices[a][0] + self.vertices[b][0] + self.vertices[c][0]) / 3.0;
                let by = (self.vertices[a][1] + self.vertices[b][1] + self.vertices[c][1]) / 3.0;
                let dx = bx - center[0];
                let dy = by - center[1];
                dx * dx + dy * dy >= r2
            })
            .copied()
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidHole(
                "hole removes every triangle of the mesh".into(),
            ));
        }
        if !triangles_connected(&kept) {
            return Err(Error::InvalidHole(
                "hole disconnects the remaining triangulation".into(),
            ));
        }
        let mut incident_after = vec![0usize; self.vertices.len()];
        for tri in &kept {
            for &l in &tri.vertices {
                incident_after[l] += 1;
            }
        }
        let mut mesh = Mesh {
            h: self.h,
            vertices: self.vertices.clone(),
            triangles: kept,
            active: incident_after.iter().map(|&c| c > 0).collect(),
            boundary_tag: vec![BoundaryTag::Interior; self.vertices.len()],
            lumped_weight: vec![0.0; self.vertices.len()],
            id: fresh_mesh_id(),
        };
        mesh.recompute_lumped_weights();
        mesh.assign_outer_tags();
        for l in 0..mesh.vertices.len() {
            let lost = incident_after[l] < incident_before[l];
            let was_hole = self.boundary_tag[l] == BoundaryTag::Hole;
            if mesh.active[l]
                && (lost || was_hole)
                && mesh.boundary_tag[l] == BoundaryTag::Interior
            {
                mesh.boundary_tag[l] = BoundaryTag::Hole;
            }
        }
        Ok(mesh)
    }

    fn recompute_lumped_weights(&mut self) {
        for w in &mut self.lumped_weight {
            *w = 0.0;
        }
        for tri in &self.triangles {
            let share = tri.area / 3.0;
            for &l in &tri.vertices {
                self.lumped_weight[l] += share;
            }
        }
    }

    fn assign_outer_tags(&mut self) {
        for (l, p) in self.vertices.iter().enumerate() {
            self.boundary_tag[l] = if p[0] == 0.0 {
                BoundaryTag::Left
            } else if p[0] == 1.0 {
                BoundaryTag::Right
            } else if p[1] == 0.0 {
                BoundaryTag::Bottom
            } else if p[1] == 1.0 {
                BoundaryTag::Top
            } else {
                BoundaryTag::Interior
            };
        }
    }

    /// Active vertices on `side` whose along-side coordinate lies in
    /// `interval` (closed, with a tiny matching slack). Sorted by index.
    pub fn boundary_vertices(&self, side: Side, interval: [f64; 2]) -> Vec<usize> {
        assert!(
            interval[0].is_finite() && interval[1].is_finite() && interval[0] <= interval[1],
            "boundary interval must be finite and ordered"
        );
        let lo = interval[0] - COORD_TOL;
        let hi = interval[1] + COORD_TOL;
        self.vertices
            .iter()
            .enumerate()
            .filter(|&(l, p)| {
                if !self.active[l] {
                    return false;
                }
                let (on_side, along) = match side {
                    Side::Left => (p[0] == 0.0, p[1]),
                    Side::Right => (p[0] == 1.0, p[1]),
                    Side::Bottom => (p[1] == 0.0, p[0]),
                    Side::Top => (p[1] == 1.0, p[0]),
                };
                on_side && along >= lo && along <= hi
            })
            .map(|(l, _)| l)
            .collect()
    }

    /// Checks the angle condition: every assembled off-diagonal entry of the
    /// unit-coefficient stiffness matrix must be nonpositive (up to
    /// [`STIFFNESS_OFFDIAG_TOL`]).
    pub fn satisfies_stiffness_condition(&self) -> bool {
        let mut offdiag: HashMap<(usize, usize), f64> = HashMap::new();
        for tri in &self.triangles {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    let ga = tri.basis_gradients[a];
                    let gb = tri.basis_gradients[b];
                    let entry = (ga[0] * gb[0] + ga[1] * gb[1]) * tri.area;
                    let (l, m) = (tri.vertices[a].min(tri.vertices[b]),
                                  tri.vertices[a].max(tri.vertices[b]));
                    *offdiag.entry((l, m)).or_insert(0.0) += entry;
                }
            }
        }
        offdiag.values().all(|&e| e <= STIFFNESS_OFFDIAG_TOL)
    }

    /// Index of the vertex at grid position (i, j) of a uniform mesh.
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.h > 0, "grid indexing needs a structured mesh");
        j * (self.h + 1) + i
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn vertex(&self, l: usize) -> [f64; 2] {
        self.vertices[l]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_active(&self, l: usize) -> bool {
        self.active[l]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Indices of active vertices in ascending order.
    pub fn active_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&l| self.active[l]).collect()
    }

    pub fn boundary_tag(&self, l: usize) -> BoundaryTag {
        self.boundary_tag[l]
    }

    /// Integral of the P1 basis function of vertex `l` (zero when inactive).
    pub fn lumped_weight(&self, l: usize) -> f64 {
        self.lumped_weight[l]
    }

    pub fn lumped_weights(&self) -> &[f64] {
        &self.lumped_weight
    }

    /// Largest lumped weight over active vertices.
    pub fn max_lumped_weight(&self) -> f64 {
        self.lumped_weight
            .iter()
            .fold(0.0_f64, |acc, &w| acc.max(w))
    }

    /// Total area covered by the triangulation.
    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }
}

/// True when the triangles form one edge-connected component.
fn triangles_connected(triangles: &[Triangle]) -> bool {
    if triangles.is_empty() {
        return false;
    }
    let mut edge_to_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        let [a, b, c] = tri.vertices;
        for (u, v) in [(a, b), (b, c), (a, c)] {
            edge_to_tris.entry((u.min(v), u.max(v))).or_default().push(t);
        }
    }
    let mut seen = vec![false; triangles.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 0;
    while let Some(t) = stack.pop() {
        count += 1;
        let [a, b, c] = triangles[t].vertices;
        for (u, v) in [(a, b), (b, c), (a, c)] {
            for &s in &edge_to_tris[&(u.min(v), u.max(v))] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
    }
    count == triangles.len()
}
