//! Independent oracles and the property suites built on them.
//!
//! Every oracle here deliberately avoids the code path it checks: dense
//! matrices assembled from per-triangle affine fits instead of the sparse
//! assembly, a KKT factorization instead of Dirichlet elimination, projected
//! gradient descent on the exact constraint instead of the penalty, and
//! central differences instead of the analytic gradient. The suites wrap
//! the comparisons into pass/fail reports for the `verify` subcommand.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::energy::{Energies, MaterialParams};
use crate::fem::{interpolate, interpolation_error_l1, NodalField};
use crate::mesh::{Mesh, Side};
use crate::scenario::{BoundaryClause, Scenario, SolveControls};
use crate::solvers::{solve_displacement, solve_phase, DirichletData};
use crate::{Error, Result};

/// Largest dense problem the oracles accept.
const MAX_ORACLE_DOFS: usize = 100;

/// Stationarity target of the projected-gradient phase oracle.
const PROJECTED_GRADIENT_TOL: f64 = 1e-10;

/// Outcome of one oracle comparison.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(name: &str, instances: usize, worst: f64, tol: f64) -> Self {
        OracleReport {
            name: name.to_owned(),
            instances,
            worst,
            tol,
            pass: worst <= tol,
        }
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} (instances={}, worst={:.3e}, tol={:.1e})",
            if self.pass { "ok  " } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.tol
        )
    }
}

/// Per-triangle basis gradients and area from an affine fit.
///
/// Solves the three interpolation systems with a dense LU instead of the
/// closed-form edge differences the mesh module uses.
fn affine_fit(mesh: &Mesh, tri: usize) -> Result<([[f64; 2]; 3], f64)> {
    let [a, b, c] = mesh.triangles()[tri].vertices;
    let [xa, ya] = mesh.vertex(a);
    let [xb, yb] = mesh.vertex(b);
    let [xc, yc] = mesh.vertex(c);
    let m = Matrix3::new(1.0, xa, ya, 1.0, xb, yb, 1.0, xc, yc);
    let det = m.determinant();
    let lu = m.lu();
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        let coef = lu
            .solve(&e)
            .ok_or_else(|| Error::InvalidMesh(format!("degenerate triangle {tri}")))?;
        grads[i] = [coef[1], coef[2]];
    }
    Ok((grads, det.abs() / 2.0))
}

/// Dense stiffness matrix with a per-triangle coefficient.
fn dense_stiffness(mesh: &Mesh, coeff: &[f64]) -> Result<DMatrix<f64>> {
    let n = mesh.n_vertices();
    let mut k = DMatrix::zeros(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = affine_fit(mesh, t)?;
        for i in 0..3 {
            for j in 0..3 {
                let dot = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                k[(tri.vertices[i], tri.vertices[j])] += coeff[t] * area * dot;
            }
        }
    }
    Ok(k)
}

fn dense_elastic_coefficients(mesh: &Mesh, v: &NodalField, p: &MaterialParams) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.vertices;
            let s = v.get(a).powi(2) + v.get(b).powi(2) + v.get(c).powi(2);
            p.eta + s / 3.0
        })
        .collect()
}

/// Per-vertex elastic load and lumped weights recomputed densely.
fn dense_factors(mesh: &Mesh, u: &NodalField) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mesh.n_vertices();
    let mut a = vec![0.0; n];
    let mut m = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = affine_fit(mesh, t)?;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for i in 0..3 {
            gx += u.get(tri.vertices[i]) * grads[i][0];
            gy += u.get(tri.vertices[i]) * grads[i][1];
        }
        let gsq = gx * gx + gy * gy;
        for &l in &tri.vertices {
            a[l] += gsq * area / 3.0;
            m[l] += area / 3.0;
        }
    }
    Ok((a, m))
}

/// Reference displacement solve via a dense KKT factorization.
///
/// Minimizes the elastic energy at frozen phase subject to the boundary
/// values by stacking the stiffness block and the constraint rows into one
/// indefinite system and LU-solving it.
pub fn dense_displacement_oracle(
    mesh: &Mesh,
    v: &NodalField,
    bc: &DirichletData,
    p: &MaterialParams,
) -> Result<NodalField> {
    let active = mesh.active_vertices();
    if active.len() > MAX_ORACLE_DOFS {
        return Err(Error::InvalidParams(format!(
            "{} dofs exceed the dense-oracle limit {MAX_ORACLE_DOFS}",
            active.len()
        )));
    }
    if bc.is_empty() {
        return Err(Error::InvalidBoundaryData(
            "dense KKT system is singular without boundary data".into(),
        ));
    }
    let coeff = dense_elastic_coefficients(mesh, v, p);
    let k_full = dense_stiffness(mesh, &coeff)?;
    let na = active.len();
    let nc = bc.len();
    let mut pos = vec![usize::MAX; mesh.n_vertices()];
    for (i, &l) in active.iter().enumerate() {
        pos[l] = i;
    }
    let mut kkt = DMatrix::zeros(na + nc, na + nc);
    for (i, &li) in active.iter().enumerate() {
        for (j, &lj) in active.iter().enumerate() {
            kkt[(i, j)] = k_full[(li, lj)];
        }
    }
    let mut rhs = DVector::zeros(na + nc);
    for (c, &(l, g)) in bc.entries().iter().enumerate() {
        kkt[(na + c, pos[l])] = 1.0;
        kkt[(pos[l], na + c)] = 1.0;
        rhs[na + c] = g;
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolveFailed("singular KKT system".into()))?;
    let mut values = vec![0.0; mesh.n_vertices()];
    for (i, &l) in active.iter().enumerate() {
        values[l] = sol[i];
    }
    NodalField::from_values(mesh, values)
}

/// Reference phase solve on the exact constraint `v <= v_prev`.
///
/// Projected gradient descent with the inverse Lipschitz step, iterated
/// until the projected-gradient sup norm drops to the stationarity target.
/// This solves the true constrained problem, so comparing it against the
/// penalized Newton solve isolates the penalty bias.
pub fn dense_phase_oracle(
    mesh: &Mesh,
    u: &NodalField,
    v_prev: &NodalField,
    p: &MaterialParams,
) -> Result<NodalField> {
    let active = mesh.active_vertices();
    if active.len() > MAX_ORACLE_DOFS {
        return Err(Error::InvalidParams(format!(
            "{} dofs exceed the dense-oracle limit {MAX_ORACLE_DOFS}",
            active.len()
        )));
    }
    let (a, m) = dense_factors(mesh, u)?;
    let k = dense_stiffness(mesh, &vec![1.0; mesh.triangles().len()])?;
    let c0 = p.kappa / (2.0 * p.eps);
    let two_ke = 2.0 * p.kappa * p.eps;
    // Lipschitz bound: worst-case row sum of the Hessian diag(a) + 2ke K + c0 diag(m).
    let lip = active
        .iter()
        .map(|&l| {
            let row: f64 = active.iter().map(|&j| k[(l, j)].abs()).sum();
            a[l] + two_ke * row + c0 * m[l]
        })
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let step = 1.0 / lip;
    let mut v: Vec<f64> = active.iter().map(|&l| v_prev.get(l)).collect();
    let grad = |v: &[f64]| -> Vec<f64> {
        active
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let kv: f64 = active
                    .iter()
                    .enumerate()
                    .map(|(j, &lj)| k[(l, lj)] * v[j])
                    .sum();
                a[l] * v[i] + two_ke * kv - c0 * m[l] * (1.0 - v[i])
            })
            .collect()
    };
    let mut converged = false;
    for _ in 0..2_000_000 {
        let g = grad(&v);
        let mut worst = 0.0_f64;
        let mut next = v.clone();
        for (i, &l) in active.iter().enumerate() {
            let trial = (v[i] - step * g[i]).min(v_prev.get(l));
            worst = worst.max((v[i] - trial).abs() / step);
            next[i] = trial;
        }
        v = next;
        if worst <= PROJECTED_GRADIENT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolveFailed(
            "projected gradient oracle did not reach stationarity".into(),
        ));
    }
    let mut values = vec![0.0; mesh.n_vertices()];
    for (i, &l) in active.iter().enumerate() {
        values[l] = v[i];
    }
    NodalField::from_values(mesh, values)
}

/// Central-difference check of the phase gradient on random states.
///
/// Components whose penalty kink lies within ten difference steps are
/// skipped; elsewhere the analytic and numerical derivatives must agree to
/// the stated relative tolerance.
pub fn fd_gradient_check(
    p: MaterialParams,
    step: f64,
    instances: usize,
    seed: u64,
) -> Result<OracleReport> {
    assert!((1e-8..=1e-4).contains(&step), "step {step} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for h in [2usize, 3, 4] {
        let mesh = Mesh::uniform(h)?;
        let energies = Energies::new(&mesh, p)?;
        for _ in 0..instances {
            let (u, v, v_prev) = random_state(&mesh, &mut rng);
            let g = energies.phase_gradient(&u, &v, &v_prev)?;
            let scale = g.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            for l in mesh.active_vertices() {
                if (v.get(l) - v_prev.get(l)).abs() <= 10.0 * step {
                    continue;
                }
                let mut lo = v.clone();
                lo.set(l, v.get(l) - step);
                let mut hi = v.clone();
                hi.set(l, v.get(l) + step);
                let e_lo = energies.penalized_energy(&u, &lo, &v_prev)?.total;
                let e_hi = energies.penalized_energy(&u, &hi, &v_prev)?.total;
                let fd = (e_hi - e_lo) / (2.0 * step);
                worst = worst.max((fd - g[l]).abs() / scale);
            }
        }
    }
    Ok(OracleReport::new(
        "phase-gradient-central-difference",
        3 * instances,
        worst,
        1e-6,
    ))
}

/// Central-difference check of Hessian-vector products on random states.
pub fn fd_hessian_check(
    p: MaterialParams,
    step: f64,
    instances: usize,
    seed: u64,
) -> Result<OracleReport> {
    assert!((1e-8..=1e-4).contains(&step), "step {step} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for h in [2usize, 3] {
        let mesh = Mesh::uniform(h)?;
        let energies = Energies::new(&mesh, p)?;
        for _ in 0..instances {
            let (u, v, v_prev) = random_state(&mesh, &mut rng);
            // Keep clear of the penalty kinks so the Hessian is smooth
            // along the probe direction.
            if mesh
                .active_vertices()
                .iter()
                .any(|&l| (v.get(l) - v_prev.get(l)).abs() <= 10.0 * step)
            {
                continue;
            }
            let hess = energies.phase_hessian(&u, &v, &v_prev)?;
            let dir: Vec<f64> = (0..mesh.n_vertices())
                .map(|l| {
                    if mesh.is_active(l) {
                        rng.gen_range(-1.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let hv = hess.matvec(&dir);
            let perturb = |s: f64| -> Result<Vec<f64>> {
                let vals: Vec<f64> = v
                    .values()
                    .iter()
                    .zip(&dir)
                    .map(|(x, d)| x + s * d)
                    .collect();
                let f = NodalField::from_values(&mesh, vals)?;
                energies.phase_gradient(&u, &f, &v_prev)
            };
            let g_hi = perturb(step)?;
            let g_lo = perturb(-step)?;
            let scale = hv.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            for l in mesh.active_vertices() {
                let fd = (g_hi[l] - g_lo[l]) / (2.0 * step);
                worst = worst.max((fd - hv[l]).abs() / scale);
            }
        }
    }
    Ok(OracleReport::new(
        "phase-hessian-central-difference",
        2 * instances,
        worst,
        1e-5,
    ))
}

fn random_state(mesh: &Mesh, rng: &mut ChaCha8Rng) -> (NodalField, NodalField, NodalField) {
    let n = mesh.n_vertices();
    let u = NodalField::from_values(
        mesh,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("finite");
    let v = NodalField::from_values(mesh, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
        .expect("finite");
    let v_prev =
        NodalField::from_values(mesh, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .expect("finite");
    (u, v, v_prev)
}

/// Least-squares slope of `ln err` against `ln (1/h)`.
fn slope_fit(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(h, _)| -(h as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Interpolation errors measured at one resolution.
#[derive(Clone, Copy, Debug)]
pub struct RateRow {
    pub h: usize,
    /// Square of a linear ramp; exact error `1/(6 h^2)`.
    pub ramp_square: f64,
    /// Square of an interpolated sine sheet.
    pub sine_square: f64,
    /// Complement-square of an interpolated smooth bump.
    pub bump_complement: f64,
    /// Affine nonlinearity, exact to roundoff.
    pub affine: f64,
}

/// Measures the interpolation-error decay over a mesh family.
pub fn rate_rows(h_list: &[usize]) -> Result<Vec<RateRow>> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mesh = Mesh::uniform(h)?;
        let ramp = interpolate(&mesh, |x, _| x)?;
        let sine = interpolate(&mesh, |x, y| {
            (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
        })?;
        let bump = interpolate(&mesh, |x, y| {
            0.5 + 0.3
                * (2.0 * std::f64::consts::PI * x).sin()
                * (std::f64::consts::PI * y).cos()
        })?;
        rows.push(RateRow {
            h,
            ramp_square: interpolation_error_l1(&mesh, &ramp, |s| s * s)?,
            sine_square: interpolation_error_l1(&mesh, &sine, |s| s * s)?,
            bump_complement: interpolation_error_l1(&mesh, &bump, |s| (1.0 - s) * (1.0 - s))?,
            affine: interpolation_error_l1(&mesh, &ramp, |s| 2.0 * s + 0.3)?,
        });
    }
    Ok(rows)
}

/// Pass/fail reports derived from a decay table.
///
/// The ramp benchmark must match its closed form, the two smooth cases
/// must decay with fitted slope 2 within a tenth, and the affine case must
/// interpolate exactly up to roundoff.
pub fn rate_reports(rows: &[RateRow]) -> Result<Vec<OracleReport>> {
    if rows.len() < 2 {
        return Err(Error::InvalidParams(
            "rate study needs at least two resolutions".into(),
        ));
    }
    let closed_worst = rows
        .iter()
        .map(|r| {
            let exact = 1.0 / (6.0 * (r.h * r.h) as f64);
            (r.ramp_square - exact).abs() / exact
        })
        .fold(0.0_f64, f64::max);
    let affine_worst = rows.iter().map(|r| r.affine).fold(0.0_f64, f64::max);
    let sine: Vec<(usize, f64)> = rows.iter().map(|r| (r.h, r.sine_square)).collect();
    let bump: Vec<(usize, f64)> = rows.iter().map(|r| (r.h, r.bump_complement)).collect();
    Ok(vec![
        OracleReport::new("interp-error-closed-form", rows.len(), closed_worst, 1e-10),
        OracleReport::new(
            "interp-rate-slope-sine",
            rows.len(),
            (slope_fit(&sine) - 2.0).abs(),
            0.1,
        ),
        OracleReport::new(
            "interp-rate-slope-bump",
            rows.len(),
            (slope_fit(&bump) - 2.0).abs(),
            0.1,
        ),
        OracleReport::new("interp-affine-exact", rows.len(), affine_worst, 1e-14),
    ])
}

/// [`rate_rows`] and [`rate_reports`] in one call.
pub fn rate_study(h_list: &[usize]) -> Result<Vec<OracleReport>> {
    rate_reports(&rate_rows(h_list)?)
}

fn suite_mesh() -> Result<Vec<OracleReport>> {
    let mut meshes = vec![
        Mesh::uniform(2)?,
        Mesh::uniform(5)?,
        Mesh::uniform(16)?,
        Mesh::uniform(16)?.carve_hole([0.7, 0.3], 0.1)?,
    ];
    let mut worst_offdiag = f64::NEG_INFINITY;
    let mut worst_partition = 0.0_f64;
    for mesh in meshes.drain(..) {
        let k = crate::fem::assemble_unit_stiffness(&mesh)?;
        for l in mesh.active_vertices() {
            let (cols, vals) = k.row(l);
            for (&j, &val) in cols.iter().zip(vals) {
                if j != l {
                    worst_offdiag = worst_offdiag.max(val);
                }
            }
        }
        let sum: f64 = mesh.active_vertices().iter().map(|&l| mesh.lumped_weight(l)).sum();
        worst_partition = worst_partition.max((sum - mesh.total_area()).abs());
    }
    Ok(vec![
        OracleReport::new("stiffness-offdiagonal-sign", 4, worst_offdiag.max(0.0), 1e-14),
        OracleReport::new("lumped-weight-partition", 4, worst_partition, 1e-12),
    ])
}

fn suite_fem() -> Result<Vec<OracleReport>> {
    rate_study(&[8, 16, 32])
}

fn suite_energy() -> Result<Vec<OracleReport>> {
    let p = MaterialParams::default();
    Ok(vec![
        fd_gradient_check(p, 1e-6, 12, 101)?,
        fd_hessian_check(p, 1e-6, 12, 202)?,
    ])
}

fn suite_solvers() -> Result<Vec<OracleReport>> {
    let p = MaterialParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7_001);
    let mesh = Mesh::uniform(2)?;
    let energies = Energies::new(&mesh, p)?;

    // Displacement: sparse elimination vs dense KKT on random phases.
    let mut worst_u = 0.0_f64;
    for _ in 0..50 {
        let v = NodalField::from_values(
            &mesh,
            (0..mesh.n_vertices()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )?;
        let mut pairs = Vec::new();
        for side in [Side::Left, Side::Right] {
            for l in mesh.boundary_vertices(side, [0.0, 1.0]) {
                pairs.push((l, rng.gen_range(-1.0..1.0)));
            }
        }
        let bc = DirichletData::new(&mesh, pairs)?;
        let (u_sparse, _) = solve_displacement(&energies, &v, &bc, 1e-12)?;
        let u_dense = dense_displacement_oracle(&mesh, &v, &bc, &p)?;
        worst_u = worst_u.max(u_sparse.max_diff(&mesh, &u_dense)?);
    }

    // Affine data: exact reproduction, and invariance under uniform phase
    // scaling (v = 0 and v = 1 share the argmin).
    let exact = interpolate(&mesh, |x, _| x)?;
    let mut all_sides = Vec::new();
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        for l in mesh.boundary_vertices(side, [0.0, 1.0]) {
            let [x, _] = mesh.vertex(l);
            all_sides.push((l, x));
        }
    }
    let bc_ramp = DirichletData::new(&mesh, all_sides)?;
    let mut worst_affine = 0.0_f64;
    let u_broken = dense_displacement_oracle(&mesh, &NodalField::constant(&mesh, 0.0), &bc_ramp, &p)?;
    let u_intact = dense_displacement_oracle(&mesh, &NodalField::constant(&mesh, 1.0), &bc_ramp, &p)?;
    worst_affine = worst_affine.max(u_intact.max_diff(&mesh, &exact)?);
    worst_affine = worst_affine.max(u_broken.max_diff(&mesh, &u_intact)?);

    // Phase: stiff penalty vs the exact constraint.
    let mut worst_v = 0.0_f64;
    let stiff = Energies::new(&mesh, p.with_zeta(1e8))?;
    for _ in 0..50 {
        let (u, _, v_prev) = random_state(&mesh, &mut rng);
        let (v_pen, report) = solve_phase(&stiff, &u, &v_prev, 2e-3, 50)?;
        assert!(report.converged);
        let v_oracle = dense_phase_oracle(&mesh, &u, &v_prev, &p)?;
        worst_v = worst_v.max(v_pen.max_diff(&mesh, &v_oracle)?);
    }

    // The constrained oracle keeps its output inside [0, 1] on meshes
    // satisfying the stiffness condition.
    let mut worst_bounds = 0.0_f64;
    for h in [2usize, 3] {
        let mesh_b = Mesh::uniform(h)?;
        for _ in 0..50 {
            let (u, _, v_prev) = random_state(&mesh_b, &mut rng);
            let v = dense_phase_oracle(&mesh_b, &u, &v_prev, &p)?;
            for l in mesh_b.active_vertices() {
                worst_bounds = worst_bounds.max(-v.get(l)).max(v.get(l) - 1.0);
            }
        }
    }

    // The penalized solve obeys the same bounds to solver tolerance.
    let mut worst_mp = 0.0_f64;
    for h in [2usize, 4, 8] {
        let mesh_m = Mesh::uniform(h)?;
        let en = Energies::new(&mesh_m, p)?;
        for _ in 0..100 {
            let (u, _, v_prev) = random_state(&mesh_m, &mut rng);
            let (v, _) = solve_phase(&en, &u, &v_prev, 2e-3, 50)?;
            for l in mesh_m.active_vertices() {
                worst_mp = worst_mp.max(-v.get(l)).max(v.get(l) - 1.0);
            }
        }
    }

    Ok(vec![
        OracleReport::new("displacement-vs-dense-kkt", 50, worst_u, 1e-8),
        OracleReport::new("displacement-affine-cases", 2, worst_affine, 1e-12),
        OracleReport::new("phase-penalty-vs-constraint", 50, worst_v, 1e-4),
        OracleReport::new("phase-oracle-bounds", 100, worst_bounds, 1e-8),
        OracleReport::new("phase-maximum-principle", 300, worst_mp, 1e-8),
    ])
}

fn suite_evolution() -> Result<Vec<OracleReport>> {
    let p = MaterialParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9_100);
    let mesh = Mesh::uniform(2)?;
    let energies = Energies::new(&mesh, p)?;
    let controls = SolveControls::default();
    let scenario = Scenario {
        name: "oracle-step".into(),
        mesh_h: 2,
        params: p,
        tau: 0.01,
        t_end: 0.02,
        boundary: vec![
            BoundaryClause {
                side: Side::Left,
                interval: [0.0, 0.45],
                rate: 1.0,
            },
            BoundaryClause {
                side: Side::Left,
                interval: [0.55, 1.0],
                rate: -1.0,
            },
        ],
        precrack: None,
        hole: None,
        controls,
        output: Default::default(),
    };

    // One alternating step from a consistent previous state must satisfy
    // the per-step energy inequality up to solver tolerance.
    let mut worst_slack = 0.0_f64;
    for k in 0..25 {
        let t_old = 0.2 + 0.02 * k as f64;
        let t_new = t_old + scenario.tau;
        let v_prev = NodalField::from_values(
            &mesh,
            (0..mesh.n_vertices()).map(|_| rng.gen_range(0.2..1.0)).collect(),
        )?;
        let bc_old = scenario.dirichlet_at(&mesh, t_old)?;
        let bc_new = scenario.dirichlet_at(&mesh, t_new)?;
        let (u_old, _) = solve_displacement(&energies, &v_prev, &bc_old, controls.tol_lin)?;
        let j0 = energies.total_energy(&u_old, &v_prev)?;
        let out = crate::evolution::altmin_step(&energies, &v_prev, &bc_new, &controls)?;
        let slack = crate::evolution::step_slack(
            &energies,
            (&u_old, &v_prev),
            (&out.u, &out.v),
            &bc_old,
            &bc_new,
        )?;
        worst_slack = worst_slack.max((-slack) / j0.max(1e-300));
    }

    // Inner-loop descent on short random-phase runs.
    let mut worst_rise = 0.0_f64;
    for seed in 0..5u64 {
        let mut s = scenario.clone();
        s.name = format!("oracle-run-{seed}");
        s.mesh_h = 3 + seed as usize % 2;
        s.t_end = 0.05;
        let result = crate::evolution::run_evolution(&s)?;
        let j0 = result
            .chains
            .first()
            .and_then(|c| c.first())
            .map(|&(a, _)| a.abs())
            .unwrap_or(1.0);
        for chain in &result.chains {
            let flat: Vec<f64> = chain.iter().flat_map(|&(a, b)| [a, b]).collect();
            for w in flat.windows(2) {
                worst_rise = worst_rise.max((w[1] - w[0]) / j0.max(1e-300));
            }
        }
    }

    Ok(vec![
        OracleReport::new("altmin-step-energy-slack", 25, worst_slack, 1e-9),
        OracleReport::new("altmin-chain-descent", 5, worst_rise, 1e-12),
    ])
}

/// Runs one named suite, or all of them.
pub fn run_suite(name: &str) -> Result<Vec<OracleReport>> {
    match name {
        "mesh" => suite_mesh(),
        "fem" => suite_fem(),
        "energy" => suite_energy(),
        "solvers" => suite_solvers(),
        "evolution" => suite_evolution(),
        "all" => {
            let mut all = Vec::new();
            for s in ["mesh", "fem", "energy", "solvers", "evolution"] {
                all.extend(run_suite(s)?);
            }
            Ok(all)
        }
        other => Err(Error::InvalidParams(format!(
            "unknown suite {other:?}; expected mesh, fem, energy, solvers, evolution, or all"
        ))),
    }
}
