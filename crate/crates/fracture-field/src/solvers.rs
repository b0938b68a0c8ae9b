//! The two subproblem solvers of the alternating minimization.
//!
//! Displacement: with the phase frozen the elastic energy is quadratic, so
//! the solve is one SPD linear system over the unconstrained vertices after
//! eliminating Dirichlet values.
//!
//! Phase: with the displacement frozen the penalized energy is convex,
//! C^1, and piecewise quadratic; a semismooth Newton iteration with the
//! active-set Hessian jumps between the quadratic pieces and terminates once
//! both the step and the gradient are small. A backtracking guard only
//! engages when a full step would raise the energy, which preserves the
//! monotone descent the evolution bookkeeping relies on.

use crate::energy::Energies;
use crate::fem::{assemble_stiffness, check_field, NodalField};
use crate::mesh::Mesh;
use crate::spd::{solve_refined, EnvelopeLdlt};
use crate::{Error, Result};

/// Maximum iterative refinement passes for the elastic linear solve.
const MAX_REFINE: usize = 5;

/// Halvings allowed in the phase line search guard.
const MAX_HALVINGS: usize = 30;

/// Sufficient-decrease constant of the backtracking guard.
const ARMIJO_C1: f64 = 1e-4;

/// Sorted, validated Dirichlet boundary values.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletData {
    entries: Vec<(usize, f64)>,
}

impl DirichletData {
    /// Validates and sorts `(vertex, value)` pairs.
    ///
    /// Duplicate assignments with equal values collapse; conflicting values
    /// for one vertex are rejected with the vertex named.
    pub fn new(mesh: &Mesh, pairs: Vec<(usize, f64)>) -> Result<Self> {
        let mut entries = pairs;
        for &(l, g) in &entries {
            if l >= mesh.n_vertices() {
                return Err(Error::InvalidBoundaryData(format!(
                    "vertex {l} out of range"
                )));
            }
            if !mesh.is_active(l) {
                return Err(Error::InvalidBoundaryData(format!(
                    "vertex {l} is inactive"
                )));
            }
            if !g.is_finite() {
                return Err(Error::InvalidBoundaryData(format!(
                    "non-finite value at vertex {l}"
                )));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        entries.dedup();
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                let [x, y] = mesh.vertex(w[0].0);
                return Err(Error::InvalidBoundaryData(format!(
                    "vertex {} at ({x}, {y}) receives two values: {} and {}",
                    w[0].0, w[0].1, w[1].1
                )));
            }
        }
        Ok(DirichletData { entries })
    }

    pub fn empty() -> Self {
        DirichletData {
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn contains(&self, l: usize) -> bool {
        self.entries.binary_search_by_key(&l, |e| e.0).is_ok()
    }

    /// The boundary values extended by zero to every other vertex.
    pub fn zero_extended(&self, mesh: &Mesh) -> Result<NodalField> {
        let mut values = vec![0.0; mesh.n_vertices()];
        for &(l, g) in &self.entries {
            values[l] = g;
        }
        NodalField::from_values(mesh, values)
    }
}

/// Diagnostics of one subproblem solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    /// Refinement passes (displacement) or Newton iterations (phase).
    pub iterations: usize,
    /// Relative linear residual, or the final gradient sup norm.
    pub final_residual: f64,
    pub converged: bool,
    /// Vertices with the irreversibility penalty engaged (phase solve only).
    pub active_set_size: Option<usize>,
    pub method: &'static str,
}

/// Minimizes the elastic energy at frozen phase subject to the boundary data.
///
/// Unknowns are the active vertices not pinned by `bc`; the system is solved
/// by an envelope LDL^T factorization with iterative refinement down to a
/// relative residual of `tol_lin`.
pub fn solve_displacement(
    energies: &Energies,
    v: &NodalField,
    bc: &DirichletData,
    tol_lin: f64,
) -> Result<(NodalField, SolveReport)> {
    let mesh = energies.mesh();
    check_field(mesh, v)?;
    if bc.is_empty() {
        return Err(Error::InvalidBoundaryData(
            "displacement solve needs at least one pinned vertex".into(),
        ));
    }
    if !(tol_lin.is_finite() && tol_lin > 0.0) {
        return Err(Error::InvalidParams(format!("tol_lin = {tol_lin}")));
    }
    let coeff = energies.elastic_coefficients(v)?;
    let a = assemble_stiffness(mesh, &coeff)?;
    let free: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&l| mesh.is_active(l) && !bc.contains(l))
        .collect();
    let mut u = bc.zero_extended(mesh)?;
    if free.is_empty() {
        let report = SolveReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            active_set_size: None,
            method: "envelope-ldlt",
        };
        return Ok((u, report));
    }
    // Right hand side: move known boundary values across the equals sign.
    let au_bc = a.matvec(u.values());
    let b: Vec<f64> = free.iter().map(|&l| -au_bc[l]).collect();
    let a_free = a.restrict(&free);
    let out = solve_refined(&a_free, &b, tol_lin, MAX_REFINE)?;
    if !out.converged {
        return Err(Error::SolveFailed(format!(
            "elastic solve stalled at relative residual {:.3e}",
            out.relative_residual
        )));
    }
    for (&l, &x) in free.iter().zip(&out.x) {
        u.set(l, x);
    }
    let report = SolveReport {
        iterations: out.iterations,
        final_residual: out.relative_residual,
        converged: out.converged,
        active_set_size: None,
        method: "envelope-ldlt",
    };
    Ok((u, report))
}

/// Minimizes the penalized energy in the phase at frozen displacement.
///
/// Starts from `v_prev` (also the irreversibility reference) and stops once
/// both the sup-norm step and the gradient sup norm are small:
/// step below `tol_v`, gradient below `tol_v * kappa/(4 eps) * max_l m_l`.
pub fn solve_phase(
    energies: &Energies,
    u: &NodalField,
    v_prev: &NodalField,
    tol_v: f64,
    max_newton: usize,
) -> Result<(NodalField, SolveReport)> {
    let mesh = energies.mesh();
    check_field(mesh, u)?;
    check_field(mesh, v_prev)?;
    if !(tol_v.is_finite() && tol_v > 0.0) {
        return Err(Error::InvalidParams(format!("tol_v = {tol_v}")));
    }
    if max_newton == 0 {
        return Err(Error::InvalidParams("max_newton must be positive".into()));
    }
    let p = energies.params();
    let grad_tol = tol_v * p.kappa / (4.0 * p.eps) * mesh.max_lumped_weight();
    let active: Vec<usize> = mesh.active_vertices();
    let mut v = v_prev.clone();
    let mut energy = energies.penalized_energy(u, &v, v_prev)?.total;
    let mut grad = energies.phase_gradient(u, &v, v_prev)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = sup_norm(&grad);
    while iterations < max_newton {
        iterations += 1;
        let hess = energies.phase_hessian(u, &v, v_prev)?;
        let hess_free = hess.restrict(&active);
        let g_free: Vec<f64> = active.iter().map(|&l| grad[l]).collect();
        let factor = EnvelopeLdlt::factorize(&hess_free)?;
        let delta = factor.solve(&g_free);
        // The Hessian is positive definite, so the Newton step must descend.
        let slope: f64 = g_free.iter().zip(&delta).map(|(g, d)| g * d).sum();
        if slope < 0.0 {
            return Err(Error::SolveFailed(format!(
                "phase Newton direction is not a descent direction (g.d = {slope:.3e})"
            )));
        }
        // Full step first; halve only if the energy actually increases.
        let mut step_size = 1.0;
        let mut halvings = 0;
        let (next_v, next_energy) = loop {
            let mut trial = v.clone();
            for (&l, &d) in active.iter().zip(&delta) {
                trial.set(l, v.get(l) - step_size * d);
            }
            let trial_energy = energies.penalized_energy(u, &trial, v_prev)?.total;
            if trial_energy <= energy - ARMIJO_C1 * step_size * slope
                || (halvings == MAX_HALVINGS && trial_energy <= energy)
            {
                break (trial, trial_energy);
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::SolveFailed(format!(
                    "phase line search failed after {MAX_HALVINGS} halvings \
                     (energy {energy:.6e} -> {trial_energy:.6e})"
                )));
            }
            halvings += 1;
            step_size /= 2.0;
        };
        let change = v.max_diff(mesh, &next_v)?;
        v = next_v;
        energy = next_energy;
        grad = energies.phase_gradient(u, &v, v_prev)?;
        grad_norm = sup_norm(&grad);
        if change <= tol_v && grad_norm <= grad_tol {
            converged = true;
            break;
        }
    }
    let active_set = active
        .iter()
        .filter(|&&l| v.get(l) > v_prev.get(l))
        .count();
    let report = SolveReport {
        iterations,
        final_residual: grad_norm,
        converged,
        active_set_size: Some(active_set),
        method: "semismooth-newton",
    };
    Ok((v, report))
}

fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::MaterialParams;
    use crate::fem::interpolate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ramp_bc(mesh: &Mesh) -> DirichletData {
        // u = x on all four sides.
        let mut pairs = Vec::new();
        for l in 0..mesh.n_vertices() {
            let [x, y] = mesh.vertex(l);
            if x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0 {
                pairs.push((l, x));
            }
        }
        DirichletData::new(mesh, pairs).unwrap()
    }

    #[test]
    fn dirichlet_validation() {
        let mesh = Mesh::uniform(2).unwrap();
        assert!(DirichletData::new(&mesh, vec![(0, 1.0), (0, 1.0)]).is_ok());
        let err = DirichletData::new(&mesh, vec![(0, 1.0), (0, -1.0)]).unwrap_err();
        assert!(err.to_string().contains("vertex 0"));
        assert!(DirichletData::new(&mesh, vec![(99, 0.0)]).is_err());
        assert!(DirichletData::new(&mesh, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn displacement_reproduces_linear_ramp() {
        for h in [2usize, 5, 8] {
            let mesh = Mesh::uniform(h).unwrap();
            let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
            let bc = ramp_bc(&mesh);
            let exact = interpolate(&mesh, |x, _| x).unwrap();
            for v in [
                NodalField::constant(&mesh, 1.0),
                NodalField::constant(&mesh, 0.0),
            ] {
                let (u, report) = solve_displacement(&en, &v, &bc, 1e-10).unwrap();
                assert!(report.converged);
                assert_eq!(report.method, "envelope-ldlt");
                let worst = u.max_diff(&mesh, &exact).unwrap();
                assert!(worst < 1e-12, "h={h}: worst {worst}");
            }
        }
    }

    #[test]
    fn displacement_requires_boundary_data() {
        let mesh = Mesh::uniform(2).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let v = NodalField::constant(&mesh, 1.0);
        assert!(solve_displacement(&en, &v, &DirichletData::empty(), 1e-10).is_err());
    }

    #[test]
    fn displacement_is_a_minimizer() {
        // Feasible perturbations must not lower the elastic energy.
        let mesh = Mesh::uniform(4).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let bc = ramp_bc(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = NodalField::from_values(
            &mesh,
            (0..mesh.n_vertices()).map(|_| rng.gen_range(0.2..1.0)).collect(),
        )
        .unwrap();
        let (u, _) = solve_displacement(&en, &v, &bc, 1e-12).unwrap();
        let base = en.elastic_energy(&u, &v).unwrap();
        for _ in 0..20 {
            let dir: Vec<f64> = (0..mesh.n_vertices())
                .map(|l| {
                    if bc.contains(l) {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            for s in [1e-3, -1e-3] {
                let trial = NodalField::from_values(
                    &mesh,
                    u.values()
                        .iter()
                        .zip(&dir)
                        .map(|(ui, d)| ui + s * d)
                        .collect(),
                )
                .unwrap();
                let e = en.elastic_energy(&trial, &v).unwrap();
                assert!(e >= base - 1e-10, "{e} < {base}");
            }
        }
    }

    #[test]
    fn phase_stays_put_without_load() {
        let mesh = Mesh::uniform(4).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let u = NodalField::constant(&mesh, 0.0);
        let ones = NodalField::constant(&mesh, 1.0);
        let (v, report) = solve_phase(&en, &u, &ones, 2e-3, 50).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(v.max_diff(&mesh, &ones).unwrap(), 0.0);
    }

    #[test]
    fn phase_from_broken_reference_finds_penalty_balance() {
        // With u = 0 and v_prev = 0 every vertex settles at the constant
        // where the local damage pull balances the penalty:
        // v = c / (c + zeta), c = kappa / (2 eps).
        let mesh = Mesh::uniform(4).unwrap();
        let p = MaterialParams::default();
        let en = Energies::new(&mesh, p).unwrap();
        let u = NodalField::constant(&mesh, 0.0);
        let zeros = NodalField::constant(&mesh, 0.0);
        let (v, report) = solve_phase(&en, &u, &zeros, 2e-3, 50).unwrap();
        assert!(report.converged);
        let c = p.kappa / (2.0 * p.eps);
        let expect = c / (c + p.zeta);
        for &l in &mesh.active_vertices() {
            assert!(
                (v.get(l) - expect).abs() < 1e-12 * expect.max(1e-30),
                "vertex {l}: {} vs {expect}",
                v.get(l)
            );
        }
        assert_eq!(report.active_set_size, Some(mesh.n_active()));
    }

    #[test]
    fn phase_respects_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for h in [2usize, 4] {
            let mesh = Mesh::uniform(h).unwrap();
            let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
            for _ in 0..25 {
                let u = NodalField::from_values(
                    &mesh,
                    (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let v_prev = NodalField::from_values(
                    &mesh,
                    (0..mesh.n_vertices()).map(|_| rng.gen_range(0.0..1.0)).collect(),
                )
                .unwrap();
                let (v, report) = solve_phase(&en, &u, &v_prev, 2e-3, 50).unwrap();
                assert!(report.converged);
                for &l in &mesh.active_vertices() {
                    assert!(v.get(l) >= -1e-8, "vertex {l}: {}", v.get(l));
                    assert!(v.get(l) <= 1.0 + 1e-8, "vertex {l}: {}", v.get(l));
                }
            }
        }
    }

    #[test]
    fn phase_solve_descends_the_penalized_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mesh = Mesh::uniform(3).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        for _ in 0..25 {
            let u = NodalField::from_values(
                &mesh,
                (0..mesh.n_vertices()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let v_prev = NodalField::from_values(
                &mesh,
                (0..mesh.n_vertices()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
            .unwrap();
            let before = en.penalized_energy(&u, &v_prev, &v_prev).unwrap().total;
            let (v, _) = solve_phase(&en, &u, &v_prev, 2e-3, 50).unwrap();
            let after = en.penalized_energy(&u, &v, &v_prev).unwrap().total;
            assert!(after <= before + 1e-12 * before.abs().max(1.0));
        }
    }

    #[test]
    fn stronger_penalty_shrinks_irreversibility_violation() {
        let mesh = Mesh::uniform(4).unwrap();
        let u = NodalField::constant(&mesh, 0.0);
        let zeros = NodalField::constant(&mesh, 0.0);
        let violation = |zeta: f64| {
            let en =
                Energies::new(&mesh, MaterialParams::default().with_zeta(zeta)).unwrap();
            let (v, _) = solve_phase(&en, &u, &zeros, 2e-3, 50).unwrap();
            mesh.active_vertices()
                .iter()
                .map(|&l| (v.get(l) - zeros.get(l)).max(0.0))
                .fold(0.0_f64, f64::max)
        };
        let v6 = violation(1e6);
        let v7 = violation(2e6);
        let v8 = violation(1e8);
        assert!(v6 / v7 >= 1.9, "doubling: {v6} -> {v7}");
        assert!(v6 / v8 >= 50.0, "hundredfold: {v6} -> {v8}");
        // The violation obeys the analytic budget.
        let p = MaterialParams::default();
        let budget = (p.kappa / (2.0 * p.eps)) / p.zeta;
        assert!(v6 <= budget * (1.0 + 1e-10));
    }
}
