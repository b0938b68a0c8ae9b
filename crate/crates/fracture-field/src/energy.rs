//! The regularized fracture energy and its derivatives in the phase field.
//!
//! Total energy of a state (u, v):
//!
//! ```text
//!   J(u, v) = 1/2 int (interp(v^2) + eta) |grad u|^2
//!           + kappa eps int |grad v|^2
//!           + kappa/(4 eps) int interp((1 - v)^2)
//! ```
//!
//! with nodal interpolation applied to the nonlinear terms, so both integrals
//! involving `interp` reduce to lumped sums and the elastic coefficient on an
//! element is `eta` plus the mean of the squared vertex values. Irreversibility
//! is enforced through a quadratic penalty on `[v - v_prev]_+` with weight
//! `zeta`; its kink makes the energy C^1 and piecewise quadratic in `v`.

use serde::{Deserialize, Serialize};

use crate::fem::{
    assemble_unit_stiffness, check_field, element_gradient, NodalField, SparseSymmetric,
};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Physical and penalty parameters of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Regularization length of the damage band.
    pub eps: f64,
    /// Residual stiffness keeping the elastic problem definite.
    pub eta: f64,
    /// Fracture toughness weight.
    pub kappa: f64,
    /// Irreversibility penalty weight (0 disables the penalty).
    pub zeta: f64,
}

impl Default for MaterialParams {
    /// Production benchmark values.
    fn default() -> Self {
        MaterialParams {
            eps: 2e-2,
            eta: 1e-5,
            kappa: 0.5,
            zeta: 1e6,
        }
    }
}

impl MaterialParams {
    pub fn new(eps: f64, eta: f64, kappa: f64, zeta: f64) -> Result<Self> {
        let p = MaterialParams {
            eps,
            eta,
            kappa,
            zeta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Normalized-theory preset: eps = 1/2 and kappa = 1 make all three
    /// energy weights equal 1/2. No penalty.
    pub fn normalized() -> Self {
        MaterialParams {
            eps: 0.5,
            eta: 1e-5,
            kappa: 1.0,
            zeta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eps.is_finite()
            && self.eps > 0.0
            && self.eta.is_finite()
            && self.eta > 0.0
            && self.kappa.is_finite()
            && self.kappa > 0.0
            && self.zeta.is_finite()
            && self.zeta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "need eps > 0, eta > 0, kappa > 0, zeta >= 0; got {self:?}"
            )))
        }
    }

    pub fn with_zeta(self, zeta: f64) -> Self {
        MaterialParams { zeta, ..self }
    }
}

/// Values of the individual energy terms at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    /// kappa eps int |grad v|^2
    pub dissipation_gradient: f64,
    /// kappa/(4 eps) int interp((1 - v)^2)
    pub dissipation_local: f64,
    /// zeta/2 int interp([v - v_prev]_+^2)
    pub penalty: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn dissipation(&self) -> f64 {
        self.dissipation_gradient + self.dissipation_local
    }
}

/// Energy evaluator bound to one mesh; caches the unit stiffness matrix.
pub struct Energies<'m> {
    mesh: &'m Mesh,
    params: MaterialParams,
    unit_stiffness: SparseSymmetric,
}

impl<'m> Energies<'m> {
    pub fn new(mesh: &'m Mesh, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        let unit_stiffness = assemble_unit_stiffness(mesh)?;
        Ok(Energies {
            mesh,
            params,
            unit_stiffness,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn unit_stiffness(&self) -> &SparseSymmetric {
        &self.unit_stiffness
    }

    /// Per-triangle elastic coefficient `eta + mean of squared vertex phases`.
    pub fn elastic_coefficients(&self, v: &NodalField) -> Result<Vec<f64>> {
        check_field(self.mesh, v)?;
        let vals = v.values();
        Ok(self
            .mesh
            .triangles()
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.vertices;
                self.params.eta
                    + (vals[a] * vals[a] + vals[b] * vals[b] + vals[c] * vals[c]) / 3.0
            })
            .collect())
    }

    /// Elastic bilinear form with phase-degraded coefficient:
    /// `int (interp(v^2) + eta) grad a . grad b`.
    pub fn elastic_inner(&self, a: &NodalField, b: &NodalField, v: &NodalField) -> Result<f64> {
        let coeff = self.elastic_coefficients(v)?;
        let ga = element_gradient(self.mesh, a)?;
        let gb = element_gradient(self.mesh, b)?;
        let mut total = 0.0;
        for ((tri, c), (pa, pb)) in self
            .mesh
            .triangles()
            .iter()
            .zip(coeff)
            .zip(ga.iter().zip(gb.iter()))
        {
            total += c * (pa[0] * pb[0] + pa[1] * pb[1]) * tri.area;
        }
        Ok(total)
    }

    /// Stored elastic energy `1/2 int (interp(v^2) + eta) |grad u|^2`.
    pub fn elastic_energy(&self, u: &NodalField, v: &NodalField) -> Result<f64> {
        Ok(0.5 * self.elastic_inner(u, u, v)?)
    }

    /// Fracture dissipation split into gradient and local parts.
    pub fn dissipation_parts(&self, v: &NodalField) -> Result<(f64, f64)> {
        check_field(self.mesh, v)?;
        let p = &self.params;
        let grads = element_gradient(self.mesh, v)?;
        let mut grad_term = 0.0;
        for (tri, g) in self.mesh.triangles().iter().zip(grads) {
            grad_term += (g[0] * g[0] + g[1] * g[1]) * tri.area;
        }
        grad_term *= p.kappa * p.eps;
        let mut local = 0.0;
        for (l, &vl) in v.values().iter().enumerate() {
            if self.mesh.is_active(l) {
                let r = 1.0 - vl;
                local += r * r * self.mesh.lumped_weight(l);
            }
        }
        local *= p.kappa / (4.0 * p.eps);
        Ok((grad_term, local))
    }

    /// Total fracture dissipation.
    pub fn dissipation_energy(&self, v: &NodalField) -> Result<f64> {
        let (g, l) = self.dissipation_parts(v)?;
        Ok(g + l)
    }

    /// Unpenalized total energy `J(u, v)`.
    pub fn total_energy(&self, u: &NodalField, v: &NodalField) -> Result<f64> {
        Ok(self.elastic_energy(u, v)? + self.dissipation_energy(v)?)
    }

    /// Irreversibility penalty `zeta/2 int interp([v - v_prev]_+^2)`.
    pub fn penalty_energy(&self, v: &NodalField, v_prev: &NodalField) -> Result<f64> {
        check_field(self.mesh, v)?;
        check_field(self.mesh, v_prev)?;
        let mut total = 0.0;
        for l in 0..v.len() {
            if self.mesh.is_active(l) {
                let rise = (v.get(l) - v_prev.get(l)).max(0.0);
                total += rise * rise * self.mesh.lumped_weight(l);
            }
        }
        Ok(0.5 * self.params.zeta * total)
    }

    /// All energy terms of the penalized functional at (u, v) given the
    /// irreversibility reference `v_prev`.
    pub fn penalized_energy(
        &self,
        u: &NodalField,
        v: &NodalField,
        v_prev: &NodalField,
    ) -> Result<EnergyBreakdown> {
        let elastic = self.elastic_energy(u, v)?;
        let (dissipation_gradient, dissipation_local) = self.dissipation_parts(v)?;
        let penalty = self.penalty_energy(v, v_prev)?;
        Ok(EnergyBreakdown {
            elastic,
            dissipation_gradient,
            dissipation_local,
            penalty,
            total: elastic + dissipation_gradient + dissipation_local + penalty,
        })
    }

    /// Per-vertex elastic load factors `a_l = sum_{K ni l} |grad u|_K^2 |K| / 3`,
    /// the coefficients through which the elastic term drives the phase.
    pub fn elastic_nodal_factors(&self, u: &NodalField) -> Result<Vec<f64>> {
        let grads = element_gradient(self.mesh, u)?;
        let mut a = vec![0.0; self.mesh.n_vertices()];
        for (tri, g) in self.mesh.triangles().iter().zip(grads) {
            let share = (g[0] * g[0] + g[1] * g[1]) * tri.area / 3.0;
            for &l in &tri.vertices {
                a[l] += share;
            }
        }
        Ok(a)
    }

    /// Exact gradient of the penalized energy in the phase variable.
    ///
    /// Component `l`:
    /// `a_l v_l + 2 kappa eps (K v)_l - kappa/(2 eps) m_l (1 - v_l)
    /// + zeta m_l [v_l - v_prev_l]_+`.
    ///
    /// Entries at inactive vertices are zero.
    pub fn phase_gradient(
        &self,
        u: &NodalField,
        v: &NodalField,
        v_prev: &NodalField,
    ) -> Result<Vec<f64>> {
        check_field(self.mesh, v)?;
        check_field(self.mesh, v_prev)?;
        let p = &self.params;
        let a = self.elastic_nodal_factors(u)?;
        let kv = self.unit_stiffness.matvec(v.values());
        let mut grad = vec![0.0; self.mesh.n_vertices()];
        for l in 0..grad.len() {
            if !self.mesh.is_active(l) {
                continue;
            }
            let m = self.mesh.lumped_weight(l);
            let vl = v.get(l);
            let rise = (vl - v_prev.get(l)).max(0.0);
            grad[l] = a[l] * vl + 2.0 * p.kappa * p.eps * kv[l]
                - p.kappa / (2.0 * p.eps) * m * (1.0 - vl)
                + p.zeta * m * rise;
        }
        Ok(grad)
    }

    /// Active-set Hessian of the penalized energy in the phase variable:
    /// `diag(a) + 2 kappa eps K + kappa/(2 eps) diag(m) + zeta diag(m)` on the
    /// strictly violating set `v_l > v_prev_l`. At the kink itself the
    /// inactive branch is used.
    pub fn phase_hessian(
        &self,
        u: &NodalField,
        v: &NodalField,
        v_prev: &NodalField,
    ) -> Result<SparseSymmetric> {
        check_field(self.mesh, v)?;
        check_field(self.mesh, v_prev)?;
        let p = &self.params;
        let a = self.elastic_nodal_factors(u)?;
        let mut hess = self.unit_stiffness.clone();
        hess.scale(2.0 * p.kappa * p.eps);
        for l in 0..self.mesh.n_vertices() {
            if !self.mesh.is_active(l) {
                continue;
            }
            let m = self.mesh.lumped_weight(l);
            let mut diag = a[l] + p.kappa / (2.0 * p.eps) * m;
            if v.get(l) > v_prev.get(l) {
                diag += p.zeta * m;
            }
            hess.add_to_diagonal(l, diag);
        }
        Ok(hess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> NodalField {
        let values = (0..mesh.n_vertices())
            .map(|_| rng.gen_range(lo..hi))
            .collect();
        NodalField::from_values(mesh, values).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(MaterialParams::new(0.02, 1e-5, 0.5, 1e6).is_ok());
        assert!(MaterialParams::new(0.0, 1e-5, 0.5, 1e6).is_err());
        assert!(MaterialParams::new(0.02, -1.0, 0.5, 1e6).is_err());
        assert!(MaterialParams::new(0.02, 1e-5, 0.5, -1.0).is_err());
        let d = MaterialParams::default();
        assert_eq!((d.eps, d.eta, d.kappa, d.zeta), (2e-2, 1e-5, 0.5, 1e6));
    }

    #[test]
    fn elastic_energy_of_linear_ramp() {
        let mesh = Mesh::uniform(8).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let u = interpolate(&mesh, |x, _| x).unwrap();
        let intact = NodalField::constant(&mesh, 1.0);
        let broken = NodalField::constant(&mesh, 0.0);
        let e1 = en.elastic_energy(&u, &intact).unwrap();
        assert!((e1 - 0.5 * (1.0 + 1e-5)).abs() < 1e-14);
        let e0 = en.elastic_energy(&u, &broken).unwrap();
        assert!((e0 - 0.5 * 1e-5).abs() < 1e-18);
    }

    #[test]
    fn dissipation_of_fully_broken_state() {
        let mesh = Mesh::uniform(8).unwrap();
        let broken = NodalField::constant(&mesh, 0.0);
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let d = en.dissipation_energy(&broken).unwrap();
        assert!((d - 6.25).abs() < 1e-12, "got {d}");
        let en_norm = Energies::new(&mesh, MaterialParams::normalized()).unwrap();
        let dn = en_norm.dissipation_energy(&broken).unwrap();
        assert!((dn - 0.5).abs() < 1e-13, "got {dn}");
        // Intact state dissipates nothing, exactly.
        let intact = NodalField::constant(&mesh, 1.0);
        assert_eq!(en.dissipation_energy(&intact).unwrap(), 0.0);
    }

    #[test]
    fn normalized_energy_matches_independent_evaluation_on_h1() {
        // Independent route: expand every term by hand on the two elements.
        let mesh = Mesh::uniform(1).unwrap();
        let en = Energies::new(&mesh, MaterialParams::normalized()).unwrap();
        let u = NodalField::from_values(&mesh, vec![0.0, 0.25, 0.5, 0.75]).unwrap();
        let v = NodalField::from_values(&mesh, vec![1.0, 0.5, 1.0 / 3.0, 0.25]).unwrap();
        let eta = en.params().eta;
        // Lower element (vertices 0, 2, 1): grad u = (u1 - u0, u2 - u0).
        let gu_low = [0.25 - 0.0, 0.5 - 0.0];
        let gv_low = [0.5 - 1.0, 1.0 / 3.0 - 1.0];
        // Upper element (vertices 2, 1, 3): grad u = (u3 - u2, u3 - u1).
        let gu_up = [0.75 - 0.5, 0.75 - 0.25];
        let gv_up = [0.25 - 1.0 / 3.0, 0.25 - 0.5];
        let mean_sq = |a: f64, b: f64, c: f64| (a * a + b * b + c * c) / 3.0;
        let c_low = eta + mean_sq(1.0, 1.0 / 3.0, 0.5);
        let c_up = eta + mean_sq(1.0 / 3.0, 0.5, 0.25);
        let area = 0.5;
        let elastic = 0.5
            * (c_low * (gu_low[0] * gu_low[0] + gu_low[1] * gu_low[1]) * area
                + c_up * (gu_up[0] * gu_up[0] + gu_up[1] * gu_up[1]) * area);
        // kappa eps = 1/2 and kappa/(4 eps) = 1/2 in the normalized preset.
        let diss_grad = 0.5
            * ((gv_low[0] * gv_low[0] + gv_low[1] * gv_low[1]) * area
                + (gv_up[0] * gv_up[0] + gv_up[1] * gv_up[1]) * area);
        let m = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
        let vv = [1.0, 0.5, 1.0 / 3.0, 0.25];
        let diss_local = 0.5
            * m.iter()
                .zip(vv)
                .map(|(mi, vi)| mi * (1.0 - vi) * (1.0 - vi))
                .sum::<f64>();

        let b = en
            .penalized_energy(&u, &v, &NodalField::constant(&mesh, 1.0))
            .unwrap();
        assert!((b.elastic - elastic).abs() < 1e-14);
        assert!((b.dissipation_gradient - diss_grad).abs() < 1e-14);
        assert!((b.dissipation_local - diss_local).abs() < 1e-14);
        assert_eq!(b.penalty, 0.0);
    }

    #[test]
    fn gradient_of_constant_phase_without_load() {
        let mesh = Mesh::uniform(4).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let u = NodalField::constant(&mesh, 0.0);
        let c = 0.625;
        let v = NodalField::constant(&mesh, c);
        let ones = NodalField::constant(&mesh, 1.0);
        let g = en.phase_gradient(&u, &v, &ones).unwrap();
        let p = en.params();
        for l in 0..mesh.n_vertices() {
            let expect = -p.kappa / (2.0 * p.eps) * mesh.lumped_weight(l) * (1.0 - c);
            assert!(
                (g[l] - expect).abs() < 1e-13,
                "vertex {l}: {} vs {expect}",
                g[l]
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let step = 1e-6;
        for (seed, h) in [(11u64, 2usize), (12, 3), (13, 4)] {
            let mesh = Mesh::uniform(h).unwrap();
            let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
            let mut r = rng(seed);
            for _ in 0..20 {
                let u = random_field(&mesh, &mut r, -1.0, 1.0);
                let v = random_field(&mesh, &mut r, 0.0, 1.0);
                let v_prev = random_field(&mesh, &mut r, 0.0, 1.0);
                let g = en.phase_gradient(&u, &v, &v_prev).unwrap();
                let scale = g.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
                for l in 0..mesh.n_vertices() {
                    if (v.get(l) - v_prev.get(l)).abs() <= 10.0 * step {
                        continue; // penalty kink
                    }
                    let mut vp = v.clone();
                    vp.set(l, v.get(l) + step);
                    let mut vm = v.clone();
                    vm.set(l, v.get(l) - step);
                    let ep = en.penalized_energy(&u, &vp, &v_prev).unwrap().total;
                    let em = en.penalized_energy(&u, &vm, &v_prev).unwrap().total;
                    let fd = (ep - em) / (2.0 * step);
                    assert!(
                        (fd - g[l]).abs() <= 1e-6 * scale,
                        "h={h} vertex {l}: fd {fd} vs {}",
                        g[l]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let step = 1e-6;
        let mesh = Mesh::uniform(3).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let mut r = rng(21);
        for _ in 0..20 {
            let u = random_field(&mesh, &mut r, -1.0, 1.0);
            let v = random_field(&mesh, &mut r, 0.0, 1.0);
            let v_prev = random_field(&mesh, &mut r, 0.0, 1.0);
            let mut dir: Vec<f64> = (0..mesh.n_vertices())
                .map(|_| r.gen_range(-1.0..1.0))
                .collect();
            for l in 0..mesh.n_vertices() {
                if (v.get(l) - v_prev.get(l)).abs() <= 10.0 * step {
                    dir[l] = 0.0; // keep the probe away from the kink
                }
            }
            let h = en.phase_hessian(&u, &v, &v_prev).unwrap();
            let hd = h.matvec(&dir);
            let perturbed = |sign: f64| {
                let vals: Vec<f64> = v
                    .values()
                    .iter()
                    .zip(&dir)
                    .map(|(a, d)| a + sign * step * d)
                    .collect();
                NodalField::from_values(&mesh, vals).unwrap()
            };
            let gp = en.phase_gradient(&u, &perturbed(1.0), &v_prev).unwrap();
            let gm = en.phase_gradient(&u, &perturbed(-1.0), &v_prev).unwrap();
            let scale = hd.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            for l in 0..mesh.n_vertices() {
                let fd = (gp[l] - gm[l]) / (2.0 * step);
                assert!(
                    (fd - hd[l]).abs() <= 1e-5 * scale,
                    "vertex {l}: fd {fd} vs {}",
                    hd[l]
                );
            }
        }
    }

    #[test]
    fn energy_is_convex_in_each_argument() {
        let mesh = Mesh::uniform(3).unwrap();
        let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
        let mut r = rng(31);
        for _ in 0..50 {
            let v = random_field(&mesh, &mut r, 0.0, 1.0);
            let u1 = random_field(&mesh, &mut r, -1.0, 1.0);
            let u2 = random_field(&mesh, &mut r, -1.0, 1.0);
            let mid_u = NodalField::from_values(
                &mesh,
                u1.values()
                    .iter()
                    .zip(u2.values())
                    .map(|(a, b)| (a + b) / 2.0)
                    .collect(),
            )
            .unwrap();
            let lhs = en.elastic_energy(&mid_u, &v).unwrap();
            let rhs = 0.5 * en.elastic_energy(&u1, &v).unwrap()
                + 0.5 * en.elastic_energy(&u2, &v).unwrap();
            assert!(lhs <= rhs + 1e-12);

            let u = random_field(&mesh, &mut r, -1.0, 1.0);
            let v_prev = random_field(&mesh, &mut r, 0.0, 1.0);
            let v1 = random_field(&mesh, &mut r, 0.0, 1.0);
            let v2 = random_field(&mesh, &mut r, 0.0, 1.0);
            let mid_v = NodalField::from_values(
                &mesh,
                v1.values()
                    .iter()
                    .zip(v2.values())
                    .map(|(a, b)| (a + b) / 2.0)
                    .collect(),
            )
            .unwrap();
            let lhs = en.penalized_energy(&u, &mid_v, &v_prev).unwrap().total;
            let rhs = 0.5 * en.penalized_energy(&u, &v1, &v_prev).unwrap().total
                + 0.5 * en.penalized_energy(&u, &v2, &v_prev).unwrap().total;
            assert!(lhs <= rhs + 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn hessian_is_positive_definite() {
        for h in [2usize, 3] {
            let mesh = Mesh::uniform(h).unwrap();
            let en = Energies::new(&mesh, MaterialParams::default()).unwrap();
            let mut r = rng(41);
            for _ in 0..10 {
                let u = random_field(&mesh, &mut r, -1.0, 1.0);
                let v = random_field(&mesh, &mut r, 0.0, 1.0);
                let v_prev = random_field(&mesh, &mut r, 0.0, 1.0);
                let hess = en.phase_hessian(&u, &v, &v_prev).unwrap();
                let n = hess.n();
                let mut dense = nalgebra::DMatrix::zeros(n, n);
                for i in 0..n {
                    let (cols, vals) = hess.row(i);
                    for (&j, &val) in cols.iter().zip(vals) {
                        dense[(i, j)] = val;
                    }
                }
                let eig = nalgebra::SymmetricEigen::new(dense);
                let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(min > 0.0, "h={h}: min eigenvalue {min}");
            }
        }
    }
}
