//! Piecewise-coefficient Poisson solve for the electric potential:
//! -d/dx(lambda^2 dPhi/dx) = net charge, Dirichlet at the contacts, with
//! the interface node balancing both one-sided fluxes so the discrete
//! dielectric flux continuity holds.
//!
//! Conservative second-order differencing on the (possibly graded) mesh;
//! face coefficients are constant within each region, so the material jump
//! at the interface never straddles a face. Direct tridiagonal elimination,
//! pre-factored for repeated solves with a fixed matrix.

use crate::error::{Error, Result};
use crate::mesh::{Field, Mesh1D};
use crate::scales::ScaledDevice;
use crate::transport::CarrierState;
use crate::tridiag::Factorized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoissonBc {
    Dirichlet,
    NoFlux,
}

/// The invariant part of a Poisson problem: matrix over a node range plus
/// boundary-condition kinds. Dirichlet *values* live in the right-hand side
/// so bias changes do not force refactorization.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    pub lo: usize,
    pub hi: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    fact: Factorized,
    pub bc_left: PoissonBc,
    pub bc_right: PoissonBc,
}

impl PoissonOperator {
    /// Build the operator over nodes lo..=hi with the given face
    /// coefficients (one per face lo..hi-1).
    pub fn new(
        mesh: &Mesh1D,
        lo: usize,
        hi: usize,
        face_coeff: &[f64],
        bc_left: PoissonBc,
        bc_right: PoissonBc,
    ) -> Result<Self> {
        let n = hi - lo + 1;
        if n < 3 || face_coeff.len() != n - 1 {
            return Err(Error::Internal(format!(
                "Poisson operator needs >=3 nodes and matching coefficients, got {n} nodes, {} faces",
                face_coeff.len()
            )));
        }
        if face_coeff.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Internal("Poisson coefficients must be positive".into()));
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];

        match bc_left {
            PoissonBc::Dirichlet => diag[0] = 1.0,
            PoissonBc::NoFlux => {
                let t = face_coeff[0] / mesh.spacing(lo);
                diag[0] = t;
                upper[0] = -t;
            }
        }
        for i in 1..n - 1 {
            let t_w = face_coeff[i - 1] / mesh.spacing(lo + i - 1);
            let t_e = face_coeff[i] / mesh.spacing(lo + i);
            lower[i] = -t_w;
            upper[i] = -t_e;
            diag[i] = t_w + t_e;
        }
        match bc_right {
            PoissonBc::Dirichlet => diag[n - 1] = 1.0,
            PoissonBc::NoFlux => {
                let t = face_coeff[n - 2] / mesh.spacing(hi - 1);
                diag[n - 1] = t;
                lower[n - 1] = -t;
            }
        }
        let fact = Factorized::new(&lower, &diag, &upper);
        Ok(PoissonOperator { lo, hi, lower, diag, upper, fact, bc_left, bc_right })
    }

    pub fn num_nodes(&self) -> usize {
        self.hi - self.lo + 1
    }

    /// Solve A phi = f in place; f must already carry volume-weighted
    /// charges and Dirichlet values in the boundary rows.
    pub fn solve_in_place(&self, f: &mut [f64]) {
        self.fact.solve_in_place(f);
    }

    /// Max-norm residual of A phi - f.
    pub fn residual_inf(&self, phi: &[f64], f: &[f64]) -> f64 {
        let n = self.num_nodes();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut r = self.diag[i] * phi[i] - f[i];
            if i > 0 {
                r += self.lower[i] * phi[i - 1];
            }
            if i + 1 < n {
                r += self.upper[i] * phi[i + 1];
            }
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Assembled Poisson problem: operator plus volume-weighted right-hand side.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub operator: PoissonOperator,
    /// Volume-weighted net charge with Dirichlet rows holding BC values.
    pub rhs: Vec<f64>,
}

/// Assemble the whole-domain problem from a carrier state: net charge
/// C' + alpha_p rho_p' + alpha_n rho_n' on the semiconductor,
/// sum of alpha rho' on the electrolyte, both halves combined at the
/// interface node.
pub fn assemble(
    state: &CarrierState,
    device: &ScaledDevice,
    mesh: &Mesh1D,
) -> Result<PoissonProblem> {
    let m = mesh.num_faces();
    let i_star = mesh.interface_index();
    let mut face_coeff = vec![0.0; m];
    for (k, c) in face_coeff.iter_mut().enumerate() {
        *c = if k < i_star { device.lambda_s_sq } else { device.lambda_e_sq };
    }
    let bc_right = match device.electrode {
        crate::scales::ElectrodeKind::Bulk => PoissonBc::Dirichlet,
        crate::scales::ElectrodeKind::Insulated => PoissonBc::NoFlux,
    };
    let operator = PoissonOperator::new(mesh, 0, m, &face_coeff, PoissonBc::Dirichlet, bc_right)?;
    let mut rhs = vec![0.0; mesh.num_nodes()];
    charge_rhs(state, device, mesh, &mut rhs);
    rhs[0] = device.contact_potential()?;
    if bc_right == PoissonBc::Dirichlet {
        rhs[m] = device.contacts.phi_app_a;
    }
    Ok(PoissonProblem { operator, rhs })
}

/// Fill `rhs` with volume-weighted net charge at every node (boundary rows
/// included; callers overwrite Dirichlet rows afterwards).
pub fn charge_rhs(state: &CarrierState, device: &ScaledDevice, mesh: &Mesh1D, rhs: &mut [f64]) {
    let i_star = mesh.interface_index();
    let alpha_n = device.species.n.alpha as f64;
    let alpha_p = device.species.p.alpha as f64;
    let alpha_r = device.species.r.alpha as f64;
    let alpha_o = device.species.o.alpha as f64;

    for i in 0..=i_star {
        let c = device.doping.eval(mesh.nodes()[i]);
        let charge = c + alpha_p * state.rho_p[i] + alpha_n * state.rho_n[i];
        rhs[i] = charge * mesh.control_volume(i);
    }
    let m = mesh.num_faces();
    for i in i_star..=m {
        let j = i - i_star;
        let mut charge = alpha_o * state.rho_o[j] + alpha_r * state.rho_r[j];
        for (extra, params) in state.rho_extra.iter().zip(&device.species.extra) {
            charge += params.alpha as f64 * extra[j];
        }
        if i == i_star {
            // Interface control volume: semiconductor charge on the left
            // half-cell, electrolyte charge on the right half-cell.
            let s_charge = device.doping.eval(0.0)
                + alpha_p * state.rho_p[i_star]
                + alpha_n * state.rho_n[i_star];
            rhs[i] = 0.5 * mesh.spacing(i_star - 1) * s_charge + 0.5 * mesh.spacing(i_star) * charge;
        } else {
            rhs[i] = charge * mesh.control_volume(i);
        }
    }
}

/// Solve an assembled problem; the residual is checked and polished by one
/// refinement pass if needed.
pub fn solve(problem: &PoissonProblem) -> Result<Field> {
    let mut phi = problem.rhs.clone();
    problem.operator.solve_in_place(&mut phi);
    let rhs_inf = problem.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (rhs_inf + 1.0);
    if problem.operator.residual_inf(&phi, &problem.rhs) > tol {
        refine(&problem.operator, &mut phi, &problem.rhs);
        let res = problem.operator.residual_inf(&phi, &problem.rhs);
        if res > tol {
            return Err(Error::Internal(format!(
                "Poisson residual {res:e} above tolerance {tol:e} after refinement"
            )));
        }
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("Poisson solve produced non-finite potential".into()));
    }
    Ok(Field::new_unchecked(phi))
}

/// One step of iterative refinement.
fn refine(op: &PoissonOperator, phi: &mut [f64], f: &[f64]) {
    let n = op.num_nodes();
    let mut r = vec![0.0; n];
    for i in 0..n {
        let mut v = f[i] - op.diag[i] * phi[i];
        if i > 0 {
            v -= op.lower[i] * phi[i - 1];
        }
        if i + 1 < n {
            v -= op.upper[i] * phi[i + 1];
        }
        r[i] = v;
    }
    op.solve_in_place(&mut r);
    for i in 0..n {
        phi[i] += r[i];
    }
}

/// E' = -dPhi'/dx' with a three-point formula that stays exact for
/// quadratics on graded meshes; one-sided at the endpoints.
pub fn electric_field(phi: &[f64], mesh: &Mesh1D) -> Vec<f64> {
    let m = mesh.num_faces();
    let mut e = vec![0.0; m + 1];
    e[0] = -(phi[1] - phi[0]) / mesh.spacing(0);
    for i in 1..m {
        let h_w = mesh.spacing(i - 1);
        let h_e = mesh.spacing(i);
        let grad = (phi[i + 1] - phi[i]) / h_e * (h_w / (h_w + h_e))
            + (phi[i] - phi[i - 1]) / h_w * (h_e / (h_w + h_e));
        e[i] = -grad;
    }
    e[m] = -(phi[m] - phi[m - 1]) / mesh.spacing(m - 1);
    e
}

impl Field {
    pub(crate) fn new_unchecked(values: Vec<f64>) -> Field {
        // Only reachable from solver paths that already verified finiteness.
        Field::from_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;

    fn operator_with_uniform_coeff(mesh: &Mesh1D, coeff: f64) -> PoissonOperator {
        let faces = vec![coeff; mesh.num_faces()];
        PoissonOperator::new(mesh, 0, mesh.num_faces(), &faces, PoissonBc::Dirichlet, PoissonBc::Dirichlet)
            .unwrap()
    }

    #[test]
    fn zero_charge_gives_linear_potential() {
        let mesh = Mesh1D::build(-1.0, 1.0, 20, 1.3).unwrap();
        let op = operator_with_uniform_coeff(&mesh, 2.5);
        let mut f = vec![0.0; mesh.num_nodes()];
        f[0] = 0.0;
        *f.last_mut().unwrap() = 1.0;
        let problem = PoissonProblem { operator: op, rhs: f };
        let phi = solve(&problem).unwrap();
        for (i, &x) in mesh.nodes().iter().enumerate() {
            let exact = (x + 1.0) / 2.0;
            assert!((phi[i] - exact).abs() < 1e-12, "node {i}: {} vs {exact}", phi[i]);
        }
    }

    #[test]
    fn manufactured_sine_converges_second_order() {
        let errors: Vec<f64> = [25usize, 50]
            .iter()
            .map(|&n| {
                let mesh = Mesh1D::build(-1.0, 1.0, n, 1.0).unwrap();
                let lambda_sq = 0.7;
                let op = operator_with_uniform_coeff(&mesh, lambda_sq);
                let pi = std::f64::consts::PI;
                let mut f: Vec<f64> = mesh
                    .nodes()
                    .iter()
                    .map(|&x| lambda_sq * pi * pi * (pi * x).sin() * mesh_cv(&mesh, x))
                    .collect();
                let n_nodes = mesh.num_nodes();
                f[0] = (pi * mesh.nodes()[0]).sin();
                f[n_nodes - 1] = (pi * mesh.nodes()[n_nodes - 1]).sin();
                let phi = solve(&PoissonProblem { operator: op, rhs: f }).unwrap();
                mesh.nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (phi[i] - (pi * x).sin()).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let ratio = errors[0] / errors[1];
        assert!(
            (3.2..=4.8).contains(&ratio),
            "expected ~4x error reduction per refinement, got {ratio} ({errors:?})"
        );
    }

    fn mesh_cv(mesh: &Mesh1D, x: f64) -> f64 {
        let i = mesh.nodes().iter().position(|&v| v == x).unwrap();
        mesh.control_volume(i)
    }

    #[test]
    fn piecewise_coefficient_slope_ratio() {
        let mesh = Mesh1D::build(-1.0, 1.0, 40, 1.0).unwrap();
        let (ls, le) = (2.0, 1.0);
        let i_star = mesh.interface_index();
        let faces: Vec<f64> =
            (0..mesh.num_faces()).map(|k| if k < i_star { ls } else { le }).collect();
        let op = PoissonOperator::new(&mesh, 0, mesh.num_faces(), &faces, PoissonBc::Dirichlet, PoissonBc::Dirichlet)
            .unwrap();
        let mut f = vec![0.0; mesh.num_nodes()];
        *f.last_mut().unwrap() = 1.0;
        let phi = solve(&PoissonProblem { operator: op, rhs: f }).unwrap();
        // Flux continuity: ls * slope_S = le * slope_E, slopes sum to 1 over
        // the two unit half-domains. Interface value = slope_S.
        let slope_s = 1.0 / (1.0 + ls / le);
        assert!((phi[i_star] - slope_s).abs() < 1e-12, "phi(0) = {}", phi[i_star]);
        let s_s = (phi[i_star] - phi[i_star - 1]) / mesh.spacing(i_star - 1);
        let s_e = (phi[i_star + 1] - phi[i_star]) / mesh.spacing(i_star);
        assert!((s_s / s_e - le / ls).abs() < 1e-10);
        // Discrete dielectric flux jump vanishes for piecewise-linear data.
        assert!((ls * s_s - le * s_e).abs() < 1e-12);
    }

    #[test]
    fn discrete_maximum_principle() {
        let mesh = Mesh1D::build(-0.2, 0.2, 30, 1.4).unwrap();
        let op = operator_with_uniform_coeff(&mesh, 0.01);
        let mut f = vec![0.0; mesh.num_nodes()];
        f[0] = -3.0;
        *f.last_mut().unwrap() = 7.0;
        let phi = solve(&PoissonProblem { operator: op, rhs: f }).unwrap();
        for &v in phi.iter() {
            assert!((-3.0..=7.0).contains(&v));
        }
    }

    #[test]
    fn electric_field_exact_for_quadratics() {
        let mesh = Mesh1D::build(-1.0, 1.0, 16, 1.5).unwrap();
        let phi: Vec<f64> = mesh.nodes().iter().map(|&x| x * x).collect();
        let e = electric_field(&phi, &mesh);
        for i in 1..mesh.num_faces() {
            let x = mesh.nodes()[i];
            assert!((e[i] + 2.0 * x).abs() < 1e-12, "node {i}: {} vs {}", e[i], -2.0 * x);
        }
        // Constant potential: zero field everywhere.
        let flat = vec![4.2; mesh.num_nodes()];
        assert!(electric_field(&flat, &mesh).iter().all(|&v| v == 0.0));
        // Linear potential: exact at the endpoints too.
        let lin: Vec<f64> = mesh.nodes().iter().map(|&x| 3.0 * x - 1.0).collect();
        for v in electric_field(&lin, &mesh) {
            assert!((v + 3.0).abs() < 1e-12);
        }
    }
}
