//! Stationary solves: the Gummel-Schwarz double iteration with an optional
//! transient warm start.
//!
//! Outer (Gummel) loop: solve the whole-domain Poisson problem from the
//! previous densities, under-relax the potential, then run the inner
//! (Schwarz) loop which alternates stationary transport solves on the
//! semiconductor (frozen electrolyte interface densities) and on the
//! electrolyte (using the freshly computed carrier densities at the
//! interface). Nonlinear terms are Picard-lagged so every species solve is
//! one tridiagonal elimination.

use crate::error::{Error, Result};
use crate::norms;
use crate::physics::{self, ContactKind};
use crate::scales::{ElectrodeKind, SpeciesParams};
use crate::transport::{CarrierState, Stepper, System};
use crate::tridiag;

/// Iteration thresholds and damping for the stationary solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationControl {
    pub gummel_tol: f64,
    pub schwarz_tol: f64,
    pub max_gummel: usize,
    pub max_schwarz: usize,
    /// Potential under-relaxation factor in (0, 1].
    pub damping: f64,
    /// Transient pre-roll duration handed to [`warm_start`]; 0 disables.
    pub warm_start_time: f64,
}

impl Default for IterationControl {
    fn default() -> Self {
        IterationControl {
            gummel_tol: 1e-8,
            schwarz_tol: 1e-8,
            max_gummel: 500,
            max_schwarz: 50,
            damping: 0.3,
            warm_start_time: 0.05,
        }
    }
}

impl IterationControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.gummel_tol > 0.0 && self.schwarz_tol > 0.0) {
            return Err(Error::Config("stationary tolerances must be positive".into()));
        }
        if self.max_gummel < 1 || self.max_schwarz < 1 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}


/// Limit on the max-norm potential change per outer iteration (in thermal
/// voltages). The lagged linear Poisson step of the outer loop can target
/// potentials tens of U_T away; walking there in bounded steps keeps the
/// exponential density response under control.
const PHI_UPDATE_LIMIT: f64 = 2.0;
const DAMPING_FLOOR: f64 = 1e-3;

/// Under-relaxation of the potential with a step cap and oscillation
/// detection: alternating update directions halve the damping, persistent
/// agreement lets it recover toward the configured value.
pub(crate) struct PotentialRelaxer {
    base_damping: f64,
    damping: f64,
    prev_update: Vec<f64>,
    have_prev: bool,
}

impl PotentialRelaxer {
    pub(crate) fn new(damping: f64, n: usize) -> Self {
        PotentialRelaxer { base_damping: damping, damping, prev_update: vec![0.0; n], have_prev: false }
    }

    pub(crate) fn apply(&mut self, phi: &mut [f64], target: &[f64]) {
        let n = phi.len();
        let mut max_step = 0.0f64;
        for i in 0..n {
            max_step = max_step.max((self.damping * (target[i] - phi[i])).abs());
        }
        let scale = if max_step > PHI_UPDATE_LIMIT { PHI_UPDATE_LIMIT / max_step } else { 1.0 };
        let mut dot = 0.0;
        let mut norm_new = 0.0;
        let mut norm_old = 0.0;
        for i in 0..n {
            let step = scale * self.damping * (target[i] - phi[i]);
            phi[i] += step;
            dot += step * self.prev_update[i];
            norm_new += step * step;
            norm_old += self.prev_update[i] * self.prev_update[i];
            self.prev_update[i] = step;
        }
        if self.have_prev && norm_new > 0.0 && norm_old > 0.0 {
            let cosine = dot / (norm_new.sqrt() * norm_old.sqrt());
            if cosine < -0.1 {
                self.damping = (0.5 * self.damping).max(DAMPING_FLOOR);
            } else if cosine > 0.9 {
                self.damping = (1.25 * self.damping).min(self.base_damping);
            }
        }
        self.have_prev = true;
    }
}

/// Per-iteration record of the outer loop.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    /// Relative L2 update of the full state after each outer iteration.
    pub update_norms: Vec<f64>,
    /// Inner Schwarz sweeps used per outer iteration.
    pub schwarz_sweeps: Vec<usize>,
}

/// Evolve the transient system to t' = warm-start time and return the state
/// as an initial guess for the stationary iteration.
pub fn warm_start(initial: &CarrierState, sys: &System, t_tilde: f64) -> Result<CarrierState> {
    if t_tilde < 0.0 {
        return Err(Error::Config(format!("warm start duration must be >= 0, got {t_tilde}")));
    }
    let mut state = initial.clone();
    if t_tilde > 0.0 {
        let target = state.time + t_tilde;
        let mut stepper = Stepper::new(sys);
        stepper.advance_to(&mut state, target)?;
    }
    Ok(state)
}

/// Warm start followed by the Gummel-Schwarz iteration.
pub fn solve_stationary(
    initial: &CarrierState,
    sys: &System,
    control: &IterationControl,
) -> Result<(CarrierState, ConvergenceReport)> {
    let guess = warm_start(initial, sys, control.warm_start_time)?;
    gummel_schwarz(&guess, sys, control)
}

/// The Gummel-Schwarz double iteration. Returns the final state together
/// with the convergence report; hitting the outer cap yields a report with
/// `converged == false` rather than an error, so callers can inspect and
/// flag the state.
pub fn gummel_schwarz(
    initial: &CarrierState,
    sys: &System,
    control: &IterationControl,
) -> Result<(CarrierState, ConvergenceReport)> {
    control.validate()?;
    let mut state = initial.clone();
    sys.solve_potential(&mut state)?;

    let mut prev_flat = Vec::new();
    let mut flat = Vec::new();
    state.flatten_into(&mut prev_flat);

    let mut update_norms = Vec::new();
    let mut schwarz_sweeps = Vec::new();
    let mut converged = false;
    let mut relaxer = PotentialRelaxer::new(control.damping, state.phi.len());
    let mut tmp = state.clone();

    for _k in 0..control.max_gummel {
        // Poisson from the current densities, then damped potential update.
        tmp.clone_from(&state);
        sys.solve_potential(&mut tmp)?;
        relaxer.apply(&mut state.phi, &tmp.phi);

        // Inner Schwarz loop at fixed potential.
        let mut sweeps = 0;
        let mut capped = false;
        let mut prev_densities = densities_flat(&state);
        for _ell in 0..control.max_schwarz {
            sweeps += 1;
            capped = schwarz_sweep(sys, &mut state)?;
            let cur = densities_flat(&state);
            let update = norms::rel_l2_diff(&cur, &prev_densities);
            prev_densities = cur;
            if update < control.schwarz_tol {
                break;
            }
        }
        schwarz_sweeps.push(sweeps);

        state.flatten_into(&mut flat);
        let update = norms::rel_l2_diff(&flat, &prev_flat);
        update_norms.push(update);
        std::mem::swap(&mut prev_flat, &mut flat);
        // A sweep that hit the density cap is not a trustworthy fixed
        // point no matter how small its update norm.
        if update < control.gummel_tol && !capped {
            converged = true;
            break;
        }
    }

    if !state.is_finite() {
        return Err(Error::Internal("Gummel-Schwarz produced non-finite state".into()));
    }
    let iterations = update_norms.len();
    Ok((state, ConvergenceReport { converged, iterations, update_norms, schwarz_sweeps }))
}

fn densities_flat(state: &CarrierState) -> Vec<f64> {
    let mut v = Vec::with_capacity(
        state.rho_n.len() * 2 + state.rho_r.len() * (2 + state.rho_extra.len()),
    );
    v.extend_from_slice(&state.rho_n);
    v.extend_from_slice(&state.rho_p);
    v.extend_from_slice(&state.rho_r);
    v.extend_from_slice(&state.rho_o);
    for e in &state.rho_extra {
        v.extend_from_slice(e);
    }
    v
}

/// One Schwarz sweep: semiconductor solve with frozen electrolyte interface
/// densities, then electrolyte solve with the just-computed carrier
/// densities (the sequential update).
fn schwarz_sweep(sys: &System, state: &mut CarrierState) -> Result<bool> {
    let i_star = sys.mesh.interface_index();
    let bv = &sys.device.interface.butler_volmer;
    let (rho_n_e, rho_p_e) = sys.interface_eq;

    // Interface channel rates from the frozen electrolyte side.
    let (k_f_coef, k_b_coef) = match bv {
        None => (sys.device.interface.k_et, sys.device.interface.k_ht),
        Some(p) => {
            let over = state.phi[i_star] - p.phi_e;
            (p.k0 * (-p.alpha_sym * 2.0 * over).exp(), p.k0 * ((1.0 - p.alpha_sym) * 2.0 * over).exp())
        }
    };

    // --- Semiconductor species -------------------------------------------
    let rho_o_sigma = state.rho_o[0];
    let rho_r_sigma = state.rho_r[0];
    // nu+.J_n = -k_f (rho_n - rho_n_e) rho_o  (density-driven)
    //         = -k_f rho_o                    (Butler-Volmer, rho_n-free)
    let (n_slope, n_const) = match bv {
        None => (-k_f_coef * rho_o_sigma, k_f_coef * rho_o_sigma * rho_n_e),
        Some(_) => (0.0, -k_f_coef * rho_o_sigma),
    };
    let (p_slope, p_const) = match bv {
        None => (-k_b_coef * rho_r_sigma, k_b_coef * rho_r_sigma * rho_p_e),
        Some(_) => (0.0, -k_b_coef * rho_r_sigma),
    };

    // Recombination enters as an explicitly lagged source, evaluated at the
    // current iterate. Its linearized-in-rho part has the anti-dissipative
    // sign in this model, so keeping it off the matrix preserves the
    // M-matrix structure.
    let recomb = &sys.device.recomb;
    let source_pair: Vec<f64> = (0..=i_star)
        .map(|i| {
            sys.photo_source[i]
                - physics::auger_recombination(state.rho_n[i], state.rho_p[i], recomb)
        })
        .collect();

    let mut cap_hit = false;
    let left_bc = match sys.device.contacts.kind {
        ContactKind::Ohmic => RowBc::Dirichlet(sys.contact_eq.0),
        ContactKind::Schottky => RowBc::Robin {
            velocity: sys.device.contacts.v_n,
            rho_eq: sys.contact_eq.0,
        },
    };
    let (new_n, hit) = region_solve(
        sys,
        RegionSide::Semiconductor,
        &sys.device.species.n,
        &state.phi,
        left_bc,
        RowBc::InterfaceFlux { slope: n_slope, constant: n_const },
        &source_pair,
    )?;
    state.rho_n = new_n;
    cap_hit |= hit;

    let left_bc_p = match sys.device.contacts.kind {
        ContactKind::Ohmic => RowBc::Dirichlet(sys.contact_eq.1),
        ContactKind::Schottky => RowBc::Robin {
            velocity: sys.device.contacts.v_p,
            rho_eq: sys.contact_eq.1,
        },
    };
    let (new_p, hit) = region_solve(
        sys,
        RegionSide::Semiconductor,
        &sys.device.species.p,
        &state.phi,
        left_bc_p,
        RowBc::InterfaceFlux { slope: p_slope, constant: p_const },
        &source_pair,
    )?;
    state.rho_p = new_p;
    cap_hit |= hit;

    // --- Electrolyte species, using the fresh carrier densities -----------
    let (k_f, k_b) = match bv {
        None => (
            k_f_coef * (state.rho_n[i_star] - rho_n_e),
            k_b_coef * (state.rho_p[i_star] - rho_p_e),
        ),
        Some(_) => (k_f_coef, k_b_coef),
    };
    let n_e_nodes = sys.num_e_nodes();
    let zeros = vec![0.0; n_e_nodes];

    let right_bc = |bulk: Option<f64>| match sys.device.electrode {
        ElectrodeKind::Bulk => RowBc::Dirichlet(bulk.unwrap_or(0.0)),
        ElectrodeKind::Insulated => RowBc::InterfaceFlux { slope: 0.0, constant: 0.0 },
    };

    // nu+.J_r = k_b rho_r - k_f rho_o(frozen): linear in rho_r at the
    // interface node.
    let rho_o_frozen = state.rho_o[0];
    let (new_r, hit) = region_solve(
        sys,
        RegionSide::Electrolyte,
        &sys.device.species.r,
        &state.phi,
        RowBc::InterfaceFlux { slope: k_b, constant: -k_f * rho_o_frozen },
        right_bc(sys.device.species.r.bulk_density),
        &zeros,
    )?;
    state.rho_r = new_r;
    cap_hit |= hit;

    // nu+.J_o = k_f rho_o - k_b rho_r(new).
    let rho_r_new = state.rho_r[0];
    let (new_o, hit) = region_solve(
        sys,
        RegionSide::Electrolyte,
        &sys.device.species.o,
        &state.phi,
        RowBc::InterfaceFlux { slope: k_f, constant: -k_b * rho_r_new },
        right_bc(sys.device.species.o.bulk_density),
        &zeros,
    )?;
    state.rho_o = new_o;
    cap_hit |= hit;

    for (idx, params) in sys.device.species.extra.iter().enumerate() {
        let (new_e, hit) = region_solve(
            sys,
            RegionSide::Electrolyte,
            params,
            &state.phi,
            RowBc::InterfaceFlux { slope: 0.0, constant: 0.0 },
            right_bc(params.bulk_density),
            &zeros,
        )?;
        state.rho_extra[idx] = new_e;
        cap_hit |= hit;
    }
    Ok(cap_hit)
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum RegionSide {
    Semiconductor,
    Electrolyte,
}

/// Boundary row of a stationary species solve.
#[derive(Debug, Clone, Copy)]
pub(crate) enum RowBc {
    Dirichlet(f64),
    /// Outward flux through the boundary face written as
    /// slope * rho_boundary + constant.
    InterfaceFlux { slope: f64, constant: f64 },
    /// Outward flux velocity * (rho - rho_eq); Schottky contacts.
    Robin { velocity: f64, rho_eq: f64 },
}

/// Ceiling on stationary density iterates. Far above any physical density
/// in this problem (1e22 cm^-3 in SI units); intermediate Gummel iterates
/// under extreme lagged potentials can overshoot it, and clamping keeps the
/// iteration finite. A solve whose final sweep still touches the cap is
/// reported as non-converged.
pub const DENSITY_CAP: f64 = 1e6;

/// Solve one species' stationary transport equation on its region with the
/// potential frozen: div J = source, J the upwind flux, source carrying the
/// lagged reaction terms. Tridiagonal elimination; the upwind form keeps
/// the matrix an M-matrix up to the (physically tiny) interface couplings.
/// Returns the densities and whether the cap was hit.
#[allow(clippy::too_many_arguments)]
pub(crate) fn region_solve(
    sys: &System,
    side: RegionSide,
    species: &SpeciesParams,
    phi: &[f64],
    left: RowBc,
    right: RowBc,
    source: &[f64],
) -> Result<(Vec<f64>, bool)> {
    let i_star = sys.mesh.interface_index();
    let (face_lo, n_faces, node_lo) = match side {
        RegionSide::Semiconductor => (0usize, i_star, 0usize),
        RegionSide::Electrolyte => (i_star, sys.mesh.num_faces() - i_star, i_star),
    };
    let n = n_faces + 1;
    debug_assert_eq!(source.len(), n);

    let alpha = species.alpha as f64;
    // Face coefficients: J_k = p_coef[k] rho_k + q_coef[k] rho_{k+1}.
    let mut p_coef = vec![0.0; n_faces];
    let mut q_coef = vec![0.0; n_faces];
    for k in 0..n_faces {
        let h = sys.mesh.spacing(face_lo + k);
        let w = -alpha * species.mu * (phi[node_lo + k + 1] - phi[node_lo + k]) / h;
        let d_h = species.d / h;
        p_coef[k] = d_h + w.max(0.0);
        q_coef[k] = -d_h + w.min(0.0);
    }

    let inv_vol = |i: usize| -> f64 {
        if i == 0 {
            2.0 / sys.mesh.spacing(face_lo)
        } else if i == n - 1 {
            2.0 / sys.mesh.spacing(face_lo + n_faces - 1)
        } else {
            2.0 / (sys.mesh.spacing(face_lo + i - 1) + sys.mesh.spacing(face_lo + i))
        }
    };

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut f = vec![0.0; n];

    // Left boundary row. Outward normal points in -x, so the outward flux
    // through the boundary face is -J(x_left).
    match left {
        RowBc::Dirichlet(v) => {
            b[0] = 1.0;
            f[0] = v;
        }
        RowBc::InterfaceFlux { slope, constant } => {
            // div = (J_face0 - J_boundary)/vol with J_boundary = slope*rho+const.
            let iv = inv_vol(0);
            b[0] = (p_coef[0] - slope) * iv;
            c[0] = q_coef[0] * iv;
            f[0] = source[0] + constant * iv;
        }
        RowBc::Robin { velocity, rho_eq } => {
            // nu.J = v(rho - rho_eq) with nu = -x: J_boundary = -v(rho - rho_eq).
            let iv = inv_vol(0);
            b[0] = (p_coef[0] + velocity) * iv;
            c[0] = q_coef[0] * iv;
            f[0] = source[0] + velocity * rho_eq * iv;
        }
    }
    for i in 1..n - 1 {
        let iv = inv_vol(i);
        a[i] = -p_coef[i - 1] * iv;
        b[i] = (p_coef[i] - q_coef[i - 1]) * iv;
        c[i] = q_coef[i] * iv;
        f[i] = source[i];
    }
    // Right boundary row; outward flux is +J(x_right).
    match right {
        RowBc::Dirichlet(v) => {
            b[n - 1] = 1.0;
            f[n - 1] = v;
        }
        RowBc::InterfaceFlux { slope, constant } => {
            let iv = inv_vol(n - 1);
            a[n - 1] = -p_coef[n_faces - 1] * iv;
            b[n - 1] = (slope - q_coef[n_faces - 1]) * iv;
            f[n - 1] = source[n - 1] - constant * iv;
        }
        RowBc::Robin { velocity, rho_eq } => {
            let iv = inv_vol(n - 1);
            a[n - 1] = -p_coef[n_faces - 1] * iv;
            b[n - 1] = (velocity - q_coef[n_faces - 1]) * iv;
            f[n - 1] = source[n - 1] + velocity * rho_eq * iv;
        }
    }

    for (i, &diag) in b.iter().enumerate() {
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::Internal(format!(
                "singular stationary assembly for {:?} at row {i}",
                species.name
            )));
        }
    }
    let mut x = f;
    let mut scratch = vec![0.0; n];
    tridiag::solve_in_place(&a, &b, &c, &mut x, &mut scratch);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(format!(
            "stationary solve for {:?} produced non-finite densities",
            species.name
        )));
    }
    // Stray negatives from the non-M-matrix interface couplings are
    // physically meaningless at their ~1e-12 magnitude; clamp. Overshoots
    // beyond the cap come from extreme lagged potentials on the way to the
    // fixed point.
    let mut cap_hit = false;
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        } else if *v > DENSITY_CAP {
            *v = DENSITY_CAP;
            cap_hit = true;
        }
    }
    Ok((x, cap_hit))
}

/// Stationary solve of one region with everything else frozen (the
/// spec-level operation, used directly by tests and the reduced model).
pub fn stationary_region_solve(
    sys: &System,
    side_is_semiconductor: bool,
    species: &SpeciesParams,
    phi: &[f64],
    left: StationaryBc,
    right: StationaryBc,
    source: &[f64],
) -> Result<Vec<f64>> {
    let side = if side_is_semiconductor {
        RegionSide::Semiconductor
    } else {
        RegionSide::Electrolyte
    };
    region_solve(sys, side, species, phi, left.into(), right.into(), source).map(|(x, _)| x)
}

/// Public boundary-condition surface for [`stationary_region_solve`].
#[derive(Debug, Clone, Copy)]
pub enum StationaryBc {
    Dirichlet(f64),
    /// Outward boundary flux slope * rho + constant.
    Flux { slope: f64, constant: f64 },
    Robin { velocity: f64, rho_eq: f64 },
}

impl From<StationaryBc> for RowBc {
    fn from(bc: StationaryBc) -> RowBc {
        match bc {
            StationaryBc::Dirichlet(v) => RowBc::Dirichlet(v),
            StationaryBc::Flux { slope, constant } => RowBc::InterfaceFlux { slope, constant },
            StationaryBc::Robin { velocity, rho_eq } => RowBc::Robin { velocity, rho_eq },
        }
    }
}
