//! Reduced "semiconductor-only" model: the electrolyte is replaced by a
//! Schottky contact at x' = 0 with Robin transfer conditions, and the
//! contact's total potential is pinned to the counter-electrode potential
//! of the paired full model. Used for the comparison study between the
//! whole-system solve and the Schottky approximation.

use crate::error::{Error, Result};
use crate::norms;
use crate::physics::{self, ContactKind, ContactParams};
use crate::poisson::{PoissonBc, PoissonOperator};
use crate::scales::ScaledDevice;
use crate::stationary::{region_solve, ConvergenceReport, IterationControl, RegionSide, RowBc};
use crate::transport::{species_flux, CarrierState, System};

/// The reduced device: semiconductor parameters of the full device plus the
/// synthetic Schottky contact at the interface location.
#[derive(Debug, Clone)]
pub struct SchottkyReducedDevice {
    pub device: ScaledDevice,
    /// Schottky contact placed at x' = 0.
    pub sigma_contact: ContactParams,
    /// Barrier height in scaled units.
    pub barrier: f64,
    /// Total Dirichlet potential applied at x' = 0; equals the full model's
    /// counter-electrode potential exactly.
    pub pinned_potential: f64,
}

/// Replace the electrolyte with a Schottky contact: Robin conditions with
/// the device's recombination velocities, and the total contact potential
/// matched to the counter electrode.
pub fn reduce(full: &ScaledDevice) -> Result<SchottkyReducedDevice> {
    let e_g = physics::band_gap(full.constants.temperature, &full.recomb);
    let mut sigma_contact = ContactParams {
        kind: ContactKind::Schottky,
        phi_app: 0.0,
        phi_app_a: full.contacts.phi_app_a,
        v_n: full.contacts.v_n,
        v_p: full.contacts.v_p,
        phi_m: full.contacts.phi_m,
        chi: full.contacts.chi,
        semiconductor_type: full.contacts.semiconductor_type,
    };
    let barrier =
        physics::schottky_barrier(&sigma_contact, e_g, full.constants.q, full.scales.phi_star)?;
    let pinned_potential = full.contacts.phi_app_a;
    sigma_contact.phi_app = pinned_potential - barrier;
    Ok(SchottkyReducedDevice { device: full.clone(), sigma_contact, barrier, pinned_potential })
}

/// Stationary fields of the reduced model over the semiconductor nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub rho_n: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Gummel iteration for the reduced model on the semiconductor half of the
/// full mesh. The inner Schwarz loop of the full solver degenerates away:
/// there is no second region.
pub fn solve_reduced(
    sys: &System,
    reduced: &SchottkyReducedDevice,
    initial_rho_n: f64,
    initial_rho_p: f64,
    control: &IterationControl,
) -> Result<(ReducedState, ConvergenceReport)> {
    control.validate()?;
    let i_star = sys.mesh.interface_index();
    let n = i_star + 1;
    let device = &reduced.device;

    let face_coeff = vec![device.lambda_s_sq; i_star];
    let poisson = PoissonOperator::new(
        &sys.mesh,
        0,
        i_star,
        &face_coeff,
        PoissonBc::Dirichlet,
        PoissonBc::Dirichlet,
    )?;

    let mut state = ReducedState {
        rho_n: vec![initial_rho_n; n],
        rho_p: vec![initial_rho_p; n],
        phi: vec![0.0; n],
    };
    if device.contacts.kind == ContactKind::Ohmic {
        state.rho_n[0] = sys.contact_eq.0;
        state.rho_p[0] = sys.contact_eq.1;
    }

    let solve_phi = |state: &mut ReducedState| {
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let charge = sys.doping[i] + state.rho_p[i] - state.rho_n[i];
            let vol = if i == 0 {
                0.5 * sys.mesh.spacing(0)
            } else if i == i_star {
                0.5 * sys.mesh.spacing(i_star - 1)
            } else {
                0.5 * (sys.mesh.spacing(i - 1) + sys.mesh.spacing(i))
            };
            rhs[i] = charge * vol;
        }
        rhs[0] = sys.phi_bc_left;
        rhs[i_star] = reduced.pinned_potential;
        poisson.solve_in_place(&mut rhs);
        rhs
    };
    state.phi = solve_phi(&mut state);
    let mut relaxer = crate::stationary::PotentialRelaxer::new(control.damping, n);

    let recomb = &device.recomb;
    let (iface_n_eq, iface_p_eq) = sys.interface_eq;

    let mut prev_flat = flatten(&state);
    let mut update_norms = Vec::new();
    let mut converged = false;

    for _k in 0..control.max_gummel {
        let phi_new = solve_phi(&mut state);
        relaxer.apply(&mut state.phi, &phi_new);

        let source: Vec<f64> = (0..n)
            .map(|i| {
                sys.photo_source[i]
                    - crate::physics::auger_recombination(state.rho_n[i], state.rho_p[i], recomb)
            })
            .collect();

        let mut capped = false;
        let left_n = match device.contacts.kind {
            ContactKind::Ohmic => RowBc::Dirichlet(sys.contact_eq.0),
            ContactKind::Schottky => {
                RowBc::Robin { velocity: device.contacts.v_n, rho_eq: sys.contact_eq.0 }
            }
        };
        let (new_n, hit) = region_solve(
            sys,
            RegionSide::Semiconductor,
            &device.species.n,
            &state.phi,
            left_n,
            RowBc::Robin { velocity: reduced.sigma_contact.v_n, rho_eq: iface_n_eq },
            &source,
        )?;
        state.rho_n = new_n;
        capped |= hit;

        let left_p = match device.contacts.kind {
            ContactKind::Ohmic => RowBc::Dirichlet(sys.contact_eq.1),
            ContactKind::Schottky => {
                RowBc::Robin { velocity: device.contacts.v_p, rho_eq: sys.contact_eq.1 }
            }
        };
        let (new_p, hit) = region_solve(
            sys,
            RegionSide::Semiconductor,
            &device.species.p,
            &state.phi,
            left_p,
            RowBc::Robin { velocity: reduced.sigma_contact.v_p, rho_eq: iface_p_eq },
            &source,
        )?;
        state.rho_p = new_p;
        capped |= hit;

        let flat = flatten(&state);
        let update = norms::rel_l2_diff(&flat, &prev_flat);
        update_norms.push(update);
        prev_flat = flat;
        if update < control.gummel_tol && !capped {
            converged = true;
            break;
        }
    }

    let iterations = update_norms.len();
    Ok((
        state,
        ConvergenceReport { converged, iterations, update_norms, schwarz_sweeps: vec![] },
    ))
}

fn flatten(state: &ReducedState) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * state.rho_n.len());
    v.extend_from_slice(&state.rho_n);
    v.extend_from_slice(&state.rho_p);
    v.extend_from_slice(&state.phi);
    v
}

/// Field-wise discrepancies between the full and reduced stationary
/// solutions over the semiconductor region.
#[derive(Debug, Clone, Copy)]
pub struct DiscrepancyReport {
    pub rho_n_rel_l2: f64,
    pub rho_n_max: f64,
    pub rho_p_rel_l2: f64,
    pub rho_p_max: f64,
    pub phi_rel_l2: f64,
    pub phi_max: f64,
    /// Relative difference of the total flux at the current collector.
    pub contact_flux_rel: f64,
    /// Bulk redox densities of the full model, for tagging.
    pub bulk_reductant: f64,
    pub bulk_oxidant: f64,
}

/// Compare a full-model stationary state against a reduced-model state on
/// the shared semiconductor mesh.
pub fn compare(
    full: &CarrierState,
    reduced: &ReducedState,
    sys: &System,
) -> Result<DiscrepancyReport> {
    let i_star = sys.mesh.interface_index();
    let n = i_star + 1;
    if reduced.rho_n.len() != n || full.rho_n.len() != n {
        return Err(Error::Contract(format!(
            "semiconductor meshes differ: full {} vs reduced {} nodes",
            full.rho_n.len(),
            reduced.rho_n.len()
        )));
    }
    // Volume weights over the semiconductor (interface node gets its S-side
    // half cell).
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                0.5 * sys.mesh.spacing(0)
            } else if i == i_star {
                0.5 * sys.mesh.spacing(i_star - 1)
            } else {
                0.5 * (sys.mesh.spacing(i - 1) + sys.mesh.spacing(i))
            }
        })
        .collect();

    let rel = |a: &[f64], b: &[f64]| norms::weighted_rel_l2_diff(a, b, &weights);
    let max_diff = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
    };

    let alpha_n = sys.device.species.n.alpha as f64;
    let alpha_p = sys.device.species.p.alpha as f64;
    let phi_full = &full.phi[..n];
    let j_full = {
        let j_n = species_flux(&full.rho_n, &full.phi, &sys.device.species.n, &sys.mesh);
        let j_p = species_flux(&full.rho_p, &full.phi, &sys.device.species.p, &sys.mesh);
        alpha_p * j_p[0] + alpha_n * j_n[0]
    };
    let j_reduced = {
        let j_n = species_flux(&reduced.rho_n, &reduced.phi, &sys.device.species.n, &sys.mesh);
        let j_p = species_flux(&reduced.rho_p, &reduced.phi, &sys.device.species.p, &sys.mesh);
        alpha_p * j_p[0] + alpha_n * j_n[0]
    };
    let contact_flux_rel = (j_full - j_reduced).abs() / j_full.abs().max(1e-12);

    Ok(DiscrepancyReport {
        rho_n_rel_l2: rel(&reduced.rho_n, &full.rho_n),
        rho_n_max: max_diff(&reduced.rho_n, &full.rho_n),
        rho_p_rel_l2: rel(&reduced.rho_p, &full.rho_p),
        rho_p_max: max_diff(&reduced.rho_p, &full.rho_p),
        phi_rel_l2: rel(&reduced.phi, phi_full),
        phi_max: max_diff(&reduced.phi, phi_full),
        contact_flux_rel,
        bulk_reductant: sys.device.species.r.bulk_density.unwrap_or(0.0),
        bulk_oxidant: sys.device.species.o.bulk_density.unwrap_or(0.0),
    })
}
