//! Drift-diffusion transport: upwind face fluxes, reactive interface
//! conditions, source assembly, and the explicit (forward Euler) integrator.
//!
//! Density fields are region-local: electrons and holes live on the
//! semiconductor nodes, the redox pair and any spectator species on the
//! electrolyte nodes, and the interface node carries both sides, coupled
//! only through the transfer fluxes. The sign convention for interface
//! fluxes is nu+ . J, with nu+ the unit normal pointing into the
//! electrolyte (+x).

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::physics;
use crate::poisson::{PoissonBc, PoissonOperator};
use crate::scales::{ElectrodeKind, ScaledDevice, SpeciesParams, SpeciesRegion};

/// Nodal fields at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierState {
    pub time: f64,
    /// Electrons / holes on semiconductor nodes 0..=i*.
    pub rho_n: Vec<f64>,
    pub rho_p: Vec<f64>,
    /// Reductant / oxidant on electrolyte nodes; local index 0 is the
    /// interface node i*.
    pub rho_r: Vec<f64>,
    pub rho_o: Vec<f64>,
    /// Spectator electrolyte species (possibly empty).
    pub rho_extra: Vec<Vec<f64>>,
    /// Potential on every node.
    pub phi: Vec<f64>,
}

impl CarrierState {
    /// Append every field value to `out` (densities then potential), for
    /// update-norm bookkeeping.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.rho_n);
        out.extend_from_slice(&self.rho_p);
        out.extend_from_slice(&self.rho_r);
        out.extend_from_slice(&self.rho_o);
        for extra in &self.rho_extra {
            out.extend_from_slice(extra);
        }
        out.extend_from_slice(&self.phi);
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite());
        ok(&self.rho_n)
            && ok(&self.rho_p)
            && ok(&self.rho_r)
            && ok(&self.rho_o)
            && self.rho_extra.iter().all(|v| ok(v))
            && ok(&self.phi)
    }
}

/// Interface transfer fluxes nu+ . J at the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceFluxes {
    pub j_n: f64,
    pub j_p: f64,
    pub j_r: f64,
    pub j_o: f64,
}

impl InterfaceFluxes {
    /// Total flux carried across the interface, evaluated from the
    /// semiconductor side (equals the electrolyte side by construction).
    pub fn total(&self, device: &ScaledDevice) -> f64 {
        device.species.p.alpha as f64 * self.j_p + device.species.n.alpha as f64 * self.j_n
    }
}

/// Per-species face fluxes plus the signed total flux of the total-current
/// definition.
#[derive(Debug, Clone)]
pub struct FluxField {
    /// Semiconductor faces 0..i*-1 (global indexing).
    pub j_n: Vec<f64>,
    pub j_p: Vec<f64>,
    /// Electrolyte faces, local index k maps to global face i*+k.
    pub j_r: Vec<f64>,
    pub j_o: Vec<f64>,
    pub j_extra: Vec<Vec<f64>>,
    pub interface: InterfaceFluxes,
    /// Total flux on every face: alpha_p J_p + alpha_n J_n on the
    /// semiconductor side, sum of alpha_z J_z on the electrolyte side.
    pub total: Vec<f64>,
}

/// Upwind face fluxes for one species over its region's faces.
/// J = -D' drho/dx + w rho_up with drift velocity w = -alpha mu' dPhi/dx;
/// the upwind density follows the sign of w (arithmetic mean at w = 0).
pub fn species_flux(
    rho: &[f64],
    phi: &[f64],
    params: &SpeciesParams,
    mesh: &Mesh1D,
) -> Vec<f64> {
    let i_star = mesh.interface_index();
    let (face_lo, n_faces, node_lo) = match params.region {
        SpeciesRegion::Semiconductor => (0, i_star, 0),
        SpeciesRegion::Electrolyte => (i_star, mesh.num_faces() - i_star, i_star),
    };
    debug_assert_eq!(rho.len(), n_faces + 1);
    let alpha = params.alpha as f64;
    let mut fluxes = Vec::with_capacity(n_faces);
    for k in 0..n_faces {
        let face = face_lo + k;
        let h = mesh.spacing(face);
        let dphi = phi[node_lo + k + 1] - phi[node_lo + k];
        let w = -alpha * params.mu * dphi / h;
        let rho_up = if w > 0.0 {
            rho[k]
        } else if w < 0.0 {
            rho[k + 1]
        } else {
            0.5 * (rho[k] + rho[k + 1])
        };
        fluxes.push(-params.d * (rho[k + 1] - rho[k]) / h + w * rho_up);
    }
    fluxes
}

/// Butler-Volmer interface flux nu+ . J_o (= -nu+ . J_r):
/// k0 [ e^{-alpha eta dPhi} rho_o - e^{(1-alpha) eta dPhi} rho_r ], eta = 2.
pub fn butler_volmer_flux(
    phi: f64,
    phi_e: f64,
    rho_r: f64,
    rho_o: f64,
    k0: f64,
    alpha_sym: f64,
) -> f64 {
    debug_assert!(alpha_sym > 0.0 && alpha_sym < 1.0);
    let eta = 2.0;
    let over = phi - phi_e;
    k0 * ((-alpha_sym * eta * over).exp() * rho_o - ((1.0 - alpha_sym) * eta * over).exp() * rho_r)
}

/// Per-region face geometry cached for the hot loops.
#[derive(Debug, Clone)]
struct FaceGeom {
    inv_h: Vec<f64>,
    inv_h2: Vec<f64>,
    /// Inverse control volumes per region node (interface node gets its
    /// half-cell on this region's side).
    inv_vol: Vec<f64>,
}

impl FaceGeom {
    fn new(mesh: &Mesh1D, face_lo: usize, n_faces: usize) -> Self {
        let inv_h: Vec<f64> = (0..n_faces).map(|k| 1.0 / mesh.spacing(face_lo + k)).collect();
        let inv_h2: Vec<f64> = inv_h.iter().map(|v| v * v).collect();
        let mut inv_vol = Vec::with_capacity(n_faces + 1);
        inv_vol.push(2.0 * inv_h[0]);
        for i in 1..n_faces {
            inv_vol.push(2.0 / (mesh.spacing(face_lo + i - 1) + mesh.spacing(face_lo + i)));
        }
        inv_vol.push(2.0 * inv_h[n_faces - 1]);
        FaceGeom { inv_h, inv_h2, inv_vol }
    }
}

/// Time-derivative fields, laid out like the density fields.
#[derive(Debug, Clone)]
pub struct Rates {
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub o: Vec<f64>,
    pub extra: Vec<Vec<f64>>,
}

/// A device discretized on a mesh: precomputed nodal profiles, boundary
/// data, and the pre-factored Poisson operator. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct System {
    pub device: ScaledDevice,
    pub mesh: Mesh1D,
    /// Nodal doping over semiconductor nodes.
    pub doping: Vec<f64>,
    /// Photogeneration profile G'(x') over semiconductor nodes (gamma not
    /// applied).
    pub generation: Vec<f64>,
    /// gamma * G', the source actually added to both carrier equations.
    pub photo_source: Vec<f64>,
    /// Equilibrium pair at the contact node and at the interface node.
    pub contact_eq: (f64, f64),
    pub interface_eq: (f64, f64),
    /// Dirichlet potential at the collector (built-in/Schottky + applied).
    pub phi_bc_left: f64,
    /// Dirichlet potential at the electrode, None when insulated.
    pub phi_bc_right: Option<f64>,
    poisson: PoissonOperator,
    s_geom: FaceGeom,
    e_geom: FaceGeom,
}

impl System {
    pub fn new(device: ScaledDevice, mesh: Mesh1D) -> Result<Self> {
        let tol = 1e-9 * mesh.x_left().abs().max(mesh.x_right());
        if (mesh.x_left() - device.geometry.x_left).abs() > tol
            || (mesh.x_right() - device.geometry.x_right).abs() > tol
        {
            return Err(Error::Config(format!(
                "mesh bounds ({}, {}) do not match device geometry ({}, {})",
                mesh.x_left(),
                mesh.x_right(),
                device.geometry.x_left,
                device.geometry.x_right
            )));
        }
        let i_star = mesh.interface_index();
        let m = mesh.num_faces();

        let doping: Vec<f64> =
            (0..=i_star).map(|i| device.doping.eval(mesh.nodes()[i])).collect();
        let generation = physics::generation_profile(&mesh, &device.illumination)?;
        let generation: Vec<f64> = generation[..=i_star].to_vec();
        let gamma = device.illumination.gamma();
        let photo_source: Vec<f64> = generation.iter().map(|g| gamma * g).collect();

        let contact_eq = physics::ohmic_equilibrium(doping[0], device.recomb.rho_isc);
        let interface_eq = physics::ohmic_equilibrium(doping[i_star], device.recomb.rho_isc);

        let phi_bc_left = device.contact_potential()?;
        let phi_bc_right = match device.electrode {
            ElectrodeKind::Bulk => Some(device.contacts.phi_app_a),
            ElectrodeKind::Insulated => None,
        };

        let face_coeff: Vec<f64> = (0..m)
            .map(|k| if k < i_star { device.lambda_s_sq } else { device.lambda_e_sq })
            .collect();
        let bc_right = if phi_bc_right.is_some() { PoissonBc::Dirichlet } else { PoissonBc::NoFlux };
        let poisson =
            PoissonOperator::new(&mesh, 0, m, &face_coeff, PoissonBc::Dirichlet, bc_right)?;

        let s_geom = FaceGeom::new(&mesh, 0, i_star);
        let e_geom = FaceGeom::new(&mesh, i_star, m - i_star);

        Ok(System {
            device,
            mesh,
            doping,
            generation,
            photo_source,
            contact_eq,
            interface_eq,
            phi_bc_left,
            phi_bc_right,
            poisson,
            s_geom,
            e_geom,
        })
    }

    pub fn num_s_nodes(&self) -> usize {
        self.mesh.interface_index() + 1
    }

    pub fn num_e_nodes(&self) -> usize {
        self.mesh.num_nodes() - self.mesh.interface_index()
    }

    /// Uniform initial densities with Dirichlet nodes set to their boundary
    /// values and the potential solved from the densities.
    pub fn state_from_uniform(
        &self,
        rho_n: f64,
        rho_p: f64,
        rho_r: f64,
        rho_o: f64,
        extra: &[f64],
    ) -> Result<CarrierState> {
        if extra.len() != self.device.species.extra.len() {
            return Err(Error::Config(format!(
                "{} initial values supplied for {} extra species",
                extra.len(),
                self.device.species.extra.len()
            )));
        }
        let ns = self.num_s_nodes();
        let ne = self.num_e_nodes();
        let mut state = CarrierState {
            time: 0.0,
            rho_n: vec![rho_n; ns],
            rho_p: vec![rho_p; ns],
            rho_r: vec![rho_r; ne],
            rho_o: vec![rho_o; ne],
            rho_extra: extra.iter().map(|&v| vec![v; ne]).collect(),
            phi: vec![0.0; self.mesh.num_nodes()],
        };
        self.reset_dirichlet(&mut state);
        self.solve_potential(&mut state)?;
        Ok(state)
    }

    /// Pin density Dirichlet nodes to their boundary values.
    pub fn reset_dirichlet(&self, state: &mut CarrierState) {
        if self.device.contacts.kind == physics::ContactKind::Ohmic {
            state.rho_n[0] = self.contact_eq.0;
            state.rho_p[0] = self.contact_eq.1;
        }
        if self.device.electrode == ElectrodeKind::Bulk {
            let last = state.rho_r.len() - 1;
            state.rho_r[last] = self.device.species.r.bulk_density.unwrap_or(0.0);
            state.rho_o[last] = self.device.species.o.bulk_density.unwrap_or(0.0);
            for (extra, params) in state.rho_extra.iter_mut().zip(&self.device.species.extra) {
                extra[last] = params.bulk_density.unwrap_or(0.0);
            }
        }
    }

    /// Rebuild the Poisson right-hand side from the current densities and
    /// solve for the potential in place.
    pub fn solve_potential(&self, state: &mut CarrierState) -> Result<()> {
        let i_star = self.mesh.interface_index();
        let m = self.mesh.num_faces();
        let alpha_n = self.device.species.n.alpha as f64;
        let alpha_p = self.device.species.p.alpha as f64;
        let alpha_r = self.device.species.r.alpha as f64;
        let alpha_o = self.device.species.o.alpha as f64;

        let rhs = &mut state.phi;
        for i in 0..=i_star {
            let charge = self.doping[i] + alpha_p * state.rho_p[i] + alpha_n * state.rho_n[i];
            rhs[i] = charge * self.mesh.control_volume(i);
        }
        for i in i_star..=m {
            let j = i - i_star;
            let mut charge = alpha_o * state.rho_o[j] + alpha_r * state.rho_r[j];
            for (extra, params) in state.rho_extra.iter().zip(&self.device.species.extra) {
                charge += params.alpha as f64 * extra[j];
            }
            if i == i_star {
                let s_charge = self.doping[i_star]
                    + alpha_p * state.rho_p[i_star]
                    + alpha_n * state.rho_n[i_star];
                rhs[i] = 0.5 * self.mesh.spacing(i_star - 1) * s_charge
                    + 0.5 * self.mesh.spacing(i_star) * charge;
            } else {
                rhs[i] = charge * self.mesh.control_volume(i);
            }
        }
        rhs[0] = self.phi_bc_left;
        if let Some(phi_a) = self.phi_bc_right {
            rhs[m] = phi_a;
        }
        self.poisson.solve_in_place(rhs);
        Ok(())
    }

    /// Interface transfer fluxes nu+ . J for the current state.
    pub fn interface_fluxes(&self, state: &CarrierState) -> InterfaceFluxes {
        let i_star = self.mesh.interface_index();
        let rho_n = state.rho_n[i_star];
        let rho_p = state.rho_p[i_star];
        let rho_r = state.rho_r[0];
        let rho_o = state.rho_o[0];
        let (rho_n_e, rho_p_e) = self.interface_eq;
        let ifc = &self.device.interface;
        // Forward/backward channel rates: density-driven by default,
        // Butler-Volmer when configured.
        let (k_f, k_b) = match &ifc.butler_volmer {
            None => (ifc.k_et * (rho_n - rho_n_e), ifc.k_ht * (rho_p - rho_p_e)),
            Some(bv) => {
                let over = state.phi[i_star] - bv.phi_e;
                let eta = 2.0;
                (
                    bv.k0 * (-bv.alpha_sym * eta * over).exp(),
                    bv.k0 * ((1.0 - bv.alpha_sym) * eta * over).exp(),
                )
            }
        };
        let f = k_b * rho_r - k_f * rho_o;
        InterfaceFluxes { j_n: -k_f * rho_o, j_p: -k_b * rho_r, j_r: f, j_o: -f }
    }

    /// Assemble dRho/dt for every species (conservative flux divergence plus
    /// sources, with boundary and interface conditions applied) and return
    /// the stability bound for the explicit step.
    pub fn rates(&self, state: &CarrierState, rates: &mut Rates) -> f64 {
        let i_star = self.mesh.interface_index();
        let iface = self.interface_fluxes(state);
        let mut max_ratio = 0.0f64;

        // Semiconductor species.
        let phi_s = &state.phi[..=i_star];
        let left_n = match self.device.contacts.kind {
            physics::ContactKind::Ohmic => BoundaryFlux::Dirichlet,
            physics::ContactKind::Schottky => BoundaryFlux::Value(
                -self.device.contacts.v_n * (state.rho_n[0] - self.contact_eq.0),
            ),
        };
        let left_p = match self.device.contacts.kind {
            physics::ContactKind::Ohmic => BoundaryFlux::Dirichlet,
            physics::ContactKind::Schottky => BoundaryFlux::Value(
                -self.device.contacts.v_p * (state.rho_p[0] - self.contact_eq.1),
            ),
        };
        region_rates(
            &state.rho_n,
            phi_s,
            &self.s_geom,
            &self.device.species.n,
            left_n,
            BoundaryFlux::Value(iface.j_n),
            &mut rates.n,
            &mut max_ratio,
        );
        region_rates(
            &state.rho_p,
            phi_s,
            &self.s_geom,
            &self.device.species.p,
            left_p,
            BoundaryFlux::Value(iface.j_p),
            &mut rates.p,
            &mut max_ratio,
        );
        // Shared generation/recombination source for the carrier pair.
        for i in 0..=i_star {
            let r = physics::auger_recombination(state.rho_n[i], state.rho_p[i], &self.device.recomb);
            let src = -r + self.photo_source[i];
            rates.n[i] += src;
            rates.p[i] += src;
        }
        if self.device.contacts.kind == physics::ContactKind::Ohmic {
            rates.n[0] = 0.0;
            rates.p[0] = 0.0;
        }

        // Electrolyte species; bulk reactions vanish, so fluxes are the only
        // contributions.
        let phi_e = &state.phi[i_star..];
        let right = match self.device.electrode {
            ElectrodeKind::Bulk => BoundaryFlux::Dirichlet,
            ElectrodeKind::Insulated => BoundaryFlux::Value(0.0),
        };
        region_rates(
            &state.rho_r,
            phi_e,
            &self.e_geom,
            &self.device.species.r,
            BoundaryFlux::Value(iface.j_r),
            right,
            &mut rates.r,
            &mut max_ratio,
        );
        region_rates(
            &state.rho_o,
            phi_e,
            &self.e_geom,
            &self.device.species.o,
            BoundaryFlux::Value(iface.j_o),
            right,
            &mut rates.o,
            &mut max_ratio,
        );
        for (k, params) in self.device.species.extra.iter().enumerate() {
            region_rates(
                &state.rho_extra[k],
                phi_e,
                &self.e_geom,
                params,
                BoundaryFlux::Value(0.0),
                right,
                &mut rates.extra[k],
                &mut max_ratio,
            );
        }
        if self.device.electrode == ElectrodeKind::Bulk {
            let last_r = rates.r.len() - 1;
            rates.r[last_r] = 0.0;
            rates.o[last_r] = 0.0;
            for extra in &mut rates.extra {
                extra[last_r] = 0.0;
            }
        }

        1.0 / max_ratio.max(1e-300)
    }

    /// All face fluxes, interface fluxes, and the total flux field.
    pub fn fluxes(&self, state: &CarrierState) -> FluxField {
        let d = &self.device;
        let j_n = species_flux(&state.rho_n, &state.phi, &d.species.n, &self.mesh);
        let j_p = species_flux(&state.rho_p, &state.phi, &d.species.p, &self.mesh);
        let j_r = species_flux(&state.rho_r, &state.phi, &d.species.r, &self.mesh);
        let j_o = species_flux(&state.rho_o, &state.phi, &d.species.o, &self.mesh);
        let j_extra: Vec<Vec<f64>> = d
            .species
            .extra
            .iter()
            .zip(&state.rho_extra)
            .map(|(params, rho)| species_flux(rho, &state.phi, params, &self.mesh))
            .collect();
        let interface = self.interface_fluxes(state);
        let total = total_flux(&j_n, &j_p, &j_r, &j_o, &j_extra, d);
        FluxField { j_n, j_p, j_r, j_o, j_extra, interface, total }
    }
}

/// Signed total flux per face from the per-species fluxes.
pub fn total_flux(
    j_n: &[f64],
    j_p: &[f64],
    j_r: &[f64],
    j_o: &[f64],
    j_extra: &[Vec<f64>],
    device: &ScaledDevice,
) -> Vec<f64> {
    let alpha_n = device.species.n.alpha as f64;
    let alpha_p = device.species.p.alpha as f64;
    let alpha_r = device.species.r.alpha as f64;
    let alpha_o = device.species.o.alpha as f64;
    let mut total = Vec::with_capacity(j_n.len() + j_r.len());
    for k in 0..j_n.len() {
        total.push(alpha_p * j_p[k] + alpha_n * j_n[k]);
    }
    for k in 0..j_r.len() {
        let mut t = alpha_o * j_o[k] + alpha_r * j_r[k];
        for (extra, params) in j_extra.iter().zip(&device.species.extra) {
            t += params.alpha as f64 * extra[k];
        }
        total.push(t);
    }
    total
}

#[derive(Debug, Clone, Copy)]
enum BoundaryFlux {
    /// Node is held at its Dirichlet value (rate zeroed by the caller).
    Dirichlet,
    /// Prescribed total flux through the region's outer face.
    Value(f64),
}

/// Upwind flux divergence over one region: fills `rate` with
/// -(dJ/dx) per node and folds the explicit-step stability ratio
/// (2D + h|w|)/h^2 into `max_ratio`.
#[allow(clippy::too_many_arguments)]
fn region_rates(
    rho: &[f64],
    phi: &[f64],
    geom: &FaceGeom,
    species: &SpeciesParams,
    left: BoundaryFlux,
    right: BoundaryFlux,
    rate: &mut [f64],
    max_ratio: &mut f64,
) {
    let n_faces = geom.inv_h.len();
    debug_assert_eq!(rho.len(), n_faces + 1);
    let d = species.d;
    let drift_coef = -(species.alpha as f64) * species.mu;
    let two_d = 2.0 * d;

    let mut j_prev = match left {
        BoundaryFlux::Dirichlet => 0.0,
        BoundaryFlux::Value(v) => v,
    };
    let mut ratio = *max_ratio;
    for k in 0..n_faces {
        let inv_h = geom.inv_h[k];
        let dphi = (phi[k + 1] - phi[k]) * inv_h;
        let w = drift_coef * dphi;
        let rho_up = if w > 0.0 {
            rho[k]
        } else if w < 0.0 {
            rho[k + 1]
        } else {
            0.5 * (rho[k] + rho[k + 1])
        };
        let j = d * (rho[k] - rho[k + 1]) * inv_h + w * rho_up;
        ratio = ratio.max(two_d * geom.inv_h2[k] + w.abs() * inv_h);
        rate[k] = (j_prev - j) * geom.inv_vol[k];
        j_prev = j;
    }
    let j_right = match right {
        BoundaryFlux::Dirichlet => 0.0,
        BoundaryFlux::Value(v) => v,
    };
    rate[n_faces] = (j_prev - j_right) * geom.inv_vol[n_faces];
    *max_ratio = ratio;

    // Dirichlet rows carry no physical rate; the first face's divergence
    // contribution at such nodes is discarded by the caller's reset.
    if matches!(left, BoundaryFlux::Dirichlet) {
        rate[0] = 0.0;
    }
    if matches!(right, BoundaryFlux::Dirichlet) {
        rate[n_faces] = 0.0;
    }
}

/// Forward Euler integrator with preallocated work buffers.
///
/// The step size obeys dt = safety * min over faces of h^2/(2D' + h|w|),
/// recomputed from the current drift field each step. Negative densities
/// are clamped to zero and counted; in strict mode any clamp aborts.
pub struct Stepper<'a> {
    pub sys: &'a System,
    rates: Rates,
    pub safety: f64,
    pub strict_positivity: bool,
    pub clamp_events: u64,
    /// Largest |j_r + j_o| seen at the interface (antisymmetry witness).
    pub max_redox_asymmetry: f64,
    steps_since_check: u32,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a System) -> Self {
        let ns = sys.num_s_nodes();
        let ne = sys.num_e_nodes();
        Stepper {
            sys,
            rates: Rates {
                n: vec![0.0; ns],
                p: vec![0.0; ns],
                r: vec![0.0; ne],
                o: vec![0.0; ne],
                extra: vec![vec![0.0; ne]; sys.device.species.extra.len()],
            },
            safety: 0.9,
            strict_positivity: false,
            clamp_events: 0,
            max_redox_asymmetry: 0.0,
            steps_since_check: 0,
        }
    }

    /// One explicit step with automatic step size, capped by `dt_cap`.
    /// Returns the dt actually taken.
    pub fn step(&mut self, state: &mut CarrierState, dt_cap: f64) -> Result<f64> {
        let stable = self.sys.rates(state, &mut self.rates);
        let dt = (self.safety * stable).min(dt_cap);
        self.apply(state, dt)?;
        Ok(dt)
    }

    /// One explicit step with a caller-chosen dt (must respect stability).
    pub fn step_with_dt(&mut self, state: &mut CarrierState, dt: f64) -> Result<()> {
        self.sys.rates(state, &mut self.rates);
        self.apply(state, dt)
    }

    fn apply(&mut self, state: &mut CarrierState, dt: f64) -> Result<()> {
        let iface = self.sys.interface_fluxes(state);
        let asym = (iface.j_r + iface.j_o).abs();
        if asym > self.max_redox_asymmetry {
            self.max_redox_asymmetry = asym;
        }

        let mut clamped = 0u64;
        let mut update = |rho: &mut [f64], rate: &[f64]| {
            for (v, dv) in rho.iter_mut().zip(rate) {
                let next = *v + dt * dv;
                if next < 0.0 {
                    clamped += 1;
                    *v = 0.0;
                } else {
                    *v = next;
                }
            }
        };
        update(&mut state.rho_n, &self.rates.n);
        update(&mut state.rho_p, &self.rates.p);
        update(&mut state.rho_r, &self.rates.r);
        update(&mut state.rho_o, &self.rates.o);
        for (rho, rate) in state.rho_extra.iter_mut().zip(&self.rates.extra) {
            update(rho, rate);
        }
        if clamped > 0 {
            self.clamp_events += clamped;
            if self.strict_positivity {
                return Err(Error::StepFailure {
                    time: state.time,
                    reason: format!("{clamped} densities clamped to zero"),
                });
            }
        }
        self.sys.reset_dirichlet(state);
        self.sys.solve_potential(state)?;
        state.time += dt;

        self.steps_since_check += 1;
        if self.steps_since_check >= 256 {
            self.steps_since_check = 0;
            if !state.is_finite() {
                return Err(Error::StepFailure {
                    time: state.time,
                    reason: "non-finite field detected".into(),
                });
            }
        }
        Ok(())
    }

    /// Advance to exactly `t_end` (never overshoots).
    pub fn advance_to(&mut self, state: &mut CarrierState, t_end: f64) -> Result<()> {
        while state.time < t_end {
            let remaining = t_end - state.time;
            self.step(state, remaining)?;
        }
        if !state.is_finite() {
            return Err(Error::StepFailure {
                time: state.time,
                reason: "non-finite field detected".into(),
            });
        }
        Ok(())
    }

    /// Integrate until the relative L2 update per unit time drops below
    /// `rate_tol`, sampling every `check_interval` time units.
    pub fn run_to_steady(
        &mut self,
        state: &mut CarrierState,
        rate_tol: f64,
        check_interval: f64,
        max_time: f64,
    ) -> Result<SteadyReport> {
        let mut prev = Vec::new();
        let mut cur = Vec::new();
        state.flatten_into(&mut prev);
        let t0 = state.time;
        let mut last_rate = f64::INFINITY;
        while state.time - t0 < max_time {
            let target = (state.time + check_interval).min(t0 + max_time);
            self.advance_to(state, target)?;
            state.flatten_into(&mut cur);
            let dt_window = check_interval.max(1e-300);
            last_rate = crate::norms::rel_l2_diff(&cur, &prev) / dt_window;
            if last_rate < rate_tol {
                return Ok(SteadyReport { converged: true, update_rate: last_rate, time: state.time });
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        Ok(SteadyReport { converged: false, update_rate: last_rate, time: state.time })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyReport {
    pub converged: bool,
    /// Relative L2 update per unit time at the last check.
    pub update_rate: f64,
    pub time: f64,
}

/// Functional form of one forward Euler step (allocates; the spec-level
/// operation). `dt` must respect the stability bound.
pub fn forward_euler_step(state: &CarrierState, sys: &System, dt: f64) -> Result<CarrierState> {
    let mut next = state.clone();
    let mut stepper = Stepper::new(sys);
    stepper.step_with_dt(&mut next, dt)?;
    if !next.is_finite() {
        return Err(Error::StepFailure { time: next.time, reason: "non-finite field".into() });
    }
    Ok(next)
}

/// Stability bound dt <= min over faces of h^2/(2D' + h|w|) for the state's
/// current drift field (without the safety factor).
pub fn stable_dt(state: &CarrierState, sys: &System) -> f64 {
    let mut rates = Rates {
        n: vec![0.0; sys.num_s_nodes()],
        p: vec![0.0; sys.num_s_nodes()],
        r: vec![0.0; sys.num_e_nodes()],
        o: vec![0.0; sys.num_e_nodes()],
        extra: vec![vec![0.0; sys.num_e_nodes()]; sys.device.species.extra.len()],
    };
    sys.rates(state, &mut rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;
    use crate::scales::{
        nondimensionalize, CharacteristicScales, DeviceDescription, ElectrodeKind,
        InterfaceDescription,
    };

    fn system_for(desc: &DeviceDescription, n: usize) -> System {
        let scales = CharacteristicScales::standard(&desc.constants);
        let device = nondimensionalize(desc, &scales).unwrap();
        let mesh = Mesh1D::build(device.geometry.x_left, device.geometry.x_right, n, 1.0).unwrap();
        System::new(device, mesh).unwrap()
    }

    #[test]
    fn constructed_equilibrium_has_zero_rates() {
        let desc = crate::testutil::equilibrium_description();
        let sys = system_for(&desc, 40);
        let (n_e, p_e) = sys.contact_eq;
        let state = sys.state_from_uniform(n_e, p_e, 30.0, 0.0, &[]).unwrap();
        // Potential is flat at the electrode value.
        for &v in state.phi.iter() {
            assert!(v.abs() < 1e-11, "potential should be flat, got {v}");
        }
        let mut rates = Rates {
            n: vec![0.0; sys.num_s_nodes()],
            p: vec![0.0; sys.num_s_nodes()],
            r: vec![0.0; sys.num_e_nodes()],
            o: vec![0.0; sys.num_e_nodes()],
            extra: vec![],
        };
        sys.rates(&state, &mut rates);
        for field in [&rates.n, &rates.p, &rates.r, &rates.o] {
            for &v in field.iter() {
                assert!(v.abs() < 1e-10, "equilibrium rate should vanish, got {v:e}");
            }
        }
    }

    #[test]
    fn constant_density_zero_field_zero_rate() {
        let mut desc = crate::testutil::base_description();
        desc.applied_bias = 0.0;
        desc.interface = InterfaceDescription::Kinetic { k_et: 0.0, k_ht: 0.0 };
        let sys = system_for(&desc, 24);
        // Force a strictly flat potential by zeroing all charge: overwrite
        // state by hand.
        let mut state = sys.state_from_uniform(1.0, 1.0, 2.0, 2.0, &[]).unwrap();
        state.phi.iter_mut().for_each(|v| *v = 0.0);
        state.rho_n.iter_mut().for_each(|v| *v = 1.0);
        let flux_n = species_flux(&state.rho_n, &state.phi, &sys.device.species.n, &sys.mesh);
        assert!(flux_n.iter().all(|&j| j == 0.0));
    }

    #[test]
    fn species_flux_pure_diffusion_and_pure_drift() {
        let desc = crate::testutil::base_description();
        let sys = system_for(&desc, 24);
        let i_star = sys.mesh.interface_index();
        // Constant potential: central diffusion flux.
        let rho: Vec<f64> = (0..=i_star).map(|i| 1.0 + i as f64).collect();
        let phi = vec![0.5; sys.mesh.num_nodes()];
        let j = species_flux(&rho, &phi, &sys.device.species.n, &sys.mesh);
        for (k, &v) in j.iter().enumerate() {
            let expect = -sys.device.species.n.d / sys.mesh.spacing(k);
            assert!((v - expect).abs() < 1e-12 * expect.abs(), "face {k}");
        }
        // Constant density, linear potential: exact drift flux w * rho.
        let rho = vec![2.0; i_star + 1];
        let slope = 3.0;
        let phi: Vec<f64> = sys.mesh.nodes().iter().map(|x| slope * x).collect();
        let j = species_flux(&rho, &phi, &sys.device.species.n, &sys.mesh);
        let w = -(sys.device.species.n.alpha as f64) * sys.device.species.n.mu * slope;
        for &v in &j {
            assert!((v - w * 2.0).abs() < 1e-12 * (w.abs() * 2.0));
        }
    }

    #[test]
    fn boltzmann_profile_flux_vanishes_with_refinement() {
        // rho following exp(alpha * phi) in a linear potential has zero
        // exact flux; the upwind flux converges to it at first order.
        let desc = crate::testutil::base_description();
        let residual = |n: usize| -> f64 {
            let sys = system_for(&desc, n);
            let i_star = sys.mesh.interface_index();
            let slope = 1.5;
            let phi: Vec<f64> = sys.mesh.nodes().iter().map(|x| slope * x).collect();
            let sp = &sys.device.species.n;
            let rho: Vec<f64> = sys.mesh.nodes()[..=i_star]
                .iter()
                .map(|&x| (-(sp.alpha as f64) * slope * x).exp())
                .collect();
            species_flux(&rho, &phi, sp, &sys.mesh)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let coarse = residual(16);
        let fine = residual(32);
        assert!(fine < coarse, "flux residual must shrink with the mesh");
        let ratio = coarse / fine;
        assert!(ratio > 1.5 && ratio < 3.0, "first-order behavior expected, ratio {ratio}");
    }

    #[test]
    fn interface_fluxes_match_formulas() {
        let desc = crate::testutil::base_description();
        let sys = system_for(&desc, 16);
        let mut state = sys.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
        let i_star = sys.mesh.interface_index();
        state.rho_n[i_star] = 1.7;
        state.rho_p[i_star] = 0.9;
        state.rho_r[0] = 31.0;
        state.rho_o[0] = 28.0;
        let f = sys.interface_fluxes(&state);
        let (n_e, p_e) = sys.interface_eq;
        let k_et = sys.device.interface.k_et;
        let k_ht = sys.device.interface.k_ht;
        assert_eq!(f.j_n, -k_et * (1.7 - n_e) * 28.0);
        assert_eq!(f.j_p, -k_ht * (0.9 - p_e) * 31.0);
        assert_eq!(f.j_r, k_ht * (0.9 - p_e) * 31.0 - k_et * (1.7 - n_e) * 28.0);
        // Antisymmetry is exact.
        assert_eq!(f.j_r + f.j_o, 0.0);
        // Total-flux continuity across the interface.
        let s_side = f.total(&sys.device);
        let e_side = sys.device.species.o.alpha as f64 * f.j_o
            + sys.device.species.r.alpha as f64 * f.j_r;
        assert!((s_side - e_side).abs() <= 1e-16 * s_side.abs().max(1e-300));

        // Equilibrium interface values annihilate every channel.
        state.rho_n[i_star] = n_e;
        state.rho_p[i_star] = p_e;
        let f0 = sys.interface_fluxes(&state);
        assert_eq!(f0.j_n, 0.0);
        assert_eq!(f0.j_p, 0.0);
        assert_eq!(f0.j_r, 0.0);

        // Single-channel limit k_et = 0.
        let mut desc2 = crate::testutil::base_description();
        desc2.interface = InterfaceDescription::Kinetic { k_et: 0.0, k_ht: 1e-17 };
        let sys2 = system_for(&desc2, 16);
        let mut s2 = sys2.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
        s2.rho_p[sys2.mesh.interface_index()] = 0.5;
        let f2 = sys2.interface_fluxes(&s2);
        assert_eq!(f2.j_n, 0.0);
        let expect = sys2.device.interface.k_ht * (0.5 - sys2.interface_eq.1) * 30.0;
        assert_eq!(f2.j_r, expect);
        assert_eq!(f2.j_o, -expect);
    }

    #[test]
    fn butler_volmer_equilibria() {
        // Phi = Phi_e and rho_o = rho_r: forward and backward channels cancel.
        assert_eq!(butler_volmer_flux(0.7, 0.7, 3.0, 3.0, 1e-3, 0.5), 0.0);
        // Phi = Phi_e, rho_o = 2 rho_r: flux = k0 rho_r.
        let k0 = 1e-3;
        let f = butler_volmer_flux(0.7, 0.7, 1.5, 3.0, k0, 0.5);
        assert!((f - k0 * 1.5).abs() < 1e-18);
        // Strictly decreasing in Phi.
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let phi = -2.0 + 0.2 * i as f64;
            let v = butler_volmer_flux(phi, 0.0, 2.0, 3.0, k0, 0.3);
            assert!(v < prev);
            prev = v;
        }
        // Net-zero manifold rho_o = rho_r e^{2 dPhi} for any symmetry factor.
        for &alpha in &[0.2, 0.5, 0.8] {
            for &dphi in &[-1.5f64, -0.2, 0.0, 0.4, 2.0] {
                let rho_r = 2.7;
                let rho_o = rho_r * f64::exp(2.0 * dphi);
                let v = butler_volmer_flux(dphi, 0.0, rho_r, rho_o, k0, alpha);
                assert!(
                    v.abs() < 1e-12 * k0 * rho_o.max(rho_r),
                    "alpha={alpha} dphi={dphi}: {v:e}"
                );
            }
        }
    }

    #[test]
    fn illumination_adds_shared_pair_source() {
        let mut desc = crate::testutil::base_description();
        desc.illuminated = false;
        let dark = system_for(&desc, 32);
        desc.illuminated = true;
        let lit = system_for(&desc, 32);
        let state = dark.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
        let make = |sys: &System| {
            let mut rates = Rates {
                n: vec![0.0; sys.num_s_nodes()],
                p: vec![0.0; sys.num_s_nodes()],
                r: vec![0.0; sys.num_e_nodes()],
                o: vec![0.0; sys.num_e_nodes()],
                extra: vec![],
            };
            sys.rates(&state, &mut rates);
            rates
        };
        let r_dark = make(&dark);
        let r_lit = make(&lit);
        for i in 1..dark.num_s_nodes() {
            let dn = r_lit.n[i] - r_dark.n[i];
            let dp = r_lit.p[i] - r_dark.p[i];
            let scale = r_dark.n[i].abs().max(lit.generation[i]).max(1e-12);
            assert!(
                (dn - lit.generation[i]).abs() < 1e-10 * scale,
                "node {i}: added {dn:e} vs G {:e}",
                lit.generation[i]
            );
            assert!((dn - dp).abs() <= 1e-12 * scale, "pair source must be shared");
        }
    }

    #[test]
    fn pair_difference_untouched_by_sources() {
        // With interface transfer off and a flat potential, rho_n - rho_p
        // only changes through flux divergence; identical uniform fields
        // give identical rates for both carriers.
        let mut desc = crate::testutil::base_description();
        desc.interface = InterfaceDescription::Kinetic { k_et: 0.0, k_ht: 0.0 };
        desc.illuminated = true;
        let sys = system_for(&desc, 20);
        let mut state = sys.state_from_uniform(1.3, 1.3, 30.0, 29.0, &[]).unwrap();
        state.phi.iter_mut().for_each(|v| *v = 0.0);
        state.rho_n = vec![1.3; sys.num_s_nodes()];
        state.rho_p = vec![1.3; sys.num_s_nodes()];
        let mut rates = Rates {
            n: vec![0.0; sys.num_s_nodes()],
            p: vec![0.0; sys.num_s_nodes()],
            r: vec![0.0; sys.num_e_nodes()],
            o: vec![0.0; sys.num_e_nodes()],
            extra: vec![],
        };
        sys.rates(&state, &mut rates);
        for i in 1..sys.num_s_nodes() {
            assert_eq!(rates.n[i], rates.p[i], "node {i}");
        }
    }

    #[test]
    fn zero_dt_step_is_identity_and_richardson_order() {
        let desc = crate::testutil::base_description();
        let sys = system_for(&desc, 32);
        let state = sys.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
        let same = forward_euler_step(&state, &sys, 0.0).unwrap();
        assert_eq!(same.rho_n, state.rho_n);
        assert_eq!(same.phi, state.phi);

        // Two half steps vs one full step: difference is O(dt^2).
        let dt = 0.25 * stable_dt(&state, &sys);
        let err = |dt: f64| -> f64 {
            let full = forward_euler_step(&state, &sys, dt).unwrap();
            let half = forward_euler_step(&state, &sys, 0.5 * dt).unwrap();
            let half2 = forward_euler_step(&half, &sys, 0.5 * dt).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            full.flatten_into(&mut a);
            half2.flatten_into(&mut b);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
        };
        let e1 = err(dt);
        let e2 = err(0.5 * dt);
        assert!(e1 > 0.0);
        let ratio = e1 / e2;
        assert!(ratio > 2.5 && ratio < 6.0, "expected ~4x (O(dt^2)), got {ratio}");
    }

    #[test]
    fn mass_conservation_with_insulated_electrode() {
        // Insulated electrode: the r + o total exchanges nothing with the
        // outside world; interface terms cancel by antisymmetry.
        let mut desc = crate::testutil::base_description();
        desc.electrode = ElectrodeKind::Insulated;
        let sys = system_for(&desc, 24);
        let mut state = sys.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
        let mass = |s: &CarrierState| -> f64 {
            let i_star = sys.mesh.interface_index();
            (0..sys.num_e_nodes())
                .map(|j| {
                    (s.rho_r[j] + s.rho_o[j]) * sys.mesh.control_volume(i_star + j)
                })
                .sum::<f64>()
                - 0.5 * sys.mesh.spacing(i_star - 1) * (s.rho_r[0] + s.rho_o[0])
            // control_volume of the interface node spans both sides; only
            // the electrolyte half-cell belongs to the redox budget.
        };
        let m0 = mass(&state);
        let mut stepper = Stepper::new(&sys);
        stepper.run_to_steady(&mut state, 0.0, 0.05, 1.0).ok();
        stepper.advance_to(&mut state, 1.0).unwrap();
        let m1 = mass(&state);
        assert!(
            (m1 - m0).abs() <= 1e-8 * m0.abs().max(1.0),
            "redox mass drifted: {m0} -> {m1}"
        );
    }

    #[test]
    fn extra_species_conserve_mass_exactly_up_to_dirichlet() {
        let mut desc = crate::testutil::base_description();
        desc.extra_species = vec![crate::scales::ExtraSpeciesDescription {
            alpha: -1,
            mobility: 1.0,
            bulk_density: 29.0e16,
        }];
        desc.electrode = ElectrodeKind::Insulated;
        let sys = system_for(&desc, 24);
        let mut state = sys.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[29.0]).unwrap();
        let i_star = sys.mesh.interface_index();
        let mass = |s: &CarrierState| -> f64 {
            (0..sys.num_e_nodes())
                .map(|j| s.rho_extra[0][j] * sys.mesh.control_volume(i_star + j))
                .sum::<f64>()
                - 0.5 * sys.mesh.spacing(i_star - 1) * s.rho_extra[0][0]
        };
        let m0 = mass(&state);
        let mut stepper = Stepper::new(&sys);
        stepper.advance_to(&mut state, 0.5).unwrap();
        let m1 = mass(&state);
        assert!((m1 - m0).abs() <= 1e-10 * m0.abs(), "spectator mass drifted: {m0} -> {m1}");
    }

    #[test]
    fn total_flux_zero_when_carrier_fluxes_zero() {
        let desc = crate::testutil::base_description();
        let sys = system_for(&desc, 16);
        let i_star = sys.mesh.interface_index();
        let j_n = vec![0.0; i_star];
        let j_p = vec![0.0; i_star];
        let j_r = vec![0.3; sys.mesh.num_faces() - i_star];
        let j_o = vec![0.1; sys.mesh.num_faces() - i_star];
        let total = total_flux(&j_n, &j_p, &j_r, &j_o, &[], &sys.device);
        for k in 0..i_star {
            assert_eq!(total[k], 0.0);
        }
        // Electrolyte side: alpha_o = 1, alpha_r = 0 here.
        for k in i_star..sys.mesh.num_faces() {
            assert_eq!(total[k], 0.1);
        }
    }
}
