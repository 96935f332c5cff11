//! Material models evaluated pointwise on scaled quantities: recombination,
//! photogeneration, equilibrium contact densities, and barrier potentials.
//! All functions here are pure.

use crate::error::{Error, Result};
use crate::mesh::{Mesh1D, Region};
use crate::scales::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Ohmic,
    Schottky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemiconductorType {
    N,
    P,
}

/// Current-collector contact parameters, scaled where dimensionless use is
/// intended (applied potentials, recombination velocities) and in volts for
/// the barrier ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactParams {
    pub kind: ContactKind,
    /// Applied potential at the collector [scaled].
    pub phi_app: f64,
    /// Applied potential at the counter electrode [scaled].
    pub phi_app_a: f64,
    /// Recombination velocities [scaled]; used by Schottky contacts.
    pub v_n: f64,
    pub v_p: f64,
    /// Metal work function [V].
    pub phi_m: f64,
    /// Electron affinity [V].
    pub chi: f64,
    pub semiconductor_type: SemiconductorType,
}

/// Butler-Volmer interface model parameters (scaled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButlerVolmerParams {
    /// Standard rate constant [scaled].
    pub k0: f64,
    /// Reductive symmetry factor in (0, 1).
    pub alpha_sym: f64,
    /// Electrolyte equilibrium potential [scaled].
    pub phi_e: f64,
}

/// Interface charge-transfer rates [scaled]; constant in space and time.
/// When `butler_volmer` is set it replaces the density-driven rates.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceParams {
    pub k_et: f64,
    pub k_ht: f64,
    pub butler_volmer: Option<ButlerVolmerParams>,
}

/// Illumination model: straight-line photon transport entering the
/// semiconductor boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationParams {
    /// The gamma in {0, 1} switch: dark (false) or illuminated (true).
    pub illuminated: bool,
    /// Surface photon flux [scaled].
    pub g0: f64,
    /// Absorption profile [scaled 1/length] over the semiconductor.
    pub sigma: Profile,
    /// Entry point on the illuminated boundary [scaled].
    pub x0: f64,
    /// Propagation direction (+1 or -1).
    pub theta0: f64,
}

impl IlluminationParams {
    pub fn gamma(&self) -> f64 {
        if self.illuminated {
            1.0
        } else {
            0.0
        }
    }
}

/// Auger recombination and intrinsic-density parameters. Auger coefficients
/// are scaled; the density-of-states and band-gap data stay in SI because
/// they only enter the intrinsic density formula.
#[derive(Debug, Clone, PartialEq)]
pub struct RecombinationParams {
    pub a_n: f64,
    pub a_p: f64,
    /// Effective densities of states [cm^-3].
    pub n_c: f64,
    pub n_v: f64,
    /// Band gap at 0 K [J].
    pub e_g0: f64,
    /// Band-gap shrinkage constants: alpha [J/K], beta [K].
    pub alpha_bg: f64,
    pub beta_bg: f64,
    /// Intrinsic carrier density [scaled]; derived once per device.
    pub rho_isc: f64,
}

/// Temperature-dependent band gap E_g(T) = E_g0 - alpha T^2 / (T + beta) [J].
pub fn band_gap(temperature: f64, params: &RecombinationParams) -> f64 {
    debug_assert!(temperature >= 0.0);
    params.e_g0 - params.alpha_bg * temperature * temperature / (temperature + params.beta_bg)
}

/// Intrinsic carrier density [cm^-3]:
/// sqrt(N_c N_v) (T/300)^1.5 exp(-E_g / (2 k_B T)).
pub fn intrinsic_density(temperature: f64, params: &RecombinationParams, k_b: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {temperature}")));
    }
    let e_g = band_gap(temperature, params);
    Ok((params.n_c * params.n_v).sqrt()
        * (temperature / 300.0).powf(1.5)
        * (-e_g / (2.0 * k_b * temperature)).exp())
}

/// Auger net rate (A_n rho_n + A_p rho_p)(rho_isc^2 - rho_n rho_p), exactly
/// in the model's sign convention; the transport right-hand side carries -R.
#[inline]
pub fn auger_recombination(rho_n: f64, rho_p: f64, params: &RecombinationParams) -> f64 {
    (params.a_n * rho_n + params.a_p * rho_p)
        * (params.rho_isc * params.rho_isc - rho_n * rho_p)
}

/// Equilibrium carrier pair at net doping c, from charge neutrality and
/// mass action: rho_n,p = (sqrt(c^2 + 4 rho_isc^2) +- c) / 2.
///
/// The minority density is recovered through mass action instead of the
/// subtractive branch, which cancels catastrophically for |c| >> rho_isc.
#[inline]
pub fn ohmic_equilibrium(c: f64, rho_isc: f64) -> (f64, f64) {
    let s = (c * c + 4.0 * rho_isc * rho_isc).sqrt();
    if c >= 0.0 {
        let rho_n = 0.5 * (s + c);
        (rho_n, rho_isc * rho_isc / rho_n)
    } else {
        let rho_p = 0.5 * (s - c);
        (rho_isc * rho_isc / rho_p, rho_p)
    }
}

/// Built-in potential ln(rho_n_e / rho_isc) in units of the thermal voltage.
pub fn built_in_potential(rho_n_e: f64, rho_isc: f64) -> Result<f64> {
    if !(rho_n_e > 0.0 && rho_isc > 0.0) {
        return Err(Error::Domain(format!(
            "built-in potential needs positive densities, got ({rho_n_e}, {rho_isc})"
        )));
    }
    Ok((rho_n_e / rho_isc).ln())
}

/// Schottky barrier height, scaled by phi_star.
/// n-type: Phi_m - chi ; p-type: E_g/q - (Phi_m - chi).
pub fn schottky_barrier(
    contacts: &ContactParams,
    e_g: f64,
    q: f64,
    phi_star: f64,
) -> Result<f64> {
    if contacts.kind != ContactKind::Schottky {
        return Err(Error::Contract("Schottky barrier queried on a non-Schottky contact".into()));
    }
    let barrier_v = match contacts.semiconductor_type {
        SemiconductorType::N => contacts.phi_m - contacts.chi,
        SemiconductorType::P => e_g / q - (contacts.phi_m - contacts.chi),
    };
    Ok(barrier_v / phi_star)
}

/// Photogeneration profile on mesh nodes; nonzero only on the semiconductor
/// side, which the 1D ray covers entirely when entering at the illuminated
/// boundary. The optical depth is accumulated by trapezoid quadrature.
pub fn generation_profile(mesh: &Mesh1D, illum: &IlluminationParams) -> Result<Vec<f64>> {
    let tol = 1e-10 * mesh.x_left().abs().max(1.0);
    if (illum.x0 - mesh.x_left()).abs() > tol {
        return Err(Error::Config(format!(
            "illumination entry point {} is not on the semiconductor boundary {}",
            illum.x0,
            mesh.x_left()
        )));
    }
    let mut g = vec![0.0; mesh.num_nodes()];
    if illum.theta0 < 0.0 {
        // Ray leaves the domain immediately; nothing is illuminated.
        return Ok(g);
    }
    let i_star = mesh.interface_index();
    let mut depth = 0.0;
    let mut sigma_prev = illum.sigma.eval(mesh.nodes()[0]);
    g[0] = sigma_prev * illum.g0;
    for i in 1..=i_star {
        let x = mesh.nodes()[i];
        let sigma = illum.sigma.eval(x);
        depth += 0.5 * (sigma_prev + sigma) * mesh.spacing(i - 1);
        g[i] = sigma * illum.g0 * (-depth).exp();
        sigma_prev = sigma;
    }
    for i in i_star + 1..mesh.num_nodes() {
        debug_assert_eq!(mesh.region(i), Region::Electrolyte);
        g[i] = 0.0;
    }
    Ok(g)
}
