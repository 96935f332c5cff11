//! One-dimensional drift-diffusion-Poisson simulator for
//! semiconductor-electrolyte (liquid-junction) solar cells.
//!
//! The domain is a two-region interval: semiconductor on the left of the
//! reactive interface at x' = 0, electrolyte on the right. Electrons and
//! holes are transported in the semiconductor, a reductant-oxidant pair
//! (plus optional spectator species) in the electrolyte, and the two
//! regions exchange charge through kinetic interface conditions. All
//! quantities are nondimensionalized (lengths by l*, times by t*, densities
//! by C*, potentials by the thermal voltage).
//!
//! Solvers: an explicit (forward Euler, upwind) transient integrator and a
//! stationary Gummel-Schwarz double iteration, plus a reduced
//! "semiconductor + Schottky contact" model for comparison studies.

pub mod error;
pub mod mesh;
pub mod norms;
pub mod physics;
pub mod poisson;
pub mod scales;
pub mod schottky;
pub mod stationary;
pub mod transport;
pub mod tridiag;

pub use error::Error;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::physics::{ContactKind, SemiconductorType};
    use crate::scales::{
        nondimensionalize, CharacteristicScales, DeviceDescription, ElectrodeKind,
        InterfaceDescription, PhysicalConstants, Profile,
    };

    /// Device I with the full parameter table and Case I(a) bulk densities.
    pub fn base_description() -> DeviceDescription {
        DeviceDescription {
            constants: PhysicalConstants::default(),
            x_left: -1.0e-4,
            x_right: 1.0e-4,
            eps_r_s: 11.9,
            eps_r_e: 1000.0,
            doping: Profile::Uniform(1e16),
            mobility_n: 1500.0,
            mobility_p: 450.0,
            mobility_r: 0.05,
            mobility_o: 0.2,
            alpha_r: 0,
            alpha_o: 1,
            bulk_reductant: 30.0e16,
            bulk_oxidant: 29.0e16,
            extra_species: vec![],
            auger_n: 2.8e-31,
            auger_p: 9.9e-32,
            n_c: 2.80e19,
            n_v: 1.04e19,
            e_g0_ev: 1.17,
            bandgap_alpha_ev: 4.73e-4,
            bandgap_beta: 636.0,
            contact_kind: ContactKind::Ohmic,
            semiconductor_type: SemiconductorType::N,
            metal_work_function: 2.4,
            electron_affinity: 1.2,
            recombination_velocity_n: 5e6,
            recombination_velocity_p: 5e6,
            applied_bias: 19.3,
            applied_bias_electrode: 0.0,
            electrode: ElectrodeKind::Bulk,
            interface: InterfaceDescription::Kinetic { k_et: 1e-21, k_ht: 1e-17 },
            illuminated: false,
            g0: 1.2e17,
            sigma: Profile::Uniform(2.302585092994046e4),
        }
    }

    /// Discrete equilibrium: flat potential (applied bias cancels the
    /// built-in offset), neutral electrolyte (charged redox species at
    /// zero), carriers at their Ohmic values.
    pub fn equilibrium_description() -> DeviceDescription {
        let mut desc = base_description();
        desc.bulk_oxidant = 0.0;
        desc.bulk_reductant = 30.0e16;
        let scales = CharacteristicScales::standard(&desc.constants);
        let probe = nondimensionalize(&desc, &scales).unwrap();
        let (rho_n_e, _) = probe.equilibrium_pair(probe.geometry.x_left);
        let phi_bi = crate::physics::built_in_potential(rho_n_e, probe.recomb.rho_isc).unwrap();
        desc.applied_bias = -phi_bi;
        desc
    }
}
