//! Physical constants, characteristic scales, and conversion between the
//! SI (cm-s-V-A) device description and the nondimensional system that the
//! solvers actually run on.
//!
//! Scaling conventions: t' = t/t*, x' = x/l*, Phi' = Phi/Phi*, rho' = rho/C*,
//! D' = D t*/l*^2, mu' = mu t* Phi*/l*^2, transfer rates k' = k t* C*/l*,
//! recombination velocities v' = v t*/l*, photon flux G0' = G0 t*/(l* C*),
//! Auger coefficients A' = A t* C*^2, absorption sigma' = sigma l*.
//! With Phi* equal to the thermal voltage, scaled diffusivity and mobility
//! coincide for every species (Einstein relation).

use crate::error::{Error, Result};
use crate::physics::{
    self, ContactParams, IlluminationParams, InterfaceParams, RecombinationParams,
};
use crate::transport::CarrierState;

/// Fundamental constants in the cm-s-V-A unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Elementary charge [A s]
    pub q: f64,
    /// Boltzmann constant [J/K]
    pub k_b: f64,
    /// Vacuum permittivity [A s / (V cm)]
    pub eps0: f64,
    /// Device temperature [K]
    pub temperature: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let q = 1.6e-19;
        PhysicalConstants { q, k_b: 8.62e-5 * q, eps0: 8.85e-14, temperature: 300.0 }
    }
}

impl PhysicalConstants {
    /// Thermal voltage k_B T / q [V]; always recomputed, never stored.
    pub fn thermal_voltage(&self) -> f64 {
        thermal_voltage(self.temperature, self.k_b, self.q)
            .expect("constants validated at construction")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q", self.q),
            ("k_B", self.k_b),
            ("eps0", self.eps0),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Thermal voltage k_B T / q.
pub fn thermal_voltage(temperature: f64, k_b: f64, q: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {temperature}")));
    }
    if !(k_b > 0.0) || !(q > 0.0) {
        return Err(Error::Domain("k_B and q must be positive".into()));
    }
    Ok(k_b * temperature / q)
}

/// Characteristic scales of the nondimensionalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicScales {
    /// Length [cm]
    pub l_star: f64,
    /// Time [s]
    pub t_star: f64,
    /// Voltage [V]
    pub phi_star: f64,
    /// Density [cm^-3]
    pub c_star: f64,
}

impl CharacteristicScales {
    /// Standard simulation scales: l* = 1e-4 cm, t* = 1e-12 s,
    /// Phi* = thermal voltage, C* = 1e16 cm^-3.
    pub fn standard(constants: &PhysicalConstants) -> Self {
        CharacteristicScales {
            l_star: 1e-4,
            t_star: 1e-12,
            phi_star: constants.thermal_voltage(),
            c_star: 1e16,
        }
    }

    /// All-ones scales; scaled values equal SI values.
    pub fn identity() -> Self {
        CharacteristicScales { l_star: 1.0, t_star: 1.0, phi_star: 1.0, c_star: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_star", self.l_star),
            ("t_star", self.t_star),
            ("phi_star", self.phi_star),
            ("c_star", self.c_star),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for CharacteristicScales {
    fn default() -> Self {
        CharacteristicScales::standard(&PhysicalConstants::default())
    }
}

/// Piecewise-constant spatial profile (doping, absorption).
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Uniform(f64),
    /// Segments (x_upper_bound, value), sorted by bound; the last segment
    /// extends to the domain end.
    Piecewise(Vec<(f64, f64)>),
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Uniform(v) => *v,
            Profile::Piecewise(segments) => {
                for (bound, v) in segments {
                    if x <= *bound {
                        return *v;
                    }
                }
                segments.last().map(|(_, v)| *v).unwrap_or(0.0)
            }
        }
    }

    /// Rescale values by 1/value_scale and coordinates by 1/length_scale.
    fn rescaled(&self, value_scale: f64, length_scale: f64) -> Profile {
        match self {
            Profile::Uniform(v) => Profile::Uniform(v / value_scale),
            Profile::Piecewise(seg) => Profile::Piecewise(
                seg.iter().map(|(b, v)| (b / length_scale, v / value_scale)).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeciesName {
    Electron,
    Hole,
    Reductant,
    Oxidant,
    Extra(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeciesRegion {
    Semiconductor,
    Electrolyte,
}

/// Per-species transport parameters in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams {
    pub name: SpeciesName,
    /// Charge number (alpha_n = -1, alpha_p = +1, alpha_o - alpha_r = 1).
    pub alpha: i32,
    /// Scaled diffusivity.
    pub d: f64,
    /// Scaled mobility.
    pub mu: f64,
    pub region: SpeciesRegion,
    /// Bulk density at the counter electrode (electrolyte species only).
    pub bulk_density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    pub n: SpeciesParams,
    pub p: SpeciesParams,
    pub r: SpeciesParams,
    pub o: SpeciesParams,
    pub extra: Vec<SpeciesParams>,
}

/// How the counter-electrode end of the electrolyte is terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElectrodeKind {
    /// Dirichlet bulk densities and applied potential (the physical setup).
    Bulk,
    /// Zero-flux end, used in conservation tests.
    Insulated,
}

/// Region bounds in scaled coordinates; the interface is pinned at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub x_left: f64,
    pub x_right: f64,
}

/// Fully nondimensionalized device, immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledDevice {
    pub geometry: Geometry,
    /// Squared rescaled Debye lengths.
    pub lambda_s_sq: f64,
    pub lambda_e_sq: f64,
    pub eps_r_s: f64,
    pub eps_r_e: f64,
    pub species: SpeciesSet,
    /// Net doping C'(x') on the semiconductor side.
    pub doping: Profile,
    pub contacts: ContactParams,
    pub interface: InterfaceParams,
    pub illumination: IlluminationParams,
    pub recomb: RecombinationParams,
    pub electrode: ElectrodeKind,
    pub scales: CharacteristicScales,
    pub constants: PhysicalConstants,
}

impl ScaledDevice {
    /// Equilibrium carrier pair at a semiconductor location, from the local
    /// doping via charge neutrality and mass action.
    pub fn equilibrium_pair(&self, x: f64) -> (f64, f64) {
        physics::ohmic_equilibrium(self.doping.eval(x), self.recomb.rho_isc)
    }

    /// Dirichlet potential at the current collector, including the built-in
    /// or Schottky barrier contribution.
    pub fn contact_potential(&self) -> Result<f64> {
        let (rho_n_e, _) = self.equilibrium_pair(self.geometry.x_left);
        let base = match self.contacts.kind {
            physics::ContactKind::Ohmic => {
                physics::built_in_potential(rho_n_e, self.recomb.rho_isc)?
            }
            physics::ContactKind::Schottky => {
                let e_g = physics::band_gap(self.constants.temperature, &self.recomb);
                physics::schottky_barrier(
                    &self.contacts,
                    e_g,
                    self.constants.q,
                    self.scales.phi_star,
                )?
            }
        };
        Ok(base + self.contacts.phi_app)
    }
}

/// Extra electrolyte species that does not react with the semiconductor.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraSpeciesDescription {
    pub alpha: i32,
    /// Mobility [cm^2/(V s)]
    pub mobility: f64,
    /// Bulk density at the electrode [cm^-3]
    pub bulk_density: f64,
}

/// Interface charge-transfer description in SI units.
#[derive(Debug, Clone, PartialEq)]
pub enum InterfaceDescription {
    /// Density-driven transfer rates [cm^4/s].
    Kinetic { k_et: f64, k_ht: f64 },
    /// Butler-Volmer alternative: rate constant k0 [cm/s], symmetry factor,
    /// and the electrolyte equilibrium potential (scaled units).
    ButlerVolmer { k0: f64, alpha_sym: f64, phi_e: f64 },
}

/// Device description in SI units (cm-s-V-A system). Applied potentials are
/// given in units of the thermal voltage, matching how bias points are
/// quoted everywhere else in the toolchain.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDescription {
    pub constants: PhysicalConstants,
    /// Geometry [cm]; interface at 0.
    pub x_left: f64,
    pub x_right: f64,
    pub eps_r_s: f64,
    pub eps_r_e: f64,
    /// Net doping [cm^-3] over the semiconductor.
    pub doping: Profile,
    /// Mobilities [cm^2/(V s)]; diffusivities follow from the Einstein relation.
    pub mobility_n: f64,
    pub mobility_p: f64,
    pub mobility_r: f64,
    pub mobility_o: f64,
    pub alpha_r: i32,
    pub alpha_o: i32,
    /// Electrolyte bulk densities [cm^-3].
    pub bulk_reductant: f64,
    pub bulk_oxidant: f64,
    pub extra_species: Vec<ExtraSpeciesDescription>,
    /// Auger coefficients [cm^6/s].
    pub auger_n: f64,
    pub auger_p: f64,
    /// Effective densities of states [cm^-3].
    pub n_c: f64,
    pub n_v: f64,
    /// Zero-kelvin band gap [eV].
    pub e_g0_ev: f64,
    /// Band-gap shrinkage constants: alpha [eV/K], beta [K].
    pub bandgap_alpha_ev: f64,
    pub bandgap_beta: f64,
    pub contact_kind: physics::ContactKind,
    pub semiconductor_type: physics::SemiconductorType,
    /// Schottky parameters [V] and recombination velocities [cm/s].
    pub metal_work_function: f64,
    pub electron_affinity: f64,
    pub recombination_velocity_n: f64,
    pub recombination_velocity_p: f64,
    /// Applied potentials in units of the thermal voltage.
    pub applied_bias: f64,
    pub applied_bias_electrode: f64,
    pub electrode: ElectrodeKind,
    pub interface: InterfaceDescription,
    pub illuminated: bool,
    /// Surface photon flux [cm^-2 s^-1].
    pub g0: f64,
    /// Absorption coefficient [cm^-1] over the semiconductor.
    pub sigma: Profile,
}

/// Convert an SI device description to the nondimensional system.
pub fn nondimensionalize(
    device: &DeviceDescription,
    scales: &CharacteristicScales,
) -> Result<ScaledDevice> {
    device.constants.validate()?;
    scales.validate()?;
    if !(device.x_left < 0.0 && 0.0 < device.x_right) {
        return Err(Error::Config(format!(
            "geometry must contain the interface: x_left={} x_right={}",
            device.x_left, device.x_right
        )));
    }
    if device.alpha_o - device.alpha_r != 1 {
        return Err(Error::Config(format!(
            "redox charge numbers must satisfy alpha_o - alpha_r = 1, got ({}, {})",
            device.alpha_o, device.alpha_r
        )));
    }
    for (name, v) in [
        ("mobility_n", device.mobility_n),
        ("mobility_p", device.mobility_p),
        ("mobility_r", device.mobility_r),
        ("mobility_o", device.mobility_o),
        ("eps_r_s", device.eps_r_s),
        ("eps_r_e", device.eps_r_e),
        ("n_c", device.n_c),
        ("n_v", device.n_v),
    ] {
        if !(v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if device.bulk_reductant < 0.0 || device.bulk_oxidant < 0.0 {
        return Err(Error::Config("bulk redox densities must be nonnegative".into()));
    }

    let u_t = device.constants.thermal_voltage();
    let q = device.constants.q;
    let eps0 = device.constants.eps0;
    let (l, t, phi, c) = (scales.l_star, scales.t_star, scales.phi_star, scales.c_star);

    let d_scale = t / (l * l);
    let mu_scale = t * phi / (l * l);
    let rate_scale = t * c / l; // interface transfer rates
    let velocity_scale = t / l; // recombination velocities, BV rate constant
    let flux_scale = t / (l * c); // surface photon flux
    let auger_scale = t * c * c;

    let species_pair = |name, alpha: i32, mobility: f64, region, bulk: Option<f64>| {
        SpeciesParams {
            name,
            alpha,
            d: u_t * mobility * d_scale,
            mu: mobility * mu_scale,
            region,
            bulk_density: bulk.map(|b| b / c),
        }
    };

    let species = SpeciesSet {
        n: species_pair(SpeciesName::Electron, -1, device.mobility_n, SpeciesRegion::Semiconductor, None),
        p: species_pair(SpeciesName::Hole, 1, device.mobility_p, SpeciesRegion::Semiconductor, None),
        r: species_pair(
            SpeciesName::Reductant,
            device.alpha_r,
            device.mobility_r,
            SpeciesRegion::Electrolyte,
            Some(device.bulk_reductant),
        ),
        o: species_pair(
            SpeciesName::Oxidant,
            device.alpha_o,
            device.mobility_o,
            SpeciesRegion::Electrolyte,
            Some(device.bulk_oxidant),
        ),
        extra: device
            .extra_species
            .iter()
            .enumerate()
            .map(|(j, e)| {
                species_pair(
                    SpeciesName::Extra(j),
                    e.alpha,
                    e.mobility,
                    SpeciesRegion::Electrolyte,
                    Some(e.bulk_density),
                )
            })
            .collect(),
    };

    let interface = match device.interface {
        InterfaceDescription::Kinetic { k_et, k_ht } => {
            if k_et < 0.0 || k_ht < 0.0 || !k_et.is_finite() || !k_ht.is_finite() {
                return Err(Error::Config(
                    "interface transfer rates for the redox pair must be finite and nonnegative"
                        .into(),
                ));
            }
            InterfaceParams { k_et: k_et * rate_scale, k_ht: k_ht * rate_scale, butler_volmer: None }
        }
        InterfaceDescription::ButlerVolmer { k0, alpha_sym, phi_e } => {
            if !(alpha_sym > 0.0 && alpha_sym < 1.0) {
                return Err(Error::Config(format!(
                    "Butler-Volmer symmetry factor must lie in (0,1), got {alpha_sym}"
                )));
            }
            InterfaceParams {
                k_et: 0.0,
                k_ht: 0.0,
                butler_volmer: Some(physics::ButlerVolmerParams {
                    k0: k0 * velocity_scale,
                    alpha_sym,
                    phi_e,
                }),
            }
        }
    };

    let e_g0 = device.e_g0_ev * q;
    let alpha_bg = device.bandgap_alpha_ev * q;
    let mut recomb = RecombinationParams {
        a_n: device.auger_n * auger_scale,
        a_p: device.auger_p * auger_scale,
        n_c: device.n_c,
        n_v: device.n_v,
        e_g0,
        alpha_bg,
        beta_bg: device.bandgap_beta,
        rho_isc: 0.0,
    };
    let rho_isc_si = physics::intrinsic_density(device.constants.temperature, &recomb, device.constants.k_b)?;
    recomb.rho_isc = rho_isc_si / c;

    let contacts = ContactParams {
        kind: device.contact_kind,
        phi_app: device.applied_bias * u_t / phi,
        phi_app_a: device.applied_bias_electrode * u_t / phi,
        v_n: device.recombination_velocity_n * velocity_scale,
        v_p: device.recombination_velocity_p * velocity_scale,
        phi_m: device.metal_work_function,
        chi: device.electron_affinity,
        semiconductor_type: device.semiconductor_type,
    };
    if contacts.kind == physics::ContactKind::Schottky {
        if !(contacts.v_n > 0.0 && contacts.v_p > 0.0) {
            return Err(Error::Config("Schottky contact requires positive recombination velocities".into()));
        }
        if contacts.semiconductor_type == physics::SemiconductorType::N
            && contacts.phi_m <= contacts.chi
        {
            return Err(Error::Config(
                "Schottky barrier on n-type requires metal work function above electron affinity"
                    .into(),
            ));
        }
    }

    let lambda_sq = |eps_r: f64| phi * eps0 * eps_r / (q * c * l * l);

    let illumination = IlluminationParams {
        illuminated: device.illuminated,
        g0: device.g0 * flux_scale,
        sigma: device.sigma.rescaled(1.0 / l, l),
        x0: device.x_left / l,
        theta0: 1.0,
    };

    Ok(ScaledDevice {
        geometry: Geometry { x_left: device.x_left / l, x_right: device.x_right / l },
        lambda_s_sq: lambda_sq(device.eps_r_s),
        lambda_e_sq: lambda_sq(device.eps_r_e),
        eps_r_s: device.eps_r_s,
        eps_r_e: device.eps_r_e,
        species,
        doping: device.doping.rescaled(c, l),
        contacts,
        interface,
        illumination,
        recomb,
        electrode: device.electrode,
        scales: *scales,
        constants: device.constants,
    })
}

/// A carrier state mapped back to SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalState {
    /// Time [s]
    pub time: f64,
    /// Densities [cm^-3]
    pub rho_n: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub rho_r: Vec<f64>,
    pub rho_o: Vec<f64>,
    pub rho_extra: Vec<Vec<f64>>,
    /// Potential [V]
    pub phi: Vec<f64>,
}

/// Map a scaled state to SI units.
pub fn redimensionalize(state: &CarrierState, scales: &CharacteristicScales) -> DimensionalState {
    let c = scales.c_star;
    let by = |v: &[f64], s: f64| v.iter().map(|x| x * s).collect::<Vec<_>>();
    DimensionalState {
        time: state.time * scales.t_star,
        rho_n: by(&state.rho_n, c),
        rho_p: by(&state.rho_p, c),
        rho_r: by(&state.rho_r, c),
        rho_o: by(&state.rho_o, c),
        rho_extra: state.rho_extra.iter().map(|f| by(f, c)).collect(),
        phi: by(&state.phi, scales.phi_star),
    }
}

/// Inverse of [`redimensionalize`].
pub fn nondimensionalize_state(
    state: &DimensionalState,
    scales: &CharacteristicScales,
) -> CarrierState {
    let c = scales.c_star;
    let by = |v: &[f64], s: f64| v.iter().map(|x| x / s).collect::<Vec<_>>();
    CarrierState {
        time: state.time / scales.t_star,
        rho_n: by(&state.rho_n, c),
        rho_p: by(&state.rho_p, c),
        rho_r: by(&state.rho_r, c),
        rho_o: by(&state.rho_o, c),
        rho_extra: state.rho_extra.iter().map(|f| by(f, c)).collect(),
        phi: by(&state.phi, scales.phi_star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{ContactKind, SemiconductorType};
    use proptest::prelude::*;

    pub(crate) fn table_device() -> DeviceDescription {
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

    #[test]
    fn thermal_voltage_at_room_temperature() {
        let q = 1.6e-19;
        let u_t = thermal_voltage(300.0, 8.62e-5 * q, q).unwrap();
        assert!((u_t - 0.02586).abs() < 1e-8, "U_T = {u_t}");
        assert!(thermal_voltage(0.0, 8.62e-5 * q, q).is_err());
        let doubled = thermal_voltage(600.0, 8.62e-5 * q, q).unwrap();
        assert!((doubled - 2.0 * u_t).abs() < 1e-15);
    }

    #[test]
    fn scaled_mobilities_match_hand_arithmetic() {
        let dev = table_device();
        let scales = CharacteristicScales::standard(&dev.constants);
        let sd = nondimensionalize(&dev, &scales).unwrap();
        // mu_n' = 1500 * 1e-12 * U_T / 1e-8
        let expected = 1500.0 * 1e-12 * dev.constants.thermal_voltage() / 1e-8;
        assert!((sd.species.n.mu - expected).abs() < 1e-18);
        assert!((sd.species.n.mu - 3.879e-3).abs() < 1e-6);
        // Einstein relation in scaled form.
        for sp in [&sd.species.n, &sd.species.p, &sd.species.r, &sd.species.o] {
            assert!(
                (sp.d - sp.mu).abs() <= 1e-15 * sp.mu,
                "D' != mu' for {:?}: {} vs {}",
                sp.name,
                sp.d,
                sp.mu
            );
        }
        // Debye length of the semiconductor.
        assert!(
            (sd.lambda_s_sq - 1.70e-3).abs() < 0.01e-3,
            "lambda_S^2 = {}",
            sd.lambda_s_sq
        );
        // Other scaled parameters from the same table.
        assert!((sd.interface.k_et - 1e-13).abs() < 1e-25);
        assert!((sd.interface.k_ht - 1e-9).abs() < 1e-21);
        assert!((sd.contacts.v_n - 5e-2).abs() < 1e-14);
        assert!((sd.illumination.g0 - 1.2e-7).abs() < 1e-19);
        assert!((sd.recomb.a_n - 2.8e-11).abs() < 1e-23);
        assert!((sd.recomb.a_p - 9.9e-12).abs() < 1e-24);
        assert!((sd.illumination.sigma.eval(-0.5) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_scales_leave_values_unchanged() {
        let mut dev = table_device();
        // Avoid the U_T factor: with identity scales, mu' = mu and D' = U_T mu.
        dev.applied_bias = 0.0;
        let sd = nondimensionalize(&dev, &CharacteristicScales::identity()).unwrap();
        assert_eq!(sd.species.n.mu, dev.mobility_n);
        assert_eq!(sd.species.o.bulk_density, Some(dev.bulk_oxidant));
        assert_eq!(sd.geometry.x_left, dev.x_left);
        let u_t = dev.constants.thermal_voltage();
        assert!((sd.species.n.d - u_t * dev.mobility_n).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_charge_numbers() {
        let mut dev = table_device();
        dev.alpha_o = 1;
        dev.alpha_r = -1;
        let scales = CharacteristicScales::standard(&dev.constants);
        assert!(nondimensionalize(&dev, &scales).is_err());
    }

    #[test]
    fn redimensionalize_definition() {
        let state = CarrierState {
            time: 1.0,
            rho_n: vec![2.0],
            rho_p: vec![1.0],
            rho_r: vec![0.0],
            rho_o: vec![0.0],
            rho_extra: vec![],
            phi: vec![19.3],
        };
        let scales = CharacteristicScales::default();
        let si = redimensionalize(&state, &scales);
        assert_eq!(si.rho_n[0], 2.0e16);
        assert!((si.phi[0] - 0.499).abs() < 5e-4, "phi = {}", si.phi[0]);
    }

    proptest! {
        #[test]
        fn state_round_trip_is_identity(
            vals in proptest::collection::vec(1e-8f64..1e3, 4),
            phi in -100.0f64..100.0,
        ) {
            let state = CarrierState {
                time: 0.5,
                rho_n: vals.clone(),
                rho_p: vals.clone(),
                rho_r: vals.clone(),
                rho_o: vals.clone(),
                rho_extra: vec![vals.clone()],
                phi: vec![phi; 4],
            };
            let scales = CharacteristicScales::default();
            let back = nondimensionalize_state(&redimensionalize(&state, &scales), &scales);
            for (a, b) in back.rho_n.iter().zip(&state.rho_n) {
                prop_assert!((a - b).abs() <= 1e-14 * b.abs());
            }
            for (a, b) in back.phi.iter().zip(&state.phi) {
                prop_assert!((a - b).abs() <= 1e-14 * phi.abs().max(1.0));
            }
        }

        #[test]
        fn debye_lengths_invariant_under_compatible_rescaling(factor in 0.1f64..10.0) {
            let dev = table_device();
            let base = CharacteristicScales::standard(&dev.constants);
            // Rescale l* and C* together so Phi* eps / (q C* l*^2) is fixed.
            let alt = CharacteristicScales {
                l_star: base.l_star * factor,
                c_star: base.c_star / (factor * factor),
                ..base
            };
            let a = nondimensionalize(&dev, &base).unwrap();
            let b = nondimensionalize(&dev, &alt).unwrap();
            prop_assert!((a.lambda_s_sq - b.lambda_s_sq).abs() < 1e-12 * a.lambda_s_sq);
            prop_assert!((a.lambda_e_sq - b.lambda_e_sq).abs() < 1e-12 * a.lambda_e_sq);
        }
    }
}
