// Scratch probe for solver behavior on the paper presets. Not part of the
// deliverable; run with: cargo run --release -p pec1d --example probe -- <mode>
use pec1d::mesh::Mesh1D;
use pec1d::physics::{ContactKind, SemiconductorType};
use pec1d::scales::{
    nondimensionalize, CharacteristicScales, DeviceDescription, ElectrodeKind,
    InterfaceDescription, PhysicalConstants, Profile,
};
use pec1d::stationary::{gummel_schwarz, warm_start, IterationControl};
use pec1d::transport::{Stepper, System};
use std::time::Instant;

fn device_i(bulk_r: f64, bulk_o: f64, bias: f64) -> DeviceDescription {
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
        bulk_reductant: bulk_r * 1e16,
        bulk_oxidant: bulk_o * 1e16,
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
        applied_bias: bias,
        applied_bias_electrode: 0.0,
        electrode: ElectrodeKind::Bulk,
        interface: InterfaceDescription::Kinetic { k_et: 1e-21, k_ht: 1e-17 },
        illuminated: false,
        g0: 1.2e17,
        sigma: Profile::Uniform(2.302585092994046e4),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("gs");

    let desc = device_i(30.0, 29.0, 19.3);
    let scales = CharacteristicScales::standard(&desc.constants);
    let device = nondimensionalize(&desc, &scales).unwrap();
    let mesh = Mesh1D::build(device.geometry.x_left, device.geometry.x_right, 200, 1.15).unwrap();
    let sys = System::new(device, mesh).unwrap();
    let initial = sys.state_from_uniform(2.0, 1.0, 30.0, 29.0, &[]).unwrap();
    println!(
        "initial phi range: {:.3} .. {:.3}",
        initial.phi.iter().cloned().fold(f64::INFINITY, f64::min),
        initial.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );

    match mode {
        "gs" => {
            let t0 = Instant::now();
            let guess = warm_start(&initial, &sys, 0.05).unwrap();
            println!("warm start 0.05 done in {:?}", t0.elapsed());
            let control = IterationControl { max_gummel: 2000, warm_start_time: 0.0, ..Default::default() };
            let t0 = Instant::now();
            match gummel_schwarz(&guess, &sys, &control) {
                Ok((state, report)) => {
                    println!(
                        "GS: converged={} iters={} elapsed={:?}",
                        report.converged, report.iterations, t0.elapsed()
                    );
                    let tail: Vec<String> = report
                        .update_norms
                        .iter()
                        .rev()
                        .take(5)
                        .map(|v| format!("{v:.2e}"))
                        .collect();
                    println!("last norms: {tail:?}");
                    let skip = report.update_norms.len() / 10;
                    let sampled: Vec<String> = report
                        .update_norms
                        .iter()
                        .step_by(skip.max(1))
                        .map(|v| format!("{v:.1e}"))
                        .collect();
                    println!("norm trace: {sampled:?}");
                    println!(
                        "phi range: {:.3} .. {:.3}",
                        state.phi.iter().cloned().fold(f64::INFINITY, f64::min),
                        state.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    );
                    let i_star = sys.mesh.interface_index();
                    println!(
                        "rho_n(S): {:.3e}..{:.3e}  rho_o(E): {:.3e}..{:.3e} rho_r: {:.3e}..{:.3e}",
                        state.rho_n.iter().cloned().fold(f64::INFINITY, f64::min),
                        state.rho_n.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        state.rho_o.iter().cloned().fold(f64::INFINITY, f64::min),
                        state.rho_o.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        state.rho_r.iter().cloned().fold(f64::INFINITY, f64::min),
                        state.rho_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    );
                    println!("phi at interface: {:.3}", state.phi[i_star]);
                    let fluxes = sys.fluxes(&state);
                    println!(
                        "total flux: face0={:.4e} iface-={:.4e} iface+={:.4e} last={:.4e}",
                        fluxes.total[0],
                        fluxes.total[i_star - 1],
                        fluxes.total[i_star],
                        fluxes.total.last().unwrap()
                    );
                }
                Err(e) => println!("GS failed: {e}"),
            }
        }
        "steady" => {
            let mut state = initial.clone();
            let mut stepper = Stepper::new(&sys);
            let t0 = Instant::now();
            let mut steps_total = 0u64;
            for window in 0..200 {
                let target = state.time + 50.0;
                let mut prev = Vec::new();
                state.flatten_into(&mut prev);
                let mut steps = 0u64;
                while state.time < target {
                    stepper.step(&mut state, target - state.time).unwrap();
                    steps += 1;
                }
                steps_total += steps;
                let mut cur = Vec::new();
                state.flatten_into(&mut cur);
                let rate = pec1d::norms::rel_l2_diff(&cur, &prev) / 50.0;
                println!(
                    "t'={:8.1} rate={:.3e} steps={steps} wall={:?} clamps={}",
                    state.time,
                    rate,
                    t0.elapsed(),
                    stepper.clamp_events
                );
                if rate < 1e-10 {
                    println!("steady after {} steps, {:?}", steps_total, t0.elapsed());
                    break;
                }
            }
        }
        other => println!("unknown mode {other}"),
    }
}
