//! Temporary probe: find non-converged frames in 30-day datasets.

use pvs_core::attack::{sample_attack, SettingId};
use pvs_core::der_control::{solve_with_voltvar, OuterConfig, PvUnit};
use pvs_core::grid::NetworkModel;
use pvs_core::powerflow::{InjectionSet, SolverConfig};
use pvs_core::telemetry::{
    attack_frame_mask, derive_rng, sample_customer_mix, simulate_frame, synth_day, DatasetConfig,
    MINUTES_PER_DAY,
};

fn main() {
    let (model, placements) = NetworkModel::default_case();
    for setting in [SettingId::S3, SettingId::S4] {
        let config = DatasetConfig::new(setting, 1, 30);
        let attack_mask = attack_frame_mask(&config);
        let mix = sample_customer_mix(&model, config.seed);
        let fleet: Vec<PvUnit> = setting.pv_units(&placements);
        let pf_cfg = SolverConfig::default();
        let outer = OuterConfig::default();
        for day in 0..config.days {
            let profiles = synth_day(&model, &placements, &mix, config.seed, day);
            for minute in 0..MINUTES_PER_DAY {
                let frame = day as u64 * MINUTES_PER_DAY as u64 + minute as u64;
                let spec = if attack_mask[frame as usize] {
                    let mut rng = derive_rng(config.seed, frame, "attack-spec");
                    Some(sample_attack(setting, &fleet, &mut rng))
                } else {
                    None
                };
                let load_p = profiles.load_p_kw.row(minute).to_vec();
                let load_q = profiles.load_q_kvar.row(minute).to_vec();
                let avail = profiles.avail_kw.row(minute).to_vec();
                let res = simulate_frame(
                    &model,
                    &placements,
                    setting,
                    frame,
                    day,
                    minute as u32,
                    &load_p,
                    &load_q,
                    &avail,
                    spec.as_ref(),
                    &pf_cfg,
                    &outer,
                );
                match res {
                    Ok(sim) if sim.converged => {}
                    Ok(_) => {
                        println!("--- {setting:?} frame {frame} (day {day} min {minute}): outer loop not converged");
                        println!("    attack: {spec:?}");
                        println!("    avail: {avail:?}");
                        // Re-run the attacked fleet solve directly for diagnostics.
                        if let Some(sp) = spec.as_ref() {
                            let tampered = pvs_core::attack::apply_attack(&fleet, sp).unwrap();
                            let mut base = InjectionSet::for_model(&model);
                            for (i, &bus) in model.load_buses().iter().enumerate() {
                                base.add_load(&model, bus, load_p[i], load_q[i]);
                            }
                            let mut deep = outer.clone();
                            deep.max_outer = 2000;
                            match solve_with_voltvar(&model, &base, &tampered, &avail, &pf_cfg, &deep) {
                                Ok(fs) => println!(
                                    "    deep solve: converged={} iters={} q={:?}",
                                    fs.converged,
                                    fs.outer_iterations,
                                    fs.outputs.iter().map(|o| o.q_kvar).collect::<Vec<_>>()
                                ),
                                Err(e) => println!("    deep solve error: {e}"),
                            }
                        }
                    }
                    Err(e) => {
                        println!("--- {setting:?} frame {frame} (day {day} min {minute}): error {e}");
                        println!("    attack: {spec:?}");
                    }
                }
            }
        }
        println!("=== {setting:?} scan done");
    }
}
