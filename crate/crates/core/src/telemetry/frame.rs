//! One minute of feeder telemetry: simulation, corruption, features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, spoofed_pv_readings, AttackSpec, SettingId};
use crate::der_control::{solve_with_voltvar, OuterConfig, PvOutput, PvUnit};
use crate::grid::{NetworkModel, PvPlacement};
use crate::powerflow::{InjectionSet, PowerFlowSolution, SolverConfig};
use crate::telemetry::TelemetryError;

/// Multiplicative meter error half-width: every reading is scaled by
/// (1 + u), u ~ U[-0.01, 0.01].
pub const METER_ERROR_FRAC: f64 = 0.01;

/// Readings are rounded to 1e-6 at the corruption stage so persisted and
/// in-memory pipelines see identical numbers.
pub const READING_SCALE: f64 = 1e6;

pub const FEATURE_NAMES: [&str; 6] = ["p_d", "q_d", "p_gen", "q_gen", "dp", "dq"];

/// What the operator's historian stores for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReadings {
    pub frame: u64,
    pub day: u32,
    pub minute: u32,
    pub attacked: bool,
    pub slack_p_kw: f64,
    pub slack_q_kvar: f64,
    /// Per plant, placement order; spoofed under attack.
    pub pv_p_kw: Vec<f64>,
    pub pv_q_kvar: Vec<f64>,
    /// Per load bus, model load-bus order.
    pub load_p_kw: Vec<f64>,
    pub load_q_kvar: Vec<f64>,
    /// Load-bus meters that dropped out this frame (p and q together).
    pub missing: Vec<bool>,
}

/// The six aggregate quantities the detectors see. Plant-bus readings are
/// deliberately absent: a hidden attacker forges them, so they carry no
/// signal. Detection must come from the substation-vs-demand balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Total reported demand over load buses (dropped-out meters count 0).
    pub p_d: f64,
    pub q_d: f64,
    /// Substation interchange as metered at bus 1.
    pub p_gen: f64,
    pub q_gen: f64,
    /// Substation-minus-demand imbalances.
    pub dp: f64,
    pub dq: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 6] {
        [self.p_d, self.q_d, self.p_gen, self.q_gen, self.dp, self.dq]
    }
}

/// Simulation result before metering effects.
#[derive(Debug, Clone)]
pub struct SimFrame {
    pub readings: FrameReadings,
    /// Outputs of the legitimate fleet (what the plants report).
    pub counterfactual_outputs: Vec<PvOutput>,
    /// Outputs actually injected (differ from the above under attack).
    pub actual_outputs: Vec<PvOutput>,
    /// Converged network state of the physical (possibly attacked) feeder.
    pub solution: PowerFlowSolution,
    pub converged: bool,
}

/// Simulate one frame under `setting`, optionally attacked.
///
/// Two solves happen under attack: the legitimate counterfactual, whose PV
/// outputs become the spoofed plant readings, and the attacked feeder,
/// whose substation interchange becomes the slack reading. Load meters
/// report the constant-PQ demand either way.
#[allow(clippy::too_many_arguments)]
pub fn simulate_frame(
    model: &NetworkModel,
    placements: &[PvPlacement],
    setting: SettingId,
    frame: u64,
    day: u32,
    minute: u32,
    load_p_kw: &[f64],
    load_q_kvar: &[f64],
    avail_kw: &[f64],
    attack: Option<&AttackSpec>,
    pf_cfg: &SolverConfig,
    outer: &OuterConfig,
) -> Result<SimFrame, TelemetryError> {
    let load_buses = model.load_buses();
    assert_eq!(load_p_kw.len(), load_buses.len());
    assert_eq!(load_q_kvar.len(), load_buses.len());

    let mut base = InjectionSet::for_model(model);
    for (i, &bus) in load_buses.iter().enumerate() {
        base.add_load(model, bus, load_p_kw[i], load_q_kvar[i]);
    }

    let legit: Vec<PvUnit> = setting.pv_units(placements);
    let cf = solve_with_voltvar(model, &base, &legit, avail_kw, pf_cfg, outer)?;

    let (actual, converged) = match attack {
        Some(spec) => {
            let tampered = apply_attack(&legit, spec)?;
            let sol = solve_with_voltvar(model, &base, &tampered, avail_kw, pf_cfg, outer)?;
            let ok = cf.converged && sol.converged;
            (sol, ok)
        }
        None => {
            let ok = cf.converged;
            (cf.clone(), ok)
        }
    };

    let spoofed = spoofed_pv_readings(&cf.outputs);
    let readings = FrameReadings {
        frame,
        day,
        minute,
        attacked: attack.is_some(),
        slack_p_kw: actual.solution.slack_p_kw,
        slack_q_kvar: actual.solution.slack_q_kvar,
        pv_p_kw: spoofed.iter().map(|o| o.p_kw).collect(),
        pv_q_kvar: spoofed.iter().map(|o| o.q_kvar).collect(),
        load_p_kw: load_p_kw.to_vec(),
        load_q_kvar: load_q_kvar.to_vec(),
        missing: vec![false; load_buses.len()],
    };
    Ok(SimFrame {
        readings,
        counterfactual_outputs: cf.outputs,
        actual_outputs: actual.outputs,
        solution: actual.solution,
        converged,
    })
}

/// Scale every reading by an independent (1 + U[-frac, frac]) draw. Draw
/// order: slack p, slack q, pv p, pv q, load p, load q.
pub fn apply_meter_error(r: &mut FrameReadings, frac: f64, rng: &mut impl Rng) {
    let mut jitter = |x: &mut f64| {
        *x *= 1.0 + rng.random_range(-frac..=frac);
    };
    jitter(&mut r.slack_p_kw);
    jitter(&mut r.slack_q_kvar);
    r.pv_p_kw.iter_mut().for_each(&mut jitter);
    r.pv_q_kvar.iter_mut().for_each(&mut jitter);
    r.load_p_kw.iter_mut().for_each(&mut jitter);
    r.load_q_kvar.iter_mut().for_each(&mut jitter);
}

fn quantize(x: f64) -> f64 {
    (x * READING_SCALE).round() / READING_SCALE
}

/// Round every reading to the meter resolution.
pub fn quantize_readings(r: &mut FrameReadings) {
    r.slack_p_kw = quantize(r.slack_p_kw);
    r.slack_q_kvar = quantize(r.slack_q_kvar);
    for v in r
        .pv_p_kw
        .iter_mut()
        .chain(r.pv_q_kvar.iter_mut())
        .chain(r.load_p_kw.iter_mut())
        .chain(r.load_q_kvar.iter_mut())
    {
        *v = quantize(*v);
    }
}

/// Aggregate a frame into the six features. Missing load meters
/// contribute zero; nothing else is imputed.
pub fn extract_features(r: &FrameReadings) -> FeatureVector {
    let masked_sum = |vals: &[f64]| -> f64 {
        vals.iter()
            .zip(&r.missing)
            .map(|(v, &miss)| if miss { 0.0 } else { *v })
            .sum()
    };
    let p_d = masked_sum(&r.load_p_kw);
    let q_d = masked_sum(&r.load_q_kvar);
    let p_gen = r.slack_p_kw;
    let q_gen = r.slack_q_kvar;
    FeatureVector {
        p_d,
        q_d,
        p_gen,
        q_gen,
        dp: p_gen - p_d,
        dq: q_gen - q_d,
    }
}

/// Reported generation minus reported consumption, kW: substation plus
/// plant readings less load readings (dropped-out meters count 0). Equals
/// the solver's active loss only when every reading is honest and exact;
/// spoofing, metering error and meter dropouts all move it.
pub fn apparent_loss(r: &FrameReadings) -> f64 {
    let load: f64 = r
        .load_p_kw
        .iter()
        .zip(&r.missing)
        .map(|(v, &miss)| if miss { 0.0 } else { *v })
        .sum();
    let pv: f64 = r.pv_p_kw.iter().sum();
    r.slack_p_kw + pv - load
}
