//! PV inverter operating modes and the volt-var outer loop around the
//! power-flow solver.
//!
//! Sign conventions: active/reactive output is injection-positive. A
//! positive power-factor setpoint means leading operation (reactive power
//! injected), negative means lagging (absorbed). Apparent power is capped
//! at `s_rated_kva` with P-priority: active power is kept and reactive
//! power clipped into the remaining headroom.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, NetworkModel, PvPlacement};
use crate::powerflow::{self, InjectionSet, PowerFlowError, PowerFlowSolution, SolverConfig};

#[derive(Debug, Error)]
pub enum DerError {
    #[error("power factor {0} outside [-1,0) u (0,1]")]
    InvalidPf(f64),
    #[error("negative available power {0} kW")]
    NegativeAvail(f64),
    #[error("active power limit {p_limit_kw} kW outside [0, {p_rated_kw}] kW")]
    InvalidLimit { p_limit_kw: f64, p_rated_kw: f64 },
    #[error("volt-var curve invalid: {0}")]
    InvalidCurve(String),
    #[error("pv fleet and availability lengths differ: {fleet} vs {avail}")]
    AvailMismatch { fleet: usize, avail: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("pv config row for bus {bus}: {msg}")]
    BadConfigRow { bus: BusId, msg: String },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Piecewise-linear volt-var characteristic through four (v, q_frac)
/// anchors with ascending voltages; q_frac is reactive output as a fraction
/// of `s_rated_kva`. Outside the anchor span the curve saturates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltVarCurve {
    pub anchors: [(f64, f64); 4],
}

/// Default characteristic: inject up to 0.44 s_rated below 0.96 pu, dead
/// band 0.998..1.002 pu, absorb up to 0.44 s_rated above 1.04 pu. The
/// narrow dead band keeps the droop active at typical feeder voltages.
pub const DEFAULT_VOLTVAR_ANCHORS: [(f64, f64); 4] =
    [(0.96, 0.44), (0.998, 0.0), (1.002, 0.0), (1.04, -0.44)];

impl Default for VoltVarCurve {
    fn default() -> Self {
        VoltVarCurve {
            anchors: DEFAULT_VOLTVAR_ANCHORS,
        }
    }
}

impl VoltVarCurve {
    pub fn new(anchors: [(f64, f64); 4]) -> Result<Self, DerError> {
        let c = VoltVarCurve { anchors };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DerError> {
        let v: Vec<f64> = self.anchors.iter().map(|a| a.0).collect();
        if !(v[0] < v[1] && v[1] <= v[2] && v[2] < v[3]) {
            return Err(DerError::InvalidCurve(format!(
                "anchor voltages not ascending: {v:?}"
            )));
        }
        if self.anchors.iter().any(|a| a.1.abs() > 1.0) {
            return Err(DerError::InvalidCurve("q_frac outside [-1,1]".into()));
        }
        Ok(())
    }

    /// Mirror the characteristic around q = 0.
    pub fn inverted(&self) -> Self {
        let mut anchors = self.anchors;
        for a in &mut anchors {
            a.1 = -a.1;
        }
        VoltVarCurve { anchors }
    }

    /// Interpolated q_frac at voltage `v`, saturating outside the anchors.
    pub fn q_frac_at(&self, v: f64) -> f64 {
        let a = &self.anchors;
        if v <= a[0].0 {
            return a[0].1;
        }
        if v >= a[3].0 {
            return a[3].1;
        }
        for w in a.windows(2) {
            let ((v0, q0), (v1, q1)) = (w[0], w[1]);
            if v <= v1 {
                if v1 == v0 {
                    return q1;
                }
                // Ratio first so segment endpoints reproduce exactly.
                return q0 + (q1 - q0) * ((v - v0) / (v1 - v0));
            }
        }
        unreachable!("anchors cover the span");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PvMode {
    /// Track available power at a fixed power factor.
    ConstantPf { pf: f64 },
    /// Track available power up to an active-power limit, unity pf.
    MaxP { p_limit_kw: f64 },
    /// Track available power; reactive output follows the curve.
    VoltVar { curve: VoltVarCurve },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvUnit {
    pub bus: BusId,
    pub p_rated_kw: f64,
    pub s_rated_kva: f64,
    pub mode: PvMode,
}

impl PvUnit {
    /// Unit with kVA rating equal to the kW rating.
    pub fn new(placement: PvPlacement, mode: PvMode) -> Self {
        PvUnit {
            bus: placement.bus,
            p_rated_kw: placement.p_rated_kw,
            s_rated_kva: placement.p_rated_kw,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), DerError> {
        match &self.mode {
            PvMode::ConstantPf { pf } => validate_pf(*pf),
            PvMode::MaxP { p_limit_kw } => {
                if *p_limit_kw < 0.0 || *p_limit_kw > self.p_rated_kw {
                    Err(DerError::InvalidLimit {
                        p_limit_kw: *p_limit_kw,
                        p_rated_kw: self.p_rated_kw,
                    })
                } else {
                    Ok(())
                }
            }
            PvMode::VoltVar { curve } => curve.validate(),
        }
    }
}

fn validate_pf(pf: f64) -> Result<(), DerError> {
    if pf == 0.0 || pf.abs() > 1.0 || !pf.is_finite() {
        return Err(DerError::InvalidPf(pf));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvOutput {
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Active output in max-power mode: availability clipped by the limit.
pub fn output_max_p(p_avail_kw: f64, p_limit_kw: f64) -> Result<f64, DerError> {
    if p_avail_kw < 0.0 {
        return Err(DerError::NegativeAvail(p_avail_kw));
    }
    Ok(p_avail_kw.min(p_limit_kw))
}

/// Output at a fixed power factor; q = p tan(arccos |pf|), sign from the
/// lead/lag convention, clipped to the apparent-power circle P-first.
pub fn output_constant_pf(p_avail_kw: f64, pf: f64, s_rated_kva: f64) -> Result<PvOutput, DerError> {
    validate_pf(pf)?;
    if p_avail_kw < 0.0 {
        return Err(DerError::NegativeAvail(p_avail_kw));
    }
    let p = p_avail_kw.min(s_rated_kva);
    let tan_phi = (1.0 - pf * pf).sqrt() / pf.abs();
    let q = p * tan_phi * pf.signum();
    Ok(clip_to_capability(p, q, s_rated_kva))
}

/// Reactive setpoint from the curve at voltage `v`, clipped to the headroom
/// left by the active output.
pub fn voltvar_q(curve: &VoltVarCurve, v_pu: f64, s_rated_kva: f64, p_kw: f64) -> f64 {
    let q = curve.q_frac_at(v_pu) * s_rated_kva;
    clip_to_capability(p_kw, q, s_rated_kva).q_kvar
}

/// Keep p, clip q into sqrt(s^2 - p^2).
fn clip_to_capability(p_kw: f64, q_kvar: f64, s_rated_kva: f64) -> PvOutput {
    let p = p_kw.min(s_rated_kva);
    let headroom = (s_rated_kva * s_rated_kva - p * p).max(0.0).sqrt();
    PvOutput {
        p_kw: p,
        q_kvar: q_kvar.clamp(-headroom, headroom),
    }
}

/// Operating point of one unit given available power and (for volt-var)
/// the voltage at its bus.
pub fn pv_output(unit: &PvUnit, p_avail_kw: f64, v_pu: f64) -> Result<PvOutput, DerError> {
    if p_avail_kw < 0.0 {
        return Err(DerError::NegativeAvail(p_avail_kw));
    }
    match &unit.mode {
        PvMode::ConstantPf { pf } => output_constant_pf(p_avail_kw, *pf, unit.s_rated_kva),
        PvMode::MaxP { p_limit_kw } => Ok(PvOutput {
            p_kw: output_max_p(p_avail_kw, p_limit_kw.min(unit.s_rated_kva))?,
            q_kvar: 0.0,
        }),
        PvMode::VoltVar { curve } => {
            let p = p_avail_kw.min(unit.s_rated_kva);
            Ok(PvOutput {
                p_kw: p,
                q_kvar: voltvar_q(curve, v_pu, unit.s_rated_kva, p),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OuterConfig {
    /// Convergence tolerance on the volt-var reactive residual, kvar.
    pub tol_q_kvar: f64,
    pub max_outer: usize,
    /// Successive-substitution damping factor in (0, 1].
    pub damping: f64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        OuterConfig {
            tol_q_kvar: 0.01,
            // Adversarial curve replacements can be nearly vertical, which
            // drags the damped iteration out to a couple hundred passes;
            // each pass is one cheap radial sweep, so buy headroom.
            max_outer: 500,
            damping: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FleetSolve {
    pub solution: PowerFlowSolution,
    pub outputs: Vec<PvOutput>,
    /// Inner power-flow solves performed (1 when no unit is volt-var).
    pub outer_iterations: usize,
    /// Outer fixed point converged; inner convergence is
    /// `solution.converged`.
    pub converged: bool,
}

/// Solve the feeder with a PV fleet attached.
///
/// Non-volt-var outputs are voltage-independent and computed once.
/// Volt-var units are driven to a fixed point by damped successive
/// substitution on their reactive setpoints: q <- q + damping (target - q)
/// with the targets re-read from the latest voltage solution. If the
/// residual grows between passes the working damping factor is halved,
/// which tames oscillation on steep curves; the fixed point itself does not
/// depend on the damping used to reach it.
pub fn solve_with_voltvar(
    model: &NetworkModel,
    base_inj: &InjectionSet,
    pvs: &[PvUnit],
    p_avail_kw: &[f64],
    cfg: &SolverConfig,
    outer: &OuterConfig,
) -> Result<FleetSolve, DerError> {
    if pvs.len() != p_avail_kw.len() {
        return Err(DerError::AvailMismatch {
            fleet: pvs.len(),
            avail: p_avail_kw.len(),
        });
    }
    for u in pvs {
        u.validate()?;
    }

    // Voltage-independent part of every unit's operating point.
    let mut outputs = Vec::with_capacity(pvs.len());
    for (u, &avail) in pvs.iter().zip(p_avail_kw) {
        outputs.push(pv_output(u, avail, 1.0)?);
    }
    let voltvar: Vec<usize> = pvs
        .iter()
        .enumerate()
        .filter(|(_, u)| matches!(u.mode, PvMode::VoltVar { .. }))
        .map(|(i, _)| i)
        .collect();
    // Start volt-var units at zero reactive output.
    for &i in &voltvar {
        outputs[i].q_kvar = 0.0;
    }

    let solve_at = |outputs: &[PvOutput]| -> Result<PowerFlowSolution, PowerFlowError> {
        let mut inj = base_inj.clone();
        for (u, out) in pvs.iter().zip(outputs) {
            inj.add(model, u.bus, out.p_kw, out.q_kvar);
        }
        powerflow::solve(model, &inj, cfg)
    };

    let mut solution = solve_at(&outputs)?;
    let mut iterations = 1;
    if voltvar.is_empty() {
        let converged = solution.converged;
        return Ok(FleetSolve {
            solution,
            outputs,
            outer_iterations: iterations,
            converged,
        });
    }

    let target_residual = |sol: &PowerFlowSolution, outputs: &[PvOutput]| {
        let mut targets = vec![0.0; voltvar.len()];
        let mut residual: f64 = 0.0;
        for (k, &i) in voltvar.iter().enumerate() {
            let u = &pvs[i];
            let curve = match &u.mode {
                PvMode::VoltVar { curve } => curve,
                _ => unreachable!(),
            };
            targets[k] = voltvar_q(curve, sol.v_at(model, u.bus), u.s_rated_kva, outputs[i].p_kw);
            residual = residual.max((targets[k] - outputs[i].q_kvar).abs());
        }
        (targets, residual)
    };

    let mut damping = outer.damping;
    let (mut targets, mut residual) = target_residual(&solution, &outputs);
    let mut converged = residual <= outer.tol_q_kvar && solution.converged;
    let mut best = (residual, outputs.clone(), solution.clone());
    while !converged && iterations < outer.max_outer {
        for (k, &i) in voltvar.iter().enumerate() {
            outputs[i].q_kvar += damping * (targets[k] - outputs[i].q_kvar);
        }
        solution = solve_at(&outputs)?;
        iterations += 1;
        let prev = residual;
        (targets, residual) = target_residual(&solution, &outputs);
        if residual > prev {
            damping = (damping * 0.5).max(0.05);
        }
        if residual < best.0 && solution.converged {
            best = (residual, outputs.clone(), solution.clone());
        }
        converged = residual <= outer.tol_q_kvar && solution.converged;
    }
    // A stalled fixed point hands back its best iterate, flagged.
    if !converged {
        (_, outputs, solution) = best;
    }

    Ok(FleetSolve {
        solution,
        outputs,
        outer_iterations: iterations,
        converged,
    })
}

/// Row of the PV configuration file
/// (`bus,p_rated_kw,mode,pf,p_limit_kw,v1,q1,v2,v3,v4,q4`).
#[derive(Debug, Deserialize)]
struct PvConfigRow {
    bus: BusId,
    p_rated_kw: f64,
    mode: String,
    pf: Option<f64>,
    p_limit_kw: Option<f64>,
    v1: Option<f64>,
    q1: Option<f64>,
    v2: Option<f64>,
    v3: Option<f64>,
    v4: Option<f64>,
    q4: Option<f64>,
}

/// Load a PV fleet from the configuration CSV.
pub fn load_pv_config(path: &Path) -> Result<Vec<PvUnit>, DerError> {
    let file = File::open(path).map_err(|source| DerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_pv_config_from(file, &path.display().to_string())
}

pub fn load_pv_config_from<R: Read>(reader: R, label: &str) -> Result<Vec<PvUnit>, DerError> {
    let mut units = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        let row: PvConfigRow = rec.map_err(|source| DerError::Csv {
            path: label.into(),
            source,
        })?;
        let missing = |field: &str| DerError::BadConfigRow {
            bus: row.bus,
            msg: format!("mode {} requires column {field}", row.mode),
        };
        let mode = match row.mode.as_str() {
            "constant_pf" => PvMode::ConstantPf {
                pf: row.pf.ok_or_else(|| missing("pf"))?,
            },
            "max_p" => PvMode::MaxP {
                p_limit_kw: row.p_limit_kw.ok_or_else(|| missing("p_limit_kw"))?,
            },
            "volt_var" => PvMode::VoltVar {
                curve: VoltVarCurve::new([
                    (row.v1.ok_or_else(|| missing("v1"))?, row.q1.ok_or_else(|| missing("q1"))?),
                    (row.v2.ok_or_else(|| missing("v2"))?, 0.0),
                    (row.v3.ok_or_else(|| missing("v3"))?, 0.0),
                    (row.v4.ok_or_else(|| missing("v4"))?, row.q4.ok_or_else(|| missing("q4"))?),
                ])?,
            },
            other => {
                return Err(DerError::BadConfigRow {
                    bus: row.bus,
                    msg: format!("unknown mode {other:?}"),
                })
            }
        };
        let unit = PvUnit {
            bus: row.bus,
            p_rated_kw: row.p_rated_kw,
            s_rated_kva: row.p_rated_kw,
            mode,
        };
        unit.validate()?;
        units.push(unit);
    }
    Ok(units)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, BranchStatus, Bus, BusKind};
    use proptest::prelude::*;

    fn unit(mode: PvMode) -> PvUnit {
        PvUnit {
            bus: 2,
            p_rated_kw: 420.0,
            s_rated_kva: 420.0,
            mode,
        }
    }

    #[test]
    fn max_p_clips_to_limit() {
        assert_eq!(output_max_p(300.0, 420.0).unwrap(), 300.0);
        assert_eq!(output_max_p(500.0, 420.0).unwrap(), 420.0);
        assert_eq!(output_max_p(0.0, 420.0).unwrap(), 0.0);
        assert!(output_max_p(-1.0, 420.0).is_err());
    }

    #[test]
    fn constant_pf_examples() {
        let out = output_constant_pf(100.0, 1.0, 420.0).unwrap();
        assert_eq!(out, PvOutput { p_kw: 100.0, q_kvar: 0.0 });
        let lead = output_constant_pf(100.0, 0.8, 420.0).unwrap();
        assert!((lead.q_kvar - 75.0).abs() < 1e-12);
        let lag = output_constant_pf(100.0, -0.8, 420.0).unwrap();
        assert!((lag.q_kvar + 75.0).abs() < 1e-12);
        assert!(output_constant_pf(100.0, 0.0, 420.0).is_err());
    }

    #[test]
    fn constant_pf_clips_q_with_p_priority() {
        // Full availability leaves no reactive headroom.
        let out = output_constant_pf(420.0, 0.8, 420.0).unwrap();
        assert_eq!(out.p_kw, 420.0);
        assert_eq!(out.q_kvar, 0.0);
        // Partial availability leaves sqrt(s^2 - p^2).
        let out = output_constant_pf(400.0, 0.8, 420.0).unwrap();
        let headroom = (420.0_f64 * 420.0 - 400.0 * 400.0).sqrt();
        assert!((out.q_kvar - headroom).abs() < 1e-9);
    }

    #[test]
    fn voltvar_curve_points() {
        let c = VoltVarCurve::default();
        assert_eq!(c.q_frac_at(1.0), 0.0);
        assert_eq!(c.q_frac_at(0.998), 0.0);
        assert_eq!(c.q_frac_at(0.96), 0.44);
        assert_eq!(c.q_frac_at(0.90), 0.44);
        assert_eq!(c.q_frac_at(1.04), -0.44);
        assert_eq!(c.q_frac_at(1.15), -0.44);
        // Midpoint of the injection droop segment.
        assert!((c.q_frac_at(0.979) - 0.22).abs() < 1e-12);
    }

    #[test]
    fn voltvar_q_respects_headroom() {
        let c = VoltVarCurve::default();
        // p = s leaves zero headroom.
        assert_eq!(voltvar_q(&c, 0.90, 420.0, 420.0), 0.0);
        // Plenty of headroom passes the curve value through.
        assert!((voltvar_q(&c, 0.90, 420.0, 100.0) - 0.44 * 420.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_curves_rejected() {
        assert!(VoltVarCurve::new([(0.98, 0.44), (0.92, 0.0), (1.02, 0.0), (1.08, -0.44)]).is_err());
        assert!(VoltVarCurve::new([(0.92, 1.44), (0.98, 0.0), (1.02, 0.0), (1.08, -0.44)]).is_err());
        // Coincident middle anchors are allowed.
        assert!(VoltVarCurve::new([(0.92, 0.44), (0.98, 0.0), (0.98, 0.0), (1.08, -0.44)]).is_ok());
    }

    proptest! {
        #[test]
        fn normal_curve_monotone_non_increasing(a in 0.80f64..1.2, b in 0.80f64..1.2) {
            let c = VoltVarCurve::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.q_frac_at(lo) >= c.q_frac_at(hi) - 1e-12);
        }

        #[test]
        fn output_stays_on_capability_disc(
            avail in 0.0f64..600.0,
            pf in prop_oneof![0.05f64..=1.0, -1.0f64..=-0.05],
            v in 0.85f64..1.15,
        ) {
            for mode in [
                PvMode::ConstantPf { pf },
                PvMode::MaxP { p_limit_kw: 336.0 },
                PvMode::VoltVar { curve: VoltVarCurve::default() },
            ] {
                let u = unit(mode);
                let out = pv_output(&u, avail, v).unwrap();
                let s = (out.p_kw * out.p_kw + out.q_kvar * out.q_kvar).sqrt();
                prop_assert!(s <= u.s_rated_kva * (1.0 + 1e-12));
                prop_assert!(out.p_kw >= 0.0);
            }
        }
    }

    // Stiff enough that the PV bus sags below the 0.98 pu dead band under
    // the test loading, so the volt-var fixed point is interior.
    fn feeder_with_pv_bus() -> NetworkModel {
        let z = 12.66_f64 * 12.66 / 10.0;
        NetworkModel::new(
            vec![
                Bus { id: 1, kind: BusKind::Substation, base_kv: 12.66 },
                Bus { id: 2, kind: BusKind::Load, base_kv: 12.66 },
                Bus { id: 3, kind: BusKind::Pv, base_kv: 12.66 },
            ],
            vec![
                Branch { id: 1, from: 1, to: 2, r_ohm: 0.08 * z, x_ohm: 0.16 * z, status: BranchStatus::Closed },
                Branch { id: 2, from: 2, to: 3, r_ohm: 0.08 * z, x_ohm: 0.16 * z, status: BranchStatus::Closed },
            ],
            10.0,
        )
        .unwrap()
    }

    fn loaded_base(model: &NetworkModel) -> InjectionSet {
        let mut inj = InjectionSet::for_model(model);
        inj.add_load(model, 2, 800.0, 500.0);
        inj.add_load(model, 3, 400.0, 250.0);
        inj
    }

    fn voltvar_fleet() -> Vec<PvUnit> {
        vec![PvUnit {
            bus: 3,
            p_rated_kw: 420.0,
            s_rated_kva: 420.0,
            mode: PvMode::VoltVar { curve: VoltVarCurve::default() },
        }]
    }

    #[test]
    fn no_voltvar_fleet_is_single_solve() {
        let model = feeder_with_pv_bus();
        let base = loaded_base(&model);
        let fleet = vec![unit(PvMode::ConstantPf { pf: 1.0 })];
        let fs = solve_with_voltvar(
            &model, &base, &fleet, &[200.0], &SolverConfig::default(), &OuterConfig::default(),
        )
        .unwrap();
        assert!(fs.converged);
        assert_eq!(fs.outer_iterations, 1);
        assert_eq!(fs.outputs[0], PvOutput { p_kw: 200.0, q_kvar: 0.0 });
    }

    #[test]
    fn zero_avail_wide_deadband_matches_plain_solve() {
        let model = feeder_with_pv_bus();
        let base = loaded_base(&model);
        let fs = solve_with_voltvar(
            &model,
            &base,
            &voltvar_fleet(),
            &[0.0],
            &SolverConfig::default(),
            &OuterConfig::default(),
        )
        .unwrap();
        // The sag leaves the default curve commanding reactive injection
        // even at zero active power, so compare against a curve whose dead
        // band swallows the whole voltage range instead.
        let wide = VoltVarCurve::new([(0.5, 0.44), (0.6, 0.0), (1.4, 0.0), (1.5, -0.44)]).unwrap();
        let fleet = vec![PvUnit { mode: PvMode::VoltVar { curve: wide }, ..voltvar_fleet()[0].clone() }];
        let fs2 = solve_with_voltvar(
            &model, &base, &fleet, &[0.0], &SolverConfig::default(), &OuterConfig::default(),
        )
        .unwrap();
        let plain = powerflow::solve(&model, &base, &SolverConfig::default()).unwrap();
        assert_eq!(fs2.outer_iterations, 1);
        assert_eq!(fs2.solution.v_mag, plain.v_mag);
        assert!(fs.converged && fs2.converged);
    }

    /// Independent root-finder for the single-unit fixed point:
    /// bisection on f(q) = voltvar_q(curve, v(q)) - q, with v(q) from the
    /// inner solver at reactive output fixed to q.
    fn bisection_fixed_point(
        model: &NetworkModel,
        base: &InjectionSet,
        u: &PvUnit,
        p_out: f64,
        mut lo: f64,
        mut hi: f64,
    ) -> f64 {
        let curve = match &u.mode {
            PvMode::VoltVar { curve } => curve.clone(),
            _ => unreachable!(),
        };
        let f = |q: f64| {
            let mut inj = base.clone();
            inj.add(model, u.bus, p_out, q);
            let sol = powerflow::solve(model, &inj, &SolverConfig::default()).unwrap();
            voltvar_q(&curve, sol.v_at(model, u.bus), u.s_rated_kva, p_out) - q
        };
        assert!(f(lo) > 0.0 && f(hi) < 0.0, "bracket must straddle the root");
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fixed_point_matches_bisection_oracle() {
        let model = feeder_with_pv_bus();
        let base = loaded_base(&model);
        let fleet = voltvar_fleet();
        let avail = [150.0];
        let fs = solve_with_voltvar(
            &model, &base, &fleet, &avail, &SolverConfig::default(), &OuterConfig::default(),
        )
        .unwrap();
        assert!(fs.converged);
        let s = fleet[0].s_rated_kva;
        let q_star = bisection_fixed_point(&model, &base, &fleet[0], 150.0, 0.0, 0.44 * s);
        assert!(
            (fs.outputs[0].q_kvar - q_star).abs() <= 0.02,
            "iterated {} vs bisected {q_star}",
            fs.outputs[0].q_kvar
        );
    }

    #[test]
    fn fixed_point_independent_of_damping() {
        let model = feeder_with_pv_bus();
        let base = loaded_base(&model);
        let fleet = voltvar_fleet();
        let cfg = SolverConfig::default();
        let a = solve_with_voltvar(
            &model, &base, &fleet, &[150.0], &cfg,
            &OuterConfig { damping: 0.5, ..OuterConfig::default() },
        )
        .unwrap();
        let b = solve_with_voltvar(
            &model, &base, &fleet, &[150.0], &cfg,
            &OuterConfig { damping: 0.25, ..OuterConfig::default() },
        )
        .unwrap();
        assert!(a.converged && b.converged);
        assert!((a.outputs[0].q_kvar - b.outputs[0].q_kvar).abs() <= 10.0 * 0.01);
    }

    #[test]
    fn residual_within_tolerance_at_convergence() {
        let model = feeder_with_pv_bus();
        let base = loaded_base(&model);
        let fleet = voltvar_fleet();
        let outer = OuterConfig::default();
        let fs = solve_with_voltvar(&model, &base, &fleet, &[150.0], &SolverConfig::default(), &outer)
            .unwrap();
        assert!(fs.converged);
        assert!(fs.outer_iterations <= 20, "took {}", fs.outer_iterations);
        let curve = VoltVarCurve::default();
        let target = voltvar_q(&curve, fs.solution.v_at(&model, 3), 420.0, fs.outputs[0].p_kw);
        assert!((fs.outputs[0].q_kvar - target).abs() <= outer.tol_q_kvar);
    }

    #[test]
    fn pv_config_round_trip() {
        let csv = "bus,p_rated_kw,mode,pf,p_limit_kw,v1,q1,v2,v3,v4,q4\n\
                   25,420,volt_var,,,0.96,0.44,0.998,1.002,1.04,-0.44\n\
                   32,180,constant_pf,1.0,,,,,,,\n\
                   45,330,max_p,,264,,,,,,\n";
        let units = load_pv_config_from(csv.as_bytes(), "test").unwrap();
        assert_eq!(units.len(), 3);
        assert_eq!(units[0].mode, PvMode::VoltVar { curve: VoltVarCurve::default() });
        assert_eq!(units[1].mode, PvMode::ConstantPf { pf: 1.0 });
        assert_eq!(units[2].mode, PvMode::MaxP { p_limit_kw: 264.0 });
        let bad = "bus,p_rated_kw,mode,pf,p_limit_kw,v1,q1,v2,v3,v4,q4\n25,420,volt_var,,,,,,,,\n";
        assert!(load_pv_config_from(bad.as_bytes(), "test").is_err());
    }
}
