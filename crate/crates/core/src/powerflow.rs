//! Backward/forward sweep power flow for radial feeders.
//!
//! Buses hold constant-PQ injections (generation positive, load negative).
//! Each iteration accumulates branch currents leaf-to-root from the latest
//! voltage estimate, then propagates voltage drops root-to-leaf; the loop
//! stops when the largest complex voltage update falls below tolerance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BranchStatus, BusId, GridError, NetworkModel};

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("voltage collapse at bus {bus}: |V| = {v_pu:.4} pu")]
    VoltageCollapse { bus: BusId, v_pu: f64 },
    #[error("injection vector length {got} does not match {want} buses")]
    DimensionMismatch { got: usize, want: usize },
    #[error("nonzero injection at substation bus 1; the slack balances the system")]
    SlackInjection,
}

/// Net complex power injection per bus, kW / kvar, generation positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSet {
    p_kw: Vec<f64>,
    q_kvar: Vec<f64>,
}

impl InjectionSet {
    pub fn zeros(n_buses: usize) -> Self {
        InjectionSet {
            p_kw: vec![0.0; n_buses],
            q_kvar: vec![0.0; n_buses],
        }
    }

    pub fn for_model(model: &NetworkModel) -> Self {
        Self::zeros(model.n_buses())
    }

    /// Add generation (positive) or load (negative) at a bus.
    pub fn add(&mut self, model: &NetworkModel, bus: BusId, p_kw: f64, q_kvar: f64) {
        let i = model.bus_index(bus);
        self.p_kw[i] += p_kw;
        self.q_kvar[i] += q_kvar;
    }

    /// Add a consumer load drawing `p_kw`/`q_kvar`.
    pub fn add_load(&mut self, model: &NetworkModel, bus: BusId, p_kw: f64, q_kvar: f64) {
        self.add(model, bus, -p_kw, -q_kvar);
    }

    pub fn p_kw(&self) -> &[f64] {
        &self.p_kw
    }

    pub fn q_kvar(&self) -> &[f64] {
        &self.q_kvar
    }

    pub fn total_p_kw(&self) -> f64 {
        self.p_kw.iter().sum()
    }

    pub fn total_q_kvar(&self) -> f64 {
        self.q_kvar.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence tolerance on the largest complex voltage update, pu.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang_rad: Vec<f64>,
    /// Sending-end branch flows aligned with `model.branches`; open branches
    /// carry zero.
    pub branch_p_kw: Vec<f64>,
    pub branch_q_kvar: Vec<f64>,
    pub slack_p_kw: f64,
    pub slack_q_kvar: f64,
    pub loss_p_kw: f64,
    pub loss_q_kvar: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PowerFlowSolution {
    pub fn v_at(&self, model: &NetworkModel, bus: BusId) -> f64 {
        self.v_mag[model.bus_index(bus)]
    }

    pub fn min_v(&self) -> (usize, f64) {
        self.v_mag
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty")
    }

    /// Debug dump: `bus,v_pu,angle_rad`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bus,v_pu,angle_rad")?;
        for (i, (v, a)) in self.v_mag.iter().zip(&self.v_ang_rad).enumerate() {
            writeln!(w, "{},{:.9},{:.9}", i + 1, v, a)?;
        }
        Ok(())
    }
}

/// Voltage magnitudes below this are treated as collapse, not iterated on.
pub const COLLAPSE_V_PU: f64 = 0.5;

pub fn solve(
    model: &NetworkModel,
    inj: &InjectionSet,
    cfg: &SolverConfig,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = model.n_buses();
    if inj.p_kw.len() != n {
        return Err(PowerFlowError::DimensionMismatch {
            got: inj.p_kw.len(),
            want: n,
        });
    }
    if inj.p_kw[0] != 0.0 || inj.q_kvar[0] != 0.0 {
        return Err(PowerFlowError::SlackInjection);
    }
    let order = model.radial_order()?;
    let s_base_kw = model.base_mva * 1000.0;
    let z_base = model.base_kv * model.base_kv / model.base_mva;

    let s_pu: Vec<Complex64> = inj
        .p_kw
        .iter()
        .zip(&inj.q_kvar)
        .map(|(&p, &q)| Complex64::new(p, q) / s_base_kw)
        .collect();
    let z_pu: Vec<Complex64> = model
        .branches
        .iter()
        .map(|b| Complex64::new(b.r_ohm, b.x_ohm) / z_base)
        .collect();

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut i_branch = vec![Complex64::new(0.0, 0.0); order.len()];
    let mut i_acc = vec![Complex64::new(0.0, 0.0); n];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        // Backward sweep: bus demand currents, accumulated into branches
        // leaf-first (reverse BFS order visits children before parents).
        for i in 0..n {
            i_acc[i] = (-s_pu[i] / v[i]).conj();
        }
        for (k, e) in order.iter().enumerate().rev() {
            let ci = model.bus_index(e.child);
            i_branch[k] = i_acc[ci];
            i_acc[model.bus_index(e.parent)] += i_branch[k];
        }
        // Forward sweep from the fixed slack voltage.
        let mut delta: f64 = 0.0;
        let mut v_new = vec![Complex64::new(1.0, 0.0); n];
        for (k, e) in order.iter().enumerate() {
            let pi = model.bus_index(e.parent);
            let ci = model.bus_index(e.child);
            v_new[ci] = v_new[pi] - z_pu[e.branch] * i_branch[k];
        }
        for i in 0..n {
            delta = delta.max((v_new[i] - v[i]).norm());
        }
        v = v_new;
        for (i, vi) in v.iter().enumerate() {
            let nv = vi.norm();
            if nv < COLLAPSE_V_PU || !nv.is_finite() {
                return Err(PowerFlowError::VoltageCollapse {
                    bus: i as BusId + 1,
                    v_pu: nv,
                });
            }
        }
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    // Flows and losses from the final state.
    for i in 0..n {
        i_acc[i] = (-s_pu[i] / v[i]).conj();
    }
    for (k, e) in order.iter().enumerate().rev() {
        let ci = model.bus_index(e.child);
        i_branch[k] = i_acc[ci];
        i_acc[model.bus_index(e.parent)] += i_branch[k];
    }
    let mut branch_p = vec![0.0; model.branches.len()];
    let mut branch_q = vec![0.0; model.branches.len()];
    let mut loss = Complex64::new(0.0, 0.0);
    for (k, e) in order.iter().enumerate() {
        let s_send = v[model.bus_index(e.parent)] * i_branch[k].conj() * s_base_kw;
        branch_p[e.branch] = s_send.re;
        branch_q[e.branch] = s_send.im;
        loss += z_pu[e.branch] * i_branch[k].norm_sqr() * s_base_kw;
    }
    debug_assert!(model
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.status == BranchStatus::Open)
        .all(|(i, _)| branch_p[i] == 0.0));
    let s_slack = v[0] * i_acc[0].conj() * s_base_kw;

    Ok(PowerFlowSolution {
        v_mag: v.iter().map(|c| c.norm()).collect(),
        v_ang_rad: v.iter().map(|c| c.arg()).collect(),
        branch_p_kw: branch_p,
        branch_q_kvar: branch_q,
        slack_p_kw: s_slack.re,
        slack_q_kvar: s_slack.im,
        loss_p_kw: loss.re,
        loss_q_kvar: loss.im,
        converged,
        iterations,
    })
}

/// Injections for the bundled case's historical nominal loading.
pub fn nominal_injections(model: &NetworkModel) -> InjectionSet {
    let mut inj = InjectionSet::for_model(model);
    for l in NetworkModel::default_nominal_loads() {
        inj.add_load(model, l.bus, l.p_kw, l.q_kvar);
    }
    inj
}
