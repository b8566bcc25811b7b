//! Feeder topology: buses, branches, PV placements, and the radial order
//! consumed by the sweep solver.
//!
//! The bundled default case is the 12.66 kV 69-bus feeder with 73 branches
//! (tie branches 69-73 normally open) and four PV plants at buses 25, 32,
//! 45 and 62.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BusId = u32;

/// Default system base for per-unit conversion.
pub const DEFAULT_BASE_MVA: f64 = 10.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("no buses defined")]
    Empty,
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("bus ids must be contiguous 1..=n, missing id {0}")]
    NonContiguousIds(BusId),
    #[error("expected exactly one substation at bus 1, found {0}")]
    BadSubstation(String),
    #[error("branch {branch} references unknown bus {bus}")]
    DanglingEndpoint { branch: u32, bus: BusId },
    #[error("duplicate branch id {0}")]
    DuplicateBranch(u32),
    #[error("branch {branch} has negative impedance")]
    NegativeImpedance { branch: u32 },
    #[error("buses declare differing base_kv values")]
    MixedBaseKv,
    #[error("closed branches do not form a spanning tree: {0}")]
    NotRadial(String),
    #[error("pv placement at bus {0} which is not a pv bus")]
    PlacementNotPvBus(BusId),
    #[error("pv placement at bus {0} has non-positive rating")]
    NonPositiveRating(BusId),
    #[error("duplicate pv placement at bus {0}")]
    DuplicatePlacement(BusId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Substation,
    Load,
    Pv,
    /// Zero-injection junction bus.
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    pub base_kv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: u32,
    pub from: BusId,
    pub to: BusId,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub status: BranchStatus,
}

/// A PV plant location with its nameplate active-power rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvPlacement {
    pub bus: BusId,
    pub p_rated_kw: f64,
}

/// Nominal per-bus loading used only for solver validation against the
/// historical case, not for telemetry synthesis.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct NominalLoad {
    pub bus: BusId,
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// One tree edge in sweep order: parents always precede children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadialEdge {
    /// Index into `NetworkModel::branches`.
    pub branch: usize,
    pub parent: BusId,
    pub child: BusId,
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    /// Sorted by id; ids are contiguous 1..=n.
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub base_kv: f64,
    pub base_mva: f64,
}

impl NetworkModel {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Zero-based vector index of a bus id.
    pub fn bus_index(&self, id: BusId) -> usize {
        debug_assert!(id >= 1 && id as usize <= self.buses.len());
        (id - 1) as usize
    }

    pub fn bus(&self, id: BusId) -> &Bus {
        &self.buses[self.bus_index(id)]
    }

    /// Ids of buses that carry consumer load, ascending.
    pub fn load_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Load)
            .map(|b| b.id)
            .collect()
    }

    pub fn pv_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Pv)
            .map(|b| b.id)
            .collect()
    }

    /// Load a network from bus and branch CSV files
    /// (`id,kind,base_kv` / `id,from,to,r_ohm,x_ohm,status`).
    pub fn load(bus_path: &Path, branch_path: &Path) -> Result<Self, GridError> {
        let open = |p: &Path| {
            File::open(p).map_err(|source| GridError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        Self::from_readers(
            open(bus_path)?,
            open(branch_path)?,
            &bus_path.display().to_string(),
            &branch_path.display().to_string(),
        )
    }

    pub fn from_readers<R1: Read, R2: Read>(
        buses: R1,
        branches: R2,
        bus_label: &str,
        branch_label: &str,
    ) -> Result<Self, GridError> {
        let mut bus_rows: Vec<Bus> = Vec::new();
        for rec in csv::Reader::from_reader(buses).deserialize() {
            bus_rows.push(rec.map_err(|source| GridError::Csv {
                path: bus_label.into(),
                source,
            })?);
        }
        let mut branch_rows: Vec<Branch> = Vec::new();
        for rec in csv::Reader::from_reader(branches).deserialize() {
            branch_rows.push(rec.map_err(|source| GridError::Csv {
                path: branch_label.into(),
                source,
            })?);
        }
        Self::new(bus_rows, branch_rows, DEFAULT_BASE_MVA)
    }

    /// Build and validate a model from in-memory rows.
    pub fn new(
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
        base_mva: f64,
    ) -> Result<Self, GridError> {
        if buses.is_empty() {
            return Err(GridError::Empty);
        }
        buses.sort_by_key(|b| b.id);
        let base_kv = buses[0].base_kv;
        let model = NetworkModel {
            buses,
            branches,
            base_kv,
            base_mva,
        };
        model.validate()?;
        Ok(model)
    }

    /// The bundled 69-bus case with its PV placements.
    pub fn default_case() -> (Self, Vec<PvPlacement>) {
        let model = Self::from_readers(
            include_str!("../data/bw69_buses.csv").as_bytes(),
            include_str!("../data/bw69_branches.csv").as_bytes(),
            "bw69_buses.csv",
            "bw69_branches.csv",
        )
        .expect("bundled case is valid");
        let pvs = load_pv_placements_from(
            include_str!("../data/bw69_pv.csv").as_bytes(),
            "bw69_pv.csv",
            &model,
        )
        .expect("bundled placements are valid");
        (model, pvs)
    }

    /// Nominal loading of the bundled case (historical data, kW/kvar).
    pub fn default_nominal_loads() -> Vec<NominalLoad> {
        csv::Reader::from_reader(include_str!("../data/bw69_nominal_load.csv").as_bytes())
            .deserialize()
            .collect::<Result<Vec<_>, _>>()
            .expect("bundled nominal loads are valid")
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let n = self.buses.len();
        let mut seen = HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(GridError::DuplicateBus(b.id));
            }
        }
        for id in 1..=n as BusId {
            if !seen.contains(&id) {
                return Err(GridError::NonContiguousIds(id));
            }
        }
        let subs: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Substation)
            .map(|b| b.id)
            .collect();
        if subs != [1] {
            return Err(GridError::BadSubstation(format!("{subs:?}")));
        }
        if self.buses.iter().any(|b| b.base_kv != self.base_kv) {
            return Err(GridError::MixedBaseKv);
        }
        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return Err(GridError::DuplicateBranch(br.id));
            }
            for bus in [br.from, br.to] {
                if !seen.contains(&bus) {
                    return Err(GridError::DanglingEndpoint {
                        branch: br.id,
                        bus,
                    });
                }
            }
            if br.r_ohm < 0.0 || br.x_ohm < 0.0 {
                return Err(GridError::NegativeImpedance { branch: br.id });
            }
        }
        let closed = self
            .branches
            .iter()
            .filter(|b| b.status == BranchStatus::Closed)
            .count();
        if closed != n - 1 {
            return Err(GridError::NotRadial(format!(
                "{closed} closed branches for {n} buses"
            )));
        }
        self.radial_order().map(|_| ())
    }

    /// Breadth-first tree order over closed branches, rooted at bus 1.
    ///
    /// Fails if the closed subgraph contains a cycle or leaves buses
    /// unreachable. With exactly n-1 closed branches those two defects
    /// coincide, so the reachability check catches both.
    pub fn radial_order(&self) -> Result<Vec<RadialEdge>, GridError> {
        let n = self.n_buses();
        let closed = self
            .branches
            .iter()
            .filter(|b| b.status == BranchStatus::Closed)
            .count();
        if closed != n - 1 {
            return Err(GridError::NotRadial(format!(
                "{closed} closed branches for {n} buses"
            )));
        }
        // Adjacency over closed branches only.
        let mut adj: Vec<Vec<(usize, BusId)>> = vec![Vec::new(); n];
        for (i, br) in self.branches.iter().enumerate() {
            if br.status == BranchStatus::Closed {
                adj[self.bus_index(br.from)].push((i, br.to));
                adj[self.bus_index(br.to)].push((i, br.from));
            }
        }
        let mut visited = vec![false; n];
        visited[0] = true;
        let mut order = Vec::with_capacity(n - 1);
        let mut queue = std::collections::VecDeque::from([1 as BusId]);
        while let Some(parent) = queue.pop_front() {
            for &(branch, child) in &adj[self.bus_index(parent)] {
                let ci = self.bus_index(child);
                if visited[ci] {
                    continue;
                }
                visited[ci] = true;
                order.push(RadialEdge {
                    branch,
                    parent,
                    child,
                });
                queue.push_back(child);
            }
        }
        if order.len() != n - 1 {
            let unreachable: Vec<BusId> = (0..n)
                .filter(|&i| !visited[i])
                .map(|i| i as BusId + 1)
                .collect();
            return Err(GridError::NotRadial(format!(
                "buses unreachable from substation: {unreachable:?}"
            )));
        }
        Ok(order)
    }

    /// Write the model back out in the same CSV schemas it is loaded from.
    pub fn write_csvs(&self, bus_path: &Path, branch_path: &Path) -> Result<(), GridError> {
        let io_err = |p: &Path, source| GridError::Io {
            path: p.display().to_string(),
            source,
        };
        let mut bw = csv::Writer::from_writer(
            File::create(bus_path).map_err(|e| io_err(bus_path, e))?,
        );
        for b in &self.buses {
            bw.serialize(b).map_err(|source| GridError::Csv {
                path: bus_path.display().to_string(),
                source,
            })?;
        }
        bw.flush().map_err(|e| io_err(bus_path, e))?;
        let mut rw = csv::Writer::from_writer(
            File::create(branch_path).map_err(|e| io_err(branch_path, e))?,
        );
        for br in &self.branches {
            rw.serialize(br).map_err(|source| GridError::Csv {
                path: branch_path.display().to_string(),
                source,
            })?;
        }
        rw.flush().map_err(|e| io_err(branch_path, e))?;
        Ok(())
    }
}

/// Load PV placements (`bus,p_rated_kw`) and validate them against the model.
pub fn load_pv_placements(path: &Path, model: &NetworkModel) -> Result<Vec<PvPlacement>, GridError> {
    let file = File::open(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_pv_placements_from(file, &path.display().to_string(), model)
}

pub fn load_pv_placements_from<R: Read>(
    reader: R,
    label: &str,
    model: &NetworkModel,
) -> Result<Vec<PvPlacement>, GridError> {
    let mut out: Vec<PvPlacement> = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        let p: PvPlacement = rec.map_err(|source| GridError::Csv {
            path: label.into(),
            source,
        })?;
        out.push(p);
    }
    let mut seen = HashSet::new();
    for p in &out {
        if p.bus < 1 || p.bus as usize > model.n_buses() {
            return Err(GridError::DanglingEndpoint { branch: 0, bus: p.bus });
        }
        if model.bus(p.bus).kind != BusKind::Pv {
            return Err(GridError::PlacementNotPvBus(p.bus));
        }
        if p.p_rated_kw <= 0.0 {
            return Err(GridError::NonPositiveRating(p.bus));
        }
        if !seen.insert(p.bus) {
            return Err(GridError::DuplicatePlacement(p.bus));
        }
    }
    Ok(out)
}

/// Write PV placements in the `bus,p_rated_kw` schema.
pub fn write_pv_placements(path: &Path, placements: &[PvPlacement]) -> Result<(), GridError> {
    let file = File::create(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    for p in placements {
        w.serialize(p).map_err(|source| GridError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    }
    w.flush().map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Short human summary used by the CLI.
pub fn summarize(model: &NetworkModel, placements: &[PvPlacement]) -> String {
    let closed = model
        .branches
        .iter()
        .filter(|b| b.status == BranchStatus::Closed)
        .count();
    let mut s = String::new();
    s.push_str(&format!(
        "buses: {} ({} load, {} pv), base {} kV / {} MVA\n",
        model.n_buses(),
        model.load_buses().len(),
        model.pv_buses().len(),
        model.base_kv,
        model.base_mva,
    ));
    s.push_str(&format!(
        "branches: {} ({} closed, {} open)\n",
        model.branches.len(),
        closed,
        model.branches.len() - closed
    ));
    for p in placements {
        s.push_str(&format!("pv at bus {}: {} kW\n", p.bus, p.p_rated_kw));
    }
    s
}
