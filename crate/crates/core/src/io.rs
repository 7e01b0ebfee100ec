//! On-disk formats: storm tracks, wind grids, feeders, scenario sets and
//! run configuration are TOML documents; tabular outputs are CSV with a
//! fixed column order and 12-significant-digit floats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::failure::FailureScenario;
use crate::geometry::Point2;
use crate::network::{DerSpec, Edge, Feeder, LoadSpec, NetworkError, NodeId, PerUnitBase};
use crate::wind::{CellId, Grid, GridCell, StormTrack, Waypoint, WindError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Wind(#[from] WindError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Format a float with 12 significant digits (diff-friendly CSV cells).
pub fn csv_num(v: f64) -> String {
    format!("{v:.11e}")
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = toml::to_string_pretty(value).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------- tracks

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackFile {
    pub t1: f64,
    pub t2: f64,
    pub vm_mps: f64,
    pub rm_km: f64,
    pub b: f64,
    pub waypoints: Vec<WaypointRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WaypointRow {
    pub t_h: f64,
    pub x_km: f64,
    pub y_km: f64,
}

pub fn load_track(path: &Path) -> Result<StormTrack<f64>, IoError> {
    let file: TrackFile = read_toml(path)?;
    let waypoints = file
        .waypoints
        .iter()
        .map(|w| Waypoint {
            t: w.t_h,
            pos: Point2::new(w.x_km, w.y_km),
        })
        .collect();
    Ok(StormTrack::new(
        waypoints,
        file.vm_mps,
        file.rm_km,
        file.b,
        file.t1,
        file.t2,
    )?)
}

pub fn save_track(path: &Path, track: &StormTrack<f64>) -> Result<(), IoError> {
    let file = TrackFile {
        t1: track.t1,
        t2: track.t2,
        vm_mps: track.vm,
        rm_km: track.rm,
        b: track.b,
        waypoints: track
            .waypoints()
            .iter()
            .map(|w| WaypointRow {
                t_h: w.t,
                x_km: w.pos.x,
                y_km: w.pos.y,
            })
            .collect(),
    };
    write_toml(path, &file)
}

// ------------------------------------------------------------------ grid

#[derive(Debug, Serialize, Deserialize)]
pub struct GridFile {
    pub side_km: f64,
    pub cells: Vec<CellRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellRow {
    pub h: i64,
    pub x_km: f64,
    pub y_km: f64,
}

pub fn load_grid(path: &Path) -> Result<Grid<f64>, IoError> {
    let file: GridFile = read_toml(path)?;
    let cells = file
        .cells
        .iter()
        .map(|c| GridCell {
            id: CellId(c.h),
            center: Point2::new(c.x_km, c.y_km),
        })
        .collect();
    Ok(Grid::new(file.side_km, cells)?)
}

pub fn save_grid(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    let file = GridFile {
        side_km: grid.side(),
        cells: grid
            .cells()
            .iter()
            .map(|c| CellRow {
                h: c.id.0,
                x_km: c.center.x,
                y_km: c.center.y,
            })
            .collect(),
    };
    write_toml(path, &file)
}

// ---------------------------------------------------------------- feeder

#[derive(Debug, Serialize, Deserialize)]
pub struct FeederFile {
    pub base: BaseSection,
    pub der: DerSection,
    #[serde(default = "default_substation")]
    pub substation: String,
    pub nodes: Vec<NodeRow>,
    pub edges: Vec<EdgeRow>,
}

fn default_substation() -> String {
    "0".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaseSection {
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    pub nu_nom: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DerSection {
    pub count: usize,
    pub pg_max: f64,
    pub pf_max: f64,
    pub kq: f64,
    pub nu_ref: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeRow {
    pub name: String,
    #[serde(default)]
    pub pc_max: f64,
    #[serde(default)]
    pub qc_max: f64,
    #[serde(default)]
    pub cost_shed: f64,
    #[serde(default)]
    pub cost_control: f64,
    #[serde(default)]
    pub lcc_min: f64,
    #[serde(default = "default_nu_min")]
    pub nu_min: f64,
    #[serde(default = "default_nu_max")]
    pub nu_max: f64,
    #[serde(default)]
    pub site: bool,
    #[serde(default)]
    pub cost_site: f64,
}

fn default_nu_min() -> f64 {
    0.95
}
fn default_nu_max() -> f64 {
    1.05
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EdgeRow {
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    pub polyline: Vec<[f64; 2]>,
}

/// Load and validate a feeder plus its DER fleet description.
pub fn load_feeder(path: &Path) -> Result<(Feeder<f64>, DerSpec<f64>), IoError> {
    let file: FeederFile = read_toml(path)?;
    feeder_from_file(&file).map_err(|message| IoError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

fn feeder_from_file(file: &FeederFile) -> Result<(Feeder<f64>, DerSpec<f64>), String> {
    let mut names: Vec<String> = Vec::with_capacity(file.nodes.len() + 1);
    names.push(file.substation.clone());
    for n in &file.nodes {
        if n.name != file.substation {
            names.push(n.name.clone());
        }
    }
    let index = |name: &str| -> Result<NodeId, String> {
        names
            .iter()
            .position(|n| n == name)
            .map(NodeId)
            .ok_or_else(|| format!("unknown node {name:?} referenced by an edge"))
    };
    let mut loads = vec![
        LoadSpec {
            pc_max: 0.0,
            qc_max: 0.0,
            cost_shed: 0.0,
            cost_control: 0.0,
            lcc_min: 0.0,
            nu_min: default_nu_min(),
            nu_max: default_nu_max(),
        };
        names.len()
    ];
    let mut site_cost = BTreeMap::new();
    for n in &file.nodes {
        if n.name == file.substation {
            continue;
        }
        let id = index(&n.name)?;
        loads[id.0] = LoadSpec {
            pc_max: n.pc_max,
            qc_max: n.qc_max,
            cost_shed: n.cost_shed,
            cost_control: n.cost_control,
            lcc_min: n.lcc_min,
            nu_min: n.nu_min,
            nu_max: n.nu_max,
        };
        if n.site {
            site_cost.insert(id, n.cost_site);
        }
    }
    let mut edges = Vec::with_capacity(file.edges.len());
    for e in &file.edges {
        edges.push(Edge {
            from: index(&e.from)?,
            to: index(&e.to)?,
            r: e.r,
            x: e.x,
            polyline: e.polyline.iter().map(|p| Point2::new(p[0], p[1])).collect(),
        });
    }
    let feeder = Feeder::new(
        names,
        edges,
        loads,
        site_cost,
        file.base.nu_nom,
        PerUnitBase {
            s_base_mva: file.base.s_base_mva,
            v_base_kv: file.base.v_base_kv,
        },
    )
    .map_err(|e| e.to_string())?;
    let der = DerSpec {
        count: file.der.count,
        pg_max: file.der.pg_max,
        pf_max: file.der.pf_max,
        kq: file.der.kq,
        nu_ref: file.der.nu_ref,
    };
    Ok((feeder, der))
}

pub fn save_feeder(path: &Path, feeder: &Feeder<f64>, der: &DerSpec<f64>) -> Result<(), IoError> {
    let site_costs: BTreeMap<NodeId, f64> = feeder.sites().collect();
    let file = FeederFile {
        base: BaseSection {
            s_base_mva: feeder.base.s_base_mva,
            v_base_kv: feeder.base.v_base_kv,
            nu_nom: feeder.nu_nom,
        },
        der: DerSection {
            count: der.count,
            pg_max: der.pg_max,
            pf_max: der.pf_max,
            kq: der.kq,
            nu_ref: der.nu_ref,
        },
        substation: feeder.node_names()[0].clone(),
        nodes: (1..feeder.node_count())
            .map(|i| {
                let id = NodeId(i);
                let l = feeder.load(id);
                NodeRow {
                    name: feeder.node_names()[i].clone(),
                    pc_max: l.pc_max,
                    qc_max: l.qc_max,
                    cost_shed: l.cost_shed,
                    cost_control: l.cost_control,
                    lcc_min: l.lcc_min,
                    nu_min: l.nu_min,
                    nu_max: l.nu_max,
                    site: site_costs.contains_key(&id),
                    cost_site: site_costs.get(&id).copied().unwrap_or(0.0),
                }
            })
            .collect(),
        edges: feeder
            .edges()
            .iter()
            .map(|e| EdgeRow {
                from: feeder.node_names()[e.from.0].clone(),
                to: feeder.node_names()[e.to.0].clone(),
                r: e.r,
                x: e.x,
                polyline: e.polyline.iter().map(|p| [p.x, p.y]).collect(),
            })
            .collect(),
    };
    write_toml(path, &file)
}

// ------------------------------------------------------------- scenarios

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioSetFile {
    pub master_seed: u64,
    /// Failure probability per edge, edge order of the feeder file.
    pub edge_probabilities: Vec<f64>,
    pub scenarios: Vec<ScenarioRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioRow {
    /// Failure bits as a 0/1 string, edge order of the feeder file.
    pub bits: String,
    pub prob: f64,
}

pub fn save_scenario_set(
    path: &Path,
    master_seed: u64,
    edge_probabilities: &[f64],
    scenarios: &[FailureScenario<f64>],
) -> Result<(), IoError> {
    let file = ScenarioSetFile {
        master_seed,
        edge_probabilities: edge_probabilities.to_vec(),
        scenarios: scenarios
            .iter()
            .map(|s| ScenarioRow {
                bits: s
                    .failed
                    .iter()
                    .map(|&f| if f { '1' } else { '0' })
                    .collect(),
                prob: s.prob,
            })
            .collect(),
    };
    write_toml(path, &file)
}

pub fn load_scenario_set(
    path: &Path,
) -> Result<(u64, Vec<f64>, Vec<FailureScenario<f64>>), IoError> {
    let file: ScenarioSetFile = read_toml(path)?;
    let mut scenarios = Vec::with_capacity(file.scenarios.len());
    for row in &file.scenarios {
        let failed: Vec<bool> = row
            .bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(IoError::Parse {
                    path: path.to_path_buf(),
                    message: format!("scenario bit {other:?} is not 0/1"),
                }),
            })
            .collect::<Result<_, _>>()?;
        scenarios.push(FailureScenario {
            failed,
            prob: row.prob,
        });
    }
    Ok((file.master_seed, file.edge_probabilities, scenarios))
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub feeder: String,
    pub track: String,
    pub grid: String,
    #[serde(default)]
    pub nhpp: Option<NhppSection>,
    pub limits: LimitsSection,
    pub sampling: SamplingSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Resolve the first stage per scenario instead of once (study-style
    /// metric variant).
    #[serde(default)]
    pub per_scenario_allocation: bool,
}

fn default_out_dir() -> String {
    "out".to_string()
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NhppSection {
    pub alpha: f64,
    pub v_crit: f64,
    pub lambda_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitsSection {
    pub der_budget: usize,
    pub repairs_per_period: usize,
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingSection {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_top")]
    pub top: usize,
    #[serde(default = "default_subset")]
    pub subset_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_samples() -> usize {
    1000
}
fn default_top() -> usize {
    100
}
fn default_subset() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default = "default_int_tol")]
    pub int_tol: f64,
    #[serde(default = "default_rel_gap")]
    pub rel_gap: f64,
    #[serde(default)]
    pub node_limit: Option<u64>,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            int_tol: default_int_tol(),
            rel_gap: default_rel_gap(),
            node_limit: None,
            time_limit_s: None,
        }
    }
}

fn default_int_tol() -> f64 {
    1e-6
}
fn default_rel_gap() -> f64 {
    1e-6
}

pub fn load_config(path: &Path) -> Result<RunConfigFile, IoError> {
    read_toml(path)
}
