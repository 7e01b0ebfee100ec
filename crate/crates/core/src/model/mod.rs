//! Sparse mixed-integer linear model container plus the variable registry
//! used by the planning-model builder.
//!
//! [`MipModel`] is solver-agnostic: plain columns with bounds, integrality
//! flags and objective coefficients, and rows stored as sparse terms with a
//! sense and right-hand side. [`builder`] assembles the two-stage
//! placement / repair / dispatch program into this container; `solve`
//! consumes it.

pub mod builder;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::network::{DerSpec, EdgeId, Feeder, NodeId};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no scenarios supplied")]
    NoScenarios,
    #[error("scenario {scenario} has {got} edges, feeder has {want}")]
    ScenarioEdgeMismatch {
        scenario: usize,
        got: usize,
        want: usize,
    },
    #[error("resource limits invalid: {0}")]
    InvalidLimits(String),
    #[error("allocation infeasible: {0}")]
    InfeasibleAllocation(String),
    #[error("variable {0} not registered")]
    UnregisteredVariable(String),
}

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl std::fmt::Display for Sense {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Column<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
    pub binary: bool,
    pub objective: T,
}

#[derive(Debug, Clone)]
pub struct Row<T> {
    pub name: String,
    /// Constraint family, for diagnostics ("droop", "flow_p_balance", ...).
    pub family: String,
    pub sense: Sense,
    pub rhs: T,
    /// Sparse terms, sorted by column index, one entry per column.
    pub terms: Vec<(usize, T)>,
}

/// Basic size statistics of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    pub rows: usize,
    pub cols: usize,
    pub binaries: usize,
    pub nonzeros: usize,
}

impl std::fmt::Display for ModelStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rows={} cols={} binaries={} nonzeros={}",
            self.rows, self.cols, self.binaries, self.nonzeros
        )
    }
}

/// Resource limits of the planning problem: DER budget `G`, repair crew
/// capacity `Y` per period, and the repair horizon `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceLimits {
    pub der_budget: usize,
    pub repairs_per_period: usize,
    pub horizon: usize,
}

impl ResourceLimits {
    pub fn new(
        der_budget: usize,
        repairs_per_period: usize,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        if repairs_per_period < 1 {
            return Err(ModelError::InvalidLimits(
                "repairs_per_period must be at least 1".into(),
            ));
        }
        if horizon < 1 {
            return Err(ModelError::InvalidLimits("horizon must be at least 1".into()));
        }
        Ok(Self {
            der_budget,
            repairs_per_period,
            horizon,
        })
    }
}

/// First-stage decision: which sites are developed and where each DER unit
/// is placed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub open_sites: BTreeSet<NodeId>,
    /// Placement of each DER unit, `None` when the unit stays unallocated.
    pub der_site: Vec<Option<NodeId>>,
}

impl Allocation {
    pub fn empty(der_count: usize) -> Self {
        Self {
            open_sites: BTreeSet::new(),
            der_site: vec![None; der_count],
        }
    }

    pub fn der_count_at(&self, site: NodeId) -> usize {
        self.der_site.iter().filter(|d| **d == Some(site)).count()
    }

    pub fn placed_count(&self) -> usize {
        self.der_site.iter().filter(|d| d.is_some()).count()
    }

    /// Check the placement rules: open sites hold at least one unit, units
    /// sit only on open candidate sites, and the budget `G` is respected.
    pub fn validate<T: Scalar>(
        &self,
        feeder: &Feeder<T>,
        der: &DerSpec<T>,
        der_budget: usize,
    ) -> Result<(), ModelError> {
        if self.der_site.len() != der.count {
            return Err(ModelError::InfeasibleAllocation(format!(
                "{} unit placements given, fleet has {}",
                self.der_site.len(),
                der.count
            )));
        }
        for site in &self.open_sites {
            if !feeder.is_site(*site) {
                return Err(ModelError::InfeasibleAllocation(format!(
                    "node {site} is not a candidate site"
                )));
            }
            if self.der_count_at(*site) == 0 {
                return Err(ModelError::InfeasibleAllocation(format!(
                    "site {site} is open but holds no DER unit"
                )));
            }
        }
        for (d, placed) in self.der_site.iter().enumerate() {
            if let Some(site) = placed {
                if !self.open_sites.contains(site) {
                    return Err(ModelError::InfeasibleAllocation(format!(
                        "unit {d} placed at {site}, which is not an open site"
                    )));
                }
            }
        }
        if self.placed_count() > der_budget {
            return Err(ModelError::InfeasibleAllocation(format!(
                "{} units placed, budget is {der_budget}",
                self.placed_count()
            )));
        }
        Ok(())
    }
}

/// One decision variable of the planning model. Stage-I variables carry no
/// scenario; stage-II variables are scoped per scenario in [`ScopedVar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    /// Site developed at a candidate node (`ysc`).
    SiteOpen { site: NodeId },
    /// DER unit `der` allocated at `site` (`ygc`).
    DerAssign { site: NodeId, der: usize },
    /// Line repaired during `period` (`yline`).
    Repair { edge: EdgeId, period: usize },
    /// Line still out of service at `period` (`kline`).
    Down { edge: EdgeId, period: usize },
    /// Load disconnected at `period` (`kcc`).
    Shed { node: NodeId, period: usize },
    /// DER real output (`pg`).
    GenP {
        site: NodeId,
        der: usize,
        period: usize,
    },
    /// DER reactive output (`qg`).
    GenQ {
        site: NodeId,
        der: usize,
        period: usize,
    },
    /// Served fraction of nominal demand (`lcc`).
    ServeFrac { node: NodeId, period: usize },
    /// Real / reactive power consumed (`pc`, `qc`).
    LoadP { node: NodeId, period: usize },
    LoadQ { node: NodeId, period: usize },
    /// Net real / reactive injection demanded from the network (`pt`, `qt`).
    NetP { node: NodeId, period: usize },
    NetQ { node: NodeId, period: usize },
    /// Real / reactive line flow (`P`, `Q`).
    FlowP { edge: EdgeId, period: usize },
    FlowQ { edge: EdgeId, period: usize },
    /// Squared voltage magnitude (`nu`).
    VoltSq { node: NodeId, period: usize },
}

impl Var {
    /// Exported variable name: family token plus bracketed indices, with
    /// the scenario index appended for stage-II variables.
    pub fn lp_name(&self, scenario: Option<usize>) -> String {
        let with_s = |head: String| match scenario {
            Some(s) => format!("{},{}]", &head[..head.len() - 1], s),
            None => head,
        };
        match *self {
            Var::SiteOpen { site } => format!("ysc[{site}]"),
            Var::DerAssign { site, der } => format!("ygc[{site},{der}]"),
            Var::Repair { edge, period } => with_s(format!("yline[{edge},{period}]")),
            Var::Down { edge, period } => with_s(format!("kline[{edge},{period}]")),
            Var::Shed { node, period } => with_s(format!("kcc[{node},{period}]")),
            Var::GenP { site, der, period } => with_s(format!("pg[{site},{der},{period}]")),
            Var::GenQ { site, der, period } => with_s(format!("qg[{site},{der},{period}]")),
            Var::ServeFrac { node, period } => with_s(format!("lcc[{node},{period}]")),
            Var::LoadP { node, period } => with_s(format!("pc[{node},{period}]")),
            Var::LoadQ { node, period } => with_s(format!("qc[{node},{period}]")),
            Var::NetP { node, period } => with_s(format!("pt[{node},{period}]")),
            Var::NetQ { node, period } => with_s(format!("qt[{node},{period}]")),
            Var::FlowP { edge, period } => with_s(format!("P[{edge},{period}]")),
            Var::FlowQ { edge, period } => with_s(format!("Q[{edge},{period}]")),
            Var::VoltSq { node, period } => with_s(format!("nu[{node},{period}]")),
        }
    }
}

/// A variable together with its scenario scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScopedVar {
    pub scenario: Option<usize>,
    pub var: Var,
}

impl ScopedVar {
    pub fn stage1(var: Var) -> Self {
        Self {
            scenario: None,
            var,
        }
    }

    pub fn stage2(scenario: usize, var: Var) -> Self {
        Self {
            scenario: Some(scenario),
            var,
        }
    }

    pub fn lp_name(&self) -> String {
        self.var.lp_name(self.scenario)
    }
}

/// Bijective map between planning variables and model columns.
#[derive(Debug, Clone, Default)]
pub struct VarRegistry {
    map: BTreeMap<ScopedVar, usize>,
}

impl VarRegistry {
    pub fn col(&self, v: ScopedVar) -> Result<usize, ModelError> {
        self.map
            .get(&v)
            .copied()
            .ok_or_else(|| ModelError::UnregisteredVariable(v.lp_name()))
    }

    pub fn get(&self, v: ScopedVar) -> Option<usize> {
        self.map.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ScopedVar, &usize)> {
        self.map.iter()
    }
}

/// Model-level metadata carried along for reporting.
#[derive(Debug, Clone, Default)]
pub struct ModelMeta {
    pub horizon: usize,
    pub der_budget: usize,
    pub repairs_per_period: usize,
    pub scenario_count: usize,
}

/// A sparse mixed-integer linear minimization model.
#[derive(Debug, Clone)]
pub struct MipModel<T> {
    pub cols: Vec<Column<T>>,
    pub rows: Vec<Row<T>>,
    /// Constant added to the objective value.
    pub objective_offset: T,
    /// Big-M constants actually used in rows, by name.
    pub big_m: Vec<(String, T)>,
    pub registry: VarRegistry,
    pub meta: ModelMeta,
    /// Non-fatal build diagnostics (e.g. a horizon too short to repair
    /// everything).
    pub warnings: Vec<String>,
}

impl<T: Scalar> Default for MipModel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MipModel<T> {
    pub fn new() -> Self {
        Self {
            cols: Vec::new(),
            rows: Vec::new(),
            objective_offset: T::zero(),
            big_m: Vec::new(),
            registry: VarRegistry::default(),
            meta: ModelMeta::default(),
            warnings: Vec::new(),
        }
    }

    pub fn add_column(
        &mut self,
        name: impl Into<String>,
        lower: T,
        upper: T,
        binary: bool,
        objective: T,
    ) -> usize {
        debug_assert!(lower <= upper, "column bounds must be ordered");
        self.cols.push(Column {
            name: name.into(),
            lower,
            upper,
            binary,
            objective,
        });
        self.cols.len() - 1
    }

    /// Register a planning variable as a new column.
    pub fn register(
        &mut self,
        v: ScopedVar,
        lower: T,
        upper: T,
        binary: bool,
        objective: T,
    ) -> usize {
        let col = self.add_column(v.lp_name(), lower, upper, binary, objective);
        let previous = self.registry.map.insert(v, col);
        debug_assert!(previous.is_none(), "variable registered twice");
        col
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        family: impl Into<String>,
        sense: Sense,
        rhs: T,
        terms: impl IntoIterator<Item = (usize, T)>,
    ) -> usize {
        let mut combined: BTreeMap<usize, T> = BTreeMap::new();
        for (col, coeff) in terms {
            debug_assert!(col < self.cols.len(), "row references unknown column");
            *combined.entry(col).or_insert_with(T::zero) += coeff;
        }
        combined.retain(|_, c| *c != T::zero());
        self.rows.push(Row {
            name: name.into(),
            family: family.into(),
            sense,
            rhs,
            terms: combined.into_iter().collect(),
        });
        self.rows.len() - 1
    }

    /// Pin a column to a fixed value.
    pub fn fix_column(&mut self, col: usize, value: T) {
        self.cols[col].lower = value;
        self.cols[col].upper = value;
    }

    pub fn record_big_m(&mut self, name: impl Into<String>, value: T) {
        self.big_m.push((name.into(), value));
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            rows: self.rows.len(),
            cols: self.cols.len(),
            binaries: self.cols.iter().filter(|c| c.binary).count(),
            nonzeros: self.rows.iter().map(|r| r.terms.len()).sum(),
        }
    }

    /// Objective value of a point, offset included.
    pub fn objective_value(&self, x: &[T]) -> T {
        self.cols
            .iter()
            .zip(x)
            .map(|(c, &v)| c.objective * v)
            .fold(self.objective_offset, |a, b| a + b)
    }

    /// Row activity `a'x`.
    pub fn row_activity(&self, row: &Row<T>, x: &[T]) -> T {
        row.terms
            .iter()
            .map(|&(col, coeff)| coeff * x[col])
            .fold(T::zero(), |a, b| a + b)
    }

    /// All constraint and bound violations of `x` beyond `tol`, as
    /// `(description, amount)` pairs.
    pub fn violations(&self, x: &[T], tol: T) -> Vec<(String, T)> {
        let mut out = Vec::new();
        for (j, c) in self.cols.iter().enumerate() {
            if x[j] < c.lower - tol {
                out.push((format!("bound {} >= {}", c.name, c.lower), c.lower - x[j]));
            }
            if x[j] > c.upper + tol {
                out.push((format!("bound {} <= {}", c.name, c.upper), x[j] - c.upper));
            }
        }
        for row in &self.rows {
            let activity = self.row_activity(row, x);
            let violation = match row.sense {
                Sense::Le => activity - row.rhs,
                Sense::Ge => row.rhs - activity,
                Sense::Eq => (activity - row.rhs).abs(),
            };
            if violation > tol {
                out.push((format!("row {} [{}]", row.name, row.family), violation));
            }
        }
        out
    }

    /// Largest violation, if any.
    pub fn max_violation(&self, x: &[T], tol: T) -> Option<(String, T)> {
        self.violations(x, tol)
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("violations comparable"))
    }
}
