//! Radial feeder model: nodes, directed lines, loads, candidate DER sites,
//! line geometry over the wind grid, and island decompositions.
//!
//! The feeder is a tree rooted at the substation (node index 0), with every
//! line directed away from the root. Powers, impedances and voltages are in
//! per-unit on a single (S_base, V_base) pair; `nu` denotes squared voltage
//! magnitude.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geometry::{polyline_length, Point2};
use crate::scalar::Scalar;
use crate::wind::{Grid, WindError};

/// Node index into [`Feeder::node_names`]; index 0 is the substation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Line index into [`Feeder::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("feeder invalid:\n{}", .0.join("\n"))]
    InvalidFeeder(Vec<String>),
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
    #[error("unknown node name {0:?}")]
    UnknownNode(String),
    #[error("line geometry leaves the grid at ({x}, {y}) km")]
    GeometryOutOfGrid { x: f64, y: f64 },
    #[error(transparent)]
    Wind(#[from] WindError),
}

/// A distribution line from `from` to `to` (directed away from the root).
#[derive(Debug, Clone)]
pub struct Edge<T> {
    pub from: NodeId,
    pub to: NodeId,
    /// Resistance, p.u.
    pub r: T,
    /// Reactance, p.u.
    pub x: T,
    /// Physical route of the line in planar km, at least two vertices.
    pub polyline: Vec<Point2<T>>,
}

impl<T: Scalar> Edge<T> {
    pub fn length_km(&self) -> T {
        polyline_length(&self.polyline)
    }
}

/// Per-node load data and shedding economics. Nodes without load carry
/// zeros everywhere and never contribute cost.
#[derive(Debug, Clone, Copy)]
pub struct LoadSpec<T> {
    /// Nominal real demand, p.u.
    pub pc_max: T,
    /// Nominal reactive demand, p.u.
    pub qc_max: T,
    /// Cost of shedding the load for one period, $.
    pub cost_shed: T,
    /// Cost of fully curtailing the load for one period, $.
    pub cost_control: T,
    /// Minimum served fraction while connected.
    pub lcc_min: T,
    /// Safe squared-voltage window for the load, p.u.
    pub nu_min: T,
    pub nu_max: T,
}

/// Homogeneous DER fleet description.
#[derive(Debug, Clone, Copy)]
pub struct DerSpec<T> {
    /// Number of units available for allocation.
    pub count: usize,
    /// Real-power rating per unit, p.u.
    pub pg_max: T,
    /// tan(acos(power factor)): reactive capability per unit of real output.
    pub pf_max: T,
    /// Voltage droop coefficient, p.u./p.u.
    pub kq: T,
    /// Idle terminal squared-voltage setpoint, p.u.
    pub nu_ref: T,
}

/// Global per-unit base declared by the feeder file.
#[derive(Debug, Clone, Copy)]
pub struct PerUnitBase<T> {
    pub s_base_mva: T,
    pub v_base_kv: T,
}

/// A validated radial feeder.
///
/// Construct through [`Feeder::new`], which checks every structural
/// invariant and reports all violations at once.
#[derive(Debug, Clone)]
pub struct Feeder<T> {
    node_names: Vec<String>,
    edges: Vec<Edge<T>>,
    loads: Vec<LoadSpec<T>>,
    /// Site-development cost for candidate DER nodes.
    site_cost: BTreeMap<NodeId, T>,
    /// Substation nominal squared voltage, p.u.
    pub nu_nom: T,
    pub base: PerUnitBase<T>,
}

impl<T: Scalar> Feeder<T> {
    /// Validate and build a feeder. `node_names[0]` is the substation; the
    /// substation's `LoadSpec` entry is ignored and stored as zeros.
    pub fn new(
        node_names: Vec<String>,
        edges: Vec<Edge<T>>,
        mut loads: Vec<LoadSpec<T>>,
        site_cost: BTreeMap<NodeId, T>,
        nu_nom: T,
        base: PerUnitBase<T>,
    ) -> Result<Self, NetworkError> {
        let mut problems = Vec::new();
        let n = node_names.len();
        if n < 2 {
            problems.push(format!("feeder needs a substation plus at least one node, got {n}"));
        }
        if loads.len() != n {
            problems.push(format!(
                "expected one load spec per node ({n}), got {}",
                loads.len()
            ));
        }
        for (i, e) in edges.iter().enumerate() {
            if e.from.0 >= n || e.to.0 >= n {
                problems.push(format!("edge {i} references nodes outside 0..{n}"));
            }
            if e.to.0 == 0 {
                problems.push(format!("edge {i} is directed into the substation"));
            }
            if e.r <= T::zero() || e.x <= T::zero() {
                problems.push(format!(
                    "edge {i} must have positive impedance, got r={} x={}",
                    e.r, e.x
                ));
            }
            if e.polyline.len() < 2 {
                problems.push(format!("edge {i} needs a polyline with >= 2 vertices"));
            }
        }
        let root_edges = edges.iter().filter(|e| e.from.0 == 0).count();
        if root_edges != 1 {
            problems.push(format!(
                "exactly one edge must leave the substation, found {root_edges}"
            ));
        }
        // Tree check: every non-root node has exactly one incoming edge and
        // is reachable from the root along edge directions.
        let mut indegree = vec![0usize; n];
        for e in &edges {
            if e.to.0 < n {
                indegree[e.to.0] += 1;
            }
        }
        for (i, &d) in indegree.iter().enumerate().skip(1) {
            if d == 0 {
                problems.push(format!("node {} ({}) is disconnected", i, node_names[i]));
            } else if d > 1 {
                problems.push(format!(
                    "node {} ({}) has {} parents; the feeder must be a tree",
                    i, node_names[i], d
                ));
            }
        }
        if indegree[0] > 0 {
            // already reported per edge; nothing extra
        }
        let mut reached = vec![false; n];
        reached[0] = true;
        let mut stack = vec![0usize];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &edges {
            if e.from.0 < n && e.to.0 < n {
                children[e.from.0].push(e.to.0);
            }
        }
        while let Some(i) = stack.pop() {
            for &c in &children[i] {
                if !reached[c] {
                    reached[c] = true;
                    stack.push(c);
                }
            }
        }
        for i in 1..n {
            if !reached[i] && indegree[i] > 0 {
                problems.push(format!(
                    "node {} ({}) is not reachable from the substation (cycle)",
                    i, node_names[i]
                ));
            }
        }
        for (i, l) in loads.iter().enumerate().skip(1) {
            if l.lcc_min < T::zero() || l.lcc_min > T::one() {
                problems.push(format!("node {i} lcc_min {} outside [0, 1]", l.lcc_min));
            }
            if !(l.nu_min < nu_nom && nu_nom < l.nu_max) {
                problems.push(format!(
                    "node {i} voltage window [{}, {}] must strictly contain nu_nom {}",
                    l.nu_min, l.nu_max, nu_nom
                ));
            }
        }
        for node in site_cost.keys() {
            if node.0 == 0 || node.0 >= n {
                problems.push(format!("candidate site {} is not a feeder node", node.0));
            }
        }
        if !problems.is_empty() {
            return Err(NetworkError::InvalidFeeder(problems));
        }
        if let Some(l0) = loads.get_mut(0) {
            *l0 = LoadSpec {
                pc_max: T::zero(),
                qc_max: T::zero(),
                cost_shed: T::zero(),
                cost_control: T::zero(),
                lcc_min: T::zero(),
                nu_min: l0.nu_min,
                nu_max: l0.nu_max,
            };
        }
        Ok(Self {
            node_names,
            edges,
            loads,
            site_cost,
            nu_nom,
            base,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    /// Number of non-substation nodes.
    pub fn demand_node_count(&self) -> usize {
        self.node_names.len() - 1
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId, NetworkError> {
        self.node_names
            .iter()
            .position(|n| n == name)
            .map(NodeId)
            .ok_or_else(|| NetworkError::UnknownNode(name.to_string()))
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> Result<&Edge<T>, NetworkError> {
        self.edges.get(e.0).ok_or(NetworkError::UnknownEdge(e.0))
    }

    pub fn loads(&self) -> &[LoadSpec<T>] {
        &self.loads
    }

    pub fn load(&self, i: NodeId) -> &LoadSpec<T> {
        &self.loads[i.0]
    }

    /// Candidate DER sites with their development costs, ascending by node.
    pub fn sites(&self) -> impl Iterator<Item = (NodeId, T)> + '_ {
        self.site_cost.iter().map(|(&i, &c)| (i, c))
    }

    pub fn site_count(&self) -> usize {
        self.site_cost.len()
    }

    pub fn is_site(&self, i: NodeId) -> bool {
        self.site_cost.contains_key(&i)
    }

    /// The unique edge leaving the substation.
    pub fn substation_edge(&self) -> EdgeId {
        EdgeId(
            self.edges
                .iter()
                .position(|e| e.from.0 == 0)
                .expect("validated feeder has a substation edge"),
        )
    }

    /// Edges whose from-node is `i`.
    pub fn edges_from(&self, i: NodeId) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.from == i)
            .map(|(idx, _)| EdgeId(idx))
    }

    /// Connected components after removing `failed` edges and the
    /// substation edge; the substation's own component is excluded.
    pub fn islands(&self, failed: &BTreeSet<EdgeId>) -> Result<Vec<BTreeSet<NodeId>>, NetworkError> {
        for e in failed {
            if e.0 >= self.edges.len() {
                return Err(NetworkError::UnknownEdge(e.0));
            }
        }
        let n = self.node_count();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        let substation = self.substation_edge();
        for (idx, e) in self.edges.iter().enumerate() {
            let id = EdgeId(idx);
            if failed.contains(&id) || id == substation {
                continue;
            }
            adjacency[e.from.0].push(e.to.0);
            adjacency[e.to.0].push(e.from.0);
        }
        let mut component = vec![usize::MAX; n];
        let mut next = 0usize;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            component[start] = next;
            while let Some(i) = stack.pop() {
                for &j in &adjacency[i] {
                    if component[j] == usize::MAX {
                        component[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        let substation_component = component[0];
        let mut islands: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
        for (i, &c) in component.iter().enumerate() {
            if c != substation_component {
                islands.entry(c).or_default().insert(NodeId(i));
            }
        }
        Ok(islands.into_values().collect())
    }

    /// Length of each edge inside each grid cell, km.
    ///
    /// Splits every polyline segment at all cell-boundary crossings and
    /// attributes each piece to the cell containing its midpoint (first
    /// listed cell on ties). Errors if any piece falls outside the grid.
    pub fn line_cell_lengths(
        &self,
        e: EdgeId,
        grid: &Grid<T>,
    ) -> Result<BTreeMap<crate::wind::CellId, T>, NetworkError> {
        let edge = self.edge(e)?;
        let mut lengths: BTreeMap<crate::wind::CellId, T> = BTreeMap::new();
        for seg in edge.polyline.windows(2) {
            segment_cell_lengths(seg[0], seg[1], grid, &mut lengths)?;
        }
        Ok(lengths)
    }

    /// [`Feeder::line_cell_lengths`] for every edge, in edge order.
    pub fn all_line_cell_lengths(
        &self,
        grid: &Grid<T>,
    ) -> Result<Vec<BTreeMap<crate::wind::CellId, T>>, NetworkError> {
        (0..self.edges.len())
            .map(|i| self.line_cell_lengths(EdgeId(i), grid))
            .collect()
    }
}

fn segment_cell_lengths<T: Scalar>(
    a: Point2<T>,
    b: Point2<T>,
    grid: &Grid<T>,
    lengths: &mut BTreeMap<crate::wind::CellId, T>,
) -> Result<(), NetworkError> {
    let seg_len = a.distance(&b);
    if seg_len == T::zero() {
        return Ok(());
    }
    // Collect parameters where the segment crosses any cell boundary line.
    let mut cuts: Vec<T> = vec![T::zero(), T::one()];
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    for cell in grid.cells() {
        let (x0, x1, y0, y1) = grid.cell_bounds(cell);
        if dx != T::zero() {
            for bound in [x0, x1] {
                let t = (bound - a.x) / dx;
                if t > T::zero() && t < T::one() {
                    cuts.push(t);
                }
            }
        }
        if dy != T::zero() {
            for bound in [y0, y1] {
                let t = (bound - a.y) / dy;
                if t > T::zero() && t < T::one() {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).expect("finite cut parameters"));
    cuts.dedup();
    for w in cuts.windows(2) {
        let piece = (w[1] - w[0]) * seg_len;
        if piece <= T::zero() {
            continue;
        }
        let mid = a.lerp(&b, (w[0] + w[1]) / T::c(2.0));
        let cell = grid
            .locate(mid)
            .ok_or_else(|| NetworkError::GeometryOutOfGrid {
                x: mid.x.f64(),
                y: mid.y.f64(),
            })?;
        *lengths.entry(cell.id).or_insert(T::zero()) += piece;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wind::{CellId, GridCell};
    use approx::assert_relative_eq;

    fn straight(ax: f64, ay: f64, bx: f64, by: f64) -> Vec<Point2<f64>> {
        vec![Point2::new(ax, ay), Point2::new(bx, by)]
    }

    fn load() -> LoadSpec<f64> {
        LoadSpec {
            pc_max: 0.2,
            qc_max: 0.1,
            cost_shed: 1000.0,
            cost_control: 100.0,
            lcc_min: 0.5,
            nu_min: 0.95,
            nu_max: 1.05,
        }
    }

    fn chain(n: usize) -> Feeder<f64> {
        let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let edges: Vec<Edge<f64>> = (1..n)
            .map(|i| Edge {
                from: NodeId(i - 1),
                to: NodeId(i),
                r: 0.01,
                x: 0.02,
                polyline: straight((i - 1) as f64, 0.0, i as f64, 0.0),
            })
            .collect();
        Feeder::new(
            names,
            edges,
            vec![load(); n],
            BTreeMap::new(),
            1.0,
            PerUnitBase {
                s_base_mva: 1.0,
                v_base_kv: 4.16,
            },
        )
        .unwrap()
    }

    fn twelve_node() -> Feeder<f64> {
        crate::cases::twelve_node_feeder()
    }

    #[test]
    fn two_node_chain_is_valid() {
        let f = chain(2);
        assert_eq!(f.substation_edge(), EdgeId(0));
        assert_eq!(f.demand_node_count(), 1);
    }

    #[test]
    fn cycle_is_rejected() {
        let names = vec!["0".into(), "A".into(), "B".into()];
        let edges = vec![
            Edge {
                from: NodeId(0),
                to: NodeId(1),
                r: 0.01,
                x: 0.01,
                polyline: straight(0.0, 0.0, 1.0, 0.0),
            },
            Edge {
                from: NodeId(1),
                to: NodeId(2),
                r: 0.01,
                x: 0.01,
                polyline: straight(1.0, 0.0, 2.0, 0.0),
            },
            Edge {
                from: NodeId(2),
                to: NodeId(1),
                r: 0.01,
                x: 0.01,
                polyline: straight(2.0, 0.0, 1.0, 0.0),
            },
        ];
        let err = Feeder::new(
            names,
            edges,
            vec![load(); 3],
            BTreeMap::new(),
            1.0,
            PerUnitBase {
                s_base_mva: 1.0,
                v_base_kv: 4.16,
            },
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parents"), "cycle should be reported: {msg}");
    }

    #[test]
    fn validation_reports_all_violations() {
        let names = vec!["0".into(), "A".into(), "B".into()];
        let edges = vec![
            Edge {
                from: NodeId(0),
                to: NodeId(1),
                r: -1.0,
                x: 0.01,
                polyline: straight(0.0, 0.0, 1.0, 0.0),
            },
            // B disconnected; no edge to it
        ];
        let err = Feeder::new(
            names,
            edges,
            vec![load(); 3],
            BTreeMap::new(),
            1.0,
            PerUnitBase {
                s_base_mva: 1.0,
                v_base_kv: 4.16,
            },
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("positive impedance"));
        assert!(msg.contains("disconnected"));
    }

    #[test]
    fn twelve_node_fixture_is_valid() {
        let f = twelve_node();
        assert_eq!(f.node_count(), 12);
        assert_eq!(f.edges().len(), 11);
        assert_eq!(f.substation_edge(), EdgeId(0));
    }

    #[test]
    fn islands_no_failures_single_island() {
        let f = twelve_node();
        let islands = f.islands(&BTreeSet::new()).unwrap();
        assert_eq!(islands.len(), 1);
        assert_eq!(islands[0].len(), 11);
    }

    #[test]
    fn islands_all_failed_are_singletons() {
        let f = twelve_node();
        let all: BTreeSet<EdgeId> = (0..f.edges().len()).map(EdgeId).collect();
        let islands = f.islands(&all).unwrap();
        assert_eq!(islands.len(), 11);
        assert!(islands.iter().all(|i| i.len() == 1));
    }

    #[test]
    fn islands_match_schematic_failure_set() {
        let f = twelve_node();
        let name = |i: &NodeId| f.node_names()[i.0].clone();
        let edge_by_names = |a: &str, b: &str| {
            let fa = f.node_by_name(a).unwrap();
            let fb = f.node_by_name(b).unwrap();
            EdgeId(
                f.edges()
                    .iter()
                    .position(|e| e.from == fa && e.to == fb)
                    .unwrap(),
            )
        };
        let failed: BTreeSet<EdgeId> = [
            edge_by_names("0", "A"),
            edge_by_names("B", "C"),
            edge_by_names("D", "E"),
            edge_by_names("D", "I"),
            edge_by_names("D", "K"),
        ]
        .into_iter()
        .collect();
        let islands = f.islands(&failed).unwrap();
        let mut got: Vec<Vec<String>> = islands
            .iter()
            .map(|i| i.iter().map(name).collect())
            .collect();
        got.sort();
        let mut want = vec![
            vec!["A", "B", "G", "H"],
            vec!["C", "D"],
            vec!["E", "F"],
            vec!["I", "J"],
            vec!["K"],
        ];
        for w in &mut want {
            w.sort();
        }
        let mut want: Vec<Vec<String>> = want
            .into_iter()
            .map(|v| v.into_iter().map(String::from).collect())
            .collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn island_sizes_partition_the_nodes() {
        let f = twelve_node();
        let failed: BTreeSet<EdgeId> = [EdgeId(4), EdgeId(6)].into_iter().collect();
        let islands = f.islands(&failed).unwrap();
        let island_nodes: usize = islands.iter().map(|i| i.len()).sum();
        let mut all_island: BTreeSet<NodeId> = BTreeSet::new();
        for i in &islands {
            all_island.extend(i.iter().copied());
        }
        // substation component plus islands cover every node exactly once
        assert_eq!(island_nodes, all_island.len());
        assert_eq!(
            island_nodes + (f.node_count() - island_nodes),
            f.node_count()
        );
        assert!(!all_island.contains(&NodeId(0)));
    }

    #[test]
    fn islands_unknown_edge_errors() {
        let f = chain(3);
        let failed: BTreeSet<EdgeId> = [EdgeId(99)].into_iter().collect();
        assert!(matches!(
            f.islands(&failed),
            Err(NetworkError::UnknownEdge(99))
        ));
    }

    fn lattice_grid(nx: i64, ny: i64, side: f64) -> Grid<f64> {
        let mut cells = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                cells.push(GridCell {
                    id: CellId(i * ny + j),
                    center: Point2::new(side * (i as f64 + 0.5), side * (j as f64 + 0.5)),
                });
            }
        }
        Grid::new(side, cells).unwrap()
    }

    fn one_edge_feeder(polyline: Vec<Point2<f64>>) -> Feeder<f64> {
        Feeder::new(
            vec!["0".into(), "A".into()],
            vec![Edge {
                from: NodeId(0),
                to: NodeId(1),
                r: 0.01,
                x: 0.01,
                polyline,
            }],
            vec![load(); 2],
            BTreeMap::new(),
            1.0,
            PerUnitBase {
                s_base_mva: 1.0,
                v_base_kv: 4.16,
            },
        )
        .unwrap()
    }

    #[test]
    fn cell_lengths_segment_inside_one_cell() {
        let grid = lattice_grid(3, 3, 1.0);
        let f = one_edge_feeder(straight(0.2, 0.5, 0.8, 0.9));
        let lengths = f.line_cell_lengths(EdgeId(0), &grid).unwrap();
        assert_eq!(lengths.len(), 1);
        let total: f64 = lengths.values().sum();
        assert_relative_eq!(total, f.edges()[0].length_km(), max_relative = 1e-12);
    }

    #[test]
    fn cell_lengths_symmetric_split() {
        let grid = lattice_grid(2, 1, 1.0);
        let f = one_edge_feeder(straight(0.0, 0.5, 2.0, 0.5));
        let lengths = f.line_cell_lengths(EdgeId(0), &grid).unwrap();
        assert_eq!(lengths.len(), 2);
        for &l in lengths.values() {
            assert_relative_eq!(l, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cell_lengths_diagonal_matches_dense_sampling_oracle() {
        let grid = lattice_grid(2, 2, 1.0);
        let a = Point2::new(0.1, 0.3);
        let b = Point2::new(1.9, 1.7);
        let f = one_edge_feeder(vec![a, b]);
        let lengths = f.line_cell_lengths(EdgeId(0), &grid).unwrap();

        // independent dense-sampling oracle: 10^4 equal subsegments
        // attributed by midpoint
        let n = 10_000;
        let seg_len = a.distance(&b);
        let mut oracle: BTreeMap<CellId, f64> = BTreeMap::new();
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let mid = a.lerp(&b, t);
            let cell = grid.locate(mid).unwrap();
            *oracle.entry(cell.id).or_insert(0.0) += seg_len / n as f64;
        }
        for (cell, &len) in &oracle {
            let got = lengths.get(cell).copied().unwrap_or(0.0);
            assert!(
                (got - len).abs() < 1e-3,
                "cell {cell}: got {got}, oracle {len}"
            );
        }
        let total: f64 = lengths.values().sum();
        assert!((total - seg_len).abs() <= 1e-9 * seg_len);
    }

    #[test]
    fn cell_lengths_out_of_grid_errors() {
        let grid = lattice_grid(1, 1, 1.0);
        let f = one_edge_feeder(straight(0.5, 0.5, 5.0, 0.5));
        assert!(matches!(
            f.line_cell_lengths(EdgeId(0), &grid),
            Err(NetworkError::GeometryOutOfGrid { .. })
        ));
    }

    #[test]
    fn cell_lengths_translation_invariant() {
        let grid = lattice_grid(4, 4, 1.0);
        let a = Point2::new(0.3, 0.4);
        let b = Point2::new(2.7, 1.6);
        let f1 = one_edge_feeder(vec![a, b]);
        let f2 = one_edge_feeder(vec![
            Point2::new(a.x + 1.0, a.y + 1.0),
            Point2::new(b.x + 1.0, b.y + 1.0),
        ]);
        let l1 = f1.line_cell_lengths(EdgeId(0), &grid).unwrap();
        let l2 = f2.line_cell_lengths(EdgeId(0), &grid).unwrap();
        let mut v1: Vec<f64> = l1.values().copied().collect();
        let mut v2: Vec<f64> = l2.values().copied().collect();
        v1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v1.len(), v2.len());
        for (x, y) in v1.iter().zip(&v2) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }
}
