//! Ready-made study cases: small feeders, storm tracks and grids used by
//! the test suites and handy as starting points for experiments.

use std::collections::BTreeMap;

use crate::geometry::Point2;
use crate::network::{DerSpec, Edge, Feeder, LoadSpec, NodeId, PerUnitBase};
use crate::wind::{CellId, Grid, GridCell, StormTrack, Waypoint};

fn load(pc: f64, qc: f64) -> LoadSpec<f64> {
    LoadSpec {
        pc_max: pc,
        qc_max: qc,
        cost_shed: 1000.0,
        cost_control: 100.0,
        lcc_min: 0.5,
        nu_min: 0.95,
        nu_max: 1.05,
    }
}

fn base() -> PerUnitBase<f64> {
    PerUnitBase {
        s_base_mva: 1.0,
        v_base_kv: 4.16,
    }
}

const TWELVE_NODE_COORDS: [(&str, f64, f64); 12] = [
    ("0", 1.5, 3.85),
    ("A", 1.5, 3.0),
    ("B", 0.25, 2.75),
    ("C", 0.25, 1.5),
    ("D", 1.5, 1.25),
    ("E", 2.75, 1.25),
    ("F", 2.75, 0.5),
    ("G", 2.0, 2.5),
    ("H", 2.75, 2.75),
    ("I", 1.5, 0.25),
    ("J", 0.5, 0.25),
    ("K", 1.5, 2.0),
];

const TWELVE_NODE_LINES: [(&str, &str); 11] = [
    ("0", "A"),
    ("A", "B"),
    ("A", "G"),
    ("G", "H"),
    ("B", "C"),
    ("C", "D"),
    ("D", "E"),
    ("E", "F"),
    ("D", "I"),
    ("I", "J"),
    ("D", "K"),
];

fn twelve_node_with(
    loads: &dyn Fn(&str) -> LoadSpec<f64>,
    sites: &[(&str, f64)],
    line_rx: (f64, f64),
) -> Feeder<f64> {
    let names: Vec<String> = TWELVE_NODE_COORDS.iter().map(|c| c.0.to_string()).collect();
    let coord = |name: &str| {
        let c = TWELVE_NODE_COORDS.iter().find(|c| c.0 == name).unwrap();
        Point2::new(c.1, c.2)
    };
    let idx = |n: &str| NodeId(names.iter().position(|x| x == n).unwrap());
    let edges: Vec<Edge<f64>> = TWELVE_NODE_LINES
        .iter()
        .map(|&(a, b)| Edge {
            from: idx(a),
            to: idx(b),
            r: line_rx.0,
            x: line_rx.1,
            polyline: vec![coord(a), coord(b)],
        })
        .collect();
    let load_specs: Vec<LoadSpec<f64>> = names.iter().map(|n| loads(n)).collect();
    let site_cost: BTreeMap<NodeId, f64> = sites.iter().map(|&(n, c)| (idx(n), c)).collect();
    Feeder::new(names, edges, load_specs, site_cost, 1.0, base()).unwrap()
}

/// Twelve-node feeder (substation `0` plus `A`..`K`) with a load at every
/// node and a single candidate DER site at `D`.
pub fn twelve_node_feeder() -> Feeder<f64> {
    twelve_node_with(&|_| load(0.2, 0.08), &[("D", 50_000.0)], (0.02, 0.02))
}

/// Twelve-node feeder with loads at six nodes (`B`, `C`, `E`, `H`, `I`,
/// `K`) and candidate sites at `A`, `D` and `I`.
pub fn twelve_node_feeder_six_loads() -> Feeder<f64> {
    let loaded = ["B", "C", "E", "H", "I", "K"];
    twelve_node_with(
        &|n| {
            if loaded.contains(&n) {
                load(0.2, 0.08)
            } else {
                load(0.0, 0.0)
            }
        },
        &[("A", 60_000.0), ("D", 50_000.0), ("I", 55_000.0)],
        (0.02, 0.02),
    )
}

/// Homogeneous DER fleet sized to the twelve-node feeder: unit rating is
/// 80% of the total nominal demand divided by the fleet size.
pub fn twelve_node_der(count: usize, total_demand: f64) -> DerSpec<f64> {
    DerSpec {
        count,
        pg_max: 0.8 * total_demand / count as f64,
        pf_max: 0.6,
        kq: 0.05,
        nu_ref: 1.0,
    }
}

/// Minimal feeder: substation `0`, pass-through node `M`, loaded node `L`
/// with a candidate site at `L`.
pub fn three_node_feeder() -> Feeder<f64> {
    let names: Vec<String> = ["0", "M", "L"].iter().map(|s| s.to_string()).collect();
    let edges = vec![
        Edge {
            from: NodeId(0),
            to: NodeId(1),
            r: 0.02,
            x: 0.02,
            polyline: vec![Point2::new(0.5, 2.5), Point2::new(0.5, 1.5)],
        },
        Edge {
            from: NodeId(1),
            to: NodeId(2),
            r: 0.02,
            x: 0.02,
            polyline: vec![Point2::new(0.5, 1.5), Point2::new(0.5, 0.5)],
        },
    ];
    let loads = vec![load(0.0, 0.0), load(0.0, 0.0), load(0.2, 0.08)];
    let site_cost = BTreeMap::from([(NodeId(2), 40_000.0)]);
    Feeder::new(names, edges, loads, site_cost, 1.0, base()).unwrap()
}

/// DER fleet matching [`three_node_feeder`].
pub fn three_node_der() -> DerSpec<f64> {
    DerSpec {
        count: 1,
        pg_max: 0.3,
        pf_max: 0.6,
        kq: 0.05,
        nu_ref: 1.0,
    }
}

/// Regular `nx` by `ny` lattice of square cells with the lower-left corner
/// at `(x0, y0)`.
pub fn lattice_grid(x0: f64, y0: f64, nx: i64, ny: i64, side: f64) -> Grid<f64> {
    let mut cells = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            cells.push(GridCell {
                id: CellId(i * ny + j),
                center: Point2::new(
                    x0 + side * (i as f64 + 0.5),
                    y0 + side * (j as f64 + 0.5),
                ),
            });
        }
    }
    Grid::new(side, cells).unwrap()
}

/// Grid covering the twelve-node feeder with a one-cell margin.
pub fn twelve_node_grid() -> Grid<f64> {
    lattice_grid(-1.0, -1.0, 6, 7, 1.0)
}

/// Category-1 track passing directly over the feeder area (eye wall close
/// to the network).
pub fn track_near() -> StormTrack<f64> {
    StormTrack::new(
        vec![
            Waypoint {
                t: 0.0,
                pos: Point2::new(1.5, -238.0),
            },
            Waypoint {
                t: 24.0,
                pos: Point2::new(1.5, 242.0),
            },
        ],
        40.0,
        30.0,
        1.5,
        0.0,
        24.0,
    )
    .unwrap()
}

/// Same storm on a track whose eye passes ~60 km farther from the feeder.
pub fn track_far() -> StormTrack<f64> {
    StormTrack::new(
        vec![
            Waypoint {
                t: 0.0,
                pos: Point2::new(61.5, -238.0),
            },
            Waypoint {
                t: 24.0,
                pos: Point2::new(61.5, 242.0),
            },
        ],
        40.0,
        30.0,
        1.5,
        0.0,
        24.0,
    )
    .unwrap()
}
