//! Quick timing probe for the scenario-coupled solve at study scale.

use std::time::Instant;

use stormward::cases;
use stormward::failure::FailureScenario;
use stormward::model::builder::build_saa_mip;
use stormward::model::ResourceLimits;
use stormward::solve::{solve_mip, SolveOptions};

fn main() {
    let feeder = cases::twelve_node_feeder_six_loads();
    let der = cases::twelve_node_der(2, 1.2);
    let mk = |edges: &[usize]| {
        let mut failed = vec![false; feeder.edges().len()];
        for &e in edges {
            failed[e] = true;
        }
        FailureScenario { failed, prob: 0.3 }
    };
    let scenarios = vec![mk(&[1, 4, 6, 8]), mk(&[2, 5, 10])];
    for (g, y, k) in [(1usize, 1usize, 6usize), (2, 1, 6), (1, 2, 6), (1, 3, 6)] {
        let limits = ResourceLimits::new(g, y, k).unwrap();
        let model = build_saa_mip(&feeder, &der, &scenarios, &limits).unwrap();
        let stats = model.stats();
        let start = Instant::now();
        let sol = solve_mip(&model, &SolveOptions::default()).unwrap();
        println!(
            "G={g} Y={y} K={k}: {stats} -> {:?} obj={:?} nodes={} lp_iters={} in {:.1?}",
            sol.status,
            sol.objective,
            sol.nodes,
            sol.lp_iterations,
            start.elapsed()
        );
    }
}
