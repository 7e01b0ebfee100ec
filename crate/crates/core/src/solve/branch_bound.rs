//! LP-based branch-and-bound over the binary columns of a model.
//!
//! Node selection is best-bound with depth-first dives: the node with the
//! lowest parent bound is popped from the pool, then the search dives from
//! it (branching on the most fractional binary, ties to the lowest column
//! index, taking the rounded side first) until the subtree closes, pushing
//! siblings back into the pool. Node LPs warm-start from the engine's
//! current basis with the dual simplex and fall back to a fresh primal
//! solve when that stalls.
//!
//! Every incumbent is certified against the original rows after rounding
//! its binaries; the solver never reports an uncertified point.

use std::collections::BinaryHeap;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use crate::model::MipModel;
use crate::scalar::Scalar;

use super::simplex::{DualOutcome, LpEngine};
use super::{LpStatus, MipSolution, MipStatus, SolveError, SolveOptions, PROOF_GAP};

/// Certification tolerance for incumbents, matching the advertised
/// feasibility guarantee of returned solutions.
const CERT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Node {
    /// Lower bound inherited from the parent LP.
    bound: f64,
    /// Bound overrides relative to the model, in original units.
    patches: Vec<(usize, f64, f64)>,
    id: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap: order reversed on bound, then id for
        // deterministic pops.
        other
            .bound
            .partial_cmp(&self.bound)
            .expect("node bounds comparable")
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct SearchState<T> {
    heap: BinaryHeap<Node>,
    incumbent: Option<(f64, Vec<T>)>,
    nodes: u64,
    next_id: u64,
    busy: usize,
    aborted: Option<String>,
    log: Vec<String>,
}

struct Search<'a, T> {
    model: &'a MipModel<T>,
    binaries: Vec<usize>,
    opts: &'a SolveOptions,
    started: Instant,
    shared: Mutex<SearchState<T>>,
    wake: Condvar,
}

enum NodeOutcome {
    Closed,
    Branched { dive: Node, sibling: Node },
}

impl<'a, T: Scalar> Search<'a, T> {
    fn gap(&self, incumbent: Option<f64>, bound: f64) -> f64 {
        match incumbent {
            Some(inc) => ((inc - bound) / inc.abs().max(1.0)).max(0.0),
            None => f64::INFINITY,
        }
    }

    fn cutoff(&self, incumbent: Option<f64>) -> f64 {
        match incumbent {
            Some(inc) => inc - self.opts.rel_gap * inc.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn out_of_budget(&self, state: &SearchState<T>) -> Option<MipStatus> {
        if let Some(limit) = self.opts.node_limit {
            if state.nodes >= limit {
                return Some(MipStatus::NodeLimit);
            }
        }
        if let Some(limit) = self.opts.time_limit {
            if self.started.elapsed() >= limit {
                return Some(MipStatus::TimeLimit);
            }
        }
        None
    }

    /// Solve one node LP and either close the node or branch.
    fn process(
        &self,
        engine: &mut LpEngine<T>,
        node: &Node,
        incumbent_obj: Option<f64>,
    ) -> Result<(NodeOutcome, Option<(f64, Vec<T>)>, f64), SolveError> {
        engine.reset_bounds();
        for &(col, lo, hi) in &node.patches {
            engine.override_bounds(col, T::c(lo), T::c(hi));
        }
        let dual_cap = 500 + 5 * self.model.rows.len() as u64;
        let feasible = match engine.dual_reoptimize(dual_cap)? {
            DualOutcome::Optimal => true,
            DualOutcome::Infeasible => false,
            DualOutcome::GiveUp => {
                engine.reset_to_slack_basis();
                matches!(engine.primal()?, LpStatus::Optimal)
            }
        };
        if !feasible {
            return Ok((NodeOutcome::Closed, None, f64::INFINITY));
        }
        let bound = engine.objective().f64();
        if bound >= self.cutoff(incumbent_obj) {
            return Ok((NodeOutcome::Closed, None, bound));
        }
        let x = engine.extract_x();

        // most fractional binary, ties to the lowest column index
        let mut branch: Option<(f64, usize, f64)> = None;
        for &j in &self.binaries {
            let v = x[j].f64();
            let frac = (v - v.round()).abs();
            if frac > self.opts.int_tol {
                let score = v.fract().min(1.0 - v.fract()).abs();
                if branch.map(|(s, _, _)| score > s).unwrap_or(true) {
                    branch = Some((score, j, v));
                }
            }
        }

        let Some((_, col, value)) = branch else {
            // integral: certify the rounded point against the original rows
            let mut point = x.clone();
            for &j in &self.binaries {
                point[j] = T::c(point[j].f64().round().clamp(0.0, 1.0));
            }
            if self.model.max_violation(&point, T::c(CERT_TOL)).is_some() {
                // LP noise produced an uncertifiable point; treat the node
                // bound as valid but do not accept the incumbent.
                return Ok((NodeOutcome::Closed, None, bound));
            }
            let obj = self.model.objective_value(&point).f64();
            return Ok((NodeOutcome::Closed, Some((obj, point)), bound));
        };

        let mut zero_patches = node.patches.clone();
        zero_patches.push((col, 0.0, 0.0));
        let mut one_patches = node.patches.clone();
        one_patches.push((col, 1.0, 1.0));
        let (dive_patches, sibling_patches) = if value.round() >= 1.0 {
            (one_patches, zero_patches)
        } else {
            (zero_patches, one_patches)
        };
        Ok((
            NodeOutcome::Branched {
                dive: Node {
                    bound,
                    patches: dive_patches,
                    id: 0,
                },
                sibling: Node {
                    bound,
                    patches: sibling_patches,
                    id: 0,
                },
            },
            None,
            bound,
        ))
    }

    /// Worker loop: pop the best-bound node, dive until the subtree
    /// closes, repeat. Returns when the pool drains or a limit hits.
    fn run_worker(&self, engine: &mut LpEngine<T>) -> Result<(), SolveError> {
        loop {
            let mut node = {
                let mut state = self.shared.lock().expect("search lock");
                loop {
                    if state.aborted.is_some() {
                        return Ok(());
                    }
                    if self.out_of_budget(&state).is_some() {
                        self.wake.notify_all();
                        return Ok(());
                    }
                    if let Some(node) = state.heap.pop() {
                        // prune stale nodes against the current incumbent
                        let inc = state.incumbent.as_ref().map(|(o, _)| *o);
                        if node.bound >= self.cutoff(inc) {
                            continue;
                        }
                        state.busy += 1;
                        break node;
                    }
                    if state.busy == 0 {
                        self.wake.notify_all();
                        return Ok(());
                    }
                    state = self.wake.wait(state).expect("search wait");
                }
            };

            // depth-first dive
            let result = loop {
                let incumbent_obj = {
                    let state = self.shared.lock().expect("search lock");
                    state.incumbent.as_ref().map(|(o, _)| *o)
                };
                match self.process(engine, &node, incumbent_obj) {
                    Err(e) => break Err(e),
                    Ok((outcome, found, _bound)) => {
                        let mut state = self.shared.lock().expect("search lock");
                        state.nodes += 1;
                        if let Some((obj, point)) = found {
                            let better = state
                                .incumbent
                                .as_ref()
                                .map(|(best, _)| obj < *best)
                                .unwrap_or(true);
                            if better {
                                if self.opts.log {
                                    let line = format!(
                                        "node {} bound {:.6e} incumbent {:.6e} gap {:.3e}",
                                        state.nodes,
                                        _bound,
                                        obj,
                                        self.gap(Some(obj), _bound)
                                    );
                                    state.log.push(line);
                                }
                                state.incumbent = Some((obj, point));
                            }
                        } else if self.opts.log && state.nodes % 100 == 0 {
                            let inc = state.incumbent.as_ref().map(|(o, _)| *o);
                            let line = format!(
                                "node {} bound {:.6e} incumbent {} gap {:.3e}",
                                state.nodes,
                                _bound,
                                inc.map(|o| format!("{o:.6e}"))
                                    .unwrap_or_else(|| "-".into()),
                                self.gap(inc, _bound)
                            );
                            state.log.push(line);
                        }
                        if self.out_of_budget(&state).is_some() {
                            break Ok(());
                        }
                        match outcome {
                            NodeOutcome::Closed => break Ok(()),
                            NodeOutcome::Branched { mut dive, mut sibling } => {
                                dive.id = state.next_id;
                                sibling.id = state.next_id + 1;
                                state.next_id += 2;
                                state.heap.push(sibling);
                                self.wake.notify_one();
                                drop(state);
                                node = dive;
                            }
                        }
                    }
                }
            };

            {
                let mut state = self.shared.lock().expect("search lock");
                state.busy -= 1;
                if let Err(e) = result {
                    state.aborted = Some(e.to_string());
                }
                self.wake.notify_all();
                if state.aborted.is_some() {
                    return Ok(());
                }
            }
        }
    }
}

/// Solve a mixed-binary model to proven optimality (or a stated limit).
pub fn solve_mip<T: Scalar>(
    model: &MipModel<T>,
    opts: &SolveOptions,
) -> Result<MipSolution<T>, SolveError> {
    let started = Instant::now();
    let binaries: Vec<usize> = model
        .cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.binary)
        .map(|(j, _)| j)
        .collect();

    let mut engine = LpEngine::new(model)?;
    engine.reset_bounds();
    engine.reset_to_slack_basis();
    let root_status = engine.primal()?;
    let mut log = Vec::new();
    match root_status {
        LpStatus::Infeasible => {
            return Ok(MipSolution {
                status: MipStatus::Infeasible,
                objective: None,
                best_bound: T::infinity(),
                gap: f64::INFINITY,
                x: None,
                nodes: 0,
                lp_iterations: engine.iterations,
                wall: started.elapsed(),
                log,
            });
        }
        LpStatus::Unbounded => {
            return Err(SolveError::BadModel(
                "LP relaxation is unbounded; binary models must be bounded".into(),
            ));
        }
        LpStatus::Optimal => {}
    }
    let root_bound = engine.objective().f64();
    if opts.log {
        log.push(format!("root bound {root_bound:.6e}"));
    }

    let search = Search {
        model,
        binaries,
        opts,
        started,
        shared: Mutex::new(SearchState {
            heap: BinaryHeap::new(),
            incumbent: None,
            nodes: 0,
            next_id: 1,
            busy: 0,
            aborted: None,
            log,
        }),
        wake: Condvar::new(),
    };
    search.shared.lock().unwrap().heap.push(Node {
        bound: root_bound,
        patches: Vec::new(),
        id: 0,
    });

    let workers = opts.workers.max(1);
    if workers == 1 {
        search.run_worker(&mut engine)?;
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for _ in 0..workers {
                let mut worker_engine = engine.clone();
                let search_ref = &search;
                handles.push(scope.spawn(move || search_ref.run_worker(&mut worker_engine)));
            }
            for h in handles {
                h.join().expect("worker join").ok();
            }
        });
    }

    let state = search.shared.into_inner().expect("search lock");
    if let Some(msg) = state.aborted {
        return Err(SolveError::Numerical(msg));
    }
    let incumbent_obj = state.incumbent.as_ref().map(|(o, _)| *o);
    let open_bound = state
        .heap
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let best_bound = match incumbent_obj {
        Some(inc) => inc.min(open_bound),
        None => open_bound.min(root_bound),
    };
    let gap = match incumbent_obj {
        Some(inc) => ((inc - best_bound) / inc.abs().max(1.0)).max(0.0),
        None => f64::INFINITY,
    };

    let status = if state.incumbent.is_none() && state.heap.is_empty() {
        MipStatus::Infeasible
    } else if state.heap.is_empty() || gap <= opts.rel_gap {
        if gap <= PROOF_GAP {
            MipStatus::Optimal
        } else {
            MipStatus::GapLimit
        }
    } else if opts
        .node_limit
        .map(|l| state.nodes >= l)
        .unwrap_or(false)
    {
        MipStatus::NodeLimit
    } else {
        MipStatus::TimeLimit
    };

    let nodes_beyond_root = state.nodes.saturating_sub(1);
    Ok(MipSolution {
        status,
        objective: incumbent_obj.map(T::c),
        best_bound: T::c(best_bound),
        gap,
        x: state.incumbent.map(|(_, x)| x),
        nodes: nodes_beyond_root,
        lp_iterations: engine.iterations,
        wall: started.elapsed(),
        log: state.log,
    })
}
