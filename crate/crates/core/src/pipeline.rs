//! End-to-end planning pipeline and recovery metrics.
//!
//! `run_pipeline` chains the stages: wind field over the grid, hourly
//! failure rates, per-line failure probabilities, scenario selection, the
//! scenario-coupled program, the embedded solver, and finally trajectory
//! extraction. Metric helpers compute the per-period system-performance
//! series (fraction of full-shed cost avoided) and Monte-Carlo failure /
//! island statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::failure::{
    self, FailureScenario, LineIntensity, NhppParams, SelectionConfig,
};
use crate::model::builder::{build_saa_mip, build_second_stage, effective_failed, repair_horizon};
use crate::model::{
    Allocation, MipModel, ModelError, ModelStats, ResourceLimits, ScopedVar, Var,
};
use crate::network::{DerSpec, EdgeId, Feeder, NetworkError, NodeId};
use crate::scalar::Scalar;
use crate::solve::{solve_lp, solve_mip, LpStatus, MipSolution, MipStatus, SolveError, SolveOptions};
use crate::wind::{wind_field_at, Grid, StormTrack, WindError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Wind(#[from] WindError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Failure(#[from] crate::failure::FailureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("model infeasible; first violated constraint family: {family}")]
    Infeasible { family: String },
    #[error("solver stopped at {status:?} before proving optimality (gap {gap:.3e})")]
    SolverLimit { status: MipStatus, gap: f64 },
    #[error("scenario {0} has no solved trajectories")]
    UnsolvedScenario(usize),
}

/// Sampling and solving knobs of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub der_budget: usize,
    pub repairs_per_period: usize,
    /// Fixed horizon; `None` derives it from the sampled scenarios.
    pub horizon_override: Option<usize>,
    pub selection: SelectionConfig,
    pub master_seed: u64,
    pub solve: SolveOptions,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            der_budget: 1,
            repairs_per_period: 1,
            horizon_override: None,
            selection: SelectionConfig::default(),
            master_seed: 0,
            solve: SolveOptions::default(),
        }
    }
}

/// Solver metadata recorded with every solution.
#[derive(Debug, Clone)]
pub struct SolverMeta {
    pub status: MipStatus,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub gap: f64,
    pub wall: Duration,
    pub master_seed: u64,
    pub log: Vec<String>,
}

/// Dispatch snapshot of one period of one scenario.
#[derive(Debug, Clone)]
pub struct PeriodDispatch<T> {
    /// Squared voltage per node (index 0 = substation).
    pub volt: Vec<T>,
    /// Load disconnected this period (index 0 unused).
    pub shed: Vec<bool>,
    pub serve_frac: Vec<T>,
    pub load_p: Vec<T>,
    pub load_q: Vec<T>,
    pub net_p: Vec<T>,
    pub net_q: Vec<T>,
    /// Flow per edge.
    pub flow_p: Vec<T>,
    pub flow_q: Vec<T>,
    /// DER output per (site, unit).
    pub gen_p: BTreeMap<(NodeId, usize), T>,
    pub gen_q: BTreeMap<(NodeId, usize), T>,
}

/// Full stage-II trajectory of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome<T> {
    pub scenario: FailureScenario<T>,
    /// Repair period per effective failed edge (`None` = never repaired).
    pub repair_period: BTreeMap<EdgeId, Option<usize>>,
    /// Down status per period per edge (all edges).
    pub down: Vec<Vec<bool>>,
    pub periods: Vec<PeriodDispatch<T>>,
}

impl<T: Scalar> ScenarioOutcome<T> {
    /// Demand cost of period `k`: control cost of unserved fraction plus
    /// shed cost of disconnected loads.
    pub fn period_cost(&self, feeder: &Feeder<T>, k: usize) -> T {
        let p = &self.periods[k];
        let mut cost = T::zero();
        for node in 1..feeder.node_count() {
            let load = feeder.load(NodeId(node));
            cost += load.cost_control * (T::one() - p.serve_frac[node]);
            if p.shed[node] {
                cost += load.cost_shed;
            }
        }
        cost
    }

    /// Second-stage objective recomputed from the trajectories.
    pub fn total_cost(&self, feeder: &Feeder<T>) -> T {
        (0..self.periods.len())
            .map(|k| self.period_cost(feeder, k))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Solution of the scenario-coupled planning problem.
#[derive(Debug, Clone)]
pub struct SaaSolution<T> {
    pub allocation: Allocation,
    pub outcomes: Vec<ScenarioOutcome<T>>,
    /// Total objective (site cost + averaged demand cost).
    pub objective: T,
    pub site_cost: T,
    /// Per-scenario demand cost over the horizon.
    pub scenario_costs: Vec<T>,
    pub limits: ResourceLimits,
    pub stats: ModelStats,
    pub solver: SolverMeta,
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub line_intensities: Vec<LineIntensity<T>>,
    pub scenarios: Vec<FailureScenario<T>>,
    pub solution: SaaSolution<T>,
}

/// Per-period system performance (percent), averaged over scenarios.
#[derive(Debug, Clone)]
pub struct ResilienceSeries<T> {
    pub performance: Vec<T>,
    pub der_budget: usize,
    pub repairs_per_period: usize,
    pub master_seed: u64,
}

/// Per-cell cumulative failure intensity over the storm window, per km.
pub fn cell_intensities<T: Scalar>(
    track: &StormTrack<T>,
    grid: &Grid<T>,
    nhpp: &NhppParams<T>,
) -> Result<BTreeMap<crate::wind::CellId, T>, PipelineError> {
    let mut acc: BTreeMap<crate::wind::CellId, Vec<T>> = BTreeMap::new();
    for t in track.storm_hours() {
        for sample in wind_field_at(track, grid, t)? {
            acc.entry(sample.cell)
                .or_default()
                .push(failure::poisson_rate(sample.v, nhpp));
        }
    }
    let mut out = BTreeMap::new();
    for (cell, rates) in acc {
        out.insert(cell, failure::cell_cumulative_intensity(&rates)?);
    }
    Ok(out)
}

/// Failure probability of every line of the feeder under a storm track.
pub fn line_probabilities<T: Scalar>(
    feeder: &Feeder<T>,
    track: &StormTrack<T>,
    grid: &Grid<T>,
    nhpp: &NhppParams<T>,
) -> Result<Vec<LineIntensity<T>>, PipelineError> {
    let cell_lambda = cell_intensities(track, grid, nhpp)?;
    let mut out = Vec::with_capacity(feeder.edges().len());
    for e in 0..feeder.edges().len() {
        let lengths = feeder.line_cell_lengths(EdgeId(e), grid)?;
        let lambda = failure::line_cumulative_intensity(&lengths, &cell_lambda)?;
        out.push(LineIntensity::from_lambda(e, lambda));
    }
    Ok(out)
}

/// Wind field, failure probabilities, scenario selection, model build and
/// solve, in one call. All randomness derives from `settings.master_seed`.
pub fn run_pipeline<T: Scalar>(
    feeder: &Feeder<T>,
    track: &StormTrack<T>,
    grid: &Grid<T>,
    nhpp: &NhppParams<T>,
    der: &DerSpec<T>,
    settings: &RunSettings,
) -> Result<PipelineRun<T>, PipelineError> {
    let intensities = line_probabilities(feeder, track, grid, nhpp)?;
    let p: Vec<T> = intensities.iter().map(|li| li.p_e).collect();
    let mut rng = failure::seeded_rng(settings.master_seed);
    let scenarios = failure::select_scenarios(&p, &mut rng, &settings.selection)?;
    let solution = solve_scenarios(feeder, der, &scenarios, settings)?;
    Ok(PipelineRun {
        line_intensities: intensities,
        scenarios,
        solution,
    })
}

/// Build and solve the planning problem for an explicit scenario set.
pub fn solve_scenarios<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenarios: &[FailureScenario<T>],
    settings: &RunSettings,
) -> Result<SaaSolution<T>, PipelineError> {
    let horizon = settings
        .horizon_override
        .unwrap_or_else(|| repair_horizon(scenarios, feeder, settings.repairs_per_period));
    let limits = ResourceLimits::new(settings.der_budget, settings.repairs_per_period, horizon)?;
    let model = build_saa_mip(feeder, der, scenarios, &limits)?;
    let solved = solve_mip(&model, &settings.solve)?;
    match solved.status {
        MipStatus::Infeasible => {
            let family =
                first_violated_family(&model).unwrap_or_else(|| "unidentified".to_string());
            return Err(PipelineError::Infeasible { family });
        }
        MipStatus::NodeLimit | MipStatus::TimeLimit if solved.objective.is_none() => {
            return Err(PipelineError::SolverLimit {
                status: solved.status,
                gap: solved.gap,
            });
        }
        _ => {}
    }
    extract_solution(feeder, der, scenarios, &limits, &model, solved, settings)
}

/// Identify the first constraint family whose removal restores LP
/// feasibility (diagnostic for infeasible models).
pub fn first_violated_family<T: Scalar>(model: &MipModel<T>) -> Option<String> {
    let mut families = Vec::new();
    for row in &model.rows {
        if !families.contains(&row.family) {
            families.push(row.family.clone());
        }
    }
    for family in families {
        let mut reduced = model.clone();
        reduced.rows.retain(|r| r.family != family);
        if let Ok(sol) = solve_lp(&reduced) {
            if sol.status == LpStatus::Optimal || sol.status == LpStatus::Unbounded {
                return Some(family);
            }
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn extract_solution<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenarios: &[FailureScenario<T>],
    limits: &ResourceLimits,
    model: &MipModel<T>,
    solved: MipSolution<T>,
    settings: &RunSettings,
) -> Result<SaaSolution<T>, PipelineError> {
    let x = solved
        .x
        .as_ref()
        .ok_or(PipelineError::SolverLimit {
            status: solved.status,
            gap: solved.gap,
        })?
        .clone();
    let value = |v: ScopedVar| -> T { x[model.registry.get(v).expect("registered var")] };
    let is_one = |v: ScopedVar| -> bool { value(v).f64() > 0.5 };

    let mut allocation = Allocation::empty(der.count);
    for (site, _) in feeder.sites() {
        if is_one(ScopedVar::stage1(Var::SiteOpen { site })) {
            allocation.open_sites.insert(site);
        }
        for d in 0..der.count {
            if is_one(ScopedVar::stage1(Var::DerAssign { site, der: d })) {
                allocation.der_site[d] = Some(site);
            }
        }
    }
    let site_cost: T = feeder
        .sites()
        .filter(|(site, _)| allocation.open_sites.contains(site))
        .map(|(_, c)| c)
        .fold(T::zero(), |a, b| a + b);

    let mut outcomes = Vec::with_capacity(scenarios.len());
    for (s, scenario) in scenarios.iter().enumerate() {
        outcomes.push(extract_outcome(
            feeder,
            der,
            scenario,
            limits,
            model,
            &x,
            Some(s),
        ));
    }
    let scenario_costs: Vec<T> = outcomes.iter().map(|o| o.total_cost(feeder)).collect();
    let objective = solved.objective.expect("checked above");

    Ok(SaaSolution {
        allocation,
        outcomes,
        objective,
        site_cost,
        scenario_costs,
        limits: *limits,
        stats: model.stats(),
        solver: SolverMeta {
            status: solved.status,
            nodes: solved.nodes,
            lp_iterations: solved.lp_iterations,
            gap: solved.gap,
            wall: solved.wall,
            master_seed: settings.master_seed,
            log: solved.log,
        },
    })
}

fn extract_outcome<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenario: &FailureScenario<T>,
    limits: &ResourceLimits,
    model: &MipModel<T>,
    x: &[T],
    scenario_index: Option<usize>,
) -> ScenarioOutcome<T> {
    let s = scenario_index.unwrap_or(0);
    let value = |v: Var| -> T {
        x[model
            .registry
            .get(ScopedVar::stage2(s, v))
            .expect("registered stage-2 var")]
    };
    let eff = effective_failed(feeder, scenario);
    let horizon = limits.horizon;

    let mut repair_period = BTreeMap::new();
    for &edge in &eff {
        let mut period = None;
        for k in 1..=horizon {
            if value(Var::Repair { edge, period: k }).f64() > 0.5 {
                period = Some(k);
                break;
            }
        }
        repair_period.insert(edge, period);
    }
    let mut down = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let mut row = vec![false; feeder.edges().len()];
        for &edge in &eff {
            row[edge.0] = value(Var::Down { edge, period: k }).f64() > 0.5;
        }
        down.push(row);
    }

    let n = feeder.node_count();
    let mut periods = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let mut dispatch = PeriodDispatch {
            volt: (0..n)
                .map(|i| value(Var::VoltSq { node: NodeId(i), period: k }))
                .collect(),
            shed: std::iter::once(false)
                .chain((1..n).map(|i| value(Var::Shed { node: NodeId(i), period: k }).f64() > 0.5))
                .collect(),
            serve_frac: std::iter::once(T::zero())
                .chain((1..n).map(|i| value(Var::ServeFrac { node: NodeId(i), period: k })))
                .collect(),
            load_p: std::iter::once(T::zero())
                .chain((1..n).map(|i| value(Var::LoadP { node: NodeId(i), period: k })))
                .collect(),
            load_q: std::iter::once(T::zero())
                .chain((1..n).map(|i| value(Var::LoadQ { node: NodeId(i), period: k })))
                .collect(),
            net_p: std::iter::once(T::zero())
                .chain((1..n).map(|i| value(Var::NetP { node: NodeId(i), period: k })))
                .collect(),
            net_q: std::iter::once(T::zero())
                .chain((1..n).map(|i| value(Var::NetQ { node: NodeId(i), period: k })))
                .collect(),
            flow_p: (0..feeder.edges().len())
                .map(|e| value(Var::FlowP { edge: EdgeId(e), period: k }))
                .collect(),
            flow_q: (0..feeder.edges().len())
                .map(|e| value(Var::FlowQ { edge: EdgeId(e), period: k }))
                .collect(),
            gen_p: BTreeMap::new(),
            gen_q: BTreeMap::new(),
        };
        for (site, _) in feeder.sites() {
            for d in 0..der.count {
                dispatch.gen_p.insert(
                    (site, d),
                    value(Var::GenP { site, der: d, period: k }),
                );
                dispatch.gen_q.insert(
                    (site, d),
                    value(Var::GenQ { site, der: d, period: k }),
                );
            }
        }
        periods.push(dispatch);
    }

    ScenarioOutcome {
        scenario: scenario.clone(),
        repair_period,
        down,
        periods,
    }
}

/// Optimal second-stage value and trajectories for a fixed allocation.
pub fn evaluate_second_stage<T: Scalar>(
    allocation: &Allocation,
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenario: &FailureScenario<T>,
    limits: &ResourceLimits,
    opts: &SolveOptions,
) -> Result<(T, ScenarioOutcome<T>), PipelineError> {
    let model = build_second_stage(allocation, feeder, der, scenario, limits)?;
    let solved = solve_mip(&model, opts)?;
    match solved.status {
        MipStatus::Infeasible => {
            let family =
                first_violated_family(&model).unwrap_or_else(|| "unidentified".to_string());
            Err(PipelineError::Infeasible { family })
        }
        _ => {
            let x = solved.x.ok_or(PipelineError::SolverLimit {
                status: solved.status,
                gap: solved.gap,
            })?;
            let outcome = extract_outcome(feeder, der, scenario, limits, &model, &x, Some(0));
            Ok((solved.objective.expect("incumbent present"), outcome))
        }
    }
}

/// System performance at period `k`: the percentage of the full-shed cost
/// avoided, averaged over scenarios.
pub fn system_performance<T: Scalar>(
    outcomes: &[ScenarioOutcome<T>],
    feeder: &Feeder<T>,
    k: usize,
) -> Result<T, PipelineError> {
    if outcomes.is_empty() {
        return Err(PipelineError::UnsolvedScenario(0));
    }
    let full: T = feeder
        .loads()
        .iter()
        .map(|l| l.cost_control + l.cost_shed)
        .sum();
    let mut acc = T::zero();
    for (s, outcome) in outcomes.iter().enumerate() {
        if outcome.periods.len() <= k {
            return Err(PipelineError::UnsolvedScenario(s));
        }
        let cost = outcome.period_cost(feeder, k);
        acc += T::c(100.0) * (T::one() - cost / full);
    }
    Ok(acc / T::c(outcomes.len() as f64))
}

/// Performance for every period `0..=K`.
pub fn resilience_curve<T: Scalar>(
    solution: &SaaSolution<T>,
    feeder: &Feeder<T>,
) -> Result<ResilienceSeries<T>, PipelineError> {
    let horizon = solution.limits.horizon;
    let mut performance = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        performance.push(system_performance(&solution.outcomes, feeder, k)?);
    }
    Ok(ResilienceSeries {
        performance,
        der_budget: solution.limits.der_budget,
        repairs_per_period: solution.limits.repairs_per_period,
        master_seed: solution.solver.master_seed,
    })
}

/// The study-style scalar metric: percent of total shed cost avoided by
/// the whole recourse, per scenario.
pub fn performance_total_cost_ratio<T: Scalar>(
    scenario_costs: &[T],
    feeder: &Feeder<T>,
) -> Vec<T> {
    let shed_total: T = feeder.loads().iter().map(|l| l.cost_shed).sum();
    scenario_costs
        .iter()
        .map(|&j| T::c(100.0) * (T::one() - j / shed_total))
        .collect()
}

/// Monte-Carlo failure and island statistics.
#[derive(Debug, Clone)]
pub struct FailureStats<T> {
    pub p_mean: T,
    pub p_min: T,
    pub p_max: T,
    pub mean_failures: T,
    /// Histogram of failure counts per scenario (index = count).
    pub failure_histogram: Vec<usize>,
    /// Histogram of island counts per scenario (index = count).
    pub island_histogram: Vec<usize>,
    /// Median / min / max over samples of the mean island size.
    pub island_size_median: T,
    pub island_size_min: T,
    pub island_size_max: T,
    pub samples: usize,
}

/// Sample `n_samples` failure scenarios and summarize failure counts and
/// island structure.
pub fn failure_statistics<T: Scalar, R: Rng>(
    p: &[T],
    feeder: &Feeder<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<FailureStats<T>, PipelineError> {
    assert_eq!(p.len(), feeder.edges().len(), "one probability per line");
    let p_mean = p.iter().copied().fold(T::zero(), |a, b| a + b) / T::c(p.len() as f64);
    let p_min = p.iter().copied().fold(T::infinity(), T::min);
    let p_max = p.iter().copied().fold(T::neg_infinity(), T::max);

    let mut failure_histogram = vec![0usize; p.len() + 1];
    let mut island_histogram = vec![0usize; feeder.node_count() + 1];
    let mut mean_sizes: Vec<T> = Vec::with_capacity(n_samples);
    let mut total_failures = 0usize;
    for _ in 0..n_samples {
        let s = failure::sample_scenario(p, rng);
        let count = s.failure_count();
        total_failures += count;
        failure_histogram[count] += 1;
        let failed: BTreeSet<EdgeId> = s.failed_edges().map(EdgeId).collect();
        let islands = feeder.islands(&failed)?;
        island_histogram[islands.len().min(feeder.node_count())] += 1;
        let mean_size = if islands.is_empty() {
            T::zero()
        } else {
            T::c(islands.iter().map(|i| i.len()).sum::<usize>() as f64)
                / T::c(islands.len() as f64)
        };
        mean_sizes.push(mean_size);
    }
    mean_sizes.sort_by(|a, b| a.partial_cmp(b).expect("sizes comparable"));
    let median = if mean_sizes.is_empty() {
        T::zero()
    } else if mean_sizes.len() % 2 == 1 {
        mean_sizes[mean_sizes.len() / 2]
    } else {
        (mean_sizes[mean_sizes.len() / 2 - 1] + mean_sizes[mean_sizes.len() / 2]) / T::c(2.0)
    };
    Ok(FailureStats {
        p_mean,
        p_min,
        p_max,
        mean_failures: T::c(total_failures as f64) / T::c(n_samples.max(1) as f64),
        failure_histogram,
        island_histogram,
        island_size_median: median,
        island_size_min: mean_sizes.first().copied().unwrap_or_else(T::zero),
        island_size_max: mean_sizes.last().copied().unwrap_or_else(T::zero),
        samples: n_samples,
    })
}

/// Physical-identity residuals of one scenario trajectory, recomputed
/// independently of the model rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhysicsResiduals {
    /// Power-conservation residual (per island, both real and reactive).
    pub conservation: f64,
    /// Voltage-drop residual on operational lines.
    pub volt_drop: f64,
    /// Flow magnitude on down lines.
    pub flow_on_down: f64,
    /// Droop-equation residual on assigned DER units (islanded periods).
    pub droop: f64,
}

impl PhysicsResiduals {
    pub fn max(&self) -> f64 {
        self.conservation
            .max(self.volt_drop)
            .max(self.flow_on_down)
            .max(self.droop)
    }
}

/// Verify LinDistFlow identities on a solved trajectory.
pub fn dispatch_residuals<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    allocation: &Allocation,
    outcome: &ScenarioOutcome<T>,
) -> PhysicsResiduals {
    let mut r = PhysicsResiduals::default();
    let horizon = outcome.periods.len() - 1;
    for (k, period) in outcome.periods.iter().enumerate() {
        for (e, edge) in feeder.edges().iter().enumerate() {
            let j = edge.to;
            let mut sum_p = period.net_p[j.0];
            let mut sum_q = period.net_q[j.0];
            for child in feeder.edges_from(j) {
                sum_p += period.flow_p[child.0];
                sum_q += period.flow_q[child.0];
            }
            r.conservation = r
                .conservation
                .max((period.flow_p[e] - sum_p).abs().f64())
                .max((period.flow_q[e] - sum_q).abs().f64());
            if outcome.down[k][e] {
                r.flow_on_down = r
                    .flow_on_down
                    .max(period.flow_p[e].abs().f64())
                    .max(period.flow_q[e].abs().f64());
            } else {
                let drop = period.volt[edge.from.0]
                    - T::c(2.0) * (edge.r * period.flow_p[e] + edge.x * period.flow_q[e]);
                r.volt_drop = r.volt_drop.max((period.volt[j.0] - drop).abs().f64());
            }
        }
        if k >= 1 && k < horizon {
            for (d, site) in allocation.der_site.iter().enumerate() {
                if let Some(site) = site {
                    let gen_q = period.gen_q[&(*site, d)];
                    let expected = der.nu_ref - der.kq * gen_q;
                    r.droop = r
                        .droop
                        .max((period.volt[site.0] - expected).abs().f64());
                }
            }
        }
    }
    r
}
