//! Assembly of the two-stage planning program.
//!
//! Stage I decides site development and DER placement; stage II, per
//! failure scenario, schedules line repairs over periods `0..=K` and
//! dispatches islanded microgrids under a linearized branch-flow model.
//! Both stages share one sparse [`MipModel`]:
//!
//! * placement: sites open iff they hold a unit, each unit at most one
//!   site, fleet budget `G`, plus symmetry-breaking over the homogeneous
//!   units;
//! * repair: no repairs in period 0, at most `Y` repairs per period, the
//!   substation tie restored exactly at `K`, and down-status propagation
//!   `kline[k] = kline[k-1] - yline[k]` for damaged lines;
//! * dispatch: DER output boxes tied to placement, voltage droop on open
//!   sites for periods `1..K-1`, load-control windows, voltage-driven
//!   disconnection and net nodal power;
//! * power flow: radial flow conservation, zero flow on down lines and the
//!   branch voltage-drop equation `nu_j = nu_i - 2(r P + x Q)` enforced on
//!   operational lines.
//!
//! The objective minimizes site-development cost plus the scenario-averaged
//! cost of load control and shedding over all periods.

use std::collections::BTreeSet;

use crate::failure::FailureScenario;
use crate::network::{DerSpec, EdgeId, Feeder, NodeId};
use crate::scalar::Scalar;

use super::{
    Allocation, MipModel, ModelError, ModelMeta, ResourceLimits, ScopedVar, Sense, Var,
};

/// Global squared-voltage bounds on every voltage column, p.u.
pub const NU_LOWER: f64 = 0.5;
pub const NU_UPPER: f64 = 1.5;

/// Failed edges of a scenario plus the substation tie, which is always cut
/// at period 0 and restored at `K`.
pub fn effective_failed<T: Scalar>(
    feeder: &Feeder<T>,
    scenario: &FailureScenario<T>,
) -> BTreeSet<EdgeId> {
    let mut eff: BTreeSet<EdgeId> = scenario.failed_edges().map(EdgeId).collect();
    eff.insert(feeder.substation_edge());
    eff
}

/// Smallest horizon that leaves room for every repair: one idle period plus
/// `ceil(max_s |eff_s| / Y)` working periods.
pub fn repair_horizon<T: Scalar>(
    scenarios: &[FailureScenario<T>],
    feeder: &Feeder<T>,
    repairs_per_period: usize,
) -> usize {
    let worst = scenarios
        .iter()
        .map(|s| effective_failed(feeder, s).len())
        .max()
        .unwrap_or(1);
    1 + worst.div_ceil(repairs_per_period)
}

/// Closed-form column count of the assembled model, used to cross-check
/// the builder.
pub fn expected_column_count<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenarios: &[FailureScenario<T>],
    limits: &ResourceLimits,
) -> usize {
    let sites = feeder.site_count();
    let demand_nodes = feeder.demand_node_count();
    let edges = feeder.edges().len();
    let periods = limits.horizon + 1;
    let stage1 = sites + sites * der.count;
    let stage2: usize = scenarios
        .iter()
        .map(|s| {
            let eff = effective_failed(feeder, s).len();
            periods * (2 * eff + 7 * demand_nodes + 1 + 2 * sites * der.count + 2 * edges)
        })
        .sum();
    stage1 + stage2
}

enum Mode<'a> {
    Saa,
    SecondStage(&'a Allocation),
}

/// Build the scenario-coupled program: stage-I placement columns shared
/// across scenarios, one repair/dispatch block per scenario with uniform
/// weight `1/S`, and the full objective including site-development cost.
pub fn build_saa_mip<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenarios: &[FailureScenario<T>],
    limits: &ResourceLimits,
) -> Result<MipModel<T>, ModelError> {
    assemble(feeder, der, scenarios, limits, Mode::Saa)
}

/// Build the recourse problem of one scenario under a fixed allocation:
/// identical rows, placement columns pinned to the allocation, objective
/// without the site-development term and without scenario averaging.
pub fn build_second_stage<T: Scalar>(
    allocation: &Allocation,
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenario: &FailureScenario<T>,
    limits: &ResourceLimits,
) -> Result<MipModel<T>, ModelError> {
    allocation.validate(feeder, der, limits.der_budget)?;
    assemble(
        feeder,
        der,
        std::slice::from_ref(scenario),
        limits,
        Mode::SecondStage(allocation),
    )
}

fn assemble<T: Scalar>(
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    scenarios: &[FailureScenario<T>],
    limits: &ResourceLimits,
    mode: Mode<'_>,
) -> Result<MipModel<T>, ModelError> {
    if scenarios.is_empty() {
        return Err(ModelError::NoScenarios);
    }
    for (s, scenario) in scenarios.iter().enumerate() {
        if scenario.failed.len() != feeder.edges().len() {
            return Err(ModelError::ScenarioEdgeMismatch {
                scenario: s,
                got: scenario.failed.len(),
                want: feeder.edges().len(),
            });
        }
    }

    let horizon = limits.horizon;
    let needed = repair_horizon(scenarios, feeder, limits.repairs_per_period);
    let mut model = MipModel::new();
    if horizon < needed {
        model.warnings.push(format!(
            "horizon K={horizon} is below the feasible repair horizon {needed}; \
             the model may be infeasible"
        ));
    }

    let total_pc: T = feeder.loads().iter().map(|l| l.pc_max).sum();
    let total_qc: T = feeder.loads().iter().map(|l| l.qc_max).sum();
    let l_flow_p = T::c(2.0) * total_pc;
    let l_flow_q = T::c(2.0) * total_qc;
    let l_volt = T::c(2.0) * (T::c(NU_UPPER) - T::c(NU_LOWER));
    model.record_big_m("flow_p", l_flow_p);
    model.record_big_m("flow_q", l_flow_q);
    model.record_big_m("volt", l_volt);
    model.record_big_m("nu_lower", T::c(NU_LOWER));
    model.record_big_m("nu_upper", T::c(NU_UPPER));

    let charge_site_cost = matches!(mode, Mode::Saa);
    let weight = match mode {
        Mode::Saa => T::one() / T::c(scenarios.len() as f64),
        Mode::SecondStage(_) => T::one(),
    };

    // Stage-I columns first: branching explores placement before schedules.
    for (site, cost) in feeder.sites() {
        let objective = if charge_site_cost { cost } else { T::zero() };
        model.register(
            ScopedVar::stage1(Var::SiteOpen { site }),
            T::zero(),
            T::one(),
            true,
            objective,
        );
    }
    for (site, _) in feeder.sites() {
        for d in 0..der.count {
            model.register(
                ScopedVar::stage1(Var::DerAssign { site, der: d }),
                T::zero(),
                T::one(),
                true,
                T::zero(),
            );
        }
    }

    let effs: Vec<BTreeSet<EdgeId>> = scenarios
        .iter()
        .map(|s| effective_failed(feeder, s))
        .collect();

    for (s, eff) in effs.iter().enumerate() {
        register_scenario_columns(&mut model, feeder, der, limits, s, eff, weight);
    }

    add_placement_rows(&mut model, feeder, der, limits);
    for (s, eff) in effs.iter().enumerate() {
        add_repair_rows(&mut model, feeder, limits, s, eff);
        add_dispatch_rows(&mut model, feeder, der, limits, s, l_volt);
        add_powerflow_rows(&mut model, feeder, limits, s, eff, l_flow_p, l_flow_q, l_volt);
    }

    if let Mode::SecondStage(allocation) = mode {
        for (site, _) in feeder.sites() {
            let open = allocation.open_sites.contains(&site);
            let col = model
                .registry
                .col(ScopedVar::stage1(Var::SiteOpen { site }))?;
            model.fix_column(col, if open { T::one() } else { T::zero() });
            for d in 0..der.count {
                let assigned = allocation.der_site[d] == Some(site);
                let col = model
                    .registry
                    .col(ScopedVar::stage1(Var::DerAssign { site, der: d }))?;
                model.fix_column(col, if assigned { T::one() } else { T::zero() });
            }
        }
    }

    model.meta = ModelMeta {
        horizon,
        der_budget: limits.der_budget,
        repairs_per_period: limits.repairs_per_period,
        scenario_count: scenarios.len(),
    };
    debug_assert_eq!(
        model.cols.len(),
        expected_column_count(feeder, der, scenarios, limits),
        "builder column count must match the closed-form counter"
    );
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn register_scenario_columns<T: Scalar>(
    model: &mut MipModel<T>,
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    limits: &ResourceLimits,
    s: usize,
    eff: &BTreeSet<EdgeId>,
    weight: T,
) {
    let horizon = limits.horizon;
    let substation = feeder.substation_edge();
    let demand_nodes = || (1..feeder.node_count()).map(NodeId);

    // Repair binaries, period-major so early periods branch first.
    for k in 0..=horizon {
        for &edge in eff {
            let col = model.register(
                ScopedVar::stage2(s, Var::Repair { edge, period: k }),
                T::zero(),
                T::one(),
                true,
                T::zero(),
            );
            if k == 0 {
                model.fix_column(col, T::zero());
            } else if k == horizon && edge == substation {
                model.fix_column(col, T::one());
            }
        }
    }
    for k in 0..=horizon {
        for &edge in eff {
            let col = model.register(
                ScopedVar::stage2(s, Var::Down { edge, period: k }),
                T::zero(),
                T::one(),
                true,
                T::zero(),
            );
            if k == 0 {
                model.fix_column(col, T::one());
            }
        }
    }
    for k in 0..=horizon {
        for node in demand_nodes() {
            let shed_cost = feeder.load(node).cost_shed;
            model.register(
                ScopedVar::stage2(s, Var::Shed { node, period: k }),
                T::zero(),
                T::one(),
                true,
                weight * shed_cost,
            );
        }
    }

    let q_cap = der.pf_max * der.pg_max;
    for k in 0..=horizon {
        for (site, _) in feeder.sites() {
            for d in 0..der.count {
                model.register(
                    ScopedVar::stage2(
                        s,
                        Var::GenP {
                            site,
                            der: d,
                            period: k,
                        },
                    ),
                    T::zero(),
                    der.pg_max,
                    false,
                    T::zero(),
                );
            }
        }
    }
    for k in 0..=horizon {
        for (site, _) in feeder.sites() {
            for d in 0..der.count {
                model.register(
                    ScopedVar::stage2(
                        s,
                        Var::GenQ {
                            site,
                            der: d,
                            period: k,
                        },
                    ),
                    -q_cap,
                    q_cap,
                    false,
                    T::zero(),
                );
            }
        }
    }
    for k in 0..=horizon {
        for node in demand_nodes() {
            let control_cost = feeder.load(node).cost_control;
            model.register(
                ScopedVar::stage2(s, Var::ServeFrac { node, period: k }),
                T::zero(),
                T::one(),
                false,
                -weight * control_cost,
            );
        }
    }
    // Constant part of the control cost: sum_k sum_i C_LC.
    let control_total: T = feeder.loads().iter().map(|l| l.cost_control).sum();
    model.objective_offset += weight * T::c((horizon + 1) as f64) * control_total;

    for k in 0..=horizon {
        for node in demand_nodes() {
            let load = feeder.load(node);
            model.register(
                ScopedVar::stage2(s, Var::LoadP { node, period: k }),
                T::zero(),
                load.pc_max,
                false,
                T::zero(),
            );
        }
    }
    for k in 0..=horizon {
        for node in demand_nodes() {
            let load = feeder.load(node);
            model.register(
                ScopedVar::stage2(s, Var::LoadQ { node, period: k }),
                T::zero(),
                load.qc_max,
                false,
                T::zero(),
            );
        }
    }
    for k in 0..=horizon {
        for node in demand_nodes() {
            model.register(
                ScopedVar::stage2(s, Var::NetP { node, period: k }),
                T::neg_infinity(),
                T::infinity(),
                false,
                T::zero(),
            );
        }
    }
    for k in 0..=horizon {
        for node in demand_nodes() {
            model.register(
                ScopedVar::stage2(s, Var::NetQ { node, period: k }),
                T::neg_infinity(),
                T::infinity(),
                false,
                T::zero(),
            );
        }
    }
    let l_flow_p = T::c(2.0) * feeder.loads().iter().map(|l| l.pc_max).sum();
    let l_flow_q = T::c(2.0) * feeder.loads().iter().map(|l| l.qc_max).sum();
    for k in 0..=horizon {
        for e in 0..feeder.edges().len() {
            model.register(
                ScopedVar::stage2(
                    s,
                    Var::FlowP {
                        edge: EdgeId(e),
                        period: k,
                    },
                ),
                -l_flow_p,
                l_flow_p,
                false,
                T::zero(),
            );
        }
    }
    for k in 0..=horizon {
        for e in 0..feeder.edges().len() {
            model.register(
                ScopedVar::stage2(
                    s,
                    Var::FlowQ {
                        edge: EdgeId(e),
                        period: k,
                    },
                ),
                -l_flow_q,
                l_flow_q,
                false,
                T::zero(),
            );
        }
    }
    for k in 0..=horizon {
        for node in (0..feeder.node_count()).map(NodeId) {
            let col = model.register(
                ScopedVar::stage2(s, Var::VoltSq { node, period: k }),
                T::c(NU_LOWER),
                T::c(NU_UPPER),
                false,
                T::zero(),
            );
            if node.0 == 0 && k == horizon {
                model.fix_column(col, feeder.nu_nom);
            }
        }
    }
}

fn add_placement_rows<T: Scalar>(
    model: &mut MipModel<T>,
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    limits: &ResourceLimits,
) {
    let reg = |model: &MipModel<T>, v: Var| {
        model
            .registry
            .col(ScopedVar::stage1(v))
            .expect("stage-1 variable registered")
    };
    for (site, _) in feeder.sites() {
        let ysc = reg(model, Var::SiteOpen { site });
        let mut terms = vec![(ysc, T::one())];
        for d in 0..der.count {
            terms.push((reg(model, Var::DerAssign { site, der: d }), -T::one()));
        }
        model.add_row(
            format!("site_needs_der[{site}]"),
            "site_needs_der",
            Sense::Le,
            T::zero(),
            terms,
        );
        let mut terms = vec![(ysc, -T::c(der.count as f64))];
        for d in 0..der.count {
            terms.push((reg(model, Var::DerAssign { site, der: d }), T::one()));
        }
        model.add_row(
            format!("site_capacity[{site}]"),
            "site_capacity",
            Sense::Le,
            T::zero(),
            terms,
        );
    }
    for d in 0..der.count {
        let terms: Vec<(usize, T)> = feeder
            .sites()
            .map(|(site, _)| (reg(model, Var::DerAssign { site, der: d }), T::one()))
            .collect();
        if !terms.is_empty() {
            model.add_row(
                format!("der_single_site[{d}]"),
                "der_single_site",
                Sense::Le,
                T::one(),
                terms,
            );
        }
    }
    let all: Vec<(usize, T)> = feeder
        .sites()
        .flat_map(|(site, _)| {
            (0..der.count).map(move |d| (Var::DerAssign { site, der: d }, T::one()))
        })
        .map(|(v, c)| (reg(model, v), c))
        .collect();
    if !all.is_empty() {
        model.add_row(
            "der_budget",
            "der_budget",
            Sense::Le,
            T::c(limits.der_budget as f64),
            all,
        );
    }
    // Homogeneous units: unit d may be used only if unit d-1 is.
    for d in 1..der.count {
        let mut terms: Vec<(usize, T)> = Vec::new();
        for (site, _) in feeder.sites() {
            terms.push((reg(model, Var::DerAssign { site, der: d }), T::one()));
            terms.push((reg(model, Var::DerAssign { site, der: d - 1 }), -T::one()));
        }
        if !terms.is_empty() {
            model.add_row(
                format!("der_symmetry[{d}]"),
                "der_symmetry",
                Sense::Le,
                T::zero(),
                terms,
            );
        }
    }
}

fn add_repair_rows<T: Scalar>(
    model: &mut MipModel<T>,
    feeder: &Feeder<T>,
    limits: &ResourceLimits,
    s: usize,
    eff: &BTreeSet<EdgeId>,
) {
    let reg = |model: &MipModel<T>, v: Var| {
        model
            .registry
            .col(ScopedVar::stage2(s, v))
            .expect("stage-2 variable registered")
    };
    let _ = feeder;
    for k in 0..=limits.horizon {
        let terms: Vec<(usize, T)> = eff
            .iter()
            .map(|&edge| (reg(model, Var::Repair { edge, period: k }), T::one()))
            .collect();
        model.add_row(
            format!("repair_cap[{k},{s}]"),
            "repair_cap",
            Sense::Le,
            T::c(limits.repairs_per_period as f64),
            terms,
        );
    }
    for &edge in eff {
        for k in 1..=limits.horizon {
            let down_now = reg(model, Var::Down { edge, period: k });
            let down_prev = reg(model, Var::Down { edge, period: k - 1 });
            let repaired = reg(model, Var::Repair { edge, period: k });
            model.add_row(
                format!("line_status[{edge},{k},{s}]"),
                "line_status",
                Sense::Eq,
                T::zero(),
                vec![
                    (down_now, T::one()),
                    (down_prev, -T::one()),
                    (repaired, T::one()),
                ],
            );
        }
    }
}

fn add_dispatch_rows<T: Scalar>(
    model: &mut MipModel<T>,
    feeder: &Feeder<T>,
    der: &DerSpec<T>,
    limits: &ResourceLimits,
    s: usize,
    l_volt: T,
) {
    let reg2 = |model: &MipModel<T>, v: Var| {
        model
            .registry
            .col(ScopedVar::stage2(s, v))
            .expect("stage-2 variable registered")
    };
    let reg1 = |model: &MipModel<T>, v: Var| {
        model
            .registry
            .col(ScopedVar::stage1(v))
            .expect("stage-1 variable registered")
    };
    let horizon = limits.horizon;
    for k in 0..=horizon {
        for (site, _) in feeder.sites() {
            for d in 0..der.count {
                let assign = reg1(model, Var::DerAssign { site, der: d });
                let gen_p = reg2(
                    model,
                    Var::GenP {
                        site,
                        der: d,
                        period: k,
                    },
                );
                let gen_q = reg2(
                    model,
                    Var::GenQ {
                        site,
                        der: d,
                        period: k,
                    },
                );
                model.add_row(
                    format!("gen_p_cap[{site},{d},{k},{s}]"),
                    "gen_p_cap",
                    Sense::Le,
                    T::zero(),
                    vec![(gen_p, T::one()), (assign, -der.pg_max)],
                );
                model.add_row(
                    format!("gen_q_hi[{site},{d},{k},{s}]"),
                    "gen_q_cap",
                    Sense::Le,
                    T::zero(),
                    vec![(gen_q, T::one()), (gen_p, -der.pf_max)],
                );
                model.add_row(
                    format!("gen_q_lo[{site},{d},{k},{s}]"),
                    "gen_q_cap",
                    Sense::Le,
                    T::zero(),
                    vec![(gen_q, -T::one()), (gen_p, -der.pf_max)],
                );
                // Droop couples voltage and reactive output on open sites
                // in the islanded periods 1..K-1 only.
                if k >= 1 && k < horizon {
                    let volt = reg2(model, Var::VoltSq { node: site, period: k });
                    model.add_row(
                        format!("droop_hi[{site},{d},{k},{s}]"),
                        "droop",
                        Sense::Le,
                        der.nu_ref + l_volt,
                        vec![(volt, T::one()), (gen_q, der.kq), (assign, l_volt)],
                    );
                    model.add_row(
                        format!("droop_lo[{site},{d},{k},{s}]"),
                        "droop",
                        Sense::Le,
                        l_volt - der.nu_ref,
                        vec![(volt, -T::one()), (gen_q, -der.kq), (assign, l_volt)],
                    );
                }
            }
        }
        for node in (1..feeder.node_count()).map(NodeId) {
            let load = feeder.load(node);
            let serve = reg2(model, Var::ServeFrac { node, period: k });
            let shed = reg2(model, Var::Shed { node, period: k });
            let load_p = reg2(model, Var::LoadP { node, period: k });
            let load_q = reg2(model, Var::LoadQ { node, period: k });
            let net_p = reg2(model, Var::NetP { node, period: k });
            let net_q = reg2(model, Var::NetQ { node, period: k });
            let volt = reg2(model, Var::VoltSq { node, period: k });
            model.add_row(
                format!("load_p[{node},{k},{s}]"),
                "load_p",
                Sense::Eq,
                T::zero(),
                vec![(load_p, T::one()), (serve, -load.pc_max)],
            );
            model.add_row(
                format!("load_q[{node},{k},{s}]"),
                "load_q",
                Sense::Eq,
                T::zero(),
                vec![(load_q, T::one()), (serve, -load.qc_max)],
            );
            model.add_row(
                format!("serve_min[{node},{k},{s}]"),
                "serve_min",
                Sense::Ge,
                load.lcc_min,
                vec![(serve, T::one()), (shed, load.lcc_min)],
            );
            model.add_row(
                format!("serve_max[{node},{k},{s}]"),
                "serve_max",
                Sense::Le,
                T::one(),
                vec![(serve, T::one()), (shed, T::one())],
            );
            model.add_row(
                format!("shed_undervolt[{node},{k},{s}]"),
                "shed_undervolt",
                Sense::Ge,
                load.nu_min,
                vec![(shed, T::one()), (volt, T::one())],
            );
            model.add_row(
                format!("shed_overvolt[{node},{k},{s}]"),
                "shed_overvolt",
                Sense::Ge,
                -load.nu_max,
                vec![(shed, T::one()), (volt, -T::one())],
            );
            let mut net_p_terms = vec![(net_p, T::one()), (load_p, -T::one())];
            let mut net_q_terms = vec![(net_q, T::one()), (load_q, -T::one())];
            if feeder.is_site(node) {
                for d in 0..der.count {
                    net_p_terms.push((
                        reg2(
                            model,
                            Var::GenP {
                                site: node,
                                der: d,
                                period: k,
                            },
                        ),
                        T::one(),
                    ));
                    net_q_terms.push((
                        reg2(
                            model,
                            Var::GenQ {
                                site: node,
                                der: d,
                                period: k,
                            },
                        ),
                        T::one(),
                    ));
                }
            }
            model.add_row(
                format!("net_p[{node},{k},{s}]"),
                "net_p",
                Sense::Eq,
                T::zero(),
                net_p_terms,
            );
            model.add_row(
                format!("net_q[{node},{k},{s}]"),
                "net_q",
                Sense::Eq,
                T::zero(),
                net_q_terms,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn add_powerflow_rows<T: Scalar>(
    model: &mut MipModel<T>,
    feeder: &Feeder<T>,
    limits: &ResourceLimits,
    s: usize,
    eff: &BTreeSet<EdgeId>,
    l_flow_p: T,
    l_flow_q: T,
    l_volt: T,
) {
    let reg = |model: &MipModel<T>, v: Var| {
        model
            .registry
            .col(ScopedVar::stage2(s, v))
            .expect("stage-2 variable registered")
    };
    for k in 0..=limits.horizon {
        for (e, edge) in feeder.edges().iter().enumerate() {
            let edge_id = EdgeId(e);
            let flow_p = reg(
                model,
                Var::FlowP {
                    edge: edge_id,
                    period: k,
                },
            );
            let flow_q = reg(
                model,
                Var::FlowQ {
                    edge: edge_id,
                    period: k,
                },
            );
            let downstream = edge.to;
            let mut p_terms = vec![(flow_p, T::one())];
            let mut q_terms = vec![(flow_q, T::one())];
            for child in feeder.edges_from(downstream) {
                p_terms.push((
                    reg(
                        model,
                        Var::FlowP {
                            edge: child,
                            period: k,
                        },
                    ),
                    -T::one(),
                ));
                q_terms.push((
                    reg(
                        model,
                        Var::FlowQ {
                            edge: child,
                            period: k,
                        },
                    ),
                    -T::one(),
                ));
            }
            p_terms.push((
                reg(
                    model,
                    Var::NetP {
                        node: downstream,
                        period: k,
                    },
                ),
                -T::one(),
            ));
            q_terms.push((
                reg(
                    model,
                    Var::NetQ {
                        node: downstream,
                        period: k,
                    },
                ),
                -T::one(),
            ));
            model.add_row(
                format!("flow_p_balance[{e},{k},{s}]"),
                "flow_p_balance",
                Sense::Eq,
                T::zero(),
                p_terms,
            );
            model.add_row(
                format!("flow_q_balance[{e},{k},{s}]"),
                "flow_q_balance",
                Sense::Eq,
                T::zero(),
                q_terms,
            );

            let volt_from = reg(
                model,
                Var::VoltSq {
                    node: edge.from,
                    period: k,
                },
            );
            let volt_to = reg(
                model,
                Var::VoltSq {
                    node: edge.to,
                    period: k,
                },
            );
            let two_r = T::c(2.0) * edge.r;
            let two_x = T::c(2.0) * edge.x;
            if eff.contains(&edge_id) {
                let down = reg(
                    model,
                    Var::Down {
                        edge: edge_id,
                        period: k,
                    },
                );
                model.add_row(
                    format!("flow_p_cut_hi[{e},{k},{s}]"),
                    "flow_cut",
                    Sense::Le,
                    l_flow_p,
                    vec![(flow_p, T::one()), (down, l_flow_p)],
                );
                model.add_row(
                    format!("flow_p_cut_lo[{e},{k},{s}]"),
                    "flow_cut",
                    Sense::Le,
                    l_flow_p,
                    vec![(flow_p, -T::one()), (down, l_flow_p)],
                );
                model.add_row(
                    format!("flow_q_cut_hi[{e},{k},{s}]"),
                    "flow_cut",
                    Sense::Le,
                    l_flow_q,
                    vec![(flow_q, T::one()), (down, l_flow_q)],
                );
                model.add_row(
                    format!("flow_q_cut_lo[{e},{k},{s}]"),
                    "flow_cut",
                    Sense::Le,
                    l_flow_q,
                    vec![(flow_q, -T::one()), (down, l_flow_q)],
                );
                model.add_row(
                    format!("volt_drop_hi[{e},{k},{s}]"),
                    "volt_drop",
                    Sense::Le,
                    T::zero(),
                    vec![
                        (volt_to, T::one()),
                        (volt_from, -T::one()),
                        (flow_p, two_r),
                        (flow_q, two_x),
                        (down, -l_volt),
                    ],
                );
                model.add_row(
                    format!("volt_drop_lo[{e},{k},{s}]"),
                    "volt_drop",
                    Sense::Le,
                    T::zero(),
                    vec![
                        (volt_to, -T::one()),
                        (volt_from, T::one()),
                        (flow_p, -two_r),
                        (flow_q, -two_x),
                        (down, -l_volt),
                    ],
                );
            } else {
                model.add_row(
                    format!("volt_drop_eq[{e},{k},{s}]"),
                    "volt_drop",
                    Sense::Eq,
                    T::zero(),
                    vec![
                        (volt_to, T::one()),
                        (volt_from, -T::one()),
                        (flow_p, two_r),
                        (flow_q, two_x),
                    ],
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn no_failure(feeder: &Feeder<f64>) -> FailureScenario<f64> {
        FailureScenario {
            failed: vec![false; feeder.edges().len()],
            prob: 1.0,
        }
    }

    fn scenario_from(feeder: &Feeder<f64>, failed_edges: &[usize]) -> FailureScenario<f64> {
        let mut failed = vec![false; feeder.edges().len()];
        for &e in failed_edges {
            failed[e] = true;
        }
        FailureScenario { failed, prob: 0.5 }
    }

    #[test]
    fn horizon_minimum_case() {
        let feeder = cases::three_node_feeder();
        // substation edge only
        let s = no_failure(&feeder);
        assert_eq!(repair_horizon(&[s], &feeder, 1), 2);
    }

    #[test]
    fn horizon_ceiling_arithmetic() {
        // 6 effective failed edges at Y=2 need 1 + ceil(6/2) = 4 periods
        let feeder = cases::twelve_node_feeder();
        let s = scenario_from(&feeder, &[1, 2, 3, 4, 5]); // plus substation edge 0
        assert_eq!(effective_failed(&feeder, &s).len(), 6);
        assert_eq!(repair_horizon(&[s], &feeder, 2), 4);
    }

    #[test]
    fn horizon_admits_schematic_schedule() {
        // 5 effective failures (incl. substation) at Y=2 -> K=4; the
        // schedule DE,DI @1 / DK,BC @2 / substation @4 must fit.
        let feeder = cases::twelve_node_feeder();
        let name_edge = |a: &str, b: &str| {
            let fa = feeder.node_by_name(a).unwrap();
            let fb = feeder.node_by_name(b).unwrap();
            feeder
                .edges()
                .iter()
                .position(|e| e.from == fa && e.to == fb)
                .unwrap()
        };
        let failed = [
            name_edge("B", "C"),
            name_edge("D", "E"),
            name_edge("D", "I"),
            name_edge("D", "K"),
        ];
        let s = scenario_from(&feeder, &failed);
        let horizon = repair_horizon(&[s.clone()], &feeder, 2);
        assert_eq!(horizon, 4);
        // feasibility: schedule within the per-period cap, substation last
        let mut schedule: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
        schedule[1] = vec![name_edge("D", "E"), name_edge("D", "I")];
        schedule[2] = vec![name_edge("D", "K"), name_edge("B", "C")];
        schedule[horizon] = vec![0];
        for period in &schedule {
            assert!(period.len() <= 2);
        }
        let all: Vec<usize> = schedule.iter().flatten().copied().collect();
        let eff = effective_failed(&feeder, &s);
        assert_eq!(all.len(), eff.len());
    }

    fn placement_families() -> [&'static str; 5] {
        [
            "site_needs_der",
            "site_capacity",
            "der_single_site",
            "der_budget",
            "der_symmetry",
        ]
    }

    /// Enumerate all stage-1 assignments and keep those satisfying every
    /// placement row.
    fn feasible_placements(
        model: &MipModel<f64>,
        sites: &[NodeId],
        der_count: usize,
    ) -> Vec<(Vec<bool>, Vec<Vec<bool>>)> {
        let families = placement_families();
        let mut feasible = Vec::new();
        let site_bits = sites.len();
        let assign_bits = sites.len() * der_count;
        for site_mask in 0..(1usize << site_bits) {
            for assign_mask in 0..(1usize << assign_bits) {
                let open: Vec<bool> = (0..site_bits).map(|i| site_mask >> i & 1 == 1).collect();
                let assign: Vec<Vec<bool>> = (0..site_bits)
                    .map(|i| {
                        (0..der_count)
                            .map(|d| assign_mask >> (i * der_count + d) & 1 == 1)
                            .collect()
                    })
                    .collect();
                let mut x = vec![0.0; model.cols.len()];
                for (i, &site) in sites.iter().enumerate() {
                    let col = model
                        .registry
                        .col(ScopedVar::stage1(Var::SiteOpen { site }))
                        .unwrap();
                    x[col] = open[i] as u8 as f64;
                    for d in 0..der_count {
                        let col = model
                            .registry
                            .col(ScopedVar::stage1(Var::DerAssign { site, der: d }))
                            .unwrap();
                        x[col] = assign[i][d] as u8 as f64;
                    }
                }
                let ok = model
                    .rows
                    .iter()
                    .filter(|r| families.contains(&r.family.as_str()))
                    .all(|r| {
                        let activity = model.row_activity(r, &x);
                        match r.sense {
                            Sense::Le => activity <= r.rhs + 1e-9,
                            Sense::Ge => activity >= r.rhs - 1e-9,
                            Sense::Eq => (activity - r.rhs).abs() <= 1e-9,
                        }
                    });
                if ok {
                    feasible.push((open, assign));
                }
            }
        }
        feasible
    }

    #[test]
    fn placement_budget_zero_forces_all_zero() {
        let feeder = cases::twelve_node_feeder_six_loads();
        let der = cases::twelve_node_der(2, 1.2);
        let limits = ResourceLimits::new(0, 1, 2).unwrap();
        let model = build_saa_mip(&feeder, &der, &[no_failure(&feeder)], &limits).unwrap();
        let sites: Vec<NodeId> = feeder.sites().map(|(i, _)| i).collect();
        let feasible = feasible_placements(&model, &sites, der.count);
        for (open, assign) in feasible {
            assert!(open.iter().all(|&o| !o));
            assert!(assign.iter().flatten().all(|&a| !a));
        }
    }

    #[test]
    fn placement_single_site_two_units() {
        // |U|=1, |D|=2, G=2: both units can land on the site
        let feeder = cases::three_node_feeder();
        let der = DerSpec {
            count: 2,
            ..cases::three_node_der()
        };
        let limits = ResourceLimits::new(2, 1, 2).unwrap();
        let model = build_saa_mip(&feeder, &der, &[no_failure(&feeder)], &limits).unwrap();
        let sites: Vec<NodeId> = feeder.sites().map(|(i, _)| i).collect();
        let feasible = feasible_placements(&model, &sites, der.count);
        let max_units = feasible
            .iter()
            .map(|(_, assign)| assign.iter().flatten().filter(|&&a| a).count())
            .max()
            .unwrap();
        assert_eq!(max_units, 2);
        let best = feasible
            .iter()
            .find(|(_, assign)| assign.iter().flatten().filter(|&&a| a).count() == 2)
            .unwrap();
        assert!(best.0[0], "site must open to hold both units");
    }

    #[test]
    fn placement_two_sites_one_unit_enumeration() {
        // |U|=2, |D|=2, G=1 under symmetry breaking: empty, unit 0 at
        // either site -> 3 feasible assignments.
        let mut feeder = cases::twelve_node_feeder_six_loads();
        // restrict to two sites: A and D
        let a = feeder.node_by_name("A").unwrap();
        let d = feeder.node_by_name("D").unwrap();
        let keep = [a, d];
        let drop: Vec<NodeId> = feeder
            .sites()
            .map(|(i, _)| i)
            .filter(|i| !keep.contains(i))
            .collect();
        feeder = rebuild_without_sites(&feeder, &drop);
        let der = cases::twelve_node_der(2, 1.2);
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        let model = build_saa_mip(&feeder, &der, &[no_failure(&feeder)], &limits).unwrap();
        let sites: Vec<NodeId> = feeder.sites().map(|(i, _)| i).collect();
        assert_eq!(sites.len(), 2);
        let feasible = feasible_placements(&model, &sites, der.count);
        assert_eq!(feasible.len(), 3);
    }

    fn rebuild_without_sites(feeder: &Feeder<f64>, drop: &[NodeId]) -> Feeder<f64> {
        let site_cost: std::collections::BTreeMap<NodeId, f64> = feeder
            .sites()
            .filter(|(i, _)| !drop.contains(i))
            .collect();
        Feeder::new(
            feeder.node_names().to_vec(),
            feeder.edges().to_vec(),
            feeder.loads().to_vec(),
            site_cost,
            feeder.nu_nom,
            feeder.base,
        )
        .unwrap()
    }

    /// Enumerate all repair schedules consistent with the repair rows.
    fn feasible_schedules(
        model: &MipModel<f64>,
        s: usize,
        eff: &[EdgeId],
        horizon: usize,
    ) -> Vec<Vec<Option<usize>>> {
        // assignment per effective edge: Some(period) or never repaired
        let mut out = Vec::new();
        let options = horizon + 1; // periods 1..=K plus "never"
        let total = options.pow(eff.len() as u32);
        'outer: for code in 0..total {
            let mut c = code;
            let mut plan = Vec::new();
            for _ in eff {
                let v = c % options;
                c /= options;
                plan.push(if v == 0 { None } else { Some(v) });
            }
            // evaluate yline/kline from the plan
            let mut x = vec![0.0; model.cols.len()];
            for (idx, &edge) in eff.iter().enumerate() {
                for k in 0..=horizon {
                    let repair_col = model
                        .registry
                        .col(ScopedVar::stage2(s, Var::Repair { edge, period: k }))
                        .unwrap();
                    let down_col = model
                        .registry
                        .col(ScopedVar::stage2(s, Var::Down { edge, period: k }))
                        .unwrap();
                    let repaired_now = plan[idx] == Some(k);
                    x[repair_col] = repaired_now as u8 as f64;
                    let down = match plan[idx] {
                        Some(p) => k < p,
                        None => true,
                    };
                    x[down_col] = down as u8 as f64;
                }
            }
            // check fixed bounds and repair rows
            for (j, col) in model.cols.iter().enumerate() {
                if col.binary && (x[j] < col.lower - 1e-9 || x[j] > col.upper + 1e-9) {
                    continue 'outer;
                }
            }
            let ok = model
                .rows
                .iter()
                .filter(|r| r.family == "repair_cap" || r.family == "line_status")
                .all(|r| {
                    let activity = model.row_activity(r, &x);
                    match r.sense {
                        Sense::Le => activity <= r.rhs + 1e-9,
                        Sense::Ge => activity >= r.rhs - 1e-9,
                        Sense::Eq => (activity - r.rhs).abs() <= 1e-9,
                    }
                });
            if ok {
                out.push(plan);
            }
        }
        out
    }

    #[test]
    fn repair_no_failures_forces_substation_at_horizon() {
        let feeder = cases::three_node_feeder();
        let der = cases::three_node_der();
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        let scenario = no_failure(&feeder);
        let model = build_saa_mip(&feeder, &der, &[scenario.clone()], &limits).unwrap();
        let eff: Vec<EdgeId> = effective_failed(&feeder, &scenario).into_iter().collect();
        assert_eq!(eff, vec![feeder.substation_edge()]);
        let schedules = feasible_schedules(&model, 0, &eff, limits.horizon);
        assert_eq!(schedules, vec![vec![Some(2)]]);
    }

    #[test]
    fn repair_one_failure_unique_schedule() {
        // one failed edge plus the substation tie, Y=1, K=2: the failed
        // edge must go in period 1 (or never), the substation in period 2.
        let feeder = cases::three_node_feeder();
        let der = cases::three_node_der();
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        let scenario = scenario_from(&feeder, &[1]);
        let model = build_saa_mip(&feeder, &der, &[scenario.clone()], &limits).unwrap();
        let eff: Vec<EdgeId> = effective_failed(&feeder, &scenario).into_iter().collect();
        let schedules = feasible_schedules(&model, 0, &eff, limits.horizon);
        // eff sorted: [substation(0), failed(1)]
        let expected: Vec<Vec<Option<usize>>> =
            vec![vec![Some(2), None], vec![Some(2), Some(1)]];
        let mut got = schedules;
        got.sort();
        let mut want = expected;
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn schematic_schedule_is_feasible() {
        let feeder = cases::twelve_node_feeder();
        let der = cases::twelve_node_der(1, 2.2);
        let name_edge = |a: &str, b: &str| {
            let fa = feeder.node_by_name(a).unwrap();
            let fb = feeder.node_by_name(b).unwrap();
            EdgeId(
                feeder
                    .edges()
                    .iter()
                    .position(|e| e.from == fa && e.to == fb)
                    .unwrap(),
            )
        };
        let failed = [
            name_edge("B", "C").0,
            name_edge("D", "E").0,
            name_edge("D", "I").0,
            name_edge("D", "K").0,
        ];
        let scenario = scenario_from(&feeder, &failed);
        let limits = ResourceLimits::new(1, 2, 4).unwrap();
        let model = build_saa_mip(&feeder, &der, &[scenario.clone()], &limits).unwrap();

        let plan: Vec<(EdgeId, Option<usize>)> = vec![
            (feeder.substation_edge(), Some(4)),
            (name_edge("B", "C"), Some(2)),
            (name_edge("D", "E"), Some(1)),
            (name_edge("D", "I"), Some(1)),
            (name_edge("D", "K"), Some(2)),
        ];
        let mut x = vec![0.0; model.cols.len()];
        for &(edge, period) in &plan {
            for k in 0..=limits.horizon {
                let repair_col = model
                    .registry
                    .col(ScopedVar::stage2(0, Var::Repair { edge, period: k }))
                    .unwrap();
                let down_col = model
                    .registry
                    .col(ScopedVar::stage2(0, Var::Down { edge, period: k }))
                    .unwrap();
                x[repair_col] = (period == Some(k)) as u8 as f64;
                x[down_col] = match period {
                    Some(p) => (k < p) as u8 as f64,
                    None => 1.0,
                };
            }
        }
        for r in model
            .rows
            .iter()
            .filter(|r| r.family == "repair_cap" || r.family == "line_status")
        {
            let activity = model.row_activity(r, &x);
            let ok = match r.sense {
                Sense::Le => activity <= r.rhs + 1e-9,
                Sense::Ge => activity >= r.rhs - 1e-9,
                Sense::Eq => (activity - r.rhs).abs() <= 1e-9,
            };
            assert!(ok, "row {} violated by the schematic schedule", r.name);
        }
    }

    #[test]
    fn column_count_matches_closed_form() {
        let feeder = cases::twelve_node_feeder_six_loads();
        let der = cases::twelve_node_der(2, 1.2);
        let limits = ResourceLimits::new(2, 2, 4).unwrap();
        let scenarios = vec![
            no_failure(&feeder),
            scenario_from(&feeder, &[1, 4, 6]),
            scenario_from(&feeder, &[2, 3]),
        ];
        let model = build_saa_mip(&feeder, &der, &scenarios, &limits).unwrap();
        assert_eq!(
            model.cols.len(),
            expected_column_count(&feeder, &der, &scenarios, &limits)
        );
        let stats = model.stats();
        assert_eq!(stats.cols, model.cols.len());
        assert!(stats.binaries > 0);
    }

    #[test]
    fn no_scenarios_is_an_error() {
        let feeder = cases::three_node_feeder();
        let der = cases::three_node_der();
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        assert!(matches!(
            build_saa_mip(&feeder, &der, &[], &limits),
            Err(ModelError::NoScenarios)
        ));
    }

    #[test]
    fn duplicate_scenarios_accepted() {
        let feeder = cases::three_node_feeder();
        let der = cases::three_node_der();
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        let s = no_failure(&feeder);
        let model = build_saa_mip(&feeder, &der, &[s.clone(), s], &limits).unwrap();
        assert_eq!(model.meta.scenario_count, 2);
    }

    #[test]
    fn short_horizon_warns() {
        let feeder = cases::twelve_node_feeder();
        let der = cases::twelve_node_der(1, 2.2);
        let scenario = scenario_from(&feeder, &[1, 2, 3, 4, 5, 6]);
        let limits = ResourceLimits::new(1, 1, 2).unwrap();
        let model = build_saa_mip(&feeder, &der, &[scenario], &limits).unwrap();
        assert!(!model.warnings.is_empty());
    }

    #[test]
    fn second_stage_rejects_bad_allocation() {
        let feeder = cases::three_node_feeder();
        let der = cases::three_node_der();
        let limits = ResourceLimits::new(0, 1, 2).unwrap();
        let mut allocation = Allocation::empty(der.count);
        allocation.open_sites.insert(NodeId(2));
        allocation.der_site[0] = Some(NodeId(2));
        // budget 0 makes this infeasible
        assert!(build_second_stage(
            &allocation,
            &feeder,
            &der,
            &no_failure(&feeder),
            &limits
        )
        .is_err());
    }
}
