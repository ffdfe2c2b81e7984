//! Rule-based enumeration of physical plans, feasibility filtering and the
//! client/server Pareto frontier.
//!
//! Rules, applied per view:
//! - R1: evaluate the bound view plan at the cloud and ship the result.
//! - R2: for each structure match, build at `s1` and cache/eval at `s2`,
//!   with `s1` upstream of or equal to `s2`.
//! - R3: replicate the cache once per value of its enumerated key choices.
//! - R4: run the residual at the eval site or any site downstream of it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::binding::{enumerate_bindings, Binding, DEFAULT_BINDING_CAP};
use crate::cost::{self, Calibration, CostError, CostReport, StructureCosts, ViewCost};
use crate::deploy::{DeploymentModel, SiteId};
use crate::interface::InterfaceSpec;
use crate::physical::{ChainBuilder, PhysOp, PhysicalPlan, Rule, RuleApplication, Strategy, ViewPlan};
use crate::plan::ChoiceId;
use crate::stats::DatabaseStats;
use crate::structures::{match_structures, StructureFamily};

pub const DEFAULT_CANDIDATE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub candidate_cap: usize,
    /// Skip structure rewrites whose build input or residual contains a
    /// join without a declared fan-out bound.
    pub prune_unbounded_joins: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            prune_unbounded_joins: true,
        }
    }
}

/// A structure match rejected by the join-pruning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedMatch {
    pub view: String,
    pub family: StructureFamily,
    pub matched_subplan: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub plans: Vec<PhysicalPlan>,
    /// True when the candidate cap cut the enumeration short.
    pub truncated: bool,
    pub pruned: Vec<PrunedMatch>,
}

#[derive(Debug, Clone)]
struct ViewAlternative {
    plan: ViewPlan,
    provenance: Vec<RuleApplication>,
}

fn applied(rule: Rule, view: &str, detail: String) -> RuleApplication {
    RuleApplication {
        rule,
        view: view.to_string(),
        detail,
    }
}

fn baseline(view: &str, plan: &crate::plan::PlanNode) -> ViewAlternative {
    let mut c = ChainBuilder::new();
    c.push(PhysOp::Residual {
        site: SiteId::Cloud,
        plan: plan.clone(),
    });
    c.ship(SiteId::Cloud, SiteId::Client);
    c.push(PhysOp::Render);
    ViewAlternative {
        plan: c.finish(view),
        provenance: alloc::vec![applied(Rule::R1, view, "evaluate at cloud, ship result to client".into())],
    }
}

fn view_alternatives(
    spec: &InterfaceSpec,
    view: &crate::interface::View,
    cfg: &OptimizerConfig,
    pruned: &mut Vec<PrunedMatch>,
) -> Vec<ViewAlternative> {
    let catalog = spec.catalog();
    let mut out = alloc::vec![baseline(&view.name, &view.plan)];
    if view.plan.choice_ids().is_empty() {
        return out;
    }
    for family in StructureFamily::ALL {
        for m in match_structures(family, &view.plan, &catalog) {
            let residual = m.residual_plan(&view.plan);
            if cfg.prune_unbounded_joins && (m.build_input.has_unbounded_join() || residual.has_unbounded_join()) {
                pruned.push(PrunedMatch {
                    view: view.name.clone(),
                    family,
                    matched_subplan: m.matched_subplan,
                    reason: "join without a declared fan-out bound".into(),
                });
                continue;
            }
            let keys: BTreeSet<ChoiceId> = m.key_choices();
            let can_replicate = !keys.is_empty()
                && keys
                    .iter()
                    .all(|k| spec.choice(k).is_some_and(|c| c.domain.is_enumerated()));
            let relations: Vec<String> = m.build_input.relations().into_iter().collect();
            let modes: &[bool] = if can_replicate { &[false, true] } else { &[false] };
            for s2 in SiteId::ALL {
                for s1 in SiteId::ALL.into_iter().filter(|s1| s1.upstream_or_equal(s2)) {
                    for &replicate in modes {
                        for s3 in SiteId::ALL.into_iter().filter(|s3| s2.upstream_or_equal(*s3)) {
                            let mut c = ChainBuilder::new();
                            if s1 != SiteId::Cloud {
                                c.push(PhysOp::ShipTable {
                                    relations: relations.clone(),
                                    from: SiteId::Cloud,
                                    to: s1,
                                });
                            }
                            c.push(PhysOp::Build {
                                kind: m.kind.clone(),
                                input: m.build_input.clone(),
                                site: s1,
                            });
                            c.ship(s1, s2);
                            c.push(PhysOp::Cache {
                                site: s2,
                                keyed_by: keys.clone(),
                                replicate,
                            });
                            c.push(PhysOp::Eval { site: s2 });
                            c.ship(s2, s3);
                            c.push(PhysOp::Residual {
                                site: s3,
                                plan: residual.clone(),
                            });
                            c.ship(s3, SiteId::Client);
                            c.push(PhysOp::Render);

                            let mut prov = alloc::vec![applied(
                                Rule::R2,
                                &view.name,
                                alloc::format!(
                                    "{} on node {} build@{s1} eval@{s2}",
                                    m.kind.describe(),
                                    m.matched_subplan
                                ),
                            )];
                            if replicate {
                                let k: Vec<&str> = keys.iter().map(String::as_str).collect();
                                prov.push(applied(Rule::R3, &view.name, alloc::format!("replicate by {}", k.join(","))));
                            }
                            prov.push(applied(Rule::R4, &view.name, alloc::format!("residual@{s3}")));
                            out.push(ViewAlternative {
                                plan: c.finish(&view.name),
                                provenance: prov,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Every candidate physical plan: the cross product of per-view alternatives,
/// in a deterministic order, up to `cfg.candidate_cap`.
pub fn enumerate_candidates(spec: &InterfaceSpec, cfg: &OptimizerConfig) -> CandidateSet {
    let mut pruned = Vec::new();
    let per_view: Vec<Vec<ViewAlternative>> = spec
        .views
        .iter()
        .map(|v| view_alternatives(spec, v, cfg, &mut pruned))
        .collect();
    let mut plans = Vec::new();
    let mut truncated = false;
    let mut cursor = alloc::vec![0usize; per_view.len()];
    if per_view.iter().all(|v| !v.is_empty()) {
        loop {
            if plans.len() >= cfg.candidate_cap {
                truncated = true;
                break;
            }
            let mut views = Vec::with_capacity(per_view.len());
            let mut provenance = Vec::new();
            for (alts, &i) in per_view.iter().zip(&cursor) {
                views.push(alts[i].plan.clone());
                provenance.extend(alts[i].provenance.iter().cloned());
            }
            plans.push(PhysicalPlan { views, provenance });
            let mut k = per_view.len();
            let mut advanced = false;
            while k > 0 {
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < per_view[k].len() {
                    advanced = true;
                    break;
                }
                cursor[k] = 0;
            }
            if !advanced {
                break;
            }
        }
    }
    CandidateSet {
        plans,
        truncated,
        pruned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessed {
    pub plan: PhysicalPlan,
    pub report: CostReport,
}

/// Assesses candidates, sharing work between candidates that repeat a view
/// alternative or a (structure, build site, eval site) triple.
pub fn assess_all(
    candidates: &[PhysicalPlan],
    spec: &InterfaceSpec,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<Vec<Assessed>, CostError> {
    let mut structure_memo: BTreeMap<(String, SiteId, SiteId), StructureCosts> = BTreeMap::new();
    let mut view_memo: BTreeMap<String, ViewCost> = BTreeMap::new();
    let mut out = Vec::with_capacity(candidates.len());
    for plan in candidates {
        for i in &spec.interactions {
            if plan.view(&i.view).is_none() {
                return Err(CostError::MissingView(i.view.clone()));
            }
        }
        let mut keys = Vec::with_capacity(plan.views.len());
        for v in &plan.views {
            let key = serde_json::to_string(v).expect("plans serialize");
            if !view_memo.contains_key(&key) {
                let costs = match v.strategy()? {
                    Strategy::Baseline { .. } => None,
                    Strategy::Structured(s) => {
                        let skey = (
                            serde_json::to_string(&(s.kind, s.build_input)).expect("plans serialize"),
                            s.build_site,
                            s.eval_site,
                        );
                        if !structure_memo.contains_key(&skey) {
                            let c = cost::structure_costs(s.kind, s.build_input, s.build_site, s.eval_site, dm, cal, stats)?;
                            structure_memo.insert(skey.clone(), c);
                        }
                        Some(skey)
                    }
                };
                let vc = cost::assess_view(v, spec, dm, cal, stats, costs.as_ref().map(|k| &structure_memo[k]))?;
                view_memo.insert(key.clone(), vc);
            }
            keys.push(key);
        }
        let views: Vec<&ViewCost> = keys.iter().map(|k| &view_memo[k]).collect();
        out.push(Assessed {
            plan: plan.clone(),
            report: cost::combine(&views, spec, dm),
        });
    }
    Ok(out)
}

/// Why no candidate is feasible, and the candidate that came closest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleInterface {
    pub interaction: Option<String>,
    pub binding: Option<Binding>,
    pub bound_ms: Option<f64>,
    pub estimate_ms: Option<f64>,
    pub over_budget: Vec<SiteId>,
    pub closest_plan: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub feasible: Vec<Assessed>,
    pub infeasible: Option<InfeasibleInterface>,
}

fn shortfall(r: &CostReport) -> f64 {
    r.violated
        .iter()
        .map(|v| if v.bound_ms > 0.0 { v.estimate_ms / v.bound_ms } else { f64::INFINITY })
        .fold(if r.over_budget.is_empty() { 0.0 } else { 1.0 }, f64::max)
}

/// Keeps the feasible candidates. When none are left, reports the
/// interaction and bound that the closest candidate misses.
pub fn feasible_set(assessed: Vec<Assessed>, spec: &InterfaceSpec) -> FeasibleSet {
    let closest = assessed
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            shortfall(&a.report)
                .partial_cmp(&shortfall(&b.report))
                .unwrap_or(Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(_, a)| a.clone());
    let feasible: Vec<Assessed> = assessed.into_iter().filter(|a| a.report.feasible).collect();
    let infeasible = if feasible.is_empty() {
        Some(match closest {
            Some(c) => {
                let worst = c.report.violated.iter().max_by(|a, b| {
                    (a.estimate_ms / a.bound_ms)
                        .partial_cmp(&(b.estimate_ms / b.bound_ms))
                        .unwrap_or(Ordering::Equal)
                });
                let binding = worst.and_then(|w| {
                    let i = spec.interaction(&w.interaction)?;
                    enumerate_bindings(spec, i, DEFAULT_BINDING_CAP).ok()?.next()
                });
                InfeasibleInterface {
                    interaction: worst.map(|w| w.interaction.clone()),
                    binding,
                    bound_ms: worst.map(|w| w.bound_ms),
                    estimate_ms: worst.map(|w| w.estimate_ms),
                    over_budget: c.report.over_budget.clone(),
                    closest_plan: Some(c.plan.summary()),
                }
            }
            None => InfeasibleInterface {
                interaction: None,
                binding: None,
                bound_ms: None,
                estimate_ms: None,
                over_budget: Vec::new(),
                closest_plan: None,
            },
        })
    } else {
        None
    };
    FeasibleSet { feasible, infeasible }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub plan: PhysicalPlan,
    pub client_bytes: u64,
    pub server_bytes: u64,
    /// Smallest slack to a latency bound; `None` when the interface has no interactions.
    pub max_latency_headroom_ms: Option<f64>,
    pub report: CostReport,
}

/// `Less` when `a` is the preferred representative of a tie.
fn tie_break(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    let head = |p: &ParetoPoint| p.max_latency_headroom_ms.unwrap_or(f64::INFINITY);
    head(b)
        .partial_cmp(&head(a))
        .unwrap_or(Ordering::Equal)
        .then(a.plan.operator_count().cmp(&b.plan.operator_count()))
        .then_with(|| a.plan.provenance.cmp(&b.plan.provenance))
}

pub fn dominates(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && a != b
}

/// Non-dominated feasible plans on (client bytes, server bytes), one per
/// distinct point, sorted by client bytes.
pub fn pareto(feasible: &[Assessed], spec: &InterfaceSpec) -> Vec<ParetoPoint> {
    let mut best: BTreeMap<(u64, u64), ParetoPoint> = BTreeMap::new();
    for a in feasible {
        let p = ParetoPoint {
            plan: a.plan.clone(),
            client_bytes: a.report.client_bytes(),
            server_bytes: a.report.server_bytes(),
            max_latency_headroom_ms: a.report.headroom_ms(spec),
            report: a.report.clone(),
        };
        let key = (p.client_bytes, p.server_bytes);
        match best.get(&key) {
            Some(cur) if tie_break(cur, &p) != Ordering::Greater => {}
            _ => {
                best.insert(key, p);
            }
        }
    }
    let points: Vec<(u64, u64)> = best.keys().copied().collect();
    best.into_iter()
        .filter(|(k, _)| !points.iter().any(|o| dominates(*o, *k)))
        .map(|(_, p)| p)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub candidates: usize,
    pub truncated: bool,
    pub pruned: Vec<PrunedMatch>,
    pub feasible: usize,
    pub frontier: Vec<ParetoPoint>,
    pub infeasible: Option<InfeasibleInterface>,
}

/// Enumerate, assess, filter and reduce to the frontier.
pub fn optimize(
    spec: &InterfaceSpec,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult, CostError> {
    let cands = enumerate_candidates(spec, cfg);
    let assessed = assess_all(&cands.plans, spec, dm, cal, stats)?;
    let fs = feasible_set(assessed, spec);
    let frontier = pareto(&fs.feasible, spec);
    Ok(OptimizeResult {
        candidates: cands.plans.len(),
        truncated: cands.truncated,
        pruned: cands.pruned,
        feasible: fs.feasible.len(),
        frontier,
        infeasible: fs.infeasible,
    })
}
