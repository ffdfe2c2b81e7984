//! Statistics-based latency and footprint estimates for physical plans.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binding::{default_binding, enumerate_assignments, DEFAULT_BINDING_CAP};
use crate::deploy::{DeploymentModel, SiteId};
use crate::interface::{Interaction, InterfaceSpec};
use crate::physical::{PhysicalPlan, PlanShapeError, Strategy, StructuredView, ViewPlan};
use crate::plan::{AggFunc, ChoiceDomain, PlanNode};
use crate::stats::{ColumnStats, DatabaseStats};
use crate::structures::{self, EstimateError, StructureEstimate, StructureKind};

/// Milliseconds per unit of work for each primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Per row touched by a scan, filter or projection.
    pub c_scan: f64,
    /// Per row inserted into a hash table.
    pub c_hash: f64,
    /// Per row returned by an index probe.
    pub c_probe: f64,
    /// Per `n log n` unit of a sort.
    pub c_sort: f64,
    /// Per cube cell written or read.
    pub c_cell: f64,
}

impl Default for Calibration {
    /// Fixed reference constants, independent of the machine.
    fn default() -> Self {
        Calibration {
            c_scan: 2e-5,
            c_hash: 1e-4,
            c_probe: 5e-4,
            c_sort: 5e-5,
            c_cell: 5e-5,
        }
    }
}

impl Calibration {
    pub fn scaled(&self, factor: f64) -> Calibration {
        Calibration {
            c_scan: self.c_scan * factor,
            c_hash: self.c_hash * factor,
            c_probe: self.c_probe * factor,
            c_sort: self.c_sort * factor,
            c_cell: self.c_cell * factor,
        }
    }

    pub fn for_site(&self, dm: &DeploymentModel, site: SiteId) -> Calibration {
        self.scaled(dm.site(site).compute_scale)
    }

    pub fn is_valid(&self) -> bool {
        [self.c_scan, self.c_hash, self.c_probe, self.c_sort, self.c_cell]
            .iter()
            .all(|c| *c > 0.0 && c.is_finite())
    }
}

/// Estimated size and column statistics of an intermediate result.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEstimate {
    pub rows: f64,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl PlanEstimate {
    /// Encoded bytes: a tag byte plus the average width per value.
    pub fn bytes(&self) -> u64 {
        let width: f64 = self.columns.values().map(|c| c.width_bytes + 1.0).sum();
        (self.rows * width) as u64
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("no statistics for relation `{0}`")]
    MissingRelation(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("plan has no operators for view `{0}`")]
    MissingView(String),
    #[error(transparent)]
    Shape(#[from] PlanShapeError),
    #[error("slot used without an input estimate")]
    MissingSlot,
}

fn synthetic_column(rows: f64, width: f64) -> ColumnStats {
    ColumnStats {
        distinct_count: rows as u64,
        min: None,
        max: None,
        null_count: 0,
        width_bytes: width,
    }
}

/// Worst-case cardinality: filters keep every row and joins produce their
/// declared fan-out (or the full cross product when unbounded).
pub fn estimate_plan(plan: &PlanNode, stats: &DatabaseStats, slot: Option<&PlanEstimate>) -> Result<PlanEstimate, CostError> {
    Ok(match plan {
        PlanNode::Scan { relation } => {
            let t = stats.get(relation).ok_or_else(|| CostError::MissingRelation(relation.clone()))?;
            PlanEstimate {
                rows: t.row_count as f64,
                columns: t.columns.clone(),
            }
        }
        PlanNode::Filter { input, .. } => estimate_plan(input, stats, slot)?,
        PlanNode::Project { input, columns } => {
            let mut e = estimate_plan(input, stats, slot)?;
            e.columns.retain(|k, _| columns.contains(k));
            e
        }
        PlanNode::GroupByAgg { input, keys, aggregates } => {
            let e = estimate_plan(input, stats, slot)?;
            let mut groups = 1.0f64;
            let mut columns = BTreeMap::new();
            for k in keys {
                let s = e
                    .columns
                    .get(k)
                    .ok_or_else(|| EstimateError::MissingStats(k.clone()))?;
                groups *= (s.distinct_count + u64::from(s.null_count > 0)).max(1) as f64;
                columns.insert(k.clone(), s.clone());
            }
            let rows = if e.rows == 0.0 { 0.0 } else { groups.min(e.rows) };
            for a in aggregates {
                let width = match (a.func, &a.column) {
                    (AggFunc::Min | AggFunc::Max, Some(c)) => e.columns.get(c).map_or(8.0, |s| s.width_bytes),
                    _ => 8.0,
                };
                columns.insert(a.alias.clone(), synthetic_column(rows, width));
            }
            PlanEstimate { rows, columns }
        }
        PlanNode::Join {
            left,
            right,
            on,
            max_fanout,
        } => {
            let l = estimate_plan(left, stats, slot)?;
            let r = estimate_plan(right, stats, slot)?;
            let rows = match max_fanout {
                Some(f) => l.rows * *f as f64,
                None => l.rows * r.rows,
            };
            let mut columns = l.columns;
            for (name, s) in r.columns {
                let merged = on.iter().any(|k| k.left == name && k.right == name);
                if !merged {
                    columns.entry(name).or_insert(s);
                }
            }
            PlanEstimate { rows, columns }
        }
        PlanNode::Choice(c) => match &c.domain {
            ChoiceDomain::Subplans(alts) => {
                let mut best: Option<PlanEstimate> = None;
                for a in alts {
                    let e = estimate_plan(a, stats, slot)?;
                    if best.as_ref().is_none_or(|b| e.rows * e.bytes() as f64 > b.rows * b.bytes() as f64) {
                        best = Some(e);
                    }
                }
                best.unwrap_or(PlanEstimate {
                    rows: 0.0,
                    columns: BTreeMap::new(),
                })
            }
            _ => PlanEstimate {
                rows: 0.0,
                columns: BTreeMap::new(),
            },
        },
        PlanNode::Slot => slot.cloned().ok_or(CostError::MissingSlot)?,
    })
}

/// Milliseconds to evaluate `plan` by naive iteration.
pub fn plan_cost(plan: &PlanNode, stats: &DatabaseStats, slot: Option<&PlanEstimate>, cal: &Calibration) -> Result<f64, CostError> {
    Ok(match plan {
        PlanNode::Scan { relation } => {
            let t = stats.get(relation).ok_or_else(|| CostError::MissingRelation(relation.clone()))?;
            t.row_count as f64 * cal.c_scan
        }
        PlanNode::Filter { input, .. } | PlanNode::Project { input, .. } => {
            plan_cost(input, stats, slot, cal)? + estimate_plan(input, stats, slot)?.rows * cal.c_scan
        }
        PlanNode::GroupByAgg { input, .. } => {
            plan_cost(input, stats, slot, cal)? + estimate_plan(input, stats, slot)?.rows * cal.c_hash
        }
        PlanNode::Join { left, right, .. } => {
            let out = estimate_plan(plan, stats, slot)?.rows;
            let r = estimate_plan(right, stats, slot)?.rows;
            let l = estimate_plan(left, stats, slot)?.rows;
            plan_cost(left, stats, slot, cal)?
                + plan_cost(right, stats, slot, cal)?
                + (l + r) * cal.c_hash
                + out * cal.c_scan
        }
        PlanNode::Choice(c) => match &c.domain {
            ChoiceDomain::Subplans(alts) => {
                let mut worst = 0.0f64;
                for a in alts {
                    worst = worst.max(plan_cost(a, stats, slot, cal)?);
                }
                worst
            }
            _ => 0.0,
        },
        PlanNode::Slot => 0.0,
    })
}

/// Estimated rows and columns of a structure's eval output.
pub fn eval_output(kind: &StructureKind, input: &PlanEstimate) -> Result<PlanEstimate, CostError> {
    Ok(match kind {
        StructureKind::BaseScan | StructureKind::SortedRangeIndex { .. } => input.clone(),
        StructureKind::HashIndex { keys } => {
            let mut distinct = 1.0f64;
            for k in keys {
                let s = input
                    .columns
                    .get(&k.column)
                    .ok_or_else(|| EstimateError::MissingStats(k.column.clone()))?;
                distinct *= s.distinct_count.max(1) as f64;
            }
            PlanEstimate {
                rows: input.rows / distinct.min(input.rows.max(1.0)),
                columns: input.columns.clone(),
            }
        }
        StructureKind::PrefixSumCube {
            group_keys, measures, ..
        } => {
            let mut groups = 1.0f64;
            let mut columns = BTreeMap::new();
            for k in group_keys {
                let s = input
                    .columns
                    .get(k)
                    .ok_or_else(|| EstimateError::MissingStats(k.clone()))?;
                groups *= (s.distinct_count + u64::from(s.null_count > 0)) as f64;
                columns.insert(k.clone(), s.clone());
            }
            if input.rows == 0.0 {
                groups = 0.0;
            }
            for m in measures {
                columns.insert(m.alias.clone(), synthetic_column(groups, 8.0));
            }
            PlanEstimate { rows: groups, columns }
        }
    })
}

/// Statically known quantities of a structure-backed view.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureCosts {
    pub input: PlanEstimate,
    /// Cloud time to compute the build input.
    pub input_cost_ms: f64,
    /// Estimate at the build site (build cost) and eval site (eval cost).
    pub build: StructureEstimate,
    pub eval: StructureEstimate,
    pub output: PlanEstimate,
}

pub fn structure_costs(
    kind: &StructureKind,
    build_input: &PlanNode,
    build_site: SiteId,
    eval_site: SiteId,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<StructureCosts, CostError> {
    let input = estimate_plan(build_input, stats, None)?;
    let input_cost_ms = plan_cost(build_input, stats, None, &cal.for_site(dm, SiteId::Cloud))?;
    let rows = input.rows as u64;
    let build = structures::estimate(kind, &input.columns, rows, &cal.for_site(dm, build_site))?;
    let eval = structures::estimate(kind, &input.columns, rows, &cal.for_site(dm, eval_site))?;
    let output = eval_output(kind, &input)?;
    Ok(StructureCosts {
        input,
        input_cost_ms,
        build,
        eval,
        output,
    })
}

/// Where an interaction's time goes. `ship_ms` includes the request hop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub build_ms: f64,
    pub eval_ms: f64,
    pub ship_ms: f64,
    pub residual_ms: f64,
    pub total_ms: f64,
}

impl LatencyBreakdown {
    fn finish(mut self) -> Self {
        self.total_ms = self.build_ms + self.eval_ms + self.ship_ms + self.residual_ms;
        self
    }
}

/// Number of cache instances held for `keyed_by` when replicated.
pub fn replica_count(spec: &InterfaceSpec, keyed_by: &BTreeSet<String>) -> u64 {
    match enumerate_assignments(spec, keyed_by, &default_binding(spec), DEFAULT_BINDING_CAP) {
        Ok(it) => it.count() as u64,
        Err(_) => u64::MAX,
    }
}

/// Per-view results of [`assess_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCost {
    pub latency: BTreeMap<String, LatencyBreakdown>,
    pub site_bytes: BTreeMap<SiteId, u64>,
}

fn structured_latency(
    s: &StructuredView<'_>,
    costs: &StructureCosts,
    interaction: &Interaction,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<LatencyBreakdown, CostError> {
    let rebuild = !s.replicate && s.keyed_by.iter().any(|k| interaction.bound_choices.contains(k));
    let mut b = LatencyBreakdown::default();
    let furthest = if rebuild { SiteId::Cloud } else { s.eval_site };
    b.ship_ms += dm.transfer_cost(SiteId::Client, furthest, 0);
    if rebuild {
        b.build_ms += costs.input_cost_ms + costs.build.build_cost_ms;
        b.ship_ms += dm.transfer_cost(SiteId::Cloud, s.build_site, costs.input.bytes());
        b.ship_ms += dm.transfer_cost(s.build_site, s.eval_site, costs.build.size_bytes);
    }
    b.eval_ms += costs.eval.eval_cost_ms;
    b.ship_ms += dm.transfer_cost(s.eval_site, s.residual_site, costs.output.bytes());
    let rcal = cal.for_site(dm, s.residual_site);
    b.residual_ms += plan_cost(s.residual, stats, Some(&costs.output), &rcal)?;
    let out = estimate_plan(s.residual, stats, Some(&costs.output))?;
    b.ship_ms += dm.transfer_cost(s.residual_site, SiteId::Client, out.bytes());
    Ok(b.finish())
}

fn baseline_latency(
    site: SiteId,
    plan: &PlanNode,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<LatencyBreakdown, CostError> {
    let mut b = LatencyBreakdown::default();
    b.ship_ms += dm.transfer_cost(SiteId::Client, site, 0);
    b.residual_ms += plan_cost(plan, stats, None, &cal.for_site(dm, site))?;
    b.ship_ms += dm.transfer_cost(site, SiteId::Client, estimate_plan(plan, stats, None)?.bytes());
    Ok(b.finish())
}

/// Latency of every interaction on the view and the bytes the view keeps
/// resident at each site. `costs` may carry precomputed structure costs.
pub fn assess_view(
    view: &ViewPlan,
    spec: &InterfaceSpec,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
    costs: Option<&StructureCosts>,
) -> Result<ViewCost, CostError> {
    let strategy = view.strategy()?;
    let mut latency = BTreeMap::new();
    let mut site_bytes = BTreeMap::new();
    match &strategy {
        Strategy::Baseline { site, plan } => {
            for i in spec.interactions_of(&view.view) {
                latency.insert(i.name.clone(), baseline_latency(*site, plan, dm, cal, stats)?);
            }
        }
        Strategy::Structured(s) => {
            let owned;
            let costs = match costs {
                Some(c) => c,
                None => {
                    owned = structure_costs(s.kind, s.build_input, s.build_site, s.eval_site, dm, cal, stats)?;
                    &owned
                }
            };
            for i in spec.interactions_of(&view.view) {
                latency.insert(i.name.clone(), structured_latency(s, costs, i, dm, cal, stats)?);
            }
            let copies = if s.replicate { replica_count(spec, s.keyed_by) } else { 1 };
            let bytes = costs.eval.size_bytes.saturating_mul(copies);
            if s.eval_site != SiteId::Cloud || bytes > 0 {
                site_bytes.insert(s.eval_site, bytes);
            }
        }
    }
    Ok(ViewCost { latency, site_bytes })
}

/// Worst-case latency of one interaction under the plan.
pub fn interaction_latency(
    plan: &PhysicalPlan,
    interaction: &Interaction,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<LatencyBreakdown, CostError> {
    let view = plan
        .view(&interaction.view)
        .ok_or_else(|| CostError::MissingView(interaction.view.clone()))?;
    let strategy = view.strategy()?;
    match &strategy {
        Strategy::Baseline { site, plan } => baseline_latency(*site, plan, dm, cal, stats),
        Strategy::Structured(s) => {
            let costs = structure_costs(s.kind, s.build_input, s.build_site, s.eval_site, dm, cal, stats)?;
            structured_latency(s, &costs, interaction, dm, cal, stats)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub interaction: String,
    pub bound_ms: f64,
    pub estimate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_interaction_latency_ms: BTreeMap<String, f64>,
    pub breakdown: BTreeMap<String, LatencyBreakdown>,
    pub site_bytes: BTreeMap<SiteId, u64>,
    pub feasible: bool,
    pub violated: Vec<Violation>,
    #[serde(default)]
    pub over_budget: Vec<SiteId>,
}

impl CostReport {
    /// Smallest slack between a bound and its estimate; `None` without interactions.
    pub fn headroom_ms(&self, spec: &InterfaceSpec) -> Option<f64> {
        spec.interactions
            .iter()
            .filter_map(|i| self.per_interaction_latency_ms.get(&i.name).map(|l| i.latency_bound_ms - l))
            .reduce(f64::min)
    }

    pub fn client_bytes(&self) -> u64 {
        self.site_bytes.get(&SiteId::Client).copied().unwrap_or(0)
    }

    pub fn server_bytes(&self) -> u64 {
        self.site_bytes.get(&SiteId::Server).copied().unwrap_or(0)
    }
}

/// Combines per-view costs into a report and decides feasibility.
pub fn combine(views: &[&ViewCost], spec: &InterfaceSpec, dm: &DeploymentModel) -> CostReport {
    let mut breakdown = BTreeMap::new();
    let mut site_bytes: BTreeMap<SiteId, u64> = SiteId::ALL.iter().map(|&s| (s, 0)).collect();
    for v in views {
        for (k, b) in &v.latency {
            breakdown.insert(k.clone(), *b);
        }
        for (s, b) in &v.site_bytes {
            let e = site_bytes.entry(*s).or_insert(0);
            *e = e.saturating_add(*b);
        }
    }
    let per_interaction_latency_ms: BTreeMap<String, f64> = breakdown.iter().map(|(k, b)| (k.clone(), b.total_ms)).collect();
    let mut violated = Vec::new();
    for i in &spec.interactions {
        let estimate = per_interaction_latency_ms.get(&i.name).copied().unwrap_or(f64::INFINITY);
        if estimate > i.latency_bound_ms {
            violated.push(Violation {
                interaction: i.name.clone(),
                bound_ms: i.latency_bound_ms,
                estimate_ms: estimate,
            });
        }
    }
    let over_budget: Vec<SiteId> = dm.fits(&site_bytes).into_iter().filter(|(_, ok)| !ok).map(|(s, _)| s).collect();
    CostReport {
        per_interaction_latency_ms,
        breakdown,
        site_bytes,
        feasible: violated.is_empty() && over_budget.is_empty(),
        violated,
        over_budget,
    }
}

/// Latencies of every interaction and resident bytes per site.
pub fn assess(
    plan: &PhysicalPlan,
    spec: &InterfaceSpec,
    dm: &DeploymentModel,
    cal: &Calibration,
    stats: &DatabaseStats,
) -> Result<CostReport, CostError> {
    for i in &spec.interactions {
        if plan.view(&i.view).is_none() {
            return Err(CostError::MissingView(i.view.clone()));
        }
    }
    let views: Vec<ViewCost> = plan
        .views
        .iter()
        .map(|v| assess_view(v, spec, dm, cal, stats, None))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&ViewCost> = views.iter().collect();
    Ok(combine(&refs, spec, dm))
}
