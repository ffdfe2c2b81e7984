//! Physical plans: per-view operator chains with site assignments.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::deploy::SiteId;
use crate::plan::{ChoiceId, PlanNode};
use crate::structures::StructureKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PhysOp {
    /// Moves the build input, computed at `from` over `relations`, to the build site.
    ShipTable {
        relations: Vec<String>,
        from: SiteId,
        to: SiteId,
    },
    Build {
        kind: StructureKind,
        input: PlanNode,
        site: SiteId,
    },
    /// Holds built structures. A replicated cache holds one instance per
    /// assignment of `keyed_by`; otherwise a single instance that is rebuilt
    /// whenever a key choice changes.
    Cache {
        site: SiteId,
        keyed_by: BTreeSet<ChoiceId>,
        replicate: bool,
    },
    Ship {
        from: SiteId,
        to: SiteId,
    },
    Eval {
        site: SiteId,
    },
    /// Evaluates `plan` at `site`; a `slot` leaf reads the input operator's output.
    Residual {
        site: SiteId,
        plan: PlanNode,
    },
    Render,
}

impl PhysOp {
    pub fn site(&self) -> Option<SiteId> {
        match self {
            PhysOp::ShipTable { to, .. } | PhysOp::Ship { to, .. } => Some(*to),
            PhysOp::Build { site, .. } | PhysOp::Cache { site, .. } | PhysOp::Eval { site } | PhysOp::Residual { site, .. } => {
                Some(*site)
            }
            PhysOp::Render => Some(SiteId::Client),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PhysOp::ShipTable { relations, from, to } => alloc::format!("ShipTable({}) {from}->{to}", relations.join(",")),
            PhysOp::Build { kind, site, .. } => alloc::format!("Build({})@{site}", kind.describe()),
            PhysOp::Cache {
                site,
                keyed_by,
                replicate,
            } => {
                let keys: Vec<&str> = keyed_by.iter().map(String::as_str).collect();
                let mode = if *replicate { " replicated" } else { "" };
                alloc::format!("Cache[{}{mode}]@{site}", keys.join(","))
            }
            PhysOp::Ship { from, to } => alloc::format!("Ship {from}->{to}"),
            PhysOp::Eval { site } => alloc::format!("Eval@{site}"),
            PhysOp::Residual { site, plan } => alloc::format!("Residual[{} nodes]@{site}", plan.node_count()),
            PhysOp::Render => "Render@client".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: usize,
    #[serde(default)]
    pub inputs: Vec<usize>,
    #[serde(flatten)]
    pub op: PhysOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPlan {
    pub view: String,
    pub ops: Vec<OpNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleApplication {
    pub rule: Rule,
    pub view: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub views: Vec<ViewPlan>,
    pub provenance: Vec<RuleApplication>,
}

impl PhysicalPlan {
    pub fn view(&self, name: &str) -> Option<&ViewPlan> {
        self.views.iter().find(|v| v.view == name)
    }

    pub fn operator_count(&self) -> usize {
        self.views.iter().map(|v| v.ops.len()).sum()
    }

    pub fn used_rules(&self) -> BTreeSet<Rule> {
        self.provenance.iter().map(|r| r.rule).collect()
    }

    /// One line per view, for listings.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for v in &self.views {
            let ops: Vec<String> = v.ops.iter().map(|o| o.op.label()).collect();
            parts.push(alloc::format!("{}: {}", v.view, ops.join(" > ")));
        }
        parts.join("; ")
    }

    pub fn validate(&self) -> Result<(), PlanShapeError> {
        let mut seen = BTreeSet::new();
        for v in &self.views {
            if !seen.insert(v.view.as_str()) {
                return Err(PlanShapeError::DuplicateView(v.view.clone()));
            }
            v.strategy()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanShapeError {
    #[error("view `{0}` appears twice")]
    DuplicateView(String),
    #[error("view `{view}`: {reason}")]
    Malformed { view: String, reason: String },
}

/// The interpreted form of a structure-backed view plan.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredView<'a> {
    pub kind: &'a StructureKind,
    pub build_input: &'a PlanNode,
    pub build_site: SiteId,
    /// Site where the cache lives and where eval runs.
    pub eval_site: SiteId,
    pub keyed_by: &'a BTreeSet<ChoiceId>,
    pub replicate: bool,
    pub residual_site: SiteId,
    pub residual: &'a PlanNode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy<'a> {
    /// The whole view plan runs at `site` and its result is shipped to the client.
    Baseline { site: SiteId, plan: &'a PlanNode },
    Structured(StructuredView<'a>),
}

impl<'a> Strategy<'a> {
    pub fn residual_site(&self) -> SiteId {
        match self {
            Strategy::Baseline { site, .. } => *site,
            Strategy::Structured(s) => s.residual_site,
        }
    }
}

impl ViewPlan {
    /// Reads the operator chain ending in `Render` and checks the placement
    /// invariants: builds upstream of their eval, ships covering every site
    /// change, residual at or downstream of eval, render at the client.
    pub fn strategy(&self) -> Result<Strategy<'_>, PlanShapeError> {
        let bad = |reason: &str| PlanShapeError::Malformed {
            view: self.view.clone(),
            reason: reason.to_string(),
        };
        let by_id = |id: usize| self.ops.iter().find(|o| o.id == id);
        let render = self
            .ops
            .iter()
            .find(|o| o.op == PhysOp::Render)
            .ok_or_else(|| bad("no Render operator"))?;
        let mut chain: Vec<&OpNode> = alloc::vec![render];
        let mut cur = render;
        while let Some(&input) = cur.inputs.first() {
            if cur.inputs.len() > 1 {
                return Err(bad("operators take at most one input"));
            }
            cur = by_id(input).ok_or_else(|| bad("dangling operator input"))?;
            if chain.len() > self.ops.len() {
                return Err(bad("operator cycle"));
            }
            chain.push(cur);
        }
        if chain.len() != self.ops.len() {
            return Err(bad("operators not reachable from Render"));
        }
        chain.reverse();

        // Track the site holding the data flowing along the chain.
        let mut at: Option<SiteId> = None;
        let mut build = None;
        let mut cache = None;
        let mut eval_site = None;
        let mut residual = None;
        for node in &chain {
            match &node.op {
                PhysOp::ShipTable { from, to, .. } => {
                    if at.is_some() || from <= to || *from != SiteId::Cloud {
                        return Err(bad("ShipTable must start the chain and move data from the cloud"));
                    }
                    at = Some(*to);
                }
                PhysOp::Build { kind, input, site } => {
                    if build.is_some() || at.is_some_and(|s| s != *site) {
                        return Err(bad("Build must run where its input is"));
                    }
                    if at.is_none() && *site != SiteId::Cloud {
                        return Err(bad("Build away from the cloud needs a ShipTable"));
                    }
                    build = Some((kind, input, *site));
                    at = Some(*site);
                }
                PhysOp::Ship { from, to } => {
                    if at != Some(*from) || from == to {
                        return Err(bad("Ship must leave the site holding the data"));
                    }
                    at = Some(*to);
                }
                PhysOp::Cache {
                    site,
                    keyed_by,
                    replicate,
                } => {
                    if build.is_none() || cache.is_some() || at != Some(*site) {
                        return Err(bad("Cache must follow a Build at the same site"));
                    }
                    cache = Some((*site, keyed_by, *replicate));
                }
                PhysOp::Eval { site } => {
                    if cache.map(|c| c.0) != Some(*site) || eval_site.is_some() {
                        return Err(bad("Eval must read a Cache at its own site"));
                    }
                    eval_site = Some(*site);
                }
                PhysOp::Residual { site, plan } => {
                    if residual.is_some() {
                        return Err(bad("only one Residual per view"));
                    }
                    if at.is_some_and(|s| s != *site) {
                        return Err(bad("Residual must run where its input is"));
                    }
                    if at.is_none() && *site != SiteId::Cloud {
                        return Err(bad("a Residual without input runs at the cloud"));
                    }
                    if eval_site.is_none() && build.is_some() {
                        return Err(bad("Residual before Eval"));
                    }
                    residual = Some((*site, plan));
                    at = Some(*site);
                }
                PhysOp::Render => {
                    if at != Some(SiteId::Client) || residual.is_none() {
                        return Err(bad("Render needs the residual output at the client"));
                    }
                }
            }
        }
        let (residual_site, residual_plan) = residual.ok_or_else(|| bad("no Residual"))?;
        match (build, cache, eval_site) {
            (None, None, None) => {
                if residual_plan.contains_slot() {
                    return Err(bad("baseline residual reads a slot"));
                }
                Ok(Strategy::Baseline {
                    site: residual_site,
                    plan: residual_plan,
                })
            }
            (Some((kind, input, build_site)), Some((cache_site, keyed_by, replicate)), Some(e)) => {
                if !build_site.upstream_or_equal(cache_site) || !e.upstream_or_equal(residual_site) {
                    return Err(bad("data may only flow towards the client"));
                }
                Ok(Strategy::Structured(StructuredView {
                    kind,
                    build_input: input,
                    build_site,
                    eval_site: e,
                    keyed_by,
                    replicate,
                    residual_site,
                    residual: residual_plan,
                }))
            }
            _ => Err(bad("Build, Cache and Eval must appear together")),
        }
    }
}

/// Assembles the operator chain for a view.
pub(crate) struct ChainBuilder {
    ops: Vec<OpNode>,
}

impl ChainBuilder {
    pub(crate) fn new() -> Self {
        ChainBuilder { ops: Vec::new() }
    }

    pub(crate) fn push(&mut self, op: PhysOp) {
        let id = self.ops.len();
        let inputs = if id == 0 { Vec::new() } else { alloc::vec![id - 1] };
        self.ops.push(OpNode { id, inputs, op });
    }

    pub(crate) fn ship(&mut self, from: SiteId, to: SiteId) {
        if from != to {
            self.push(PhysOp::Ship { from, to });
        }
    }

    pub(crate) fn finish(self, view: &str) -> ViewPlan {
        ViewPlan {
            view: view.to_string(),
            ops: self.ops,
        }
    }
}
