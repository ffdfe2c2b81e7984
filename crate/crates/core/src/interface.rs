//! The interface model: data sources, views and interactions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::oracle::plan_schema;
use crate::plan::{ChoiceDomain, ChoiceId, ChoiceKind, ChoiceNode, Operand, PlanNode, Predicate};
use crate::relation::Schema;
use crate::value::ColumnType;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub name: String,
    /// CSV file, relative to the data directory.
    pub path: String,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub name: String,
    pub plan: PlanNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Continuous,
    Discrete,
}

impl InteractionKind {
    pub fn name(self) -> &'static str {
        match self {
            InteractionKind::Continuous => "continuous",
            InteractionKind::Discrete => "discrete",
        }
    }
}

/// A user action that rebinds some choices of one view and must refresh it
/// within `latency_bound_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub name: String,
    pub bound_choices: BTreeSet<ChoiceId>,
    pub kind: InteractionKind,
    pub latency_bound_ms: f64,
    pub view: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub spec_version: u32,
    pub sources: Vec<Source>,
    pub views: Vec<View>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

impl InterfaceSpec {
    pub fn view(&self, name: &str) -> Option<&View> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn source(&self, name: &str) -> Option<&Source> {
        self.sources.iter().find(|s| s.name == name)
    }

    pub fn interaction(&self, name: &str) -> Option<&Interaction> {
        self.interactions.iter().find(|i| i.name == name)
    }

    pub fn catalog(&self) -> BTreeMap<String, Schema> {
        self.sources.iter().map(|s| (s.name.clone(), s.schema.clone())).collect()
    }

    /// All choice nodes with the view that declares them, in view order.
    pub fn choices(&self) -> Vec<(&str, &ChoiceNode)> {
        self.views
            .iter()
            .flat_map(|v| v.plan.choices().into_iter().map(move |c| (v.name.as_str(), c)))
            .collect()
    }

    pub fn choice(&self, id: &str) -> Option<&ChoiceNode> {
        self.choices().into_iter().find(|(_, c)| c.choice_id == id).map(|(_, c)| c)
    }

    pub fn range_pairs(&self) -> Vec<(ChoiceId, ChoiceId)> {
        self.views.iter().flat_map(|v| v.plan.range_pairs()).collect()
    }

    pub fn interactions_of<'a>(&'a self, view: &'a str) -> impl Iterator<Item = &'a Interaction> + 'a {
        self.interactions.iter().filter(move |i| i.view == view)
    }

    /// Copy with every latency bound multiplied by `factor`.
    pub fn with_scaled_bounds(&self, factor: f64) -> InterfaceSpec {
        let mut s = self.clone();
        for i in &mut s.interactions {
            i.latency_bound_ms *= factor;
        }
        s
    }
}

/// One violation found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "diagnostic", rename_all = "snake_case")]
pub enum Diagnostic {
    #[error("unsupported spec_version {found}")]
    UnsupportedVersion { found: u32 },
    #[error("duplicate {what} name `{name}`")]
    DuplicateName { what: String, name: String },
    #[error("view `{view}` scans unknown relation `{relation}`")]
    UnknownRelation { view: String, relation: String },
    #[error("view `{view}`: {message}")]
    PlanError { view: String, message: String },
    #[error("view `{view}` contains a slot placeholder")]
    SlotInSpec { view: String },
    #[error("choice `{0}` is declared more than once")]
    DuplicateChoice(ChoiceId),
    #[error("choice `{choice}` has an invalid domain: {message}")]
    InvalidDomain { choice: ChoiceId, message: String },
    #[error("choice `{choice}` on column `{column}`: domain type {found} does not match column type {expected}")]
    DomainTypeMismatch {
        choice: ChoiceId,
        column: String,
        expected: ColumnType,
        found: String,
    },
    #[error("interaction `{interaction}` refers to unknown view `{view}`")]
    UnknownView { interaction: String, view: String },
    #[error("interaction `{0}` binds no choices")]
    EmptyInteraction(String),
    #[error("interaction binds choice `{0}` that its view does not declare")]
    DanglingChoice(ChoiceId),
    #[error("interaction `{interaction}` has non-positive latency bound {bound_ms}")]
    NonPositiveLatency { interaction: String, bound_ms: f64 },
    #[error("choice `{0}` is not bound by any interaction")]
    UnboundChoice(ChoiceId),
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>, what: &str, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            out.push(Diagnostic::DuplicateName {
                what: what.to_string(),
                name: n.to_string(),
            });
        }
    }
}

fn check_literal_domain(choice: &ChoiceNode, column: &str, ty: Option<ColumnType>, out: &mut Vec<Diagnostic>) {
    if let Err(e) = choice.domain.check() {
        out.push(Diagnostic::InvalidDomain {
            choice: choice.choice_id.clone(),
            message: e.to_string(),
        });
        return;
    }
    let Some(ty) = ty else { return };
    let mismatch = match &choice.domain {
        ChoiceDomain::Values(vals) => vals.iter().find(|v| !v.fits(ty)).map(|v| v.type_name().to_string()),
        ChoiceDomain::Interval { lo, .. } => (!lo.fits(ty)).then(|| lo.type_name().to_string()),
        ChoiceDomain::Subplans(_) => Some("subplan".to_string()),
    };
    if let Some(found) = mismatch {
        out.push(Diagnostic::DomainTypeMismatch {
            choice: choice.choice_id.clone(),
            column: column.to_string(),
            expected: ty,
            found,
        });
    }
}

fn check_predicate(pred: &Predicate, input: Option<&Schema>, out: &mut Vec<Diagnostic>) {
    for conj in pred.conjuncts() {
        let column = conj.columns().first().map(|c| c.to_string()).unwrap_or_default();
        let ty = input.and_then(|s| s.field(&column)).map(|f| f.ty);
        for op in conj.operands() {
            if let Operand::Choice(c) = op {
                check_literal_domain(c, &column, ty, out);
            }
        }
    }
}

/// Checks every reference and type invariant of an interface. An empty result
/// means it is well formed.
pub fn validate_spec(spec: &InterfaceSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.spec_version != SPEC_VERSION {
        out.push(Diagnostic::UnsupportedVersion {
            found: spec.spec_version,
        });
    }
    duplicates(spec.sources.iter().map(|s| s.name.as_str()), "source", &mut out);
    duplicates(spec.views.iter().map(|s| s.name.as_str()), "view", &mut out);
    duplicates(spec.interactions.iter().map(|s| s.name.as_str()), "interaction", &mut out);

    let catalog = spec.catalog();
    let mut choice_seen = BTreeSet::new();
    for view in &spec.views {
        let mut plan_ok = true;
        for rel in view.plan.relations() {
            if !catalog.contains_key(&rel) {
                plan_ok = false;
                out.push(Diagnostic::UnknownRelation {
                    view: view.name.clone(),
                    relation: rel,
                });
            }
        }
        if view.plan.contains_slot() {
            plan_ok = false;
            out.push(Diagnostic::SlotInSpec {
                view: view.name.clone(),
            });
        }
        if plan_ok {
            if let Err(e) = plan_schema(&view.plan, &catalog, None) {
                plan_ok = false;
                out.push(Diagnostic::PlanError {
                    view: view.name.clone(),
                    message: e.to_string(),
                });
            }
        }
        for node in view.plan.preorder() {
            match node {
                PlanNode::Filter { input, predicate } => {
                    let schema = if plan_ok {
                        plan_schema(input, &catalog, None).ok()
                    } else {
                        None
                    };
                    check_predicate(predicate, schema.as_ref(), &mut out);
                }
                PlanNode::Choice(c) => {
                    if c.kind() != ChoiceKind::Subplan {
                        out.push(Diagnostic::InvalidDomain {
                            choice: c.choice_id.clone(),
                            message: "a subplan choice needs a subplans domain".to_string(),
                        });
                    } else if let Err(e) = c.domain.check() {
                        out.push(Diagnostic::InvalidDomain {
                            choice: c.choice_id.clone(),
                            message: e.to_string(),
                        });
                    }
                }
                _ => {}
            }
        }
        for c in view.plan.choices() {
            if !choice_seen.insert(c.choice_id.clone()) {
                out.push(Diagnostic::DuplicateChoice(c.choice_id.clone()));
            }
        }
    }

    let mut bound = BTreeSet::new();
    for inter in &spec.interactions {
        if !(inter.latency_bound_ms > 0.0) {
            out.push(Diagnostic::NonPositiveLatency {
                interaction: inter.name.clone(),
                bound_ms: inter.latency_bound_ms,
            });
        }
        if inter.bound_choices.is_empty() {
            out.push(Diagnostic::EmptyInteraction(inter.name.clone()));
        }
        let Some(view) = spec.view(&inter.view) else {
            out.push(Diagnostic::UnknownView {
                interaction: inter.name.clone(),
                view: inter.view.clone(),
            });
            continue;
        };
        let declared = view.plan.choice_ids();
        for id in &inter.bound_choices {
            if declared.contains(id) {
                bound.insert(id.clone());
            } else {
                out.push(Diagnostic::DanglingChoice(id.clone()));
            }
        }
    }
    for id in &choice_seen {
        if !bound.contains(id) {
            out.push(Diagnostic::UnboundChoice(id.clone()));
        }
    }
    out
}
