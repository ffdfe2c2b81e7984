//! Binding choices to values, and enumerating the binding space.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::interface::{Interaction, InterfaceSpec};
use crate::plan::{ChoiceDomain, ChoiceId, NodeRef, Operand, PlanNode, Predicate};
use crate::value::ScalarValue;

/// A value for one choice: a literal, or the index of a subplan alternative.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundValue {
    Alternative { alternative: usize },
    Value(ScalarValue),
}

impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundValue::Alternative { alternative } => write!(f, "alt#{alternative}"),
            BoundValue::Value(v) => write!(f, "{v}"),
        }
    }
}

impl From<ScalarValue> for BoundValue {
    fn from(v: ScalarValue) -> Self {
        BoundValue::Value(v)
    }
}

/// Map from choice id to bound value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(BTreeMap<ChoiceId, BoundValue>);

impl Binding {
    pub fn new() -> Self {
        Binding(BTreeMap::new())
    }

    pub fn with(mut self, id: impl Into<ChoiceId>, value: impl Into<BoundValue>) -> Self {
        self.0.insert(id.into(), value.into());
        self
    }

    pub fn set(&mut self, id: impl Into<ChoiceId>, value: BoundValue) {
        self.0.insert(id.into(), value);
    }

    pub fn get(&self, id: &str) -> Option<&BoundValue> {
        self.0.get(id)
    }

    pub fn value(&self, id: &str) -> Option<&ScalarValue> {
        match self.0.get(id) {
            Some(BoundValue::Value(v)) => Some(v),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChoiceId, &BoundValue)> {
        self.0.iter()
    }

    /// Overwrites entries of `self` with those of `other`.
    pub fn merge(&mut self, other: &Binding) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Restriction to the given ids (missing ids are skipped).
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a ChoiceId>) -> Binding {
        Binding(
            ids.into_iter()
                .filter_map(|id| self.0.get(id).map(|v| (id.clone(), v.clone())))
                .collect(),
        )
    }

    /// True if both bindings agree on every id in `ids`.
    pub fn agrees_on<'a>(&self, other: &Binding, ids: impl IntoIterator<Item = &'a ChoiceId>) -> bool {
        ids.into_iter().all(|id| self.0.get(id) == other.0.get(id))
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "${k}={v}")?;
        }
        f.write_str("}")
    }
}

impl FromIterator<(ChoiceId, BoundValue)> for Binding {
    fn from_iter<T: IntoIterator<Item = (ChoiceId, BoundValue)>>(iter: T) -> Self {
        Binding(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindError {
    #[error("choice `{0}` is not bound")]
    UnboundChoice(ChoiceId),
    #[error("value {value} is outside the domain of choice `{choice}`")]
    OutOfDomain { choice: ChoiceId, value: BoundValue },
    #[error("range ${low} > ${high}")]
    EmptyRange { low: ChoiceId, high: ChoiceId },
}

fn bound_literal(choice: &crate::plan::ChoiceNode, b: &Binding) -> Result<ScalarValue, BindError> {
    let v = b
        .get(&choice.choice_id)
        .ok_or_else(|| BindError::UnboundChoice(choice.choice_id.clone()))?;
    if !choice.domain.contains(v) {
        return Err(BindError::OutOfDomain {
            choice: choice.choice_id.clone(),
            value: v.clone(),
        });
    }
    match v {
        BoundValue::Value(s) => Ok(s.clone()),
        BoundValue::Alternative { .. } => Err(BindError::OutOfDomain {
            choice: choice.choice_id.clone(),
            value: v.clone(),
        }),
    }
}

fn bind_operand(op: &Operand, b: &Binding) -> Result<Operand, BindError> {
    match op {
        Operand::Literal(v) => Ok(Operand::Literal(v.clone())),
        Operand::Choice(c) => bound_literal(c, b).map(Operand::Literal),
    }
}

pub(crate) fn bind_predicate(p: &Predicate, b: &Binding) -> Result<Predicate, BindError> {
    Ok(match p {
        Predicate::Cmp { column, op, value } => Predicate::Cmp {
            column: column.clone(),
            op: *op,
            value: bind_operand(value, b)?,
        },
        Predicate::Between { column, low, high } => {
            let lo = bind_operand(low, b)?;
            let hi = bind_operand(high, b)?;
            if let (Operand::Choice(lc), Operand::Choice(hc), Operand::Literal(l), Operand::Literal(h)) =
                (low, high, &lo, &hi)
            {
                if l.try_cmp(h).is_ok_and(|o| o == core::cmp::Ordering::Greater) {
                    return Err(BindError::EmptyRange {
                        low: lc.choice_id.clone(),
                        high: hc.choice_id.clone(),
                    });
                }
            }
            Predicate::Between {
                column: column.clone(),
                low: lo,
                high: hi,
            }
        }
        Predicate::And(ps) => Predicate::And(ps.iter().map(|q| bind_predicate(q, b)).collect::<Result<_, _>>()?),
    })
}

/// Substitutes every choice reached in `plan`. Choices inside unselected
/// subplan alternatives are dropped along with the alternative.
pub fn bind(plan: &PlanNode, b: &Binding) -> Result<PlanNode, BindError> {
    use alloc::boxed::Box;
    Ok(match plan {
        PlanNode::Scan { .. } | PlanNode::Slot => plan.clone(),
        PlanNode::Filter { input, predicate } => PlanNode::Filter {
            input: Box::new(bind(input, b)?),
            predicate: bind_predicate(predicate, b)?,
        },
        PlanNode::Project { input, columns } => PlanNode::Project {
            input: Box::new(bind(input, b)?),
            columns: columns.clone(),
        },
        PlanNode::GroupByAgg { input, keys, aggregates } => PlanNode::GroupByAgg {
            input: Box::new(bind(input, b)?),
            keys: keys.clone(),
            aggregates: aggregates.clone(),
        },
        PlanNode::Join {
            left,
            right,
            on,
            max_fanout,
        } => PlanNode::Join {
            left: Box::new(bind(left, b)?),
            right: Box::new(bind(right, b)?),
            on: on.clone(),
            max_fanout: *max_fanout,
        },
        PlanNode::Choice(c) => {
            let v = b
                .get(&c.choice_id)
                .ok_or_else(|| BindError::UnboundChoice(c.choice_id.clone()))?;
            match (&c.domain, v) {
                (ChoiceDomain::Subplans(alts), BoundValue::Alternative { alternative }) if *alternative < alts.len() => {
                    bind(&alts[*alternative], b)?
                }
                _ => {
                    return Err(BindError::OutOfDomain {
                        choice: c.choice_id.clone(),
                        value: v.clone(),
                    })
                }
            }
        }
    })
}

/// Every choice at its domain's first value.
pub fn default_binding(spec: &InterfaceSpec) -> Binding {
    spec.choices()
        .into_iter()
        .filter_map(|(_, c)| c.domain.first().map(|v| (c.choice_id.clone(), v)))
        .collect()
}

/// Default cap on the size of an enumerated binding space.
pub const DEFAULT_BINDING_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumerateError {
    #[error("unknown choice `{0}`")]
    UnknownChoice(ChoiceId),
    #[error("binding space of {size} exceeds cap {cap}; sample instead")]
    DomainExplosion { size: u128, cap: u64 },
}

/// Ordered cross product over a set of choices, holding every other choice
/// at a base binding and skipping assignments that invert a range pair.
#[derive(Debug, Clone)]
pub struct Bindings {
    base: Binding,
    axes: Vec<(ChoiceId, ChoiceDomain)>,
    pairs: Vec<(ChoiceId, ChoiceId)>,
    cursor: Vec<u64>,
    done: bool,
}

impl Bindings {
    /// Upper bound on the number of items (before range filtering).
    pub fn raw_size(&self) -> u128 {
        self.axes.iter().map(|(_, d)| d.len() as u128).product()
    }

    fn current(&self) -> Binding {
        let mut b = self.base.clone();
        for ((id, dom), &i) in self.axes.iter().zip(&self.cursor) {
            if let Some(v) = dom.value_at(i) {
                b.set(id.clone(), v);
            }
        }
        b
    }

    fn advance(&mut self) {
        for i in (0..self.axes.len()).rev() {
            self.cursor[i] += 1;
            if self.cursor[i] < self.axes[i].1.len() {
                return;
            }
            self.cursor[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for Bindings {
    type Item = Binding;

    fn next(&mut self) -> Option<Binding> {
        while !self.done {
            let b = self.current();
            self.advance();
            if satisfies_range_pairs(&b, &self.pairs) {
                return Some(b);
            }
        }
        None
    }
}

pub fn satisfies_range_pairs(b: &Binding, pairs: &[(ChoiceId, ChoiceId)]) -> bool {
    pairs.iter().all(|(lo, hi)| match (b.value(lo), b.value(hi)) {
        (Some(l), Some(h)) => !matches!(l.try_cmp(h), Ok(core::cmp::Ordering::Greater)),
        _ => true,
    })
}

/// Cross product of the domains of `ids`, others held at `base`.
pub fn enumerate_assignments(
    spec: &InterfaceSpec,
    ids: &BTreeSet<ChoiceId>,
    base: &Binding,
    cap: u64,
) -> Result<Bindings, EnumerateError> {
    let choices = spec.choices();
    let mut axes = Vec::new();
    for id in ids {
        let (_, node) = choices
            .iter()
            .find(|(_, c)| &c.choice_id == id)
            .ok_or_else(|| EnumerateError::UnknownChoice(id.clone()))?;
        axes.push((id.clone(), node.domain.clone()));
    }
    let it = Bindings {
        base: base.clone(),
        cursor: alloc::vec![0; axes.len()],
        done: axes.iter().any(|(_, d)| d.is_empty()),
        axes,
        pairs: spec.range_pairs(),
    };
    let size = it.raw_size();
    if size > cap as u128 {
        return Err(EnumerateError::DomainExplosion { size, cap });
    }
    Ok(it)
}

/// Bindings for one interaction: the cross product of its choices' domains
/// with all other choices at their first value.
pub fn enumerate_bindings(
    spec: &InterfaceSpec,
    interaction: &Interaction,
    cap: u64,
) -> Result<Bindings, EnumerateError> {
    enumerate_assignments(spec, &interaction.bound_choices, &default_binding(spec), cap)
}

/// For each choice, the plan nodes whose output may change with it: the node
/// declaring the choice and all of its ancestors.
pub fn choice_dependencies(spec: &InterfaceSpec) -> BTreeMap<ChoiceId, BTreeSet<NodeRef>> {
    let mut out = BTreeMap::new();
    for view in &spec.views {
        for choice in view.plan.choices() {
            let Some(site) = view.plan.choice_site(&choice.choice_id) else {
                continue;
            };
            let mut nodes: BTreeSet<NodeRef> = view
                .plan
                .ancestors(site)
                .into_iter()
                .map(|node| NodeRef {
                    view: view.name.clone(),
                    node,
                })
                .collect();
            nodes.insert(NodeRef {
                view: view.name.clone(),
                node: site,
            });
            out.insert(choice.choice_id.clone(), nodes);
        }
    }
    out
}
