//! Logical SPJA plans with Choice operators.
//!
//! A [`PlanNode`] tree may carry choices in two places: a literal position
//! inside a predicate ([`Operand::Choice`]) or a whole subtree
//! ([`PlanNode::Choice`]). Binding every choice yields an ordinary plan that
//! the oracle can evaluate.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::binding::BoundValue;
use crate::value::ScalarValue;

pub type ChoiceId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn is_range(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: core::cmp::Ordering) -> bool {
        use core::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

/// Finite domain of a choice. Interval domains are discretized by `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceDomain {
    Values(Vec<ScalarValue>),
    Interval {
        lo: ScalarValue,
        hi: ScalarValue,
        step: ScalarValue,
    },
    Subplans(Vec<PlanNode>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceKind {
    Literal,
    Subplan,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("interval bounds and step must share one numeric type")]
    MixedIntervalTypes,
    #[error("interval step must be positive")]
    NonPositiveStep,
    #[error("interval lower bound exceeds upper bound")]
    InvertedInterval,
    #[error("domain is empty")]
    Empty,
}

impl ChoiceDomain {
    pub fn kind(&self) -> ChoiceKind {
        match self {
            ChoiceDomain::Subplans(_) => ChoiceKind::Subplan,
            _ => ChoiceKind::Literal,
        }
    }

    /// Enumerated (not interval) domains may be replicated per value.
    pub fn is_enumerated(&self) -> bool {
        !matches!(self, ChoiceDomain::Interval { .. })
    }

    pub fn check(&self) -> Result<(), DomainError> {
        match self {
            ChoiceDomain::Values(v) if v.is_empty() => Err(DomainError::Empty),
            ChoiceDomain::Subplans(v) if v.is_empty() => Err(DomainError::Empty),
            ChoiceDomain::Interval { lo, hi, step } => match (lo, hi, step) {
                (ScalarValue::Int(lo), ScalarValue::Int(hi), ScalarValue::Int(step)) => {
                    if *step <= 0 {
                        Err(DomainError::NonPositiveStep)
                    } else if lo > hi {
                        Err(DomainError::InvertedInterval)
                    } else {
                        Ok(())
                    }
                }
                (ScalarValue::Float(lo), ScalarValue::Float(hi), ScalarValue::Float(step)) => {
                    if !(*step > 0.0) {
                        Err(DomainError::NonPositiveStep)
                    } else if !(lo <= hi) {
                        Err(DomainError::InvertedInterval)
                    } else {
                        Ok(())
                    }
                }
                _ => Err(DomainError::MixedIntervalTypes),
            },
            _ => Ok(()),
        }
    }

    /// Number of values. Zero for malformed intervals.
    pub fn len(&self) -> u64 {
        match self {
            ChoiceDomain::Values(v) => v.len() as u64,
            ChoiceDomain::Subplans(v) => v.len() as u64,
            ChoiceDomain::Interval { lo, hi, step } => match (lo, hi, step) {
                (ScalarValue::Int(lo), ScalarValue::Int(hi), ScalarValue::Int(step)) if *step > 0 && lo <= hi => {
                    ((*hi as i128 - *lo as i128) / *step as i128) as u64 + 1
                }
                (ScalarValue::Float(lo), ScalarValue::Float(hi), ScalarValue::Float(step)) if *step > 0.0 && lo <= hi => {
                    libm::floor((hi - lo) / step + 1e-9) as u64 + 1
                }
                _ => 0,
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `index`-th value in declaration order.
    pub fn value_at(&self, index: u64) -> Option<BoundValue> {
        if index >= self.len() {
            return None;
        }
        Some(match self {
            ChoiceDomain::Values(v) => BoundValue::Value(v[index as usize].clone()),
            ChoiceDomain::Subplans(_) => BoundValue::Alternative { alternative: index as usize },
            ChoiceDomain::Interval { lo, step, .. } => match (lo, step) {
                (ScalarValue::Int(lo), ScalarValue::Int(step)) => BoundValue::Value(ScalarValue::Int(lo + step * index as i64)),
                (ScalarValue::Float(lo), ScalarValue::Float(step)) => {
                    BoundValue::Value(ScalarValue::Float(lo + step * index as f64))
                }
                _ => return None,
            },
        })
    }

    pub fn first(&self) -> Option<BoundValue> {
        self.value_at(0)
    }

    pub fn values(&self) -> impl Iterator<Item = BoundValue> + '_ {
        (0..self.len()).filter_map(move |i| self.value_at(i))
    }

    pub fn contains(&self, value: &BoundValue) -> bool {
        match (self, value) {
            (ChoiceDomain::Values(v), BoundValue::Value(x)) => v.contains(x),
            (ChoiceDomain::Subplans(v), BoundValue::Alternative { alternative }) => *alternative < v.len(),
            (ChoiceDomain::Interval { lo, hi, step }, BoundValue::Value(x)) => match (lo, hi, step, x) {
                (ScalarValue::Int(lo), ScalarValue::Int(hi), ScalarValue::Int(step), ScalarValue::Int(x)) => {
                    *step > 0 && lo <= x && x <= hi && (x - lo) % step == 0
                }
                (ScalarValue::Float(lo), ScalarValue::Float(_), ScalarValue::Float(step), ScalarValue::Float(x)) => {
                    if !(*step > 0.0) {
                        return false;
                    }
                    let k = libm::round((x - lo) / step);
                    k >= 0.0 && (k as u64) < self.len() && lo + step * k == *x
                }
                _ => false,
            },
            _ => false,
        }
    }

    /// Type of the literal values, if this is a literal domain.
    pub fn literal_type(&self) -> Option<crate::value::ColumnType> {
        match self {
            ChoiceDomain::Values(v) => v.iter().find_map(ScalarValue::column_type),
            ChoiceDomain::Interval { lo, .. } => lo.column_type(),
            ChoiceDomain::Subplans(_) => None,
        }
    }
}

/// A parameter of the plan that interactions bind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceNode {
    pub choice_id: ChoiceId,
    pub domain: ChoiceDomain,
}

impl ChoiceNode {
    pub fn kind(&self) -> ChoiceKind {
        self.domain.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Literal(ScalarValue),
    Choice(ChoiceNode),
}

impl Operand {
    pub fn choice_id(&self) -> Option<&str> {
        match self {
            Operand::Choice(c) => Some(&c.choice_id),
            Operand::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Cmp { column: String, op: CmpOp, value: Operand },
    /// Inclusive `low <= column <= high`.
    Between { column: String, low: Operand, high: Operand },
    And(Vec<Predicate>),
}

impl Predicate {
    pub fn and(preds: Vec<Predicate>) -> Predicate {
        Predicate::And(preds)
    }

    /// Flattened list of non-`And` conjuncts.
    pub fn conjuncts(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Predicate, out: &mut Vec<&'a Predicate>) {
            match p {
                Predicate::And(ps) => ps.iter().for_each(|q| walk(q, out)),
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Predicate::Cmp { value, .. } => alloc::vec![value],
            Predicate::Between { low, high, .. } => alloc::vec![low, high],
            Predicate::And(ps) => ps.iter().flat_map(Predicate::operands).collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Predicate::Cmp { value, .. } => alloc::vec![value],
            Predicate::Between { low, high, .. } => alloc::vec![low, high],
            Predicate::And(ps) => ps.iter_mut().flat_map(Predicate::operands_mut).collect(),
        }
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            Predicate::Cmp { column, .. } | Predicate::Between { column, .. } => alloc::vec![column.as_str()],
            Predicate::And(ps) => ps.iter().flat_map(Predicate::columns).collect(),
        }
    }

    pub fn has_choice(&self) -> bool {
        self.operands().iter().any(|o| o.choice_id().is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

/// `func(column) AS alias`; `column: None` is only valid for `count(*)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFunc,
    #[serde(default)]
    pub column: Option<String>,
    pub alias: String,
}

impl Aggregate {
    pub fn count_star(alias: impl Into<String>) -> Self {
        Aggregate {
            func: AggFunc::Count,
            column: None,
            alias: alias.into(),
        }
    }

    pub fn of(func: AggFunc, column: impl Into<String>, alias: impl Into<String>) -> Self {
        Aggregate {
            func,
            column: Some(column.into()),
            alias: alias.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinKey {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PlanNode {
    Scan {
        relation: String,
    },
    Filter {
        input: Box<PlanNode>,
        predicate: Predicate,
    },
    Project {
        input: Box<PlanNode>,
        columns: Vec<String>,
    },
    GroupByAgg {
        input: Box<PlanNode>,
        keys: Vec<String>,
        aggregates: Vec<Aggregate>,
    },
    Join {
        left: Box<PlanNode>,
        right: Box<PlanNode>,
        on: Vec<JoinKey>,
        /// Declared per-row output multiplicity; `None` marks the join unbounded.
        #[serde(default)]
        max_fanout: Option<u64>,
    },
    Choice(ChoiceNode),
    /// Placeholder for the table fed in by an upstream physical operator.
    /// Only appears in residual fragments of physical plans.
    Slot,
}

impl PlanNode {
    pub fn scan(relation: impl Into<String>) -> PlanNode {
        PlanNode::Scan {
            relation: relation.into(),
        }
    }

    pub fn filter(self, predicate: Predicate) -> PlanNode {
        PlanNode::Filter {
            input: Box::new(self),
            predicate,
        }
    }

    pub fn project(self, columns: &[&str]) -> PlanNode {
        PlanNode::Project {
            input: Box::new(self),
            columns: columns.iter().map(|c| String::from(*c)).collect(),
        }
    }

    pub fn group_by(self, keys: &[&str], aggregates: Vec<Aggregate>) -> PlanNode {
        PlanNode::GroupByAgg {
            input: Box::new(self),
            keys: keys.iter().map(|c| String::from(*c)).collect(),
            aggregates,
        }
    }

    pub fn join(self, right: PlanNode, on: &[(&str, &str)], max_fanout: Option<u64>) -> PlanNode {
        PlanNode::Join {
            left: Box::new(self),
            right: Box::new(right),
            on: on
                .iter()
                .map(|(l, r)| JoinKey {
                    left: String::from(*l),
                    right: String::from(*r),
                })
                .collect(),
            max_fanout,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PlanNode::Scan { .. } => "Scan",
            PlanNode::Filter { .. } => "Filter",
            PlanNode::Project { .. } => "Project",
            PlanNode::GroupByAgg { .. } => "GroupByAgg",
            PlanNode::Join { .. } => "Join",
            PlanNode::Choice(_) => "Choice",
            PlanNode::Slot => "Slot",
        }
    }

    pub fn children(&self) -> Vec<&PlanNode> {
        match self {
            PlanNode::Scan { .. } | PlanNode::Slot => Vec::new(),
            PlanNode::Filter { input, .. } | PlanNode::Project { input, .. } | PlanNode::GroupByAgg { input, .. } => {
                alloc::vec![input.as_ref()]
            }
            PlanNode::Join { left, right, .. } => alloc::vec![left.as_ref(), right.as_ref()],
            PlanNode::Choice(c) => match &c.domain {
                ChoiceDomain::Subplans(alts) => alts.iter().collect(),
                _ => Vec::new(),
            },
        }
    }

    fn children_mut(&mut self) -> Vec<&mut PlanNode> {
        match self {
            PlanNode::Scan { .. } | PlanNode::Slot => Vec::new(),
            PlanNode::Filter { input, .. } | PlanNode::Project { input, .. } | PlanNode::GroupByAgg { input, .. } => {
                alloc::vec![input.as_mut()]
            }
            PlanNode::Join { left, right, .. } => alloc::vec![left.as_mut(), right.as_mut()],
            PlanNode::Choice(c) => match &mut c.domain {
                ChoiceDomain::Subplans(alts) => alts.iter_mut().collect(),
                _ => Vec::new(),
            },
        }
    }

    /// Nodes in preorder; a node's index here is its identifier within the tree.
    pub fn preorder(&self) -> Vec<&PlanNode> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children().into_iter().rev());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.preorder().len()
    }

    pub fn node_at(&self, index: usize) -> Option<&PlanNode> {
        self.preorder().get(index).copied()
    }

    /// Preorder indices of the ancestors of `index` (root first), excluding `index`.
    pub fn ancestors(&self, index: usize) -> Vec<usize> {
        fn walk(n: &PlanNode, target: usize, next: &mut usize, path: &mut Vec<usize>) -> bool {
            let me = *next;
            *next += 1;
            if me == target {
                return true;
            }
            path.push(me);
            for c in n.children() {
                if walk(c, target, next, path) {
                    return true;
                }
            }
            path.pop();
            false
        }
        let mut path = Vec::new();
        let mut next = 0;
        if walk(self, index, &mut next, &mut path) {
            path
        } else {
            Vec::new()
        }
    }

    /// Copy of the tree with the node at `index` replaced.
    pub fn replace_at(&self, index: usize, replacement: PlanNode) -> PlanNode {
        fn walk(n: &mut PlanNode, target: usize, next: &mut usize, replacement: &mut Option<PlanNode>) {
            let me = *next;
            *next += 1;
            if me == target {
                if let Some(r) = replacement.take() {
                    *n = r;
                }
                return;
            }
            for c in n.children_mut() {
                walk(c, target, next, replacement);
            }
        }
        let mut out = self.clone();
        let mut next = 0;
        walk(&mut out, index, &mut next, &mut Some(replacement));
        out
    }

    /// Every choice node reachable in the tree, including those inside
    /// predicates and inside subplan alternatives, in preorder.
    pub fn choices(&self) -> Vec<&ChoiceNode> {
        let mut out = Vec::new();
        for n in self.preorder() {
            match n {
                PlanNode::Filter { predicate, .. } => {
                    for o in predicate.operands() {
                        if let Operand::Choice(c) = o {
                            out.push(c);
                        }
                    }
                }
                PlanNode::Choice(c) => out.push(c),
                _ => {}
            }
        }
        out
    }

    pub fn choice_ids(&self) -> BTreeSet<ChoiceId> {
        self.choices().into_iter().map(|c| c.choice_id.clone()).collect()
    }

    /// Preorder index of the node that declares choice `id`.
    pub fn choice_site(&self, id: &str) -> Option<usize> {
        self.preorder().iter().position(|n| match n {
            PlanNode::Filter { predicate, .. } => predicate.operands().iter().any(|o| o.choice_id() == Some(id)),
            PlanNode::Choice(c) => c.choice_id == id,
            _ => false,
        })
    }

    pub fn relations(&self) -> BTreeSet<String> {
        self.preorder()
            .into_iter()
            .filter_map(|n| match n {
                PlanNode::Scan { relation } => Some(relation.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn contains_slot(&self) -> bool {
        self.preorder().iter().any(|n| matches!(n, PlanNode::Slot))
    }

    pub fn has_unbounded_join(&self) -> bool {
        self.preorder()
            .iter()
            .any(|n| matches!(n, PlanNode::Join { max_fanout: None, .. }))
    }

    /// Pairs of choices that form the two bounds of one `Between`; a binding
    /// must keep `low <= high` for each.
    pub fn range_pairs(&self) -> Vec<(ChoiceId, ChoiceId)> {
        let mut out = Vec::new();
        for n in self.preorder() {
            if let PlanNode::Filter { predicate, .. } = n {
                for c in predicate.conjuncts() {
                    if let Predicate::Between {
                        low: Operand::Choice(lo),
                        high: Operand::Choice(hi),
                        ..
                    } = c
                    {
                        out.push((lo.choice_id.clone(), hi.choice_id.clone()));
                    }
                }
            }
        }
        out
    }
}

/// Identifies one node of one view's plan by preorder index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub view: String,
    pub node: usize,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.view, self.node)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp { column, op, value } => write!(f, "{column} {} {value}", op.symbol()),
            Predicate::Between { column, low, high } => write!(f, "{low} <= {column} <= {high}"),
            Predicate::And(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" AND ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(v) => write!(f, "{v}"),
            Operand::Choice(c) => write!(f, "${}", c.choice_id),
        }
    }
}
