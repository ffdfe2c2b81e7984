//! Data structures as `build()`/`eval()` pairs.
//!
//! Each [`StructureKind`] knows which logical subplans it can replace
//! ([`match_structures`]), how to encode a table into a payload ([`build`]),
//! how to answer a binding from that payload ([`eval`]) and what that costs
//! ([`estimate`]). The four functions are the extension point for new kinds.

mod cube;
mod index;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::binding::Binding;
use crate::codec::{self, DecodeError, Reader, Writer};
use crate::cost::Calibration;
use crate::oracle::{plan_schema, EvalError};
use crate::plan::{AggFunc, Aggregate, ChoiceId, CmpOp, Operand, PlanNode, Predicate};
use crate::relation::{Relation, Schema};
use crate::stats::ColumnStats;
use crate::value::ScalarValue;

pub use cube::CubeLayout;

/// A probe argument: fixed at plan time or read from the binding at eval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeValue {
    Literal(ScalarValue),
    Choice(ChoiceId),
}

impl ProbeValue {
    fn from_operand(op: &Operand) -> ProbeValue {
        match op {
            Operand::Literal(v) => ProbeValue::Literal(v.clone()),
            Operand::Choice(c) => ProbeValue::Choice(c.choice_id.clone()),
        }
    }

    fn resolve(&self, b: &Binding) -> Result<ScalarValue, StructureError> {
        match self {
            ProbeValue::Literal(v) => Ok(v.clone()),
            ProbeValue::Choice(id) => b
                .value(id)
                .cloned()
                .ok_or_else(|| StructureError::UnboundChoice(id.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexKey {
    pub column: String,
    pub value: ProbeValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimBound {
    pub op: CmpOp,
    pub value: ProbeValue,
}

/// One cube axis. Group keys have no bounds; range-filtered axes carry the
/// comparisons evaluated against the binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeDim {
    pub column: String,
    #[serde(default)]
    pub bounds: Vec<DimBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureKind {
    BaseScan,
    HashIndex {
        keys: Vec<IndexKey>,
    },
    SortedRangeIndex {
        column: String,
        low: ProbeValue,
        high: ProbeValue,
    },
    PrefixSumCube {
        dims: Vec<CubeDim>,
        group_keys: Vec<String>,
        measures: Vec<Aggregate>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureFamily {
    BaseScan,
    HashIndex,
    SortedRangeIndex,
    PrefixSumCube,
}

impl StructureFamily {
    pub const ALL: [StructureFamily; 4] = [
        StructureFamily::BaseScan,
        StructureFamily::HashIndex,
        StructureFamily::SortedRangeIndex,
        StructureFamily::PrefixSumCube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureFamily::BaseScan => "BaseScan",
            StructureFamily::HashIndex => "HashIndex",
            StructureFamily::SortedRangeIndex => "SortedRangeIndex",
            StructureFamily::PrefixSumCube => "PrefixSumCube",
        }
    }

    fn tag(self) -> u16 {
        self as u16
    }
}

impl StructureKind {
    pub fn family(&self) -> StructureFamily {
        match self {
            StructureKind::BaseScan => StructureFamily::BaseScan,
            StructureKind::HashIndex { .. } => StructureFamily::HashIndex,
            StructureKind::SortedRangeIndex { .. } => StructureFamily::SortedRangeIndex,
            StructureKind::PrefixSumCube { .. } => StructureFamily::PrefixSumCube,
        }
    }

    /// Columns of the build input the structure reads.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            StructureKind::BaseScan => Vec::new(),
            StructureKind::HashIndex { keys } => keys.iter().map(|k| k.column.as_str()).collect(),
            StructureKind::SortedRangeIndex { column, .. } => alloc::vec![column.as_str()],
            StructureKind::PrefixSumCube { dims, measures, .. } => dims
                .iter()
                .map(|d| d.column.as_str())
                .chain(measures.iter().filter_map(|m| m.column.as_deref()))
                .collect(),
        }
    }

    /// Choices read from the binding at eval time.
    pub fn probe_choices(&self) -> BTreeSet<ChoiceId> {
        let probes: Vec<&ProbeValue> = match self {
            StructureKind::BaseScan => Vec::new(),
            StructureKind::HashIndex { keys } => keys.iter().map(|k| &k.value).collect(),
            StructureKind::SortedRangeIndex { low, high, .. } => alloc::vec![low, high],
            StructureKind::PrefixSumCube { dims, .. } => {
                dims.iter().flat_map(|d| d.bounds.iter().map(|b| &b.value)).collect()
            }
        };
        probes
            .into_iter()
            .filter_map(|p| match p {
                ProbeValue::Choice(id) => Some(id.clone()),
                ProbeValue::Literal(_) => None,
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        match self {
            StructureKind::BaseScan => "BaseScan".to_string(),
            StructureKind::HashIndex { keys } => {
                let cols: Vec<&str> = keys.iter().map(|k| k.column.as_str()).collect();
                alloc::format!("HashIndex({})", cols.join(","))
            }
            StructureKind::SortedRangeIndex { column, .. } => alloc::format!("SortedRangeIndex({column})"),
            StructureKind::PrefixSumCube { dims, .. } => {
                let cols: Vec<&str> = dims.iter().map(|d| d.column.as_str()).collect();
                alloc::format!("PrefixSumCube({})", cols.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("cube needs {cells} cells, cap is {cap}")]
    CapExceeded { cells: u128, cap: u64 },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("structure was built for ${choice}={built}; binding has {requested}")]
    StaleStructure {
        choice: ChoiceId,
        built: String,
        requested: String,
    },
    #[error("choice `{0}` is not bound")]
    UnboundChoice(ChoiceId),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("payload: {0}")]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Default cap on cube cells.
pub const DEFAULT_CELL_CAP: u64 = 100_000_000;

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Values of the choices that were bound when the build input was computed.
    pub baked: Binding,
    pub cell_cap: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            baked: Binding::new(),
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

#[derive(Debug, Clone)]
enum Decoded {
    Table(Relation),
    Hash(index::HashDecoded),
    Sorted(index::SortedDecoded),
    Cube(cube::CubeDecoded),
}

/// An encoded structure. The payload is authoritative: the decoded form is
/// always derived from it, so it can be written to disk and reloaded as is.
#[derive(Debug, Clone)]
pub struct BuiltStructure {
    kind: StructureKind,
    payload: Vec<u8>,
    source_fingerprint: u64,
    baked: Binding,
    decoded: Decoded,
}

pub const HEADER_LEN: usize = 32;
const MAGIC: &[u8; 4] = b"PVDS";
const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: StructureKind,
    baked: Binding,
}

impl BuiltStructure {
    pub fn kind(&self) -> &StructureKind {
        &self.kind
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn size_bytes(&self) -> u64 {
        self.payload.len() as u64
    }

    pub fn source_fingerprint(&self) -> u64 {
        self.source_fingerprint
    }

    pub fn baked(&self) -> &Binding {
        &self.baked
    }

    /// Parses a payload produced by [`build`].
    pub fn from_payload(payload: Vec<u8>) -> Result<BuiltStructure, StructureError> {
        let mut r = Reader::new(&payload);
        if r.take(4)? != MAGIC {
            return Err(DecodeError::BadMagic.into());
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(DecodeError::Version(version).into());
        }
        let tag = r.u16()?;
        let ndims = r.u32()?;
        let narrays = r.u32()?;
        let cells = r.u64()?;
        let fingerprint = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| DecodeError::Malformed(alloc::format!("metadata: {e}")))?;
        if meta.kind.family().tag() != tag {
            return Err(DecodeError::Malformed("kind tag disagrees with metadata".into()).into());
        }
        let decoded = match &meta.kind {
            StructureKind::BaseScan => Decoded::Table(codec::read_relation(&mut r)?),
            StructureKind::HashIndex { .. } => Decoded::Hash(index::HashDecoded::read(&mut r, ndims as usize)?),
            StructureKind::SortedRangeIndex { column, .. } => Decoded::Sorted(index::SortedDecoded::read(&mut r, column)?),
            StructureKind::PrefixSumCube { .. } => {
                Decoded::Cube(cube::CubeDecoded::read(&mut r, &meta.kind, ndims as usize, narrays as usize, cells)?)
            }
        };
        if r.remaining() != 0 {
            return Err(DecodeError::Malformed("trailing bytes".into()).into());
        }
        Ok(BuiltStructure {
            kind: meta.kind,
            baked: meta.baked,
            source_fingerprint: fingerprint,
            payload,
            decoded,
        })
    }

    /// Copy whose payload has been modified by `mutate` and re-parsed. Used
    /// to inject faults when testing verification.
    pub fn with_mutated_payload(&self, mutate: impl FnOnce(&mut Vec<u8>)) -> Result<BuiltStructure, StructureError> {
        let mut bytes = self.payload.clone();
        mutate(&mut bytes);
        BuiltStructure::from_payload(bytes)
    }

    /// Byte range of the cube's row-count array inside the payload.
    pub fn count_array_range(&self) -> Option<core::ops::Range<usize>> {
        match &self.decoded {
            Decoded::Cube(c) => Some(c.count_array_offset..c.count_array_offset + c.cells as usize * 8),
            _ => None,
        }
    }

    /// The cube's row-count cells (inclusive prefix counts), row-major.
    pub fn count_cells(&self) -> Option<&[u64]> {
        match &self.decoded {
            Decoded::Cube(c) => Some(c.count_array()),
            _ => None,
        }
    }

    /// Like [`eval`], also returning how many row-count cells were read
    /// (zero for structures other than cubes).
    pub fn eval_counting(&self, b: &Binding) -> Result<(Relation, u64), StructureError> {
        self.check_fresh(b)?;
        match &self.decoded {
            Decoded::Cube(c) => c.eval(&self.kind, b),
            _ => Ok((self.eval_unchecked(b)?, 0)),
        }
    }

    fn check_fresh(&self, b: &Binding) -> Result<(), StructureError> {
        for (id, built) in self.baked.iter() {
            match b.get(id) {
                Some(v) if v == built => {}
                other => {
                    return Err(StructureError::StaleStructure {
                        choice: id.clone(),
                        built: built.to_string(),
                        requested: other.map_or_else(|| "nothing".to_string(), ToString::to_string),
                    })
                }
            }
        }
        Ok(())
    }

    fn eval_unchecked(&self, b: &Binding) -> Result<Relation, StructureError> {
        match (&self.decoded, &self.kind) {
            (Decoded::Table(t), _) => Ok(t.clone()),
            (Decoded::Hash(h), StructureKind::HashIndex { keys }) => h.probe(keys, b),
            (Decoded::Sorted(s), StructureKind::SortedRangeIndex { low, high, .. }) => {
                s.range(&low.resolve(b)?, &high.resolve(b)?)
            }
            (Decoded::Cube(c), kind) => Ok(c.eval(kind, b)?.0),
            _ => Err(StructureError::Unsupported("decoded form does not match kind".into())),
        }
    }
}

/// Encodes `input` as a structure of `kind`.
pub fn build(kind: &StructureKind, input: &Relation, opts: &BuildOptions) -> Result<BuiltStructure, StructureError> {
    for c in kind.columns() {
        if input.schema().index_of(c).is_none() {
            return Err(StructureError::UnknownColumn(c.to_string()));
        }
    }
    let meta = serde_json::to_vec(&Meta {
        kind: kind.clone(),
        baked: opts.baked.clone(),
    })
    .map_err(|e| StructureError::Unsupported(alloc::format!("metadata: {e}")))?;
    let mut source = codec::encode_relation(input);
    source.extend_from_slice(&meta);
    let fingerprint = codec::digest(&source);
    drop(source);

    let mut body = Writer::new();
    let (ndims, narrays, cells) = match kind {
        StructureKind::BaseScan => {
            codec::write_relation(&mut body, input);
            (0, input.schema().len() as u32, input.row_count() as u64)
        }
        StructureKind::HashIndex { keys } => {
            let n = index::write_hash(&mut body, input, keys)?;
            (keys.len() as u32, input.schema().len() as u32, n)
        }
        StructureKind::SortedRangeIndex { column, .. } => {
            let n = index::write_sorted(&mut body, input, column)?;
            (1, input.schema().len() as u32, n)
        }
        StructureKind::PrefixSumCube { .. } => {
            let layout = cube::write_cube(&mut body, input, kind, opts.cell_cap)?;
            (layout.dims as u32, layout.arrays as u32, layout.cells)
        }
    };

    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u16(kind.family().tag());
    w.u32(ndims);
    w.u32(narrays);
    w.u64(cells);
    w.u64(fingerprint);
    debug_assert_eq!(w.len(), HEADER_LEN);
    w.u32(meta.len() as u32);
    w.bytes(&meta);
    w.bytes(&body.into_bytes());
    BuiltStructure::from_payload(w.into_bytes())
}

/// Answers binding `b` from the structure. Fails with `StaleStructure` when
/// `b` disagrees with a choice value baked into the build input.
pub fn eval(s: &BuiltStructure, b: &Binding) -> Result<Relation, StructureError> {
    s.check_fresh(b)?;
    s.eval_unchecked(b)
}

/// A subplan a structure can replace.
///
/// Replacing node `matched_subplan` of the view plan by
/// `Filter(residual)(eval(build(kind, oracle(build_input))))` preserves the
/// plan's result for every binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched_subplan: usize,
    pub kind: StructureKind,
    pub build_input: PlanNode,
    pub residual: Vec<Predicate>,
}

impl MatchResult {
    /// Choices baked into the build input; changing one forces a rebuild.
    pub fn key_choices(&self) -> BTreeSet<ChoiceId> {
        self.build_input.choice_ids()
    }

    /// The view plan with the matched subtree replaced by the eval output.
    pub fn residual_plan(&self, view_plan: &PlanNode) -> PlanNode {
        let replacement = match self.residual.len() {
            0 => PlanNode::Slot,
            1 => PlanNode::Slot.filter(self.residual[0].clone()),
            _ => PlanNode::Slot.filter(Predicate::And(self.residual.clone())),
        };
        view_plan.replace_at(self.matched_subplan, replacement)
    }
}

/// Preorder indices of nodes that are not inside a subplan choice.
fn unconditional_nodes(plan: &PlanNode) -> Vec<usize> {
    fn walk(n: &PlanNode, next: &mut usize, inside: bool, out: &mut Vec<usize>) {
        let me = *next;
        *next += 1;
        if !inside {
            out.push(me);
        }
        let inside = inside || matches!(n, PlanNode::Choice(_));
        for c in n.children() {
            walk(c, next, inside, out);
        }
    }
    let mut out = Vec::new();
    walk(plan, &mut 0, false, &mut out);
    out
}

/// Conjuncts of a maximal run of filters starting at `node`, and the first
/// non-filter node below it.
fn filter_chain(node: &PlanNode) -> (Vec<Predicate>, &PlanNode) {
    let mut conj = Vec::new();
    let mut cur = node;
    while let PlanNode::Filter { input, predicate } = cur {
        conj.extend(predicate.conjuncts().into_iter().cloned());
        cur = input;
    }
    (conj, cur)
}

fn with_filters(base: &PlanNode, conjuncts: Vec<Predicate>) -> PlanNode {
    match conjuncts.len() {
        0 => base.clone(),
        1 => base.clone().filter(conjuncts.into_iter().next().unwrap()),
        _ => base.clone().filter(Predicate::And(conjuncts)),
    }
}

fn is_chain_top(plan: &PlanNode, idx: usize, nodes: &[&PlanNode]) -> bool {
    if !matches!(nodes[idx], PlanNode::Filter { .. }) {
        return false;
    }
    match plan.ancestors(idx).last() {
        Some(&p) => !matches!(nodes[p], PlanNode::Filter { .. }),
        None => true,
    }
}

fn cube_dim_conjunct(p: &Predicate) -> bool {
    match p {
        Predicate::Cmp { op, value, .. } => op.is_range() && value.choice_id().is_some(),
        Predicate::Between { low, high, .. } => low.choice_id().is_some() || high.choice_id().is_some(),
        Predicate::And(_) => false,
    }
}

fn cube_measure_ok(m: &Aggregate, schema: &Schema) -> bool {
    let ty = match &m.column {
        None => return m.func == AggFunc::Count,
        Some(c) => match schema.field(c) {
            Some(f) => f.ty,
            None => return false,
        },
    };
    match m.func {
        AggFunc::Count => true,
        _ => ty.is_numeric(),
    }
}

/// Subplans of `plan` that a structure of `family` can replace.
/// Subtrees inside subplan choices are never matched.
pub fn match_structures(
    family: StructureFamily,
    plan: &PlanNode,
    catalog: &BTreeMap<String, Schema>,
) -> Vec<MatchResult> {
    let nodes = plan.preorder();
    let mut out = Vec::new();
    for idx in unconditional_nodes(plan) {
        let node = nodes[idx];
        match family {
            StructureFamily::BaseScan => {
                if let PlanNode::Scan { .. } = node {
                    out.push(MatchResult {
                        matched_subplan: idx,
                        kind: StructureKind::BaseScan,
                        build_input: node.clone(),
                        residual: Vec::new(),
                    });
                }
            }
            StructureFamily::HashIndex => {
                if !is_chain_top(plan, idx, &nodes) {
                    continue;
                }
                let (conj, base) = filter_chain(node);
                if !matches!(base, PlanNode::Scan { .. }) {
                    continue;
                }
                let mut keys: Vec<IndexKey> = Vec::new();
                let mut residual = Vec::new();
                for c in conj {
                    match &c {
                        Predicate::Cmp {
                            column,
                            op: CmpOp::Eq,
                            value: Operand::Choice(ch),
                        } if !keys.iter().any(|k| &k.column == column) => keys.push(IndexKey {
                            column: column.clone(),
                            value: ProbeValue::Choice(ch.choice_id.clone()),
                        }),
                        _ => residual.push(c),
                    }
                }
                if !keys.is_empty() {
                    out.push(MatchResult {
                        matched_subplan: idx,
                        kind: StructureKind::HashIndex { keys },
                        build_input: base.clone(),
                        residual,
                    });
                }
            }
            StructureFamily::SortedRangeIndex => {
                if !is_chain_top(plan, idx, &nodes) {
                    continue;
                }
                let (conj, base) = filter_chain(node);
                if !matches!(base, PlanNode::Scan { .. }) {
                    continue;
                }
                let mut seen = BTreeSet::new();
                for (i, c) in conj.iter().enumerate() {
                    let Predicate::Between { column, low, high } = c else {
                        continue;
                    };
                    if low.choice_id().is_none() && high.choice_id().is_none() {
                        continue;
                    }
                    if !seen.insert(column.clone()) {
                        continue;
                    }
                    let residual = conj
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, p)| p.clone())
                        .collect();
                    out.push(MatchResult {
                        matched_subplan: idx,
                        kind: StructureKind::SortedRangeIndex {
                            column: column.clone(),
                            low: ProbeValue::from_operand(low),
                            high: ProbeValue::from_operand(high),
                        },
                        build_input: base.clone(),
                        residual,
                    });
                }
            }
            StructureFamily::PrefixSumCube => {
                let PlanNode::GroupByAgg { input, keys, aggregates } = node else {
                    continue;
                };
                let (conj, base) = filter_chain(input);
                if base.contains_slot() {
                    continue;
                }
                let Ok(base_schema) = plan_schema(base, catalog, None) else {
                    continue;
                };
                if !aggregates.iter().all(|m| cube_measure_ok(m, &base_schema)) {
                    continue;
                }
                let mut dims: Vec<CubeDim> = keys
                    .iter()
                    .map(|k| CubeDim {
                        column: k.clone(),
                        bounds: Vec::new(),
                    })
                    .collect();
                let mut baked = Vec::new();
                for c in conj {
                    if !cube_dim_conjunct(&c) {
                        baked.push(c);
                        continue;
                    }
                    let (column, bounds) = match &c {
                        Predicate::Between { column, low, high } => (
                            column,
                            alloc::vec![
                                DimBound {
                                    op: CmpOp::Ge,
                                    value: ProbeValue::from_operand(low),
                                },
                                DimBound {
                                    op: CmpOp::Le,
                                    value: ProbeValue::from_operand(high),
                                },
                            ],
                        ),
                        Predicate::Cmp { column, op, value } => (
                            column,
                            alloc::vec![DimBound {
                                op: *op,
                                value: ProbeValue::from_operand(value),
                            }],
                        ),
                        Predicate::And(_) => unreachable!(),
                    };
                    match dims.iter_mut().find(|d| &d.column == column) {
                        Some(d) => d.bounds.extend(bounds),
                        None => dims.push(CubeDim {
                            column: column.clone(),
                            bounds,
                        }),
                    }
                }
                if dims.iter().any(|d| base_schema.field(&d.column).is_none()) {
                    continue;
                }
                out.push(MatchResult {
                    matched_subplan: idx,
                    kind: StructureKind::PrefixSumCube {
                        dims,
                        group_keys: keys.clone(),
                        measures: aggregates.clone(),
                    },
                    build_input: with_filters(base, baked),
                    residual: Vec::new(),
                });
            }
        }
    }
    out
}

/// Closed-form build/eval cost and size of a structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureEstimate {
    pub build_cost_ms: f64,
    pub eval_cost_ms: f64,
    pub size_bytes: u64,
    /// Cube cells, or indexed rows for row-based structures.
    pub cells: u128,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("no statistics for column `{0}`")]
    MissingStats(String),
}

/// Per-value tag byte plus average width, summed over all columns.
fn row_width(stats: &BTreeMap<String, ColumnStats>) -> f64 {
    stats.values().map(|s| s.width_bytes + 1.0).sum()
}

fn stat<'a>(stats: &'a BTreeMap<String, ColumnStats>, col: &str) -> Result<&'a ColumnStats, EstimateError> {
    stats.get(col).ok_or_else(|| EstimateError::MissingStats(col.to_string()))
}

/// Fixed overhead of every payload besides its body: header plus metadata.
pub const PAYLOAD_OVERHEAD: u64 = HEADER_LEN as u64 + 4 + 256;

fn log2(n: f64) -> f64 {
    if n <= 1.0 {
        0.0
    } else {
        libm::log2(n)
    }
}

/// Estimates from statistics of the build input.
pub fn estimate(
    kind: &StructureKind,
    stats: &BTreeMap<String, ColumnStats>,
    row_count: u64,
    cal: &Calibration,
) -> Result<StructureEstimate, EstimateError> {
    for c in kind.columns() {
        stat(stats, c)?;
    }
    let n = row_count as f64;
    let table_bytes = (n * row_width(stats)) as u64;
    Ok(match kind {
        StructureKind::BaseScan => StructureEstimate {
            build_cost_ms: 0.0,
            eval_cost_ms: n * cal.c_scan,
            size_bytes: if row_count == 0 { 0 } else { PAYLOAD_OVERHEAD + table_bytes },
            cells: row_count as u128,
        },
        StructureKind::HashIndex { keys } => {
            let mut distinct = 1.0f64;
            for k in keys {
                distinct *= stat(stats, &k.column)?.distinct_count.max(1) as f64;
            }
            let distinct = distinct.min(n.max(1.0));
            StructureEstimate {
                build_cost_ms: n * cal.c_hash,
                eval_cost_ms: (n / distinct) * cal.c_probe,
                size_bytes: PAYLOAD_OVERHEAD + table_bytes + 8 + distinct as u64 * 16,
                cells: row_count as u128,
            }
        }
        StructureKind::SortedRangeIndex { .. } => StructureEstimate {
            build_cost_ms: n * log2(n) * cal.c_sort,
            eval_cost_ms: log2(n) * cal.c_probe + n * cal.c_scan,
            size_bytes: PAYLOAD_OVERHEAD + table_bytes + 8,
            cells: row_count as u128,
        },
        StructureKind::PrefixSumCube { dims, group_keys, measures } => {
            let layout = CubeLayout::from_stats(dims, measures, stats)?;
            let groups: f64 = dims
                .iter()
                .filter(|d| group_keys.contains(&d.column))
                .map(|d| layout.cardinality(&d.column) as f64)
                .product();
            let range_cells: f64 = dims
                .iter()
                .filter(|d| !group_keys.contains(&d.column))
                .map(|d| layout.cardinality(&d.column) as f64)
                .product();
            let plain = measures.iter().any(|m| matches!(m.func, AggFunc::Min | AggFunc::Max));
            let corner_reads = libm::pow(2.0, dims.len() as f64);
            let reads = if plain {
                groups * (corner_reads + range_cells)
            } else {
                groups * corner_reads
            };
            StructureEstimate {
                build_cost_ms: (n + layout.cells as f64) * cal.c_cell,
                eval_cost_ms: reads * cal.c_cell,
                size_bytes: PAYLOAD_OVERHEAD + layout.dictionary_bytes + layout.cell_bytes(),
                cells: layout.cells,
            }
        }
    })
}
