//! Dense prefix-sum cube.
//!
//! Every dimension is dictionary-encoded over the sorted distinct values of
//! the build input (null first). Additive arrays hold inclusive prefix sums
//! over all dimensions, so a box aggregate is an inclusion-exclusion over
//! its 2^d corners. Min/max arrays hold plain per-cell values.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{CubeDim, EstimateError, ProbeValue, StructureError, StructureKind};
use crate::binding::Binding;
use crate::codec::{DecodeError, Reader, Writer};
use crate::oracle::aggregate_type;
use crate::plan::{AggFunc, Aggregate, CmpOp};
use crate::relation::{Field, Relation, Schema};
use crate::stats::ColumnStats;
use crate::value::{ColumnType, ScalarValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    /// Wrapping i64 prefix sum.
    IntPrefix,
    FloatPrefix,
    IntPlainMin,
    IntPlainMax,
    FloatPlainMin,
    FloatPlainMax,
    /// Non-null count per cell, not prefixed; pairs with a plain array.
    PlainCount,
}

impl Cell {
    fn is_prefix(self) -> bool {
        matches!(self, Cell::IntPrefix | Cell::FloatPrefix)
    }
}

/// Arrays backing one measure; the row-count array is shared and not listed.
fn measure_arrays(m: &Aggregate, ty: Option<ColumnType>) -> Vec<Cell> {
    let float = ty == Some(ColumnType::Float64);
    match (m.func, &m.column) {
        (AggFunc::Count, None) => Vec::new(),
        (AggFunc::Count, Some(_)) => alloc::vec![Cell::IntPrefix],
        (AggFunc::Sum | AggFunc::Avg, _) if float => alloc::vec![Cell::FloatPrefix, Cell::IntPrefix],
        (AggFunc::Sum | AggFunc::Avg, _) => alloc::vec![Cell::IntPrefix, Cell::IntPrefix],
        (AggFunc::Min, _) if float => alloc::vec![Cell::FloatPlainMin, Cell::PlainCount],
        (AggFunc::Max, _) if float => alloc::vec![Cell::FloatPlainMax, Cell::PlainCount],
        (AggFunc::Min, _) => alloc::vec![Cell::IntPlainMin, Cell::PlainCount],
        (AggFunc::Max, _) => alloc::vec![Cell::IntPlainMax, Cell::PlainCount],
    }
}

fn arrays_per_measure(m: &Aggregate) -> usize {
    match (m.func, &m.column) {
        (AggFunc::Count, None) => 0,
        (AggFunc::Count, Some(_)) => 1,
        _ => 2,
    }
}

/// Shape of a cube, either measured from data or estimated from statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeLayout {
    pub dims: usize,
    pub arrays: usize,
    pub cells: u128,
    pub dictionary_bytes: u64,
    cardinalities: BTreeMap<String, u64>,
}

impl CubeLayout {
    pub fn from_stats(
        dims: &[CubeDim],
        measures: &[Aggregate],
        stats: &BTreeMap<String, ColumnStats>,
    ) -> Result<CubeLayout, EstimateError> {
        let mut cells: u128 = 1;
        let mut dictionary_bytes = 0u64;
        let mut cardinalities = BTreeMap::new();
        for d in dims {
            let s = stats
                .get(&d.column)
                .ok_or_else(|| EstimateError::MissingStats(d.column.clone()))?;
            let card = s.distinct_count + u64::from(s.null_count > 0);
            cells = cells.saturating_mul(card as u128);
            dictionary_bytes += 4 + d.column.len() as u64 + 1 + 4 + (card as f64 * (s.width_bytes + 1.0)) as u64;
            cardinalities.insert(d.column.clone(), card);
        }
        let arrays = 1 + measures.iter().map(arrays_per_measure).sum::<usize>();
        dictionary_bytes += 4 + measures.len() as u64;
        Ok(CubeLayout {
            dims: dims.len(),
            arrays,
            cells,
            dictionary_bytes,
            cardinalities,
        })
    }

    pub fn cardinality(&self, column: &str) -> u64 {
        self.cardinalities.get(column).copied().unwrap_or(0)
    }

    pub fn cell_bytes(&self) -> u64 {
        (self.cells.saturating_mul(8 * self.arrays as u128)).min(u64::MAX as u128) as u64
    }
}

fn cube_parts(kind: &StructureKind) -> (&[CubeDim], &[String], &[Aggregate]) {
    match kind {
        StructureKind::PrefixSumCube {
            dims,
            group_keys,
            measures,
        } => (dims, group_keys, measures),
        _ => unreachable!("cube codec called for {kind:?}"),
    }
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = alloc::vec![1usize; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

pub(super) struct Written {
    pub dims: usize,
    pub arrays: usize,
    pub cells: u64,
}

pub(super) fn write_cube(w: &mut Writer, input: &Relation, kind: &StructureKind, cap: u64) -> Result<Written, StructureError> {
    let (dims, _, measures) = cube_parts(kind);
    let schema = input.schema();
    let col = |name: &str| schema.index_of(name).ok_or_else(|| StructureError::UnknownColumn(name.to_string()));

    let mut dicts: Vec<Vec<ScalarValue>> = Vec::with_capacity(dims.len());
    let mut dim_idx = Vec::with_capacity(dims.len());
    for d in dims {
        let i = col(&d.column)?;
        let set: BTreeSet<&ScalarValue> = input.columns()[i].iter().collect();
        dicts.push(set.into_iter().cloned().collect());
        dim_idx.push(i);
    }
    let cards: Vec<usize> = dicts.iter().map(Vec::len).collect();
    let cells128 = cards.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
    if cells128 > cap as u128 {
        return Err(StructureError::CapExceeded { cells: cells128, cap });
    }
    let cells = cells128 as usize;

    let mut layout: Vec<(Option<usize>, Cell)> = alloc::vec![(None, Cell::IntPrefix)];
    let mut measure_types = Vec::with_capacity(measures.len());
    for m in measures {
        let (idx, ty) = match &m.column {
            Some(c) => {
                let i = col(c)?;
                (Some(i), Some(schema.fields()[i].ty))
            }
            None => (None, None),
        };
        aggregate_type(m, ty)?;
        if matches!(m.func, AggFunc::Min | AggFunc::Max) && !ty.is_some_and(ColumnType::is_numeric) {
            return Err(StructureError::Unsupported("cube min/max needs a numeric column".into()));
        }
        measure_types.push(ty);
        for c in measure_arrays(m, ty) {
            layout.push((idx, c));
        }
    }
    // Sum arrays are followed by their non-null counts; rewrite the second
    // IntPrefix of each sum/avg pair to count non-nulls instead of values.
    let mut counts_nonnull = alloc::vec![false; layout.len()];
    {
        let mut a = 1;
        for m in measures {
            let n = arrays_per_measure(m);
            match (m.func, &m.column) {
                (AggFunc::Count, Some(_)) => counts_nonnull[a] = true,
                (AggFunc::Sum | AggFunc::Avg, _) => counts_nonnull[a + 1] = true,
                _ => {}
            }
            a += n;
        }
    }

    let mut arrays: Vec<Vec<u64>> = layout
        .iter()
        .map(|(_, c)| {
            let init = match c {
                Cell::IntPlainMin => i64::MAX as u64,
                Cell::IntPlainMax => i64::MIN as u64,
                Cell::FloatPlainMin => f64::INFINITY.to_bits(),
                Cell::FloatPlainMax => f64::NEG_INFINITY.to_bits(),
                _ => 0,
            };
            alloc::vec![init; cells]
        })
        .collect();

    let st = strides(&cards);
    for r in 0..input.row_count() {
        let mut cell = 0usize;
        for (k, &i) in dim_idx.iter().enumerate() {
            let pos = dicts[k].binary_search(input.value(r, i)).expect("value present in dictionary");
            cell += pos * st[k];
        }
        for (a, &(idx, kind)) in layout.iter().enumerate() {
            let v = idx.map(|i| input.value(r, i));
            let slot = &mut arrays[a][cell];
            if a == 0 {
                *slot = slot.wrapping_add(1);
                continue;
            }
            let Some(v) = v.filter(|v| !v.is_null()) else { continue };
            if counts_nonnull[a] || kind == Cell::PlainCount {
                *slot = slot.wrapping_add(1);
                continue;
            }
            match kind {
                Cell::IntPrefix => *slot = (*slot as i64).wrapping_add(v.as_int().unwrap_or(0)) as u64,
                Cell::FloatPrefix => *slot = (f64::from_bits(*slot) + v.as_float().unwrap_or(0.0)).to_bits(),
                Cell::IntPlainMin => *slot = (*slot as i64).min(v.as_int().unwrap_or(0)) as u64,
                Cell::IntPlainMax => *slot = (*slot as i64).max(v.as_int().unwrap_or(0)) as u64,
                Cell::FloatPlainMin => {
                    let x = v.as_float().unwrap_or(0.0);
                    if x.total_cmp(&f64::from_bits(*slot)).is_lt() {
                        *slot = x.to_bits();
                    }
                }
                Cell::FloatPlainMax => {
                    let x = v.as_float().unwrap_or(0.0);
                    if x.total_cmp(&f64::from_bits(*slot)).is_gt() {
                        *slot = x.to_bits();
                    }
                }
                Cell::PlainCount => unreachable!(),
            }
        }
    }

    for (a, &(_, kind)) in layout.iter().enumerate() {
        if !kind.is_prefix() {
            continue;
        }
        let float = kind == Cell::FloatPrefix && !counts_nonnull[a];
        let arr = &mut arrays[a];
        for k in 0..cards.len() {
            let stride = st[k];
            for c in 0..cells {
                if (c / stride).is_multiple_of(cards[k]) {
                    continue;
                }
                let prev = arr[c - stride];
                arr[c] = if float {
                    (f64::from_bits(arr[c]) + f64::from_bits(prev)).to_bits()
                } else {
                    arr[c].wrapping_add(prev)
                };
            }
        }
    }

    for (k, d) in dims.iter().enumerate() {
        w.str(&d.column);
        w.column_type(schema.fields()[dim_idx[k]].ty);
        w.u32(cards[k] as u32);
        for v in &dicts[k] {
            w.scalar(v);
        }
    }
    w.u32(measures.len() as u32);
    for ty in &measure_types {
        w.u8(ty.map_or(0xff, crate::codec::type_tag));
    }
    for arr in &arrays {
        for &v in arr {
            w.u64(v);
        }
    }
    Ok(Written {
        dims: dims.len(),
        arrays: layout.len(),
        cells: cells as u64,
    })
}

#[derive(Debug, Clone)]
pub(super) struct CubeDecoded {
    dicts: Vec<Vec<ScalarValue>>,
    dim_types: Vec<ColumnType>,
    measure_types: Vec<Option<ColumnType>>,
    arrays: Vec<Vec<u64>>,
    cards: Vec<usize>,
    strides: Vec<usize>,
    pub cells: u64,
    pub count_array_offset: usize,
}

impl CubeDecoded {
    pub(super) fn read(
        r: &mut Reader<'_>,
        kind: &StructureKind,
        ndims: usize,
        narrays: usize,
        cells: u64,
    ) -> Result<CubeDecoded, DecodeError> {
        let (dims, _, measures) = cube_parts(kind);
        if ndims != dims.len() {
            return Err(DecodeError::Malformed("dimension count".into()));
        }
        let mut dicts = Vec::with_capacity(ndims);
        let mut dim_types = Vec::with_capacity(ndims);
        for d in dims {
            if r.str()? != d.column {
                return Err(DecodeError::Malformed(alloc::format!("dimension `{}`", d.column)));
            }
            dim_types.push(r.column_type()?);
            let card = r.u32()? as usize;
            if card > r.remaining() {
                return Err(DecodeError::Truncated(r.position()));
            }
            let mut dict = Vec::with_capacity(card);
            for _ in 0..card {
                dict.push(r.scalar()?);
            }
            dicts.push(dict);
        }
        let nm = r.u32()? as usize;
        if nm != measures.len() {
            return Err(DecodeError::Malformed("measure count".into()));
        }
        let mut measure_types = Vec::with_capacity(nm);
        for _ in 0..nm {
            let at = r.position();
            measure_types.push(match r.u8()? {
                0xff => None,
                0 => Some(ColumnType::Int64),
                1 => Some(ColumnType::Float64),
                2 => Some(ColumnType::Utf8),
                3 => Some(ColumnType::Bool),
                tag => return Err(DecodeError::BadTag { tag, at }),
            });
        }
        let cards: Vec<usize> = dicts.iter().map(Vec::len).collect();
        let expect = cards.iter().fold(1u128, |a, &c| a.saturating_mul(c as u128));
        let expect_arrays = 1 + measures.iter().map(arrays_per_measure).sum::<usize>();
        if expect != cells as u128 || narrays != expect_arrays {
            return Err(DecodeError::Malformed("cube shape disagrees with header".into()));
        }
        let count_array_offset = r.position();
        let n = cells as usize;
        if (n as u128) * 8 * narrays as u128 > r.remaining() as u128 {
            return Err(DecodeError::Truncated(r.position()));
        }
        let mut arrays = Vec::with_capacity(narrays);
        for _ in 0..narrays {
            let bytes = r.take(n * 8)?;
            arrays.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            );
        }
        let strides = strides(&cards);
        Ok(CubeDecoded {
            dicts,
            dim_types,
            measure_types,
            arrays,
            cards,
            strides,
            cells,
            count_array_offset,
        })
    }

    pub(super) fn count_array(&self) -> &[u64] {
        &self.arrays[0]
    }

    /// Inclusive index range of dictionary entries satisfying every bound,
    /// or `None` when empty. Bounded dimensions exclude the null entry.
    fn dim_range(&self, k: usize, dim: &CubeDim, b: &Binding) -> Result<Option<(usize, usize)>, StructureError> {
        let dict = &self.dicts[k];
        let mut lo = 0usize;
        let mut hi = dict.len();
        if !dim.bounds.is_empty() {
            lo = dict.partition_point(ScalarValue::is_null);
        }
        for bound in &dim.bounds {
            let v = match &bound.value {
                ProbeValue::Literal(v) => v.clone(),
                ProbeValue::Choice(id) => b
                    .value(id)
                    .cloned()
                    .ok_or_else(|| StructureError::UnboundChoice(id.clone()))?,
            };
            if v.is_null() {
                return Ok(None);
            }
            if !v.fits(self.dim_types[k]) {
                return Err(StructureError::TypeError(alloc::format!(
                    "{} {} {}",
                    dim.column,
                    bound.op.symbol(),
                    v.type_name()
                )));
            }
            let body = &dict[lo.min(hi)..hi];
            let base = lo;
            match bound.op {
                CmpOp::Ge => lo = base + body.partition_point(|x| x < &v),
                CmpOp::Gt => lo = base + body.partition_point(|x| x <= &v),
                CmpOp::Le => hi = base + body.partition_point(|x| x <= &v),
                CmpOp::Lt => hi = base + body.partition_point(|x| x < &v),
                op => return Err(StructureError::Unsupported(alloc::format!("cube bound {}", op.symbol()))),
            }
            if lo >= hi {
                return Ok(None);
            }
        }
        Ok(if lo < hi { Some((lo, hi - 1)) } else { None })
    }

    fn box_sum(&self, a: usize, lo: &[usize], hi: &[usize], float: bool, reads: &mut u64) -> u64 {
        let d = lo.len();
        let arr = &self.arrays[a];
        let mut int_acc: u64 = 0;
        let mut float_acc = 0.0f64;
        'corner: for mask in 0u32..(1u32 << d) {
            let mut cell = 0;
            for k in 0..d {
                let c = if mask & (1 << k) != 0 {
                    if lo[k] == 0 {
                        continue 'corner;
                    }
                    lo[k] - 1
                } else {
                    hi[k]
                };
                cell += c * self.strides[k];
            }
            if a == 0 {
                *reads += 1;
            }
            let neg = mask.count_ones() % 2 == 1;
            if float {
                let x = f64::from_bits(arr[cell]);
                float_acc += if neg { -x } else { x };
            } else if neg {
                int_acc = int_acc.wrapping_sub(arr[cell]);
            } else {
                int_acc = int_acc.wrapping_add(arr[cell]);
            }
        }
        if float {
            float_acc.to_bits()
        } else {
            int_acc
        }
    }

    fn box_cells(&self, lo: &[usize], hi: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut coord: Vec<usize> = lo.to_vec();
        loop {
            out.push(coord.iter().zip(&self.strides).map(|(c, s)| c * s).sum());
            let mut k = coord.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if coord[k] < hi[k] {
                    coord[k] += 1;
                    break;
                }
                coord[k] = lo[k];
            }
        }
    }

    /// Evaluates the cube under `b`; also returns how many row-count cells
    /// were read.
    pub(super) fn eval(&self, kind: &StructureKind, b: &Binding) -> Result<(Relation, u64), StructureError> {
        let (dims, group_keys, measures) = cube_parts(kind);
        let mut fields: Vec<Field> = Vec::new();
        let mut group_dims = Vec::new();
        for g in group_keys {
            let k = dims
                .iter()
                .position(|d| &d.column == g)
                .ok_or_else(|| StructureError::UnknownColumn(g.clone()))?;
            fields.push(Field::new(g.clone(), self.dim_types[k]));
            group_dims.push(k);
        }
        for (m, ty) in measures.iter().zip(&self.measure_types) {
            fields.push(Field::new(m.alias.clone(), aggregate_type(m, *ty)?));
        }
        let schema = Schema::new(fields).map_err(|e| StructureError::Unsupported(e.to_string()))?;
        let mut columns: Vec<Vec<ScalarValue>> = alloc::vec![Vec::new(); schema.len()];
        let mut reads = 0u64;

        let mut lo = Vec::with_capacity(dims.len());
        let mut hi = Vec::with_capacity(dims.len());
        for (k, d) in dims.iter().enumerate() {
            match self.dim_range(k, d, b)? {
                Some((l, h)) => {
                    lo.push(l);
                    hi.push(h);
                }
                None => return Ok((Relation::new("cube", schema, columns).expect("empty columns"), 0)),
            }
        }
        if self.cards.contains(&0) {
            return Ok((Relation::new("cube", schema, columns).expect("empty columns"), 0));
        }

        let mut rows = 0usize;
        let mut cur_lo = lo.clone();
        let mut cur_hi = hi.clone();
        for &k in &group_dims {
            cur_hi[k] = lo[k];
        }
        loop {
            let n = self.box_sum(0, &cur_lo, &cur_hi, false, &mut reads) as i64;
            if n > 0 {
                for (j, &k) in group_dims.iter().enumerate() {
                    columns[j].push(self.dicts[k][cur_lo[k]].clone());
                }
                let mut a = 1;
                for (j, (m, ty)) in measures.iter().zip(&self.measure_types).enumerate() {
                    let float = *ty == Some(ColumnType::Float64);
                    let v = match (m.func, &m.column) {
                        (AggFunc::Count, None) => ScalarValue::Int(n),
                        (AggFunc::Count, Some(_)) => {
                            ScalarValue::Int(self.box_sum(a, &cur_lo, &cur_hi, false, &mut reads) as i64)
                        }
                        (AggFunc::Sum | AggFunc::Avg, _) => {
                            let nn = self.box_sum(a + 1, &cur_lo, &cur_hi, false, &mut reads) as i64;
                            let s = self.box_sum(a, &cur_lo, &cur_hi, float, &mut reads);
                            match (nn, m.func, float) {
                                (0, _, _) => ScalarValue::Null,
                                (_, AggFunc::Sum, true) => ScalarValue::Float(f64::from_bits(s)),
                                (_, AggFunc::Sum, false) => ScalarValue::Int(s as i64),
                                (_, _, true) => ScalarValue::Float(f64::from_bits(s) / nn as f64),
                                (_, _, false) => ScalarValue::Float(s as i64 as f64 / nn as f64),
                            }
                        }
                        (AggFunc::Min | AggFunc::Max, _) => {
                            let want_min = m.func == AggFunc::Min;
                            let mut best: Option<ScalarValue> = None;
                            for c in self.box_cells(&cur_lo, &cur_hi) {
                                if self.arrays[a + 1][c] == 0 {
                                    continue;
                                }
                                let raw = self.arrays[a][c];
                                let v = if float {
                                    ScalarValue::Float(f64::from_bits(raw))
                                } else {
                                    ScalarValue::Int(raw as i64)
                                };
                                best = Some(match best {
                                    None => v,
                                    Some(cur) if (want_min && v < cur) || (!want_min && v > cur) => v,
                                    Some(cur) => cur,
                                });
                            }
                            best.unwrap_or(ScalarValue::Null)
                        }
                    };
                    columns[group_dims.len() + j].push(v);
                    a += arrays_per_measure(m);
                }
                rows += 1;
            }
            // advance the group odometer, last group key fastest
            let mut advanced = false;
            for &k in group_dims.iter().rev() {
                if cur_lo[k] < hi[k] {
                    cur_lo[k] += 1;
                    cur_hi[k] = cur_lo[k];
                    advanced = true;
                    break;
                }
                cur_lo[k] = lo[k];
                cur_hi[k] = lo[k];
            }
            if !advanced {
                break;
            }
        }
        let rel = Relation::new("cube", schema, columns).map_err(|e| StructureError::Unsupported(e.to_string()))?;
        debug_assert_eq!(rel.row_count(), rows);
        Ok((rel, reads))
    }
}
