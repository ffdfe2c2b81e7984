//! Row-based structures: hash index over key columns and a sorted range index.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{IndexKey, ProbeValue, StructureError};
use crate::binding::Binding;
use crate::codec::{self, DecodeError, Reader, Writer};
use crate::relation::Relation;
use crate::value::ScalarValue;

fn column(input: &Relation, name: &str) -> Result<usize, StructureError> {
    input
        .schema()
        .index_of(name)
        .ok_or_else(|| StructureError::UnknownColumn(name.to_string()))
}

fn resolve(p: &ProbeValue, b: &Binding) -> Result<ScalarValue, StructureError> {
    match p {
        ProbeValue::Literal(v) => Ok(v.clone()),
        ProbeValue::Choice(id) => b
            .value(id)
            .cloned()
            .ok_or_else(|| StructureError::UnboundChoice(id.clone())),
    }
}

/// Rows with a null key are dropped. The
/// remaining rows are grouped by key and a sorted directory of
/// `(key, start, len)` entries follows the table.
pub(super) fn write_hash(w: &mut Writer, input: &Relation, keys: &[IndexKey]) -> Result<u64, StructureError> {
    let cols: Vec<usize> = keys.iter().map(|k| column(input, &k.column)).collect::<Result<_, _>>()?;
    let key_of = |r: usize| -> Vec<&ScalarValue> { cols.iter().map(|&c| input.value(r, c)).collect() };
    let mut order: Vec<usize> = (0..input.row_count())
        .filter(|&r| key_of(r).iter().all(|v| !v.is_null()))
        .collect();
    order.sort_by(|&a, &b| key_of(a).cmp(&key_of(b)).then(a.cmp(&b)));
    let table = input.take(&order);
    codec::write_relation(w, &table);

    let mut dir: Vec<(Vec<&ScalarValue>, u64, u64)> = Vec::new();
    for (pos, &r) in order.iter().enumerate() {
        let k = key_of(r);
        match dir.last_mut() {
            Some((last, _, len)) if *last == k => *len += 1,
            _ => dir.push((k, pos as u64, 1)),
        }
    }
    w.u64(dir.len() as u64);
    for (k, start, len) in &dir {
        for v in k {
            w.scalar(v);
        }
        w.u64(*start);
        w.u64(*len);
    }
    Ok(dir.len() as u64)
}

#[derive(Debug, Clone)]
pub(super) struct HashDecoded {
    table: Relation,
    directory: Vec<(Vec<ScalarValue>, usize, usize)>,
}

impl HashDecoded {
    pub(super) fn read(r: &mut Reader<'_>, nkeys: usize) -> Result<HashDecoded, DecodeError> {
        let table = codec::read_relation(r)?;
        let n = r.u64()? as usize;
        if n > r.remaining() {
            return Err(DecodeError::Truncated(r.position()));
        }
        let mut directory = Vec::with_capacity(n);
        for _ in 0..n {
            let mut key = Vec::with_capacity(nkeys);
            for _ in 0..nkeys {
                key.push(r.scalar()?);
            }
            let start = r.u64()? as usize;
            let len = r.u64()? as usize;
            if start.saturating_add(len) > table.row_count() {
                return Err(DecodeError::Malformed("directory entry past end of table".into()));
            }
            directory.push((key, start, len));
        }
        Ok(HashDecoded { table, directory })
    }

    pub(super) fn probe(&self, keys: &[IndexKey], b: &Binding) -> Result<Relation, StructureError> {
        let mut probe = Vec::with_capacity(keys.len());
        for k in keys {
            let v = resolve(&k.value, b)?;
            let ty = self.table.schema().field(&k.column).map(|f| f.ty);
            if let Some(ty) = ty {
                if !v.fits(ty) {
                    return Err(StructureError::TypeError(alloc::format!("{} = {}", k.column, v.type_name())));
                }
            }
            probe.push(v);
        }
        let hit = self
            .directory
            .binary_search_by(|(key, _, _)| key.as_slice().cmp(probe.as_slice()));
        let rows: Vec<usize> = match hit {
            Ok(i) => {
                let (_, start, len) = &self.directory[i];
                (*start..start + len).collect()
            }
            Err(_) => Vec::new(),
        };
        Ok(self.table.take(&rows))
    }
}

/// Non-null rows sorted by `column`, stable on row order.
pub(super) fn write_sorted(w: &mut Writer, input: &Relation, column_name: &str) -> Result<u64, StructureError> {
    let c = column(input, column_name)?;
    let mut order: Vec<usize> = (0..input.row_count()).filter(|&r| !input.value(r, c).is_null()).collect();
    order.sort_by(|&a, &b| input.value(a, c).cmp(input.value(b, c)).then(a.cmp(&b)));
    codec::write_relation(w, &input.take(&order));
    Ok(order.len() as u64)
}

#[derive(Debug, Clone)]
pub(super) struct SortedDecoded {
    table: Relation,
    column: usize,
}

impl SortedDecoded {
    pub(super) fn read(r: &mut Reader<'_>, column_name: &str) -> Result<SortedDecoded, DecodeError> {
        let table = codec::read_relation(r)?;
        let column = table
            .schema()
            .index_of(column_name)
            .ok_or_else(|| DecodeError::Malformed(alloc::format!("missing sort column `{column_name}`")))?;
        Ok(SortedDecoded { table, column })
    }

    /// Rows with `low <= column <= high`.
    pub(super) fn range(&self, low: &ScalarValue, high: &ScalarValue) -> Result<Relation, StructureError> {
        let ty = self.table.schema().fields()[self.column].ty;
        if low.is_null() || high.is_null() {
            return Ok(self.table.take(&[]));
        }
        for v in [low, high] {
            if !v.fits(ty) {
                return Err(StructureError::TypeError(alloc::format!("range bound {} on {ty} column", v.type_name())));
            }
        }
        let col = &self.table.columns()[self.column];
        let start = col.partition_point(|x| x < low);
        let end = col.partition_point(|x| x <= high).max(start);
        let rows: Vec<usize> = (start..end).collect();
        Ok(self.table.take(&rows))
    }
}
