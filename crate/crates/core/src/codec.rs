//! Little-endian binary encoding for relations and structure payloads.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::hash::Hasher;

use crate::relation::{Field, Relation, Schema};
use crate::value::{ColumnType, ScalarValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("payload truncated at byte {0}")]
    Truncated(usize),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported payload version {0}")]
    Version(u16),
    #[error("invalid tag {tag} at byte {at}")]
    BadTag { tag: u8, at: usize },
    #[error("invalid utf-8 at byte {0}")]
    Utf8(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// 64-bit FNV-1a digest.
pub fn digest(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_bits().to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn scalar(&mut self, v: &ScalarValue) {
        match v {
            ScalarValue::Null => self.u8(0),
            ScalarValue::Bool(b) => {
                self.u8(1);
                self.u8(*b as u8);
            }
            ScalarValue::Int(i) => {
                self.u8(2);
                self.i64(*i);
            }
            ScalarValue::Float(f) => {
                self.u8(3);
                self.f64(*f);
            }
            ScalarValue::Str(s) => {
                self.u8(4);
                self.str(s);
            }
        }
    }

    pub fn column_type(&mut self, t: ColumnType) {
        self.u8(type_tag(t));
    }
}

pub(crate) fn type_tag(t: ColumnType) -> u8 {
    match t {
        ColumnType::Int64 => 0,
        ColumnType::Float64 => 1,
        ColumnType::Utf8 => 2,
        ColumnType::Bool => 3,
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.array()?)))
    }

    pub fn str(&mut self) -> Result<&'a str, DecodeError> {
        let len = self.u32()? as usize;
        let at = self.pos;
        core::str::from_utf8(self.take(len)?).map_err(|_| DecodeError::Utf8(at))
    }

    pub fn scalar(&mut self) -> Result<ScalarValue, DecodeError> {
        let at = self.pos;
        Ok(match self.u8()? {
            0 => ScalarValue::Null,
            1 => ScalarValue::Bool(self.u8()? != 0),
            2 => ScalarValue::Int(self.i64()?),
            3 => ScalarValue::Float(self.f64()?),
            4 => ScalarValue::Str(Arc::from(self.str()?)),
            tag => return Err(DecodeError::BadTag { tag, at }),
        })
    }

    pub fn column_type(&mut self) -> Result<ColumnType, DecodeError> {
        let at = self.pos;
        Ok(match self.u8()? {
            0 => ColumnType::Int64,
            1 => ColumnType::Float64,
            2 => ColumnType::Utf8,
            3 => ColumnType::Bool,
            tag => return Err(DecodeError::BadTag { tag, at }),
        })
    }
}

pub fn write_relation(w: &mut Writer, rel: &Relation) {
    w.str(rel.name());
    w.u32(rel.schema().len() as u32);
    for f in rel.schema().fields() {
        w.str(&f.name);
        w.column_type(f.ty);
    }
    w.u64(rel.row_count() as u64);
    for col in rel.columns() {
        for v in col {
            w.scalar(v);
        }
    }
}

pub fn read_relation(r: &mut Reader<'_>) -> Result<Relation, DecodeError> {
    let name = r.str()?.to_string();
    let ncols = r.u32()? as usize;
    let mut fields = Vec::with_capacity(ncols.min(1024));
    for _ in 0..ncols {
        let n = r.str()?.to_string();
        fields.push(Field::new(n, r.column_type()?));
    }
    let schema = Schema::new(fields).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let rows = r.u64()? as usize;
    if rows > r.remaining() {
        return Err(DecodeError::Truncated(r.position()));
    }
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let mut col = Vec::with_capacity(rows);
        for _ in 0..rows {
            col.push(r.scalar()?);
        }
        columns.push(col);
    }
    Relation::new(name, schema, columns).map_err(|e| DecodeError::Malformed(e.to_string()))
}

pub fn encode_relation(rel: &Relation) -> Vec<u8> {
    let mut w = Writer::new();
    write_relation(&mut w, rel);
    w.into_bytes()
}

pub fn decode_relation(bytes: &[u8]) -> Result<Relation, DecodeError> {
    let mut r = Reader::new(bytes);
    let rel = read_relation(&mut r)?;
    if r.remaining() != 0 {
        return Err(DecodeError::Malformed("trailing bytes".into()));
    }
    Ok(rel)
}

/// Digest of a relation's canonical encoding (rows sorted, name excluded).
pub fn relation_digest(rel: &Relation) -> u64 {
    let canon = rel.canonicalize().with_name("");
    digest(&encode_relation(&canon))
}
