//! CSV ingestion and export.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pvd_core::interface::Source;
use pvd_core::relation::{Database, Relation};
use pvd_core::{ColumnType, InterfaceSpec, ScalarValue};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: line {line}, column `{column}`: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        reason: String,
    },
    #[error("{}: header {found:?} does not match schema {expected:?}", path.display())]
    SchemaMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("missing source files: {}", .0.join(", "))]
    MissingSources(Vec<String>),
}

fn parse_field(raw: &str, ty: ColumnType) -> Result<ScalarValue, String> {
    if raw.is_empty() {
        return Ok(ScalarValue::Null);
    }
    match ty {
        ColumnType::Int64 => raw.parse::<i64>().map(ScalarValue::Int).map_err(|e| format!("`{raw}`: {e}")),
        ColumnType::Float64 => raw.parse::<f64>().map(ScalarValue::Float).map_err(|e| format!("`{raw}`: {e}")),
        ColumnType::Bool => match raw {
            "true" => Ok(ScalarValue::Bool(true)),
            "false" => Ok(ScalarValue::Bool(false)),
            _ => Err(format!("`{raw}` is not true or false")),
        },
        ColumnType::Utf8 => Ok(ScalarValue::str(raw)),
    }
}

/// Reads a headed CSV file whose header must list the source's columns in order.
/// Empty fields load as null.
pub fn load_csv(path: &Path, source: &Source) -> Result<Relation, LoadError> {
    let file = File::open(path).map_err(|e| LoadError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(io::BufReader::new(file));
    let csv_err = |e| LoadError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let expected: Vec<String> = source.schema.names().map(str::to_string).collect();
    let found: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(LoadError::SchemaMismatch {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    let fields = source.schema.fields();
    let mut columns: Vec<Vec<ScalarValue>> = fields.iter().map(|_| Vec::new()).collect();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != fields.len() {
            return Err(LoadError::Parse {
                path: path.to_path_buf(),
                line,
                column: String::new(),
                reason: format!("expected {} fields, found {}", fields.len(), record.len()),
            });
        }
        for ((raw, field), col) in record.iter().zip(fields).zip(&mut columns) {
            let v = parse_field(raw, field.ty).map_err(|reason| LoadError::Parse {
                path: path.to_path_buf(),
                line,
                column: field.name.clone(),
                reason,
            })?;
            col.push(v);
        }
    }
    Relation::new(source.name.clone(), source.schema.clone(), columns).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: String::new(),
        reason: e.to_string(),
    })
}

/// Loads every source of `spec` from `dir`, reporting all missing files at once.
pub fn load_database(spec: &InterfaceSpec, dir: &Path) -> Result<Database, LoadError> {
    let missing: Vec<String> = spec
        .sources
        .iter()
        .filter(|s| !dir.join(&s.path).is_file())
        .map(|s| dir.join(&s.path).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(LoadError::MissingSources(missing));
    }
    let mut db = Database::new();
    for s in &spec.sources {
        db.insert(s.name.clone(), load_csv(&dir.join(&s.path), s)?);
    }
    Ok(db)
}

fn render(v: &ScalarValue) -> String {
    match v {
        ScalarValue::Null => String::new(),
        ScalarValue::Bool(b) => b.to_string(),
        ScalarValue::Int(i) => i.to_string(),
        ScalarValue::Float(f) => f.to_string(),
        ScalarValue::Str(s) => s.to_string(),
    }
}

pub fn write_csv(rel: &Relation, path: &Path) -> Result<(), LoadError> {
    let io_err = |e| LoadError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(io::BufWriter::new(file));
    let csv_err = |e| LoadError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    w.write_record(rel.schema().names()).map_err(csv_err)?;
    let mut buf: Vec<String> = Vec::with_capacity(rel.schema().len());
    for i in 0..rel.row_count() {
        buf.clear();
        buf.extend(rel.columns().iter().map(|c| render(&c[i])));
        w.write_record(&buf).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .flush()
        .map_err(io_err)
}

/// Writes each relation to `<dir>/<source path>`.
pub fn write_database(spec: &InterfaceSpec, db: &Database, dir: &Path) -> Result<(), LoadError> {
    std::fs::create_dir_all(dir).map_err(|e| LoadError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for s in &spec.sources {
        if let Some(rel) = db.get(&s.name) {
            write_csv(rel, &dir.join(&s.path))?;
        }
    }
    Ok(())
}
