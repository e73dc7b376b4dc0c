//! Parsers and writers for the three external text formats: dense CSV,
//! sparse kv (`label idx:val idx:val ...`), and comma-separated update
//! triples. Parsing runs per-partition on the engine; points are immutable
//! afterwards.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use dashmap::DashMap;

use crate::data::{
    validate_feature_name, DatasetSchema, FeatureKind, Name, SparsePoint, UpdateOp, UpdateTriple,
};
use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Named column holding the point id; requires a header.
    pub id_col: Option<String>,
    /// Named column holding a 0/1 ground-truth label; requires a header.
    pub label_col: Option<String>,
}

struct NumberedLine {
    line_no: usize,
    text: String,
}

fn read_lines(path: &Path) -> Result<Vec<NumberedLine>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let mut text = line.map_err(|e| Error::io(path, e))?;
        if text.ends_with('\r') {
            text.pop();
        }
        lines.push(NumberedLine { line_no: i + 1, text });
    }
    Ok(lines)
}

/// Column layout of a dense CSV file: per column, what it holds.
enum Column {
    Id,
    Label,
    Feature(usize),
}

fn resolve_columns(
    path: &Path,
    header: Option<&str>,
    schema: &DatasetSchema,
    opts: &CsvOptions,
) -> Result<Vec<Column>> {
    match header {
        Some(line) => {
            let names: Vec<&str> = line.split(',').collect();
            let mut columns = Vec::with_capacity(names.len());
            let mut feature_idx = 0usize;
            for name in &names {
                if opts.id_col.as_deref() == Some(*name) {
                    columns.push(Column::Id);
                } else if opts.label_col.as_deref() == Some(*name) {
                    columns.push(Column::Label);
                } else {
                    let expected = schema.features().get(feature_idx).ok_or_else(|| {
                        Error::Parse {
                            path: path.display().to_string(),
                            line: 1,
                            msg: format!("unexpected column {name:?}: schema has {} features", schema.len()),
                        }
                    })?;
                    if expected.0.as_ref() != *name {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            line: 1,
                            msg: format!("column {name:?} does not match schema feature {:?}", expected.0),
                        });
                    }
                    columns.push(Column::Feature(feature_idx));
                    feature_idx += 1;
                }
            }
            if feature_idx != schema.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    msg: format!("header has {feature_idx} feature columns, schema has {}", schema.len()),
                });
            }
            if opts.id_col.is_some() && !columns.iter().any(|c| matches!(c, Column::Id)) {
                return Err(Error::Data(format!("id column {:?} not found in header", opts.id_col)));
            }
            if opts.label_col.is_some() && !columns.iter().any(|c| matches!(c, Column::Label)) {
                return Err(Error::Data(format!("label column {:?} not found in header", opts.label_col)));
            }
            Ok(columns)
        }
        None => {
            if opts.id_col.is_some() || opts.label_col.is_some() {
                return Err(Error::Config(
                    "id/label columns require a header row".into(),
                ));
            }
            Ok((0..schema.len()).map(Column::Feature).collect())
        }
    }
}

fn parse_label_token(tok: &str) -> std::result::Result<u8, String> {
    let v: f64 = tok.parse().map_err(|_| format!("unparsable label {tok:?}"))?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(format!("label {tok:?} is not 0 or 1"))
    }
}

/// Parse a dense comma-separated file. One point per data row; zero-valued
/// real features are dropped (projection is a sum over present features, so
/// the omission is value-preserving). Ids come from the id column when
/// configured, else from the 0-based data-row index.
pub fn parse_dense_csv(
    engine: &Engine,
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    opts: &CsvOptions,
    partitions: usize,
) -> Result<PartitionedDataset<SparsePoint>> {
    let path = path.as_ref();
    let mut lines = read_lines(path)?;
    let header = if opts.has_header {
        if lines.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "missing header row".into(),
            });
        }
        Some(lines.remove(0).text)
    } else {
        None
    };
    let columns = resolve_columns(path, header.as_deref(), schema, opts)?;
    let names: Vec<Name> = schema.features().iter().map(|(n, _)| n.clone()).collect();
    let kinds: Vec<FeatureKind> = schema.features().iter().map(|(_, k)| *k).collect();
    let values: DashMap<String, Name> = DashMap::new();
    let intern = |s: &str| -> Name {
        if let Some(v) = values.get(s) {
            return v.clone();
        }
        let name = Name::from(s);
        values.insert(s.to_string(), name.clone());
        name
    };

    let rows: Vec<(usize, NumberedLine)> =
        lines.into_iter().enumerate().map(|(row, l)| (row, l)).collect();
    let ds = PartitionedDataset::from_items(rows, partitions);
    let path_str = path.display().to_string();
    let points = engine.try_map(&ds, "parse.dense", |(row, line)| {
        let fail = |msg: String| format!("{path_str}:{}: {msg}", line.line_no);
        let toks: Vec<&str> = line.text.split(',').collect();
        if toks.len() != columns.len() {
            return Err(fail(format!("expected {} columns, found {}", columns.len(), toks.len())));
        }
        let mut id: Option<String> = None;
        let mut label: Option<u8> = None;
        let mut real: Vec<(Name, f64)> = Vec::new();
        let mut cat: Vec<(Name, Name)> = Vec::new();
        for (tok, col) in toks.iter().zip(&columns) {
            match col {
                Column::Id => {
                    if tok.is_empty() {
                        return Err(fail("empty id".into()));
                    }
                    id = Some(tok.to_string());
                }
                Column::Label => label = Some(parse_label_token(tok).map_err(&fail)?),
                Column::Feature(fi) => match kinds[*fi] {
                    FeatureKind::Real => {
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| fail(format!("non-numeric token {tok:?} in real column {:?}", names[*fi])))?;
                        if !v.is_finite() {
                            return Err(fail(format!("non-finite value in column {:?}", names[*fi])));
                        }
                        if v != 0.0 {
                            real.push((names[*fi].clone(), v));
                        }
                    }
                    FeatureKind::Categorical => {
                        if tok.is_empty() {
                            return Err(fail(format!("empty categorical value in column {:?}", names[*fi])));
                        }
                        cat.push((names[*fi].clone(), intern(tok)));
                    }
                },
            }
        }
        let id = id.unwrap_or_else(|| row.to_string());
        let mut point = SparsePoint::new(id, real, cat).map_err(|e| fail(e.to_string()))?;
        if let Some(l) = label {
            point = point.with_label(l);
        }
        Ok::<SparsePoint, String>(point)
    })?;
    if opts.id_col.is_some() {
        check_unique_ids(&points)?;
    }
    Ok(points)
}

fn check_unique_ids(points: &PartitionedDataset<SparsePoint>) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    for p in points.iter() {
        if !seen.insert(p.id()) {
            return Err(Error::Data(format!("duplicate point id {:?}", p.id())));
        }
    }
    Ok(())
}

/// Parse the sparse kv format: one point per line, `label idx:val idx:val ...`
/// (space-separated). Indices become feature names `f<idx>`; the label is
/// stored as a ground-truth tag, never as a feature. Ids are 0-based line
/// indices.
pub fn parse_sparse_kv(
    engine: &Engine,
    path: impl AsRef<Path>,
    partitions: usize,
) -> Result<PartitionedDataset<SparsePoint>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let names: DashMap<usize, Name> = DashMap::new();
    let intern = |idx: usize| -> Name {
        if let Some(n) = names.get(&idx) {
            return n.clone();
        }
        let name = Name::from(format!("f{idx}"));
        names.insert(idx, name.clone());
        name
    };
    let rows: Vec<(usize, NumberedLine)> =
        lines.into_iter().enumerate().map(|(row, l)| (row, l)).collect();
    let ds = PartitionedDataset::from_items(rows, partitions);
    let path_str = path.display().to_string();
    engine.try_map(&ds, "parse.sparse", |(row, line)| {
        let fail = |msg: String| format!("{path_str}:{}: {msg}", line.line_no);
        let mut toks = line.text.split_whitespace();
        let label_tok = toks.next().ok_or_else(|| fail("empty line".into()))?;
        let label_val: f64 =
            label_tok.parse().map_err(|_| fail(format!("unparsable label {label_tok:?}")))?;
        let label: u8 = if label_val > 0.0 { 1 } else { 0 };
        let mut seen = std::collections::HashSet::new();
        let mut real: Vec<(Name, f64)> = Vec::new();
        for tok in toks {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| fail(format!("expected idx:val, found {tok:?}")))?;
            let idx: usize =
                idx_s.parse().map_err(|_| fail(format!("unparsable index {idx_s:?}")))?;
            if !seen.insert(idx) {
                return Err(fail(format!("duplicate index {idx}")));
            }
            let val: f64 = val_s.parse().map_err(|_| fail(format!("unparsable value {val_s:?}")))?;
            if !val.is_finite() {
                return Err(fail(format!("non-finite value for index {idx}")));
            }
            if val != 0.0 {
                real.push((intern(idx), val));
            }
        }
        let point = SparsePoint::new(row.to_string(), real, Vec::new())
            .map_err(|e| fail(e.to_string()))?;
        Ok::<SparsePoint, String>(point.with_label(label))
    })
}

/// Parse one update triple `id,feature,delta-spec`. A delta-spec containing
/// `:` is a categorical substitution (empty left side means a newly-arising
/// feature); anything else must parse as a finite real delta.
pub fn parse_update(line: &str) -> Result<UpdateTriple> {
    let mut parts = line.splitn(3, ',');
    let (id, feature, spec) = match (parts.next(), parts.next(), parts.next()) {
        (Some(id), Some(feature), Some(spec)) => (id, feature, spec),
        _ => return Err(Error::Data(format!("expected id,feature,delta in {line:?}"))),
    };
    if id.is_empty() {
        return Err(Error::Data(format!("empty id in {line:?}")));
    }
    validate_feature_name(feature)?;
    let op = if let Some((old, new)) = spec.split_once(':') {
        if new.is_empty() {
            return Err(Error::Data(format!("empty new value in {line:?}")));
        }
        UpdateOp::Substitution {
            old: if old.is_empty() { None } else { Some(old.to_string()) },
            new: new.to_string(),
        }
    } else {
        let delta: f64 = spec
            .parse()
            .map_err(|_| Error::Data(format!("unparsable numeric delta {spec:?}")))?;
        if !delta.is_finite() {
            return Err(Error::Data(format!("non-finite delta in {line:?}")));
        }
        UpdateOp::NumericDelta(delta)
    };
    Ok(UpdateTriple { id: id.to_string(), feature: feature.to_string(), op })
}

/// Write points as dense CSV with a header: `id,<features...>[,label]`.
/// Every schema feature is written (absent real features as 0).
pub fn write_dense_csv<'a>(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    points: impl IntoIterator<Item = &'a SparsePoint>,
    with_label: bool,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut header = String::from("id");
    for (name, _) in schema.features() {
        header.push(',');
        header.push_str(name);
    }
    if with_label {
        header.push_str(",label");
    }
    writeln!(w, "{header}").map_err(io_err)?;
    for p in points {
        let mut row = String::from(p.id());
        for (name, kind) in schema.features() {
            row.push(',');
            match kind {
                FeatureKind::Real => {
                    let v = p.real_value(name).unwrap_or(0.0);
                    row.push_str(&format!("{v}"));
                }
                FeatureKind::Categorical => {
                    let v = p
                        .cat_features()
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, v)| v.as_ref())
                        .ok_or_else(|| {
                            Error::Data(format!("point {:?} missing categorical {name:?}", p.id()))
                        })?;
                    row.push_str(v);
                }
            }
        }
        if with_label {
            row.push(',');
            row.push_str(&p.label().unwrap_or(0).to_string());
        }
        writeln!(w, "{row}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Write points in the sparse kv format. Only representable points are
/// accepted: all real features named `f<digits>` and no categorical features.
pub fn write_sparse_kv<'a>(
    path: impl AsRef<Path>,
    points: impl IntoIterator<Item = &'a SparsePoint>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in points {
        let line = sparse_kv_line(p)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn sparse_kv_line(p: &SparsePoint) -> Result<String> {
    if !p.cat_features().is_empty() {
        return Err(Error::Data(format!(
            "point {:?} has categorical features; not representable in sparse kv",
            p.id()
        )));
    }
    let mut indexed: Vec<(usize, f64)> = Vec::with_capacity(p.real_features().len());
    for (name, v) in p.real_features() {
        let idx: usize = name
            .strip_prefix('f')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Data(format!("feature {name:?} is not f<digits>; not representable in sparse kv"))
            })?;
        indexed.push((idx, *v));
    }
    indexed.sort_unstable_by_key(|(i, _)| *i);
    let mut line = p.label().unwrap_or(0).to_string();
    for (idx, v) in indexed {
        line.push_str(&format!(" {idx}:{v}"));
    }
    Ok(line)
}
