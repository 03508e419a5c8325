//! Delimited-file input and output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::constraints::{parse_constraints, DenialConstraint};
use crate::dataset::{FusionDataset, GroundTruth};
use crate::error::{FusionError, Result};
use crate::inference::FusedTable;

pub const CLUSTER_COLUMN: &str = "__cluster_id";
pub const SOURCE_COLUMN: &str = "__source_id";

fn reader<R: Read>(r: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(r)
}

fn csv_error(path: &Path, e: csv::Error) -> FusionError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => FusionError::io(path, source),
        other => FusionError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn records<R: Read>(r: R, delimiter: u8, path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rd = reader(r, delimiter);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

/// Parses a clustered table: a header row, a required `__cluster_id` column,
/// an optional `__source_id` column, and attribute columns.
pub fn read_dataset_from<R: Read>(r: R, delimiter: u8, path: &Path) -> Result<FusionDataset> {
    let mut recs = records(r, delimiter, path)?.into_iter();
    let (_, header) = recs.next().ok_or(FusionError::Empty("input has no header row"))?;
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let cluster_col = header
        .iter()
        .position(|h| h == CLUSTER_COLUMN)
        .ok_or_else(|| FusionError::MissingColumn(CLUSTER_COLUMN.into()))?;
    let source_col = header.iter().position(|h| h == SOURCE_COLUMN);
    let attr_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != cluster_col && Some(c) != source_col)
        .collect();
    let schema: Vec<String> = attr_cols.iter().map(|&c| header[c].clone()).collect();
    let mut rows = Vec::new();
    let mut clusters = Vec::new();
    let mut sources = source_col.map(|_| Vec::new());
    for (line, rec) in recs {
        if rec.len() == 1 && rec[0].is_empty() && header.len() > 1 {
            continue;
        }
        if rec.len() != header.len() {
            return Err(FusionError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        clusters.push(rec[cluster_col].clone());
        if let (Some(c), Some(s)) = (source_col, sources.as_mut()) {
            s.push(rec[c].clone());
        }
        rows.push(attr_cols.iter().map(|&c| rec[c].clone()).collect());
    }
    FusionDataset::new(schema, rows, clusters, sources)
}

pub fn read_dataset(path: &Path, delimiter: u8) -> Result<FusionDataset> {
    let f = File::open(path).map_err(|e| FusionError::io(path, e))?;
    read_dataset_from(f, delimiter, path)
}

/// Labels: `(cluster_id, attribute_name, correct_value)` rows; a header row
/// starting with `cluster_id` or `__cluster_id` is skipped.
pub fn read_labels_from<R: Read>(
    r: R,
    delimiter: u8,
    path: &Path,
    ds: &FusionDataset,
) -> Result<GroundTruth> {
    let mut truth = GroundTruth::new();
    for (n, (line, rec)) in records(r, delimiter, path)?.into_iter().enumerate() {
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if n == 0 && matches!(rec.first().map(|s| s.trim()), Some("cluster_id" | CLUSTER_COLUMN)) {
            continue;
        }
        if rec.len() != 3 {
            return Err(FusionError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields (cluster_id, attribute, value), found {}", rec.len()),
            });
        }
        let k = ds
            .cluster_index(rec[0].trim())
            .ok_or_else(|| FusionError::UnknownCluster(rec[0].trim().to_string()))?;
        let j = ds
            .attribute_index(rec[1].trim())
            .ok_or_else(|| FusionError::UnknownAttribute(rec[1].trim().to_string()))?;
        truth.insert(k, j, rec[2].trim());
    }
    Ok(truth)
}

pub fn read_labels(path: &Path, delimiter: u8, ds: &FusionDataset) -> Result<GroundTruth> {
    let f = File::open(path).map_err(|e| FusionError::io(path, e))?;
    read_labels_from(f, delimiter, path, ds)
}

pub fn read_constraints(path: &Path, schema: &[String]) -> Result<Vec<DenialConstraint>> {
    let text = std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
    parse_constraints(&text, schema)
}

fn writer<W: Write>(w: W, delimiter: u8) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(delimiter).from_writer(w)
}

fn write_err(e: csv::Error) -> FusionError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => FusionError::io("<output>", source),
        other => FusionError::InvalidConfig(format!("cannot write output: {other:?}")),
    }
}

/// Writes rows in the input format (header, `__cluster_id`, optional `__source_id`).
pub fn write_rows<W: Write>(
    w: W,
    delimiter: u8,
    schema: &[String],
    rows: &[Vec<String>],
    clusters: &[String],
    sources: Option<&[String]>,
) -> Result<()> {
    let mut wr = writer(w, delimiter);
    let mut header = vec![CLUSTER_COLUMN.to_string()];
    if sources.is_some() {
        header.push(SOURCE_COLUMN.to_string());
    }
    header.extend(schema.iter().cloned());
    wr.write_record(&header).map_err(write_err)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![clusters[i].as_str()];
        if let Some(s) = sources {
            rec.push(&s[i]);
        }
        rec.extend(row.iter().map(String::as_str));
        wr.write_record(&rec).map_err(write_err)?;
    }
    wr.flush().map_err(|e| FusionError::io("<output>", e))
}

pub fn write_dataset<W: Write>(w: W, delimiter: u8, ds: &FusionDataset) -> Result<()> {
    let clusters: Vec<String> = (0..ds.n_rows())
        .map(|i| ds.cluster_id(ds.cluster_of(i)).to_string())
        .collect();
    let sources: Option<Vec<String>> = ds.sources().map(|s| {
        (0..ds.n_rows())
            .map(|i| s.ids()[s.of_row(i)].clone())
            .collect()
    });
    write_rows(w, delimiter, ds.schema(), ds.rows(), &clusters, sources.as_deref())
}

pub fn write_labels<W: Write>(w: W, delimiter: u8, labels: &[(String, String, String)]) -> Result<()> {
    let mut wr = writer(w, delimiter);
    wr.write_record(["cluster_id", "attribute", "value"]).map_err(write_err)?;
    for (k, a, v) in labels {
        wr.write_record([k, a, v]).map_err(write_err)?;
    }
    wr.flush().map_err(|e| FusionError::io("<output>", e))
}

/// One row per cluster; with `confidence`, an `<attribute>__confidence` column follows each attribute.
pub fn write_fused<W: Write>(w: W, delimiter: u8, table: &FusedTable, confidence: bool) -> Result<()> {
    let mut wr = writer(w, delimiter);
    let mut header = vec![CLUSTER_COLUMN.to_string()];
    for a in &table.schema {
        header.push(a.clone());
        if confidence {
            header.push(format!("{a}__confidence"));
        }
    }
    wr.write_record(&header).map_err(write_err)?;
    for (k, id) in table.cluster_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        for (j, v) in table.values[k].iter().enumerate() {
            rec.push(v.clone());
            if confidence {
                rec.push(format!("{:.6}", table.confidence[k][j]));
            }
        }
        wr.write_record(&rec).map_err(write_err)?;
    }
    wr.flush().map_err(|e| FusionError::io("<output>", e))
}
