//! Reading datasets and writing run artifacts.
//!
//! Every writer formats floats with Rust's shortest round-trip
//! representation and emits keys in a fixed order, so identical inputs give
//! identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::affinity::Dataset;
use crate::divergence::Embedding;
use crate::eda::EdaFit;
use crate::error::{Error, Result};
use crate::evaluation::{CurvePoint, RetrievalCurve};

/// Names accepted by [`load_bundled`].
pub const BUNDLED_DATASETS: [&str; 2] = ["iris", "wine"];

const IRIS_CSV: &str = include_str!("../data/iris.csv");
const WINE_CSV: &str = include_str!("../data/wine.csv");

/// Column holding class labels in an input table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name; requires a header row.
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Digits select a column by index, anything else by name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses CSV text into a [`Dataset`]. `source` only labels error messages.
///
/// The first row is a header when any of its feature cells is not a number.
pub fn parse_csv(text: &str, source: &Path, name: &str, label: Option<&LabelColumn>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(source, line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(parse_error(source, 1, 1, "file is empty"));
    }
    let width = records[0].1.len();

    let first = &records[0].1;
    let label_index = match label {
        Some(LabelColumn::Index(i)) => Some(*i),
        _ => None,
    };
    let has_header = matches!(label, Some(LabelColumn::Name(_)))
        || first
            .iter()
            .enumerate()
            .any(|(c, cell)| Some(c) != label_index && cell.parse::<f64>().is_err());
    let label_index = match label {
        Some(LabelColumn::Name(n)) => {
            let pos = first.iter().position(|h| h == n);
            Some(pos.ok_or_else(|| parse_error(source, records[0].0, 1, format!("no column named {n:?}")))?)
        }
        _ => label_index,
    };
    if let Some(i) = label_index {
        if i >= width {
            return Err(parse_error(
                source,
                records[0].0,
                i + 1,
                format!("label column {i} is past the last column ({width} columns)"),
            ));
        }
    }

    let body = if has_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(parse_error(source, records[0].0 + 1, 1, "no data rows"));
    }
    let dim = width - label_index.is_some() as usize;
    if dim == 0 {
        return Err(parse_error(source, records[0].0, 1, "no feature columns"));
    }
    let mut values = Vec::with_capacity(body.len() * dim);
    let mut labels = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    for (line, rec) in body {
        if rec.len() != width {
            return Err(parse_error(
                source,
                *line,
                rec.len().min(width) + 1,
                format!("row has {} fields, expected {width}", rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_index {
                let next = label_ids.len();
                labels.push(*label_ids.entry(cell.to_string()).or_insert(next));
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(parse_error(source, *line, c + 1, format!("{cell:?} is not a finite number"))),
            }
        }
    }
    let data = Array2::from_shape_vec((body.len(), dim), values).expect("row lengths were checked");
    Dataset::new(name, data, label_index.map(|_| labels))
}

/// Loads a comma-separated numeric table.
pub fn load_csv(path: &Path, label: Option<&LabelColumn>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&text, path, &name, label)
}

/// One of the datasets shipped with the crate, labeled by its `class`
/// column.
pub fn load_bundled(name: &str) -> Result<Dataset> {
    let text = match name {
        "iris" => IRIS_CSV,
        "wine" => WINE_CSV,
        _ => {
            return Err(Error::invalid(format!(
                "unknown bundled dataset {name:?}; available: {}",
                BUNDLED_DATASETS.join(", ")
            )))
        }
    };
    parse_csv(text, Path::new(name), name, Some(&LabelColumn::Name("class".into())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes map coordinates as CSV with header `y1,...,yd[,label]`.
pub fn save_embedding(embedding: &Embedding, labels: Option<&[usize]>, path: &Path) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != embedding.n() {
            return Err(Error::dims(format!("{} labels for {} points", l.len(), embedding.n())));
        }
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=embedding.dim()).map(|k| format!("y{k}")).collect();
    out.push_str(&header.join(","));
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in embedding.coords.rows().into_iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        if let Some(l) = labels {
            write!(out, ",{}", l[i]).unwrap();
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Reads a file written by [`save_embedding`].
pub fn load_embedding(path: &Path) -> Result<(Embedding, Option<Vec<usize>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(parse_error(path, 1, 1, "file is empty"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = cols.last() == Some(&"label");
    let dim = cols.len() - has_label as usize;
    for (c, name) in cols[..dim].iter().enumerate() {
        if *name != format!("y{}", c + 1) {
            return Err(parse_error(path, 1, c + 1, format!("expected column y{}, found {name:?}", c + 1)));
        }
    }
    if dim == 0 {
        return Err(parse_error(path, 1, 1, "no coordinate columns"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(parse_error(
                path,
                idx + 1,
                cells.len().min(cols.len()) + 1,
                format!("row has {} fields, expected {}", cells.len(), cols.len()),
            ));
        }
        for (c, cell) in cells[..dim].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, idx + 1, c + 1, format!("{cell:?} is not a number")))?;
            values.push(v);
        }
        if has_label {
            let l = cells[dim]
                .parse()
                .map_err(|_| parse_error(path, idx + 1, dim + 1, format!("{:?} is not a label index", cells[dim])))?;
            labels.push(l);
        }
        n += 1;
    }
    let coords = Array2::from_shape_vec((n, dim), values).expect("row lengths were checked");
    let embedding = Embedding::new(coords)?;
    Ok((embedding, has_label.then_some(labels)))
}

/// Contents of a metrics file. Keys, in order: `auc`, `curve`,
/// `alpha_grid`, `objectives`, `selected_alpha`, `final_cost`, `config`.
/// The three EDA keys are present only for alpha estimation runs and
/// `final_cost` only when an embedding was optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    /// One entry per output neighborhood size, in increasing order.
    pub curve: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    /// `None` entries mark candidates that failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectives: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    pub config: serde_json::Value,
}

impl Metrics {
    pub fn new(curve: &RetrievalCurve, fit: Option<&EdaFit>, final_cost: Option<f64>, config: serde_json::Value) -> Self {
        Metrics {
            auc: curve.auc,
            curve: curve.points.clone(),
            alpha_grid: fit.map(|f| f.grid.clone()),
            objectives: fit.map(|f| f.objectives.iter().map(|v| v.is_finite().then_some(*v)).collect()),
            selected_alpha: fit.map(|f| f.selected_alpha),
            final_cost,
            config,
        }
    }
}

/// Writes metrics as pretty-printed JSON.
pub fn save_metrics(metrics: &Metrics, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(metrics)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn load_metrics(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the retrieval curve as CSV: `k,recall,precision`.
pub fn save_curve(curve: &RetrievalCurve, path: &Path) -> Result<()> {
    let mut out = String::from("k,recall,precision\n");
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.k, p.recall, p.precision).unwrap();
    }
    write_file(path, &out)
}

/// Writes a table with a header row; `NaN` cells are left empty.
pub fn save_table(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::dims(format!("row has {} cells, header {}", row.len(), header.len())));
        }
        let cells: Vec<String> = row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Files produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub embedding_path: Option<PathBuf>,
    pub metrics_path: PathBuf,
    pub curve_path: Option<PathBuf>,
    /// Sweep tables and alpha curves.
    pub table_paths: Vec<PathBuf>,
    pub config_snapshot: serde_json::Value,
    pub started: SystemTime,
    pub finished: SystemTime,
}

/// Creates `dir` (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, label: Option<&LabelColumn>) -> Result<Dataset> {
        parse_csv(text, Path::new("t.csv"), "t", label)
    }

    #[test]
    fn bundled_sets() {
        let iris = load_bundled("iris").unwrap();
        assert_eq!((iris.n(), iris.dim()), (150, 4));
        let labels = iris.labels().unwrap();
        assert_eq!(labels.iter().max(), Some(&2));
        assert_eq!(labels[0], 0);
        let wine = load_bundled("wine").unwrap();
        assert_eq!((wine.n(), wine.dim()), (178, 13));
        assert!(load_bundled("mnist").is_err());
    }

    #[test]
    fn headerless_numeric_table() {
        let d = parse("1,2\n3,4\n5,6\n", None).unwrap();
        assert_eq!(d.data(), ndarray::array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert!(d.labels().is_none());
    }

    #[test]
    fn labels_in_first_appearance_order() {
        let d = parse("a,b,kind\n1,2,z\n3,4,y\n5,6,z\n7,8,x\n", Some(&LabelColumn::Name("kind".into()))).unwrap();
        assert_eq!(d.labels().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(d.dim(), 2);
        let d = parse("q,1,2\nr,3,4\n", Some(&LabelColumn::Index(0))).unwrap();
        assert_eq!(d.labels().unwrap(), &[0, 1]);
        assert_eq!(d.data()[[1, 1]], 4.0);
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse("1,2\n3\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse("a,b\n1,2\n3,x\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, column: 2, .. }), "{e}");
        assert!(matches!(parse("", None).unwrap_err(), Error::Parse { .. }));
        assert!(parse("1,2\n", None).is_err());
        assert!(parse("a,b\n1,2\n3,4\n", Some(&LabelColumn::Name("c".into()))).is_err());
    }

    #[test]
    fn label_column_from_str() {
        assert_eq!("3".parse::<LabelColumn>().unwrap(), LabelColumn::Index(3));
        assert_eq!("class".parse::<LabelColumn>().unwrap(), LabelColumn::Name("class".into()));
    }
}
