//! File formats: data and matrix CSVs, edge lists, and JSON documents for
//! specs, fit reports, model paths and simulation batches.

use exgraph_core::graphs::UGraph;
use exgraph_core::hr::{validate_variogram, Variogram};
use exgraph_core::inference::{CliqueFit, FitReport, LoglikMode};
use exgraph_core::learn::ModelPath;
use exgraph_core::models::{CliqueFamily, GraphModelSpec};
use exgraph_core::numerics::Matrix;
use exgraph_core::simulate::SimBatch;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Version of every JSON document written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}, line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] exgraph_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_owned(),
        source,
    })
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Observations with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub values: Matrix,
}

/// Reads a CSV with a header row of variable names and one observation per line.
pub fn read_data(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(parse_error(path, 1, "missing header row"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (field, name) in record.iter().zip(&names) {
            let v: f64 = field.parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!("column '{name}': cannot parse '{field}' as a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!("column '{name}': value '{field}' is not finite"),
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(IoError::Format {
            path: path.to_owned(),
            message: "no observations".into(),
        });
    }
    Ok(Dataset {
        values: Matrix::from_vec(rows, names.len(), data)?,
        names,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => IoError::File {
            path: path.to_owned(),
            source: match e.into_kind() {
                csv::ErrorKind::Io(err) => err,
                _ => unreachable!(),
            },
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => parse_error(
            path,
            line,
            format!("expected {expected_len} fields, found {len}"),
        ),
        _ => parse_error(path, line, e.to_string()),
    }
}

/// Writes a matrix as CSV (optionally with a header), one row per line.
///
/// Values use the shortest representation that parses back to the same bits.
pub fn format_matrix(m: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

/// Reads a headerless numeric CSV; `NA` and empty cells become NaN when `allow_missing`.
pub fn read_matrix(path: &Path, allow_missing: bool) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, line) in text.lines().enumerate() {
        let line_no = k as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("expected {c} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        for f in fields {
            let v = if allow_missing && (f.is_empty() || f.eq_ignore_ascii_case("na")) {
                f64::NAN
            } else {
                f.parse().map_err(|_| {
                    parse_error(path, line_no, format!("cannot parse '{f}' as a number"))
                })?
            };
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| IoError::Format {
        path: path.to_owned(),
        message: "empty matrix".into(),
    })?;
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn read_variogram(path: &Path) -> Result<Variogram> {
    Ok(validate_variogram(&read_matrix(path, false)?)?)
}

/// Parses an edge list: one `i j` pair per line, 1-based, `#` starts a comment.
///
/// The graph has `dim` nodes if given, otherwise as many as the largest label.
pub fn parse_edges(text: &str, path: &Path, dim: Option<usize>) -> Result<UGraph> {
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k as u64 + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected two node labels, found '{content}'"),
            ));
        }
        let parse = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(parse_error(
                    path,
                    line_no,
                    format!("'{s}' is not a node label (1, 2, ...)"),
                )),
            }
        };
        let (i, j) = (parse(parts[0])?, parse(parts[1])?);
        if i == j {
            return Err(parse_error(path, line_no, format!("self-loop at node {i}")));
        }
        if let Some(d) = dim {
            if i.max(j) > d {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("node {} exceeds the dimension {d}", i.max(j)),
                ));
            }
        }
        edges.push((i, j));
    }
    let d = dim.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j)).max().unwrap_or(0));
    Ok(UGraph::from_edges(d, &edges)?)
}

pub fn read_edges(path: &Path, dim: Option<usize>) -> Result<UGraph> {
    parse_edges(&read_text(path)?, path, dim)
}

pub fn format_edges(g: &UGraph) -> String {
    g.edges()
        .iter()
        .map(|(i, j)| format!("{i} {j}\n"))
        .collect()
}

/// Provenance embedded in every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl RunInfo {
    pub fn new(command: &str, seed: u64, q: Option<f64>) -> Self {
        RunInfo {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueDoc {
    pub nodes: Vec<usize>,
    pub family: String,
    /// HR: upper-triangular entries in node order; logistic: `[θ]`.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDoc {
    pub schema: u32,
    pub dim: usize,
    pub edges: Vec<(usize, usize)>,
    pub cliques: Vec<CliqueDoc>,
}

fn family_doc(nodes: &[usize], family: &CliqueFamily) -> exgraph_core::Result<CliqueDoc> {
    let params = match family {
        CliqueFamily::Hr(g) => {
            let m = g.dim();
            (1..=m)
                .flat_map(|i| ((i + 1)..=m).map(move |j| (i, j)))
                .map(|(i, j)| g.get(i, j))
                .collect()
        }
        CliqueFamily::Logistic { theta } => vec![*theta],
        CliqueFamily::Custom(c) => {
            return Err(exgraph_core::Error::UnsupportedFamily(format!(
                "custom family '{}' cannot be serialized",
                c.name()
            )))
        }
    };
    Ok(CliqueDoc {
        nodes: nodes.to_vec(),
        family: family.tag_name().into(),
        params,
    })
}

fn family_from_doc(doc: &CliqueDoc) -> exgraph_core::Result<CliqueFamily> {
    let m = doc.nodes.len();
    match doc.family.as_str() {
        "hr" => {
            if doc.params.len() != m * (m.saturating_sub(1)) / 2 {
                return Err(exgraph_core::Error::InvalidArgument(format!(
                    "clique {:?} needs {} hr parameters, found {}",
                    doc.nodes,
                    m * (m.saturating_sub(1)) / 2,
                    doc.params.len()
                )));
            }
            let mut g = Matrix::zeros(m, m);
            let mut it = doc.params.iter();
            for i in 0..m {
                for j in (i + 1)..m {
                    let v = *it.next().expect("count checked");
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            Ok(CliqueFamily::Hr(validate_variogram(&g)?))
        }
        "logistic" => match doc.params.as_slice() {
            [theta] => CliqueFamily::logistic(*theta),
            _ => Err(exgraph_core::Error::InvalidArgument(format!(
                "logistic clique {:?} needs one parameter",
                doc.nodes
            ))),
        },
        other => Err(exgraph_core::Error::UnsupportedFamily(format!(
            "unknown family '{other}'"
        ))),
    }
}

impl SpecDoc {
    pub fn from_spec(spec: &GraphModelSpec) -> exgraph_core::Result<Self> {
        let cliques = spec
            .cliques()
            .iter()
            .zip(spec.families())
            .map(|(c, f)| family_doc(c, f))
            .collect::<exgraph_core::Result<Vec<_>>>()?;
        Ok(SpecDoc {
            schema: SCHEMA_VERSION,
            dim: spec.dim(),
            edges: spec.graph().edges(),
            cliques,
        })
    }

    pub fn to_spec(&self) -> exgraph_core::Result<GraphModelSpec> {
        if self.schema != SCHEMA_VERSION {
            return Err(exgraph_core::Error::Unsupported(format!(
                "spec schema {}",
                self.schema
            )));
        }
        let graph = UGraph::from_edges(self.dim, &self.edges)?;
        let cliques = self
            .cliques
            .iter()
            .map(|c| Ok((c.nodes.clone(), family_from_doc(c)?)))
            .collect::<exgraph_core::Result<Vec<_>>>()?;
        GraphModelSpec::new(graph, cliques)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| parse_error(path, e.line() as u64, format!("invalid JSON: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_spec(path: &Path) -> Result<GraphModelSpec> {
    Ok(read_json::<SpecDoc>(path)?.to_spec()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueFitDoc {
    #[serde(flatten)]
    pub clique: CliqueDoc,
    pub loglik: f64,
    pub rows: usize,
    pub converged: bool,
    pub evaluations: usize,
}

impl CliqueFitDoc {
    pub fn new(fit: &CliqueFit) -> exgraph_core::Result<Self> {
        Ok(CliqueFitDoc {
            clique: family_doc(&fit.nodes, &fit.family)?,
            loglik: fit.loglik,
            rows: fit.rows,
            converged: fit.converged,
            evaluations: fit.evaluations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema: u32,
    pub run: RunInfo,
    pub exceedances: usize,
    pub raw_count: usize,
    pub threshold: f64,
    pub edges: Vec<(usize, usize)>,
    pub cliques: Vec<CliqueFitDoc>,
    pub loglik: f64,
    pub loglik_mode: LoglikMode,
    pub params: usize,
    pub aic: f64,
    pub converged: bool,
    pub gamma: Option<Vec<Vec<f64>>>,
}

impl ReportDoc {
    pub fn new(
        report: &FitReport,
        run: RunInfo,
        sample: &exgraph_core::inference::ExceedanceSample,
    ) -> exgraph_core::Result<Self> {
        Ok(ReportDoc {
            schema: SCHEMA_VERSION,
            run,
            exceedances: sample.len(),
            raw_count: sample.raw_count(),
            threshold: sample.threshold(),
            edges: report.spec.graph().edges(),
            cliques: report
                .cliques
                .iter()
                .map(CliqueFitDoc::new)
                .collect::<exgraph_core::Result<_>>()?,
            loglik: report.loglik,
            loglik_mode: report.mode,
            params: report.params,
            aic: report.aic,
            converged: report.converged(),
            gamma: report.gamma.as_ref().map(|g| g.matrix().to_rows()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStepDoc {
    pub edges: Vec<(usize, usize)>,
    pub added: Option<(usize, usize)>,
    pub loglik: f64,
    pub p: usize,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDoc {
    pub schema: u32,
    pub run: RunInfo,
    pub loglik_mode: LoglikMode,
    /// Index of the AIC-minimal step.
    pub best: usize,
    pub steps: Vec<PathStepDoc>,
}

impl PathDoc {
    pub fn new(path: &ModelPath, run: RunInfo) -> Self {
        PathDoc {
            schema: SCHEMA_VERSION,
            run,
            loglik_mode: path
                .steps
                .first()
                .map_or(LoglikMode::Auto, |s| s.report.mode),
            best: path.best_index(),
            steps: path
                .steps
                .iter()
                .map(|s| PathStepDoc {
                    edges: s.edges.clone(),
                    added: s.added,
                    loglik: s.report.loglik,
                    p: s.report.params,
                    aic: s.report.aic,
                })
                .collect(),
        }
    }
}

/// AIC against edge count, one model per line.
pub fn format_aic_table(path: &ModelPath) -> String {
    let mut out = String::from("step,edges,p,loglik,aic\n");
    for (k, s) in path.steps.iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{},{}",
            s.edges.len(),
            s.report.params,
            s.report.loglik,
            s.report.aic
        )
        .expect("writing to a string");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDoc {
    pub schema: u32,
    pub run: RunInfo,
    pub n: usize,
    pub dim: usize,
    pub proposals: u64,
    pub accepts: u64,
    pub acceptance_rate: f64,
}

impl BatchDoc {
    pub fn new(batch: &SimBatch, run: RunInfo) -> Self {
        BatchDoc {
            schema: SCHEMA_VERSION,
            run,
            n: batch.samples.rows(),
            dim: batch.samples.cols(),
            proposals: batch.proposals,
            accepts: batch.accepts,
            acceptance_rate: batch.acceptance_rate(),
        }
    }
}

/// Header `Y1,…,Yd` followed by one realization per row.
pub fn format_batch(batch: &SimBatch) -> String {
    let names: Vec<String> = (1..=batch.samples.cols())
        .map(|j| format!("Y{j}"))
        .collect();
    format_matrix(&batch.samples, Some(&names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let m = Matrix::from_rows(&[
            [0.0, 0.1 + 0.2, 1e-300],
            [std::f64::consts::PI, 2.0 / 3.0, 123456789.123],
        ])
        .unwrap();
        let f = temp_file(&format_matrix(&m, None));
        let back = read_matrix(f.path(), false).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn data_errors_name_the_line() {
        let f = temp_file("a,b\n1,2\n3,x\n");
        match read_data(f.path()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let f = temp_file("a,b\n1,2\n3\n");
        match read_data(f.path()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let ok = read_data(temp_file("s1, s2\n1,2\n3,4\n").path()).unwrap();
        assert_eq!(ok.names, vec!["s1", "s2"]);
        assert_eq!(ok.values.rows(), 2);
    }

    #[test]
    fn edge_lists() {
        let g = parse_edges("# tree\n1 2\n2 3 # trailing\n\n", Path::new("g"), None).unwrap();
        assert_eq!(g.dim(), 3);
        assert_eq!(
            parse_edges(&format_edges(&g), Path::new("g"), Some(3)).unwrap(),
            g
        );
        match parse_edges("1 2\n2 0\n", Path::new("g"), None) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_edges("1 5\n", Path::new("g"), Some(4)).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let graph = UGraph::from_edges(4, &[(1, 2), (2, 3), (1, 3), (3, 4)]).unwrap();
        let tri =
            Variogram::from_rows(&[[0.0, 1.0, 1.5], [1.0, 0.0, 0.7], [1.5, 0.7, 0.0]]).unwrap();
        let spec = GraphModelSpec::new(
            graph,
            vec![
                (vec![1, 2, 3], CliqueFamily::Hr(tri)),
                (vec![3, 4], CliqueFamily::logistic(0.4).unwrap()),
            ],
        )
        .unwrap();
        let doc = SpecDoc::from_spec(&spec).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back: SpecDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_spec().unwrap(), spec);
        let mut wrong = back.clone();
        wrong.schema = 99;
        assert!(wrong.to_spec().is_err());
    }
}
