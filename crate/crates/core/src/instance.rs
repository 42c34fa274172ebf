//! Text formats for instances and demand vectors.
//!
//! An instance file starts with a header line `n m`, followed by `m` edge
//! lines `u v w nl_spec`. An optional `b <path>` line names the demand file,
//! resolved relative to the instance. A demand file holds one real per line.
//! `#` starts a comment anywhere on a line.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("expected {expected} edge lines, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("missing header line `n m`")]
    MissingHeader,
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLine {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub n: usize,
    pub edges: Vec<EdgeLine>,
    pub b_path: Option<PathBuf>,
}

impl InstanceFile {
    /// Builds the graph; edges with identical response specs share one oracle.
    pub fn to_graph(&self) -> Result<Graph, GraphError> {
        let mut shared: HashMap<&str, Arc<Nonlinearity>> = HashMap::new();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let nl = shared
                    .entry(e.response.as_str())
                    .or_insert_with(|| Arc::new(e.response.parse().expect("validated while parsing")));
                (e.u, e.v, e.weight, Arc::clone(nl))
            })
            .collect();
        Graph::new(self.n, edges)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_finite(token: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let value: f64 = token
        .parse()
        .map_err(|_| syntax(line, format!("cannot parse {what} `{token}`")))?;
    if !value.is_finite() {
        return Err(syntax(line, format!("{what} must be finite, got `{token}`")));
    }
    Ok(value)
}

fn parse_node(token: &str, n: usize, line: usize) -> Result<usize, ParseError> {
    let node: usize = token
        .parse()
        .map_err(|_| syntax(line, format!("cannot parse node index `{token}`")))?;
    if node >= n {
        return Err(syntax(line, format!("node {node} out of range for {n} nodes")));
    }
    Ok(node)
}

pub fn parse_instance(text: &str) -> Result<InstanceFile, ParseError> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines.next().ok_or(ParseError::MissingHeader)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, m] = fields[..] else {
        return Err(syntax(header_line, "header must be `n m`"));
    };
    let n: usize = n.parse().map_err(|_| syntax(header_line, "bad node count"))?;
    let m: usize = m.parse().map_err(|_| syntax(header_line, "bad edge count"))?;

    let mut edges = Vec::with_capacity(m);
    let mut b_path = None;
    for (line_no, line) in lines {
        if let Some(rest) = line.strip_prefix("b ") {
            b_path = Some(PathBuf::from(rest.trim()));
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut next = |what: &str| tokens.next().ok_or_else(|| syntax(line_no, format!("missing {what}")));
        let u = parse_node(next("u")?, n, line_no)?;
        let v = parse_node(next("v")?, n, line_no)?;
        let weight = parse_finite(next("weight")?, line_no, "weight")?;
        let response: Vec<&str> = tokens.collect();
        if response.is_empty() {
            return Err(syntax(line_no, "missing nonlinearity spec"));
        }
        let response = response.join(" ");
        response
            .parse::<Nonlinearity>()
            .map_err(|e| syntax(line_no, e.to_string()))?;
        edges.push(EdgeLine { u, v, weight, response });
    }
    if edges.len() != m {
        return Err(ParseError::EdgeCount {
            expected: m,
            found: edges.len(),
        });
    }
    Ok(InstanceFile { n, edges, b_path })
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>, ParseError> {
    content_lines(text)
        .map(|(line_no, line)| {
            let mut tokens = line.split_whitespace();
            let value = parse_finite(tokens.next().unwrap_or(""), line_no, "value")?;
            if tokens.next().is_some() {
                return Err(syntax(line_no, "expected one value per line"));
            }
            Ok(value)
        })
        .collect()
}

fn read(path: &Path) -> Result<String, ParseError> {
    fs::read_to_string(path).map_err(|e| ParseError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads an instance; a relative `b` path is resolved against the instance's directory.
pub fn load_instance(path: &Path) -> Result<InstanceFile, ParseError> {
    let mut instance = parse_instance(&read(path)?)?;
    if let Some(b) = instance.b_path.take() {
        let base = path.parent().unwrap_or(Path::new(""));
        instance.b_path = Some(if b.is_absolute() { b } else { base.join(b) });
    }
    Ok(instance)
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>, ParseError> {
    parse_vector(&read(path)?)
}
