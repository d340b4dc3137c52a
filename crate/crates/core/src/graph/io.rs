//! Plain-text edge lists.
//!
//! ```text
//! # p=4
//! 0,1,0.5
//! 1,3,-0.25
//! ```
//!
//! One `src,dst[,weight]` line per edge with 0-based indices; the weight is
//! omitted when unset. Other `# key=value` header lines and records whose
//! first field is not a node index are passed through to callers that extend
//! the format.

use std::fmt::Write as _;

use super::{Dag, UndirectedGraph};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct EdgeListDoc {
    pub p: usize,
    pub headers: Vec<(String, String)>,
    pub edges: Vec<(usize, usize, Option<f64>)>,
    /// Non-edge records with their 1-based line numbers.
    pub records: Vec<(usize, Vec<String>)>,
}

pub fn parse_edge_list_doc(text: &str) -> Result<EdgeListDoc> {
    let mut doc = EdgeListDoc::default();
    let mut saw_p = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line: line_no, message };
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.trim().split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                if k == "p" {
                    doc.p = v.parse().map_err(|_| perr(format!("bad node count '{v}'")))?;
                    saw_p = true;
                } else {
                    doc.headers.push((k.to_string(), v.to_string()));
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(src) = fields[0].parse::<usize>() else {
            doc.records.push((line_no, fields.iter().map(|s| s.to_string()).collect()));
            continue;
        };
        if !(2..=3).contains(&fields.len()) {
            return Err(perr(format!("expected src,dst[,weight], got '{line}'")));
        }
        let dst = fields[1].parse().map_err(|_| perr(format!("bad node index '{}'", fields[1])))?;
        let w = match fields.get(2) {
            Some(s) if !s.is_empty() => {
                Some(s.parse::<f64>().map_err(|_| perr(format!("bad weight '{s}'")))?)
            }
            _ => None,
        };
        doc.edges.push((src, dst, w));
    }
    if !saw_p {
        return Err(Error::Parse { line: 1, message: "missing '# p=<n>' header".into() });
    }
    Ok(doc)
}

pub fn dag_from_doc(doc: &EdgeListDoc) -> Result<Dag> {
    let weighted = doc.edges.iter().filter(|e| e.2.is_some()).count();
    if weighted == 0 {
        return Dag::new(doc.p, doc.edges.iter().map(|&(a, b, _)| (a, b)));
    }
    if weighted != doc.edges.len() {
        return Err(Error::Parse { line: 0, message: "either all or no edges may carry weights".into() });
    }
    let e: Vec<_> = doc.edges.iter().map(|&(a, b, w)| (a, b, w.unwrap())).collect();
    Dag::from_weighted(doc.p, &e)
}

pub fn parse_dag(text: &str) -> Result<Dag> {
    dag_from_doc(&parse_edge_list_doc(text)?)
}

pub fn write_dag(dag: &Dag) -> String {
    let mut s = format!("# p={}\n", dag.p());
    for (e, &(j, k)) in dag.edges().iter().enumerate() {
        match dag.weights() {
            Some(w) => writeln!(s, "{j},{k},{}", w[e]).unwrap(),
            None => writeln!(s, "{j},{k}").unwrap(),
        }
    }
    s
}

/// Undirected edges are written once as `a,b` with `a < b`.
pub fn write_undirected(graph: &UndirectedGraph) -> String {
    let mut s = format!("# p={}\n", graph.p());
    for (a, b) in graph.edges() {
        writeln!(s, "{a},{b}").unwrap();
    }
    s
}

pub fn parse_undirected(text: &str) -> Result<UndirectedGraph> {
    let doc = parse_edge_list_doc(text)?;
    UndirectedGraph::from_edges(doc.p, doc.edges.iter().map(|&(a, b, _)| (a, b)))
}
