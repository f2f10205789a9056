//! Heteroclinic connection graph from Morse indices and zero numbers.
//!
//! Nodes are equilibrium labels `1..=N` in the order of `u(0)`. Functions
//! taking a `j` or `k` use 0-based positions in the record slice, which must
//! be sorted by `d`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::EquilibriumRecord;
use crate::permutation::ZeroNumberTable;

/// Two values of `u(0)` closer than this are an ordering error.
pub const TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectionError {
    #[error("adjacency of an equilibrium with itself ({0})")]
    SameNode(usize),
    #[error("zero number z(u_{0} - u_{1}) is unresolved")]
    Indeterminate(usize, usize),
    #[error("u(0) values of labels {0} and {1} tie")]
    Tie(usize, usize),
    #[error("cascade requires i(u_{from}) > i(u_{to})")]
    IndexOrder { from: usize, to: usize },
}

fn z_checked(table: &ZeroNumberTable, a: usize, b: usize) -> Result<i64, ConnectionError> {
    if table.is_flagged(a, b) {
        return Err(ConnectionError::Indeterminate(a + 1, b + 1));
    }
    Ok(table.get(a, b))
}

/// Positions `m` with `u_m(0)` strictly between `u_j(0)` and `u_k(0)`.
fn between(j: usize, k: usize, records: &[EquilibriumRecord]) -> Result<Vec<usize>, ConnectionError> {
    let (a, b) = (records[j].u_at_0, records[k].u_at_0);
    if (a - b).abs() <= TIE_TOL {
        return Err(ConnectionError::Tie(j + 1, k + 1));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let mut out = Vec::new();
    for (m, r) in records.iter().enumerate() {
        if m == j || m == k {
            continue;
        }
        let u = r.u_at_0;
        if (u - lo).abs() <= TIE_TOL || (u - hi).abs() <= TIE_TOL {
            return Err(ConnectionError::Tie(m + 1, if (u - lo).abs() <= TIE_TOL { j + 1 } else { k + 1 }));
        }
        if u > lo && u < hi {
            out.push(m);
        }
    }
    Ok(out)
}

/// No equilibrium between `u_j` and `u_k` at θ = 0 has the same zero number
/// of difference with both.
pub fn adjacent(
    j: usize,
    k: usize,
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
) -> Result<bool, ConnectionError> {
    if j == k {
        return Err(ConnectionError::SameNode(j + 1));
    }
    for m in between(j, k, records)? {
        if z_checked(table, j, m)? == z_checked(table, k, m)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub label: usize,
    pub morse_index: usize,
    pub u_at_0: f64,
}

/// Directed edges `(from, to)` between labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<Node>,
    /// `adjacency[l-1]` lists the targets of label `l`.
    pub adjacency: Vec<Vec<usize>>,
}

impl ConnectionGraph {
    pub fn index_of(&self, label: usize) -> usize {
        self.nodes[label - 1].morse_index
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Edges whose Morse index drops by exactly `drop`.
    pub fn edges_with_drop(&self, drop: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .copied()
            .filter(|&(a, b)| self.index_of(a) == self.index_of(b) + drop)
            .collect()
    }

    /// Every edge strictly lowers the Morse index, hence every path does.
    pub fn is_graded(&self) -> bool {
        self.edges.iter().all(|&(a, b)| self.index_of(a) > self.index_of(b))
    }

    pub fn to_json(&self) -> GraphJson {
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adjacency[a - 1].push(b);
        }
        GraphJson {
            nodes: self.nodes.clone(),
            adjacency,
        }
    }

    /// DOT text with one rank per Morse index, highest on top.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph attractor {\n");
        if self.nodes.is_empty() {
            out.push_str("}\n");
            return out;
        }
        out.push_str("  rankdir=TB;\n  node [shape=circle];\n");
        let top = self.nodes.iter().map(|n| n.morse_index).max().unwrap_or(0);
        for i in (0..=top).rev() {
            let members: Vec<String> = self
                .nodes
                .iter()
                .filter(|n| n.morse_index == i)
                .map(|n| format!("\"{}\"", n.label))
                .collect();
            if !members.is_empty() {
                let _ = writeln!(out, "  {{ rank=same; {}; }}", members.join("; "));
            }
        }
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\\ni={}\"];",
                n.label, n.label, n.morse_index
            );
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
        }
        out.push_str("}\n");
        out
    }
}

fn nodes_of(records: &[EquilibriumRecord]) -> Vec<Node> {
    records
        .iter()
        .enumerate()
        .map(|(k, r)| Node {
            label: k + 1,
            morse_index: r.morse_index,
            u_at_0: r.u_at_0,
        })
        .collect()
}

/// Edge `j → k` iff `u_j`, `u_k` are adjacent and `i(u_j) > i(u_k)`.
pub fn heteroclinic_edges(
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
) -> Result<ConnectionGraph, ConnectionError> {
    let n = records.len();
    let mut edges = Vec::new();
    for j in 0..n {
        for k in 0..n {
            if records[j].morse_index > records[k].morse_index && adjacent(j, k, records, table)? {
                edges.push((j + 1, k + 1));
            }
        }
    }
    Ok(ConnectionGraph {
        nodes: nodes_of(records),
        edges,
    })
}

/// One cascade step from `lo` up to `hi`: index up by one, Morse permit,
/// and zero number permit at θ = 0.
fn cascade_step(
    lo: usize,
    hi: usize,
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
) -> Result<bool, ConnectionError> {
    if records[hi].morse_index != records[lo].morse_index + 1 {
        return Ok(false);
    }
    if z_checked(table, hi, lo)? != records[lo].morse_index as i64 {
        return Ok(false);
    }
    adjacent(lo, hi, records, table)
}

/// Depth-first search for a cascade from `u_k` up to `u_j`.
pub fn cascadly_adjacent(
    j: usize,
    k: usize,
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
) -> Result<bool, ConnectionError> {
    if records[j].morse_index <= records[k].morse_index {
        return Err(ConnectionError::IndexOrder { from: j + 1, to: k + 1 });
    }
    let mut path = Vec::new();
    dfs(k, j, records, table, &mut path)
}

fn dfs(
    at: usize,
    goal: usize,
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
    path: &mut Vec<usize>,
) -> Result<bool, ConnectionError> {
    let goal_index = records[goal].morse_index;
    if records[at].morse_index + 1 == goal_index {
        return cascade_step(at, goal, records, table);
    }
    path.push(at);
    for next in 0..records.len() {
        if records[next].morse_index == records[at].morse_index + 1
            && !path.contains(&next)
            && cascade_step(at, next, records, table)?
            && dfs(next, goal, records, table, path)?
        {
            path.pop();
            return Ok(true);
        }
    }
    path.pop();
    Ok(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WolfrumReport {
    pub pairs_checked: usize,
    /// `(from, to, adjacent, cascadly_adjacent)` for disagreeing pairs.
    pub mismatches: Vec<(usize, usize, bool, bool)>,
}

impl WolfrumReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares adjacency with cascade adjacency on every ordered pair with
/// `i_j > i_k`.
pub fn wolfrum_check(
    records: &[EquilibriumRecord],
    table: &ZeroNumberTable,
) -> Result<WolfrumReport, ConnectionError> {
    let n = records.len();
    let mut pairs_checked = 0;
    let mut mismatches = Vec::new();
    for j in 0..n {
        for k in 0..n {
            if records[j].morse_index <= records[k].morse_index {
                continue;
            }
            pairs_checked += 1;
            let a = adjacent(j, k, records, table)?;
            let c = cascadly_adjacent(j, k, records, table)?;
            if a != c {
                mismatches.push((j + 1, k + 1, a, c));
            }
        }
    }
    Ok(WolfrumReport {
        pairs_checked,
        mismatches,
    })
}

/// Edges violating `i(to) ≤ z(u_from − u_to) < i(from)`.
pub fn zero_number_range_violations(graph: &ConnectionGraph, table: &ZeroNumberTable) -> Vec<(usize, usize)> {
    graph
        .edges
        .iter()
        .copied()
        .filter(|&(a, b)| {
            let z = table.get(a - 1, b - 1);
            !(graph.index_of(b) as i64 <= z && z < graph.index_of(a) as i64)
        })
        .collect()
}
