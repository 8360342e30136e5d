//! Text formats for matrices and trees.
//!
//! A matrix file starts with a line holding `n`, followed by `n` lines of `n`
//! characters from `{0,1}`. A tree file has one `u v weight` line per edge.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clique_core::{BitVector, BooleanMatrix, Tree, WeightedEdge};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] clique_core::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

pub fn parse_matrix(text: &str) -> Result<BooleanMatrix, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| parse_err(1, format!("expected the dimension, found {first:?}")))?;
    if n == 0 {
        return Err(parse_err(1, "dimension must be positive"));
    }
    let mut rows = Vec::with_capacity(n);
    for (idx, line) in lines {
        let line = line.trim();
        if rows.len() == n {
            return Err(parse_err(idx + 1, "more rows than the dimension"));
        }
        if line.len() != n {
            return Err(parse_err(
                idx + 1,
                format!("row has {} entries, expected {n}", line.len()),
            ));
        }
        let row = BitVector::parse01(line).ok_or_else(|| parse_err(idx + 1, "rows may only contain 0 and 1"))?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(parse_err(n + 1, format!("found {} rows, expected {n}", rows.len())));
    }
    Ok(BooleanMatrix::from_rows(rows)?)
}

pub fn write_matrix(m: &BooleanMatrix) -> String {
    let mut out = String::with_capacity(m.n() * (m.n() + 1) + 8);
    writeln!(out, "{}", m.n()).unwrap();
    for r in m.rows() {
        writeln!(out, "{r}").unwrap();
    }
    out
}

pub fn read_matrix_file(path: &Path) -> Result<BooleanMatrix, FormatError> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn parse_tree(n: usize, text: &str) -> Result<Tree, FormatError> {
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(idx + 1, format!("not a number: {s:?}")))
        };
        if f.len() != 3 {
            return Err(parse_err(idx + 1, "expected `u v weight`"));
        }
        let (u, v, w) = (num(f[0])? as usize, num(f[1])? as usize, num(f[2])?);
        if u == v {
            return Err(parse_err(idx + 1, "self loop"));
        }
        edges.push(WeightedEdge::new(u, v, w));
    }
    Ok(Tree::new(n, edges)?)
}

pub fn write_tree(t: &Tree) -> String {
    let mut out = String::new();
    for e in t.edges() {
        writeln!(out, "{} {} {}", e.u, e.v, e.weight).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let text = "3\n101\n010\n111\n";
        let m = parse_matrix(text).unwrap();
        assert!(m.get(1, 1) && !m.get(1, 2) && m.get(3, 2));
        assert_eq!(write_matrix(&m), text);
    }

    #[test]
    fn matrix_errors() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2\n10\n").is_err());
        assert!(parse_matrix("2\n10\n1\n").is_err());
        assert!(parse_matrix("2\n10\n12\n").is_err());
        assert!(parse_matrix("2\n10\n11\n00\n").is_err());
        assert!(parse_matrix("x\n").is_err());
    }

    #[test]
    fn tree_roundtrip() {
        let t = parse_tree(3, "1 2 4\n3 2 1\n").unwrap();
        assert_eq!(write_tree(&t), "1 2 4\n2 3 1\n");
        assert!(parse_tree(3, "1 2 4\n2 1 1\n").is_err());
        assert!(parse_tree(3, "1 2\n2 3 1\n").is_err());
    }
}
