//! Edge-list files: one undirected `i j` pair per line, `#` comments.

use std::path::Path;

use crate::CliError;

pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, String> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j] = fields[..] else {
            return Err(format!(
                "line {}: expected two agent indices, got {line:?}",
                lineno + 1
            ));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| format!("line {}: {s:?} is not an agent index", lineno + 1))
        };
        let (i, j) = (parse(i)?, parse(j)?);
        if i == j {
            return Err(format!("line {}: self-loop {i} {j}", lineno + 1));
        }
        edges.push((i, j));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_edge_list(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
