//! Readers for the CLI's input files. Every error names the offending line.

use std::path::Path;

use crate::CliError;

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::Input(format!("{} line {}: {e}", path.display(), pos.line())),
        None => CliError::Input(format!("{}: {e}", path.display())),
    }
}

fn expect_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: [&str; 2]) -> Result<(), CliError> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::Input(format!(
            "{} line 1: expected header {:?}, found {:?}",
            path.display(),
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_number(path: &Path, line: u64, column: &str, text: &str) -> Result<f64, CliError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Input(format!(
            "{} line {line}: column {column} is not a finite number: {text:?}",
            path.display()
        ))),
    }
}

/// Rows of a `z,y` CSV.
pub fn read_zy(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = open_csv(path)?;
    expect_header(path, &mut reader, ["z", "y"])?;
    let (mut z, mut y) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        z.push(parse_number(path, line, "z", &record[0])?);
        y.push(parse_number(path, line, "y", &record[1])?);
    }
    if z.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok((z, y))
}

/// Observations of a `node,y` CSV, grouped by node in order of first appearance.
pub fn read_node_observations(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = open_csv(path)?;
    expect_header(path, &mut reader, ["node", "y"])?;
    let mut nodes: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let node = &record[0];
        if node.is_empty() {
            return Err(CliError::Input(format!(
                "{} line {line}: empty node id",
                path.display()
            )));
        }
        let y = parse_number(path, line, "y", &record[1])?;
        match nodes.iter().position(|n| n == node) {
            Some(i) => groups[i].push(y),
            None => {
                nodes.push(node.to_string());
                groups.push(vec![y]);
            }
        }
    }
    if nodes.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok((nodes, groups))
}

/// Relations `a <= b`, one per line; blank lines and `#` comments are skipped.
pub fn read_edges(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once("<=")
            .map(|(a, b)| (a.trim(), b.trim()))
            .filter(|(a, b)| {
                !a.is_empty() && !b.is_empty() && !a.contains(char::is_whitespace) && !b.contains(char::is_whitespace)
            });
        match parsed {
            Some((a, b)) => edges.push((a.to_string(), b.to_string())),
            None => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected `a <= b`, found {raw:?}",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(edges)
}
