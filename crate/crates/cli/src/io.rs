use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use segrew_core::{parse_trace, TokenRewardTrace};
use tempfile::NamedTempFile;

use crate::CliError;

/// A parsed input record with its 1-based line number.
#[derive(Debug, Clone)]
pub struct Line<T> {
    pub number: usize,
    pub value: T,
}

/// Formats a per-line diagnostic, naming the offending field when known.
pub fn diagnostic(line: usize, err: &segrew_core::Error) -> String {
    let field = err.field().map(str::to_owned).or_else(|| serde_field(err));
    match field {
        Some(field) => format!("line {line}: field `{field}`: {err}"),
        None => format!("line {line}: {err}"),
    }
}

fn serde_field(err: &segrew_core::Error) -> Option<String> {
    let segrew_core::Error::MalformedRecord(msg) = err else {
        return None;
    };
    let rest = msg
        .strip_prefix("missing field `")
        .or_else(|| msg.strip_prefix("unknown field `"))?;
    rest.split('`').next().map(str::to_owned)
}

/// Reads and validates every non-blank line. All invalid lines are reported
/// together.
pub fn read_traces(path: &Path) -> Result<Vec<Line<TokenRewardTrace>>, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::Usage)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let parsed: Vec<Result<Line<TokenRewardTrace>, String>> = lines
        .par_iter()
        .map(|&(number, l)| {
            parse_trace(l)
                .map(|value| Line { number, value })
                .map_err(|e| diagnostic(number, &e))
        })
        .collect();
    let mut ok = Vec::with_capacity(parsed.len());
    let mut bad = Vec::new();
    for p in parsed {
        match p {
            Ok(line) => ok.push(line),
            Err(msg) => bad.push(msg),
        }
    }
    if !bad.is_empty() {
        return Err(CliError::Invalid(bad));
    }
    if ok.is_empty() {
        return Err(CliError::Invalid(vec![format!(
            "{}: no records",
            path.display()
        )]));
    }
    Ok(ok)
}

/// Collects per-line results, turning failures into diagnostics.
pub fn collect_lines<T>(results: Vec<(usize, segrew_core::Result<T>)>) -> Result<Vec<T>, CliError> {
    let mut ok = Vec::with_capacity(results.len());
    let mut bad = Vec::new();
    for (line, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => bad.push(diagnostic(line, &e)),
        }
    }
    if bad.is_empty() {
        Ok(ok)
    } else {
        Err(CliError::Invalid(bad))
    }
}

/// Serializes one JSON value per line.
pub fn jsonl<T: serde::Serialize>(records: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    let Some(path) = path else {
        let mut stdout = io::stdout().lock();
        stdout.write_all(bytes)?;
        return stdout.flush().map_err(Into::into);
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
