//! Plain-text profile and alphabet files.
//!
//! Profile table:
//!
//! ```text
//! # comment
//! domain lag            # or: domain frequency
//! 0 0 1.0               # stream index, lag (or frequency) index, value
//! 0 1 0.5
//! ```
//!
//! `lag` rows give the real autocorrelation for lags `0, 1, …` (missing lags
//! are zero); `frequency` rows give spectrum samples on the grid `l/Nr` and
//! every stream must list all `Nr` nodes.
//!
//! Alphabet file: each codeword starts with a `codeword` line followed by `K`
//! rows of `nt` whitespace-separated `re,im` pairs.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::channel::{ChannelProfile, FadingStatistics};
use crate::codebook::{Codeword, CodewordAlphabet};
use crate::error::{invalid, Error, Result};
use crate::linalg::CMat;

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub fn parse_profile(text: &str) -> Result<ChannelProfile> {
    let mut lines = content_lines(text);
    let frequency = match lines.next() {
        Some((n, line)) => match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["domain", "lag"] => false,
            ["domain", "frequency"] => true,
            _ => return parse_err(n, "expected 'domain lag' or 'domain frequency'"),
        },
        None => return parse_err(0, "empty profile"),
    };
    let mut entries: Vec<Vec<Option<f64>>> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return parse_err(n, format!("expected 'stream index value', got '{line}'"));
        }
        let stream: usize = fields[0].parse().or_else(|_| parse_err(n, "bad stream index"))?;
        let index: usize = fields[1].parse().or_else(|_| parse_err(n, "bad lag/frequency index"))?;
        let value: f64 = fields[2].parse().or_else(|_| parse_err(n, "bad value"))?;
        if entries.len() <= stream {
            entries.resize(stream + 1, Vec::new());
        }
        let row = &mut entries[stream];
        if row.len() <= index {
            row.resize(index + 1, None);
        }
        if row[index].replace(value).is_some() {
            return parse_err(n, format!("duplicate entry for stream {stream}, index {index}"));
        }
    }
    if entries.is_empty() || entries.iter().any(|r| r.is_empty()) {
        return parse_err(0, "every stream from 0 to the largest index needs at least one entry");
    }
    if frequency {
        let nr = entries[0].len();
        let mut grid = Vec::with_capacity(entries.len());
        for (k, row) in entries.into_iter().enumerate() {
            if row.len() != nr || row.iter().any(|v| v.is_none()) {
                return parse_err(0, format!("stream {k} does not list all {nr} frequency nodes"));
            }
            grid.push(row.into_iter().flatten().collect());
        }
        ChannelProfile::from_grid(grid)
    } else {
        ChannelProfile::from_lags(entries.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(0.0)).collect()).collect())
    }
}

pub fn read_profile(path: &Path) -> Result<ChannelProfile> {
    parse_profile(&fs::read_to_string(path)?)
}

/// Writes a lag or grid profile. The closed-form triangular preset has no
/// finite table and is rejected.
pub fn write_profile<W: Write>(profile: &ChannelProfile, mut out: W) -> Result<()> {
    let (domain, rows) = match profile.statistics() {
        FadingStatistics::Lags(l) => ("lag", l),
        FadingStatistics::Grid(g) => ("frequency", g),
        FadingStatistics::Triangular => return invalid("the triangular preset is referenced by name, not tabulated"),
    };
    writeln!(out, "domain {domain}")?;
    for (k, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            writeln!(out, "{k} {i} {v:?}")?;
        }
    }
    Ok(())
}

fn parse_pair(n: usize, token: &str) -> Result<Complex64> {
    let (re, im) = match token.split_once(',') {
        Some(p) => p,
        None => return parse_err(n, format!("expected 're,im', got '{token}'")),
    };
    let re: f64 = re.trim().parse().or_else(|_| parse_err(n, format!("bad real part '{re}'")))?;
    let im: f64 = im.trim().parse().or_else(|_| parse_err(n, format!("bad imaginary part '{im}'")))?;
    Ok(Complex64::new(re, im))
}

pub fn parse_alphabet(text: &str) -> Result<CodewordAlphabet> {
    let mut blocks: Vec<Vec<Vec<Complex64>>> = Vec::new();
    for (n, line) in content_lines(text) {
        if line == "codeword" {
            blocks.push(Vec::new());
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            return parse_err(n, "matrix row before the first 'codeword' line");
        };
        let row = line.split_whitespace().map(|t| parse_pair(n, t)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = block.first() {
            if first.len() != row.len() {
                return parse_err(n, format!("row has {} entries, expected {}", row.len(), first.len()));
            }
        }
        block.push(row);
    }
    if blocks.is_empty() {
        return parse_err(0, "no codewords");
    }
    let codewords = blocks
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            if rows.is_empty() {
                return parse_err(0, format!("codeword {i} has no rows"));
            }
            let flat: Vec<Complex64> = rows.iter().flatten().copied().collect();
            Codeword::from_matrix(CMat::from_row_slice(rows.len(), rows[0].len(), &flat))
        })
        .collect::<Result<Vec<_>>>()?;
    CodewordAlphabet::new(codewords)
}

pub fn read_alphabet(path: &Path) -> Result<CodewordAlphabet> {
    parse_alphabet(&fs::read_to_string(path)?)
}

pub fn write_alphabet<W: Write>(alphabet: &CodewordAlphabet, mut out: W) -> Result<()> {
    for x in alphabet.codewords() {
        writeln!(out, "codeword")?;
        let m = x.matrix();
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?},{:?}", m[(r, c)].re, m[(r, c)].im)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(())
}
