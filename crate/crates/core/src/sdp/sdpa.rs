//! SDPA sparse format (`.dat-s`) writer and reader.
//!
//! Numbers are written in scientific notation with 17 significant digits, which is enough for
//! every `f64` to survive a write/read cycle bit for bit. A nonzero objective offset is kept in
//! a leading `*` comment line that other SDPA readers ignore.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::problem::{BlockSym, Entry, SdpProblem};
use crate::error::{Error, Result};

const OFFSET_TAG: &str = "* offset ";

fn num(x: f64) -> String {
    // `+ 0.0` folds negative zero so the output does not depend on how zeros were produced.
    format!("{:.16e}", x + 0.0)
}

/// Renders `p` as SDPA sparse text.
pub fn to_sdpa_string(p: &SdpProblem) -> Result<String> {
    p.validate()?;
    let mut s = String::new();
    if p.offset != 0.0 {
        let _ = writeln!(s, "{}{}", OFFSET_TAG, num(p.offset));
    }
    let _ = writeln!(s, "{}", p.num_constraints());
    let _ = writeln!(s, "{}", p.blocks.len());
    let blocks: Vec<String> = p.blocks.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(s, "{}", blocks.join(" "));
    let rhs: Vec<String> = p.rhs.iter().map(|&b| num(b)).collect();
    let _ = writeln!(s, "{}", rhs.join(" "));
    let mats = std::iter::once(&p.cost).chain(&p.constraints);
    for (k, m) in mats.enumerate() {
        let mut m = m.clone();
        m.canonicalize();
        for e in &m.entries {
            let _ = writeln!(s, "{} {} {} {} {}", k, e.block + 1, e.i + 1, e.j + 1, num(e.value));
        }
    }
    Ok(s)
}

pub fn write_sdpa<W: Write>(p: &SdpProblem, mut out: W) -> Result<()> {
    out.write_all(to_sdpa_string(p)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn export_sdpa(p: &SdpProblem, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_sdpa(p, std::io::BufWriter::new(file))
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse { row, column: column.to_string(), message: message.into() }
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')')).filter(|t| !t.is_empty())
}

/// Reads SDPA sparse text produced by [`to_sdpa_string`] or any conforming writer.
pub fn parse_sdpa<R: BufRead>(input: R) -> Result<SdpProblem> {
    let mut offset = 0.0;
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        let t = line.trim();
        if let Some(rest) = t.strip_prefix(OFFSET_TAG) {
            offset = rest.trim().parse().map_err(|_| parse_err(row, "offset", "bad number"))?;
            continue;
        }
        if t.is_empty() || t.starts_with('*') || t.starts_with('"') {
            continue;
        }
        lines.push((row, t.to_string()));
    }
    let mut lines = lines.into_iter();
    let mut next_line = |what: &str| lines.next().ok_or_else(|| parse_err(0, what, "unexpected end of file"));
    let first = |(row, line): &(usize, String), what: &str| -> Result<usize> {
        tokens(line)
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(*row, what, "expected a nonnegative integer"))
    };
    let m = first(&next_line("m")?, "m")?;
    let nblocks = first(&next_line("nblocks")?, "nblocks")?;
    let (brow, bline) = next_line("blocks")?;
    let blocks: Vec<i64> = tokens(&bline)
        .take(nblocks)
        .map(|t| t.parse::<i64>().map_err(|_| parse_err(brow, "blocks", format!("bad block size '{t}'"))))
        .collect::<Result<_>>()?;
    if blocks.len() != nblocks {
        return Err(parse_err(brow, "blocks", "too few block sizes"));
    }
    let rhs: Vec<f64> = if m == 0 {
        Vec::new()
    } else {
        let (row, line) = next_line("b")?;
        tokens(&line)
            .take(m)
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(row, "b", format!("bad number '{t}'"))))
            .collect::<Result<_>>()?
    };
    if rhs.len() != m {
        return Err(parse_err(0, "b", "too few right-hand side values"));
    }
    let entries: Vec<(usize, String)> = lines.collect();

    let mut mats: Vec<Vec<Entry>> = vec![Vec::new(); m + 1];
    for (row, line) in &entries {
        let f: Vec<&str> = tokens(line).collect();
        if f.len() < 5 {
            return Err(parse_err(*row, "entry", "expected 'k blk i j v'"));
        }
        let int = |s: &str, col: &str| s.parse::<usize>().map_err(|_| parse_err(*row, col, format!("bad index '{s}'")));
        let k = int(f[0], "k")?;
        let blk = int(f[1], "blk")?;
        let i = int(f[2], "i")?;
        let j = int(f[3], "j")?;
        let v: f64 = f[4].parse().map_err(|_| parse_err(*row, "v", format!("bad number '{}'", f[4])))?;
        if k > m || blk == 0 || i == 0 || j == 0 {
            return Err(parse_err(*row, "entry", "index out of range"));
        }
        mats[k].push(Entry { block: blk - 1, i: i - 1, j: j - 1, value: v });
    }
    let mut mats = mats.into_iter().map(BlockSym::from_entries);
    let cost = mats.next().unwrap_or_default();
    let constraints: Vec<BlockSym> = mats.collect();
    Ok(SdpProblem::new(blocks, cost, constraints, rhs)?.with_offset(offset))
}

pub fn parse_sdpa_str(s: &str) -> Result<SdpProblem> {
    parse_sdpa(s.as_bytes())
}
