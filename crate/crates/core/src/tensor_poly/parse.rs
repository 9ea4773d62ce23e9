//! Line-oriented problem file parser.
//!
//! ```text
//! p=2 n=1 lambda_a=2.0
//! hom 0 0 1.0
//! inhom j=2
//! c 0 0.5
//! B 1 0 1 0.25
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{RMatrix, RVector};

use super::{AlgebraicForm, InhomogeneousTerm, PolynomialProblem};

struct Block {
    j: usize,
    line: usize,
    c: BTreeMap<usize, f64>,
    b: BTreeMap<(usize, usize, usize), f64>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_index(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

fn parse_value(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("bad value '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite { line });
    }
    Ok(v)
}

fn key_value(tok: &str, line: usize) -> Result<(&str, &str)> {
    tok.split_once('=')
        .ok_or_else(|| parse_err(line, format!("expected key=value, got '{tok}'")))
}

pub fn load_problem(text: &str) -> Result<PolynomialProblem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header 'p=<int> n=<int>'"))?;
    let (mut p, mut n, mut lambda_a, mut lambda_cut) = (None, None, None, None);
    for tok in header.split_whitespace() {
        let (k, v) = key_value(tok, header_line)?;
        match k {
            "p" => p = Some(parse_index(Some(v), header_line, "p")?),
            "n" => n = Some(parse_index(Some(v), header_line, "n")?),
            "lambda_a" => lambda_a = Some(parse_value(Some(v), header_line)?),
            "lambda_cut" => lambda_cut = Some(parse_value(Some(v), header_line)?),
            _ => return Err(parse_err(header_line, format!("unknown header key '{k}'"))),
        }
    }
    let p = p.ok_or_else(|| parse_err(header_line, "header lacks p"))?;
    let n = n.ok_or_else(|| parse_err(header_line, "header lacks n"))?;
    if p == 0 || n == 0 {
        return Err(parse_err(header_line, "p and n must be positive"));
    }
    let dim = 1usize
        .checked_shl(n as u32)
        .filter(|_| n < 16)
        .ok_or_else(|| parse_err(header_line, "n too large"))?;

    let mut hom = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    for (ln, line) in lines {
        let mut toks = line.split_whitespace();
        let kind = toks.next().unwrap_or_default();
        match kind {
            "hom" => {
                if !blocks.is_empty() {
                    return Err(parse_err(ln, "hom entries must precede inhom blocks"));
                }
                let r = parse_index(toks.next(), ln, "row")?;
                let c = parse_index(toks.next(), ln, "col")?;
                let v = parse_value(toks.next(), ln)?;
                hom.push((r, c, v));
            }
            "inhom" => {
                let (k, v) = key_value(toks.next().unwrap_or(""), ln)?;
                if k != "j" {
                    return Err(parse_err(ln, "expected 'inhom j=<int>'"));
                }
                let j = parse_index(Some(v), ln, "j")?;
                if j == 0 || j > p {
                    return Err(parse_err(ln, format!("level j = {j} outside 1..={p}")));
                }
                blocks.push(Block {
                    j,
                    line: ln,
                    c: BTreeMap::new(),
                    b: BTreeMap::new(),
                });
            }
            "c" => {
                let block = blocks
                    .last_mut()
                    .ok_or_else(|| parse_err(ln, "'c' outside an inhom block"))?;
                let i = parse_index(toks.next(), ln, "index")?;
                let v = parse_value(toks.next(), ln)?;
                if i >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: i,
                    });
                }
                *block.c.entry(i).or_insert(0.0) += v;
            }
            "B" => {
                let block = blocks
                    .last_mut()
                    .ok_or_else(|| parse_err(ln, "'B' outside an inhom block"))?;
                let k = parse_index(toks.next(), ln, "matrix index")?;
                let r = parse_index(toks.next(), ln, "row")?;
                let c = parse_index(toks.next(), ln, "col")?;
                let v = parse_value(toks.next(), ln)?;
                if k == 0 || k >= block.j {
                    return Err(parse_err(
                        ln,
                        format!("B index {k} outside 1..={}", block.j - 1),
                    ));
                }
                if r >= dim || c >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: r.max(c),
                    });
                }
                *block.b.entry((k, r, c)).or_insert(0.0) += v;
            }
            other => return Err(parse_err(ln, format!("unknown record '{other}'"))),
        }
        if toks.next().is_some() {
            return Err(parse_err(ln, "trailing tokens"));
        }
    }

    let mut form = AlgebraicForm::new(p, n, hom)?;
    if let Some(l) = lambda_a {
        form = form
            .with_lambda_override(l)
            .map_err(|e| parse_err(header_line, e.to_string()))?;
    }
    let mut terms = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut c = RVector::zeros(dim);
        for (i, v) in block.c {
            c[i] = v;
        }
        let mut bs = vec![RMatrix::zeros(dim, dim); block.j - 1];
        for ((k, r, col), v) in block.b {
            bs[k - 1][(r, col)] += v;
        }
        terms.push(
            InhomogeneousTerm::new(block.j, c, bs).map_err(|e| parse_err(block.line, e.to_string()))?,
        );
    }
    let mut problem = PolynomialProblem::new(form, terms)?;
    if let Some(cut) = lambda_cut {
        problem = problem
            .with_lambda_cut(cut)
            .map_err(|e| parse_err(header_line, e.to_string()))?;
    }
    Ok(problem)
}
