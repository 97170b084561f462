//! Plain-text polynomial format.
//!
//! One term per line: `coefficient e1 e2 ... en`. Lines starting with `#`
//! are comments. A file may hold several polynomials separated by blank
//! lines (one block per drift component). The zero polynomial is written
//! as a single term with coefficient `0`.

use super::polynomial::Polynomial;
use crate::error::{Error, Result};

pub fn write_polynomial(p: &Polynomial) -> String {
    let mut out = String::new();
    if p.is_zero() {
        out.push('0');
        for _ in 0..p.nvars() {
            out.push_str(" 0");
        }
        out.push('\n');
        return out;
    }
    for (m, c) in p.terms().rev() {
        out.push_str(&format!("{c:?}"));
        for e in m.exponents() {
            out.push_str(&format!(" {e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_blocks(ps: &[Polynomial]) -> String {
    ps.iter()
        .map(write_polynomial)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a single polynomial. With `nvars == None` the variable count is
/// taken from the first term.
pub fn parse_polynomial(text: &str, nvars: Option<usize>) -> Result<Polynomial> {
    let mut blocks = parse_blocks(text, nvars)?;
    match blocks.len() {
        1 => Ok(blocks.pop().unwrap()),
        0 => Err(Error::Parse {
            line: 0,
            message: "no polynomial terms found".into(),
        }),
        k => Err(Error::Parse {
            line: 0,
            message: format!("expected one polynomial, found {k} blocks"),
        }),
    }
}

/// Parses blank-line separated polynomial blocks.
pub fn parse_blocks(text: &str, nvars: Option<usize>) -> Result<Vec<Polynomial>> {
    let mut nvars = nvars;
    let mut blocks = Vec::new();
    let mut current: Option<Vec<(Vec<u16>, f64)>> = None;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if let Some(terms) = current.take() {
                blocks.push(terms);
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let coef: f64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad coefficient: {e}"),
            })?;
        let exps = fields
            .map(|f| {
                f.parse::<u16>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad exponent {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<u16>>>()?;
        match nvars {
            None if exps.is_empty() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "term has no exponents".into(),
                })
            }
            None => nvars = Some(exps.len()),
            Some(n) if n != exps.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {n} exponents, found {}", exps.len()),
                })
            }
            Some(_) => {}
        }
        current.get_or_insert_with(Vec::new).push((exps, coef));
    }
    if let Some(terms) = current.take() {
        blocks.push(terms);
    }
    let n = nvars.unwrap_or(0);
    blocks
        .into_iter()
        .map(|terms| Polynomial::from_terms(n, terms))
        .collect()
}
