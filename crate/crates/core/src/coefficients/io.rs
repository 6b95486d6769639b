//! Line-oriented text format for coefficient sets.
//!
//! ```text
//! peer-coefficients v1
//! s 2
//! gamma 2.9289321881345248e-1
//! c 0.0000000000000000e0 1.0000000000000000e0
//! P
//! <s lines of s decimals>
//! Q
//! ...
//! R
//! ...
//! S2
//! ...
//! ```
//!
//! `S1`, `Qhat` and `Rhat` are derived on load and never written.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{validate, NodeVector, PeerCoefficients};
use crate::error::{Error, Result};

const HEADER: &str = "peer-coefficients v1";
const BLOCKS: [&str; 4] = ["P", "Q", "R", "S2"];

/// 17 significant digits, which round-trips every `f64`.
pub(crate) fn fmt_decimal(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_row(values: impl Iterator<Item = f64>) -> String {
    values.map(fmt_decimal).collect::<Vec<_>>().join(" ")
}

pub fn format_coefficients(coeffs: &PeerCoefficients) -> String {
    let s = coeffs.stages();
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("s {s}\n"));
    out.push_str(&format!("gamma {}\n", fmt_decimal(coeffs.gamma())));
    out.push_str(&format!("c {}\n", fmt_row(coeffs.nodes().as_slice().iter().copied())));
    for (name, m) in BLOCKS
        .iter()
        .zip([coeffs.p(), coeffs.q(), coeffs.r(), coeffs.s2()])
    {
        out.push_str(name);
        out.push('\n');
        for row in m.row_iter() {
            out.push_str(&fmt_row(row.iter().copied()));
            out.push('\n');
        }
    }
    out
}

pub fn save_coefficients(coeffs: &PeerCoefficients, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_coefficients(coeffs)).map_err(|e| Error::io(path, e))
}

pub fn load_coefficients(path: impl AsRef<Path>) -> Result<PeerCoefficients> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coefficients(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_decimals(line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("invalid decimal '{f}'")))
        })
        .collect()
}

/// Parses the text format and rejects sets that fail [`validate`].
pub fn parse_coefficients(text: &str) -> Result<PeerCoefficients> {
    // Blank lines and `#` comments are skipped; line numbers stay 1-based.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    let last_line = text.lines().count().max(1);

    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => {
            return Err(parse_err(n, format!("expected header '{HEADER}', found '{other}'")))
        }
        None => return Err(parse_err(1, "empty file")),
    }

    let mut stages: Option<usize> = None;
    let mut gamma: Option<f64> = None;
    let mut nodes: Option<Vec<f64>> = None;
    let mut blocks: [Option<DMatrix<f64>>; 4] = Default::default();

    while let Some((n, line)) = lines.next() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let key = fields[0];
        let need_s = |what: &str| {
            stages.ok_or_else(|| parse_err(n, format!("'{what}' must come after 's'")))
        };
        match key {
            "s" => {
                if stages.is_some() {
                    return Err(parse_err(n, "duplicate key 's'"));
                }
                if fields.len() != 2 {
                    return Err(parse_err(n, "expected 's <int>'"));
                }
                let s: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(n, format!("invalid stage count '{}'", fields[1])))?;
                if s == 0 {
                    return Err(parse_err(n, "stage count must be at least 1"));
                }
                stages = Some(s);
            }
            "gamma" => {
                if gamma.is_some() {
                    return Err(parse_err(n, "duplicate key 'gamma'"));
                }
                if fields.len() != 2 {
                    return Err(parse_err(n, "expected 'gamma <decimal>'"));
                }
                gamma = Some(parse_decimals(n, &fields[1..])?[0]);
            }
            "c" => {
                let s = need_s("c")?;
                if nodes.is_some() {
                    return Err(parse_err(n, "duplicate key 'c'"));
                }
                if fields.len() - 1 != s {
                    return Err(parse_err(
                        n,
                        format!("expected {s} nodes, found {}", fields.len() - 1),
                    ));
                }
                nodes = Some(parse_decimals(n, &fields[1..])?);
            }
            _ => {
                let Some(slot) = BLOCKS.iter().position(|b| *b == key) else {
                    return Err(parse_err(n, format!("unknown key '{key}'")));
                };
                if fields.len() != 1 {
                    return Err(parse_err(n, format!("block header '{key}' takes no values")));
                }
                let s = need_s(key)?;
                if blocks[slot].is_some() {
                    return Err(parse_err(n, format!("duplicate block '{key}'")));
                }
                let mut data = Vec::with_capacity(s * s);
                for row in 0..s {
                    let (rn, rl) = lines.next().ok_or_else(|| {
                        parse_err(last_line, format!("block '{key}' ends after {row} of {s} rows"))
                    })?;
                    let values: Vec<&str> = rl.split_whitespace().collect();
                    if values.len() != s {
                        return Err(parse_err(
                            rn,
                            format!("block '{key}' row {} has {} values, expected {s}", row + 1, values.len()),
                        ));
                    }
                    data.extend(parse_decimals(rn, &values)?);
                }
                blocks[slot] = Some(DMatrix::from_row_slice(s, s, &data));
            }
        }
    }

    let missing = |what: &str| parse_err(last_line, format!("missing '{what}'"));
    stages.ok_or_else(|| missing("s"))?;
    let gamma = gamma.ok_or_else(|| missing("gamma"))?;
    let nodes = nodes.ok_or_else(|| missing("c"))?;
    let [p, q, r, s2] = blocks;
    let coeffs = PeerCoefficients::from_parts(
        NodeVector::from_raw(nodes),
        gamma,
        p.ok_or_else(|| missing("P"))?,
        q.ok_or_else(|| missing("Q"))?,
        r.ok_or_else(|| missing("R"))?,
        s2.ok_or_else(|| missing("S2"))?,
    )?;
    let report = validate(&coeffs);
    if !report.passed {
        return Err(Error::Validation(Box::new(report)));
    }
    Ok(coeffs)
}
