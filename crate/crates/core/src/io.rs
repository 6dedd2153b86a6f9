//! Delimited-text formats for samples and estimated fields.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::estimator::{FieldOnGrid, Sample};

/// Formats a float with 17 significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses one observation per line, comma- or whitespace-separated.
///
/// A first line that does not parse as numbers is taken as a header. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_sample(text: &str) -> Result<Sample> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut seen_content = false;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if !seen_content => {
                seen_content = true;
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{e} in `{line}`"),
                })
            }
        };
        seen_content = true;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        for (col, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Negative {
                    row: rows.len(),
                    col,
                    value: v,
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no observations found".into(),
        });
    }
    Sample::from_rows(&rows)
}

/// One node per line: coordinates then value.
pub fn format_field(field: &FieldOnGrid) -> String {
    let mut out = String::with_capacity(field.values.len() * 24 * (field.axes.len() + 1));
    for (x, v) in field.nodes() {
        for c in &x {
            out.push_str(&fmt_num(*c));
            out.push(',');
        }
        let _ = writeln!(out, "{}", fmt_num(v));
    }
    out
}
