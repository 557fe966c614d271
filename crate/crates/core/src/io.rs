//! Artifact formats: JSON with 17 significant digits and CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::el_system::{Ellipse, Solution};
use crate::spectral::PositivityCertificate;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid artifact: {0}")]
    Invalid(String),
}

/// `x` with 17 significant digits, `null` when not finite. Negative zero is
/// written as zero.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x + 0.0)
    } else {
        "null".to_string()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                let _ = write!(out, "{}{}: ", pad(indent + 1), Value::String(k.clone()));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with every float written to 17 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, IoError> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = to_json_string(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// On-disk form of a 2D solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub psi: f64,
    pub p: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub positivity: PositivityCertificate,
}

impl SolutionRecord {
    pub fn from_solution(s: &Solution) -> Self {
        SolutionRecord {
            a: s.ellipse.a,
            b: s.ellipse.b,
            phi: s.ellipse.phi,
            psi: s.pre_rotation,
            p: s.ellipse.a * s.ellipse.b,
            lambda: s.ellipse.lambda(),
            residual: s.residual,
            iterations: s.iterations,
            positivity: s.certificate,
        }
    }

    /// The ellipse `E(a, b, φ)`; fails unless both semi-axes are positive.
    pub fn ellipse(&self) -> Result<Ellipse, IoError> {
        if !(self.a > 0.0 && self.b > 0.0 && self.phi.is_finite()) {
            return Err(IoError::Invalid(format!(
                "solution needs positive semi-axes and a finite angle (a = {}, b = {}, phi = {})",
                self.a, self.b, self.phi
            )));
        }
        Ok(Ellipse::new(self.a, self.b, self.phi))
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes a CSV table; floats use 17 significant digits.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<CsvCell>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(CsvCell::render))?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvCell {
    Float(f64),
    Text(String),
}

impl CsvCell {
    fn render(&self) -> String {
        match self {
            CsvCell::Float(x) if x.is_finite() => format_f64(*x),
            CsvCell::Float(_) => String::new(),
            CsvCell::Text(s) => s.clone(),
        }
    }
}

/// Reads a two-column `x,y` CSV with a header row.
pub fn read_points_csv(path: &Path) -> Result<Vec<[f64; 2]>, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, IoError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| IoError::Invalid(format!("bad point row {rec:?}")))
        };
        out.push([parse(0)?, parse(1)?]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_round_trip_through_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, 1.2f64.sqrt(), -2.5e-300, 6.02e23, 0.0] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
        assert_eq!(format_f64(f64::NAN), "null");
    }

    #[test]
    fn json_writer_emits_valid_json() {
        let v = json!({"a": 1.2f64.sqrt(), "n": 3, "s": "x\"y", "v": [0.5, -1.0], "e": {}});
        let text = to_json_string(&v).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
        assert!(text.contains("1.0954451150103321e0"));
        assert!(text.contains("\"n\": 3"));
    }

    #[test]
    fn solution_record_parses_its_own_output() {
        let rec = SolutionRecord {
            a: 1.2f64.sqrt(),
            b: 0.8f64.sqrt(),
            phi: 0.0,
            psi: 0.0,
            p: 0.96f64.sqrt(),
            lambda: 0.1,
            residual: 1e-15,
            iterations: 4,
            positivity: PositivityCertificate {
                margin: 0.8,
                argmin_angle: 0.0,
            },
        };
        let text = to_json_string(&rec).unwrap();
        assert_eq!(SolutionRecord::from_json(&text).unwrap(), rec);
        assert!(SolutionRecord::from_json("{\"a\": 1}").is_err());
    }
}
