//! Flat report records, deterministic JSON and CSV output, atomic file writes.
//!
//! Floats are always written with 17 significant digits so that every value
//! round-trips exactly and identical runs give byte-identical files.

use std::io::{self, Write};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{ProblemParams, RadialGrid};
use crate::solver::Branch;

/// Ordered key/value row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportRecord {
    entries: Vec<(String, Value)>,
}

impl ReportRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Input echo: λ, κ, γ, N, tolerances and grid parameters.
    pub fn from_inputs(params: &ProblemParams, grid: &RadialGrid) -> Self {
        let mut r = Self::new();
        r.set("lambda", params.lambda);
        r.set("kappa", params.kappa);
        r.set("gamma", params.gamma);
        r.set("dim", params.dim);
        r.set("tol_fixed_point", params.tol_fixed_point);
        r.set("max_iterations", params.max_iterations);
        r.set("touchdown_fraction", params.touchdown_fraction);
        r.set("n_cells", grid.n_cells());
        r.set("grading_exponent", grid.grading_exponent());
        r
    }

    /// Inserts or replaces `key`, keeping the original position on replace.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.set(key, value);
        self
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }
}

impl Serialize for ReportRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Compact JSON with floats in `{:.16e}` form.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_float(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// 17 significant digits, round-trip exact.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes `value` as a single line of JSON with 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Numerical(format!("non-UTF-8 JSON: {e}")))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

fn value_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => u.to_string(),
            (_, Some(i), _) => i.to_string(),
            (_, _, Some(f)) => format_float(f),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

/// CSV bytes for rows sharing the key set of the first row.
pub fn records_to_csv(records: &[ReportRecord]) -> Result<Vec<u8>> {
    let Some(first) = records.first() else {
        return Err(Error::Config("no records to write".into()));
    };
    let header: Vec<&str> = first.keys().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in records {
        let row: Vec<String> = header
            .iter()
            .map(|k| r.get(k).map(value_cell).unwrap_or_default())
            .collect();
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))
}

/// Branch table with header `lambda,sup_u,clearance[,mu1]`.
pub fn branch_csv(branch: &Branch, mu1: Option<&[f64]>) -> Result<Vec<u8>> {
    if branch.is_empty() {
        return Err(Error::Config("cannot write an empty branch".into()));
    }
    if let Some(m) = mu1 {
        if m.len() != branch.len() {
            return Err(Error::Config(format!(
                "{} eigenvalues for {} branch points",
                m.len(),
                branch.len()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lambda", "sup_u", "clearance"];
    if mu1.is_some() {
        header.push("mu1");
    }
    w.write_record(&header)?;
    for i in 0..branch.len() {
        let mut row = vec![
            format_float(branch.lambdas[i]),
            format_float(branch.sup_values[i]),
            format_float(branch.clearances[i]),
        ];
        if let Some(m) = mu1 {
            row.push(format_float(m[i]));
        }
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))
}

/// Writes [`branch_csv`] atomically to `path`.
pub fn emit_branch_csv(branch: &Branch, mu1: Option<&[f64]>, path: &Path) -> Result<()> {
    write_atomic(path, &branch_csv(branch, mu1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::solver::branch_sweep;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 32.0 / 243.0, 1e-300, -2.5e17, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        let rec = ReportRecord::new().with("x", 0.1).with("n", 3).with("s", "Converged");
        let json = to_json_string(&rec).unwrap();
        assert_eq!(json, "{\"x\":1.0000000000000001e-1,\"n\":3,\"s\":\"Converged\"}\n");
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn set_replaces_in_place() {
        let mut r = ReportRecord::new().with("a", 1).with("b", 2);
        r.set("a", 5);
        assert_eq!(r.keys().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(r.get("a").unwrap().as_u64(), Some(5));
    }

    #[test]
    fn non_finite_becomes_null() {
        let json = to_json_string(&ReportRecord::new().with("v", f64::NAN)).unwrap();
        assert_eq!(json, "{\"v\":null}\n");
    }

    #[test]
    fn single_point_branch_is_two_lines() {
        let g = build_grid(128, 3.0).unwrap();
        let p = ProblemParams::new(0.0, 1.0, 0.5, 1).unwrap();
        let b = branch_sweep(&p, &[0.05], &g).unwrap();
        let text = String::from_utf8(branch_csv(&b, None).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "lambda,sup_u,clearance");
        let text = String::from_utf8(branch_csv(&b, Some(&[1.5])).unwrap()).unwrap();
        assert!(text.starts_with("lambda,sup_u,clearance,mu1\n"));
        assert!(branch_csv(&b, Some(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_json(&ReportRecord::new().with("a", 1), &path).unwrap();
        write_json(&ReportRecord::new().with("a", 2), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"a\":2}\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_projection_of_records() {
        let rows = vec![
            ReportRecord::new().with("lambda", 0.5).with("status", "Converged"),
            ReportRecord::new().with("lambda", 0.25).with("status", "Touchdown"),
        ];
        let text = String::from_utf8(records_to_csv(&rows).unwrap()).unwrap();
        assert_eq!(
            text,
            "lambda,status\n5.0000000000000000e-1,Converged\n2.5000000000000000e-1,Touchdown\n"
        );
    }
}
