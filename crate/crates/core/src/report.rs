//! Deterministic JSON reports and CSV tables.

use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Version tag embedded in every report.
pub fn version_string() -> String {
    format!("jsqlab-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub results: Value,
    pub pass: bool,
}

impl Report {
    pub fn new<C: Serialize, R: Serialize>(
        command: &str,
        seed: Option<u64>,
        config: &C,
        results: &R,
        pass: bool,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: version_string(),
            command: command.to_string(),
            seed,
            config: to_value(config),
            results: to_value(results),
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or_else(|e| Value::String(format!("unserializable: {e}")))
}

/// Pretty JSON with object keys sorted and floats in shortest round-trip form.
pub fn to_json<T: Serialize>(v: &T) -> String {
    // Routing through Value sorts keys (serde_json maps are BTreeMaps).
    let mut s = serde_json::to_string_pretty(&to_value(v)).unwrap_or_default();
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

/// A CSV table whose first line is a `#` comment documenting the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub comment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(comment: &str, columns: &[&str]) -> Self {
        Self {
            comment: comment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.comment);
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_sorted_and_stable() {
        let mut m = HashMap::new();
        for (i, k) in ["zeta", "alpha", "mid", "beta"].iter().enumerate() {
            m.insert(k.to_string(), 0.1 * i as f64);
        }
        let a = to_json(&m);
        let b = to_json(&m);
        assert_eq!(a, b);
        let pos: Vec<usize> = ["alpha", "beta", "mid", "zeta"]
            .iter()
            .map(|k| a.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(a.contains("0.30000000000000004"));
    }

    #[test]
    fn report_envelope() {
        let r = Report::new("demo", Some(3), &serde_json::json!({"n": 4}), &1.5, true);
        let s = r.to_json();
        for key in [
            "schema_version",
            "version",
            "seed",
            "config",
            "results",
            "pass",
        ] {
            assert!(s.contains(key));
        }
    }

    #[test]
    fn csv_header_comment() {
        let mut t = CsvTable::new("i, mean", &["i", "mean"]);
        t.push(vec!["1".into(), fmt_f64(0.25)]);
        assert_eq!(t.render(), "# i, mean\ni,mean\n1,0.25\n");
    }
}
