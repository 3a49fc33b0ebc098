//! CSV tables and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Full-precision float (17 significant digits).
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// A cell for an optional timing column.
pub fn timing(enabled: bool, seconds: f64) -> String {
    if enabled {
        num(seconds)
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join(&self.name), self.render())
    }
}

/// Key-value manifest: config echo, version, timings and the output list.
pub fn manifest(
    resolved: &std::collections::BTreeMap<String, String>,
    timings: &[(String, f64)],
    outputs: &[String],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in resolved {
        let _ = writeln!(s, "config.{k} = {v}");
    }
    for (k, t) in timings {
        let _ = writeln!(s, "time.{k} = {}", num(*t));
    }
    for o in outputs {
        let _ = writeln!(s, "output = {o}");
    }
    s
}

/// The resolved settings as a config file that reproduces the run.
pub fn resolved_config(resolved: &std::collections::BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (k, v) in resolved {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(timing(false, 1.0), "");
    }

    #[test]
    fn table_render() {
        let mut t = Table::new("a.csv", &["x", "y"]);
        t.push(vec!["1".into(), num(2.0)]);
        assert_eq!(t.render(), "x,y\n1,2.0000000000000000e0\n");
    }
}
