//! The `key: value` report grammar used on stdout.
//!
//! One record per line. Keys are non-empty runs of `[A-Za-z0-9_.-]`; the
//! value is everything after the first `": "`, trimmed. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::{self, Display};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvReport {
    lines: Vec<(String, String)>,
}

pub fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.bytes().all(|b| b.is_ascii_alphanumeric() || b"_.-".contains(&b))
}

impl KvReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record. Panics on an invalid key or a multi-line value.
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        assert!(valid_key(&key), "invalid report key `{key}`");
        assert!(!value.contains('\n'), "report value for `{key}` spans lines");
        self.lines.push((key, value.trim_end().to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.trim_start())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let t = line.trim_end();
            if t.trim().is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once(": ").or_else(|| t.strip_suffix(':').map(|k| (k, ""))).ok_or_else(|| {
                Error::Malformed { what: "report", detail: format!("line {}: `{t}` has no `: `", n + 1) }
            })?;
            if !valid_key(k) {
                return Err(Error::Malformed { what: "report", detail: format!("line {}: bad key `{k}`", n + 1) });
            }
            lines.push((k.to_string(), v.trim().to_string()));
        }
        Ok(KvReport { lines })
    }
}

impl Display for KvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.lines {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut r = KvReport::new();
        r.push("params_total", 3239745).push("layer.encoder.stem", "params=448 out=1x16x96x128").push("note", "");
        let back = KvReport::parse(&r.to_string()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get_f64("params_total"), Some(3239745.0));
    }

    #[test]
    fn rejects_garbage() {
        assert!(KvReport::parse("no separator here").is_err());
        assert!(KvReport::parse("bad key: 1").is_err());
        assert!(KvReport::parse("# comment\n\nok: 1").is_ok());
    }
}
