use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One named scalar with the tolerance that produced or judges it.
#[derive(Clone, Debug, Serialize)]
pub struct Value {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultRecord {
    pub command: String,
    /// SHA-256 of the input bytes, or of the argument string when there is no input file.
    pub digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub runtime_ms: f64,
    pub settings: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub conventions: BTreeMap<String, String>,
    pub results: Vec<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ResultRecord {
    pub fn new(command: &str, digest: String) -> Self {
        Self {
            command: command.to_string(),
            digest,
            seed: None,
            runtime_ms: 0.0,
            settings: BTreeMap::new(),
            conventions: BTreeMap::new(),
            results: Vec::new(),
            passed: None,
            details: serde_json::Value::Null,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn setting(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("setting serializes");
        self.settings.insert(key.to_string(), v);
        self
    }

    pub fn push(&mut self, name: &str, value: f64, tolerance: Option<f64>) -> &mut Self {
        self.results.push(Value {
            name: name.to_string(),
            value,
            tolerance,
        });
        self
    }

    pub fn details(&mut self, d: impl Serialize) -> &mut Self {
        self.details = serde_json::to_value(d).expect("details serialize");
        self
    }

    pub fn write_json(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        writeln!(out)
    }

    /// Columns `command,digest,result,value,tolerance,seed`, one row per result.
    pub fn write_csv(&self, out: &mut impl Write, header: bool) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(CSV_HEADER)?;
        }
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        for v in &self.results {
            w.write_record([
                self.command.as_str(),
                self.digest.as_str(),
                v.name.as_str(),
                &format_float(v.value),
                &v.tolerance.map(format_float).unwrap_or_default(),
                &seed,
            ])?;
        }
        w.flush()
    }
}

pub const CSV_HEADER: [&str; 6] = ["command", "digest", "result", "value", "tolerance", "seed"];

/// Shortest representation that round-trips.
fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let mut r = ResultRecord::new("z", digest(b"abc")).seed(3);
        r.push("z", 3.0, None).push("log_z", f64::NEG_INFINITY, Some(1e-9));
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "command,digest,result,value,tolerance,seed");
        assert!(lines[1].ends_with(",z,3.0,,3"));
        assert!(lines[2].ends_with(",log_z,-inf,1e-9,3"));
        assert_eq!(
            digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
