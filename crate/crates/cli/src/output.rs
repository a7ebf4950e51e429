//! JSON-lines log with an optional CSV projection of the measurement records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub struct Sink {
    log: Box<dyn Write>,
    csv: Option<PathBuf>,
    rows: Vec<Map<String, Value>>,
}

impl Sink {
    pub fn open(log: Option<&PathBuf>, csv: Option<&PathBuf>) -> Result<Self, CliError> {
        let log: Box<dyn Write> = match log {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?)),
            None => Box::new(std::io::stdout().lock()),
        };
        Ok(Self { log, csv: csv.cloned(), rows: Vec::new() })
    }

    /// Writes one complete line and flushes it.
    fn write_line(&mut self, value: &Value) -> Result<(), CliError> {
        let mut line = serde_json::to_string(value)?;
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        Ok(())
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<(), CliError> {
        let value = serde_json::json!({ "record": "config", "config": config });
        self.write_line(&value)
    }

    /// Emits a measurement record tagged `kind`. `fields` must serialize to an object.
    pub fn record<T: Serialize>(&mut self, kind: &str, fields: &T) -> Result<(), CliError> {
        let mut map = Map::new();
        map.insert("record".into(), Value::String(kind.into()));
        match serde_json::to_value(fields)? {
            Value::Object(m) => map.extend(m),
            other => {
                map.insert("value".into(), other);
            }
        }
        let value = Value::Object(map);
        self.write_line(&value)?;
        if self.csv.is_some() {
            if let Value::Object(m) = value {
                self.rows.push(m);
            }
        }
        Ok(())
    }

    /// Writes the CSV projection: scalar fields only, `record` first, then columns in first-seen order.
    pub fn finish(self) -> Result<(), CliError> {
        let Some(path) = self.csv else { return Ok(()) };
        let mut columns = vec!["record".to_string()];
        for row in &self.rows {
            for (k, v) in row {
                if !matches!(v, Value::Array(_) | Value::Object(_)) && !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        let mut out = columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = columns.iter().map(|c| row.get(c).map(cell).unwrap_or_default()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
