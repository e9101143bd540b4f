//! Versioned run reports, as JSON or `key: value` text.
//!
//! Floats carry 12 significant digits so that identical runs produce
//! byte-identical reports.

use serde_json::{Map, Value};

use crate::assignment::Assignment;
use crate::constraints::ColorMatrix;
use crate::geometry::{CenterSet, Point};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// `x` rounded to 12 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn point(p: &Point) -> Value {
    Value::Array(p.coords().iter().map(|&c| num(c)).collect())
}

pub fn centers(c: &CenterSet) -> Value {
    Value::Array(c.iter().map(point).collect())
}

pub fn matrix(m: &ColorMatrix) -> Value {
    serde_json::to_value(m.to_rows()).expect("integers serialize")
}

/// `[entry, center, mass]` triples.
pub fn flows(a: &Assignment) -> Value {
    Value::Array(
        a.flows
            .iter()
            .map(|f| Value::from(vec![f.entry as u64, f.center as u64, f.mass]))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("schema".into(), Value::from(SCHEMA_VERSION));
        fields.insert("command".into(), Value::from(command));
        Report { fields }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.into(), value.into());
        self
    }

    pub fn set_num(&mut self, key: &str, x: f64) -> &mut Self {
        self.fields.insert(key.into(), num(x));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.fields).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Text => self
                .fields
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}: {s}\n"),
                    other => format!("{k}: {other}\n"),
                })
                .collect(),
        }
    }
}
