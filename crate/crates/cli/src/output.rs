use std::any::Any;

use joint_shapley::worth::{format_float, format_rational};
use joint_shapley::{Rational, Worth};
use serde_json::{Map, Value};

use crate::args::OutputArgs;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl Format {
    pub fn from_args(args: &OutputArgs) -> Self {
        if args.json {
            Format::Json
        } else if args.csv {
            Format::Csv
        } else {
            Format::Text
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Exact(Rational),
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    /// A worth value, kept exact only when `exact` is set and `w` is rational.
    pub fn worth<W: Worth>(w: &W, exact: bool) -> Cell {
        match (w as &dyn Any).downcast_ref::<Rational>() {
            Some(r) if exact => Cell::Exact(r.clone()),
            _ => Cell::Float(w.to_f64()),
        }
    }

    pub fn render(&self, digits: usize) -> String {
        match self {
            Cell::Exact(r) => format_rational(r),
            Cell::Float(x) => format_float(*x, digits),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    /// Rationals become "p/q" strings; floats are rounded to `digits`
    /// significant digits before serialising.
    pub fn json(&self, digits: usize) -> Value {
        match self {
            Cell::Exact(r) => Value::String(format_rational(r)),
            Cell::Float(x) if x.is_finite() => {
                let rounded: f64 = format_float(*x, digits).parse().unwrap_or(*x);
                Value::from(rounded)
            }
            Cell::Float(x) => Value::String(x.to_string()),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Output of one command: a table for text and CSV, a JSON document, and
/// optionally free text that replaces the table in text mode.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub json: Map<String, Value>,
    pub text: Option<String>,
    /// Lines printed under the table in text mode.
    pub notes: Vec<String>,
    /// False when the command ran but its check failed (exit code 1).
    pub ok: bool,
}

impl Report {
    pub fn new(command: &'static str, columns: &[&str]) -> Self {
        Report {
            command,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            json: Map::new(),
            text: None,
            notes: Vec::new(),
            ok: true,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.json.insert(key.to_string(), value.into());
    }

    pub fn render(&self, format: Format, digits: usize) -> anyhow::Result<String> {
        match format {
            Format::Text => Ok(self.render_text(digits)),
            Format::Csv => self.render_csv(digits),
            Format::Json => {
                let mut doc = Map::new();
                doc.insert("schema".into(), Value::from(SCHEMA_VERSION));
                doc.insert("command".into(), Value::from(self.command));
                doc.extend(self.json.clone());
                Ok(serde_json::to_string_pretty(&Value::Object(doc))? + "\n")
            }
        }
    }

    fn render_csv(&self, digits: usize) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render(digits)))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    fn render_text(&self, digits: usize) -> String {
        let mut out = match &self.text {
            Some(text) => text.clone(),
            None => {
                let cells: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|c| c.render(digits)).collect())
                    .collect();
                aligned(&self.columns, &cells)
            }
        };
        for note in &self.notes {
            out.push_str(note);
            out.push('\n');
        }
        out
    }
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for row in rows {
        out.push_str(&line(row));
    }
    out
}
