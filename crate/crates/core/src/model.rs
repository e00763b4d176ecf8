//! Prediction functions: analytic built-ins, prediction tables, and external
//! processes speaking a JSON-lines protocol.
//!
//! External protocol, one UTF-8 JSON object per line:
//!
//! ```text
//! request:  {"id": 7, "instance": [0.0, 1.0, 1.0]}
//! response: {"id": 7, "prediction": 0.5}
//! ```
//!
//! Responses may come back in any order. On start-up the bridge sends a
//! probe with id 0 and an all-zero instance and waits for its answer.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub trait Model: Send + Sync {
    /// Check that instances with `n_features` entries are acceptable.
    fn accepts(&self, n_features: usize) -> Result<()>;

    fn predict(&self, x: &[f64]) -> Result<f64>;

    fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    fn parallel_safe(&self) -> bool {
        true
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn accepts(&self, n_features: usize) -> Result<()> {
        (**self).accepts(n_features)
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        (**self).predict(x)
    }
    fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        (**self).predict_batch(xs)
    }
    fn parallel_safe(&self) -> bool {
        (**self).parallel_safe()
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn accepts(&self, n_features: usize) -> Result<()> {
        (**self).accepts(n_features)
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        (**self).predict(x)
    }
    fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        (**self).predict_batch(xs)
    }
    fn parallel_safe(&self) -> bool {
        (**self).parallel_safe()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel {
    Select(usize),
    Sum(usize, usize),
    Diff(usize, usize),
    Product(usize, usize),
    Constant(f64),
    Linear(Vec<f64>),
}

fn parse_indices(args: &str, count: usize, expr: &str) -> Result<Vec<usize>> {
    let idx: Vec<usize> = args
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            Error::InvalidParameter(format!("`{expr}` expects feature indices, got `{args}`"))
        })?;
    if idx.len() != count {
        return Err(Error::InvalidParameter(format!(
            "`{expr}` expects {count} feature index(es), got {}",
            idx.len()
        )));
    }
    Ok(idx)
}

fn parse_floats(args: &str) -> Result<Vec<f64>> {
    args.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::ParseNumber(s.trim().to_string()))
        })
        .collect()
}

impl BuiltinModel {
    /// Parse `select:0`, `sum:0,1`, `linear:1,-2,0.5`, or the call form
    /// `product(0,1)`.
    pub fn parse(expr: &str) -> Result<Self> {
        let normalized = expr.trim().replacen('(', ":", 1);
        let normalized = normalized.strip_suffix(')').unwrap_or(&normalized);
        let (name, args) = normalized.split_once(':').unwrap_or((normalized, ""));
        let model = match name {
            "select" => BuiltinModel::Select(parse_indices(args, 1, name)?[0]),
            "sum" | "diff" | "product" => {
                let ij = parse_indices(args, 2, name)?;
                match name {
                    "sum" => BuiltinModel::Sum(ij[0], ij[1]),
                    "diff" => BuiltinModel::Diff(ij[0], ij[1]),
                    _ => BuiltinModel::Product(ij[0], ij[1]),
                }
            }
            "constant" => {
                let c = parse_floats(args)?;
                if c.len() != 1 {
                    return Err(Error::InvalidParameter(
                        "`constant` expects one value".into(),
                    ));
                }
                BuiltinModel::Constant(c[0])
            }
            "linear" => BuiltinModel::Linear(parse_floats(args)?),
            _ => {
                return Err(Error::Unknown {
                    what: "builtin model",
                    name: name.to_string(),
                })
            }
        };
        Ok(model)
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            BuiltinModel::Select(i) => Some(i),
            BuiltinModel::Sum(i, j) | BuiltinModel::Diff(i, j) | BuiltinModel::Product(i, j) => {
                Some(i.max(j))
            }
            _ => None,
        }
    }
}

impl Model for BuiltinModel {
    fn accepts(&self, n_features: usize) -> Result<()> {
        if let BuiltinModel::Linear(w) = self {
            if w.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    found: n_features,
                });
            }
        }
        match self.max_index() {
            Some(i) if i >= n_features => Err(Error::AgentOutOfRange {
                agent: i,
                n: n_features,
            }),
            _ => Ok(()),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        let get = |i: usize| {
            x.get(i).copied().ok_or(Error::AgentOutOfRange {
                agent: i,
                n: x.len(),
            })
        };
        Ok(match self {
            BuiltinModel::Select(i) => get(*i)?,
            BuiltinModel::Sum(i, j) => get(*i)? + get(*j)?,
            BuiltinModel::Diff(i, j) => get(*i)? - get(*j)?,
            BuiltinModel::Product(i, j) => get(*i)? * get(*j)?,
            BuiltinModel::Constant(c) => *c,
            BuiltinModel::Linear(w) => {
                if w.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        found: x.len(),
                    });
                }
                w.iter().zip(x).map(|(a, b)| a * b).sum()
            }
        })
    }
}

fn instance_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same instance
    x.iter()
        .map(|&v| if v == 0.0 { 0 } else { v.to_bits() })
        .collect()
}

/// Exact lookup into a CSV whose last column is the prediction and whose
/// other columns are the features.
#[derive(Debug, Clone)]
pub struct TableModel {
    n_features: usize,
    predictions: HashMap<Vec<u64>, f64>,
}

impl TableModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_reader(file).map_err(|e| match e {
            Error::File { .. } => e,
            other => Error::File {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Dataset(
                "prediction table needs at least one feature column and a prediction column".into(),
            ));
        }
        let mut predictions = HashMap::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::ParseNumber(s.to_string()))
                })
                .collect::<Result<_>>()
                .map_err(|e| Error::ModelRow {
                    row,
                    source: Box::new(e),
                })?;
            let (features, pred) = values.split_at(width - 1);
            match predictions.insert(instance_key(features), pred[0]) {
                Some(old) if old.to_bits() != pred[0].to_bits() => {
                    return Err(Error::Dataset(format!(
                        "row {row}: instance {features:?} listed with conflicting predictions {old} and {}",
                        pred[0]
                    )))
                }
                _ => {}
            }
        }
        Ok(TableModel {
            n_features: width - 1,
            predictions,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

impl Model for TableModel {
    fn accepts(&self, n_features: usize) -> Result<()> {
        if n_features != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: n_features,
            });
        }
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.predictions
            .get(&instance_key(x))
            .copied()
            .ok_or_else(|| Error::MissingInstance {
                instance: x.to_vec(),
            })
    }
}

struct ExternalState {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    last_line: Option<String>,
    next_id: u64,
}

/// A model served by a child process. Calls are serialized; a batch is
/// written in full before its responses are collected.
pub struct ExternalModel {
    command: String,
    timeout: Duration,
    state: Mutex<ExternalState>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalModel {
    /// Spawn `program args…` and run the handshake with an all-zero
    /// instance of `n_features` entries.
    pub fn spawn(
        program: &str,
        args: &[String],
        n_features: usize,
        timeout: Duration,
    ) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ProcessExited {
                status: format!("could not start `{program}`: {e}"),
                last_line: None,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let model = ExternalModel {
            command: std::iter::once(program.to_string())
                .chain(args.iter().cloned())
                .collect::<Vec<_>>()
                .join(" "),
            timeout,
            state: Mutex::new(ExternalState {
                child,
                stdin,
                lines: rx,
                last_line: None,
                next_id: 0,
            }),
        };
        model.predict(&vec![0.0; n_features])?;
        Ok(model)
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn exchange(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut guard = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let st = &mut *guard;
        let first = st.next_id;
        let mut payload = String::new();
        for (i, x) in xs.iter().enumerate() {
            if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(*bad));
            }
            payload.push_str(&json!({"id": first + i as u64, "instance": x}).to_string());
            payload.push('\n');
        }
        st.next_id += xs.len() as u64;
        let write = st
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| st.stdin.flush());
        if write.is_err() {
            return Err(exited(st));
        }

        let mut results: Vec<Option<f64>> = vec![None; xs.len()];
        let mut pending = xs.len();
        let deadline = Instant::now() + self.timeout;
        while pending > 0 {
            let wait = deadline.saturating_duration_since(Instant::now());
            let line = match st.lines.recv_timeout(wait) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => {
                    return Err(Error::Protocol {
                        message: format!("reading model output: {e}"),
                        last_line: st.last_line.clone(),
                    })
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Timeout {
                        seconds: self.timeout.as_secs_f64(),
                        last_line: st.last_line.clone(),
                    })
                }
                Err(RecvTimeoutError::Disconnected) => return Err(exited(st)),
            };
            st.last_line = Some(line.clone());
            if line.trim().is_empty() {
                continue;
            }
            let (id, prediction) = parse_response(&line).map_err(|message| Error::Protocol {
                message,
                last_line: Some(line.clone()),
            })?;
            let slot = id
                .checked_sub(first)
                .map(|i| i as usize)
                .filter(|&i| i < xs.len())
                .ok_or_else(|| Error::Protocol {
                    message: format!("response carries unknown id {id}"),
                    last_line: Some(line.clone()),
                })?;
            if results[slot].replace(prediction).is_some() {
                return Err(Error::Protocol {
                    message: format!("duplicate response for id {id}"),
                    last_line: Some(line),
                });
            }
            pending -= 1;
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("all ids answered"))
            .collect())
    }
}

fn exited(st: &mut ExternalState) -> Error {
    // give the process a moment to finish so the status is meaningful
    let mut status = None;
    for _ in 0..50 {
        if let Ok(Some(s)) = st.child.try_wait() {
            status = Some(s.to_string());
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    Error::ProcessExited {
        status: status.unwrap_or_else(|| "closed its output".into()),
        last_line: st.last_line.clone(),
    }
}

fn parse_response(line: &str) -> std::result::Result<(u64, f64), String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("malformed response: {e}"))?;
    let id = v
        .get("id")
        .and_then(Value::as_u64)
        .ok_or("response lacks an unsigned integer `id`")?;
    let prediction = v
        .get("prediction")
        .and_then(Value::as_f64)
        .ok_or("response lacks a numeric `prediction`")?;
    Ok((id, prediction))
}

impl Model for ExternalModel {
    fn accepts(&self, _n_features: usize) -> Result<()> {
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.exchange(std::slice::from_ref(&x.to_vec()))?[0])
    }

    fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        self.exchange(xs)
    }

    fn parallel_safe(&self) -> bool {
        false
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let st = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = st.child.kill();
        let _ = st.child.wait();
    }
}

/// Parse `builtin:sum:0,1`, `table:preds.csv` or `exec:python model.py --flag`.
pub fn parse_model_spec(
    spec: &str,
    n_features: usize,
    timeout: Duration,
) -> Result<Box<dyn Model>> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| Error::Unknown {
        what: "model spec",
        name: spec.to_string(),
    })?;
    let model: Box<dyn Model> = match kind {
        "builtin" => Box::new(BuiltinModel::parse(rest)?),
        "table" => Box::new(TableModel::load(rest)?),
        "exec" => {
            let mut words = rest.split_whitespace().map(str::to_string);
            let program = words
                .next()
                .ok_or_else(|| Error::InvalidParameter("`exec:` needs a command".into()))?;
            let args: Vec<String> = words.collect();
            Box::new(ExternalModel::spawn(&program, &args, n_features, timeout)?)
        }
        other => {
            return Err(Error::Unknown {
                what: "model kind",
                name: other.to_string(),
            })
        }
    };
    model.accepts(n_features)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        assert_eq!(
            BuiltinModel::parse("select:0")
                .unwrap()
                .predict(&[1.0, 0.0, 1.0])
                .unwrap(),
            1.0
        );
        let s = BuiltinModel::parse("sum(0,1)")
            .unwrap()
            .predict(&[0.3, 0.4, 9.0])
            .unwrap();
        assert_eq!(s, 0.3 + 0.4);
        assert_eq!(
            BuiltinModel::parse("product:0,1")
                .unwrap()
                .predict(&[1.0, 1.0, 0.0])
                .unwrap(),
            1.0
        );
        assert_eq!(
            BuiltinModel::parse("diff:1,0")
                .unwrap()
                .predict(&[1.0, 3.0])
                .unwrap(),
            2.0
        );
        assert_eq!(
            BuiltinModel::parse("constant:2.5")
                .unwrap()
                .predict(&[])
                .unwrap(),
            2.5
        );
        assert_eq!(
            BuiltinModel::parse("linear:1,-2")
                .unwrap()
                .predict(&[3.0, 1.0])
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            BuiltinModel::parse("cube:0"),
            Err(Error::Unknown { .. })
        ));
        assert!(BuiltinModel::parse("sum:0").is_err());
        assert!(BuiltinModel::parse("select:x").is_err());
        assert!(BuiltinModel::parse("select:3").unwrap().accepts(3).is_err());
        assert!(BuiltinModel::parse("linear:1,2")
            .unwrap()
            .accepts(3)
            .is_err());
        assert!(BuiltinModel::parse("select:1")
            .unwrap()
            .predict(&[0.0])
            .is_err());
    }

    #[test]
    fn table_matches_select_on_the_cube() {
        let mut csv = String::from("a,b,c,pred\n");
        for m in 0..8u32 {
            let x: Vec<u32> = (0..3).map(|i| (m >> i) & 1).collect();
            csv.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], x[0]));
        }
        let table = TableModel::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(table.len(), 8);
        table.accepts(3).unwrap();
        let select = BuiltinModel::Select(0);
        for m in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|i| ((m >> i) & 1) as f64).collect();
            assert_eq!(table.predict(&x).unwrap(), select.predict(&x).unwrap());
        }
        assert!(matches!(
            table.predict(&[0.5, 0.0, 0.0]),
            Err(Error::MissingInstance { instance }) if instance == vec![0.5, 0.0, 0.0]
        ));
    }

    #[test]
    fn table_duplicates() {
        let same = "a,pred\n1,2\n1,2\n";
        assert_eq!(TableModel::from_reader(same.as_bytes()).unwrap().len(), 1);
        let conflict = "a,pred\n1,2\n1,3\n";
        assert!(TableModel::from_reader(conflict.as_bytes()).is_err());
        assert!(TableModel::from_reader("pred\n1\n".as_bytes()).is_err());
        assert!(TableModel::from_reader("a,pred\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn spec_grammar() {
        let m = parse_model_spec("builtin:sum:0,1", 3, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(m.predict(&[1.0, 2.0, 4.0]).unwrap(), 3.0);
        assert!(parse_model_spec("builtin:select:5", 3, DEFAULT_TIMEOUT).is_err());
        assert!(parse_model_spec("onnx:model", 3, DEFAULT_TIMEOUT).is_err());
        assert!(parse_model_spec("table:/nonexistent/preds.csv", 3, DEFAULT_TIMEOUT).is_err());
        assert!(parse_model_spec("exec:", 3, DEFAULT_TIMEOUT).is_err());
    }

    #[test]
    fn response_parsing() {
        assert_eq!(
            parse_response(r#"{"id":3,"prediction":0.5}"#).unwrap(),
            (3, 0.5)
        );
        assert!(parse_response(r#"{"id":-1,"prediction":0.5}"#).is_err());
        assert!(parse_response(r#"{"id":1}"#).is_err());
        assert!(parse_response("nonsense").is_err());
    }
}
