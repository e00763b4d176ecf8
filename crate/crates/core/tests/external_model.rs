use std::path::{Path, PathBuf};
use std::time::Duration;

use joint_shapley::attribution::{local_joint_shapley, Dataset, Estimation};
use joint_shapley::model::{BuiltinModel, ExternalModel, Model, DEFAULT_TIMEOUT};
use joint_shapley::{parse_model_spec, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ECHO: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "prediction": req["instance"][0]}), flush=True)
"#;

const SUM: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    x = req["instance"]
    print(json.dumps({"id": req["id"], "prediction": x[0] + x[1]}), flush=True)
"#;

// answers each batch of three requests in reverse order
const REVERSED: &str = r#"
import json, sys
pending = []
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == 0:
        print(json.dumps({"id": 0, "prediction": 0.0}), flush=True)
        continue
    pending.append(req)
    if len(pending) == 3:
        for r in reversed(pending):
            print(json.dumps({"id": r["id"], "prediction": r["instance"][0] * 2}), flush=True)
        pending = []
"#;

const WRONG_ID: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    rid = req["id"] if req["id"] == 0 else req["id"] + 1000
    print(json.dumps({"id": rid, "prediction": 1.0}), flush=True)
"#;

const GARBAGE: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == 0:
        print(json.dumps({"id": 0, "prediction": 0.0}), flush=True)
    else:
        print("not json at all", flush=True)
"#;

const DIES: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == 0:
        print(json.dumps({"id": 0, "prediction": 0.0}), flush=True)
    else:
        sys.exit(3)
"#;

const SILENT: &str = r#"
import json, sys, time
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == 0:
        print(json.dumps({"id": 0, "prediction": 0.0}), flush=True)
    else:
        time.sleep(30)
"#;

fn script(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn spawn(path: &Path, n: usize, timeout: Duration) -> joint_shapley::Result<ExternalModel> {
    ExternalModel::spawn("python3", &[path.display().to_string()], n, timeout)
}

#[test]
fn echo_model_matches_select() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(&script(&dir, "echo.py", ECHO), 4, DEFAULT_TIMEOUT).unwrap();
    assert!(!model.parallel_safe());
    let select = BuiltinModel::Select(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..4).map(|_| rng.gen_range(-1e6..1e6)).collect())
        .collect();
    for x in &xs[..10] {
        assert_eq!(model.predict(x).unwrap(), select.predict(x).unwrap());
    }
    // full float precision survives the round trip
    let batch = model.predict_batch(&xs).unwrap();
    for (x, y) in xs.iter().zip(batch) {
        assert_eq!(y.to_bits(), x[0].to_bits());
    }
}

#[test]
fn out_of_order_responses_are_matched_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(&script(&dir, "rev.py", REVERSED), 1, DEFAULT_TIMEOUT).unwrap();
    let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
    assert_eq!(model.predict_batch(&xs).unwrap(), vec![2.0, 4.0, 6.0]);
}

#[test]
fn unknown_id_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(&script(&dir, "wrong.py", WRONG_ID), 2, DEFAULT_TIMEOUT).unwrap();
    match model.predict(&[1.0, 2.0]) {
        Err(Error::Protocol { message, last_line }) => {
            assert!(message.contains("unknown id"), "{message}");
            assert!(last_line.unwrap().contains("1001"));
        }
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn malformed_line_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(&script(&dir, "garbage.py", GARBAGE), 1, DEFAULT_TIMEOUT).unwrap();
    match model.predict(&[1.0]) {
        Err(Error::Protocol { last_line, .. }) => {
            assert_eq!(last_line.as_deref(), Some("not json at all"))
        }
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn process_death_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(&script(&dir, "dies.py", DIES), 1, DEFAULT_TIMEOUT).unwrap();
    match model.predict(&[1.0]) {
        Err(Error::ProcessExited { status, last_line }) => {
            assert!(status.contains('3'), "{status}");
            assert!(last_line.unwrap().contains("\"id\": 0"));
        }
        other => panic!("expected exit error, got {other:?}"),
    }
}

#[test]
fn silence_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let model = spawn(
        &script(&dir, "silent.py", SILENT),
        1,
        Duration::from_millis(300),
    )
    .unwrap();
    assert!(matches!(model.predict(&[1.0]), Err(Error::Timeout { .. })));
}

#[test]
fn failed_handshake_and_missing_program() {
    let dir = tempfile::tempdir().unwrap();
    let broken = script(&dir, "broken.py", "import sys\nsys.exit(1)\n");
    assert!(spawn(&broken, 1, DEFAULT_TIMEOUT).is_err());
    assert!(ExternalModel::spawn("/nonexistent/model-binary", &[], 1, DEFAULT_TIMEOUT).is_err());
}

#[test]
fn external_sum_attribution_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = script(&dir, "sum.py", SUM);
    let spec = format!("exec:python3 {}", path.display());
    let external = parse_model_spec(&spec, 3, DEFAULT_TIMEOUT).unwrap();
    let builtin = BuiltinModel::Sum(0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let data = Dataset::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
    let x = data.row(0).unwrap().to_vec();
    let a = local_joint_shapley(external.as_ref(), &data, &x, 3, &Estimation::Exact, None).unwrap();
    let b = local_joint_shapley(&builtin, &data, &x, 3, &Estimation::Exact, None).unwrap();
    for (t, v) in &b.values {
        assert!((a.values[t] - v).abs() <= 1e-12, "{t}");
    }
}
