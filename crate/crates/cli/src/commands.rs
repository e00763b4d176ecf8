use std::path::Path;
use std::time::Duration;

use joint_shapley::attribution::{
    additive_decomposition_check, all_targets, build_value_function, explain_instances,
    explain_instances_exact, global_mean_abs, local_joint_shapley, local_joint_shapley_exact,
    presence_adjusted_from_locals, BaselineMode, Dataset, Estimation, GlobalReport,
    DEFAULT_TARGET_LIMIT,
};
use joint_shapley::indices::{
    added_value_from_table, generalised_shapley_from_table, joint_shapley_from_table,
    shapley_from_table, shapley_interaction_from_table, shapley_taylor_from_table,
};
use joint_shapley::{
    added_value, check_axioms, compute_q, convergence_trace, generalised_shapley,
    joint_shapley_exact, load_game_file, parse_builtin_game, parse_model_spec,
    sample_joint_shapley, shapley, shapley_interaction, shapley_taylor,
    verify_coefficient_identities, BuiltinGame, Coalition, ConvergenceTrace, Game, GameSource,
    IndexKind, IndexResult, Model, Rational, SamplerConfig, TableGame, ValueSource, Worth,
    WorthTable,
};
use serde_json::{json, Map, Value};

use crate::args::{
    CoeffsArgs, CompareArgs, ExplainGameArgs, ExplainModelArgs, GlobalArg, IndexArg, ReferenceArg,
    SampleArgs, SourceArgs, TraceArgs, VerifyArgs,
};
use crate::error::{usage, CliError};
use crate::output::{Cell, Report};

type CmdResult = Result<Report, CliError>;

/// Games the CLI can load: a built-in or a JSON table.
#[derive(Debug, Clone)]
pub enum ExactGame {
    Builtin(BuiltinGame),
    Table(TableGame<Rational>),
}

impl Game for ExactGame {
    type Worth = Rational;

    fn n(&self) -> usize {
        match self {
            ExactGame::Builtin(g) => g.n(),
            ExactGame::Table(g) => g.n(),
        }
    }

    fn worth(&self, s: &Coalition) -> joint_shapley::Result<Rational> {
        match self {
            ExactGame::Builtin(g) => g.worth(s),
            ExactGame::Table(g) => g.worth(s),
        }
    }
}

pub struct LoadedGame {
    pub game: ExactGame,
    /// Order of explanation stored in a game file.
    pub k: Option<usize>,
}

/// `builtin:NAME:N[:key=value...]`, `file:PATH` or a bare path.
pub fn load_game(spec: &str) -> Result<LoadedGame, CliError> {
    if let Some(rest) = spec.strip_prefix("builtin:") {
        return Ok(LoadedGame {
            game: ExactGame::Builtin(parse_builtin_game(rest)?),
            k: None,
        });
    }
    let path = spec.strip_prefix("file:").unwrap_or(spec);
    let file = load_game_file(path)?;
    Ok(LoadedGame {
        game: ExactGame::Table(file.game),
        k: file.k,
    })
}

fn order(k: Option<usize>, game: &LoadedGame) -> Result<usize, CliError> {
    k.or(game.k)
        .ok_or_else(|| usage("--k is required (or a game file with a `k` field)"))
}

fn index_names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn timeout(seconds: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(seconds)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| {
            usage(format!(
                "--timeout must be a positive number of seconds, got {seconds}"
            ))
        })
}

/// `"0;1;0,1"`: coalitions separated by `;`, members by `,`, each member an
/// index or a feature name. Duplicates are dropped, order kept.
pub fn parse_targets(text: &str, names: &[String], k: usize) -> Result<Vec<Coalition>, CliError> {
    let n = names.len();
    let mut out: Vec<Coalition> = Vec::new();
    for group in text.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let mut agents = Vec::new();
        for token in group.split(',').map(str::trim) {
            let agent = match token.parse::<usize>() {
                Ok(i) => i,
                Err(_) => names
                    .iter()
                    .position(|name| name == token)
                    .ok_or_else(|| usage(format!("unknown feature `{token}` in --targets")))?,
            };
            agents.push(agent);
        }
        let c = Coalition::from_agents(agents, n)?;
        if c.len() > k {
            return Err(joint_shapley::Error::CoalitionTooLarge { size: c.len(), k }.into());
        }
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(usage("--targets lists no coalitions"));
    }
    Ok(out)
}

fn targets_or_all(
    text: Option<&str>,
    names: &[String],
    k: usize,
) -> Result<Vec<Coalition>, CliError> {
    match text {
        Some(t) => parse_targets(t, names, k),
        None => Ok(all_targets(names.len(), k, DEFAULT_TARGET_LIMIT)?),
    }
}

fn values_json<W: Worth>(
    values: impl IntoIterator<Item = (Coalition, W)>,
    exact: bool,
    names: &[String],
    digits: usize,
) -> Value {
    let map: Map<String, Value> = values
        .into_iter()
        .map(|(c, w)| (c.named_key(names), Cell::worth(&w, exact).json(digits)))
        .collect();
    Value::Object(map)
}

/// Rows `coalition, value[, std_error]` plus the matching JSON fields.
fn push_result<W: Worth>(
    report: &mut Report,
    result: &IndexResult<W>,
    exact: bool,
    names: &[String],
    digits: usize,
) {
    for (c, w) in &result.values {
        let mut row = vec![Cell::Text(c.named_key(names)), Cell::worth(w, exact)];
        if let Some(se) = &result.std_errors {
            row.push(Cell::Float(se[c]));
        }
        report.rows.push(row);
    }
    report.set("n", result.n);
    report.set("k", result.k);
    report.set(
        "values",
        values_json(
            result.values.iter().map(|(c, w)| (c.clone(), w.clone())),
            exact,
            names,
            digits,
        ),
    );
    if let Some(se) = &result.std_errors {
        report.set(
            "std_errors",
            values_json(
                se.iter().map(|(c, s)| (c.clone(), *s)),
                false,
                names,
                digits,
            ),
        );
    }
}

pub fn coeffs(a: &CoeffsArgs, digits: usize) -> CmdResult {
    let table = compute_q(a.n, a.k)?;
    let mut r = Report::new("coeffs", &["s", "q", "q_float"]);
    for (s, q) in table.q().iter().enumerate() {
        r.rows.push(vec![
            Cell::Int(s as u64),
            Cell::Exact(q.clone()),
            Cell::Float(q.to_f64()),
        ]);
    }
    let exact: Vec<String> = table
        .q()
        .iter()
        .map(|q| Cell::Exact(q.clone()).render(digits))
        .collect();
    r.text = Some(exact.join(",") + "\n");
    r.set("n", a.n);
    r.set("k", a.k);
    r.set("q", exact);
    r.set(
        "q_float",
        table
            .q()
            .iter()
            .map(|q| Cell::Float(q.to_f64()).json(digits))
            .collect::<Vec<_>>(),
    );
    if a.verify {
        let report = verify_coefficient_identities(&table);
        let failures = report.failures();
        r.ok = report.passed();
        if r.ok {
            r.notes.push("identities: all hold".into());
        } else {
            r.notes
                .extend(failures.iter().map(|f| format!("identity failed: {f}")));
        }
        r.set(
            "identities",
            json!({ "passed": r.ok, "failures": failures }),
        );
    }
    Ok(r)
}

fn index_kind(arg: IndexArg) -> IndexKind {
    match arg {
        IndexArg::Joint => IndexKind::JointShapley,
        IndexArg::Shapley => IndexKind::Shapley,
        IndexArg::Si => IndexKind::ShapleyInteraction,
        IndexArg::Gs => IndexKind::GeneralisedShapley,
        IndexArg::Av => IndexKind::AddedValue,
        IndexArg::St => IndexKind::ShapleyTaylor,
    }
}

pub fn explain_game(a: &ExplainGameArgs, digits: usize) -> CmdResult {
    let loaded = load_game(&a.game)?;
    let g = &loaded.game;
    let kind = index_kind(a.index);
    let result = match kind {
        IndexKind::JointShapley => joint_shapley_exact(g, order(a.k, &loaded)?)?,
        IndexKind::ShapleyTaylor => shapley_taylor(g, order(a.k, &loaded)?)?,
        IndexKind::Shapley => shapley(g)?,
        IndexKind::ShapleyInteraction => shapley_interaction(g)?,
        IndexKind::GeneralisedShapley => generalised_shapley(g)?,
        IndexKind::AddedValue => added_value(g)?,
    };
    let mut r = Report::new("explain-game", &["coalition", "value"]);
    r.set("index", kind.name());
    r.set("mode", "exact");
    push_result(
        &mut r,
        &result,
        a.exact_rationals,
        &index_names(g.n()),
        digits,
    );
    Ok(r)
}

pub fn compare(a: &CompareArgs) -> CmdResult {
    let loaded = load_game(&a.game)?;
    let n = loaded.game.n();
    let table = WorthTable::tabulate(&loaded.game)?;
    let k_max = a.k_max.unwrap_or(n);
    if k_max == 0 || k_max > n {
        return Err(joint_shapley::Error::InvalidOrder { k: k_max, n }.into());
    }
    let orders: Vec<usize> = (2..=k_max).collect();

    let mut columns: Vec<String> = ["coalition", "v", "shapley", "si", "gs", "av"]
        .map(String::from)
        .to_vec();
    columns.extend(orders.iter().map(|k| format!("st_k{k}")));
    columns.extend(orders.iter().map(|k| format!("j_k{k}")));

    let mut indices: Vec<IndexResult<Rational>> = vec![
        shapley_from_table(&table),
        shapley_interaction_from_table(&table),
        generalised_shapley_from_table(&table),
        added_value_from_table(&table),
    ];
    indices.extend(orders.iter().map(|&k| shapley_taylor_from_table(&table, k)));
    for &k in &orders {
        indices.push(joint_shapley_from_table(&table, &compute_q(n, k)?, true));
    }

    let mut coalitions: Vec<Coalition> = (1..1u64 << n)
        .map(|m| Coalition::from_bits(m, n))
        .collect::<joint_shapley::Result<_>>()?;
    coalitions.sort();

    let mut r = Report::new("compare", &[]);
    r.columns = columns.clone();
    let mut json_rows = Vec::new();
    for c in &coalitions {
        let v = table.get(c.bits().expect("exact games fit in one word"));
        let mut row = vec![Cell::Text(c.key()), Cell::Exact(v.clone())];
        row.extend(
            indices
                .iter()
                .map(|res| res.get(c).map_or(Cell::Empty, |w| Cell::Exact(w.clone()))),
        );
        let obj: Map<String, Value> = columns
            .iter()
            .zip(&row)
            .filter(|(_, cell)| **cell != Cell::Empty)
            .map(|(col, cell)| (col.clone(), cell.json(0)))
            .collect();
        json_rows.push(Value::Object(obj));
        r.rows.push(row);
    }
    r.set("n", n);
    r.set("k_max", k_max);
    r.set("columns", columns);
    r.set("rows", json_rows);
    Ok(r)
}

pub fn verify_axioms(a: &VerifyArgs) -> CmdResult {
    let loaded = load_game(&a.game)?;
    let g = &loaded.game;
    let k = order(a.k, &loaded)?;
    let result = joint_shapley_exact(g, k)?;
    let report = check_axioms(&result, g, a.trials, a.seed)?;
    let names = index_names(g.n());

    let mut r = Report::new("verify-axioms", &["coalition", "value"]);
    let mut text = String::new();
    for (c, w) in &result.values {
        text.push_str(&format!("φ^J{c} = {}\n", Cell::Exact(w.clone()).render(0)));
        r.rows
            .push(vec![Cell::Text(c.key()), Cell::Exact(w.clone())]);
    }
    for line in report.lines() {
        text.push_str(&line);
        text.push('\n');
    }
    r.ok = report.passed();
    text.push_str(if r.ok {
        "all axioms hold\n"
    } else {
        "axiom check FAILED\n"
    });
    r.text = Some(text);

    let keys = |cs: &[Coalition]| cs.iter().map(Coalition::key).collect::<Vec<_>>();
    r.set("n", g.n());
    r.set("k", k);
    r.set(
        "values",
        values_json(result.values.clone(), true, &names, 0),
    );
    r.set(
        "axioms",
        json!({
            "passed": r.ok,
            "efficiency_residual": Cell::Exact(report.efficiency_residual.clone()).json(0),
            "efficiency_ok": report.efficiency_ok,
            "null_coalitions": keys(&report.null_coalitions),
            "null_violations": report.null_violations.iter().map(|(c, _)| c.key()).collect::<Vec<_>>(),
            "symmetry_checked": report.symmetry_checked,
            "symmetric_pairs": report.symmetric_pairs.len(),
            "symmetry_violations": report.symmetry_violations.iter().map(|(a, b)| [a.key(), b.key()]).collect::<Vec<_>>(),
            "anonymity_permutations": report.anonymity_permutations.len(),
            "anonymity_violations": report.anonymity_violations.len(),
        }),
    );
    r.set("seed", a.seed);
    Ok(r)
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::from_csv(path)?)
}

fn global_rows<W: Worth>(
    r: &mut Report,
    report: &GlobalReport<W>,
    exact: bool,
    names: &[String],
    digits: usize,
) {
    r.set("instances", report.instances);
    r.set("k", report.k);
    r.set(
        "mean_abs",
        values_json(report.mean_abs.clone(), exact, names, digits),
    );
    match (&report.presence_adjusted, &report.presence_counts) {
        (Some(adjusted), Some(counts)) => {
            r.columns = ["coalition", "presence_adjusted", "mean_abs", "present"]
                .map(String::from)
                .to_vec();
            for (c, v) in adjusted {
                r.rows.push(vec![
                    Cell::Text(c.named_key(names)),
                    Cell::worth(v, exact),
                    Cell::worth(&report.mean_abs[c], exact),
                    Cell::Int(counts[c] as u64),
                ]);
            }
            r.set(
                "presence_adjusted",
                values_json(adjusted.clone(), exact, names, digits),
            );
            let counts: Map<String, Value> = counts
                .iter()
                .map(|(c, n)| (c.named_key(names), Value::from(*n)))
                .collect();
            r.set("presence_counts", Value::Object(counts));
        }
        _ => {
            r.columns = ["coalition", "mean_abs"].map(String::from).to_vec();
            for (c, v) in &report.mean_abs {
                r.rows
                    .push(vec![Cell::Text(c.named_key(names)), Cell::worth(v, exact)]);
            }
        }
    }
}

fn keep_targets<W: Worth>(
    mut locals: Vec<IndexResult<W>>,
    targets: Option<&[Coalition]>,
) -> Vec<IndexResult<W>> {
    if let Some(targets) = targets {
        for l in &mut locals {
            l.values.retain(|c, _| targets.contains(c));
        }
    }
    locals
}

fn explain_rows<W: Worth>(
    r: &mut Report,
    locals: &[IndexResult<W>],
    global: Option<GlobalArg>,
    dataset: &Dataset,
    exact: bool,
    digits: usize,
) -> Result<(), CliError> {
    let names = dataset.feature_names();
    match global {
        Some(GlobalArg::MeanAbs) => global_rows(r, &global_mean_abs(locals)?, exact, names, digits),
        Some(GlobalArg::Presence) => {
            let instances: Vec<&[f64]> = dataset.rows().iter().map(Vec::as_slice).collect();
            global_rows(
                r,
                &presence_adjusted_from_locals(&instances, locals)?,
                exact,
                names,
                digits,
            )
        }
        None => {
            let sampled = locals.first().is_some_and(|l| l.std_errors.is_some());
            r.columns = ["row", "coalition", "value"].map(String::from).to_vec();
            if sampled {
                r.columns.push("std_error".into());
            }
            let mut instances = Vec::new();
            for (row, local) in locals.iter().enumerate() {
                for (c, w) in &local.values {
                    let mut cells = vec![
                        Cell::Int(row as u64),
                        Cell::Text(c.named_key(names)),
                        Cell::worth(w, exact),
                    ];
                    if let Some(se) = &local.std_errors {
                        cells.push(Cell::Float(se[c]));
                    }
                    r.rows.push(cells);
                }
                instances.push(json!({
                    "row": row,
                    "values": values_json(local.values.clone(), exact, names, digits),
                }));
            }
            r.set("instances", instances);
        }
    }
    Ok(())
}

pub fn explain_model(a: &ExplainModelArgs, digits: usize) -> CmdResult {
    let data = a.model.data.as_deref().map(load_dataset).transpose()?;
    let dataset = if a.exact_enumerate_binary || a.decompose.is_some() {
        let n = match (&data, a.n) {
            (Some(d), _) => d.n_features(),
            (None, Some(n)) => n,
            (None, None) => {
                return Err(usage(
                    "--exact-enumerate-binary and --decompose need --data or --n",
                ))
            }
        };
        let cube = Dataset::binary_product_space(n)?;
        match &data {
            Some(d) => Dataset::new(d.feature_names().to_vec(), cube.rows().to_vec())?,
            None => cube,
        }
    } else {
        data.ok_or_else(|| usage("--data is required"))?
    };
    let n = dataset.n_features();
    let names = dataset.feature_names().to_vec();
    let model = parse_model_spec(&a.model.model, n, timeout(a.model.timeout)?)?;
    let mut r = Report::new("explain-model", &["coalition", "value"]);
    r.set("features", names.clone());

    if let Some(feature) = a.decompose {
        let d = additive_decomposition_check(model.as_ref(), n, feature, a.tolerance)?;
        r.columns = ["feature", "measured", "predicted", "residual", "accepted"]
            .map(String::from)
            .to_vec();
        let cells = vec![
            Cell::Text(names[feature].clone()),
            Cell::Exact(d.measured.clone()),
            Cell::Exact(d.predicted.clone()),
            Cell::Exact(d.residual.clone()),
            Cell::Text(d.accepted.to_string()),
        ];
        let fields: Map<String, Value> = r
            .columns
            .iter()
            .zip(&cells)
            .map(|(k, c)| (k.clone(), c.json(digits)))
            .collect();
        r.set("decomposition", Value::Object(fields));
        r.json["decomposition"]["accepted"] = Value::Bool(d.accepted);
        r.rows.push(cells);
        return Ok(r);
    }

    let k = a.k.ok_or_else(|| usage("--k is required"))?;
    if a.exact_rationals && a.iters.is_some() {
        return Err(usage(
            "--exact-rationals applies only to exact enumeration, not --iters",
        ));
    }
    let estimation = match a.iters {
        Some(iters) => {
            let cfg = SamplerConfig::new(iters, a.seed);
            cfg.validate()?;
            r.set(
                "mode",
                json!({ "sampled": { "iterations": iters, "seed": a.seed } }),
            );
            Estimation::Sampled(cfg)
        }
        None => {
            r.set("mode", "exact");
            Estimation::Exact
        }
    };
    let targets = a
        .targets
        .as_deref()
        .map(|t| parse_targets(t, &names, k))
        .transpose()?;
    let exact = a.exact_rationals;

    if let Some(row) = a.x {
        if a.global.is_some() {
            return Err(usage("--global aggregates over all rows; drop --x"));
        }
        let x = dataset
            .row(row)
            .ok_or_else(|| usage(format!("--x {row} out of range for {} rows", dataset.len())))?
            .to_vec();
        r.set("row", row);
        r.set("prediction", Cell::Float(model.predict(&x)?).json(digits));
        if exact {
            let result = local_joint_shapley_exact::<Rational>(
                model.as_ref(),
                &dataset,
                &x,
                k,
                targets.as_deref(),
            )?;
            push_result(&mut r, &result, true, &names, digits);
        } else {
            let result = local_joint_shapley(
                model.as_ref(),
                &dataset,
                &x,
                k,
                &estimation,
                targets.as_deref(),
            )?;
            if result.std_errors.is_some() {
                r.columns.push("std_error".into());
            }
            push_result(&mut r, &result, false, &names, digits);
        }
        return Ok(r);
    }
    if !a.all && a.global.is_none() {
        return Err(usage("choose --x ROW, --all or --global"));
    }
    let rows: Vec<usize> = (0..dataset.len()).collect();
    if exact {
        let locals = explain_instances_exact::<Rational>(model.as_ref(), &dataset, &rows, k)?;
        explain_rows(
            &mut r,
            &keep_targets(locals, targets.as_deref()),
            a.global,
            &dataset,
            true,
            digits,
        )?;
    } else {
        let locals = explain_instances(
            model.as_ref(),
            &dataset,
            &rows,
            k,
            &estimation,
            targets.as_deref(),
        )?;
        explain_rows(&mut r, &locals, a.global, &dataset, false, digits)?;
    }
    Ok(r)
}

enum Source {
    Game(LoadedGame),
    Model {
        model: Box<dyn Model>,
        data: Dataset,
        x: Vec<f64>,
    },
}

impl Source {
    fn load(s: &SourceArgs) -> Result<Self, CliError> {
        match (&s.game, &s.model) {
            (Some(g), None) => Ok(Source::Game(load_game(g)?)),
            (None, Some(m)) => {
                let path = s
                    .data
                    .as_deref()
                    .ok_or_else(|| usage("--model needs --data"))?;
                let data = load_dataset(path)?;
                let row = s.x.ok_or_else(|| usage("--model needs --x ROW"))?;
                let x = data
                    .row(row)
                    .ok_or_else(|| {
                        usage(format!("--x {row} out of range for {} rows", data.len()))
                    })?
                    .to_vec();
                let model = parse_model_spec(m, data.n_features(), timeout(s.timeout)?)?;
                Ok(Source::Model { model, data, x })
            }
            _ => Err(usage("give either --game or --model")),
        }
    }

    fn names(&self) -> Vec<String> {
        match self {
            Source::Game(g) => index_names(g.game.n()),
            Source::Model { data, .. } => data.feature_names().to_vec(),
        }
    }

    fn with_values<T>(
        &self,
        f: impl FnOnce(&dyn ValueSource) -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        match self {
            Source::Game(g) => f(&GameSource(&g.game)),
            Source::Model { model, data, x } => f(&build_value_function::<f64>(
                model.as_ref(),
                data,
                x,
                BaselineMode::Sampled,
            )?),
        }
    }

    fn reference(
        &self,
        choice: ReferenceArg,
        k: usize,
        targets: &[Coalition],
    ) -> Result<Option<IndexResult<f64>>, CliError> {
        match (self, choice) {
            (_, ReferenceArg::None) => Ok(None),
            (Source::Game(g), ReferenceArg::Auto)
                if g.game.n() > joint_shapley::sampler::ARRIVAL_MAX_N =>
            {
                Ok(None)
            }
            (Source::Model { .. }, ReferenceArg::Auto) => Ok(None),
            (Source::Game(g), _) => Ok(Some(joint_shapley_exact(&g.game, k)?.to_f64())),
            (Source::Model { model, data, x }, ReferenceArg::Exact) => Ok(Some(
                local_joint_shapley_exact::<f64>(model.as_ref(), data, x, k, Some(targets))?,
            )),
        }
    }
}

fn run_trace(
    source: &Source,
    k: usize,
    targets: &[Coalition],
    cfg: &SamplerConfig,
    reference: ReferenceArg,
) -> Result<ConvergenceTrace, CliError> {
    let reference = source.reference(reference, k, targets)?;
    source.with_values(|vs| Ok(convergence_trace(vs, k, targets, cfg, reference.as_ref())?))
}

fn default_batch(iters: u64) -> u64 {
    (iters / 100).max(1)
}

pub fn sample(a: &SampleArgs, digits: usize) -> CmdResult {
    let source = Source::load(&a.source)?;
    let names = source.names();
    let targets = targets_or_all(a.targets.as_deref(), &names, a.k)?;
    let cfg = SamplerConfig::new(a.iters, a.seed);
    cfg.validate()?;
    let result = source.with_values(|vs| Ok(sample_joint_shapley(vs, a.k, &targets, &cfg)?))?;

    let mut r = Report::new("sample", &["coalition", "estimate", "std_error"]);
    r.set("iterations", a.iters);
    r.set("seed", a.seed);
    push_result(&mut r, &result, false, &names, digits);

    if let Some(path) = &a.trace {
        let cfg = cfg.with_batch(a.batch.unwrap_or_else(|| default_batch(a.iters)));
        let trace = run_trace(&source, a.k, &targets, &cfg, ReferenceArg::Auto)?;
        let mut t = Report::new("trace", &[]);
        trace_rows(&mut t, &trace, &names, digits);
        std::fs::write(path, t.render(crate::output::Format::Csv, digits)?)?;
        r.set("trace", path.display().to_string());
    }
    Ok(r)
}

fn trace_rows(r: &mut Report, trace: &ConvergenceTrace, names: &[String], digits: usize) {
    r.columns = ["iteration", "target", "estimate", "l2"]
        .map(String::from)
        .to_vec();
    let mut checkpoints = Vec::new();
    for cp in &trace.checkpoints {
        for (c, est) in &cp.estimates {
            r.rows.push(vec![
                Cell::Int(cp.iteration),
                Cell::Text(c.named_key(names)),
                Cell::Float(*est),
                Cell::Float(cp.l2),
            ]);
        }
        checkpoints.push(json!({
            "iteration": cp.iteration,
            "l2": Cell::Float(cp.l2).json(digits),
            "estimates": values_json(cp.estimates.iter().cloned(), false, names, digits),
        }));
    }
    r.set("against_reference", trace.against_reference);
    r.set("checkpoints", checkpoints);
}

pub fn trace(a: &TraceArgs, digits: usize) -> CmdResult {
    let source = Source::load(&a.source)?;
    let names = source.names();
    let targets = targets_or_all(a.targets.as_deref(), &names, a.k)?;
    let cfg = SamplerConfig::new(a.iters, a.seed)
        .with_batch(a.batch.unwrap_or_else(|| default_batch(a.iters)));
    cfg.validate()?;
    let trace = run_trace(&source, a.k, &targets, &cfg, a.reference)?;
    let mut r = Report::new("trace", &[]);
    r.set("k", a.k);
    r.set("iterations", a.iters);
    r.set("seed", a.seed);
    r.set("batch", cfg.batch);
    trace_rows(&mut r, &trace, &names, digits);
    Ok(r)
}
