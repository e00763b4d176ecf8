//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{
    arrival_oracle, bernoulli_expected, coalition, mean_abs_global, random_rational, random_values,
    table, uniform_dataset, BERNOULLI_ORDER,
};
use joint_shapley::attribution::{
    additive_decomposition_check, local_joint_shapley, presence_adjusted_global, Dataset,
    Estimation,
};
use joint_shapley::coefficients::shapley_weights;
use joint_shapley::combinatorics::binomial;
use joint_shapley::model::{BuiltinModel, DEFAULT_TIMEOUT};
use joint_shapley::worth::{format_rational, parse_rational, rational};
use joint_shapley::Worth;
use joint_shapley::{
    added_value, closed_form_q, compute_q, convergence_trace, generalised_shapley,
    joint_shapley_exact, parse_builtin_game, parse_model_spec, permute_game, sample_joint_shapley,
    shapley, shapley_interaction, shapley_taylor, verify_coefficient_identities, Coalition, Game,
    GameSource, IndexResult, Permutation, Rational, SamplerConfig, TableGame,
};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE1_BUDGET: Duration = Duration::from_secs(1);
const IDENTITY_BUDGET: Duration = Duration::from_secs(5);
const AXIOM_BUDGET: Duration = Duration::from_secs(30);
const SAMPLING_BUDGET: Duration = Duration::from_secs(10);
const BERNOULLI_BUDGET: Duration = Duration::from_secs(1);
const SMOKE_BUDGET: Duration = Duration::from_secs(60);

const SAMPLING_TOLERANCE: f64 = 0.01;
const SEM_SLOPE: f64 = -0.5;
const SEM_SLOPE_TOLERANCE: f64 = 0.1;
const PROTOCOL_TOLERANCE: f64 = 1e-12;
const FLOAT_ZERO: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    if spent > budget {
        return Err(format!("took {spent:.2?}, budget {budget:?}"));
    }
    Ok(())
}

fn r(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

/// Compare every coalition of each size against the expected value for
/// that size.
fn check_by_size(
    label: &str,
    result: &IndexResult<Rational>,
    expected: &[(usize, Rational)],
    mismatches: &mut Vec<String>,
) -> usize {
    let mut checked = 0;
    for (size, want) in expected {
        for (t, got) in result.values.iter().filter(|(t, _)| t.len() == *size) {
            checked += 1;
            if got != want {
                mismatches.push(format!(
                    "{label} {t}: got {}, table {}",
                    format_rational(got),
                    format_rational(want)
                ));
            }
        }
    }
    checked
}

struct Table1Row {
    v: [Rational; 3],
    shapley: Rational,
    si: [Rational; 3],
    gs: [Rational; 3],
    av: [Rational; 3],
    st2: [Rational; 2],
    st3: [Rational; 3],
    j2: [Rational; 2],
    j3: [Rational; 3],
}

fn majority_row() -> Table1Row {
    Table1Row {
        v: [r("0"), r("1"), r("1")],
        shapley: r("1/3"),
        si: [r("1/3"), r("0"), r("-2")],
        gs: [r("1/3"), r("1/2"), r("1")],
        av: [r("-1/3"), r("1/3"), r("0")],
        st2: [r("0"), r("1/3")],
        st3: [r("0"), r("1"), r("-2")],
        j2: [r("1/9"), r("2/9")],
        j3: [r("2/21"), r("4/21"), r("3/21")],
    }
}

fn linear_crosses_row(c: &Rational) -> Table1Row {
    let k = |x: i64| Rational::from_integer(x.into());
    Table1Row {
        v: [k(1), k(2), k(3) + c],
        shapley: (k(3) + c) / k(3),
        si: [(k(3) + c) / k(3), c / k(3), c.clone()],
        gs: [(k(3) + c) / k(3), (k(4) + c) / k(2), k(3) + c],
        av: [-c / k(12), -c / k(6), k(3) * c / k(4)],
        st2: [k(1), c / k(3)],
        st3: [k(1), k(0), c.clone()],
        j2: [k(5) * (k(2) + c) / k(18), (k(8) + c) / k(18)],
        j3: [
            k(5) * (k(2) + c) / k(21),
            (k(8) + c) / k(21),
            k(3) * (k(3) + c) / k(21),
        ],
    }
}

fn sized(values: &[Rational]) -> Vec<(usize, Rational)> {
    values
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (i + 1, v))
        .collect()
}

fn check_table1_game<G: Game<Worth = Rational>>(
    name: &str,
    game: &G,
    row: &Table1Row,
    bad: &mut Vec<String>,
) -> usize {
    let n = game.n();
    let mut checked = 0;
    for (size, want) in sized(&row.v) {
        for m in 1..(1u64 << n) {
            if m.count_ones() as usize == size {
                checked += 1;
                let got = game.eval(&coalition(m, n)).unwrap();
                if got != want {
                    bad.push(format!("{name} v{{{m:b}}}: got {got}, table {want}"));
                }
            }
        }
    }
    let label = |index: &str| format!("{name} {index}");
    checked += check_by_size(
        &label("shapley"),
        &shapley(game).unwrap(),
        &[(1, row.shapley.clone())],
        bad,
    );
    checked += check_by_size(
        &label("SI"),
        &shapley_interaction(game).unwrap(),
        &sized(&row.si),
        bad,
    );
    checked += check_by_size(
        &label("GS"),
        &generalised_shapley(game).unwrap(),
        &sized(&row.gs),
        bad,
    );
    checked += check_by_size(
        &label("AV"),
        &added_value(game).unwrap(),
        &sized(&row.av),
        bad,
    );
    checked += check_by_size(
        &label("ST k=2"),
        &shapley_taylor(game, 2).unwrap(),
        &sized(&row.st2),
        bad,
    );
    checked += check_by_size(
        &label("ST k=3"),
        &shapley_taylor(game, 3).unwrap(),
        &sized(&row.st3),
        bad,
    );
    checked += check_by_size(
        &label("J k=2"),
        &joint_shapley_exact(game, 2).unwrap(),
        &sized(&row.j2),
        bad,
    );
    checked += check_by_size(
        &label("J k=3"),
        &joint_shapley_exact(game, 3).unwrap(),
        &sized(&row.j3),
        bad,
    );
    checked
}

fn table1() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut checked = check_table1_game(
        "majority",
        &parse_builtin_game("majority:3").unwrap(),
        &majority_row(),
        &mut bad,
    );
    for c in ["-2", "0", "1", "4"] {
        let game = parse_builtin_game(&format!("linear_crosses:3:c={c}")).unwrap();
        checked += check_table1_game(
            &format!("linear_crosses(c={c})"),
            &game,
            &linear_crosses_row(&r(c)),
            &mut bad,
        );
    }
    within(TABLE1_BUDGET, start)?;
    if bad.is_empty() {
        Ok(format!("{checked} entries exact"))
    } else {
        Err(format!(
            "{} of {checked} entries differ: {}",
            bad.len(),
            bad.join("; ")
        ))
    }
}

fn coefficient_identities() -> Outcome {
    let start = Instant::now();
    let mut tables = 0;
    for n in 1..=12 {
        for k in 1..=n {
            let t = compute_q(n, k).map_err(|e| e.to_string())?;
            let report = verify_coefficient_identities(&t);
            if !report.passed() {
                return Err(format!("n={n} k={k}: {:?}", report.failures()));
            }
            let mass: Rational = (n - k..n)
                .map(|s| Rational::from_integer(binomial(n, s)) * &t.q()[s])
                .sum();
            if !mass.is_one() {
                return Err(format!("n={n} k={k}: mass {mass}"));
            }
            tables += 1;
        }
        if compute_q(n, n).unwrap().q() != closed_form_q(n).unwrap().q() {
            return Err(format!("n={n}: recursion and closed form differ"));
        }
        if compute_q(n, 1).unwrap().q() != &shapley_weights(n)[..] {
            return Err(format!("n={n}: k=1 differs from Shapley weights"));
        }
    }
    within(IDENTITY_BUDGET, start)?;
    Ok(format!(
        "{tables} tables, residuals 0, mass 1, closed form and k=1 equal"
    ))
}

fn axioms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_241_018);
    for game_index in 0..200 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=n);
        let v = table(n, &random_values(n, &mut rng));
        let rv = joint_shapley_exact(&v, k).unwrap();
        let fail = |axiom: &str| {
            Err(format!(
                "game {game_index} (n={n}, k={k}): {axiom} violated"
            ))
        };

        if rv.total() != v.eval(&Coalition::full(n)).unwrap() {
            return fail("efficiency");
        }

        let w = table(n, &random_values(n, &mut rng));
        let (a, b) = (random_rational(&mut rng), random_rational(&mut rng));
        let mix = TableGame::linear_combination(&a, &v, &b, &w).unwrap();
        let (rw, rm) = (
            joint_shapley_exact(&w, k).unwrap(),
            joint_shapley_exact(&mix, k).unwrap(),
        );
        if rm
            .values
            .iter()
            .any(|(t, x)| *x != a.clone() * &rv.values[t] + b.clone() * &rw.values[t])
        {
            return fail("linearity");
        }

        if n >= 2 {
            let size = rng.gen_range(1..=k.min(n - 1));
            let mut null = 0u64;
            while (null.count_ones() as usize) < size {
                null |= 1 << rng.gen_range(0..n);
            }
            let base = random_values(n, &mut rng);
            let g = TableGame::from_fn(n, |m| base[(m & !null) as usize].clone()).unwrap();
            let rg = joint_shapley_exact(&g, k).unwrap();
            if !rg.values[&coalition(null, n)].is_zero() {
                return fail("null coalition");
            }
        }

        let sigma = Permutation::random(n, &mut rng);
        let moved = joint_shapley_exact(&permute_game(&v, &sigma).unwrap(), k).unwrap();
        if rv
            .values
            .iter()
            .any(|(t, x)| moved.values[&sigma.apply_coalition(t).unwrap()] != *x)
        {
            return fail("anonymity");
        }
    }
    within(AXIOM_BUDGET, start)?;
    Ok("200 random rational games: efficiency, linearity, null coalition, anonymity exact".into())
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    for n in 1..=5 {
        let mut games: Vec<Vec<Rational>> = (0..5).map(|_| random_values(n, &mut rng)).collect();
        let maj = parse_builtin_game(&format!("majority:{n}")).unwrap();
        games.push(
            (0..1u64 << n)
                .map(|m| maj.eval(&coalition(m, n)).unwrap())
                .collect(),
        );
        for values in &games {
            let g = table(n, values);
            for k in 1..=n {
                let exact = joint_shapley_exact(&g, k).unwrap();
                for (m, want) in arrival_oracle(values, n, k) {
                    compared += 1;
                    if exact.values[&coalition(m, n)] != want {
                        return Err(format!(
                            "n={n} k={k} T={}: formula and arrival process differ",
                            coalition(m, n)
                        ));
                    }
                }
            }
        }
    }
    Ok(format!(
        "{compared} values equal to the exact arrival-process expectation"
    ))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    cov / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn sampling_convergence() -> Outcome {
    let start = Instant::now();
    let game = parse_builtin_game("majority:3").unwrap();
    let exact = joint_shapley_exact(&game, 2).unwrap();
    let targets: Vec<Coalition> = exact.values.keys().cloned().collect();
    let source = GameSource(&game);

    let sampled =
        sample_joint_shapley(&source, 2, &targets, &SamplerConfig::new(100_000, 1)).unwrap();
    let worst = targets
        .iter()
        .map(|t| (sampled.values[t] - exact.values[t].to_f64()).abs())
        .fold(0.0, f64::max);
    if worst > SAMPLING_TOLERANCE {
        return Err(format!(
            "largest error {worst:.4} exceeds {SAMPLING_TOLERANCE}"
        ));
    }

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for iters in [100u64, 1_000, 10_000, 100_000] {
        let r = sample_joint_shapley(&source, 2, &targets, &SamplerConfig::new(iters, 2)).unwrap();
        let se = r.std_errors.unwrap();
        xs.push((iters as f64).ln());
        ys.push((se.values().sum::<f64>() / se.len() as f64).ln());
    }
    let sem_slope = slope(&xs, &ys);
    if (sem_slope - SEM_SLOPE).abs() > SEM_SLOPE_TOLERANCE {
        return Err(format!(
            "SEM slope {sem_slope:.3} outside {SEM_SLOPE} ± {SEM_SLOPE_TOLERANCE}"
        ));
    }

    let cfg = SamplerConfig::new(100_000, 3).with_batch(5_000);
    let trace = convergence_trace(&source, 2, &targets, &cfg, Some(&exact)).unwrap();
    let lx: Vec<f64> = trace
        .checkpoints
        .iter()
        .map(|c| (c.iteration as f64).ln())
        .collect();
    let ly: Vec<f64> = trace.l2_series().iter().map(|d| d.ln()).collect();
    let trend = slope(&lx, &ly);
    let last = *trace.l2_series().last().unwrap();
    if trend >= 0.0 || last >= SAMPLING_TOLERANCE {
        return Err(format!(
            "trace does not converge: trend {trend:.3}, final L2 {last:.4}"
        ));
    }
    within(SAMPLING_BUDGET, start)?;
    Ok(format!(
        "max error {worst:.4}, SEM slope {sem_slope:.3}, L2 trend {trend:.3}, final L2 {last:.4}"
    ))
}

fn bernoulli_table() -> Outcome {
    let start = Instant::now();
    let cube = Dataset::binary_product_space(3).unwrap();
    let mut matched = 0;
    for (name, model, expected) in bernoulli_expected() {
        let report =
            presence_adjusted_global::<Rational>(&model, &cube, 3).map_err(|e| e.to_string())?;
        let adjusted = report.presence_adjusted.unwrap();
        for (key, (p, q)) in BERNOULLI_ORDER.iter().zip(expected) {
            let got = &adjusted[&Coalition::parse_key(key, 3).unwrap()];
            if *got != rational(p, q) {
                return Err(format!(
                    "{name} {{{key}}}: got {}, table {p}/{q}",
                    format_rational(got)
                ));
            }
            matched += 1;
        }
    }
    within(BERNOULLI_BUDGET, start)?;
    Ok(format!("{matched} entries exact"))
}

fn decomposition() -> Outcome {
    let threshold = rational(1, 42);
    let mut parts = Vec::new();
    for (name, model, accept) in [
        ("f1", BuiltinModel::Select(0), true),
        ("f2", BuiltinModel::Sum(0, 1), true),
        ("f4", BuiltinModel::Product(0, 1), false),
    ] {
        let report = additive_decomposition_check(&model, 3, 0, 0.0).map_err(|e| e.to_string())?;
        let ok = if accept {
            report.accepted && report.residual.is_zero()
        } else {
            !report.accepted && report.residual >= threshold
        };
        if !ok {
            return Err(format!(
                "{name}: accepted={} residual {}",
                report.accepted,
                format_rational(&report.residual)
            ));
        }
        parts.push(format!(
            "{name} residual {}",
            format_rational(&report.residual)
        ));
    }
    Ok(format!(
        "{} (f1, f2 accepted; f4 rejected)",
        parts.join(", ")
    ))
}

fn uniform_qualitative() -> Outcome {
    let key = |k: &str| Coalition::parse_key(k, 3).unwrap();
    let independent = uniform_dataset(50, false, 42);
    let correlated = uniform_dataset(50, true, 42);
    let f1 = mean_abs_global(&BuiltinModel::Select(0), &independent, 3);
    for k in ["1", "2", "1,2"] {
        if !f1[&key(k)].is_zero() {
            return Err(format!("f1 {{{k}}} is {}, expected 0", f1[&key(k)]));
        }
    }
    let f2c = mean_abs_global(&BuiltinModel::Sum(0, 1), &correlated, 3);
    for k in ["0,1", "0,1,2"] {
        if f2c[&key(k)].to_f64().abs() > FLOAT_ZERO {
            return Err(format!(
                "correlated f2 {{{k}}} is {}, expected 0",
                f2c[&key(k)]
            ));
        }
    }
    let f3 = mean_abs_global(&BuiltinModel::Diff(0, 1), &independent, 3);
    let f3c = mean_abs_global(&BuiltinModel::Diff(0, 1), &correlated, 3);
    let (ind, cor) = (f3[&key("0,1")].to_f64(), f3c[&key("0,1")].to_f64());
    if cor <= ind {
        return Err(format!(
            "correlated f3 pair {cor:.3} not above independent {ind:.3}"
        ));
    }
    Ok(format!(
        "x1-free coalitions 0 under f1, correlated f2 pairs 0, f3 pair {ind:.3} -> {cor:.3} when correlated"
    ))
}

const SUM_MODEL: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    x = req["instance"]
    print(json.dumps({"id": req["id"], "prediction": x[0] + x[1]}), flush=True)
"#;

fn desk_scale_substitutes() -> Outcome {
    // external model protocol agrees with the builtin
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = dir.path().join("sum_model.py");
    std::fs::write(&script, SUM_MODEL).map_err(|e| e.to_string())?;
    let external = parse_model_spec(
        &format!("exec:python3 {}", script.display()),
        3,
        DEFAULT_TIMEOUT,
    )
    .map_err(|e| format!("external model: {e}"))?;
    let data = uniform_dataset(20, false, 9);
    let x = data.row(3).unwrap().to_vec();
    let ext = local_joint_shapley(external.as_ref(), &data, &x, 3, &Estimation::Exact, None)
        .map_err(|e| e.to_string())?;
    let builtin = local_joint_shapley(
        &BuiltinModel::Sum(0, 1),
        &data,
        &x,
        3,
        &Estimation::Exact,
        None,
    )
    .unwrap();
    let gap = builtin
        .values
        .iter()
        .map(|(t, v)| (ext.values[t] - v).abs())
        .fold(0.0, f64::max);
    if gap > PROTOCOL_TOLERANCE {
        return Err(format!("external and builtin differ by {gap:e}"));
    }

    // 1004 features, sampled
    let start = Instant::now();
    let n = 1004;
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..32)
        .map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..2u8))).collect())
        .collect();
    let data = Dataset::new((0..n).map(|i| format!("w{i}")).collect(), rows).unwrap();
    let model = BuiltinModel::Linear(weights);
    let targets: Vec<Coalition> = (0..10)
        .map(|i| Coalition::from_agents([i * 100], n).unwrap())
        .collect();
    let cfg = SamplerConfig::new(10_000, 77);
    let x = data.row(0).unwrap().to_vec();
    let first = local_joint_shapley(
        &model,
        &data,
        &x,
        1,
        &Estimation::Sampled(cfg),
        Some(&targets),
    )
    .map_err(|e| e.to_string())?;
    let again = local_joint_shapley(
        &model,
        &data,
        &x,
        1,
        &Estimation::Sampled(cfg),
        Some(&targets),
    )
    .unwrap();
    within(SMOKE_BUDGET, start)?;
    if first.values.values().any(|v| !v.is_finite()) {
        return Err("non-finite estimate at n=1004".into());
    }
    if first
        .values
        .iter()
        .any(|(t, v)| again.values[t].to_bits() != v.to_bits())
    {
        return Err("n=1004 estimates differ between identical runs".into());
    }
    Ok(format!(
        "protocol gap {gap:.1e}; n=1004, 10 targets x 10^4 iterations in {:.2?}, seed-stable",
        start.elapsed()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Table 1 exact reproduction", table1),
        ("coefficient identities", coefficient_identities),
        ("axiom property suite", axioms),
        ("formula equals arrival-process oracle", oracle_equivalence),
        ("sampling convergence", sampling_convergence),
        ("Bernoulli presence-adjusted table", bernoulli_table),
        ("additive decomposition test", decomposition),
        ("uniform-data qualitative patterns", uniform_qualitative),
        (
            "desk-scale substitutes (protocol, n=1004 smoke)",
            desk_scale_substitutes,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let spent = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name} ({spent:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name} ({spent:.2?}): {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
