use joint_shapley::sampler::ValueSource;
use joint_shapley::{
    arrival_process_simulate, convergence_trace, joint_shapley_exact, parse_builtin_game,
    sample_joint_shapley, Coalition, GameSource, SamplerConfig,
};

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[test]
fn arrival_simulation_and_sampler_agree() {
    let game = parse_builtin_game("majority:4").unwrap();
    for k in 1..=3 {
        let sim = arrival_process_simulate(&game, k, &SamplerConfig::new(200_000, 10 + k as u64))
            .unwrap();
        let targets: Vec<Coalition> = sim.result.values.keys().cloned().collect();
        let sampled = sample_joint_shapley(
            &GameSource(&game),
            k,
            &targets,
            &SamplerConfig::new(200_000, 20 + k as u64),
        )
        .unwrap();
        let (se_a, se_b) = (
            sim.result.std_errors.as_ref().unwrap(),
            sampled.std_errors.as_ref().unwrap(),
        );
        for t in &targets {
            let gap = (sim.result.values[t] - sampled.values[t]).abs();
            let sigma = (se_a[t].powi(2) + se_b[t].powi(2)).sqrt();
            assert!(
                gap <= 3.0 * sigma + 1e-12,
                "k={k} {t}: gap {gap} vs 3σ {}",
                3.0 * sigma
            );
        }
    }
}

#[test]
fn standard_error_shrinks_like_inverse_square_root() {
    let game = parse_builtin_game("majority:3").unwrap();
    let targets: Vec<Coalition> = joint_shapley_exact(&game, 2)
        .unwrap()
        .values
        .keys()
        .cloned()
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for iters in [100u64, 1_000, 10_000, 100_000] {
        let r = sample_joint_shapley(
            &GameSource(&game),
            2,
            &targets,
            &SamplerConfig::new(iters, 9),
        )
        .unwrap();
        let se = r.std_errors.unwrap();
        let mean_se = se.values().sum::<f64>() / se.len() as f64;
        xs.push((iters as f64).ln());
        ys.push(mean_se.ln());
    }
    let s = slope(&xs, &ys);
    assert!((s + 0.5).abs() <= 0.1, "slope {s}");
}

#[test]
fn trace_distance_trends_down() {
    let game = parse_builtin_game("linear_crosses:5:c=2").unwrap();
    let exact = joint_shapley_exact(&game, 2).unwrap();
    let targets: Vec<Coalition> = exact.values.keys().cloned().collect();
    let cfg = SamplerConfig::new(64_000, 4).with_batch(1_000);
    let trace = convergence_trace(&GameSource(&game), 2, &targets, &cfg, Some(&exact)).unwrap();
    let iters: Vec<f64> = trace
        .checkpoints
        .iter()
        .map(|c| (c.iteration as f64).ln())
        .collect();
    let l2: Vec<f64> = trace.l2_series().iter().map(|d| d.ln()).collect();
    assert!(slope(&iters, &l2) < -0.2);
    assert!(trace
        .checkpoints
        .windows(2)
        .all(|w| w[0].iteration < w[1].iteration));
}

#[test]
fn wide_sparse_source() {
    // 200 agents, worth = number of agents from the first ten present
    struct Count;
    impl ValueSource for Count {
        fn n(&self) -> usize {
            200
        }
        fn marginal(
            &self,
            with: &Coalition,
            without: &Coalition,
            _rng: &mut joint_shapley::sampler::SamplerRng,
        ) -> joint_shapley::Result<f64> {
            let count = |s: &Coalition| s.agents().filter(|&a| a < 10).count() as f64;
            Ok(count(with) - count(without))
        }
    }
    let targets: Vec<Coalition> = (0..12)
        .map(|i| Coalition::from_agents([i * 15], 200).unwrap())
        .collect();
    let r = sample_joint_shapley(&Count, 1, &targets, &SamplerConfig::new(2_000, 1)).unwrap();
    // additive game: each relevant agent gets exactly its own worth
    for t in &targets {
        let want = if t.agents().next().unwrap() < 10 {
            1.0
        } else {
            0.0
        };
        assert!((r.values[t] - want).abs() < 1e-9, "{t}");
    }
}
