use cpmes_cleanup::{train, CleanupConfig, Contract, Scenario, TrainConfig};

fn tail_variance(values: &[f64]) -> f64 {
    let tail = &values[values.len() / 2..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64
}

#[test]
fn training_is_seeded() {
    let env = CleanupConfig::default();
    let cfg = TrainConfig { episodes: 40, eval_episodes: 3, ..Default::default() };
    let sc = Scenario { n_harvesters: 5, contract: Contract::new(0.2, 2).unwrap() };
    let a = train(&env, &cfg, sc, 4).unwrap();
    let b = train(&env, &cfg, sc, 4).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.eval, b.eval);
    assert_eq!(a.policies.snapshot(sc), b.policies.snapshot(sc));
    assert!(a.max_abs_q <= a.q_bound);
}

/// Heavy taxes starve harvesters of feedback, so the collective-reward curve
/// stays noisier than under a light tax.
#[test]
fn heavy_tax_curves_are_noisier() {
    let env = CleanupConfig::default();
    let cfg = TrainConfig { episodes: 1000, eval_episodes: 1, ..Default::default() };
    let mut noisier = 0;
    for seed in 0..5 {
        let var = |alpha| {
            let sc = Scenario { n_harvesters: 5, contract: Contract::new(alpha, 5).unwrap() };
            let r = train(&env, &cfg, sc, seed).unwrap();
            tail_variance(&r.curve.iter().map(|c| c.collective_reward).collect::<Vec<_>>())
        };
        let (low, high) = (var(0.05), var(0.9));
        noisier += usize::from(high > low);
    }
    assert!(noisier >= 4, "heavy tax noisier in {noisier}/5 seeds");
}
