use pcqr_core::forest::ForestConfig;
use pcqr_core::inverse::TargetInterval;
use pcqr_core::monitor::{build_monitor, fit_timestep, monitor_episode, AlarmMode};
use pcqr_core::sim::{
    generate_dataset, simulate_skirmish_from, DomainConfig, SkirmishConfig, SkirmishStart,
    TamariskConfig, NOISE_HALF_WIDTH,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forest(seed: u64) -> ForestConfig {
    ForestConfig {
        tree_count: 40,
        seed,
        ..ForestConfig::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn massive_reinforcement_lowers_success_probability() {
    let config = SkirmishConfig::default();
    let episodes = generate_dataset(&DomainConfig::Skirmish(config.clone()), 900, 11).unwrap();
    let (train, cal) = episodes.split_at(600);
    let suite = build_monitor(train, cal, &forest(3)).unwrap();
    let good = median(train.iter().map(|e| e.final_return()).collect());
    let target = TargetInterval::new(good, f64::INFINITY).unwrap();
    let step = config.reinforcement_step;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut before, mut after) = (0.0, 0.0);
    for id in 0..100 {
        let start = SkirmishStart {
            blue: 12,
            red: 7,
            reinforcement: config.reinforcement_cap.1,
        };
        let ep = simulate_skirmish_from(&config, start, &mut rng);
        let out =
            monitor_episode(&suite, id, ep.observations(), target, 0.0, AlarmMode::EveryStep).unwrap();
        let p = |range: std::ops::Range<usize>| {
            range.clone().map(|t| out.bounds[t].1.p_lower).sum::<f64>() / range.len() as f64
        };
        before += p(step - 4..step);
        after += p(step..step + 4);
    }
    let (before, after) = (before / 100.0, after / 100.0);
    assert!(after < before - 0.05, "before {before} after {after}");
}

#[test]
fn final_step_distribution_concentrates_on_the_last_reward() {
    let domain = DomainConfig::Tamarisk(TamariskConfig::default());
    let episodes = generate_dataset(&domain, 1200, 5).unwrap();
    let (train, test) = episodes.split_at(1000);
    let t = domain.horizon() - 1;
    let model = fit_timestep(train, t, &forest(9)).unwrap();
    let band = 2.0 * NOISE_HALF_WIDTH + 1e-9;
    let mut masses = Vec::new();
    for ep in test {
        let y = ep.reward_to_go(t);
        let cond = model.conditional(&ep.features()[t]).unwrap();
        let mut prev = 0.0;
        let mut mass = 0.0;
        for (v, c) in cond.values().iter().zip(cond.cumulative()) {
            if (v - y).abs() <= band {
                mass += c - prev;
            }
            prev = *c;
        }
        masses.push(mass);
    }
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    let mostly = masses.iter().filter(|&&m| m >= 0.5).count() as f64 / masses.len() as f64;
    assert!(mean > 0.9, "mean in-band mass {mean}");
    assert!(mostly > 0.95, "share of concentrated episodes {mostly}");
}
