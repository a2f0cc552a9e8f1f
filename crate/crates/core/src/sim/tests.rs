use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn quiet_tamarisk() -> TamariskConfig {
    TamariskConfig {
        invasion_prob: 0.0,
        death_prob: 0.0,
        seed_spread_prob: 0.0,
        ..TamariskConfig::default()
    }
}

#[test]
fn episode_prefix_sums_are_exact() {
    let ep = Episode::new(vec![vec![0.0]; 4], vec![0.1, 0.2, -0.7, 1e-6]).unwrap();
    let b = ep.cumulative();
    assert_eq!(b.len(), 5);
    assert_eq!(b[0], 0.0);
    for t in 0..4 {
        assert_eq!(b[t + 1], b[t] + ep.rewards()[t]);
    }
    assert_eq!(ep.final_return(), b[4]);
    assert_eq!(ep.reward_to_go(0), b[4]);
}

#[test]
fn episode_rejects_malformed_input() {
    assert!(Episode::new(vec![], vec![]).is_err());
    assert!(Episode::new(vec![vec![0.0]], vec![1.0, 2.0]).is_err());
    assert!(Episode::new(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
    assert!(Episode::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
}

#[test]
fn all_native_is_absorbing() {
    let config = quiet_tamarisk();
    let ep = simulate_tamarisk_from(&config, [EdgeState::Native; EDGE_COUNT], &mut rng(3));
    assert_eq!(ep.horizon(), 50);
    assert!(ep.rewards()[..49].iter().all(|&r| r == 0.0));
    assert!(ep.final_return().abs() <= 5e-6);
    assert_eq!(
        greedy_policy(&config, &[EdgeState::Native; EDGE_COUNT]),
        [Action::Nothing; EDGE_COUNT]
    );
}

#[test]
fn all_tamarisk_cleared_in_one_step_when_affordable() {
    let mut config = quiet_tamarisk();
    config.costs.eradicate_and_plant = 0.4;
    config.noise_half_width = 0.0;
    let ep = simulate_tamarisk_from(&config, [EdgeState::Tamarisk; EDGE_COUNT], &mut rng(0));
    // 7 × 0.4 for treatment plus 7 × 1.0 for occupancy.
    assert!((ep.rewards()[0] + 9.8).abs() < 1e-12);
    assert!(ep.rewards()[1..].iter().all(|&r| r == 0.0));
    assert!((ep.final_return() + 9.8).abs() < 1e-12);
    assert!(ep.features()[1][..EDGE_COUNT].iter().all(|&c| c == 1.0));
}

#[test]
fn greedy_policy_prefers_headwaters_and_respects_budget() {
    let config = TamariskConfig::default();
    let state = [EdgeState::Tamarisk; EDGE_COUNT];
    let a = greedy_policy(&config, &state);
    // 1.4 + 1.4 leaves 0.2, which buys nothing else.
    assert_eq!(a[6], Action::EradicateAndPlant);
    assert_eq!(a[5], Action::EradicateAndPlant);
    assert!(a[..5].iter().all(|&x| x == Action::Nothing));

    let mut state = [EdgeState::Native; EDGE_COUNT];
    state[0] = EdgeState::Tamarisk;
    state[2] = EdgeState::Empty;
    state[4] = EdgeState::Empty;
    let a = greedy_policy(&config, &state);
    assert_eq!(a[0], Action::EradicateAndPlant);
    assert_eq!(a[4], Action::Plant);
    assert_eq!(a[2], Action::Nothing);
}

#[test]
fn tamarisk_rewards_nonpositive_and_budget_feasible() {
    let config = TamariskConfig {
        noise_half_width: 0.0,
        ..TamariskConfig::default()
    };
    let mut r = rng(11);
    for _ in 0..200 {
        let ep = sample_tamarisk_episode(&config, &mut r);
        for (x, &reward) in ep.features().iter().zip(ep.rewards()) {
            assert!(reward <= 0.0);
            let mut state = [EdgeState::Empty; EDGE_COUNT];
            for (s, &c) in state.iter_mut().zip(x) {
                *s = match c as u8 {
                    0 => EdgeState::Empty,
                    1 => EdgeState::Native,
                    _ => EdgeState::Tamarisk,
                };
            }
            let spent: f64 = greedy_policy(&config, &state)
                .iter()
                .map(|&a| config.costs.of(a))
                .sum();
            assert!(spent <= config.budget + 1e-9);
        }
    }
}

#[test]
fn noise_is_bounded_and_shares_the_stream() {
    let noisy = DomainConfig::Tamarisk(TamariskConfig::default());
    let clean = DomainConfig::Tamarisk(TamariskConfig {
        noise_half_width: 0.0,
        ..TamariskConfig::default()
    });
    let a = generate_dataset(&noisy, 300, 5).unwrap();
    let b = generate_dataset(&clean, 300, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.features(), y.features());
        assert!((x.final_return() - y.final_return()).abs() <= 5e-6 + 1e-9);
    }
}

#[test]
fn skirmish_without_kills_is_flat() {
    let config = SkirmishConfig {
        blue_kill_prob: 0.0,
        red_kill_prob: 0.0,
        ..SkirmishConfig::default()
    };
    let ep = sample_skirmish_episode(&config, &mut rng(1));
    assert_eq!(ep.horizon(), 57);
    assert!(ep.rewards()[..56].iter().all(|&r| r == 0.0));
    assert!(ep.final_return().abs() <= 5e-6);
}

#[test]
fn skirmish_reinforcement_arrives_once() {
    let config = SkirmishConfig {
        blue_kill_prob: 0.0,
        red_kill_prob: 0.0,
        ..SkirmishConfig::default()
    };
    let start = SkirmishStart {
        blue: 10,
        red: 6,
        reinforcement: 9,
    };
    let ep = simulate_skirmish_from(&config, start, &mut rng(2));
    let red: Vec<f64> = ep.features().iter().map(|x| x[1]).collect();
    let jumps: Vec<usize> = (1..red.len()).filter(|&t| red[t] != red[t - 1]).collect();
    assert_eq!(jumps, vec![14]);
    assert_eq!(red[14] - red[13], 9.0);
    assert!(ep.features().iter().all(|x| (x[4] == 1.0) == (x[2] >= 14.0)));
}

#[test]
fn skirmish_rewards_match_unit_bookkeeping() {
    use rand::Rng;
    let config = SkirmishConfig {
        noise_half_width: 0.0,
        ..SkirmishConfig::default()
    };
    let mut r = rng(9);
    for _ in 0..200 {
        let start = SkirmishStart {
            blue: r.gen_range(5..=20),
            red: r.gen_range(5..=10),
            reinforcement: r.gen_range(0..=15),
        };
        let ep = simulate_skirmish_from(&config, start, &mut r);
        let x = ep.features();
        let (mut red_killed, mut blue_killed) = (0.0, 0.0);
        for t in 0..ep.horizon() - 1 {
            let arrival = if t + 1 == 14 { start.reinforcement as f64 } else { 0.0 };
            let red_lost = x[t][1] - (x[t + 1][1] - arrival);
            let blue_lost = x[t][0] - x[t + 1][0];
            assert!(red_lost >= 0.0 && blue_lost >= 0.0);
            assert_eq!(ep.rewards()[t], red_lost - blue_lost);
            red_killed += red_lost;
            blue_killed += blue_lost;
        }
        let last = ep.horizon() - 1;
        let total = red_killed - blue_killed + ep.rewards()[last];
        assert_eq!(ep.cumulative()[last] + ep.rewards()[last], total);
        assert_eq!(ep.final_return(), total);
    }
}

#[test]
fn dataset_is_deterministic() {
    let d = DomainConfig::Skirmish(SkirmishConfig::default());
    assert_eq!(generate_dataset(&d, 1, 4).unwrap().len(), 1);
    let a = generate_dataset(&d, 50, 4).unwrap();
    assert_eq!(a, generate_dataset(&d, 50, 4).unwrap());
    assert_ne!(a, generate_dataset(&d, 50, 5).unwrap());
    assert!(generate_dataset(&d, 0, 4).is_err());
}

#[test]
fn final_returns_are_distinct() {
    let d = DomainConfig::Tamarisk(TamariskConfig::default());
    let mut finals: Vec<f64> = generate_dataset(&d, 2000, 8)
        .unwrap()
        .iter()
        .map(Episode::final_return)
        .collect();
    finals.sort_by(f64::total_cmp);
    assert!(finals.windows(2).all(|w| w[0] < w[1]));
}
