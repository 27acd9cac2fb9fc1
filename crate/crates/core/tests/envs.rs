use curious_core::dp::{exact_value, exact_visitation, value_iteration_default};
use curious_core::envs::{build_cct, build_dcl, dcl_good_actions, CctSpec, DclLayout, DclSpec, CCT_FORWARD};
use curious_core::sampling::sample_episode;
use curious_core::{stream_rng, DiscountFactor, StateDistribution, StochasticPolicy, TabularMdp};

fn gamma(g: f64) -> DiscountFactor {
    DiscountFactor::new(g).unwrap()
}

fn start_of(mdp: &TabularMdp) -> StateDistribution {
    StateDistribution::new(mdp.start().to_vec()).unwrap()
}

#[test]
fn cct_shape_and_reward() {
    let mdp = build_cct(&CctSpec::new(5)).unwrap();
    assert_eq!((mdp.num_states(), mdp.num_actions()), (6, 4));
    let ones = (0..6)
        .flat_map(|s| (0..4).map(move |a| (s, a)))
        .filter(|&(s, a)| mdp.reward(s, a) == 1.0)
        .count();
    assert_eq!(ones, 1);
    assert!(mdp.validate().is_ok());
}

#[test]
fn cct_forward_episode_collects_the_reward() {
    let mdp = build_cct(&CctSpec::new(5)).unwrap();
    let pi = StochasticPolicy::deterministic(&[CCT_FORWARD; 6], 4);
    let ep = sample_episode(&mdp, &pi, &start_of(&mdp), 1000, &mut stream_rng(0, 0));
    assert_eq!(ep.len(), 5);
    assert!(ep.terminated);
    assert_eq!(ep.total_reward(), 1.0);
}

#[test]
fn cct_optimal_policy_walks_forward() {
    let g = gamma(0.95);
    for d in [1, 3, 5, 10] {
        let mdp = build_cct(&CctSpec::new(d)).unwrap();
        let sol = value_iteration_default(&mdp, g).unwrap();
        for s in 0..d {
            assert_eq!(sol.optimal_policy.greedy_action(s), Some(CCT_FORWARD));
        }
        let closed = 0.05 * 0.95f64.powi(d as i32 - 1);
        assert!((sol.optimal_values.get(0) - closed).abs() < 1e-10);
        let forward = StochasticPolicy::deterministic(&vec![CCT_FORWARD; d + 1], 4);
        let v = exact_value(&mdp, &forward, &start_of(&mdp), g).unwrap();
        assert!((v - closed).abs() < 1e-12);
    }
}

#[test]
fn cct_all_back_never_reaches_the_terminal() {
    let mdp = build_cct(&CctSpec::new(5)).unwrap();
    let back = StochasticPolicy::deterministic(&[1; 6], 4);
    let d = exact_visitation(&mdp, &back, &start_of(&mdp), gamma(0.95)).unwrap();
    assert_eq!(d.prob(5), 0.0);
}

#[test]
fn dcl_shape_and_constant_episode_length() {
    for d in [1, 5, 10] {
        let mdp = build_dcl(&DclSpec::new(d)).unwrap();
        assert_eq!(mdp.num_states(), 3 * d + 4);
        assert!(mdp.validate().is_ok());
        let mut rng = stream_rng(1, d as u64);
        for _ in 0..20 {
            let pi = StochasticPolicy::random(mdp.num_states(), 4, &mut rng);
            for _ in 0..50 {
                let ep = sample_episode(&mdp, &pi, &start_of(&mdp), 10_000, &mut rng);
                assert_eq!(ep.len(), d + 1);
                assert!(ep.terminated);
            }
        }
    }
}

#[test]
fn dcl_good_action_counts() {
    let spec = DclSpec::new(10);
    let layout = DclLayout::new(10);
    let good = dcl_good_actions(&spec);
    for s in layout.good_path_states() {
        assert_eq!(good[s].len(), 2);
    }
    for s in layout.locked_states() {
        assert!(good[s].is_empty());
    }
    let fixed = dcl_good_actions(&DclSpec {
        fixed_good_actions: true,
        ..spec
    });
    assert!(layout.good_path_states().iter().all(|&s| fixed[s] == vec![0, 1]));
}

#[test]
fn dcl_optimal_policy_avoids_the_lock() {
    let g = gamma(0.95);
    let mdp = build_dcl(&DclSpec::new(5)).unwrap();
    let layout = DclLayout::new(5);
    let sol = value_iteration_default(&mdp, g).unwrap();
    assert!(sol.optimal_values.get(layout.start()) > 0.0);
    let d = exact_visitation(&mdp, &sol.optimal_policy, &start_of(&mdp), g).unwrap();
    assert_eq!(d.mass_on(layout.locked_states()), 0.0);
    assert_eq!(d.prob(layout.locked_end()), 0.0);
}

#[test]
fn dcl_locked_states_always_end_locked() {
    let mdp = build_dcl(&DclSpec::new(5)).unwrap();
    let layout = DclLayout::new(5);
    let mut rng = stream_rng(2, 0);
    for start in layout.locked_states() {
        let from = StateDistribution::point_mass(mdp.num_states(), start);
        for _ in 0..5 {
            let pi = StochasticPolicy::random(mdp.num_states(), 4, &mut rng);
            for _ in 0..20 {
                let ep = sample_episode(&mdp, &pi, &from, 100, &mut rng);
                assert_eq!(ep.final_state, layout.locked_end());
                assert_eq!(ep.total_reward(), 0.0);
            }
        }
    }
}

#[test]
fn dcl_uniform_reward_probability_is_half_to_the_depth_plus_one() {
    // Exact check: the expected undiscounted return of the uniform policy
    // equals the probability of a nonzero return, since rewards are 0/1 and
    // at most one is collected.
    for d in [1, 3, 5] {
        let mdp = build_dcl(&DclSpec::new(d)).unwrap();
        let pi = StochasticPolicy::uniform(mdp.num_states(), 4);
        let p = curious_core::dp::expected_total_reward(&mdp, &pi, &start_of(&mdp)).unwrap();
        assert!((p - 0.5f64.powi(d as i32 + 1)).abs() < 1e-12, "d={d}: {p}");
    }
}

#[test]
fn builders_are_seed_stable() {
    let a = build_dcl(&DclSpec::new(5)).unwrap();
    let b = build_dcl(&DclSpec::new(5)).unwrap();
    assert_eq!(a, b);
    let c = build_dcl(&DclSpec {
        lock_seed: 9,
        ..DclSpec::new(5)
    })
    .unwrap();
    assert_ne!(a, c);
}
