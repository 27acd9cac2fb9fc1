use curious_core::dp::{
    bellman_value, exact_value, exact_visitation, exploitative_factor, max_visitation_of_set,
    max_visitation_of_set_with_policy, value_iteration_default,
};
use curious_core::envs::random_mdp;
use curious_core::explorer::{intrinsic_mdp, mixture_reset};
use curious_core::{stream_rng, DiscountFactor, SimRng, StateDistribution, StateSet, StochasticPolicy, TabularMdp};
use rand::Rng;

fn gamma(g: f64) -> DiscountFactor {
    DiscountFactor::new(g).unwrap()
}

fn random_set(n: usize, rng: &mut SimRng) -> StateSet {
    StateSet::from_mask((0..n).map(|_| rng.random::<bool>()).collect())
}

fn random_case(rng: &mut SimRng) -> (TabularMdp, StochasticPolicy, StateDistribution) {
    let ns = rng.random_range(2..=8);
    let na = rng.random_range(1..=4);
    let mdp = random_mdp(ns, na, rng).unwrap();
    let pi = StochasticPolicy::random(ns, na, rng);
    let mu = StateDistribution::random(ns, rng);
    (mdp, pi, mu)
}

#[test]
fn visitation_sums_to_one_and_value_routes_agree() {
    let mut rng = stream_rng(21, 0);
    for _ in 0..100 {
        let (mdp, pi, mu) = random_case(&mut rng);
        for g in [0.0, 0.5, 0.9, 0.99] {
            let d = exact_visitation(&mdp, &pi, &mu, gamma(g)).unwrap();
            let total: f64 = d.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            let v1 = exact_value(&mdp, &pi, &mu, gamma(g)).unwrap();
            let v2 = bellman_value(&mdp, &pi, &mu, gamma(g)).unwrap();
            assert!((v1 - v2).abs() < 1e-10, "{v1} vs {v2}");
            assert!((-1e-12..=1.0 + 1e-12).contains(&v1));
        }
    }
}

#[test]
fn visitation_is_linear_in_the_start_distribution() {
    let g = gamma(0.95);
    let mut rng = stream_rng(22, 0);
    for _ in 0..50 {
        let (mdp, pi, mu) = random_case(&mut rng);
        let n = mdp.num_states();
        let d = exact_visitation(&mdp, &pi, &mu, g).unwrap();
        let mut conv = vec![0.0; n];
        for s in 0..n {
            let ds = exact_visitation(&mdp, &pi, &StateDistribution::point_mass(n, s), g).unwrap();
            for (c, p) in conv.iter_mut().zip(ds.probs()) {
                *c += mu.prob(s) * p;
            }
        }
        for (s, c) in conv.iter().enumerate() {
            assert!((d.prob(s) - c).abs() < 1e-10);
        }
    }
}

#[test]
fn visitation_ignores_rewards_bit_for_bit() {
    let g = gamma(0.95);
    let mut rng = stream_rng(23, 0);
    for _ in 0..50 {
        let (mdp, pi, mu) = random_case(&mut rng);
        let k = random_set(mdp.num_states(), &mut rng);
        let a = exact_visitation(&mdp, &pi, &mu, g).unwrap();
        let b = exact_visitation(&intrinsic_mdp(&mdp, &k), &pi, &mu, g).unwrap();
        assert_eq!(a.probs(), b.probs());
    }
}

#[test]
fn intrinsic_value_is_visitation_mass_on_the_set() {
    let g = gamma(0.95);
    let mut rng = stream_rng(24, 0);
    for _ in 0..50 {
        let (mdp, pi, mu) = random_case(&mut rng);
        let k = random_set(mdp.num_states(), &mut rng);
        let v = exact_value(&intrinsic_mdp(&mdp, &k), &pi, &mu, g).unwrap();
        let d = exact_visitation(&mdp, &pi, &mu, g).unwrap();
        assert!((v - d.mass_on(k.iter())).abs() < 1e-10);
    }
}

#[test]
fn greedy_policy_beats_random_policies() {
    let g = gamma(0.95);
    let mut rng = stream_rng(25, 0);
    for _ in 0..10 {
        let mdp = random_mdp(6, 3, &mut rng).unwrap();
        let rho = StateDistribution::point_mass(6, 0);
        let sol = value_iteration_default(&mdp, g).unwrap();
        let best = exact_value(&mdp, &sol.optimal_policy, &rho, g).unwrap();
        assert!((best - sol.optimal_values.get(0)).abs() < 1e-9);
        for _ in 0..100 {
            let pi = StochasticPolicy::random(6, 3, &mut rng);
            assert!(exact_value(&mdp, &pi, &rho, g).unwrap() <= best + 1e-10);
        }
    }
}

#[test]
fn set_visitation_agrees_with_the_greedy_policy_visitation() {
    let g = gamma(0.95);
    let mut rng = stream_rng(26, 0);
    for _ in 0..30 {
        let (mdp, _, mu) = random_case(&mut rng);
        let k = random_set(mdp.num_states(), &mut rng);
        let sv = max_visitation_of_set_with_policy(&mdp, &k, &mu, g).unwrap();
        let vi = value_iteration_default(&intrinsic_mdp(&mdp, &k), g).unwrap();
        let via_values = vi.optimal_values.expectation(mu.probs());
        assert!((sv.value - via_values).abs() < 1e-8);
        let full = max_visitation_of_set(&mdp, &StateSet::full(mdp.num_states()), &mu, g).unwrap();
        assert!((full - 1.0).abs() < 1e-10);
    }
}

#[test]
fn exploitative_factor_lies_between_one_and_state_count() {
    let g = gamma(0.95);
    let mut rng = stream_rng(27, 0);
    for _ in 0..20 {
        let (mdp, _, _) = random_case(&mut rng);
        let e = exploitative_factor(&mdp, g).unwrap();
        assert!(e >= 1.0 - 1e-10 && e <= mdp.num_states() as f64 + 1e-10, "{e}");
    }
}

/// `mu_0 = delta_{s0}`, `mu_{k+1} = 1/2 d^{pi_k}_{mu_k} + 1/2 delta_{s0}`.
fn spread_chain(mdp: &TabularMdp, g: DiscountFactor, levels: usize, rng: &mut SimRng) -> StateDistribution {
    let n = mdp.num_states();
    let s0 = StateDistribution::point_mass(n, 0);
    let mut mu = s0.clone();
    for _ in 0..levels {
        let pi = StochasticPolicy::random(n, mdp.num_actions(), rng);
        let d = exact_visitation(mdp, &pi, &mu, g).unwrap();
        mu = mixture_reset(&d, &s0).unwrap();
    }
    mu
}

#[test]
fn spread_resets_stay_below_single_state_maxima() {
    let g = gamma(0.95);
    let mut rng = stream_rng(28, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let ns = rng.random_range(5..=8);
        let mdp = random_mdp(ns, 3, &mut rng).unwrap();
        let s0 = StateDistribution::point_mass(ns, 0);
        let caps: Vec<f64> = (0..ns)
            .map(|s| max_visitation_of_set(&mdp, &StateSet::from_indices(ns, [s]), &s0, g).unwrap())
            .collect();
        let levels = rng.random_range(1..=3);
        let mu = spread_chain(&mdp, g, levels, &mut rng);
        for _ in 0..20 {
            let pi = StochasticPolicy::random(ns, 3, &mut rng);
            let d = exact_visitation(&mdp, &pi, &mu, g).unwrap();
            for (s, cap) in caps.iter().enumerate() {
                worst = worst.max(d.prob(s) - cap);
            }
        }
    }
    assert!(worst <= 1e-8, "largest excess {worst}");
}
