// SPDX-License-Identifier: Apache-2.0

//! Properties of action selection, tabular learning, environments and the
//! buffer schedule.

use proptest::prelude::*;
use qaccel::datapath::{perceptron_fixed_cycles, simulate_schedule, throughput_kqps, Arch, Buffer, CycleModel};
use qaccel::environments::{EnvSpec, Environment};
use qaccel::neural::{BackendKind, Topology};
use qaccel::qlearning::{
    epsilon_greedy, greedy_action, q_error, tabular_sweep, value_iteration, Hyperparams, QTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

#[test]
fn full_exploration_is_uniform() {
    const DRAWS: usize = 100_000;
    let actions = 9;
    // Strongly peaked values, so any greedy leak would show.
    let q: Vec<f64> = (0..actions).map(|a| if a == 3 { 1.0 } else { 0.0 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC41);
    let mut counts = vec![0usize; actions];
    for _ in 0..DRAWS {
        counts[epsilon_greedy(&q, 1.0, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / actions as f64;
    let mean = DRAWS as f64 * p;
    let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    for (a, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "action {a}: {c} draws");
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    // 99.9th percentile of chi-square with 8 degrees of freedom.
    assert!(chi2 < 26.12, "chi-square {chi2}");
}

#[test]
fn no_exploration_is_greedy() {
    let q = [0.1, 0.7, 0.7, -1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        assert_eq!(epsilon_greedy(&q, 0.0, &mut rng).unwrap(), 1);
    }
}

fn random_spec() -> impl Strategy<Value = EnvSpec> {
    (1usize..=4, 1usize..=3, 6usize..=16, 2usize..=40, any::<u64>(), 0.0f64..0.95).prop_map(
        |(state_dim, action_dim, actions_per_state, state_space_size, seed, gamma_cap)| EnvSpec {
            state_dim,
            action_dim,
            actions_per_state,
            state_space_size,
            gamma_cap,
            seed,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_ignores_constant_shift(
        raw in prop::collection::vec(-1024i32..=1024, 1..50),
        shift in -4096i32..=4096,
    ) {
        // Multiples of 2^-10 keep the shifted values exact.
        let q: Vec<f64> = raw.iter().map(|&v| v as f64 / 1024.0).collect();
        let shifted: Vec<f64> = q.iter().map(|v| v + shift as f64 / 1024.0).collect();
        prop_assert_eq!(greedy_action(&q).unwrap(), greedy_action(&shifted).unwrap());
    }

    #[test]
    fn q_error_sign_follows_target(
        r in 0.0f64..0.1, next in 0.0f64..1.0, cur in 0.0f64..1.0,
        alpha in 0.01f64..=1.0, gamma in 0.0f64..1.0,
    ) {
        let e = q_error(r, next, cur, alpha, gamma, false);
        let target = r + gamma * next;
        prop_assert_eq!(e > 0.0, target > cur);
        prop_assert_eq!(e < 0.0, target < cur);
    }

    #[test]
    fn tabular_sweeps_contract(spec in random_spec(), init_seed in any::<u64>()) {
        let env = match Environment::grid(spec) {
            Ok(e) => e,
            Err(_) => return Err(TestCaseError::reject("infeasible spec")),
        };
        let gamma = spec.gamma_cap;
        let oracle = value_iteration(&env, gamma, 1e-13).unwrap();
        let hyper = Hyperparams::new(1.0, gamma, 0.2, 0.1).unwrap();
        let mut table = QTable::zeros(env.num_states(), env.actions_per_state());
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        for s in env.non_terminal_states() {
            for a in 0..env.actions_per_state() {
                table.set(s, a, rng.gen_range(0.0..1.0)).unwrap();
            }
        }
        let mut dist = table.max_abs_diff(&oracle);
        for _ in 0..30 {
            tabular_sweep(&mut table, &env, &hyper).unwrap();
            let d = table.max_abs_diff(&oracle);
            prop_assert!(d <= dist + 1e-10, "distance rose from {} to {}", dist, d);
            dist = d;
        }
    }

    #[test]
    fn grid_is_a_pure_function_of_spec(spec in random_spec()) {
        let a = Environment::grid(spec);
        let b = Environment::grid(spec);
        prop_assert_eq!(&a, &b);
        if let Ok(env) = a {
            let cap = 1.0 - spec.gamma_cap;
            for s in env.non_terminal_states() {
                for act in 0..env.actions_per_state() {
                    let st = env.step(s, act).unwrap();
                    prop_assert!(st.reward >= 0.0 && st.reward <= cap + 1e-15);
                    let input = env.encode_input(s, act).unwrap();
                    prop_assert_eq!(input.len(), spec.input_width());
                    prop_assert!(input.iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }

    #[test]
    fn schedule_conserves_buffer_entries(
        actions in 1usize..64,
        hidden in prop::collection::vec(1usize..6, 0..2),
        arch_fixed in any::<bool>(),
    ) {
        let (topo, arch) = if hidden.is_empty() {
            (Topology::perceptron(6), Arch::Perceptron)
        } else {
            (Topology::mlp(6, hidden), Arch::Mlp)
        };
        let backend = if arch_fixed { BackendKind::Fixed } else { BackendKind::Float };
        let model = CycleModel::new(arch, backend);
        let trace = simulate_schedule(&model, &topo, actions);
        prop_assert!(trace.validate().is_ok());
        for buf in [Buffer::Current, Buffer::Next] {
            let st = trace.stats(buf);
            prop_assert_eq!(st.pushes, st.pops);
            prop_assert_eq!(st.final_occupancy, 0);
            prop_assert_eq!(st.peak, actions);
            prop_assert_eq!(trace.pop_order(buf), trace.push_order(buf));
        }
        prop_assert_eq!(trace.total_cycles, model.cycles(&topo, actions as u64));
    }
}

#[test]
fn simple_preset_encoding_is_injective() {
    let env = Environment::grid(EnvSpec::simple()).unwrap();
    let mut states = HashSet::new();
    let mut seen = HashSet::new();
    for s in 0..env.num_states() {
        let key: Vec<u64> = env.state_features(s).iter().map(|v| v.to_bits()).collect();
        assert!(states.insert(key), "state {s} collides");
        for a in 0..env.actions_per_state() {
            let key: Vec<u64> = env.encode_input(s, a).unwrap().iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "({s}, {a}) collides");
        }
    }
    assert_eq!(seen.len(), 36 * 9);
}

#[test]
fn complex_preset_state_encoding_is_injective() {
    let env = Environment::grid(EnvSpec::complex()).unwrap();
    assert_eq!(env.input_width(), 20);
    let states: HashSet<Vec<u64>> = (0..env.num_states())
        .map(|s| env.state_features(s).iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(states.len(), 1800);
    let actions: HashSet<Vec<u64>> = (0..env.actions_per_state())
        .map(|a| env.action_features(a).iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(actions.len(), 40);
}

#[test]
fn throughput_strictly_decreases_in_actions() {
    let mut prev = f64::INFINITY;
    for a in 1..200 {
        let t = throughput_kqps(perceptron_fixed_cycles(a), 150e6);
        assert!(t < prev);
        prev = t;
    }
}
