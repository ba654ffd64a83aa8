//! Property tests for game invariants under arbitrary action sequences.

use cybertom::env::{reset_with, BlueAction, EnvConfig, RedAction};
use cybertom::graph::{generate_network, Topology};
use proptest::prelude::*;

fn blue_action() -> impl Strategy<Value = BlueAction> {
    prop_oneof![
        Just(BlueAction::DoNothing),
        Just(BlueAction::Scan),
        (0usize..30).prop_map(BlueAction::MakeSafeNode),
        (0usize..30).prop_map(BlueAction::ReduceNodeVulnerability),
        (0usize..30).prop_map(BlueAction::Restore),
        (0usize..30).prop_map(BlueAction::Isolate),
        (0usize..30).prop_map(BlueAction::Reconnect),
    ]
}

fn red_action() -> impl Strategy<Value = RedAction> {
    prop_oneof![
        Just(RedAction::DoNothing),
        (0usize..30).prop_map(RedAction::BasicAttack),
        (0usize..30).prop_map(RedAction::RandomMove),
        (0usize..30).prop_map(RedAction::ZeroDayAttack),
        Just(RedAction::Spread),
        Just(RedAction::Intrude),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn invariants_hold_at_every_step(
        seed in any::<u64>(),
        entries in 1usize..=3,
        actions in prop::collection::vec((blue_action(), red_action()), 1..200),
    ) {
        let net = generate_network(Topology::Tree30, 4).unwrap();
        let config = EnvConfig { entry_count: entries, max_steps: 150, ..EnvConfig::default() };
        let mut state = reset_with(&net, &config, seed).unwrap();
        for (blue, red) in actions {
            if state.done() {
                prop_assert!(state.step(blue, red).is_err());
                break;
            }
            let r = state.step(blue, red).unwrap();
            prop_assert_eq!(r.blue_reward + r.red_reward, 0.0);
            prop_assert!(r.blue_reward <= 0.0);
            for v in 0..net.node_count() {
                prop_assert!(!state.hidden[v] || state.compromised[v]);
                prop_assert!((config.vulnerability_floor..=config.vulnerability_max).contains(&state.vulnerability[v]));
            }
            for [a, b] in state.active_edges() {
                prop_assert!(!state.isolated[a] && !state.isolated[b]);
                prop_assert!(net.has_edge(a, b));
            }
            prop_assert!(state.step <= config.max_steps);
        }
    }

    #[test]
    fn isolate_then_reconnect_restores_the_state(
        seed in any::<u64>(),
        node in 0usize..30,
        prefix in prop::collection::vec((blue_action(), red_action()), 0..40),
    ) {
        let net = generate_network(Topology::Tree30, 4).unwrap();
        let mut state = reset_with(&net, &EnvConfig::default(), seed).unwrap();
        for (blue, red) in prefix {
            if state.done() {
                break;
            }
            state.step(blue, red).unwrap();
        }
        prop_assume!(!state.isolated[node]);
        let before = state.clone();
        state.apply_blue(BlueAction::Isolate(node)).unwrap();
        prop_assert!(state.active_neighbors(node).is_empty());
        state.apply_blue(BlueAction::Reconnect(node)).unwrap();
        prop_assert_eq!(state, before);
    }
}
