use loctask::allocation::{allocate, AgentView, AllocParams, BidRule};
use loctask::math::Vec3;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn views(n_agents: usize, n_tasks: usize) -> impl Strategy<Value = Vec<AgentView>> {
    prop::collection::vec(
        (unit(), prop::collection::vec(0.05..3.0f64, n_tasks), prop::collection::vec(unit(), n_tasks)).prop_map(
            |(boresight, scores, dirs)| AgentView {
                boresight,
                scores,
                directions: dirs.into_iter().map(Some).collect(),
            },
        ),
        n_agents,
    )
}

fn case() -> impl Strategy<Value = (Vec<AgentView>, usize, f64, BidRule)> {
    (1usize..=3, 1usize..=8).prop_flat_map(|(na, nt)| {
        (
            views(na, nt),
            1usize..=4,
            prop_oneof![Just(0.0), 0.01..1.0f64],
            prop_oneof![Just(BidRule::Regret), Just(BidRule::MarginalGain)],
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn rounds_reach_a_conflict_free_fixed_point((views, depth, mu, bid_rule) in case()) {
        let na = views.len();
        let nt = views[0].scores.len();
        let params = AllocParams { depth, mu, bid_rule, ..AllocParams::default() };
        let alloc = allocate(&views, &vec![None; na], &vec![vec![false; nt]; na], &params);
        prop_assert!(alloc.converged, "rounds {}", alloc.rounds);
        let mut owner = vec![None; nt];
        for (i, s) in alloc.states.iter().enumerate() {
            prop_assert!(s.bundle.len() <= depth);
            for w in s.bids.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for &t in &s.bundle {
                prop_assert!(owner[t].is_none());
                owner[t] = Some(i);
            }
        }
        // every task is taken unless every agent's bundle is full
        if alloc.states.iter().any(|s| s.bundle.len() < depth) {
            prop_assert!(owner.iter().all(|o| o.is_some()));
        }
    }
}
