use epic_core::crypto::{GroupBackend, MockBackend};
use epic_core::field::Scalar;
use epic_core::node::NodeId;
use epic_core::protocol::{System, SystemConfig};
use proptest::prelude::*;

fn all_participants(n: u32) -> Vec<NodeId> {
    (1..=n)
        .map(NodeId::meter)
        .chain([NodeId::GATEWAY, NodeId::UTILITY])
        .collect()
}

fn net_sum(sys: &mut System<MockBackend>, n: u32, round: u64) -> Scalar {
    let ctx = sys.begin_round(round).unwrap();
    let b = sys.backend().clone();
    let p = b.params().p;
    let mut acc = Scalar::ZERO;
    for id in all_participants(n) {
        let sched = if id == NodeId::UTILITY {
            sys.utility().schedule()
        } else {
            sys.node(id).unwrap().schedule()
        };
        acc = p.add(acc, sched.net_mask(&b, ctx.day, ctx.slot).unwrap());
    }
    acc
}

#[test]
fn five_node_brute_force_cancellation() {
    let cfg = SystemConfig {
        meters: 5,
        lambda: 3,
        gateway_alpha: 1,
        utility_alpha: 2,
        ..SystemConfig::default()
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 55).unwrap();
    let b = sys.backend().clone();
    let p = b.params().p;
    let ctx = sys.begin_round(3).unwrap();
    // Enumerate every ordered pair and add each mask once with each sign.
    let mut total = Scalar::ZERO;
    let mut terms = 0;
    for owner in all_participants(5) {
        let sched = if owner == NodeId::UTILITY {
            sys.utility().schedule()
        } else {
            sys.node(owner).unwrap().schedule()
        };
        for pk in sched.proxies() {
            let s = sched.outgoing_mask(&b, pk, ctx.day, ctx.slot).unwrap();
            total = p.sub(total, s);
            let peer = if pk.peer == NodeId::UTILITY {
                sys.utility().schedule()
            } else {
                sys.node(pk.peer).unwrap().schedule()
            };
            let back = peer.selected_by().iter().find(|q| q.peer == owner).unwrap();
            total = p.add(total, peer.incoming_mask(&b, back, ctx.day, ctx.slot).unwrap());
            terms += 1;
        }
    }
    assert_eq!(terms, 5 * 3 + 1 + 2);
    assert_eq!(total, Scalar::ZERO);
    assert_eq!(net_sum(&mut sys, 5, 3), Scalar::ZERO);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn net_masks_cancel_globally(n in 5u32..=50, lambda in 1usize..=8, seed in any::<u64>(), round in 0u64..94) {
        let cfg = SystemConfig { meters: n, lambda: lambda.min(n as usize + 1), ..SystemConfig::default() };
        let mut sys = System::provision(MockBackend::compat(), cfg, seed).unwrap();
        prop_assume!(!sys.clock().is_closing_global(round));
        prop_assert_eq!(net_sum(&mut sys, n, round), Scalar::ZERO);
    }
}
