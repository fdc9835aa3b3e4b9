use epic_core::crypto::{homomorphic_hash, GroupBackend, MockBackend};
use epic_core::field::Scalar;
use epic_core::keymgmt::{KeyError, ProxyGraph};
use epic_core::node::NodeId;
use epic_core::protocol::{
    AggregationTree, Attack, AttackKind, DetectionPoint, ProtocolError, Report, System, SystemConfig,
    UtilityVerdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn m(i: u32) -> NodeId {
    NodeId::meter(i)
}

fn config(meters: u32, lambda: usize) -> SystemConfig {
    SystemConfig {
        meters,
        lambda,
        ..SystemConfig::default()
    }
}

fn readings(ids: &[NodeId], values: &[u64]) -> BTreeMap<NodeId, u64> {
    ids.iter().copied().zip(values.iter().copied()).collect()
}

fn random_readings(n: u32, max: u64, rng: &mut ChaCha8Rng) -> BTreeMap<NodeId, u64> {
    (1..=n).map(|i| (m(i), rng.gen_range(0..=max))).collect()
}

#[test]
fn no_proxies_means_unmasked_report() {
    let mut sys = System::provision(MockBackend::compat(), config(1, 0), 1).unwrap();
    let tree = AggregationTree::star(&[m(1)]).unwrap();
    let out = sys.run_round(&tree, 0, &readings(&[m(1)], &[42]), None).unwrap();
    let b = MockBackend::compat();
    assert_eq!(out.gateway_report.masked, Scalar(42));
    assert_eq!(out.gateway_report.hashes, vec![homomorphic_hash(&b, &[Scalar(42)]).unwrap()]);
    assert_eq!(out.recovered(), Some(42));
}

#[test]
fn three_meter_ring_sums_to_plaintext() {
    let ids = [m(1), m(2), m(3)];
    let nodes = [m(1), m(2), m(3), NodeId::GATEWAY, NodeId::UTILITY];
    let graph = ProxyGraph::from_edges(&nodes, &[(m(1), m(2)), (m(2), m(3)), (m(3), m(1))]).unwrap();
    let mut sys = System::provision_with_graph(MockBackend::compat(), config(3, 1), graph, 9).unwrap();
    // Meters on separate branches so each masked reading is observable.
    let tree = AggregationTree::star(&ids).unwrap();
    let ctx = sys.begin_round(0).unwrap();
    let b = MockBackend::compat();
    let p = b.params().p;
    let mut sum = Scalar::ZERO;
    let mut reports = Vec::new();
    for (id, r) in ids.iter().zip([5u64, 7, 9]) {
        let step = sys.process_node(*id, &ctx, Some(r), vec![], ctx.ts, None).unwrap();
        assert_ne!(step.report.masked, Scalar(r as u128));
        sum = p.add(sum, step.report.masked);
        reports.push((*id, step.report));
    }
    assert_eq!(sum, Scalar(21));
    let gw = sys.process_node(NodeId::GATEWAY, &ctx, None, reports, ctx.ts, None).unwrap();
    assert_eq!(gw.report.masked, Scalar(21));
    let verdict = sys.finish_round(&tree, &ctx, &gw.report, ctx.ts).unwrap();
    assert!(matches!(verdict, UtilityVerdict::Accepted(r) if r.total == 21));
}

#[test]
fn zero_reading_is_the_net_mask() {
    let mut sys = System::provision(MockBackend::compat(), config(4, 2), 5).unwrap();
    let ctx = sys.begin_round(0).unwrap();
    let expected = sys.node(m(2)).unwrap().schedule().net_mask(sys.backend(), ctx.day, ctx.slot).unwrap();
    let step = sys.process_node(m(2), &ctx, Some(0), vec![], ctx.ts, None).unwrap();
    assert!(!expected.is_zero());
    assert_eq!(step.report.masked, expected);
}

#[test]
fn zero_masks_aggregate_plain_readings() {
    let mut sys = System::provision(MockBackend::compat(), config(3, 0), 2).unwrap();
    let tree = AggregationTree::from_parents([(m(3), NodeId::GATEWAY), (m(1), m(3)), (m(2), m(3))]).unwrap();
    let ctx = sys.begin_round(0).unwrap();
    let r1 = sys.process_node(m(1), &ctx, Some(1), vec![], ctx.ts, None).unwrap().report;
    let r2 = sys.process_node(m(2), &ctx, Some(2), vec![], ctx.ts, None).unwrap().report;
    let parent = sys
        .process_node(m(3), &ctx, Some(3), vec![(m(1), r1), (m(2), r2)], ctx.ts, None)
        .unwrap();
    assert_eq!(parent.report.masked, Scalar(6));
    assert_eq!(parent.report.hashes.len(), 3);
    assert_eq!(tree.subtree_size(m(3)), 3);
}

#[test]
fn random_seven_node_tree_hash_identity() {
    let b = MockBackend::compat();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..10 {
        let mut sys = System::provision(b.clone(), config(7, 3), seed).unwrap();
        let tree = AggregationTree::random(&sys.meters(), &mut rng);
        let rs = random_readings(7, 10_000, &mut rng);
        let out = sys.run_round(&tree, 0, &rs, None).unwrap();
        let g = &out.gateway_report;
        assert_eq!(homomorphic_hash(&b, &[g.masked]).unwrap(), b.hash_sum(&g.hashes));
        assert_eq!(g.hashes.len(), sys.contributors(&tree).len());
        assert_eq!(tree.enumeration(NodeId::GATEWAY).len(), 7);
        assert_eq!(out.recovered(), Some(rs.values().sum()));
    }
}

#[test]
fn hash_list_follows_canonical_enumeration() {
    let cfg = SystemConfig {
        include_infrastructure: false,
        ..config(5, 2)
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 3).unwrap();
    let tree = AggregationTree::from_parents([
        (m(4), NodeId::GATEWAY),
        (m(2), NodeId::GATEWAY),
        (m(5), m(4)),
        (m(1), m(4)),
        (m(3), m(1)),
    ])
    .unwrap();
    let rs = readings(&sys.meters(), &[10, 20, 30, 40, 50]);
    let ctx = sys.round_ctx(0);
    let expected: Vec<NodeId> = vec![m(2), m(4), m(1), m(3), m(5)];
    assert_eq!(tree.enumeration(NodeId::GATEWAY), expected);
    let mut masks = BTreeMap::new();
    sys.begin_round(0).unwrap();
    for &id in &expected {
        masks.insert(id, sys.node(id).unwrap().schedule().net_mask(sys.backend(), ctx.day, ctx.slot).unwrap());
    }
    let out = sys.run_round(&tree, 0, &rs, None).unwrap();
    let b = sys.backend().clone();
    let p = b.params().p;
    for (k, id) in expected.iter().enumerate() {
        let mi = p.add(Scalar(rs[id] as u128), masks[id]);
        assert_eq!(out.gateway_report.hashes[k], homomorphic_hash(&b, &[mi]).unwrap());
    }
}

#[test]
fn gateway_proxy_cancels_meter_mask() {
    let nodes = [m(1), NodeId::GATEWAY, NodeId::UTILITY];
    let graph = ProxyGraph::from_edges(&nodes, &[(m(1), NodeId::GATEWAY)]).unwrap();
    let mut sys = System::provision_with_graph(MockBackend::compat(), config(1, 1), graph, 4).unwrap();
    assert!(sys.gateway_has_masks());
    let tree = AggregationTree::star(&[m(1)]).unwrap();
    let out = sys.run_round(&tree, 0, &readings(&[m(1)], &[17]), None).unwrap();
    assert_eq!(out.gateway_report.masked, Scalar(17));
    assert_eq!(out.gateway_report.hashes.len(), 2);
    assert_eq!(out.recovered(), Some(17));
}

#[test]
fn gateway_without_masks_adds_nothing() {
    let mut sys = System::provision(
        MockBackend::compat(),
        SystemConfig {
            include_infrastructure: false,
            ..config(4, 2)
        },
        8,
    )
    .unwrap();
    assert!(!sys.gateway_has_masks());
    let tree = AggregationTree::star(&sys.meters()).unwrap();
    let ctx = sys.begin_round(0).unwrap();
    let mut kids = Vec::new();
    let p = sys.backend().params().p;
    let mut sum = Scalar::ZERO;
    for id in sys.meters() {
        let r = sys.process_node(id, &ctx, Some(id.0 as u64), vec![], ctx.ts, None).unwrap().report;
        sum = p.add(sum, r.masked);
        kids.push((id, r));
    }
    let gw = sys.process_node(NodeId::GATEWAY, &ctx, None, kids, ctx.ts, None).unwrap();
    assert_eq!(gw.report.masked, sum);
    assert_eq!(gw.report.hashes.len(), tree.meter_count());
}

#[test]
fn utility_and_gateway_masks_cancel_when_they_select_proxies() {
    let cfg = SystemConfig {
        gateway_alpha: 2,
        utility_alpha: 3,
        ..config(10, 3)
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tree = AggregationTree::random(&sys.meters(), &mut rng);
    for round in 0..5 {
        let rs = random_readings(10, 10_000, &mut rng);
        let out = sys.run_round(&tree, round, &rs, None).unwrap();
        assert_eq!(out.recovered(), Some(rs.values().sum()));
    }
}

#[test]
fn five_meters_recover_fifteen() {
    let mut sys = System::provision(MockBackend::compat(), config(5, 2), 11).unwrap();
    let tree = AggregationTree::star(&sys.meters()).unwrap();
    let out = sys.run_round(&tree, 0, &readings(&sys.meters(), &[1, 2, 3, 4, 5]), None).unwrap();
    assert_eq!(out.recovered(), Some(15));
    let zero = sys.run_round(&tree, 1, &readings(&sys.meters(), &[0; 5]), None).unwrap();
    assert_eq!(zero.recovered(), Some(0));
}

#[test]
fn hundred_meters_thirty_topologies() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for topo in 0..30u64 {
        let mut sys = System::provision(MockBackend::compat(), config(100, 8), topo).unwrap();
        let tree = if topo % 3 == 0 {
            AggregationTree::star(&sys.meters()).unwrap()
        } else {
            AggregationTree::random(&sys.meters(), &mut rng)
        };
        let rs = random_readings(100, 1000, &mut rng);
        let out = sys.run_round(&tree, topo, &rs, None).unwrap();
        assert_eq!(out.recovered(), Some(rs.values().sum()), "topology {topo}");
        assert!(out.detections.is_empty());
    }
}

#[test]
fn reading_above_range_is_rejected() {
    let mut sys = System::provision(MockBackend::compat(), config(2, 1), 1).unwrap();
    let ctx = sys.begin_round(0).unwrap();
    let err = sys.process_node(m(1), &ctx, Some(10_001), vec![], ctx.ts, None).unwrap_err();
    assert_eq!(err, ProtocolError::ReadingRange { reading: 10_001, max: 10_000 });
}

#[test]
fn replaying_a_slot_violates_one_time_masks() {
    let mut sys = System::provision(MockBackend::compat(), config(3, 2), 1).unwrap();
    let tree = AggregationTree::star(&sys.meters()).unwrap();
    let rs = readings(&sys.meters(), &[1, 2, 3]);
    sys.run_round(&tree, 0, &rs, None).unwrap();
    let err = sys.run_round(&tree, 0, &rs, None).unwrap_err();
    assert!(matches!(err, ProtocolError::Key(KeyError::OneTimeMaskViolation { day: 1, slot: 1 })));
}

fn chain_tree() -> AggregationTree {
    // gw - 1 - 2 - 3, plus 4 under 1 and 5 under gw
    AggregationTree::from_parents([
        (m(1), NodeId::GATEWAY),
        (m(5), NodeId::GATEWAY),
        (m(2), m(1)),
        (m(4), m(1)),
        (m(3), m(2)),
    ])
    .unwrap()
}

fn run_attack(attack: Attack, round: u64) -> epic_core::protocol::RoundReport<MockBackend> {
    let mut sys = System::provision(MockBackend::compat(), config(5, 2), 31).unwrap();
    let tree = chain_tree();
    let rs = readings(&sys.meters(), &[11, 22, 33, 44, 55]);
    for r in 0..round {
        sys.run_round(&tree, r, &rs, None).unwrap();
    }
    sys.run_round(&tree, round, &rs, Some(&attack)).unwrap()
}

#[test]
fn hash_only_attack_is_caught_by_parent() {
    let out = run_attack(Attack::relay(AttackKind::HashOnly, m(2), m(3)), 0);
    assert_eq!(out.detections[0].point, DetectionPoint::HashCheck);
    assert_eq!(out.detections[0].at, m(1));
    assert_eq!(out.accused.iter().copied().collect::<Vec<_>>(), vec![m(2)]);
}

#[test]
fn reading_only_attack_is_caught_by_parent() {
    let out = run_attack(Attack::relay(AttackKind::ReadingOnly, m(1), m(4)), 0);
    assert_eq!(out.detections[0].point, DetectionPoint::HashCheck);
    assert_eq!(out.detections[0].at, NodeId::GATEWAY);
    assert_eq!(out.accused.iter().copied().collect::<Vec<_>>(), vec![m(1)]);
}

#[test]
fn consistent_modification_is_caught_by_mac_and_identified() {
    let out = run_attack(Attack::relay(AttackKind::Both, m(2), m(3)), 0);
    assert_eq!(out.detections.len(), 1);
    assert_eq!(out.detections[0].point, DetectionPoint::UtilityMac);
    assert!(matches!(out.verdict, UtilityVerdict::MacMismatch { accused: Ok(a) } if a == m(2)));
}

#[test]
fn gateway_attacks_are_attributed_to_gateway() {
    for kind in [AttackKind::HashOnly, AttackKind::ReadingOnly, AttackKind::Both] {
        let out = run_attack(Attack::relay(kind, NodeId::GATEWAY, m(5)), 0);
        assert_eq!(out.accused.iter().copied().collect::<Vec<_>>(), vec![NodeId::GATEWAY], "{kind}");
    }
}

#[test]
fn replay_is_dropped_at_first_hop() {
    let out = run_attack(Attack::link(AttackKind::Replay, m(3)), 1);
    assert_eq!(out.detections[0].point, DetectionPoint::Timestamp);
    assert_eq!(out.detections[0].at, m(2));
    assert!(out.accused.is_empty());
    assert!(matches!(out.verdict, UtilityVerdict::Incomplete { expected: 5, received: 4 }));

    let gw = run_attack(Attack::link(AttackKind::Replay, NodeId::GATEWAY), 1);
    assert_eq!(gw.verdict, UtilityVerdict::Rejected(epic_core::protocol::Rejection::Stale));
}

#[test]
fn tamper_fails_signature_without_accusation() {
    let out = run_attack(Attack::link(AttackKind::Tamper, m(4)), 0);
    assert_eq!(out.detections[0].point, DetectionPoint::Signature);
    assert_eq!(out.detections[0].from, m(4));
    assert!(out.accused.is_empty());
}

#[test]
fn stored_evidence_with_forged_child_signature_is_blamed_on_holder() {
    use epic_core::protocol::{identify_attacker, ChildEvidence, EvidenceSource};
    let mut sys = System::provision(MockBackend::compat(), config(5, 2), 31).unwrap();
    let tree = chain_tree();
    sys.run_round(&tree, 0, &readings(&sys.meters(), &[1, 2, 3, 4, 5]), None).unwrap();

    struct Forged<'a>(&'a System<MockBackend>);
    impl EvidenceSource<MockBackend> for Forged<'_> {
        fn children_evidence(&self, node: NodeId) -> Option<Vec<(NodeId, ChildEvidence<MockBackend>)>> {
            let mut ev = self.0.children_evidence(node)?;
            if node == NodeId::meter(2) {
                ev[0].1.masked = Scalar(ev[0].1.masked.0 ^ 1);
            }
            Some(ev)
        }
        fn own_tuple(&self, node: NodeId) -> Option<ChildEvidence<MockBackend>> {
            self.0.own_tuple(node)
        }
    }
    let b = sys.backend().clone();
    assert_eq!(identify_attacker(&b, sys.utility(), &tree, &Forged(&sys)).unwrap(), m(2));
    assert_eq!(
        identify_attacker(&b, sys.utility(), &tree, &sys).unwrap_err(),
        ProtocolError::InconsistentEvidence
    );
}

#[test]
fn randomized_identification_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100u64 {
        let n = rng.gen_range(2..=30u32);
        let mut sys = System::provision(MockBackend::compat(), config(n, rng.gen_range(0..=4usize).min(n as usize + 1)), trial).unwrap();
        let tree = AggregationTree::random(&sys.meters(), &mut rng);
        let relays = tree.non_leaf_bottom_up();
        let attacker = relays[rng.gen_range(0..relays.len())];
        let kids = tree.children(attacker);
        let target = kids[rng.gen_range(0..kids.len())];
        let kind = [AttackKind::HashOnly, AttackKind::ReadingOnly, AttackKind::Both][rng.gen_range(0..3)];
        let rs = random_readings(n, 10_000, &mut rng);
        let out = sys.run_round(&tree, 0, &rs, Some(&Attack::relay(kind, attacker, target))).unwrap();
        assert_eq!(
            out.accused.iter().copied().collect::<Vec<_>>(),
            vec![attacker],
            "trial {trial}: {kind} by {attacker} on {target}"
        );
    }
}

/// Mutating any single field of any report in transit never yields an
/// accepted round.
#[test]
fn single_field_mutations_are_never_accepted() {
    let b = MockBackend::compat();
    let tree = chain_tree();
    let rs = readings(&(1..=5).map(m).collect::<Vec<_>>(), &[3, 1, 4, 1, 5]);
    let senders: Vec<NodeId> = tree.post_order();
    let mut round = 0;
    let mut sys = System::provision(b.clone(), config(5, 2), 77).unwrap();
    for &victim in &senders {
        for field in 0..5 {
            let ctx = sys.begin_round(round).unwrap();
            let mut outbox: BTreeMap<NodeId, Report<MockBackend>> = BTreeMap::new();
            let mut gw = None;
            for id in tree.post_order() {
                let incoming = tree
                    .children(id)
                    .iter()
                    .filter_map(|c| outbox.remove(c).map(|r| (*c, r)))
                    .collect();
                let reading = id.is_meter().then(|| rs[&id]);
                let mut r = sys.process_node(id, &ctx, reading, incoming, ctx.ts, None).unwrap().report;
                if id == victim {
                    match field {
                        0 => r.masked = b.params().p.add(r.masked, Scalar(1)),
                        1 => r.ts += 1,
                        2 => r.hashes[0] = b.hash_add(&r.hashes[0], &b.hash_generators()[0]),
                        3 => r.mac.0[15] ^= 0x80,
                        _ => r.sig.sigma = b.g1_add(&r.sig.sigma, &b.g1_generator()),
                    }
                }
                if id == NodeId::GATEWAY {
                    gw = Some(r);
                } else {
                    outbox.insert(id, r);
                }
            }
            let verdict = sys.finish_round(&tree, &ctx, &gw.unwrap(), ctx.ts).unwrap();
            assert!(
                !matches!(verdict, UtilityVerdict::Accepted(_)),
                "mutation {field} of {victim} accepted"
            );
            round += 1;
        }
    }
}

#[test]
fn closing_slot_includes_billing_masks_until_removed() {
    let cfg = SystemConfig {
        slots_per_day: 8,
        period_len: 4,
        ..config(6, 3)
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tree = AggregationTree::random(&sys.meters(), &mut rng);
    let b = sys.backend().clone();
    let p = b.params().p;
    let mut period_sums: BTreeMap<(NodeId, u64), u64> = BTreeMap::new();
    for round in 0..8u64 {
        let rs = random_readings(6, 10_000, &mut rng);
        let out = sys.run_round(&tree, round, &rs, None).unwrap();
        let UtilityVerdict::Accepted(rec) = out.verdict else {
            panic!("round {round} not accepted");
        };
        assert_eq!(rec.total, rs.values().sum::<u64>());
        assert_eq!(rec.closing, round % 4 == 3);
        if rec.closing {
            let s_b = sys
                .meters()
                .iter()
                .map(|&id| sys.node(id).unwrap().schedule().billing_mask(&b, out.ctx.period).unwrap())
                .fold(Scalar::ZERO, |a, s| p.add(a, s));
            assert!(!s_b.is_zero());
            assert_eq!(rec.billing_removed, s_b);
            assert_eq!(rec.raw, p.add(Scalar(rec.total as u128), s_b));
        } else {
            assert!(rec.billing_removed.is_zero());
        }
        for (id, r) in rs {
            *period_sums.entry((id, out.ctx.period)).or_default() += r;
        }
    }
    for ((id, period), expected) in period_sums {
        assert_eq!(sys.period_total(id, period).unwrap(), expected, "{id} period {period}");
    }
}

#[test]
fn twenty_meters_four_periods_billing() {
    let cfg = SystemConfig {
        slots_per_day: 24,
        period_len: 6,
        ..config(20, 4)
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let tree = AggregationTree::random(&sys.meters(), &mut rng);
    let mut sums: BTreeMap<(NodeId, u64), u64> = BTreeMap::new();
    for round in 0..24u64 {
        let rs = random_readings(20, 10_000, &mut rng);
        let out = sys.run_round(&tree, round, &rs, None).unwrap();
        assert_eq!(out.recovered(), Some(rs.values().sum()));
        for (id, r) in rs {
            *sums.entry((id, out.ctx.period)).or_default() += r;
        }
    }
    assert_eq!(sums.len(), 80);
    for ((id, period), expected) in sums {
        assert_eq!(sys.period_total(id, period).unwrap(), expected);
    }
}

#[test]
fn incomplete_period_cannot_be_billed() {
    let cfg = SystemConfig {
        slots_per_day: 8,
        period_len: 4,
        ..config(3, 1)
    };
    let mut sys = System::provision(MockBackend::compat(), cfg, 1).unwrap();
    let tree = AggregationTree::star(&sys.meters()).unwrap();
    for round in 0..3 {
        sys.run_round(&tree, round, &readings(&sys.meters(), &[1, 1, 1]), None).unwrap();
    }
    assert!(matches!(sys.period_total(m(1), 0), Err(ProtocolError::Billing(_))));
}

#[test]
fn provisioning_is_deterministic_per_seed() {
    let a = System::provision(MockBackend::compat(), config(8, 3), 5).unwrap();
    let b = System::provision(MockBackend::compat(), config(8, 3), 5).unwrap();
    let c = System::provision(MockBackend::compat(), config(8, 3), 6).unwrap();
    assert_eq!(a.pair_keys(), b.pair_keys());
    assert_eq!(a.proxy_graph(), b.proxy_graph());
    assert_ne!(a.pair_keys(), c.pair_keys());
}

#[test]
fn too_many_proxies_is_rejected() {
    let err = System::provision(MockBackend::compat(), config(3, 5), 1).unwrap_err();
    assert!(matches!(err, ProtocolError::Key(KeyError::InsufficientCandidates { needed: 5, available: 4 })));
}
