mod common;

use common::{line_net, SMALL};
use qkdn_core::adversary::{
    anonymity_audit, secrecy_audit, AuditParams, ErrorKind, Event, Party, Role, Transcript,
};
use qkdn_core::baselines::{keyrelay_hybrid_run, keyrelay_run, tn_hybrid_run, tn_run};
use qkdn_core::crypto::{hash, DeterministicProvider, OpKind};
use qkdn_core::onion::onion_run;
use qkdn_core::topology::{NodeId, Phase, ReplaySpec, RunError, TamperSpec, TamperStage};

fn audit(
    p: &DeterministicProvider,
    t: &Transcript,
    nodes: usize,
    ends: (NodeId, NodeId),
    secret: &[u8],
    onion: bool,
) -> Vec<qkdn_core::adversary::SecrecyVerdict> {
    let ids: Vec<NodeId> = (1..=nodes as u32).map(NodeId).collect();
    let params = AuditParams {
        onion: onion.then_some(SMALL),
        ..AuditParams::default()
    };
    secrecy_audit(p, t, &ids, ends, secret, &params)
}

fn delivered(t: &Transcript, node: NodeId, secret: &[u8]) -> bool {
    t.deliveries().any(|(n, d)| n == node && *d == hash(secret))
}

#[test]
fn onion_run_delivers_without_leaks_and_respects_the_neighbour_bound() {
    let p = DeterministicProvider;
    for n in 1..=4 {
        let (mut net, c) = line_net(n, &p, 8, 3);
        let run = onion_run(&mut net, &c, &SMALL).unwrap();
        let t = net.transcript();
        assert!(delivered(t, c.destination(), &run.build.secret));
        assert_eq!(t.errors().count(), 0);
        assert_eq!(t.count_ops(Some(Phase::Delivery), |k, _| k == OpKind::Sign), c.hop_count() as u64);
        let verdicts = audit(&p, t, n + 2, (c.initiator(), c.destination()), &run.build.secret, true);
        for v in &verdicts {
            let endpoint = matches!(v.role, Role::Initiator | Role::Destination);
            assert_eq!(v.derivable, endpoint, "{v:?}");
            if v.derivable {
                assert!(v.replayed);
            }
        }
        for view in anonymity_audit(t, &c.path(), Some(&c.path())) {
            assert_eq!(view.within_bound(), Some(true), "{view:?}");
        }
    }
}

#[test]
fn compromised_relay_learns_nothing_from_onion_but_everything_from_key_relay() {
    let p = DeterministicProvider;
    let (mut net, c) = line_net(3, &p, 8, 4);
    net.compromise(c.hops()[1]).unwrap();
    let s = onion_run(&mut net, &c, &SMALL).unwrap().build.secret;
    let v = audit(&p, net.transcript(), 5, (c.initiator(), c.destination()), &s, true);
    assert!(v.iter().all(|v| !v.derivable || v.role != Role::Other), "{v:?}");

    let (mut net, c) = line_net(3, &p, 8, 4);
    net.compromise(c.hops()[1]).unwrap();
    let s = keyrelay_run(&mut net, &c).unwrap().secret;
    let v = audit(&p, net.transcript(), 5, (c.initiator(), c.destination()), &s, false);
    for relay in c.intermediates() {
        assert!(v.iter().any(|x| x.party == Party::Node(*relay) && x.derivable));
    }
    assert!(v.iter().any(|x| x.party == Party::Attacker && x.derivable));
    assert!(!v.iter().any(|x| x.party == Party::BusTap && x.derivable));
}

#[test]
fn hybrid_baselines_hide_the_secret_from_relays() {
    let p = DeterministicProvider;
    for tn_on_dst in [true, false] {
        let (mut net, c) = line_net(3, &p, 8, 5);
        net.compromise(c.hops()[0]).unwrap();
        let tn = if tn_on_dst { c.destination() } else { NodeId(99) };
        if !tn_on_dst {
            assert!(matches!(tn_hybrid_run(&mut net, &c, tn), Err(RunError::Protocol(_))));
            continue;
        }
        let s = tn_hybrid_run(&mut net, &c, tn).unwrap().secret;
        assert!(delivered(net.transcript(), c.destination(), &s));
        let v = audit(&p, net.transcript(), 5, (c.initiator(), c.destination()), &s, false);
        assert!(v.iter().all(|v| !v.derivable || v.role != Role::Other), "{v:?}");
    }
    let (mut net, c) = line_net(3, &p, 8, 6);
    net.compromise(c.hops()[1]).unwrap();
    let s = keyrelay_hybrid_run(&mut net, &c).unwrap().secret;
    assert!(delivered(net.transcript(), c.destination(), &s));
    let v = audit(&p, net.transcript(), 5, (c.initiator(), c.destination()), &s, false);
    assert!(v.iter().all(|v| !v.derivable || v.role != Role::Other), "{v:?}");
}

#[test]
fn plain_trusted_node_falls_to_tap_plus_one_relay() {
    let p = DeterministicProvider;
    for relay in 0..3 {
        let (mut net, c) = line_net(3, &p, 8, 7);
        net.compromise(c.intermediates()[relay]).unwrap();
        let s = tn_run(&mut net, &c, c.destination()).unwrap().secret;
        assert!(delivered(net.transcript(), c.destination(), &s));
        let v = audit(&p, net.transcript(), 5, (c.initiator(), c.destination()), &s, false);
        let tap = v.iter().find(|x| x.party == Party::BusTap).unwrap();
        let attacker = v.iter().find(|x| x.party == Party::Attacker).unwrap();
        assert!(!tap.derivable);
        assert!(attacker.derivable && attacker.replayed, "{attacker:?}");
    }
}

#[test]
fn wire_tamper_fails_link_authentication_before_decryption() {
    let p = DeterministicProvider;
    let (mut net, c) = line_net(2, &p, 8, 8);
    net.bus_mut().tamper_inject(TamperSpec {
        phase: Phase::Delivery,
        message: 2,
        offset: 77,
        mask: 0x10,
        stage: TamperStage::Wire,
    });
    let run = onion_run(&mut net, &c, &SMALL).unwrap();
    let t = net.transcript();
    let victim = c.hops()[1];
    assert!(!delivered(t, c.destination(), &run.build.secret));
    assert_eq!(t.errors().collect::<Vec<_>>(), [(victim, ErrorKind::AuthenticationFailure)]);
    let at_victim: Vec<_> = t
        .events()
        .iter()
        .filter_map(|e| match e {
            Event::CryptoOp { node, phase: Phase::Delivery, kind, .. } if *node == victim => Some(*kind),
            _ => None,
        })
        .collect();
    assert_eq!(at_victim, [OpKind::LinkVerify]);
}

#[test]
fn unwrapped_tamper_is_caught_by_the_onion_itself() {
    let p = DeterministicProvider;
    for offset in [0, 5, 300, 700] {
        let (mut net, c) = line_net(2, &p, 8, 9);
        net.bus_mut().tamper_inject(TamperSpec {
            phase: Phase::Delivery,
            message: 3,
            offset,
            mask: 0x80,
            stage: TamperStage::Unwrapped,
        });
        onion_run(&mut net, &c, &SMALL).unwrap();
        let errs: Vec<_> = net.transcript().errors().collect();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].0, c.destination());
        assert!(matches!(errs[0].1, ErrorKind::TagInvalid | ErrorKind::LayerMalformed), "{errs:?}");
        assert_eq!(net.transcript().deliveries().count(), 0);
    }
}

#[test]
fn replayed_onion_is_dropped_and_delivery_happens_once() {
    let p = DeterministicProvider;
    let (mut net, c) = line_net(2, &p, 8, 10);
    net.bus_mut().schedule_replay(ReplaySpec { phase: Phase::Delivery, message: 2 });
    let run = onion_run(&mut net, &c, &SMALL).unwrap();
    let t = net.transcript();
    assert_eq!(t.deliveries().count(), 1);
    assert!(delivered(t, c.destination(), &run.build.secret));
    assert_eq!(t.errors().collect::<Vec<_>>(), [(c.hops()[1], ErrorKind::Replay)]);
}

#[test]
fn exhausted_pool_aborts_the_second_relay() {
    let p = DeterministicProvider;
    let (mut net, c) = line_net(1, &p, 1, 11);
    keyrelay_run(&mut net, &c).unwrap();
    let err = keyrelay_run(&mut net, &c).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::PoolExhausted);
}

#[test]
fn identical_seeds_give_identical_transcripts() {
    let p = DeterministicProvider;
    let text = |seed| {
        let (mut net, c) = line_net(3, &p, 8, seed);
        onion_run(&mut net, &c, &SMALL).unwrap();
        net.transcript().to_text()
    };
    assert_eq!(text(12), text(12));
    assert_ne!(text(12), text(13));
}
