use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use hvcviz_core::order::{
    build_swimlane, detect_violations, failure_report, isolate, order_traces, Endpoint, OrderMode, TimeMode,
};
use hvcviz_core::sim::{run_simulation, EventKind, Rate, SimConfig};
use hvcviz_core::trace::read_log_file;
use hvcviz_core::{CausalRelation, TraceRecord};
use proptest::prelude::*;

fn fixture(name: &str) -> Vec<TraceRecord> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    let read = read_log_file(&path).unwrap();
    assert!(read.issues.is_empty(), "{:?}", read.issues);
    read.records
}

fn generated(seed: u64, n: u32, duration: u64) -> Vec<TraceRecord> {
    let mut c = SimConfig::new(n, duration, 10, 3);
    c.seed = seed;
    c.drift_ppm = 300;
    c.initial_skew_max = 6;
    c.failure_plan.message_failure_probability = Rate::new(1, 10);
    run_simulation(&c).unwrap().records
}

#[test]
fn chain_fixture_alg3_order() {
    let ot = order_traces(&fixture("chain.jsonl"), OrderMode::Alg3).unwrap();
    assert_eq!(ot.seqs().collect::<Vec<_>>(), vec![1, 2, 4, 3, 5, 6]);
    let causal = order_traces(&fixture("chain.jsonl"), OrderMode::Causal).unwrap();
    assert_eq!(causal.seqs().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
}

#[test]
fn inversion_fixture_differs_between_modes() {
    let records = fixture("inversion.jsonl");
    let alg3 = order_traces(&records, OrderMode::Alg3).unwrap();
    let causal = order_traces(&records, OrderMode::Causal).unwrap();
    assert_eq!(detect_violations(&alg3).unwrap().len(), 1);
    assert!(detect_violations(&causal).unwrap().is_empty());
    let a = build_swimlane(&alg3, TimeMode::Ordinal);
    let c = build_swimlane(&causal, TimeMode::Ordinal);
    let seqs = |m: &hvcviz_core::order::SwimlaneModel| m.arrows.iter().map(|x| x.seq).collect::<Vec<_>>();
    assert_ne!(seqs(&a), seqs(&c));
    assert_eq!(seqs(&a).into_iter().collect::<BTreeSet<_>>(), seqs(&c).into_iter().collect::<BTreeSet<_>>());
}

#[test]
fn failure_fixture_reports_three_under_process_two() {
    let records = fixture("failures.jsonl");
    let ot = order_traces(&records, OrderMode::Causal).unwrap();
    let m = build_swimlane(&ot, TimeMode::Ordinal);
    assert_eq!(m.lanes.len(), 3);
    assert_eq!(m.arrows.len(), 8);
    assert!(m.arrows.iter().all(|a| a.from_lane == 2 || a.to_lane == 2));
    let broken: Vec<_> = m.arrows.iter().filter(|a| a.broken).collect();
    assert_eq!(broken.len(), 3);
    assert!(broken.iter().all(|a| a.from_lane == 2));

    let report = failure_report(&ot);
    assert_eq!(report.total, 3);
    assert_eq!(report.failures.len(), 1);
    let p2 = report.for_process(2).unwrap();
    assert_eq!(p2.entries.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![2, 4, 7]);
    assert_eq!(p2.entries[1].failure_reason, "ack timeout");
    assert_eq!(report.totals["connection reset by peer"], 2);
}

#[test]
fn isolating_a_broken_message_keeps_its_failing_neighbours() {
    let ot = order_traces(&fixture("failures.jsonl"), OrderMode::Causal).unwrap();
    let sub = isolate(&ot, 4, Some(2), TimeMode::Ordinal).unwrap();
    let broken: BTreeSet<u64> = sub.arrows.iter().filter(|a| a.broken).map(|a| a.seq).collect();
    assert_eq!(broken, BTreeSet::from([2, 4, 7]));
    let one = isolate(&ot, 4, Some(1), TimeMode::Ordinal).unwrap();
    assert_eq!(one.seqs(), BTreeSet::from([3, 4, 5]));
}

#[test]
fn linear_extension_on_a_2000_record_trace() {
    let records = generated(77, 6, 3000);
    assert!(records.len() >= 1500 && records.len() <= 2000, "{}", records.len());
    let ot = order_traces(&records, OrderMode::Causal).unwrap();
    assert!(detect_violations(&ot).unwrap().is_empty());
}

#[test]
fn lanes_increase_and_every_message_has_an_arrow() {
    let records = generated(3, 4, 600);
    let ot = order_traces(&records, OrderMode::Causal).unwrap();
    let m = build_swimlane(&ot, TimeMode::Ordinal);
    assert_eq!(m.arrows.len(), records.iter().filter(|r| r.is_message()).count());
    let mut last: HashMap<u32, usize> = HashMap::new();
    for n in &m.nodes {
        if let Some(prev) = last.insert(n.lane, n.position) {
            assert!(prev < n.position);
        }
    }
    for a in &m.arrows {
        let r = ot.get(a.seq).unwrap();
        assert_eq!((a.from_lane, a.to_lane), (r.from_node, r.to_node));
    }
    assert_eq!(failure_report(&ot).total, records.iter().filter(|r| r.broken).count());
}

#[test]
fn unbounded_isolation_matches_the_event_graph() {
    let mut c = SimConfig::new(4, 300, 10, 1);
    c.seed = 21;
    c.epsilon = c.uncapped_epsilon();
    let run = run_simulation(&c).unwrap();
    let closure = run.dag.closure().unwrap();
    let mut start = HashMap::new();
    let mut end = HashMap::new();
    for e in run.dag.events() {
        match e.kind {
            EventKind::Send => {
                start.insert(e.record_seq, e.id);
                end.entry(e.record_seq).or_insert(e.id);
            }
            EventKind::Receive => {
                end.insert(e.record_seq, e.id);
            }
            EventKind::Local => {
                start.insert(e.record_seq, e.id);
                end.insert(e.record_seq, e.id);
            }
        }
    }
    let ot = order_traces(&run.records, OrderMode::Causal).unwrap();
    for target in run.records.iter().step_by(7) {
        let t = target.seq;
        let mut expected = BTreeSet::from([t]);
        for other in &run.records {
            let s = other.seq;
            if s != t && (closure.reaches(end[&s], start[&t]) || closure.reaches(end[&t], start[&s])) {
                expected.insert(s);
            }
        }
        assert_eq!(isolate(&ot, t, None, TimeMode::Ordinal).unwrap().seqs(), expected, "target {t}");
    }
}

#[test]
fn send_and_receive_nodes_sit_in_their_lanes() {
    let ot = order_traces(&fixture("chain.jsonl"), OrderMode::Alg3).unwrap();
    let m = build_swimlane(&ot, TimeMode::Epoch);
    for n in &m.nodes {
        let r = ot.get(n.seq).unwrap();
        match n.endpoint {
            Endpoint::Send => assert_eq!(n.lane, r.from_node),
            Endpoint::Recv => assert_eq!(n.lane, r.to_node),
            _ => assert_eq!(n.lane, r.from_node),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn causal_order_is_a_deterministic_linear_extension(seed in any::<u64>(), n in 2u32..6) {
        let records = generated(seed, n, 300);
        let ot = order_traces(&records, OrderMode::Causal).unwrap();
        let again = order_traces(&records, OrderMode::Causal).unwrap();
        prop_assert_eq!(&ot, &again);
        let mut seqs: Vec<u64> = ot.seqs().collect();
        seqs.sort_unstable();
        prop_assert_eq!(seqs, records.iter().map(|r| r.seq).collect::<Vec<_>>());
        let clocks: Vec<_> = ot.records().iter().map(TraceRecord::output_clock).collect();
        for i in 0..clocks.len() {
            for j in i + 1..clocks.len() {
                prop_assert_ne!(clocks[j].compare(&clocks[i]).unwrap(), CausalRelation::Before);
            }
        }
    }

    #[test]
    fn alg3_is_a_deterministic_permutation(seed in any::<u64>()) {
        let records = generated(seed, 3, 300);
        let ot = order_traces(&records, OrderMode::Alg3).unwrap();
        prop_assert_eq!(&ot, &order_traces(&records, OrderMode::Alg3).unwrap());
        prop_assert_eq!(ot.len(), records.len());
    }

    #[test]
    fn appended_deltas_replay_to_the_full_model(seed in any::<u64>(), cut in 0usize..200) {
        let records = generated(seed, 3, 300);
        let cut = cut.min(records.len());
        for mode in [OrderMode::Causal, OrderMode::Alg3] {
            for time in [TimeMode::Ordinal, TimeMode::Epoch] {
                let before = build_swimlane(&order_traces(&records[..cut], mode).unwrap(), time);
                let after = build_swimlane(&order_traces(&records, mode).unwrap(), time);
                let mut replay = before.clone();
                replay.apply(&after.delta_from(&before));
                prop_assert_eq!(replay, after);
            }
        }
    }
}
