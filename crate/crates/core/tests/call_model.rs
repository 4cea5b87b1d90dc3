mod common;

use std::collections::HashMap;
use std::time::Duration;

use cellgate::call::session::{CallSession, CallState};
use cellgate::sim::{DialOutcome, SimConfig};
use common::Stack;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::json;

#[derive(Debug, Clone)]
enum Op {
    Dial(DialOutcome),
    Incoming,
    Answer,
    Hangup,
    RemoteHangup,
    Wait(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => prop::sample::select(vec![
            DialOutcome::Answer,
            DialOutcome::Busy,
            DialOutcome::NoAnswer,
            DialOutcome::NoCarrier,
        ])
        .prop_map(Op::Dial),
        2 => Just(Op::Incoming),
        2 => Just(Op::Answer),
        2 => Just(Op::Hangup),
        1 => Just(Op::RemoteHangup),
        2 => (0u64..120).prop_map(Op::Wait),
    ]
}

async fn current_id(s: &Stack) -> Option<String> {
    let (st, v) = s.get("/v1/calls").await;
    (st == 200)
        .then(|| v["id"].as_str().map(str::to_owned))
        .flatten()
}

async fn apply(s: &Stack, op: &Op) {
    match op {
        Op::Dial(outcome) => {
            s.sim().set_dial_outcome(*outcome);
            let (st, _) = s.post("/v1/calls", json!({ "to": "+33612345678" })).await;
            assert!(matches!(st, 201 | 200 | 409), "dial -> {st}");
        }
        Op::Incoming => {
            let _ = s.sim().inject_call("+33698765432");
        }
        Op::Answer | Op::Hangup => {
            if let Some(id) = current_id(s).await {
                let verb = if matches!(op, Op::Answer) {
                    "answer"
                } else {
                    "hangup"
                };
                let (st, _) = s.post(&format!("/v1/calls/{id}/{verb}"), json!({})).await;
                assert_ne!(st, 500, "{verb} -> internal error");
            }
        }
        Op::RemoteHangup => {
            s.sim().remote_hangup();
        }
        Op::Wait(ms) => tokio::time::sleep(Duration::from_millis(*ms)).await,
    }
}

/// Every state change published for a call must be an edge of the call
/// graph; a terminated call never changes again; at most one call is live.
#[test]
fn random_interleavings_stay_on_the_graph() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let s = rt.block_on(Stack::with(
        SimConfig {
            ring_interval_ms: 150,
            dial_delay_ms: 40,
            ..Default::default()
        },
        |_| {},
    ));
    let mut runner = TestRunner::new(Config {
        cases: 40,
        ..Config::default()
    });
    runner
        .run(&prop::collection::vec(op(), 1..8), |ops| {
            rt.block_on(async {
                let mut ev = s.events(None).await;
                for op in &ops {
                    apply(&s, op).await;
                }
                // settle, then clear whatever is left
                tokio::time::sleep(Duration::from_millis(120)).await;
                if let Some(id) = current_id(&s).await {
                    s.post(&format!("/v1/calls/{id}/hangup"), json!({})).await;
                }
                s.sim().remote_hangup();
                let idle =
                    common::eventually(Duration::from_secs(3), || s.sim().call_state().is_none())
                        .await;
                assert!(idle, "sim still has a call after {ops:?}");
                tokio::time::sleep(Duration::from_millis(100)).await;

                let mut last: HashMap<String, CallState> = HashMap::new();
                let mut live: Option<String> = None;
                while let Some(e) = ev.next(Duration::from_millis(150)).await {
                    if e["kind"] != "call_state" && e["kind"] != "incoming_call" {
                        continue;
                    }
                    let c: CallSession = serde_json::from_value(e["payload"].clone()).unwrap();
                    let prev = last.get(&c.id).copied().unwrap_or(CallState::Idle);
                    assert!(
                        prev == c.state || prev.can_go(c.state),
                        "{} went {:?} -> {:?} during {ops:?}",
                        c.id,
                        prev,
                        c.state
                    );
                    if c.state.is_terminated() {
                        if live.as_deref() == Some(c.id.as_str()) {
                            live = None;
                        }
                    } else if prev == CallState::Idle {
                        assert!(live.is_none(), "second live call {} during {ops:?}", c.id);
                        live = Some(c.id.clone());
                    }
                    last.insert(c.id.clone(), c.state);
                }
                assert!(
                    last.values().all(|st| st.is_terminated()),
                    "calls left open after cleanup: {last:?} during {ops:?}"
                );
            });
            Ok(())
        })
        .unwrap();
}
