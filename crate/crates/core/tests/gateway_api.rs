mod common;

use std::time::Duration;

use common::{Stack, TOKEN};
use serde_json::json;

#[tokio::test]
async fn sms_send_and_receive() {
    let s = Stack::start().await;
    let (st, body) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "hello" }))
        .await;
    assert_eq!(st, 202, "{body}");
    assert_eq!(body["segments"], 1);
    let subs = s.sim().submits();
    let d = subs.last().unwrap().decoded.as_ref().unwrap();
    assert_eq!(d.destination, "+33612345678");
    assert_eq!(d.text, "hello");

    let mut ev = s.events(None).await;
    s.sim().inject_sms("+491701234567", "hi there").unwrap();
    let e = ev
        .wait_for("sms_received", Duration::from_secs(2), |_| true)
        .await
        .expect("sms_received");
    assert_eq!(e["payload"]["text"], "hi there");
    assert_eq!(e["payload"]["from"], "+491701234567");

    let (st, list) = s.get("/v1/sms?box=inbox").await;
    assert_eq!(st, 200);
    assert!(list
        .as_array()
        .unwrap()
        .iter()
        .any(|m| m["text"] == "hi there"));
    let _ = TOKEN;
}

/// Header fields read straight from the RFC 3550 layout.
fn rtp_header(b: &[u8]) -> (u8, u16, u32, u32) {
    assert!(b.len() >= 12 && b[0] >> 6 == 2, "not RTP v2");
    (
        b[1] & 0x7F,
        u16::from_be_bytes([b[2], b[3]]),
        u32::from_be_bytes([b[4], b[5], b[6], b[7]]),
        u32::from_be_bytes([b[8], b[9], b[10], b[11]]),
    )
}

#[tokio::test]
async fn incoming_call_answer_rtp_hangup() {
    let s = Stack::start().await;
    let rtp = tokio::net::UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let mut ev = s.events(None).await;
    s.sim().inject_call("+33611111111").unwrap();
    let inc = ev
        .wait_for("incoming_call", Duration::from_secs(1), |_| true)
        .await
        .expect("incoming_call within 1 s");
    let id = inc["payload"]["id"].as_str().unwrap().to_owned();

    let (st, body) = s
        .post(
            &format!("/v1/calls/{id}/answer"),
            json!({ "remote": rtp.local_addr().unwrap() }),
        )
        .await;
    assert_eq!(st, 200, "{body}");
    assert_eq!(body["state"], "active");
    assert_eq!(
        s.sim().call_state(),
        Some(cellgate::sim::state::SimCallState::Active)
    );

    let mut packets = Vec::new();
    let mut buf = [0u8; 2048];
    while let Ok(Ok(n)) = tokio::time::timeout(Duration::from_millis(600), rtp.recv(&mut buf)).await
    {
        packets.push(rtp_header(&buf[..n]));
        assert_eq!(n, 12 + 160);
    }
    assert!(
        (149..=151).contains(&packets.len()),
        "{} packets",
        packets.len()
    );
    for w in packets.windows(2) {
        assert_eq!(w[1].1, w[0].1.wrapping_add(1));
        assert_eq!(w[1].2.wrapping_sub(w[0].2), 160);
        assert_eq!(w[1].3, w[0].3);
    }
    assert!(packets.iter().all(|p| p.0 == 0));

    let t = std::time::Instant::now();
    let (st, body) = s.post(&format!("/v1/calls/{id}/hangup"), json!({})).await;
    assert_eq!(st, 200);
    assert_eq!(body["state"], "terminated");
    assert!(s.sim().call_state().is_none());
    assert!(t.elapsed() < Duration::from_secs(1));
}

#[tokio::test]
async fn mms_send_confirmed_with_conf_message_id() {
    let s = Stack::start().await;
    let (st, tx) = s
        .post(
            "/v1/mms",
            json!({
                "to": ["+33612345678"],
                "subject": "hi",
                "parts": [{ "text": "hello" }, { "content_type": "image/png", "data": "iVBORw0K" }],
            }),
        )
        .await;
    assert_eq!(st, 202, "{tx}");
    assert_eq!(tx["state"], "confirmed");
    let log = s.mmsc.mmsc.log();
    let req = log.iter().find(|e| e.kind == "send_req").unwrap();
    assert!(req.missing.is_empty());
    assert_eq!(req.status, Some(0x80));
    assert_eq!(req.parts, Some(2));
    assert_eq!(tx["message_id"].as_str(), req.message_id.as_deref());

    let (st, got) = s
        .get(&format!(
            "/v1/mms/{}",
            tx["transaction_id"].as_str().unwrap()
        ))
        .await;
    assert_eq!(st, 200);
    assert_eq!(got["state"], "confirmed");
    assert_eq!(s.get("/v1/mms/nope").await.0, 404);
}

#[tokio::test]
async fn mms_receive_full_flow_and_delivery_report() {
    let s = Stack::start().await;
    let mut ev = s.events(None).await;
    let d = s
        .mmsc
        .mmsc
        .deliver(cellgate::sim::mmsc::Deliver {
            from: "+33600000001/TYPE=PLMN".into(),
            to: vec![],
            subject: Some("pic".into()),
            text: "look".into(),
            ack: true,
            expiry_secs: 3600,
            notify_url: s.url("/v1/mms/notification"),
            token: Some(TOKEN.into()),
        })
        .await
        .unwrap();
    assert_eq!(d.notify_status, 204);
    let got = ev
        .wait_for("mms_notification", Duration::from_secs(2), |e| {
            e["payload"]["stage"] == "retrieved"
        })
        .await
        .expect("retrieved");
    assert_eq!(got["payload"]["transaction_id"], d.transaction_id);
    assert!(
        common::eventually(Duration::from_secs(2), || {
            s.mmsc
                .mmsc
                .log()
                .iter()
                .any(|e| e.kind == "acknowledge_ind")
        })
        .await
    );
    let kinds: Vec<String> = s.mmsc.mmsc.log().into_iter().map(|e| e.kind).collect();
    let pos = |k: &str| kinds.iter().position(|x| x == k).unwrap();
    assert!(
        pos("notifyresp_ind") < pos("get") && pos("get") < pos("acknowledge_ind"),
        "{kinds:?}"
    );

    let code = s
        .mmsc
        .mmsc
        .delivery_report(cellgate::sim::mmsc::DeliveryReportReq {
            message_id: "msg-x".into(),
            to: "+33612345678/TYPE=PLMN".into(),
            status: 0x81,
            notify_url: s.url("/v1/mms/notification"),
            token: Some(TOKEN.into()),
        })
        .await
        .unwrap();
    assert_eq!(code, 204);
    let e = ev
        .wait_for("mms_delivery", Duration::from_secs(1), |_| true)
        .await
        .unwrap();
    assert_eq!(e["payload"]["message_id"], "msg-x");
    assert_eq!(e["payload"]["status"], "retrieved");
}

#[tokio::test]
async fn capability_gating_follows_clac() {
    let s = Stack::start().await;
    let names = |v: &serde_json::Value| -> Vec<String> {
        v["names"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n.as_str().unwrap().to_owned())
            .collect()
    };
    let (_, v) = s.get("/v1/services").await;
    let full = names(&v);
    for n in [
        "sms",
        "mms",
        "voice",
        "phonebook",
        "sim_access",
        "surveillance",
    ] {
        assert!(full.contains(&n.to_owned()), "{full:?}");
    }
    s.sim().remove_capability("+CMGS");
    let (_, v) = s.get("/v1/services").await;
    assert!(!names(&v).contains(&"sms".to_owned()));
    assert!(!names(&v).contains(&"surveillance".to_owned()));
    let (st, _) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "x" }))
        .await;
    assert_eq!(st, 503);
    s.sim().add_capability("+CMGS");
    let (_, v) = s.get("/v1/services").await;
    assert!(names(&v).contains(&"sms".to_owned()));
    let (st, _) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "x" }))
        .await;
    assert_eq!(st, 202);
}

#[tokio::test]
async fn sms_unavailable_without_refresh_returns_503() {
    let s = Stack::start().await;
    s.sim().remove_capability("+CMGS");
    let (st, body) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "x" }))
        .await;
    assert_eq!(st, 503, "{body}");
}

#[tokio::test]
async fn personalized_service_appears_without_restart() {
    let s = Stack::start().await;
    let (st, _) = s
        .post(
            "/v1/services",
            json!({ "name": "doorbell", "requires": ["sms"] }),
        )
        .await;
    assert_eq!(st, 201);
    let (_, v) = s.get("/v1/services").await;
    assert!(v["names"].as_array().unwrap().contains(&json!("doorbell")));
    let (st, _) = s.post("/v1/services", json!({ "name": "sms" })).await;
    assert_eq!(st, 409);
}

#[tokio::test]
async fn surveillance_motion_sends_templated_sms() {
    let s = Stack::start().await;
    let (st, _) = s.post("/v1/services/surveillance/motion", json!({})).await;
    assert_eq!(st, 409);
    let (st, _) = s
        .put(
            "/v1/services/surveillance",
            json!({ "alert_number": "+33698765432", "enabled": true, "message_template": "Intrusion at {time}" }),
        )
        .await;
    assert_eq!(st, 200);
    let mut ev = s.events(None).await;
    let before = s.sim().submits().len();
    let (st, acc) = s.post("/v1/services/surveillance/motion", json!({})).await;
    assert_eq!(st, 202);
    assert!(common::eventually(Duration::from_secs(1), || s.sim().submits().len() > before).await);
    let sub = s.sim().submits().last().unwrap().decoded.clone().unwrap();
    assert_eq!(sub.destination, "+33698765432");
    assert_eq!(sub.text, acc["text"].as_str().unwrap());
    assert!(sub.text.starts_with("Intrusion at 20"));
    let e = ev
        .wait_for("service_alert", Duration::from_secs(1), |_| true)
        .await
        .unwrap();
    assert_eq!(e["payload"]["sent"], true);
}

#[tokio::test]
async fn bad_requests() {
    let s = Stack::start().await;
    let (st, body) = s.post("/v1/sms", json!({ "text": "x" })).await;
    assert_eq!(st, 400);
    assert_eq!(body["error"], "bad_request");
    assert_eq!(
        s.post("/v1/sms", json!({ "to": "12ab", "text": "x" }))
            .await
            .0,
        400
    );
    assert_eq!(s.get("/v1/calls/nope").await.0, 404);
    assert_eq!(s.post("/v1/calls/nope/answer", json!({})).await.0, 404);
    assert_eq!(
        s.post(
            "/v1/mms",
            json!({ "to": ["1"], "parts": [{ "text": "a", "data": "AA==" }] })
        )
        .await
        .0,
        400
    );
}

#[tokio::test]
async fn every_route_requires_a_token() {
    let s = Stack::start().await;
    let routes = [
        ("GET", "/v1/sms"),
        ("POST", "/v1/sms"),
        ("GET", "/v1/sms/sent"),
        ("GET", "/v1/sms/SM/1"),
        ("DELETE", "/v1/sms/SM/1"),
        ("GET", "/v1/mms"),
        ("POST", "/v1/mms"),
        ("POST", "/v1/mms/notification"),
        ("GET", "/v1/mms/x"),
        ("GET", "/v1/calls"),
        ("POST", "/v1/calls"),
        ("GET", "/v1/calls/x"),
        ("POST", "/v1/calls/x/answer"),
        ("POST", "/v1/calls/x/hangup"),
        ("GET", "/v1/calls/x/audio"),
        ("GET", "/v1/events"),
        ("GET", "/v1/modem/status"),
        ("POST", "/v1/sim/apdu"),
        ("GET", "/v1/services"),
        ("POST", "/v1/services"),
        ("GET", "/v1/services/surveillance"),
        ("PUT", "/v1/services/surveillance"),
        ("POST", "/v1/services/surveillance/motion"),
        ("GET", "/v1/phonebook"),
        ("POST", "/v1/phonebook"),
        ("PUT", "/v1/phonebook"),
        ("GET", "/v1/phonebook/1"),
        ("PUT", "/v1/phonebook/1"),
        ("DELETE", "/v1/phonebook/1"),
        ("GET", "/v1/snapshot"),
        ("POST", "/v1/sync"),
        ("GET", "/v1/share/alice"),
        ("GET", "/v1/share/alice/a.txt"),
        ("PUT", "/v1/share/alice/a.txt"),
    ];
    for (m, p) in routes {
        for token in [None, Some("wrong-token-wrong-token")] {
            let mut r = s.http.request(m.parse().unwrap(), s.url(p));
            if let Some(t) = token {
                r = r.bearer_auth(t);
            }
            let st = r.send().await.unwrap().status();
            assert_eq!(st, 401, "{m} {p} with {token:?}");
        }
    }
    let r = s.http.get(s.url("/healthz")).send().await.unwrap();
    assert_eq!(r.status(), 200);
}

#[tokio::test]
async fn sse_resume_without_loss_or_duplicates() {
    let s = Stack::start().await;
    let hub = s.gw.gateway.events().clone();
    let start = hub.last_seq();
    for i in 0..20 {
        hub.publish(cellgate::gateway::EventKind::ModemStatus, json!({ "i": i }));
    }
    let mut ev = s.events(Some(start + 5)).await;
    let mut seqs = Vec::new();
    for _ in 0..15 {
        seqs.push(
            ev.next(Duration::from_secs(1)).await.unwrap()["seq"]
                .as_u64()
                .unwrap(),
        );
    }
    assert_eq!(seqs, ((start + 6)..=(start + 20)).collect::<Vec<_>>());
    drop(ev);
    hub.publish(
        cellgate::gateway::EventKind::ModemStatus,
        json!({ "i": 20 }),
    );
    let mut ev = s.events(Some(start + 20)).await;
    assert_eq!(
        ev.next(Duration::from_secs(1)).await.unwrap()["seq"],
        start + 21
    );
}

#[tokio::test]
async fn outgoing_call_and_busy() {
    let s = Stack::start().await;
    let (st, c) = s.post("/v1/calls", json!({ "to": "+33612345678" })).await;
    assert_eq!(st, 201, "{c}");
    assert_eq!(c["rtp"]["payload_type"], 0);
    assert!(c["rtp"]["port"].as_u64().unwrap() > 0);
    let id = c["call_id"].as_str().unwrap().to_owned();
    let (st, _) = s.post("/v1/calls", json!({ "to": "+33612345679" })).await;
    assert_eq!(st, 409);
    let s2 = &s;
    let active = async {
        for _ in 0..200 {
            if s2.get(&format!("/v1/calls/{id}")).await.1["state"] == "active" {
                return true;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        false
    };
    assert!(active.await);
    assert_eq!(
        s.post(&format!("/v1/calls/{id}/answer"), json!({})).await.0,
        409
    );
    assert_eq!(
        s.post(&format!("/v1/calls/{id}/hangup"), json!({})).await.0,
        200
    );

    s.sim().set_dial_outcome(cellgate::sim::DialOutcome::Busy);
    let (_, c) = s.post("/v1/calls", json!({ "to": "+33612345678" })).await;
    let id = c["call_id"].as_str().unwrap().to_owned();
    let mut ended = false;
    for _ in 0..200 {
        let (_, v) = s.get(&format!("/v1/calls/{id}")).await;
        if v["state"] == "terminated" {
            assert_eq!(v["cause"], "busy");
            ended = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert!(ended);
}

#[tokio::test]
async fn phonebook_snapshot_and_sync() {
    let s = Stack::start().await;
    let (st, a) = s
        .post(
            "/v1/phonebook",
            json!({ "number": "+33611111111", "text": "Alice" }),
        )
        .await;
    assert_eq!(st, 201, "{a}");
    let idx = a["index"].as_u64().unwrap();
    let (_, l) = s.get("/v1/phonebook").await;
    assert_eq!(l.as_array().unwrap().len(), 1);
    let (_, f) = s.get("/v1/phonebook?find=ali").await;
    assert_eq!(f[0]["text"], "Alice");
    assert_eq!(s.get("/v1/phonebook?find=zed").await.1, json!([]));
    let (st, e) = s.get(&format!("/v1/phonebook/{idx}")).await;
    assert_eq!(st, 200);
    assert_eq!(e["number"], "+33611111111");
    s.sim().inject_sms("+33622222222", "stored").unwrap();

    let (st, snap) = s.get("/v1/snapshot").await;
    assert_eq!(st, 200);
    assert_eq!(snap["phonebook"].as_array().unwrap().len(), 1);
    assert_eq!(snap["media"], json!([]));
    assert!(s.share.path().join("gateway/snapshot.json").exists());

    let (st, r) = s
        .post(
            "/v1/sync",
            json!({
                "snapshot": snap,
                "contacts": [{ "number": "+33611111111", "text": "Alice" }, { "number": "+33633333333", "text": "Bob" }],
            }),
        )
        .await;
    assert_eq!(st, 200, "{r}");
    assert_eq!(r["results"].as_array().unwrap().len(), 1);
    assert_eq!(r["results"][0]["outcome"], "applied");
    assert_eq!(s.get("/v1/phonebook").await.1.as_array().unwrap().len(), 2);

    let r = s
        .http
        .delete(s.url(&format!("/v1/phonebook/{idx}")))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 204);
    assert_eq!(s.get(&format!("/v1/phonebook/{idx}")).await.0, 404);
}

#[tokio::test]
async fn shares_and_owner_tokens() {
    const BOB: &str = "bob-token-0123456789";
    let s = Stack::with(Default::default(), |c| {
        c.share_owners.insert(BOB.into(), "bob".into());
    })
    .await;
    let put = |tok: &'static str, path: &str, body: &'static str| {
        s.http.put(s.url(path)).bearer_auth(tok).body(body).send()
    };
    assert_eq!(
        put(BOB, "/v1/share/bob/notes/a.txt", "hello")
            .await
            .unwrap()
            .status(),
        201
    );
    assert_eq!(
        put(BOB, "/v1/share/alice/a.txt", "x")
            .await
            .unwrap()
            .status(),
        403
    );
    assert_eq!(
        put(TOKEN, "/v1/share/alice/a.txt", "x")
            .await
            .unwrap()
            .status(),
        201
    );
    let r = s
        .http
        .get(s.url("/v1/share/bob/notes/a.txt"))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(r.headers()["content-type"], "text/plain");
    assert_eq!(r.text().await.unwrap(), "hello");
    let (_, l) = s.get("/v1/share/bob").await;
    assert_eq!(l[0]["path"], "notes/a.txt");
    assert_eq!(l[0]["bytes"], 5);
    assert_eq!(s.get("/v1/share/bob/missing").await.0, 404);
    assert_eq!(
        put(TOKEN, "/v1/share/bob/a%2F..%2F..%2Fx", "x")
            .await
            .unwrap()
            .status(),
        400
    );
    assert_eq!(
        put(TOKEN, "/v1/share/bad%20owner/x", "x")
            .await
            .unwrap()
            .status(),
        400
    );
}

#[tokio::test]
async fn status_and_apdu() {
    let s = Stack::start().await;
    s.sim().set_signal(31, Some(0));
    let (st, v) = s.get("/v1/modem/status").await;
    assert_eq!(st, 200);
    assert_eq!(v["rssi_dbm"], -51);
    assert_eq!(v["registration"], "registered_home");
    assert_eq!(v["profile"]["manufacturer"], "SIMCOM_LTD");
    s.sim().script_apdu(
        [("00A40000023F00".to_owned(), "9000".to_owned())]
            .into_iter()
            .collect(),
    );
    let (st, v) = s
        .post("/v1/sim/apdu", json!({ "apdu": "00A40000023F00" }))
        .await;
    assert_eq!(st, 200, "{v}");
    assert_eq!(v["response"], "9000");
}

#[tokio::test]
async fn not_ready_is_503() {
    let s = Stack::with(
        cellgate::sim::SimConfig {
            pin_locked: true,
            ..Default::default()
        },
        |c| c.sim_pin = Some("0000".into()),
    )
    .await;
    assert_eq!(s.get("/v1/modem/status").await.0, 200);

    let sim = cellgate::sim::Sim::new(cellgate::sim::SimConfig {
        pin_locked: true,
        ..Default::default()
    })
    .listen_tcp("127.0.0.1", 0)
    .await
    .unwrap();
    let cfg = cellgate::gateway::GatewayConfig {
        transport: cellgate::at::Transport::Tcp {
            host: "127.0.0.1".into(),
            port: sim.ports.unwrap().at.port(),
        },
        auth_token: TOKEN.into(),
        http_bind: "127.0.0.1:0".parse().unwrap(),
        share_root: s.share.path().to_owned(),
        ..Default::default()
    };
    let gw = cellgate::gateway::spawn(cfg).await.unwrap();
    tokio::time::sleep(Duration::from_millis(300)).await;
    let r = s
        .http
        .get(format!("{}/v1/modem/status", gw.url()))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 503);
    let v: serde_json::Value = r.json().await.unwrap();
    assert_eq!(v["error"], "modem_not_ready");
    // The PIN was never tried, so no attempts were consumed.
    assert_eq!(sim.sim.state().pin.attempts_left, 3);
}

#[tokio::test]
async fn audio_websocket_relays_pcm() {
    use futures::{SinkExt, StreamExt};
    use tokio_tungstenite::tungstenite::client::IntoClientRequest;
    use tokio_tungstenite::tungstenite::Message;

    let s = Stack::start().await;
    let mut ev = s.events(None).await;
    s.sim().inject_call("+33611111111").unwrap();
    let inc = ev
        .wait_for("incoming_call", Duration::from_secs(1), |_| true)
        .await
        .unwrap();
    let id = inc["payload"]["id"].as_str().unwrap().to_owned();
    assert_eq!(
        s.post(&format!("/v1/calls/{id}/answer"), json!({})).await.0,
        200
    );

    let url = format!("ws://{}/v1/calls/{id}/audio", s.gw.addr);
    let mut req = url.clone().into_client_request().unwrap();
    req.headers_mut()
        .insert("authorization", format!("Bearer {TOKEN}").parse().unwrap());
    let (mut ws, _) = tokio_tungstenite::connect_async(req).await.unwrap();

    let mut second = url.into_client_request().unwrap();
    second
        .headers_mut()
        .insert("authorization", format!("Bearer {TOKEN}").parse().unwrap());
    assert!(tokio_tungstenite::connect_async(second).await.is_err());

    let mut frames = 0;
    while frames < 5 {
        match tokio::time::timeout(Duration::from_secs(1), ws.next()).await {
            Ok(Some(Ok(Message::Binary(b)))) => {
                assert_eq!(b.len(), 320);
                frames += 1;
            }
            other => panic!("{other:?}"),
        }
    }
    let before = s.sim().audio_bytes_in();
    for _ in 0..10 {
        ws.send(Message::Binary(vec![0u8; 320])).await.unwrap();
    }
    assert!(common::eventually(Duration::from_secs(2), || s.sim().audio_bytes_in() > before).await);
    s.post(&format!("/v1/calls/{id}/hangup"), json!({})).await;
}
