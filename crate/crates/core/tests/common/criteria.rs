//! The headline checks, one function per criterion. Each returns a short
//! summary on success or the first violation.

use std::time::{Duration, Instant};

use cellgate::gateway::latency;
use cellgate::mms::{self, MessageType};
use cellgate::sim::{mmsc, oracle};
use cellgate::sms::{self, TypeOfNumber, UserData};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestRunner};
use serde_json::json;

use super::{engine_checks, gen, Stack, TOKEN};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn codec_oracle() -> Outcome {
    let started = Instant::now();
    let (packed, n) = sms::pack_gsm7("hellohello").map_err(|e| e.to_string())?;
    ensure!(
        n == 10 && hex::encode_upper(&packed) == "E8329BFD4697D9EC37",
        "hellohello packed to {}",
        hex::encode_upper(&packed)
    );
    let semi = sms::encode_semi_octets("123").map_err(|e| e.to_string())?;
    ensure!(semi == [0x21, 0xF3], "123 encoded to {semi:02X?}");

    let mut r = runner(1000);
    r.run(&gen::submit(), |msg| {
        let (hex, len) = sms::encode_submit(&msg).expect("encode");
        proptest::prop_assert_eq!(sms::decode_submit(&hex).expect("decode"), msg.clone());
        let o = oracle::parse_submit(&hex).expect("oracle parse");
        let dest = match msg.destination.ton {
            TypeOfNumber::International => format!("+{}", msg.destination.digits),
            _ => msg.destination.digits.clone(),
        };
        proptest::prop_assert_eq!(o.destination, dest);
        proptest::prop_assert_eq!(Some(o.text.as_str()), msg.user_data.as_text());
        proptest::prop_assert_eq!(o.tpdu_len, len);
        proptest::prop_assert_eq!(o.concat, msg.udh.map(|c| (c.reference, c.total, c.seq)));
        Ok(())
    })
    .map_err(|e| format!("submit: {e}"))?;

    let mut r = runner(1000);
    r.run(&gen::deliver(), |msg| {
        let hex = sms::encode_deliver(&msg).expect("encode");
        proptest::prop_assert_eq!(sms::decode_deliver(&hex).expect("decode"), msg);
        Ok(())
    })
    .map_err(|e| format!("deliver: {e}"))?;

    let strategy = (
        gen::digits(15).prop_map(|d| format!("+{d}")),
        gen::timestamp(),
        gen::body(),
    );
    let mut r = runner(1000);
    r.run(&strategy, |(from, ts, (_, text, udh))| {
        let concat = udh.map(|c| oracle::Concat {
            reference: c.reference,
            total: c.total,
            seq: c.seq,
        });
        let ots = oracle::Timestamp {
            year: (ts.year % 100) as u8,
            month: ts.month,
            day: ts.day,
            hour: ts.hour,
            minute: ts.minute,
            second: ts.second,
            quarter_hours: ts.tz_quarters,
        };
        let d = sms::decode_deliver(&oracle::deliver_hex(&from, &text, ots, concat.as_ref()))
            .expect("decode");
        proptest::prop_assert_eq!(d.user_data, UserData::Text(text));
        proptest::prop_assert_eq!(d.timestamp, ts);
        proptest::prop_assert_eq!(d.udh, udh);
        proptest::prop_assert_eq!(d.originator.to_string(), from);
        Ok(())
    })
    .map_err(|e| format!("oracle to codec: {e}"))?;

    let took = started.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!(
        "3 x 1000 cases + frozen vectors in {:.2} s",
        took.as_secs_f64()
    ))
}

pub async fn engine_robustness() -> Outcome {
    let a = engine_checks::random_bytes(1_000_000, 0xC0FFEE).await?;
    let b = engine_checks::valid_interleavings(10_000, 42).await?;
    let c = engine_checks::single_flight(16, 250).await?;
    engine_checks::sim_urc_isolation("acceptance-cpbr").await?;
    Ok(format!("{a}; {b}; {c}"))
}

pub async fn e2e_sms() -> Outcome {
    let s = Stack::start().await;
    let before = s.sim().submits().len();
    let t = Instant::now();
    let (st, body) = s
        .post(
            "/v1/sms",
            json!({ "to": "+33612345678", "text": "acceptance hello" }),
        )
        .await;
    ensure!(st == 202, "POST /v1/sms returned {st}: {body}");
    let stored =
        super::eventually(Duration::from_secs(1), || s.sim().submits().len() > before).await;
    let send_ms = t.elapsed().as_millis();
    ensure!(stored, "no SUBMIT at the sim within 1 s");
    let sub = s.sim().submits().last().cloned().unwrap();
    let d = sub.decoded.ok_or("sim could not decode the SUBMIT")?;
    ensure!(
        d.destination == "+33612345678" && d.text == "acceptance hello",
        "sim decoded {} / {:?}",
        d.destination,
        d.text
    );

    let mut ev = s.events(None).await;
    let t = Instant::now();
    s.sim()
        .inject_sms("+491701234567", "incoming ok")
        .map_err(|e| e.to_string())?;
    let e = ev
        .wait_for("sms_received", Duration::from_millis(500), |e| {
            e["payload"]["text"] == "incoming ok"
        })
        .await
        .ok_or("no sms_received within 500 ms")?;
    let recv_ms = t.elapsed().as_millis();
    ensure!(
        e["payload"]["from"] == "+491701234567",
        "from was {}",
        e["payload"]["from"]
    );
    Ok(format!(
        "SUBMIT stored in {send_ms} ms; sms_received in {recv_ms} ms"
    ))
}

fn rtp_fields(b: &[u8]) -> Option<(u8, u16, u32, u32)> {
    (b.len() >= 12 && b[0] >> 6 == 2).then(|| {
        (
            b[1] & 0x7F,
            u16::from_be_bytes([b[2], b[3]]),
            u32::from_be_bytes([b[4], b[5], b[6], b[7]]),
            u32::from_be_bytes([b[8], b[9], b[10], b[11]]),
        )
    })
}

pub async fn e2e_call() -> Outcome {
    use cellgate::sim::state::SimCallState;
    let s = Stack::start().await;
    let rtp = tokio::net::UdpSocket::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let mut ev = s.events(None).await;
    let t = Instant::now();
    s.sim()
        .inject_call("+33611111111")
        .map_err(|e| e.to_string())?;
    let inc = ev
        .wait_for("incoming_call", Duration::from_secs(1), |_| true)
        .await
        .ok_or("no incoming_call within 1 s")?;
    let ring_ms = t.elapsed().as_millis();
    let id = inc["payload"]["id"]
        .as_str()
        .ok_or("event without call id")?
        .to_owned();
    let (st, body) = s
        .post(
            &format!("/v1/calls/{id}/answer"),
            json!({ "remote": rtp.local_addr().unwrap() }),
        )
        .await;
    ensure!(
        st == 200 && body["state"] == "active",
        "answer returned {st}: {body}"
    );
    ensure!(
        s.sim().call_state() == Some(SimCallState::Active),
        "sim call state {:?}",
        s.sim().call_state()
    );

    let mut packets = Vec::new();
    let mut buf = [0u8; 2048];
    while let Ok(Ok(n)) = tokio::time::timeout(Duration::from_millis(600), rtp.recv(&mut buf)).await
    {
        packets.push(rtp_fields(&buf[..n]).ok_or("non-RTP datagram")?);
    }
    ensure!(
        (149..=151).contains(&packets.len()),
        "{} RTP packets for 3 s of tone",
        packets.len()
    );
    for w in packets.windows(2) {
        ensure!(
            w[1].1 == w[0].1.wrapping_add(1),
            "sequence gap {} -> {}",
            w[0].1,
            w[1].1
        );
        ensure!(
            w[1].2.wrapping_sub(w[0].2) == 160,
            "timestamp stride {}",
            w[1].2.wrapping_sub(w[0].2)
        );
        ensure!(w[1].3 == w[0].3, "SSRC changed");
    }
    ensure!(packets.iter().all(|p| p.0 == 0), "payload type not PCMU");

    let t = Instant::now();
    let (st, body) = s.post(&format!("/v1/calls/{id}/hangup"), json!({})).await;
    ensure!(
        st == 200 && body["state"] == "terminated",
        "hangup returned {st}: {body}"
    );
    let sim_idle =
        super::eventually(Duration::from_secs(1), || s.sim().call_state().is_none()).await;
    let hang_ms = t.elapsed().as_millis();
    ensure!(
        sim_idle && hang_ms < 1000,
        "sim still in call after {hang_ms} ms"
    );
    Ok(format!(
        "ring event {ring_ms} ms; {} packets, gap-free, stride 160; hangup {hang_ms} ms",
        packets.len()
    ))
}

pub async fn mms_conformance() -> Outcome {
    let s = Stack::start().await;
    let (st, tx) = s
        .post(
            "/v1/mms",
            json!({
                "to": ["+33612345678"],
                "subject": "acceptance",
                "parts": [{ "text": "hello" }, { "content_type": "image/png", "data": "iVBORw0K" }],
            }),
        )
        .await;
    ensure!(
        st == 202 && tx["state"] == "confirmed",
        "send returned {st}: {tx}"
    );
    let log = s.mmsc.mmsc.log();
    let req = log
        .iter()
        .find(|e| e.kind == "send_req")
        .ok_or("MMSC saw no m-send-req")?;
    ensure!(
        req.missing.is_empty(),
        "m-send-req missing {:?}",
        req.missing
    );
    ensure!(
        tx["message_id"].as_str() == req.message_id.as_deref(),
        "confirmed with {} but conf carried {:?}",
        tx["message_id"],
        req.message_id
    );

    let mut ev = s.events(None).await;
    let d = s
        .mmsc
        .mmsc
        .deliver(mmsc::Deliver {
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
        .map_err(|e| e.to_string())?;
    ensure!(
        d.notify_status == 204,
        "notification push returned {}",
        d.notify_status
    );
    ev.wait_for("mms_notification", Duration::from_secs(2), |e| {
        e["payload"]["stage"] == "retrieved"
    })
    .await
    .ok_or("incoming MMS never retrieved")?;
    let acked = super::eventually(Duration::from_secs(2), || {
        s.mmsc
            .mmsc
            .log()
            .iter()
            .any(|e| e.kind == "acknowledge_ind")
    })
    .await;
    ensure!(acked, "no M-Acknowledge.ind");
    let kinds: Vec<String> = s.mmsc.mmsc.log().into_iter().map(|e| e.kind).collect();
    let pos = |k: &str| kinds.iter().position(|x| x == k);
    ensure!(
        pos("notifyresp_ind") < pos("get") && pos("get") < pos("acknowledge_ind"),
        "out of order: {kinds:?}"
    );

    let mut total = 0;
    for t in MessageType::ALL {
        let mut r = runner(200);
        r.run(&gen_mms(t), |p| {
            let bytes = mms::encode(&p).expect("encode");
            proptest::prop_assert_eq!(mms::decode(&bytes).expect("decode"), p);
            Ok(())
        })
        .map_err(|e| format!("{t:?}: {e}"))?;
        total += 200;
    }
    Ok(format!(
        "send confirmed with conf id; notify-resp < GET < ack; {total} randomized PDUs over 7 types roundtrip"
    ))
}

/// Randomized headers for one message type, mandatory fields filled in.
fn gen_mms(t: MessageType) -> impl Strategy<Value = mms::MmsPdu> {
    use mms::{
        Expiry, From, MessageClass, MmsBody, MmsHeaders, MmsPart, MmsPdu, MmsStatus, ResponseStatus,
    };
    use proptest::prelude::*;
    (
        "[ -~]{1,20}",
        prop::option::of("[ -~]{1,20}"),
        prop::option::of("[a-zé€ ]{1,12}"),
        prop::collection::vec("\\+[0-9]{6,12}/TYPE=PLMN", 1..3),
        any::<u32>(),
        prop::sample::select(MmsStatus::ALL.to_vec()),
        prop::collection::vec(any::<u8>(), 0..64),
        prop::option::of(any::<bool>()),
    )
        .prop_map(move |(tid, mid, subject, to, n, status, data, dr)| {
            let mut h = MmsHeaders::new();
            h.transaction_id = Some(tid);
            h.subject = subject;
            h.delivery_report = dr;
            let mut body = None;
            match t {
                MessageType::SendReq | MessageType::RetrieveConf => {
                    h.from = Some(From::InsertToken);
                    h.to = to;
                    h.date = Some(n as u64);
                    body = Some(MmsBody {
                        content_type: "application/vnd.wap.multipart.mixed".into(),
                        parts: vec![MmsPart {
                            content_type: "text/plain; charset=utf-8".into(),
                            content_id: Some("<t>".into()),
                            content_location: Some("t.txt".into()),
                            data,
                        }],
                    });
                }
                MessageType::SendConf => {
                    h.response_status = Some(ResponseStatus::from_octet(0x80 | (n as u8 & 0x7F)));
                    h.message_id = mid;
                }
                MessageType::NotificationInd => {
                    h.message_class = Some(MessageClass::Personal);
                    h.message_size = Some(n as u64);
                    h.expiry = Some(Expiry::Relative(n as u64 % 100_000));
                    h.content_location = Some("http://mmsc/x".into());
                }
                MessageType::NotifyRespInd => h.status = Some(status),
                MessageType::AcknowledgeInd => h.report_allowed = dr,
                MessageType::DeliveryInd => {
                    h.transaction_id = None;
                    h.message_id = Some(mid.unwrap_or_else(|| "m".into()));
                    h.to = to;
                    h.date = Some(n as u64);
                    h.status = Some(status);
                }
            }
            MmsPdu {
                message_type: t,
                headers: h,
                body,
            }
        })
}

pub async fn capability_gating() -> Outcome {
    let s = Stack::start().await;
    let names = |v: &serde_json::Value| -> Vec<String> {
        v["names"]
            .as_array()
            .map(|a| {
                a.iter()
                    .filter_map(|n| n.as_str().map(str::to_owned))
                    .collect()
            })
            .unwrap_or_default()
    };
    let (_, v) = s.get("/v1/services").await;
    ensure!(
        names(&v).contains(&"sms".into()),
        "sms not offered initially: {v}"
    );
    s.sim().remove_capability("+CMGS");
    let (_, v) = s.get("/v1/services").await;
    ensure!(
        !names(&v).contains(&"sms".into()),
        "sms still offered without +CMGS"
    );
    let (st, _) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "x" }))
        .await;
    ensure!(st == 503, "POST /v1/sms returned {st} without +CMGS");
    s.sim().add_capability("+CMGS");
    let (_, v) = s.get("/v1/services").await;
    ensure!(names(&v).contains(&"sms".into()), "sms not restored");
    let (st, _) = s
        .post("/v1/sms", json!({ "to": "+33612345678", "text": "x" }))
        .await;
    ensure!(st == 202, "POST /v1/sms returned {st} after restore");
    Ok("sms withdrawn (503) and restored with +CMGS".into())
}

pub async fn surveillance() -> Outcome {
    let s = Stack::start().await;
    let (st, _) = s
        .put(
            "/v1/services/surveillance",
            json!({ "alert_number": "+33698765432", "enabled": true, "message_template": "Motion at {time}" }),
        )
        .await;
    ensure!(st == 200, "configuring surveillance returned {st}");
    let before = s.sim().submits().len();
    let t = Instant::now();
    let (st, acc) = s.post("/v1/services/surveillance/motion", json!({})).await;
    ensure!(st == 202, "motion returned {st}: {acc}");
    let sent = super::eventually(Duration::from_secs(1), || s.sim().submits().len() > before).await;
    let ms = t.elapsed().as_millis();
    ensure!(sent, "no SMS at the sim within 1 s");
    let d = s
        .sim()
        .submits()
        .last()
        .cloned()
        .unwrap()
        .decoded
        .ok_or("undecodable SUBMIT")?;
    let at = acc["at"].as_str().unwrap_or_default();
    let time = chrono::DateTime::parse_from_rfc3339(at)
        .map_err(|e| format!("bad alert time {at:?}: {e}"))?
        .with_timezone(&chrono::Utc)
        .format("%Y-%m-%d %H:%M:%S UTC")
        .to_string();
    let want = format!("Motion at {time}");
    ensure!(d.destination == "+33698765432", "sent to {}", d.destination);
    ensure!(d.text == want, "text {:?}, expected {want:?}", d.text);
    Ok(format!("templated SMS at sim in {ms} ms"))
}

/// -113 dBm at n = 0, 2 dB per step.
fn affine(n: u8) -> Option<i64> {
    (n < 32).then(|| i64::from(n) * 2 - 113)
}

pub async fn status_grid() -> Outcome {
    let s = Stack::start().await;
    let ns: Vec<u8> = (0..=31).chain([99]).collect();
    let bers: Vec<u8> = (0..=7).chain([99]).collect();
    let mut checked = 0;
    for &n in &ns {
        for &ber in &bers {
            s.sim().set_signal(n, Some(ber));
            let (st, v) = s.get("/v1/modem/status").await;
            ensure!(st == 200, "status returned {st} at ({n},{ber})");
            let dbm = v["rssi_dbm"].as_i64();
            ensure!(
                dbm == affine(n),
                "n={n}: rssi {dbm:?}, expected {:?}",
                affine(n)
            );
            let class = v["ber_class"].as_u64();
            let want = (ber <= 7).then_some(u64::from(ber));
            ensure!(
                class == want,
                "ber={ber}: class {class:?}, expected {want:?}"
            );
            checked += 1;
        }
    }
    ensure!(checked == 33 * 9, "checked {checked}");
    Ok(format!("{checked} (n, ber) pairs, zero errors"))
}

pub async fn latency() -> Outcome {
    let s = Stack::start().await;
    let report = latency::measure(&s.url("/v1/modem/status"), Some(TOKEN), 1000, 10)
        .await
        .map_err(|e| e.to_string())?;
    println!("{}", report.table());
    ensure!(report.n == 1000, "n = {}", report.n);
    ensure!(report.median_ms < 50.0, "median {:.3} ms", report.median_ms);
    Ok(format!(
        "median {:.3} ms, p95 {:.3} ms over n=1000",
        report.median_ms, report.p95_ms
    ))
}
