mod common;

use std::process::{Command, Output, Stdio};
use std::time::Duration;

use common::{Stack, TOKEN};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, BufReader};

const BIN: &str = env!("CARGO_BIN_EXE_cellgate");
const DELIVER: &str = "00040B913316325476F800004230510103544008C834888E2ECBCB";

fn cellgate(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CELLGATE_URL")
        .env_remove("CELLGATE_TOKEN")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn pdu_decode_known_deliver() {
    let o = cellgate(&["pdu", "decode", DELIVER]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let s = v.to_string();
    assert!(s.contains("33612345678"), "{s}");
    assert!(s.contains("Hi there"), "{s}");
}

#[test]
fn pdu_json_roundtrip_is_identity() {
    let decoded = stdout(&cellgate(&["pdu", "decode", DELIVER]));
    let o = cellgate(&["pdu", "encode", decoded.trim()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), DELIVER);
    let again = stdout(&cellgate(&["pdu", "decode", stdout(&o).trim()]));
    assert_eq!(again, decoded);
}

#[test]
fn pdu_encode_submit_then_decode() {
    let text = "roundtrip ".repeat(20);
    let o = cellgate(&["pdu", "encode", "--to", "+33612345678", "--text", &text]);
    assert!(o.status.success());
    let parts: Vec<Value> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(parts.len(), 2);
    for p in &parts {
        let hex = p["pdu"].as_str().unwrap();
        let d = cellgate(&["pdu", "decode", hex]);
        assert!(d.status.success());
        let back = stdout(&cellgate(&["pdu", "encode", stdout(&d).trim()]));
        assert_eq!(back.trim(), hex);
    }
}

#[test]
fn mmspdu_roundtrip() {
    let hex = "8C83985431008D929583";
    let d = cellgate(&["mmspdu", "decode", hex]);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
    let e = cellgate(&["mmspdu", "encode", stdout(&d).trim()]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert_eq!(stdout(&e).trim().to_ascii_uppercase(), hex);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cellgate(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        cellgate(&["sms", "send", "--to", "+331"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cellgate(&["pdu", "encode", "{not json"]).status.code(),
        Some(2)
    );
    assert_eq!(cellgate(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_pdu_is_an_error_not_a_crash() {
    let o = cellgate(&["pdu", "decode", "ZZ"]);
    assert!(matches!(o.status.code(), Some(1 | 2)), "{:?}", o.status);
    assert!(!o.stderr.is_empty());
}

#[test]
fn connection_refused_exits_1() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let o = cellgate(&["--url", &url, "--token", TOKEN, "status"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("connect"), "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn sms_send_against_gateway() {
    let s = Stack::start().await;
    let url = s.gw.url();
    let o = tokio::task::spawn_blocking(move || {
        cellgate(&[
            "--url",
            &url,
            "--token",
            TOKEN,
            "sms",
            "send",
            "--to",
            "+33612345678",
            "--text",
            "hello",
        ])
    })
    .await
    .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["segments"], 1);
    assert!(v["id"].is_string() || v["id"].is_number(), "{v}");
    assert_eq!(
        s.sim()
            .submits()
            .last()
            .unwrap()
            .decoded
            .as_ref()
            .unwrap()
            .text,
        "hello"
    );

    let url = s.gw.url();
    let o = tokio::task::spawn_blocking(move || {
        cellgate(&["--url", &url, "--token", "wrong-token-xxxxxxxx", "status"])
    })
    .await
    .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[tokio::test(flavor = "multi_thread")]
async fn events_prints_incoming_call() {
    let s = Stack::start().await;
    let mut child = tokio::process::Command::new(BIN)
        .args(["--url", &s.gw.url(), "--token", TOKEN, "events"])
        .stdout(Stdio::piped())
        .kill_on_drop(true)
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    // give the subscription a moment to attach before ringing
    tokio::time::sleep(Duration::from_millis(300)).await;
    s.sim().inject_call("+33611111111").unwrap();
    let found = tokio::time::timeout(Duration::from_secs(1), async {
        while let Ok(Some(l)) = lines.next_line().await {
            let v: Value = serde_json::from_str(&l).unwrap();
            if v["kind"] == "incoming_call" {
                return Some(v);
            }
        }
        None
    })
    .await
    .expect("incoming_call within 1 s")
    .expect("event line");
    assert!(found["payload"]["id"].is_string(), "{found}");
    assert_eq!(found["payload"]["direction"], "incoming");
}
