use std::sync::{Arc, Mutex};
use std::time::Duration;

use cellgate::sim::{Sim, SimConfig};
use cellgate::sms::{encode_submit, SmsSubmit};
use chrono::TimeZone;
use tokio::io::{AsyncReadExt, AsyncWriteExt};

enum Step {
    At(&'static str),
    Raw(String),
    Sms(&'static str, String),
    Call(&'static str),
    Hangup,
    Signal(u8),
    Registration(u8),
    Wait(u64),
}

fn script() -> Vec<Step> {
    use Step::*;
    let (pdu, len) = encode_submit(&SmsSubmit::text(
        "+33612345678".parse().unwrap(),
        "deterministic",
    ))
    .unwrap();
    vec![
        At("ATE0"),
        At("AT+CMEE=1"),
        At("AT+CGMI"),
        At("AT+CRC=1"),
        At("AT+CLIP=1"),
        At("AT+CNMI=2,1"),
        At("AT+CMGF=0"),
        Signal(23),
        At("AT+CSQ"),
        Sms("+491701234567", "first message".into()),
        Sms("+491701234567", "long ".repeat(40)),
        Wait(1500),
        At("AT+CMGL=4"),
        At("AT+CMGR=1"),
        Raw(format!("AT+CMGS={len}\r")),
        Wait(20),
        Raw(format!("{pdu}\x1A")),
        Wait(20),
        Call("+33699999999"),
        Wait(4500),
        At("ATA"),
        Wait(300),
        At("AT+CHUP"),
        At("ATD+33612345678;"),
        Wait(800),
        At("AT+CLCC"),
        Hangup,
        Registration(0),
        Raw(format!("AT+CMGS={len}\r")),
        Wait(20),
        Raw(format!("{pdu}\x1A")),
        At("AT+CPBW=,\"+331\",145,\"A\""),
        At("AT+CPBR=1,5"),
        At("AT+NOPE"),
        Wait(100),
    ]
}

fn transcript() -> Vec<u8> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .start_paused(true)
        .build()
        .unwrap();
    rt.block_on(async {
        let sim = Sim::new(SimConfig {
            clock_base: Some(
                chrono::Utc
                    .with_ymd_and_hms(2024, 3, 15, 10, 30, 0)
                    .unwrap(),
            ),
            ring_interval_ms: 2000,
            dial_delay_ms: 500,
            ..Default::default()
        });
        let (ours, theirs) = tokio::io::duplex(1 << 16);
        sim.serve_at(theirs);
        let (mut rd, mut wr) = tokio::io::split(ours);
        let log = Arc::new(Mutex::new(Vec::new()));
        let sink = log.clone();
        tokio::spawn(async move {
            let mut buf = [0u8; 512];
            while let Ok(n) = rd.read(&mut buf).await {
                if n == 0 {
                    break;
                }
                sink.lock().unwrap().extend_from_slice(&buf[..n]);
            }
        });
        for step in script() {
            match step {
                Step::At(cmd) => {
                    wr.write_all(format!("{cmd}\r").as_bytes()).await.unwrap();
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
                Step::Raw(bytes) => wr.write_all(bytes.as_bytes()).await.unwrap(),
                Step::Sms(from, text) => {
                    sim.inject_sms(from, &text).unwrap();
                }
                Step::Call(from) => sim.inject_call(from).unwrap(),
                Step::Hangup => {
                    sim.remote_hangup();
                }
                Step::Signal(n) => sim.set_signal(n, Some(0)),
                Step::Registration(s) => sim.set_registration(s),
                Step::Wait(ms) => tokio::time::sleep(Duration::from_millis(ms)).await,
            }
            tokio::task::yield_now().await;
        }
        let out = log.lock().unwrap().clone();
        out
    })
}

#[test]
fn same_script_same_bytes() {
    let a = transcript();
    let b = transcript();
    let text = String::from_utf8_lossy(&a);
    assert!(text.contains("+CSQ: 23,0"), "{text}");
    assert_eq!(text.matches("+CRING: VOICE").count(), 3, "{text}");
    assert!(text.contains("+CLIP: \"+33699999999\",145"));
    assert!(text.contains("+CMS ERROR"), "{text}");
    // SCTS 2024-03-15 10:30:00 in swapped-nibble BCD
    assert!(text.contains("42305101030"), "{text}");
    assert_eq!(
        a,
        b,
        "transcripts differ:\n{}\n----\n{}",
        text,
        String::from_utf8_lossy(&b)
    );
}
