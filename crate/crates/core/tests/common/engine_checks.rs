//! AT engine robustness checks, shared by the engine tests and the
//! acceptance runner. Each returns a one-line summary or the first failure.

use std::time::Duration;

use cellgate::at::{Arg, AtCommand, AtEngine, EngineConfig, FinalResult, UrcSubscription};
use cellgate::sim::{Sim, SimConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, DuplexStream};

const MAX_LINE: usize = 4096;

/// Lines the engine should classify for `bytes`: every maximal run of
/// non-terminator bytes, split every 4096 bytes.
fn expected_lines(bytes: &[u8]) -> u64 {
    bytes
        .split(|&b| b == b'\r' || b == b'\n')
        .filter(|s| !s.is_empty())
        .map(|s| s.len().div_ceil(MAX_LINE) as u64)
        .sum()
}

fn pair() -> (AtEngine, DuplexStream) {
    let (ours, theirs) = tokio::io::duplex(1 << 16);
    (AtEngine::start(ours, EngineConfig::default()), theirs)
}

/// Streams `n` random bytes at an idle engine, then checks it still runs
/// commands and classified every complete line exactly once.
pub async fn random_bytes(n: usize, seed: u64) -> Result<String, String> {
    let (engine, dce) = pair();
    let mut urcs = engine.subscribe_urcs();
    let drain = tokio::spawn(async move {
        let mut count = 0u64;
        while urcs.recv().await.is_some() {
            count += 1;
        }
        count
    });
    let (rd, mut wr) = tokio::io::split(dce);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut bytes = vec![0u8; n];
    rng.fill(&mut bytes[..]);
    let mut sent = 0;
    while sent < bytes.len() {
        let k = rng.gen_range(1..=4096).min(bytes.len() - sent);
        wr.write_all(&bytes[sent..sent + k])
            .await
            .map_err(|e| e.to_string())?;
        sent += k;
    }
    wr.write_all(b"\r\n").await.map_err(|e| e.to_string())?;
    let mut all = bytes;
    all.extend_from_slice(b"\r\n");
    let want = expected_lines(&all);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(20);
    while engine.stats().lines < want && tokio::time::Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    let seen = engine.stats().lines;
    if seen != want {
        return Err(format!("classified {seen} lines, expected {want}"));
    }

    let responder = tokio::spawn(async move {
        let mut rd = BufReader::new(rd);
        let mut line = Vec::new();
        let _ = rd.read_until(b'\r', &mut line).await;
        let _ = wr.write_all(b"\r\n+PROBE: alive\r\n\r\nOK\r\n").await;
        wr
    });
    let r = tokio::time::timeout(
        Duration::from_secs(10),
        engine.execute(AtCommand::execute("+PROBE")),
    )
    .await
    .map_err(|_| "engine stopped answering after fuzz".to_string())?
    .map_err(|e| format!("probe failed: {e}"))?;
    let _wr = responder.await.unwrap();
    if engine.is_closed() {
        return Err("engine closed".into());
    }
    if r.result != FinalResult::Ok || r.info.first().map(|l| l.raw_values.as_str()) != Some("alive")
    {
        return Err(format!("probe answered wrongly: {r:?}"));
    }
    let stats = engine.stats();
    if stats.lines != want + 2 {
        return Err(format!(
            "classified {} lines after the probe, expected {}",
            stats.lines,
            want + 2
        ));
    }
    drop(engine);
    drain.abort();
    Ok(format!(
        "{n} random bytes, {} lines classified once each",
        stats.lines
    ))
}

const URCS: &[(&str, &str)] = &[
    ("RING", ""),
    ("+CRING", "VOICE"),
    ("+CMTI", "\"SM\",3"),
    ("+CREG", "1"),
    ("+CLIP", "\"+33612345678\",145"),
    ("+CUSD", "0,\"balance\",15"),
];

const FINALS: &[(&str, FinalResult)] = &[
    ("OK", FinalResult::Ok),
    ("OK", FinalResult::Ok),
    ("ERROR", FinalResult::Error),
    ("+CME ERROR: 21", FinalResult::CmeError(21)),
    ("+CMS ERROR: 331", FinalResult::CmsError(331)),
    ("NO CARRIER", FinalResult::NoCarrier),
    ("BUSY", FinalResult::Busy),
];

struct Script {
    bytes: Vec<Vec<u8>>,
    info: Vec<String>,
    urcs: Vec<(String, String)>,
    result: FinalResult,
}

fn terminate(rng: &mut StdRng, line: &str) -> String {
    match rng.gen_range(0..4) {
        0 => format!("\r\n{line}\r\n"),
        1 => format!("{line}\r"),
        2 => format!("{line}\n"),
        _ => format!("\n{line}\r\n"),
    }
}

/// The response the fake modem sends for command `i`, with URCs mixed in
/// between lines and the whole thing cut into random chunks.
fn script(seed: u64, i: u64) -> Script {
    let mut rng = StdRng::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = String::new();
    let mut urcs = Vec::new();
    let mut info = Vec::new();
    if rng.gen_bool(0.3) {
        out += &terminate(&mut rng, &format!("AT+XQ={i}"));
    }
    let n_info = rng.gen_range(0..5);
    for j in 0..n_info {
        while rng.gen_bool(0.25) {
            let (p, v) = URCS[rng.gen_range(0..URCS.len())];
            let line = if v.is_empty() {
                p.to_string()
            } else {
                format!("{p}: {v}")
            };
            out += &terminate(&mut rng, &line);
            urcs.push((p.to_string(), v.to_string()));
        }
        let line = if rng.gen_bool(0.7) {
            format!("+XQ: {i},{j}")
        } else {
            format!("DATA {i} {j}")
        };
        out += &terminate(&mut rng, &line);
        info.push(line);
    }
    if rng.gen_bool(0.25) {
        let (p, v) = URCS[rng.gen_range(0..URCS.len())];
        let line = if v.is_empty() {
            p.to_string()
        } else {
            format!("{p}: {v}")
        };
        out += &terminate(&mut rng, &line);
        urcs.push((p.to_string(), v.to_string()));
    }
    let (text, result) = FINALS[rng.gen_range(0..FINALS.len())];
    out += &terminate(&mut rng, text);
    // an unsolicited line after the final result, before the next command
    if rng.gen_bool(0.2) {
        let (p, v) = URCS[rng.gen_range(0..URCS.len())];
        let line = if v.is_empty() {
            p.to_string()
        } else {
            format!("{p}: {v}")
        };
        out += &format!("\r\n{line}\r\n");
        urcs.push((p.to_string(), v.to_string()));
    }
    let raw = out.into_bytes();
    let mut bytes = Vec::new();
    let mut p = 0;
    while p < raw.len() {
        let k = rng.gen_range(1..=24).min(raw.len() - p);
        bytes.push(raw[p..p + k].to_vec());
        p += k;
    }
    Script {
        bytes,
        info,
        urcs,
        result,
    }
}

async fn collect_urcs(sub: &mut UrcSubscription, want: usize) -> Vec<(String, String)> {
    let mut got = Vec::new();
    while got.len() < want {
        match tokio::time::timeout(Duration::from_secs(2), sub.recv()).await {
            Ok(Some(u)) => got.push((u.prefix, u.payload)),
            _ => break,
        }
    }
    got
}

/// Runs `n` commands against a fake modem that interleaves URCs, echoes and
/// mixed terminators; every command must get exactly its own lines and every
/// URC must reach the subscriber in order.
pub async fn valid_interleavings(n: u64, seed: u64) -> Result<String, String> {
    let (engine, dce) = pair();
    let mut sub = engine.subscribe_urcs();
    let (rd, mut wr) = tokio::io::split(dce);
    let dce_task = tokio::spawn(async move {
        let mut rd = BufReader::new(rd);
        let mut line = Vec::new();
        loop {
            line.clear();
            match rd.read_until(b'\r', &mut line).await {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
            let text = String::from_utf8_lossy(&line);
            let Some(i) = text
                .trim()
                .strip_prefix("AT+XQ=")
                .and_then(|s| s.parse::<u64>().ok())
            else {
                break;
            };
            for chunk in script(seed, i).bytes {
                if wr.write_all(&chunk).await.is_err() {
                    return;
                }
            }
        }
    });

    let mut urcs_expected = 0usize;
    let mut urc_seen = Vec::new();
    let mut urc_want = Vec::new();
    for i in 0..n {
        let s = script(seed, i);
        let r = engine
            .execute(AtCommand::set("+XQ", [i as i64]))
            .await
            .map_err(|e| format!("command {i}: {e}"))?;
        let got: Vec<&str> = r.info.iter().map(|l| l.line.as_str()).collect();
        if got != s.info {
            return Err(format!("command {i}: info {got:?}, expected {:?}", s.info));
        }
        if r.result != s.result {
            return Err(format!(
                "command {i}: result {:?}, expected {:?}",
                r.result, s.result
            ));
        }
        urcs_expected += s.urcs.len();
        urc_want.extend(s.urcs);
        while let Some(u) = sub.try_recv() {
            urc_seen.push((u.prefix, u.payload));
        }
    }
    urc_seen
        .extend(collect_urcs(&mut sub, urcs_expected - urc_seen.len().min(urcs_expected)).await);
    drop(engine);
    dce_task.abort();
    if urc_seen != urc_want {
        let at = urc_seen.iter().zip(&urc_want).position(|(a, b)| a != b);
        return Err(format!(
            "URC stream differs (got {}, want {}, first mismatch at {at:?})",
            urc_seen.len(),
            urc_want.len()
        ));
    }
    Ok(format!(
        "{n} interleaved exchanges, {} URCs routed in order",
        urc_want.len()
    ))
}

/// `submitters` tasks hammer one engine concurrently; the fake modem answers
/// each command with its own argument. At most one command may ever be in
/// flight and nobody may receive someone else's answer.
pub async fn single_flight(submitters: u64, per_task: u64) -> Result<String, String> {
    let (engine, dce) = pair();
    let (rd, mut wr) = tokio::io::split(dce);
    let dce_task = tokio::spawn(async move {
        let mut rd = BufReader::new(rd);
        let mut line = Vec::new();
        let mut rng = StdRng::seed_from_u64(7);
        loop {
            line.clear();
            match rd.read_until(b'\r', &mut line).await {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
            let text = String::from_utf8_lossy(&line).trim().to_string();
            let arg = text.strip_prefix("AT+SF=").unwrap_or("?").to_string();
            for _ in 0..rng.gen_range(0..4) {
                tokio::task::yield_now().await;
            }
            let reply = format!("\r\n+SF: {arg}\r\n\r\nOK\r\n");
            if wr.write_all(reply.as_bytes()).await.is_err() {
                break;
            }
        }
    });
    let mut tasks = Vec::new();
    for t in 0..submitters {
        let engine = engine.clone();
        tasks.push(tokio::spawn(async move {
            for k in 0..per_task {
                let id = (t * 1_000_000 + k) as i64;
                let r = engine
                    .execute(AtCommand::set("+SF", [id]))
                    .await
                    .map_err(|e| e.to_string())?;
                let got = r.first("+SF").map(|l| l.raw_values.clone());
                if got.as_deref() != Some(id.to_string().as_str()) || r.info.len() != 1 {
                    return Err(format!("submitter {t} sent {id} but got {:?}", r.info));
                }
            }
            Ok::<_, String>(())
        }));
    }
    for t in tasks {
        t.await.map_err(|e| e.to_string())??;
    }
    let stats = engine.stats();
    dce_task.abort();
    if stats.max_in_flight != 1 {
        return Err(format!("max in flight was {}", stats.max_in_flight));
    }
    let total = submitters * per_task;
    if stats.executed != total {
        return Err(format!("executed {} of {total}", stats.executed));
    }
    Ok(format!(
        "{submitters} submitters x {per_task} commands, max in flight 1"
    ))
}

/// The simulator slips `+CRING: VOICE` between two `+CPBR` lines; the
/// command must see only its phonebook lines and the URC must go to the
/// subscriber.
pub async fn sim_urc_isolation(id: &str) -> Result<String, String> {
    let sim = Sim::new(SimConfig::default());
    let _server = sim.listen_mem(id).map_err(|e| e.to_string())?;
    let stream = cellgate::at::transport::mem_connect(id).map_err(|e| e.to_string())?;
    let engine = AtEngine::start(stream, EngineConfig::default());
    let mut sub = engine.subscribe_urcs();
    let run = |c: AtCommand| {
        let engine = engine.clone();
        async move { engine.execute(c).await.map_err(|e| e.to_string()) }
    };
    run(AtCommand::execute("E0")).await?;
    for (i, name) in [(1i64, "Alice"), (2, "Bob")] {
        let r = run(AtCommand::set(
            "+CPBW",
            [Arg::Int(i), "+33611".into(), Arg::Int(145), name.into()],
        ))
        .await?;
        if !r.is_ok() {
            return Err(format!("CPBW failed: {r:?}"));
        }
    }
    while sub.try_recv().is_some() {}
    sim.interleave_next("+CRING: VOICE");
    let r = run(AtCommand::set("+CPBR", [1i64, 2])).await?;
    let prefixes: Vec<&str> = r.info.iter().map(|l| l.prefix.as_str()).collect();
    if prefixes != ["+CPBR", "+CPBR"] || !r.is_ok() {
        return Err(format!("CPBR response polluted: {:?}", r.info));
    }
    let u = tokio::time::timeout(Duration::from_secs(1), sub.recv())
        .await
        .ok()
        .flatten()
        .ok_or("URC not delivered")?;
    if (u.prefix.as_str(), u.payload.as_str()) != ("+CRING", "VOICE") {
        return Err(format!("unexpected URC {u:?}"));
    }
    Ok("+CRING inside +CPBR routed to subscriber only".into())
}
