use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use base64::Engine as _;
use clap::{Args, Parser, Subcommand};
use futures::StreamExt;
use serde_json::{json, Value};

use cellgate::gateway::{self, latency, GatewayConfig};
use cellgate::mms;
use cellgate::sim::{MockMmsc, Sim, SimConfig};
use cellgate::sms;

#[derive(Parser)]
#[command(name = "cellgate", version, about = "Cellular modem gateway and tools")]
struct Cli {
    /// Gateway base URL.
    #[arg(
        long,
        global = true,
        env = "CELLGATE_URL",
        default_value = "http://127.0.0.1:8080"
    )]
    url: String,
    /// Bearer token.
    #[arg(long, global = true, env = "CELLGATE_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Gateway config file (serve).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the gateway.
    Serve {
        #[arg(long)]
        http_bind: Option<SocketAddr>,
        #[arg(long)]
        transport: Option<String>,
    },
    /// Run the modem simulator (and optionally a mock MMSC).
    Sim {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// AT port; control is port+1, audio port+2.
        #[arg(long, default_value_t = 7000)]
        port: u16,
        /// Simulator settings as JSON.
        #[arg(long)]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        mmsc_port: Option<u16>,
    },
    #[command(subcommand)]
    Sms(SmsCmd),
    #[command(subcommand)]
    Mms(MmsCmd),
    #[command(subcommand)]
    Call(CallCmd),
    #[command(subcommand)]
    Phonebook(PhonebookCmd),
    /// Stream gateway events, one JSON object per line.
    Events {
        /// Resume after this sequence number.
        #[arg(long)]
        after: Option<u64>,
        /// Exit after this many events.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Modem status.
    Status,
    /// Offline SMS PDU codec.
    #[command(subcommand)]
    Pdu(PduCmd),
    /// Offline MMS PDU codec.
    #[command(subcommand)]
    Mmspdu(MmsPduCmd),
    /// Latency of repeated GETs over one kept-alive connection.
    Bench {
        #[arg(long, default_value = "/v1/modem/status")]
        endpoint: String,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
    },
}

#[derive(Subcommand)]
enum SmsCmd {
    Send {
        #[arg(long)]
        to: String,
        #[arg(long)]
        text: String,
    },
    List {
        #[arg(long = "box", default_value = "all")]
        mailbox: String,
        #[arg(long, default_value = "SM")]
        storage: String,
    },
}

#[derive(Subcommand)]
enum MmsCmd {
    Send {
        #[arg(long, required = true)]
        to: Vec<String>,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        text: Option<String>,
        /// Attach a file; content type from the extension.
        #[arg(long)]
        file: Vec<PathBuf>,
        #[arg(long)]
        delivery_report: bool,
    },
}

#[derive(Subcommand)]
enum CallCmd {
    Dial {
        #[arg(long)]
        to: String,
        /// RTP peer address.
        #[arg(long)]
        remote: Option<SocketAddr>,
    },
    Answer {
        id: String,
        #[arg(long)]
        remote: Option<SocketAddr>,
    },
    Hangup {
        id: String,
    },
    Status {
        id: Option<String>,
    },
}

#[derive(Subcommand)]
enum PhonebookCmd {
    List,
    Add {
        #[arg(long)]
        number: String,
        #[arg(long)]
        text: String,
    },
    Find {
        prefix: String,
    },
}

#[derive(Subcommand)]
enum PduCmd {
    /// Encode a SUBMIT from --to/--text, or any PDU from its JSON form
    /// (argument or stdin).
    Encode(PduEncode),
    /// Decode a PDU hex string to JSON.
    Decode { hex: String },
}

#[derive(Args)]
struct PduEncode {
    #[arg(long, requires = "text")]
    to: Option<String>,
    #[arg(long, requires = "to")]
    text: Option<String>,
    json: Option<String>,
}

#[derive(Subcommand)]
enum MmsPduCmd {
    /// Encode the JSON form (argument or stdin) to hex.
    Encode { json: Option<String> },
    /// Decode hex to JSON.
    Decode { hex: String },
}

enum Failure {
    Usage(String),
    Api(String),
}

impl From<reqwest::Error> for Failure {
    fn from(e: reqwest::Error) -> Self {
        Failure::Api(if e.is_connect() {
            format!("cannot connect to gateway: {e}")
        } else {
            e.to_string()
        })
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CELLGATE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Api(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

struct Api {
    base: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl Api {
    fn new(cli: &Cli) -> Self {
        Api {
            base: cli.url.trim_end_matches('/').to_owned(),
            token: cli.token.clone(),
            http: reqwest::Client::new(),
        }
    }

    fn req(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let r = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    async fn send(&self, r: reqwest::RequestBuilder) -> Result<Value, Failure> {
        let resp = r.send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        let body: Value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        if status.is_success() {
            Ok(body)
        } else {
            let msg = body["message"]
                .as_str()
                .map(str::to_owned)
                .unwrap_or_else(|| body.to_string());
            Err(Failure::Api(format!("HTTP {status}: {msg}")))
        }
    }

    async fn get(&self, path: &str) -> Result<Value, Failure> {
        self.send(self.req(reqwest::Method::GET, path)).await
    }

    async fn post(&self, path: &str, body: Value) -> Result<Value, Failure> {
        self.send(self.req(reqwest::Method::POST, path).json(&body))
            .await
    }
}

fn print(v: &Value, pretty: bool) {
    if !pretty {
        println!("{v}");
        return;
    }
    match v {
        Value::Array(rows) if rows.iter().all(Value::is_object) && !rows.is_empty() => {
            print_table(rows);
        }
        Value::Object(m) => {
            let w = m.keys().map(String::len).max().unwrap_or(0);
            for (k, val) in m {
                println!("{k:<w$}  {}", scalar(val));
            }
        }
        other => println!(
            "{}",
            serde_json::to_string_pretty(other).unwrap_or_default()
        ),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn print_table(rows: &[Value]) {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        for k in r.as_object().into_iter().flat_map(|o| o.keys()) {
            if !cols.contains(k) && !r[k].is_object() && !r[k].is_array() {
                cols.push(k.clone());
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| scalar(&r[c])).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| {
            cells
                .iter()
                .map(|r| r[i].chars().count())
                .max()
                .unwrap_or(0)
                .max(c.len())
        })
        .collect();
    let line = |vals: &[String]| {
        vals.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(&cols));
    for r in &cells {
        println!("{}", line(r));
    }
}

fn json_input(arg: Option<String>) -> Result<Value, Failure> {
    let text = match arg {
        Some(t) if t != "-" => t,
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Usage(format!("reading stdin: {e}")))?;
            s
        }
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid JSON: {e}")))
}

async fn run(cli: Cli) -> CliResult {
    let api = Api::new(&cli);
    let pretty = cli.pretty;
    match cli.cmd {
        Cmd::Serve {
            http_bind,
            transport,
        } => serve(cli.config, http_bind, transport).await,
        Cmd::Sim {
            host,
            port,
            sim_config,
            mmsc_port,
        } => run_sim(&host, port, sim_config, mmsc_port).await,
        Cmd::Sms(SmsCmd::Send { to, text }) => {
            print(
                &api.post("/v1/sms", json!({ "to": to, "text": text }))
                    .await?,
                pretty,
            );
            Ok(())
        }
        Cmd::Sms(SmsCmd::List { mailbox, storage }) => {
            let v = api
                .send(
                    api.req(reqwest::Method::GET, "/v1/sms")
                        .query(&[("box", mailbox), ("storage", storage)]),
                )
                .await?;
            print(&v, pretty);
            Ok(())
        }
        Cmd::Mms(MmsCmd::Send {
            to,
            subject,
            text,
            file,
            delivery_report,
        }) => {
            let mut parts = Vec::new();
            if let Some(t) = text {
                parts.push(json!({ "content_type": "text/plain; charset=utf-8", "text": t }));
            }
            for f in &file {
                let data = std::fs::read(f)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", f.display())))?;
                let name = f
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                parts.push(json!({
                    "content_type": gateway::share::content_type_for(&name),
                    "content_location": name,
                    "data": base64::engine::general_purpose::STANDARD.encode(data),
                }));
            }
            if parts.is_empty() {
                return Err(Failure::Usage("give --text or --file".into()));
            }
            let body = json!({ "to": to, "subject": subject, "parts": parts, "delivery_report": delivery_report });
            print(&api.post("/v1/mms", body).await?, pretty);
            Ok(())
        }
        Cmd::Call(c) => {
            let v = match c {
                CallCmd::Dial { to, remote } => {
                    api.post("/v1/calls", json!({ "to": to, "remote": remote }))
                        .await?
                }
                CallCmd::Answer { id, remote } => {
                    api.post(
                        &format!("/v1/calls/{id}/answer"),
                        json!({ "remote": remote }),
                    )
                    .await?
                }
                CallCmd::Hangup { id } => {
                    api.post(&format!("/v1/calls/{id}/hangup"), json!({}))
                        .await?
                }
                CallCmd::Status { id: Some(id) } => api.get(&format!("/v1/calls/{id}")).await?,
                CallCmd::Status { id: None } => api.get("/v1/calls").await?,
            };
            print(&v, pretty);
            Ok(())
        }
        Cmd::Phonebook(p) => {
            let v = match p {
                PhonebookCmd::List => api.get("/v1/phonebook").await?,
                PhonebookCmd::Add { number, text } => {
                    api.post("/v1/phonebook", json!({ "number": number, "text": text }))
                        .await?
                }
                PhonebookCmd::Find { prefix } => {
                    api.send(
                        api.req(reqwest::Method::GET, "/v1/phonebook")
                            .query(&[("find", prefix)]),
                    )
                    .await?
                }
            };
            print(&v, pretty);
            Ok(())
        }
        Cmd::Events { after, count } => events(&api, after, count).await,
        Cmd::Status => {
            print(&api.get("/v1/modem/status").await?, pretty);
            Ok(())
        }
        Cmd::Pdu(PduCmd::Decode { hex }) => {
            let pdu = sms::decode(hex.trim()).map_err(|e| Failure::Api(format!("decode: {e}")))?;
            print(&serde_json::to_value(pdu).unwrap_or_default(), pretty);
            Ok(())
        }
        Cmd::Pdu(PduCmd::Encode(e)) => pdu_encode(e, pretty),
        Cmd::Mmspdu(MmsPduCmd::Decode { hex }) => {
            let bytes =
                hex::decode(hex.trim()).map_err(|e| Failure::Usage(format!("bad hex: {e}")))?;
            let pdu = mms::decode(&bytes).map_err(|e| Failure::Api(format!("decode: {e}")))?;
            print(&serde_json::to_value(pdu).unwrap_or_default(), pretty);
            Ok(())
        }
        Cmd::Mmspdu(MmsPduCmd::Encode { json }) => {
            let pdu: mms::MmsPdu = serde_json::from_value(json_input(json)?)
                .map_err(|e| Failure::Usage(format!("not an MMS PDU: {e}")))?;
            let bytes = mms::encode(&pdu).map_err(|e| Failure::Api(format!("encode: {e}")))?;
            println!("{}", hex::encode_upper(bytes));
            Ok(())
        }
        Cmd::Bench {
            endpoint,
            n,
            warmup,
        } => {
            if n == 0 {
                return Err(Failure::Usage("n must be positive".into()));
            }
            let url = format!("{}{endpoint}", api.base);
            let report = latency::measure(&url, api.token.as_deref(), n, warmup)
                .await
                .map_err(|e| Failure::Api(e.to_string()))?;
            if pretty {
                print!("{}", report.table());
            } else {
                print(&serde_json::to_value(report).unwrap_or_default(), false);
            }
            Ok(())
        }
    }
}

fn pdu_encode(e: PduEncode, pretty: bool) -> CliResult {
    if let (Some(to), Some(text)) = (&e.to, &e.text) {
        let dest: sms::Address = to
            .parse()
            .map_err(|err| Failure::Usage(format!("--to: {err}")))?;
        let parts = sms::build_submits(&dest, text, 0, None)
            .map_err(|err| Failure::Api(format!("encode: {err}")))?;
        let out: Vec<Value> = parts
            .into_iter()
            .map(|(pdu, len)| json!({ "pdu": pdu, "length": len }))
            .collect();
        print(&Value::Array(out), pretty);
        return Ok(());
    }
    let pdu: sms::SmsPdu = serde_json::from_value(json_input(e.json)?)
        .map_err(|err| Failure::Usage(format!("not an SMS PDU: {err}")))?;
    let hex = match &pdu {
        sms::SmsPdu::Submit(s) => sms::encode_submit(s).map(|(h, _)| h),
        sms::SmsPdu::Deliver(d) => sms::encode_deliver(d),
    }
    .map_err(|err| Failure::Api(format!("encode: {err}")))?;
    println!("{hex}");
    Ok(())
}

async fn events(api: &Api, after: Option<u64>, count: Option<usize>) -> CliResult {
    let mut r = api.req(reqwest::Method::GET, "/v1/events");
    if let Some(a) = after {
        r = r.header("Last-Event-ID", a.to_string());
    }
    let resp = r.send().await?;
    if !resp.status().is_success() {
        return Err(Failure::Api(format!("HTTP {}", resp.status())));
    }
    let mut stream = resp.bytes_stream();
    let mut buf = String::new();
    let mut seen = 0usize;
    while let Some(chunk) = stream.next().await {
        buf.push_str(&String::from_utf8_lossy(&chunk?));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let data: Vec<&str> = block
                .lines()
                .filter_map(|l| l.strip_prefix("data:"))
                .map(str::trim_start)
                .collect();
            if data.is_empty() {
                continue;
            }
            println!("{}", data.join("\n"));
            seen += 1;
            if count.is_some_and(|c| seen >= c) {
                return Ok(());
            }
        }
    }
    Err(Failure::Api("event stream closed".into()))
}

async fn serve(
    config: Option<PathBuf>,
    http_bind: Option<SocketAddr>,
    transport: Option<String>,
) -> CliResult {
    let mut cfg =
        GatewayConfig::resolve(config.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(b) = http_bind {
        cfg.http_bind = b;
    }
    if let Some(t) = transport {
        cfg.transport = t
            .parse()
            .map_err(|e| Failure::Usage(format!("--transport: {e}")))?;
    }
    let running = gateway::spawn(cfg)
        .await
        .map_err(|e| Failure::Api(e.to_string()))?;
    eprintln!("gateway listening on {}", running.url());
    let _ = tokio::signal::ctrl_c().await;
    running.stop();
    Ok(())
}

async fn run_sim(
    host: &str,
    port: u16,
    sim_config: Option<PathBuf>,
    mmsc_port: Option<u16>,
) -> CliResult {
    let cfg: SimConfig = match sim_config {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    let sim = Sim::new(cfg);
    let server = sim
        .listen_tcp(host, port)
        .await
        .map_err(|e| Failure::Api(format!("binding simulator: {e}")))?;
    let mut info = json!({ "ports": server.ports.map(|p| json!({
        "at": p.at, "control": p.control, "audio": p.audio,
    })) });
    let _mmsc = match mmsc_port {
        Some(p) => {
            let m = MockMmsc::new()
                .listen(host, p)
                .await
                .map_err(|e| Failure::Api(format!("binding mock MMSC: {e}")))?;
            info["mmsc_url"] = json!(m.url());
            Some(m)
        }
        None => None,
    };
    println!("{info}");
    let _ = tokio::signal::ctrl_c().await;
    drop(server);
    Ok(())
}
