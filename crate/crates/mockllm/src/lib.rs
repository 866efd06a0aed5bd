//! A scripted, OpenAI-style chat-completion endpoint.
//!
//! A script is a TOML file of rules. Each request is matched against the
//! rules in order: the `Task:` tag of the system message, the `Function:`
//! named in the first user message, and plain substring conditions over
//! the whole conversation. The first matching rule answers; when it has
//! several responses the request's `seed` picks one (`seed % len`), so
//! parallel samples of one prompt can differ while staying reproducible.
//!
//! ```toml
//! model = "mock-1"
//!
//! [[rule]]
//! task = "controller"
//! contains = ["Last step: code_agent (success)"]
//! responses = ['{"tool": "validate_agent"}']
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::thread::JoinHandle;

use anyhow::{bail, Context};
use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    /// Value of the `Task:` line in the system message.
    pub task: Option<String>,
    /// Value of the `Function:` line in the first user message.
    pub function: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub not_contains: Vec<String>,
    #[serde(default)]
    pub responses: Vec<String>,
    /// Answer with this HTTP status instead of a completion.
    pub status: Option<u16>,
    /// Sample indices that get a 500 while the others succeed.
    #[serde(default)]
    pub fail_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default, rename = "rule")]
    pub rules: Vec<Rule>,
}

fn default_model() -> String {
    "mock-1".into()
}

/// What the endpoint sends back for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Completion(String),
    Status(u16, String),
}

fn line_value(re: &'static OnceLock<Regex>, pattern: &str, text: &str) -> Option<String> {
    re.get_or_init(|| Regex::new(pattern).expect("static pattern"))
        .captures(text)
        .map(|c| c[1].trim().to_string())
}

fn task_of(system: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    line_value(&RE, r"(?m)^Task:\s*(\S+)", system)
}

fn function_of(user: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    line_value(&RE, r"(?m)^Function:\s*(\S+)", user)
}

impl Script {
    pub fn from_toml_str(src: &str) -> anyhow::Result<Self> {
        let script: Script = toml::from_str(src).context("parsing mock script")?;
        for (i, r) in script.rules.iter().enumerate() {
            if r.responses.is_empty() && r.status.is_none() {
                bail!("rule {} has neither responses nor a status", i + 1);
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Answers one chat-completion request body.
    pub fn respond(&self, request: &Value) -> Reply {
        let messages = request["messages"].as_array().cloned().unwrap_or_default();
        let content = |m: &Value| m["content"].as_str().unwrap_or_default().to_string();
        let system = messages
            .iter()
            .filter(|m| m["role"] == "system")
            .map(content)
            .collect::<Vec<_>>()
            .join("\n");
        let first_user = messages
            .iter()
            .find(|m| m["role"] == "user")
            .map(content)
            .unwrap_or_default();
        let all: String = messages.iter().map(content).collect::<Vec<_>>().join("\n");
        let task = task_of(&system);
        let function = function_of(&first_user);
        let seed = request["seed"].as_u64().unwrap_or(0);

        let hit = self.rules.iter().find(|r| {
            r.task.as_ref().is_none_or(|t| Some(t) == task.as_ref())
                && r.function
                    .as_ref()
                    .is_none_or(|f| Some(f) == function.as_ref())
                && r.contains.iter().all(|c| all.contains(c.as_str()))
                && !r.not_contains.iter().any(|c| all.contains(c.as_str()))
        });
        match hit {
            None => Reply::Status(
                422,
                format!("no rule matches task {task:?} function {function:?}"),
            ),
            Some(r) if r.fail_seeds.contains(&seed) => {
                Reply::Status(500, "injected failure".into())
            }
            Some(Rule {
                status: Some(s), ..
            }) => Reply::Status(*s, "scripted status".into()),
            Some(r) => Reply::Completion(r.responses[seed as usize % r.responses.len()].clone()),
        }
    }
}

/// A running endpoint; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free one) and serves in the background.
    pub fn start(script: Script, addr: &str) -> anyhow::Result<Self> {
        let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        let thread = {
            let stop = Arc::clone(&stop);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let script = Arc::clone(&script);
                    let requests = Arc::clone(&requests);
                    std::thread::spawn(move || {
                        if let Err(e) = serve_one(stream, &script, &requests) {
                            eprintln!("mockllm: {e:#}");
                        }
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            requests,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to hand to a client, e.g. `http://127.0.0.1:4242/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks until the accept loop ends (it never does on its own).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_one(stream: TcpStream, script: &Script, requests: &AtomicUsize) -> anyhow::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().context("bad content-length")?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    requests.fetch_add(1, Ordering::SeqCst);

    let path = request_line.split_whitespace().nth(1).unwrap_or("");
    let (status, payload) = if !request_line.starts_with("POST")
        || !path.ends_with("/chat/completions")
    {
        (
            404,
            json!({"error": {"message": format!("unsupported request {}", request_line.trim())}}),
        )
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Err(e) => (400, json!({"error": {"message": format!("bad json: {e}")}})),
            Ok(req) => match script.respond(&req) {
                Reply::Completion(text) => (
                    200,
                    json!({
                        "id": "mock",
                        "object": "chat.completion",
                        "model": script.model,
                        "choices": [{
                            "index": 0,
                            "message": {"role": "assistant", "content": text},
                            "finish_reason": "stop"
                        }]
                    }),
                ),
                Reply::Status(code, message) => (code, json!({"error": {"message": message}})),
            },
        }
    };
    let text = payload.to_string();
    let reason = if status == 200 { "OK" } else { "Error" };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()?;
    Ok(())
}
