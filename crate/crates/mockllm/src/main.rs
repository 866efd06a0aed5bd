use std::path::PathBuf;

use anyhow::Context;
use dbforge_mockllm::{MockServer, Script};

/// Usage: `dbforge-mockllm <script.toml> [addr]`, default addr 127.0.0.1:8089.
fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let script: PathBuf = args
        .next()
        .context("usage: dbforge-mockllm <script.toml> [addr]")?
        .into();
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:8089".into());
    let server = MockServer::start(Script::load(&script)?, &addr)?;
    println!("{}", server.base_url());
    server.wait();
    Ok(())
}
