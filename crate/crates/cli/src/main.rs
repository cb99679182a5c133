mod args;
mod bench;

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Parser;
use pic_core::analysis::{dump_attention, sink_score, MapRows};
use pic_core::link::serve_request;
use pic_core::model::{save_weights, tokenizer};
use pic_core::{compile_batch, split, KvStore, PromptSegment, Weights};

use args::{Cli, Command, ModelArgs, Segment, StoreArgs};

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Compile { model, store, chunking, dummy_prefix, input } => {
            let weights = model.load()?;
            let store = store.open()?;
            let text = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let tokens: Vec<_> = text.iter().map(|&b| b as u32).collect();
            let chunks = split(&tokens, chunking.spec()?)?;
            let ids = compile_batch(&weights, &store, &chunks, args::variant(dummy_prefix))?;
            let mut out = std::io::stdout().lock();
            for id in ids {
                writeln!(out, "{id}")?;
            }
        }
        Command::Serve { model, store, port, log } => {
            let weights = model.load()?;
            let store = store.open()?;
            serve(weights, store, port, log.as_deref())?;
        }
        Command::Complete { model, store, segments, algorithm, max_new_tokens } => {
            let weights = model.load()?;
            let store = store.open()?;
            let segments: Vec<PromptSegment> = segments.into_iter().map(Segment::into_prompt).collect();
            let out = serve_request(&weights, &store, &segments, algorithm.parse()?, max_new_tokens)?;
            let body = serde_json::json!({
                "tokens": out.tokens,
                "text": tokenizer::decode(&out.tokens),
                "metrics": out.metrics,
            });
            println!("{}", serde_json::to_string_pretty(&body)?);
        }
        Command::Bench(b) => bench::run(b)?,
        Command::Attn { model, store, segments, algorithm, layer, head, rows, out } => {
            let weights = model.load()?;
            let store = store.open()?;
            let segments: Vec<PromptSegment> = segments.into_iter().map(Segment::into_prompt).collect();
            let rows = match rows.as_str() {
                "selected" => MapRows::Selected,
                r => MapRows::Decoded(
                    r.strip_prefix("decoded:").unwrap_or(r).parse().context("--rows is decoded:N or selected")?,
                ),
            };
            let map = dump_attention(&weights, &store, &segments, algorithm.parse()?, layer, head, rows)?;
            map.write_csv(std::io::BufWriter::new(fs::File::create(&out)?))?;
            let sinks = sink_score(&map, &map.boundaries)?;
            let report: Vec<_> = map.boundaries.iter().zip(&sinks).map(|(b, s)| serde_json::json!({ "start": b, "sink": s })).collect();
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Weights { model, out } => {
            let weights = model.load()?;
            save_weights(&weights, &out)?;
            println!("{:016x}", weights.checksum());
        }
    }
    Ok(())
}

fn serve(weights: Weights, store: KvStore, port: u16, log: Option<&Path>) -> Result<()> {
    let mut state = pic_server::AppState::new(weights, store);
    state = match log {
        Some(path) => state.with_log(fs::OpenOptions::new().create(true).append(true).open(path)?),
        None => state.with_log(std::io::stdout()),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        pic_server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

impl ModelArgs {
    fn load(&self) -> Result<Weights> {
        let config = match &self.model_config {
            Some(p) => pic_core::ModelConfig::load(p)?,
            None => pic_core::ModelConfig::default(),
        };
        Ok(pic_core::init_model(&config)?)
    }
}

impl StoreArgs {
    fn open(&self) -> Result<KvStore> {
        if self.kv_mem_bytes == 0 {
            bail!("--kv-mem-bytes must be positive");
        }
        Ok(KvStore::open(pic_core::StoreConfig::new(self.kv_mem_bytes, &self.kv_disk_dir))?)
    }
}
