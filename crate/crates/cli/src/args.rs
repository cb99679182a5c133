use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pic_core::{CacheId, ChunkSpec, CompileVariant, PromptSegment};

#[derive(Parser)]
#[command(name = "pic", version, about = "Position-independent KV cache engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Model config file (key = value lines); defaults to 4 layers, d=64, 4 heads, seed 7.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct StoreArgs {
    /// Memory tier capacity in bytes.
    #[arg(long, default_value_t = 256 << 20)]
    pub kv_mem_bytes: usize,
    #[arg(long, default_value = "pic-kv")]
    pub kv_disk_dir: PathBuf,
}

#[derive(Args, Clone)]
pub struct ChunkingArgs {
    #[arg(long, conflicts_with = "chunk_delim")]
    pub chunk_size: Option<usize>,
    /// Split after every occurrence of this byte value.
    #[arg(long)]
    pub chunk_delim: Option<u8>,
}

impl ChunkingArgs {
    pub fn spec(&self) -> Result<ChunkSpec> {
        Ok(match (self.chunk_size, self.chunk_delim) {
            (_, Some(b)) => ChunkSpec::Delimiter(b as u32),
            (size, None) => ChunkSpec::fixed(size.unwrap_or(512))?,
        })
    }
}

/// `cache:ID`, `text:STRING` or `tokens:1,2,3`.
#[derive(Clone, Debug)]
pub enum Segment {
    Cache(u64),
    Text(String),
    Tokens(Vec<u32>),
}

impl std::str::FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').ok_or("expected cache:ID, text:STRING or tokens:1,2,3")?;
        match kind {
            "cache" => rest.parse().map(Segment::Cache).map_err(|e| format!("cache id: {e}")),
            "text" => Ok(Segment::Text(rest.to_owned())),
            "tokens" => rest
                .split(',')
                .map(|t| t.trim().parse::<u32>().map_err(|e| format!("token {t:?}: {e}")))
                .collect::<Result<_, _>>()
                .map(Segment::Tokens),
            _ => Err(format!("unknown segment kind {kind:?}")),
        }
    }
}

impl Segment {
    pub fn into_prompt(self) -> PromptSegment {
        match self {
            Segment::Cache(id) => PromptSegment::Cached(CacheId(id)),
            Segment::Text(t) => PromptSegment::Literal(pic_core::model::tokenizer::encode(&t)),
            Segment::Tokens(t) => PromptSegment::Literal(t),
        }
    }
}

pub fn variant(dummy_prefix: Option<usize>) -> CompileVariant {
    dummy_prefix.map_or(CompileVariant::Standard, CompileVariant::DummyPrefix)
}

#[derive(Subcommand)]
pub enum Command {
    /// Chunk a file, compile every chunk, print one cache id per line.
    Compile {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        chunking: ChunkingArgs,
        /// Compile with M dummy tokens prepended (needed by legolink0).
        #[arg(long, num_args = 0..=1, default_missing_value = "4")]
        dummy_prefix: Option<usize>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Append the JSON request log here instead of stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Link and decode one request from the command line.
    Complete {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long = "segment", required = true)]
        segments: Vec<Segment>,
        #[arg(long, default_value = "legolink:16")]
        algorithm: String,
        #[arg(long, default_value_t = 16)]
        max_new_tokens: usize,
    },
    /// Benchmark harness.
    Bench(BenchArgs),
    /// Dump one head's min-max scaled attention map as CSV.
    Attn {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long = "segment", required = true)]
        segments: Vec<Segment>,
        #[arg(long, default_value = "naive")]
        algorithm: String,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        head: usize,
        /// `decoded:N` (first N generated tokens) or `selected`.
        #[arg(long, default_value = "decoded:4")]
        rows: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the seeded weights to a binary file and print their checksum.
    Weights {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sync,
    Poisson,
    Sweep,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Simulated,
    Wall,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Mode::Sync)]
    pub mode: Mode,
    /// Comma-separated selectors; every one is run.
    #[arg(long, default_value = "legolink:16", value_delimiter = ',')]
    pub algorithm: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
    /// Synchronous mode: number of cases.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    #[arg(long, default_value_t = 3)]
    pub chunks_per_case: usize,
    #[arg(long, default_value_t = 48)]
    pub chunk_len: usize,
    #[arg(long, default_value_t = 16)]
    pub query_len: usize,
    #[arg(long, default_value_t = 4)]
    pub max_new_tokens: usize,
    /// Poisson mode: aggregate arrivals per second.
    #[arg(long, default_value_t = 2.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 40.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 4)]
    pub users: usize,
    /// Concurrent request slots; defaults to the number of CPU cores.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long, value_enum, default_value_t = ClockArg::Simulated)]
    pub clock: ClockArg,
    /// Simulated clock: attention FLOPs processed per second.
    #[arg(long, default_value_t = 5e7)]
    pub flops_per_second: f64,
    /// Simulated clock: fixed seconds added to every request.
    #[arg(long, default_value_t = 0.005)]
    pub overhead: f64,
    /// Wall clock: arrival offsets are multiplied by this.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// Sweep mode: context lengths.
    #[arg(long, value_delimiter = ',', default_value = "2048,4096,8192,16384")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 512)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 256 << 20)]
    pub kv_mem_bytes: usize,
}

impl BenchArgs {
    pub fn check(&self) -> Result<()> {
        if self.algorithm.is_empty() {
            bail!("no algorithm given");
        }
        Ok(())
    }
}
