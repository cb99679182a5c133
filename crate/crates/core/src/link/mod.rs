//! Link step: resolve cache references, pick rows to recompute, repair the
//! KV with selective recomputation, then decode.

mod algorithm;
mod assemble;
mod execute;
mod plan;

use std::time::Instant;

pub use algorithm::LinkAlgorithm;
pub use assemble::{assemble, Assembly, ChunkSpan, PromptSegment, TokenSource};
pub use execute::{link_execute, Instrumentation, LinkOutput, LinkStats};
pub use plan::{plan, plan_for_shape, LinkPlan, SegmentShape};

use crate::error::Result;
use crate::model::{argmax, decode, tokenizer, TokenId, Weights};
use crate::serving::RequestMetrics;
use crate::store::KvStore;

#[derive(Debug, Clone)]
pub struct ServeOutput {
    pub tokens: Vec<TokenId>,
    pub metrics: RequestMetrics,
}

/// Links `segments` and greedily decodes up to `max_new_tokens` tokens,
/// stopping early at EOS (which is not returned).
pub fn serve_request(
    weights: &Weights,
    store: &KvStore,
    segments: &[PromptSegment],
    algorithm: LinkAlgorithm,
    max_new_tokens: usize,
) -> Result<ServeOutput> {
    serve_request_at(weights, store, segments, algorithm, max_new_tokens, Instant::now())
}

/// Like [`serve_request`], with `received` as the arrival time TTFT and queue
/// wait are measured from.
pub fn serve_request_at(
    weights: &Weights,
    store: &KvStore,
    segments: &[PromptSegment],
    algorithm: LinkAlgorithm,
    max_new_tokens: usize,
    received: Instant,
) -> Result<ServeOutput> {
    let started = Instant::now();
    let assembly = assemble(weights, store, segments)?;
    let plan = plan(algorithm, &assembly)?;
    let linked = link_execute(weights, &assembly, &plan, Instrumentation::default())?;
    Ok(generate(weights, linked, max_new_tokens, received, started))
}

pub(crate) fn generate(
    weights: &Weights,
    linked: LinkOutput,
    max_new_tokens: usize,
    received: Instant,
    started: Instant,
) -> ServeOutput {
    let LinkOutput { mut state, logits, stats, .. } = linked;
    let mut tokens = Vec::new();
    let mut ttft = None;
    let mut next = argmax(&logits);
    let mut position = state.len();
    while tokens.len() < max_new_tokens {
        ttft.get_or_insert_with(|| received.elapsed());
        if next == tokenizer::EOS {
            break;
        }
        tokens.push(next);
        if tokens.len() == max_new_tokens {
            break;
        }
        match decode(weights, &mut state, next, position) {
            Ok(l) => next = argmax(&l),
            // out of positions: stop generating
            Err(_) => break,
        }
        position += 1;
    }
    let ttft = ttft.unwrap_or_else(|| received.elapsed());
    let metrics = RequestMetrics {
        n_tokens: stats.n,
        k_prime: stats.k_prime,
        ttft_s: ttft.as_secs_f64(),
        queue_wait_s: started.saturating_duration_since(received).as_secs_f64(),
        attention_flops: stats.attention_flops(),
        recomputed_tokens_per_layer: stats.recomputed_tokens_per_layer,
        attention_flops_per_layer: stats.attention_flops_per_layer,
        decode_tokens: tokens.len(),
    };
    ServeOutput { tokens, metrics }
}
