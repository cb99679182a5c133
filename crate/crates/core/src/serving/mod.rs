//! Request metrics, synthetic workloads and the benchmark drivers.

mod metrics;
mod poisson;
pub mod report;
mod workload;

pub use metrics::{mean_std, RequestMetrics};
pub use poisson::{
    poisson_arrivals, run_poisson, Arrival, Clock, PoissonReport, PoissonSummary, RequestRecord, WorkloadSpec,
};
pub use workload::{compile_variant_for, synthetic_cases, Case};

use crate::compile::compile_batch;
use crate::error::{PicError, Result};
use crate::link::{plan_for_shape, serve_request, LinkAlgorithm, SegmentShape};
use crate::model::{TokenId, Weights};
use crate::serving::report::{RequestRow, SweepRow};
use crate::store::KvStore;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub index: usize,
    pub result: std::result::Result<(Vec<TokenId>, RequestMetrics), String>,
}

/// Runs cases one after another: compile, link, decode, then expire the
/// case's chunks. A failing case is recorded and the run continues.
pub fn run_synchronous(
    weights: &Weights,
    store: &KvStore,
    cases: &[Case],
    algorithm: LinkAlgorithm,
    max_new_tokens: usize,
) -> Vec<CaseOutcome> {
    let variant = compile_variant_for(algorithm);
    cases
        .iter()
        .enumerate()
        .map(|(index, case)| {
            let result = compile_batch(weights, store, &case.chunks, variant).and_then(|ids| {
                let out = serve_request(weights, store, &case.segments(&ids), algorithm, max_new_tokens);
                for id in ids {
                    let _ = store.expire(id);
                }
                out
            });
            CaseOutcome { index, result: result.map(|o| (o.tokens, o.metrics)).map_err(|e| e.to_string()) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SyncSummary {
    pub algorithm: String,
    pub cases: usize,
    pub completed: usize,
    pub failed: usize,
    pub ttft_mean_s: f64,
    pub ttft_std_s: f64,
    pub mean_k_prime: f64,
    pub mean_attention_flops: f64,
}

pub fn summarize_sync(outcomes: &[CaseOutcome], algorithm: LinkAlgorithm) -> SyncSummary {
    let ok: Vec<&RequestMetrics> = outcomes.iter().filter_map(|o| o.result.as_ref().ok().map(|(_, m)| m)).collect();
    let stat = |f: &dyn Fn(&RequestMetrics) -> f64| mean_std(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let (ttft_mean_s, ttft_std_s) = stat(&|m| m.ttft_s);
    SyncSummary {
        algorithm: algorithm.to_string(),
        cases: outcomes.len(),
        completed: ok.len(),
        failed: outcomes.len() - ok.len(),
        ttft_mean_s,
        ttft_std_s,
        mean_k_prime: stat(&|m| m.k_prime as f64).0,
        mean_attention_flops: stat(&|m| m.attention_flops as f64).0,
    }
}

pub fn outcome_rows(outcomes: &[CaseOutcome], algorithm: LinkAlgorithm) -> Vec<RequestRow> {
    outcomes
        .iter()
        .filter_map(|o| {
            o.result.as_ref().ok().map(|(_, m)| RequestRow {
                request_id: o.index,
                algorithm: algorithm.to_string(),
                metrics: m.clone(),
            })
        })
        .collect()
}

/// Context of `context_tokens` split into `chunk_size` chunks (last one
/// short), followed by a literal query.
pub fn sweep_shape(context_tokens: usize, chunk_size: usize, query_len: usize, dummy: usize) -> Vec<SegmentShape> {
    let mut shape: Vec<_> = (0..context_tokens)
        .step_by(chunk_size.max(1))
        .map(|start| SegmentShape::Cached {
            len: chunk_size.min(context_tokens - start),
            dummy_prefix_dropped: dummy,
        })
        .collect();
    if query_len > 0 {
        shape.push(SegmentShape::Literal(query_len));
    }
    shape
}

/// Attention-FLOP counts from the link plan alone, for context lengths too
/// long to execute. Only algorithms whose selection is fixed before
/// execution are accepted.
pub fn scaling_sweep(
    hidden_dim: usize,
    num_layers: usize,
    context_lengths: &[usize],
    chunk_size: usize,
    query_len: usize,
    algorithms: &[LinkAlgorithm],
) -> Result<Vec<SweepRow>> {
    if chunk_size == 0 {
        return Err(PicError::InvalidChunkSpec("chunk size must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &algorithm in algorithms {
        let dummy = match compile_variant_for(algorithm) {
            crate::compile::CompileVariant::Standard => 0,
            crate::compile::CompileVariant::DummyPrefix(m) => m,
        };
        for &n in context_lengths {
            let plan = plan_for_shape(algorithm, &sweep_shape(n, chunk_size, query_len, dummy))?;
            let flops = plan.static_attention_flops(hidden_dim, num_layers).ok_or_else(|| {
                PicError::InvalidAlgorithm(format!("{algorithm} selects tokens at run time; execute it instead"))
            })?;
            rows.extend(flops.into_iter().enumerate().map(|(layer, attention_flops)| SweepRow {
                algorithm: algorithm.to_string(),
                context_tokens: n,
                prompt_tokens: plan.n,
                k_prime: plan.k_prime(),
                layer,
                attention_flops,
            }));
        }
    }
    Ok(rows)
}
