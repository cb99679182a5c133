//! Helpers shared by the acceptance suite.

use pic_core::link::{assemble, link_execute, plan, Instrumentation, LinkAlgorithm};
use pic_core::model::{argmax, decode, full_prefill, tokenizer, TokenId};
use pic_core::serving::report::{write_json, write_request_csv, write_tidy_csv};
use pic_core::serving::{run_poisson, synthetic_cases, Case, Clock, WorkloadSpec};
use pic_core::{KvStore, PromptSegment, Result, Weights};
use std::path::Path;

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Chunks then query, as one flat prompt.
pub fn prompt_of(case: &Case) -> Vec<TokenId> {
    case.chunks.concat().into_iter().chain(case.query.iter().copied()).collect()
}

pub fn link_logits(w: &Weights, s: &KvStore, segs: &[PromptSegment], alg: LinkAlgorithm) -> Result<Vec<f32>> {
    let asm = assemble(w, s, segs)?;
    let p = plan(alg, &asm)?;
    Ok(link_execute(w, &asm, &p, Instrumentation::default())?.logits)
}

/// Greedy tokens from a plain prefill, stopping at EOS like the server does.
pub fn greedy_oracle(w: &Weights, prompt: &[TokenId], steps: usize) -> Result<Vec<TokenId>> {
    let p = full_prefill(w, prompt, false)?;
    let mut next = argmax(&p.logits);
    let mut state = p.into_state();
    let mut out = Vec::new();
    while out.len() < steps && next != tokenizer::EOS {
        out.push(next);
        if out.len() == steps {
            break;
        }
        let pos = state.len();
        next = argmax(&decode(w, &mut state, next, pos)?);
    }
    Ok(out)
}

/// The same Poisson run and output files as `pic bench --mode poisson` with
/// the simulated clock defaults.
pub fn poisson_run(w: &Weights, store: &KvStore, algorithm: LinkAlgorithm, seed: u64, out: &Path) -> Result<()> {
    let users = 4;
    let cases = synthetic_cases(seed, users, 3, 48, 16);
    let spec = WorkloadSpec {
        rate: 2.0,
        duration_s: 40.0,
        users,
        algorithm,
        max_new_tokens: 4,
        max_in_flight: 4,
        clock: Clock::Simulated { flops_per_second: 5e7, overhead_s: 0.005 },
    };
    let report = run_poisson(w, store, &spec, &cases, seed)?;
    std::fs::create_dir_all(out)?;
    let file = |name: &str| std::fs::File::create(out.join(name));
    write_tidy_csv(file("arrivals.csv")?, &report.arrivals())?;
    write_request_csv(file("requests.csv")?, &report.rows())?;
    write_tidy_csv(file("summary.csv")?, std::slice::from_ref(&report.summary))?;
    write_json(file("summary.json")?, &report.summary)?;
    Ok(())
}
