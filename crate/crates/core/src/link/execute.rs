use crate::error::Result;
use crate::link::{Assembly, LinkAlgorithm, LinkPlan};
use crate::model::{embed, logits_for, recompute_layer, KvState, LayerKv, ScoreCapture, Weights};

/// Optional taps into a link run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Instrumentation {
    /// Record pre-softmax scores of this `(layer, head)` for every recomputed row.
    pub capture: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub n: usize,
    /// Size of the final selection (rows recomputed in the deepest layer).
    pub k_prime: usize,
    pub recomputed_tokens_per_layer: Vec<usize>,
    pub attention_flops_per_layer: Vec<u64>,
}

impl LinkStats {
    pub fn attention_flops(&self) -> u64 {
        self.attention_flops_per_layer.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct LinkOutput {
    /// N rows per layer: recomputed rows where selected, stored rows elsewhere.
    pub state: KvState,
    pub logits: Vec<f32>,
    /// Final selection, ascending.
    pub selected: Vec<usize>,
    pub stats: LinkStats,
    pub capture: Option<ScoreCapture>,
}

/// Copies every cached chunk's layer-`layer` rows into place.
fn splice_cached(assembly: &Assembly, layer: usize, d: usize, k_exp: &mut [f32], v_exp: &mut [f32]) {
    for span in &assembly.spans {
        let src = &span.chunk.layers[layer];
        let range = span.start * d..(span.start + span.len) * d;
        k_exp[range.clone()].copy_from_slice(&src.keys);
        v_exp[range].copy_from_slice(&src.values);
    }
}

fn gather_rows(src: &[f32], rows: &[usize], d: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&src[r * d..(r + 1) * d]);
    }
    out
}

/// Squared L2 distance between recomputed and stored layer-0 K and V rows,
/// per cached index.
fn layer0_deviation(assembly: &Assembly, k_new: &[f32], v_new: &[f32], d: usize) -> Vec<(usize, f32)> {
    let mut out = Vec::with_capacity(assembly.cached_token_count());
    for span in &assembly.spans {
        let stored = &span.chunk.layers[0];
        for row in 0..span.len {
            let idx = span.start + row;
            let dk: f32 = k_new[idx * d..(idx + 1) * d]
                .iter()
                .zip(stored.key_row(row))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let dv: f32 = v_new[idx * d..(idx + 1) * d]
                .iter()
                .zip(stored.value_row(row))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out.push((idx, dk + dv));
        }
    }
    out
}

/// Runs the link step for `plan`, producing a decode-ready KV state and the
/// logits of the last prompt token.
pub fn link_execute(
    weights: &Weights,
    assembly: &Assembly,
    plan: &LinkPlan,
    instrumentation: Instrumentation,
) -> Result<LinkOutput> {
    let cfg = weights.config();
    let (n, d) = (assembly.len(), cfg.hidden_dim);
    debug_assert_eq!(plan.n, n);
    let mut capture = instrumentation.capture.map(|(layer, head)| ScoreCapture::new(layer, head));
    let mut layers = Vec::with_capacity(cfg.num_layers);
    let mut recomputed = Vec::with_capacity(cfg.num_layers);
    let mut flops = Vec::with_capacity(cfg.num_layers);

    let (mut selected, mut hidden, first_layer) = match (plan.algorithm, plan.dynamic_target) {
        (LinkAlgorithm::CacheBlend { .. }, Some(target)) => {
            let all: Vec<usize> = (0..n).collect();
            let mut hidden_all = embed(weights, &assembly.tokens);
            let mut k_exp = vec![0.0f32; n * d];
            let mut v_exp = vec![0.0f32; n * d];
            flops.push(recompute_layer(
                weights,
                0,
                &mut hidden_all,
                &all,
                &all,
                &mut k_exp,
                &mut v_exp,
                capture.as_mut(),
            ));
            recomputed.push(n);

            let mut is_selected = vec![false; n];
            plan.selected.iter().for_each(|&i| is_selected[i] = true);
            let mut candidates: Vec<(usize, f32)> = layer0_deviation(assembly, &k_exp, &v_exp, d)
                .into_iter()
                .filter(|(i, _)| !is_selected[*i])
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(i, _) in candidates.iter().take(target) {
                is_selected[i] = true;
            }
            let selected: Vec<usize> = (0..n).filter(|&i| is_selected[i]).collect();
            let hidden = gather_rows(&hidden_all, &selected, d);
            layers.push(LayerKv { layer_index: 0, dim: d, keys: k_exp, values: v_exp });
            (selected, hidden, 1)
        }
        _ => {
            let tokens: Vec<_> = plan.selected.iter().map(|&i| assembly.tokens[i]).collect();
            (plan.selected.clone(), embed(weights, &tokens), 0)
        }
    };
    if cfg.num_layers == first_layer {
        // single-layer CacheBlend: nothing beyond layer 0
        selected = (0..n).collect();
    }

    for l in first_layer..cfg.num_layers {
        let mut k_exp = vec![0.0f32; n * d];
        let mut v_exp = vec![0.0f32; n * d];
        splice_cached(assembly, l, d, &mut k_exp, &mut v_exp);
        flops.push(recompute_layer(
            weights,
            l,
            &mut hidden,
            &selected,
            &selected,
            &mut k_exp,
            &mut v_exp,
            capture.as_mut(),
        ));
        recomputed.push(selected.len());
        layers.push(LayerKv { layer_index: l, dim: d, keys: k_exp, values: v_exp });
    }

    let last_row = (hidden.len() / d) - 1;
    let logits = logits_for(weights, &hidden[last_row * d..(last_row + 1) * d]);
    let stats = LinkStats {
        n,
        k_prime: selected.len(),
        recomputed_tokens_per_layer: recomputed,
        attention_flops_per_layer: flops,
    };
    Ok(LinkOutput { state: KvState { layers }, logits, selected, stats, capture })
}
