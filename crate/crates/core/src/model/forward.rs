//! Forward passes: the causal full prefill (reference path), selective
//! recomputation against an expanded K/V, and single-token decode.

use crate::error::{PicError, Result};
use crate::model::ops::{apply_rotary, dot, matmul, rms_norm, silu, softmax_in_place};
use crate::model::{TokenId, Weights};

/// Tokens paired with the rotary positions they are computed at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<TokenId>,
    pub positions: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>, positions: Vec<usize>) -> Result<Self> {
        if tokens.len() != positions.len() {
            return Err(PicError::Shape(format!(
                "{} tokens but {} positions",
                tokens.len(),
                positions.len()
            )));
        }
        Ok(Self { tokens, positions })
    }

    /// Positions `0..n`.
    pub fn contiguous(tokens: Vec<TokenId>) -> Self {
        let positions = (0..tokens.len()).collect();
        Self { tokens, positions }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self, weights: &Weights) -> Result<()> {
        check_tokens(weights, &self.tokens)?;
        let max = weights.config().max_position;
        if let Some(&p) = self.positions.iter().find(|&&p| p >= max) {
            return Err(PicError::Capacity(format!("position {p} >= max_position {max}")));
        }
        Ok(())
    }
}

pub(crate) fn check_tokens(weights: &Weights, tokens: &[TokenId]) -> Result<()> {
    let vocab = weights.config().vocab_size;
    match tokens.iter().position(|&t| t as usize >= vocab) {
        Some(i) => Err(PicError::OutOfRange { what: "token id", index: tokens[i] as usize, limit: vocab }),
        None => Ok(()),
    }
}

/// Cached keys and values of one layer, row-major `rows × dim`. Keys carry the
/// rotary rotation of the position they were computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKv {
    pub layer_index: usize,
    pub dim: usize,
    pub keys: Vec<f32>,
    pub values: Vec<f32>,
}

impl LayerKv {
    pub fn empty(layer_index: usize, dim: usize) -> Self {
        Self { layer_index, dim, keys: Vec::new(), values: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.keys.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn key_row(&self, i: usize) -> &[f32] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Checks equal K/V row counts, whole rows and finite entries.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.keys.len().is_multiple_of(self.dim) || self.keys.len() != self.values.len() {
            return Err(PicError::Shape(format!(
                "layer {}: {} key floats vs {} value floats at width {}",
                self.layer_index,
                self.keys.len(),
                self.values.len(),
                self.dim
            )));
        }
        if !self.keys.iter().chain(&self.values).all(|v| v.is_finite()) {
            return Err(PicError::Shape(format!("layer {} holds non-finite values", self.layer_index)));
        }
        Ok(())
    }

    pub fn byte_len(&self) -> usize {
        (self.keys.len() + self.values.len()) * std::mem::size_of::<f32>()
    }
}

/// Full per-layer KV for a sequence that decode can extend.
#[derive(Debug, Clone, PartialEq)]
pub struct KvState {
    pub layers: Vec<LayerKv>,
}

impl KvState {
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, LayerKv::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Post-softmax attention probabilities for one (layer, head), `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl AttentionMap {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
pub struct Prefill {
    pub kv: Vec<LayerKv>,
    /// Logits of the last token.
    pub logits: Vec<f32>,
    /// Indexed `layer * num_heads + head` when requested.
    pub attention: Option<Vec<AttentionMap>>,
}

impl Prefill {
    pub fn into_state(self) -> KvState {
        KvState { layers: self.kv }
    }
}

pub(crate) fn embed(weights: &Weights, tokens: &[TokenId]) -> Vec<f32> {
    let mut out = Vec::with_capacity(tokens.len() * weights.config().hidden_dim);
    for &t in tokens {
        out.extend_from_slice(weights.embedding_row(t as usize));
    }
    out
}

/// Output projection, residual, then the MLP sub-block with its residual.
fn block_tail(weights: &Weights, layer: usize, hidden: &mut [f32], attn_out: &[f32]) {
    let cfg = weights.config();
    let (d, f) = (cfg.hidden_dim, cfg.mlp_dim());
    let lw = &weights.layers[layer];
    let projected = matmul(attn_out, &lw.wo, d, d);
    for (h, o) in hidden.iter_mut().zip(&projected) {
        *h += o;
    }
    let normed = rms_norm(hidden, &lw.mlp_norm, d);
    let mut up = matmul(&normed, &lw.w_up, d, f);
    for u in &mut up {
        *u = silu(*u);
    }
    let down = matmul(&up, &lw.w_down, f, d);
    for (h, o) in hidden.iter_mut().zip(&down) {
        *h += o;
    }
}

pub(crate) fn logits_for(weights: &Weights, hidden_row: &[f32]) -> Vec<f32> {
    let cfg = weights.config();
    let normed = rms_norm(hidden_row, &weights.final_norm, cfg.hidden_dim);
    matmul(&normed, &weights.unembedding, cfg.hidden_dim, cfg.vocab_size)
}

fn attention_scale(weights: &Weights) -> f32 {
    1.0 / (weights.config().head_dim as f32).sqrt()
}

/// Standard causal prefill over positions `0..n`. This is the reference every
/// linking strategy is measured against.
pub fn full_prefill(weights: &Weights, tokens: &[TokenId], capture_attention: bool) -> Result<Prefill> {
    let cfg = weights.config();
    if tokens.is_empty() {
        return Err(PicError::EmptyInput("prefill needs at least one token"));
    }
    if tokens.len() > cfg.max_position {
        return Err(PicError::Capacity(format!(
            "{} tokens exceed max_position {}",
            tokens.len(),
            cfg.max_position
        )));
    }
    check_tokens(weights, tokens)?;

    let (n, d, hd) = (tokens.len(), cfg.hidden_dim, cfg.head_dim);
    let scale = attention_scale(weights);
    let mut hidden = embed(weights, tokens);
    let mut kv = Vec::with_capacity(cfg.num_layers);
    let mut maps = capture_attention.then(Vec::new);
    let mut scores = vec![0.0f32; n];

    for (l, lw) in weights.layers.iter().enumerate() {
        let x = rms_norm(&hidden, &lw.attn_norm, d);
        let mut q = matmul(&x, &lw.wq, d, d);
        let mut k = matmul(&x, &lw.wk, d, d);
        let v = matmul(&x, &lw.wv, d, d);
        for i in 0..n {
            apply_rotary(&mut q[i * d..(i + 1) * d], hd, i, cfg.rope_base);
            apply_rotary(&mut k[i * d..(i + 1) * d], hd, i, cfg.rope_base);
        }

        let mut attn_out = vec![0.0f32; n * d];
        for h in 0..cfg.num_heads {
            let cols = h * hd..(h + 1) * hd;
            let mut probs = maps.as_ref().map(|_| vec![0.0f32; n * n]);
            for i in 0..n {
                let qi = &q[i * d..(i + 1) * d][cols.clone()];
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = if j <= i {
                        dot(qi, &k[j * d..(j + 1) * d][cols.clone()]) * scale
                    } else {
                        f32::NEG_INFINITY
                    };
                }
                softmax_in_place(&mut scores);
                let out = &mut attn_out[i * d..(i + 1) * d][cols.clone()];
                for (j, &p) in scores.iter().enumerate() {
                    for (o, vv) in out.iter_mut().zip(&v[j * d..(j + 1) * d][cols.clone()]) {
                        *o += p * vv;
                    }
                }
                if let Some(p) = probs.as_mut() {
                    p[i * n..(i + 1) * n].copy_from_slice(&scores);
                }
            }
            if let (Some(maps), Some(values)) = (maps.as_mut(), probs) {
                maps.push(AttentionMap { layer: l, head: h, rows: n, cols: n, values });
            }
        }

        block_tail(weights, l, &mut hidden, &attn_out);
        kv.push(LayerKv { layer_index: l, dim: d, keys: k, values: v });
    }

    let logits = logits_for(weights, &hidden[(n - 1) * d..]);
    Ok(Prefill { kv, logits, attention: maps })
}

/// One captured query row: scaled `q·k` for the visible columns `0..=index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub scores: Vec<f32>,
}

/// Collects pre-softmax scores of one (layer, head) during recomputation.
#[derive(Debug, Clone)]
pub struct ScoreCapture {
    pub layer: usize,
    pub head: usize,
    pub rows: Vec<ScoreRow>,
}

impl ScoreCapture {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head, rows: Vec::new() }
    }
}

/// Attention FLOPs for one layer: a query at assembled index `i` sees `i + 1`
/// columns and spends `2d` multiply-adds per column on `q·k` and `2d` on `p·v`.
pub fn attention_flops(hidden_dim: usize, selected: &[usize]) -> u64 {
    selected.iter().map(|&i| 4 * hidden_dim as u64 * (i as u64 + 1)).sum()
}

/// Runs one transformer block for the selected rows only.
///
/// `hidden` holds the selected rows' inputs and is overwritten with their
/// outputs. `k_exp`/`v_exp` are `N × d` and must already contain every
/// unselected row; selected rows are written into them before attention, so
/// on return they are the layer's complete K/V. A selected row at assembled
/// index `i` attends to columns `0..=i` only.
#[allow(clippy::too_many_arguments)]
pub(crate) fn recompute_layer(
    weights: &Weights,
    layer: usize,
    hidden: &mut [f32],
    selected: &[usize],
    positions: &[usize],
    k_exp: &mut [f32],
    v_exp: &mut [f32],
    mut capture: Option<&mut ScoreCapture>,
) -> u64 {
    let cfg = weights.config();
    let (d, hd) = (cfg.hidden_dim, cfg.head_dim);
    let lw = &weights.layers[layer];
    let scale = attention_scale(weights);

    let x = rms_norm(hidden, &lw.attn_norm, d);
    let mut q = matmul(&x, &lw.wq, d, d);
    let mut k = matmul(&x, &lw.wk, d, d);
    let v = matmul(&x, &lw.wv, d, d);
    for (r, (&idx, &pos)) in selected.iter().zip(positions).enumerate() {
        apply_rotary(&mut q[r * d..(r + 1) * d], hd, pos, cfg.rope_base);
        apply_rotary(&mut k[r * d..(r + 1) * d], hd, pos, cfg.rope_base);
        k_exp[idx * d..(idx + 1) * d].copy_from_slice(&k[r * d..(r + 1) * d]);
        v_exp[idx * d..(idx + 1) * d].copy_from_slice(&v[r * d..(r + 1) * d]);
    }

    let capture_head = capture.as_ref().filter(|c| c.layer == layer).map(|c| c.head);
    let mut attn_out = vec![0.0f32; selected.len() * d];
    let mut scores = Vec::new();
    for (r, &idx) in selected.iter().enumerate() {
        let visible = idx + 1;
        for h in 0..cfg.num_heads {
            let cols = h * hd..(h + 1) * hd;
            let qr = &q[r * d..(r + 1) * d][cols.clone()];
            scores.clear();
            scores.extend((0..visible).map(|j| dot(qr, &k_exp[j * d..(j + 1) * d][cols.clone()]) * scale));
            if capture_head == Some(h) {
                if let Some(c) = capture.as_deref_mut() {
                    c.rows.push(ScoreRow { index: idx, scores: scores.clone() });
                }
            }
            softmax_in_place(&mut scores);
            let out = &mut attn_out[r * d..(r + 1) * d][cols.clone()];
            for (j, &p) in scores.iter().enumerate() {
                for (o, vv) in out.iter_mut().zip(&v_exp[j * d..(j + 1) * d][cols.clone()]) {
                    *o += p * vv;
                }
            }
        }
    }

    block_tail(weights, layer, hidden, &attn_out);
    attention_flops(d, selected)
}

/// Assignment of every assembled index `0..n` to either the recomputed set or
/// the cached set. Both lists are strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    n: usize,
    selected: Vec<usize>,
    cached: Vec<usize>,
}

impl Layout {
    pub fn new(n: usize, selected: Vec<usize>, cached: Vec<usize>) -> Result<Self> {
        let mut owner = vec![0u8; n];
        for (list, name) in [(&selected, "selected"), (&cached, "cached")] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(PicError::Layout(format!("{name} indices are not strictly ascending")));
            }
            for &i in list.iter() {
                let slot = owner
                    .get_mut(i)
                    .ok_or_else(|| PicError::Layout(format!("{name} index {i} outside 0..{n}")))?;
                if *slot != 0 {
                    return Err(PicError::Layout(format!("index {i} is both selected and cached")));
                }
                *slot = 1;
            }
        }
        if let Some(gap) = owner.iter().position(|&o| o == 0) {
            return Err(PicError::Layout(format!("index {gap} is neither selected nor cached")));
        }
        Ok(Self { n, selected, cached })
    }

    pub fn from_mask(selected_mask: &[bool]) -> Self {
        let (mut selected, mut cached) = (Vec::new(), Vec::new());
        for (i, &s) in selected_mask.iter().enumerate() {
            if s {
                selected.push(i)
            } else {
                cached.push(i)
            }
        }
        Self { n: selected_mask.len(), selected, cached }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn cached(&self) -> &[usize] {
        &self.cached
    }
}

#[derive(Debug, Clone)]
pub struct PartialOutput {
    /// Recomputed K/V rows of the selected tokens, in layout order.
    pub kv: Vec<LayerKv>,
    /// Logits of the selected token with the highest assembled index.
    pub logits: Vec<f32>,
    pub attention_flops: Vec<u64>,
}

/// Recomputes only `selected` (tokens at their assembled positions) while the
/// other rows come verbatim from `cached_kv`, whose rows follow
/// `layout.cached()` order. `cached_kv` is never modified.
pub fn partial_recompute_attention(
    weights: &Weights,
    selected: &TokenSequence,
    cached_kv: &[LayerKv],
    layout: &Layout,
) -> Result<PartialOutput> {
    let cfg = weights.config();
    let d = cfg.hidden_dim;
    if selected.is_empty() {
        return Err(PicError::EmptyInput("no tokens selected for recomputation"));
    }
    selected.validate(weights)?;
    if selected.len() != layout.selected.len() {
        return Err(PicError::Layout(format!(
            "{} selected tokens for {} selected layout slots",
            selected.len(),
            layout.selected.len()
        )));
    }
    if layout.n > cfg.max_position {
        return Err(PicError::Capacity(format!("{} tokens exceed max_position {}", layout.n, cfg.max_position)));
    }
    if cached_kv.len() != cfg.num_layers {
        return Err(PicError::Shape(format!("{} cached layers for a {}-layer model", cached_kv.len(), cfg.num_layers)));
    }
    for kv in cached_kv {
        kv.validate()?;
        if kv.dim != d || kv.rows() != layout.cached.len() {
            return Err(PicError::Shape(format!(
                "cached layer {} has {} rows of width {}, layout needs {} of width {d}",
                kv.layer_index,
                kv.rows(),
                kv.dim,
                layout.cached.len()
            )));
        }
    }

    let n = layout.n;
    let mut hidden = embed(weights, &selected.tokens);
    let mut out_kv = Vec::with_capacity(cfg.num_layers);
    let mut flops = Vec::with_capacity(cfg.num_layers);
    for (l, cached) in cached_kv.iter().enumerate() {
        let mut k_exp = vec![0.0f32; n * d];
        let mut v_exp = vec![0.0f32; n * d];
        for (row, &idx) in layout.cached.iter().enumerate() {
            k_exp[idx * d..(idx + 1) * d].copy_from_slice(cached.key_row(row));
            v_exp[idx * d..(idx + 1) * d].copy_from_slice(cached.value_row(row));
        }
        flops.push(recompute_layer(
            weights,
            l,
            &mut hidden,
            &layout.selected,
            &selected.positions,
            &mut k_exp,
            &mut v_exp,
            None,
        ));
        let mut layer = LayerKv::empty(l, d);
        for &idx in &layout.selected {
            layer.keys.extend_from_slice(&k_exp[idx * d..(idx + 1) * d]);
            layer.values.extend_from_slice(&v_exp[idx * d..(idx + 1) * d]);
        }
        out_kv.push(layer);
    }

    let last = selected.len() - 1;
    let logits = logits_for(weights, &hidden[last * d..(last + 1) * d]);
    Ok(PartialOutput { kv: out_kv, logits, attention_flops: flops })
}

/// Appends one token at `position` (which must equal the current length) and
/// returns its logits.
pub fn decode(weights: &Weights, state: &mut KvState, token: TokenId, position: usize) -> Result<Vec<f32>> {
    decode_captured(weights, state, token, position, None)
}

pub(crate) fn decode_captured(
    weights: &Weights,
    state: &mut KvState,
    token: TokenId,
    position: usize,
    capture: Option<&mut ScoreCapture>,
) -> Result<Vec<f32>> {
    let cfg = weights.config();
    let d = cfg.hidden_dim;
    if position >= cfg.max_position {
        return Err(PicError::Capacity(format!("position {position} >= max_position {}", cfg.max_position)));
    }
    if state.layers.len() != cfg.num_layers {
        return Err(PicError::Shape(format!("state has {} layers, model has {}", state.layers.len(), cfg.num_layers)));
    }
    if position != state.len() || state.layers.iter().any(|l| l.rows() != position || l.dim != d) {
        return Err(PicError::Layout(format!("decode at position {position} over a state of {} rows", state.len())));
    }
    check_tokens(weights, &[token])?;

    let mut hidden = embed(weights, &[token]);
    let mut capture = capture;
    for (l, kv) in state.layers.iter_mut().enumerate() {
        kv.keys.resize((position + 1) * d, 0.0);
        kv.values.resize((position + 1) * d, 0.0);
        recompute_layer(
            weights,
            l,
            &mut hidden,
            &[position],
            &[position],
            &mut kv.keys,
            &mut kv.values,
            capture.as_deref_mut(),
        );
    }
    Ok(logits_for(weights, &hidden))
}
