//! Attention-map extraction and attention-sink diagnostics.
//!
//! Maps hold pre-softmax `q·k / sqrt(head_dim)` scores, min-max scaled to
//! `[0, 1]` over the whole matrix. Causally masked cells take no part in the
//! scaling and are written as 0.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{PicError, Result};
use crate::link::{assemble, link_execute, plan, Instrumentation, LinkAlgorithm, PromptSegment};
use crate::model::{argmax, decode_captured, ScoreCapture, ScoreRow, Weights};
use crate::store::KvStore;

pub const DEFAULT_DECODED_ROWS: usize = 4;

/// Which query rows to dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapRows {
    /// The first `n` greedily decoded tokens, over the prompt columns.
    Decoded(usize),
    /// Every row the link step recomputed at the requested layer.
    Selected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub layer: usize,
    pub head: usize,
    /// Assembled index of each row's query token.
    pub row_indices: Vec<usize>,
    pub cols: usize,
    /// First column of every cached chunk.
    pub boundaries: Vec<usize>,
    /// Raw scores, row-major; masked cells hold 0.
    pub raw: Vec<f32>,
    pub visible: Vec<bool>,
    pub scaled: Vec<f64>,
}

impl AttentionDump {
    /// Builds a dump from captured rows, keeping columns `0..cols`.
    pub fn from_rows(layer: usize, head: usize, rows: &[ScoreRow], cols: usize, boundaries: Vec<usize>) -> Self {
        let mut raw = vec![0.0f32; rows.len() * cols];
        let mut visible = vec![false; rows.len() * cols];
        for (r, row) in rows.iter().enumerate() {
            let take = row.scores.len().min(cols);
            raw[r * cols..r * cols + take].copy_from_slice(&row.scores[..take]);
            visible[r * cols..r * cols + take].iter_mut().for_each(|v| *v = true);
        }
        let scaled = min_max_scale(&raw, &visible);
        Self { layer, head, row_indices: rows.iter().map(|r| r.index).collect(), cols, boundaries, raw, visible, scaled }
    }

    pub fn rows(&self) -> usize {
        self.row_indices.len()
    }

    pub fn scaled_row(&self, r: usize) -> &[f64] {
        &self.scaled[r * self.cols..(r + 1) * self.cols]
    }

    pub fn raw_row(&self, r: usize) -> &[f32] {
        &self.raw[r * self.cols..(r + 1) * self.cols]
    }

    pub fn visible_row(&self, r: usize) -> &[bool] {
        &self.visible[r * self.cols..(r + 1) * self.cols]
    }

    pub fn header(&self) -> String {
        let b: Vec<String> = self.boundaries.iter().map(usize::to_string).collect();
        format!(
            "layer={},head={},rows={},cols={},boundaries={}",
            self.layer,
            self.head,
            self.rows(),
            self.cols,
            b.join(";")
        )
    }

    /// Header line, then one comma-separated line of scaled values per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header())?;
        for r in 0..self.rows() {
            let line: Vec<String> = self.scaled_row(r).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        for v in &self.scaled {
            h.update(v.to_le_bytes());
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }
}

/// Scales visible cells to `[0, 1]`; masked cells are 0. A constant map
/// scales to all zeros.
pub fn min_max_scale(raw: &[f32], visible: &[bool]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&x, _) in raw.iter().zip(visible).filter(|(_, &v)| v) {
        lo = lo.min(x as f64);
        hi = hi.max(x as f64);
    }
    let span = hi - lo;
    raw.iter()
        .zip(visible)
        .map(|(&x, &v)| if v && span > 0.0 { (x as f64 - lo) / span } else { 0.0 })
        .collect()
}

/// Header `key=value` fields and scaled rows of a map file.
pub type MapCsv = (Vec<(String, String)>, Vec<Vec<f64>>);

/// Reads back a file written by [`AttentionDump::write_csv`].
pub fn read_map_csv<R: BufRead>(input: R) -> Result<MapCsv> {
    let bad = |reason: String| PicError::Format { path: "<attention map>".into(), reason };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
    let fields = header
        .split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| bad(format!("header field {kv:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let row = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((fields, rows))
}

/// Links `segments` with `algorithm` and captures one head's scores.
pub fn dump_attention(
    weights: &Weights,
    store: &KvStore,
    segments: &[PromptSegment],
    algorithm: LinkAlgorithm,
    layer: usize,
    head: usize,
    rows: MapRows,
) -> Result<AttentionDump> {
    let cfg = weights.config();
    if layer >= cfg.num_layers {
        return Err(PicError::OutOfRange { what: "layer", index: layer, limit: cfg.num_layers });
    }
    if head >= cfg.num_heads {
        return Err(PicError::OutOfRange { what: "head", index: head, limit: cfg.num_heads });
    }
    let assembly = assemble(weights, store, segments)?;
    let plan = plan(algorithm, &assembly)?;
    let n = assembly.len();
    let boundaries: Vec<usize> = assembly.spans.iter().map(|s| s.start).collect();
    let capture = match rows {
        MapRows::Selected => Some((layer, head)),
        MapRows::Decoded(_) => None,
    };
    let linked = link_execute(weights, &assembly, &plan, Instrumentation { capture })?;
    let captured = match rows {
        MapRows::Selected => linked.capture.expect("capture requested").rows,
        MapRows::Decoded(count) => {
            if count == 0 {
                return Err(PicError::EmptyInput("no decoded rows requested"));
            }
            let mut state = linked.state;
            let mut next = argmax(&linked.logits);
            let mut cap = ScoreCapture::new(layer, head);
            for step in 0..count {
                let logits = decode_captured(weights, &mut state, next, n + step, Some(&mut cap))?;
                next = argmax(&logits);
            }
            cap.rows
        }
    };
    Ok(AttentionDump::from_rows(layer, head, &captured, n, boundaries))
}

/// Per chunk, the mean scaled score on the chunk's first column over the rows
/// that can see it (0 when none can).
pub fn sink_score(map: &AttentionDump, boundaries: &[usize]) -> Result<Vec<f64>> {
    boundaries
        .iter()
        .map(|&b| {
            if b >= map.cols {
                return Err(PicError::OutOfRange { what: "chunk boundary", index: b, limit: map.cols });
            }
            let seen: Vec<f64> = (0..map.rows())
                .filter(|&r| map.visible_row(r)[b])
                .map(|r| map.scaled_row(r)[b])
                .collect();
            Ok(if seen.is_empty() { 0.0 } else { seen.iter().sum::<f64>() / seen.len() as f64 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, scores: &[f32]) -> ScoreRow {
        ScoreRow { index, scores: scores.to_vec() }
    }

    #[test]
    fn scaling_spans_unit_interval_and_ignores_mask() {
        let rows = [row(0, &[5.0]), row(1, &[-3.0, 1.0]), row(2, &[0.0, 2.0, 9.0])];
        let m = AttentionDump::from_rows(0, 0, &rows, 3, vec![0]);
        assert_eq!(m.scaled_row(0), &[8.0 / 12.0, 0.0, 0.0]);
        assert_eq!(m.scaled_row(2)[2], 1.0);
        assert_eq!(m.scaled_row(1)[0], 0.0);
        assert!(!m.visible_row(0)[1]);
        assert!(m.scaled.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn decoded_rows_truncate_to_prompt_width() {
        let rows = [row(4, &[1.0, 2.0, 3.0, 4.0, 5.0])];
        let m = AttentionDump::from_rows(1, 2, &rows, 4, vec![0, 2]);
        assert_eq!(m.cols, 4);
        assert_eq!(m.scaled_row(0), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let rows = [row(0, &[1.0]), row(1, &[0.0, 2.0])];
        let m = AttentionDump::from_rows(3, 1, &rows, 2, vec![0, 1]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let (fields, values) = read_map_csv(&buf[..]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next().unwrap(), "layer=3,head=1,rows=2,cols=2,boundaries=0;1");
        assert_eq!(fields[3], ("cols".to_owned(), "2".to_owned()));
        assert_eq!(values, vec![vec![0.5, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn uniform_map_gives_equal_sink_scores() {
        let rows: Vec<_> = (0..4).map(|i| row(8 + i, &[0.7; 12])).collect();
        let m = AttentionDump::from_rows(0, 0, &rows, 8, vec![0, 3, 6]);
        let s = sink_score(&m, &m.boundaries).unwrap();
        assert!(s.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn mass_on_chunk_starts_scores_one() {
        let starts = [0usize, 4, 8];
        let rows: Vec<_> = (0..3)
            .map(|i| {
                let scores: Vec<f32> = (0..12).map(|c| if starts.contains(&c) { 10.0 } else { -1.0 }).collect();
                row(12 + i, &scores)
            })
            .collect();
        let m = AttentionDump::from_rows(0, 0, &rows, 12, starts.to_vec());
        let s = sink_score(&m, &starts).unwrap();
        assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-12), "{s:?}");
    }

    #[test]
    fn boundary_outside_map_rejected() {
        let m = AttentionDump::from_rows(0, 0, &[row(0, &[1.0])], 1, vec![0]);
        assert!(matches!(sink_score(&m, &[1]), Err(PicError::OutOfRange { .. })));
    }
}
