//! CSV and JSON emission for benchmark runs.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::serving::RequestMetrics;

pub const REQUEST_CSV_HEADER: [&str; 8] =
    ["request_id", "algorithm", "N", "k_prime", "ttft_s", "queue_s", "flops", "decode_tokens"];

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRow {
    pub request_id: usize,
    pub algorithm: String,
    pub metrics: RequestMetrics,
}

pub fn write_request_csv<W: Write>(out: W, rows: &[RequestRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REQUEST_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.request_id.to_string(),
            r.algorithm.clone(),
            r.metrics.n_tokens.to_string(),
            r.metrics.k_prime.to_string(),
            format!("{:.9}", r.metrics.ttft_s),
            format!("{:.9}", r.metrics.queue_wait_s),
            r.metrics.attention_flops.to_string(),
            r.metrics.decode_tokens.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::other)?;
    writeln!(out)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::PicError {
    std::io::Error::other(e).into()
}

/// Tidy rows for the context-length sweep: one row per (algorithm, N, layer).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: String,
    pub context_tokens: usize,
    pub prompt_tokens: usize,
    pub k_prime: usize,
    pub layer: usize,
    pub attention_flops: u64,
}

/// Header from the field names, one line per row.
pub fn write_tidy_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_csv_header_and_row() {
        let row = RequestRow {
            request_id: 3,
            algorithm: "legolink:16".into(),
            metrics: RequestMetrics {
                n_tokens: 160,
                k_prime: 48,
                ttft_s: 0.5,
                queue_wait_s: 0.25,
                recomputed_tokens_per_layer: vec![48; 4],
                attention_flops: 1234,
                attention_flops_per_layer: vec![],
                decode_tokens: 2,
            },
        };
        let mut buf = Vec::new();
        write_request_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "request_id,algorithm,N,k_prime,ttft_s,queue_s,flops,decode_tokens");
        assert_eq!(lines.next().unwrap(), "3,legolink:16,160,48,0.500000000,0.250000000,1234,2");
    }
}
