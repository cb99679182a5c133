//! Open-loop load: Poisson arrivals over a fixed window against a bounded
//! pool of request slots, FIFO queueing, nothing dropped.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::Serialize;

use crate::compile::compile_batch;
use crate::error::{PicError, Result};
use crate::link::{serve_request_at, LinkAlgorithm, PromptSegment};
use crate::model::Weights;
use crate::serving::report::RequestRow;
use crate::serving::{compile_variant_for, mean_std, Case, RequestMetrics};
use crate::store::KvStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    /// Requests really run, but time advances by a cost model:
    /// `attention_flops / flops_per_second + overhead_s` per request.
    /// Reports are reproducible bit for bit.
    Simulated { flops_per_second: f64, overhead_s: f64 },
    /// Real dispatch and worker threads. `time_scale` multiplies every
    /// arrival offset (0.1 replays a 40 s window in 4 s).
    Wall { time_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    /// Aggregate arrival rate, requests per second.
    pub rate: f64,
    pub duration_s: f64,
    pub users: usize,
    pub algorithm: LinkAlgorithm,
    pub max_new_tokens: usize,
    /// Concurrent request slots.
    pub max_in_flight: usize,
    pub clock: Clock,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PicError::Config(m.to_owned()));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad("rate must be positive");
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        if self.users == 0 {
            return bad("need at least one user");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        match self.clock {
            Clock::Simulated { flops_per_second, overhead_s } if flops_per_second <= 0.0 || overhead_s < 0.0 => {
                bad("simulated clock needs positive throughput and non-negative overhead")
            }
            Clock::Wall { time_scale } if time_scale <= 0.0 => bad("time_scale must be positive"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arrival {
    pub request_id: usize,
    pub user: usize,
    pub at_s: f64,
}

/// Exponential inter-arrival times at `rate` over `[0, duration_s)`, each
/// request assigned to a uniformly drawn user.
pub fn poisson_arrivals(rate: f64, duration_s: f64, users: usize, seed: u64) -> Result<Vec<Arrival>> {
    let gap = Exp::new(rate).map_err(|e| PicError::Config(format!("rate {rate}: {e}")))?;
    let pick = Uniform::new(0, users.max(1)).map_err(|e| PicError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= duration_s {
            break;
        }
        out.push(Arrival { request_id: out.len(), user: pick.sample(&mut rng), at_s: t });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub arrival: Arrival,
    pub start_s: f64,
    pub finish_s: f64,
    pub result: std::result::Result<RequestMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonSummary {
    pub algorithm: String,
    pub seed: u64,
    pub clock: String,
    pub rate: f64,
    pub duration_s: f64,
    pub users: usize,
    pub max_in_flight: usize,
    pub issued: usize,
    pub completed: usize,
    pub failed: usize,
    /// Issued requests over the window.
    pub offered_rate_rps: f64,
    /// Completed requests over the longer of the window and the makespan.
    pub throughput_rps: f64,
    pub ttft_mean_s: f64,
    pub ttft_std_s: f64,
    pub queue_mean_s: f64,
    pub mean_k_prime: f64,
    pub mean_attention_flops: f64,
    pub ccr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonReport {
    pub records: Vec<RequestRecord>,
    pub summary: PoissonSummary,
}

impl PoissonReport {
    pub fn arrivals(&self) -> Vec<Arrival> {
        self.records.iter().map(|r| r.arrival).collect()
    }

    pub fn rows(&self) -> Vec<RequestRow> {
        self.records
            .iter()
            .filter_map(|r| {
                r.result.as_ref().ok().map(|m| RequestRow {
                    request_id: r.arrival.request_id,
                    algorithm: self.summary.algorithm.clone(),
                    metrics: m.clone(),
                })
            })
            .collect()
    }
}

/// Compiles every user's chunks, then replays a seeded Poisson schedule in
/// which each arrival re-sends its user's request.
pub fn run_poisson(
    weights: &Weights,
    store: &KvStore,
    spec: &WorkloadSpec,
    user_cases: &[Case],
    seed: u64,
) -> Result<PoissonReport> {
    spec.validate()?;
    if user_cases.len() != spec.users {
        return Err(PicError::Config(format!("{} user cases for {} users", user_cases.len(), spec.users)));
    }
    let variant = compile_variant_for(spec.algorithm);
    let mut requests = Vec::with_capacity(spec.users);
    for case in user_cases {
        let ids = compile_batch(weights, store, &case.chunks, variant)?;
        requests.push(case.segments(&ids));
    }
    let ccr = store.stats().ccr();
    let arrivals = poisson_arrivals(spec.rate, spec.duration_s, spec.users, seed)?;

    let (records, window_s) = match spec.clock {
        Clock::Simulated { flops_per_second, overhead_s } => (
            simulate(weights, store, spec, &requests, &arrivals, flops_per_second, overhead_s),
            spec.duration_s,
        ),
        Clock::Wall { time_scale } => (
            run_wall(weights, store, spec, &requests, &arrivals, time_scale),
            spec.duration_s * time_scale,
        ),
    };
    let summary = summarize(spec, seed, ccr, window_s, &records);
    Ok(PoissonReport { records, summary })
}

fn simulate(
    weights: &Weights,
    store: &KvStore,
    spec: &WorkloadSpec,
    requests: &[Vec<PromptSegment>],
    arrivals: &[Arrival],
    flops_per_second: f64,
    overhead_s: f64,
) -> Vec<RequestRecord> {
    let mut slot_free_at = vec![0.0f64; spec.max_in_flight];
    arrivals
        .iter()
        .map(|&arrival| {
            let out = serve_request_at(
                weights,
                store,
                &requests[arrival.user],
                spec.algorithm,
                spec.max_new_tokens,
                Instant::now(),
            );
            // FIFO: the next request in arrival order takes the earliest free slot
            let slot = (0..slot_free_at.len())
                .min_by(|&a, &b| slot_free_at[a].total_cmp(&slot_free_at[b]))
                .expect("at least one slot");
            let start_s = arrival.at_s.max(slot_free_at[slot]);
            match out {
                Ok(mut served) => {
                    let service = served.metrics.attention_flops as f64 / flops_per_second + overhead_s;
                    let finish_s = start_s + service;
                    slot_free_at[slot] = finish_s;
                    served.metrics.queue_wait_s = start_s - arrival.at_s;
                    served.metrics.ttft_s = finish_s - arrival.at_s;
                    RequestRecord { arrival, start_s, finish_s, result: Ok(served.metrics) }
                }
                Err(e) => RequestRecord { arrival, start_s, finish_s: start_s, result: Err(e.to_string()) },
            }
        })
        .collect()
}

struct Job {
    arrival: Arrival,
    received: Instant,
}

fn run_wall(
    weights: &Weights,
    store: &KvStore,
    spec: &WorkloadSpec,
    requests: &[Vec<PromptSegment>],
    arrivals: &[Arrival],
    time_scale: f64,
) -> Vec<RequestRecord> {
    let (job_tx, job_rx) = crossbeam_channel::unbounded::<Job>();
    let (done_tx, done_rx) = crossbeam_channel::unbounded::<RequestRecord>();
    let t0 = Instant::now();
    let since_t0 = move |t: Instant| t.saturating_duration_since(t0).as_secs_f64();

    let mut records = std::thread::scope(|scope| {
        scope.spawn(move || {
            for &arrival in arrivals {
                let due = t0 + Duration::from_secs_f64(arrival.at_s * time_scale);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
                if job_tx.send(Job { arrival, received: Instant::now() }).is_err() {
                    break;
                }
            }
        });
        for _ in 0..spec.max_in_flight {
            let (job_rx, done_tx) = (job_rx.clone(), done_tx.clone());
            scope.spawn(move || {
                for job in job_rx {
                    let start = Instant::now();
                    let out = serve_request_at(
                        weights,
                        store,
                        &requests[job.arrival.user],
                        spec.algorithm,
                        spec.max_new_tokens,
                        job.received,
                    );
                    let record = RequestRecord {
                        arrival: Arrival { at_s: since_t0(job.received), ..job.arrival },
                        start_s: since_t0(start),
                        finish_s: since_t0(Instant::now()),
                        result: out.map(|o| o.metrics).map_err(|e| e.to_string()),
                    };
                    if done_tx.send(record).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);
        done_rx.iter().collect::<Vec<_>>()
    });
    records.sort_by_key(|r| r.arrival.request_id);
    records
}

fn summarize(
    spec: &WorkloadSpec,
    seed: u64,
    ccr: f64,
    window_s: f64,
    records: &[RequestRecord],
) -> PoissonSummary {
    let ok: Vec<&RequestMetrics> = records.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let ttfts: Vec<f64> = ok.iter().map(|m| m.ttft_s).collect();
    let (ttft_mean_s, ttft_std_s) = mean_std(&ttfts);
    let (queue_mean_s, _) = mean_std(&ok.iter().map(|m| m.queue_wait_s).collect::<Vec<_>>());
    let (mean_k_prime, _) = mean_std(&ok.iter().map(|m| m.k_prime as f64).collect::<Vec<_>>());
    let (mean_attention_flops, _) = mean_std(&ok.iter().map(|m| m.attention_flops as f64).collect::<Vec<_>>());
    let makespan = records.iter().map(|r| r.finish_s).fold(0.0, f64::max);
    PoissonSummary {
        algorithm: spec.algorithm.to_string(),
        seed,
        clock: match spec.clock {
            Clock::Simulated { .. } => "simulated".into(),
            Clock::Wall { .. } => "wall".into(),
        },
        rate: spec.rate,
        duration_s: spec.duration_s,
        users: spec.users,
        max_in_flight: spec.max_in_flight,
        issued: records.len(),
        completed: ok.len(),
        failed: records.len() - ok.len(),
        offered_rate_rps: records.len() as f64 / window_s,
        throughput_rps: ok.len() as f64 / window_s.max(makespan),
        ttft_mean_s,
        ttft_std_s,
        queue_mean_s,
        mean_k_prime,
        mean_attention_flops,
        ccr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrivals_reproducible_and_near_expected_count() {
        let a = poisson_arrivals(2.0, 40.0, 3, 11).unwrap();
        let b = poisson_arrivals(2.0, 40.0, 3, 11).unwrap();
        assert_eq!(a, b);
        // Poisson(80): 5 sigma is about 45
        assert!((35..=125).contains(&a.len()), "{}", a.len());
        assert!(a.windows(2).all(|w| w[0].at_s < w[1].at_s));
        assert!(a.iter().all(|x| x.at_s < 40.0 && x.user < 3));
        assert_ne!(a, poisson_arrivals(2.0, 40.0, 3, 12).unwrap());
    }

    #[test]
    fn mean_count_over_many_seeds() {
        let total: usize = (0..200).map(|s| poisson_arrivals(2.0, 40.0, 1, s).unwrap().len()).sum();
        let mean = total as f64 / 200.0;
        // standard error of the mean is sqrt(80/200) ~ 0.63
        assert!((mean - 80.0).abs() < 3.0, "{mean}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = WorkloadSpec {
            rate: 2.0,
            duration_s: 40.0,
            users: 1,
            algorithm: LinkAlgorithm::Naive,
            max_new_tokens: 0,
            max_in_flight: 1,
            clock: Clock::Simulated { flops_per_second: 1e9, overhead_s: 0.0 },
        };
        base.validate().unwrap();
        assert!(WorkloadSpec { rate: 0.0, ..base.clone() }.validate().is_err());
        assert!(WorkloadSpec { duration_s: -1.0, ..base.clone() }.validate().is_err());
        assert!(WorkloadSpec { users: 0, ..base.clone() }.validate().is_err());
        assert!(WorkloadSpec { max_in_flight: 0, ..base }.validate().is_err());
    }
}
